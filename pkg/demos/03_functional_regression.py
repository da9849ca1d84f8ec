"""
Curves in, curve out, most of the output missing
================================================

Two Gaussian-process input curves drive an output curve through smooth
kernels. Only 20% of the training output is observed. The regression is fit
jointly with the completion and compared with complete-then-regress.
"""

from trmv.baseline import tc_mtot_fit
from trmv.datagen import procedure_a
from trmv.metrics import spe, tspe
from trmv.solver import default_config, fit

ds = procedure_a(m_train=50, m_test=50, n_s=50, n_t=50, missing=0.8, seed=0)
print("inputs:", [X.shape for X in ds.train_inputs], " response:", ds.train_response.shape)
print("observed fraction of the training response: %.2f" % ds.mask.fraction)

cfg = default_config(ds.train_response.shape, seed=0)
joint = fit(ds.train_inputs, ds.observed_response, ds.mask, cfg)
two_stage = tc_mtot_fit(ds.train_inputs, ds.observed_response, ds.mask, cfg)

for name, model in (("joint", joint), ("two-stage", two_stage)):
    e = spe(ds.test_response, model.predict(ds.test_inputs))
    print("%-10s test SPE %.4f  TSPE %.4f" % (name, e, tspe(e)))

d = joint.diagnostics
print("outer iterations:", d.iterations)
print("rank trace (first 5):", d.ranks[:5], "... last:", d.ranks[-1])
