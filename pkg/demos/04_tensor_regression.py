"""
Tensor inputs with a rank-3 response
====================================

A vector input and an image input predict a 30 x 20 response of multilinear
rank 3. With 80% of the response missing, the estimated output rank starts
high and settles on the truth as the completion improves. The regularisation
weight barely matters.
"""

from trmv.datagen import procedure_b
from trmv.metrics import spe, tspe
from trmv.solver import default_config, fit

ds = procedure_b(input_dims=((30,), (25, 25)), output_dims=(30, 20), input_ranks=(3, 3),
                 output_rank=3, m_train=50, m_test=50, missing=0.8, seed=0)
model = fit(ds.train_inputs, ds.observed_response, ds.mask,
            default_config(ds.train_response.shape, seed=0))

d = model.diagnostics
print("rank trace (first 13):", d.ranks[:13])
print("true rank first held from iteration", d.rank_reached((3, 3)))
e = spe(ds.test_response, model.predict(ds.test_inputs))
print("test SPE %.4f  TSPE %.4f" % (e, tspe(e)))

for lam in (0.1, 1.0, 10.0):
    m = fit(ds.train_inputs, ds.observed_response, ds.mask,
            default_config(ds.train_response.shape, lam=lam, seed=0))
    print("lam=%-5g test TSPE %.4f" % (lam, tspe(spe(ds.test_response, m.predict(ds.test_inputs)))))
