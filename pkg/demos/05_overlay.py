"""
Wafer overlay from signatures
=============================

Six signature coefficients per wafer define the overlay field through a
cubic polynomial basis over the wafer disk. Each training wafer is measured
at a small fraction of its 100 sites (x and y separately).
"""

import numpy as np

from trmv.baseline import tc_mtot_fit
from trmv.datagen import overlay_field, overlay_generate, wafer_points
from trmv.metrics import spe, tspe
from trmv.solver import TrmvConfig, fit

pts = wafer_points(100)
# the basis is 1, x, y, x^2, xy, y^2, x^3, ...; selecting x gives F_x = x
k = np.zeros(10)
k[1] = 1.0
assert np.array_equal(overlay_field(k, pts), pts[:, 0])

ds = overlay_generate(missing=0.9, seed=3)
print("signatures:", ds.train_inputs[0].shape, " overlay (x and y):", ds.train_response.shape)
print("observed entries of 200 per training wafer (first 5):",
      ds.mask.bitmap().reshape(ds.mask.shape[0], -1).sum(axis=1)[:5])

cfg = TrmvConfig(seed=3)
for name, runner in (("joint", fit), ("two-stage", tc_mtot_fit)):
    model = runner(ds.train_inputs, ds.observed_response, ds.mask, cfg)
    e = spe(ds.test_response, model.predict(ds.test_inputs))
    print("%-10s test SPE %.4f  TSPE %.4f" % (name, e, tspe(e)))
