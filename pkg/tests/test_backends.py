"""The compiled kernel and the numpy mirror must agree bit for bit."""

import numpy as np
import pytest

from aoi_starve import accel
from aoi_starve.config import default_config
from aoi_starve.sim import engine
from aoi_starve.sim.world import SimOptions

CASES = [
    ("benign", dict(), SimOptions(log_capacity=200_000, reset_log_capacity=50_000)),
    ("prob_x09_drift", dict(attack_mode="probabilistic", attack_x=0.9), SimOptions(drift=True, log_capacity=200_000)),
    ("eve_x09", dict(attack_mode="active_eve", attack_x=0.9), SimOptions(log_capacity=200_000)),
    ("eve_x05_phi07", dict(attack_mode="active_eve", attack_x=0.5, phi=0.7), SimOptions(drift=True)),
    ("abstract_phi07", dict(phi=0.7), SimOptions(abstract_phy=True, reset_log_capacity=50_000)),
    ("k2_no_hd", dict(k_contiguous=2, n_vehicles=60), SimOptions(half_duplex=False)),
]


@pytest.mark.parametrize("name,kw,opts", CASES, ids=[c[0] for c in CASES])
def test_bit_identical(name, kw, opts):
    cfg = default_config(seed=17, **kw)
    a = engine.run(cfg, 3000, opts=opts, backend="numba").world
    b = engine.run(cfg, 3000, opts=opts, backend="numpy").world
    for field, arr in a.array_fields().items():
        assert np.array_equal(arr, getattr(b, field)), field


def test_env_flag_selects_fallback(monkeypatch):
    monkeypatch.setenv("AOI_STARVE_NUMBA", "0")
    assert not accel.use_numba() and accel.backend_name() == "numpy"
    assert engine.run(default_config(n_vehicles=3), 50).backend == "numpy"
    monkeypatch.setenv("AOI_STARVE_NUMBA", "1")
    assert accel.use_numba() == accel.numba_available()
