import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from sfcircuit import analytic as an

G, R = 2.5e4, 4.5

# high-precision evaluations of the closed forms (30-digit mpmath)
N_RES = 0.0078595033625627326
C_SOUND = 14.017402900112000
XI = 0.050444920947581358
D_C = 0.11206043929737839
OMEGA_L2_D06 = 0.94432126453421550
OMEGA_L3_D04 = 0.67360102515634309
I_L_D06 = 0.053756216124350441
E_VP_D06 = 0.11206466569905264
D_S_0606 = 0.010284190941398281
E0_TF = 98.243792032034158


def test_critical_bias_value_and_scaling():
    assert an.critical_bias(G, R) == pytest.approx(393, abs=0.5)
    assert an.critical_bias(2 * G, R) == pytest.approx(2 * an.critical_bias(G, R), rel=1e-15)
    assert an.critical_bias(G, 2 * R) == pytest.approx(an.critical_bias(G, R) / 4, rel=1e-15)


def test_critical_width_matches_root_solve():
    d_c = an.critical_width(G, R)
    assert d_c == pytest.approx(0.112, abs=0.001)
    mu = G / (math.pi * R**2)
    root = brentq(lambda d: math.pi**2 / (2 * d * d) - mu, 1e-3, 1.0, xtol=1e-15)
    assert d_c == pytest.approx(root, rel=1e-12)
    assert an.critical_width(4 * G, R) == pytest.approx(d_c / 2, rel=1e-14)


def test_context_consistency():
    ctx = an.AnalyticContext()
    assert ctx.n == pytest.approx(N_RES, rel=1e-14)
    assert ctx.c_sound == pytest.approx(C_SOUND, rel=1e-14)
    assert ctx.xi == pytest.approx(XI, rel=1e-14)
    assert ctx.d_c == pytest.approx(D_C, rel=1e-14)
    assert ctx.c_sound * ctx.xi * math.sqrt(2) == pytest.approx(1.0, rel=1e-14)
    assert ctx.c_sound**2 == pytest.approx(G * ctx.n, rel=1e-14)


def test_eq3_values():
    assert an.eq3_frequency(G, R, 2.0, 0.6) == pytest.approx(0.9457, abs=0.003)
    assert an.eq3_frequency(G, R, 2.0, 0.6) == pytest.approx(OMEGA_L2_D06, rel=1e-13)
    assert an.eq3_frequency(G, R, 3.0, 0.4) == pytest.approx(OMEGA_L3_D04, rel=1e-13)
    assert an.eq3_frequency(G, R, 2.0, an.critical_width(G, R)) == 0.0
    assert an.eq3_frequency(G, R, 2.0, 0.05) == 0.0


def test_eq3_monotone_and_continuous():
    d_c = an.critical_width(G, R)
    ds = np.linspace(d_c * 1.0001, 1.0, 50)
    w = [an.eq3_frequency(G, R, 2.0, d) for d in ds]
    assert np.all(np.diff(w) > 0)
    assert an.eq3_frequency(G, R, 2.0, d_c * (1 + 1e-10)) < 1e-3
    ls = np.linspace(0.5, 5, 20)
    w = [an.eq3_frequency(G, R, l, 0.6) for l in ls]
    assert np.all(np.diff(w) < 0)


def test_eq3_rejects_nonpositive():
    with pytest.raises(ValueError):
        an.eq3_frequency(G, R, 0.0, 0.6)


def test_landau_velocity_phonon_limit_and_minimum():
    n = an.reservoir_density(R)
    v = an.landau_velocity(G, n)
    assert v == pytest.approx(14.02, abs=0.01)
    k = 1e-4
    assert an.bogoliubov_energy(k, G, n) / k == pytest.approx(v, rel=1e-6)
    # brute-force oracle: E_k/k on a fine grid, then a bounded polish
    ks = np.linspace(1e-6, 10, 200001)
    ratio = an.bogoliubov_energy(ks, G, n) / ks
    assert ratio.min() >= v * (1 - 1e-12)
    res = minimize_scalar(lambda q: float(an.bogoliubov_energy(q, G, n) / q),
                          bounds=(1e-9, 10), method="bounded", options={"xatol": 1e-12})
    assert res.fun == pytest.approx(v, rel=1e-8)


def test_landau_current():
    assert an.landau_current(G, R, 0.6) == pytest.approx(I_L_D06, rel=1e-13)
    assert an.landau_current(G, R, 0.6) == pytest.approx(0.0538, abs=0.0005)
    est = an.critical_current_estimate(G, R, 0.6)
    assert est == pytest.approx(0.0285, abs=5e-5)
    assert abs(est - 0.0289) / 0.0289 < 0.02
    assert an.landau_current(G, R, an.critical_width(G, R) + 1e-12) < 1e-12
    with pytest.raises(an.SubcriticalWidthError):
        an.landau_current(G, R, 0.1)
    assert an.CYLINDER_VORTEX_RATIO == 0.42


def test_tf_initial_energy():
    e0 = an.tf_initial_energy(0.0, G, R)
    assert e0 == pytest.approx(E0_TF, rel=1e-14)
    assert an.tf_initial_energy(1.0, G, R) == 2 * e0
    etas = np.linspace(0, 1, 101)
    assert np.argmin([an.tf_initial_energy(e, G, R) for e in etas]) == 0
    with pytest.raises(ValueError):
        an.tf_initial_energy(1.5, G, R)


def test_tf_energy_loss_identity():
    assert an.tf_energy_loss(0.08, 0.0, G, R) == 0.0
    lhs = an.tf_energy_loss(0.08, 0.0145, G, R)
    rhs = an.tf_initial_energy(0.08, G, R) - an.tf_initial_energy(0.08 - 0.0145, G, R)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    loss = an.tf_energy_loss(0.0606, 0.0103, G, R)
    assert loss == pytest.approx(0.1122, abs=1e-3)
    with pytest.raises(ValueError):
        an.tf_energy_loss(0.01, 0.02, G, R)


def test_tf_energy_loss_identity_randomised():
    rng = np.random.default_rng(3)
    for _ in range(200):
        eta0 = rng.uniform(0, 1)
        D = rng.uniform(0, eta0)
        diff = an.tf_initial_energy(eta0, G, R) - an.tf_initial_energy(eta0 - D, G, R)
        assert an.tf_energy_loss(eta0, D, G, R) == pytest.approx(diff, rel=1e-9, abs=1e-10)


def test_vortex_pair_energy():
    ctx = an.AnalyticContext()
    unit = 2 * math.pi * ctx.n
    assert an.vortex_pair_energy(ctx.xi * math.e, G, R) == pytest.approx(unit, rel=1e-14)
    d_eff = 0.6 - ctx.d_c
    assert an.vortex_pair_energy(d_eff, G, R) == pytest.approx(E_VP_D06, rel=1e-13)
    assert an.vortex_pair_energy(d_eff, G, R, N=10) == pytest.approx(10 * E_VP_D06, rel=1e-13)
    es = [an.vortex_pair_energy(x, G, R) for x in np.linspace(0.06, 1, 30)]
    assert np.all(np.diff(es) > 0)
    with pytest.raises(ValueError):
        an.vortex_pair_energy(ctx.xi, G, R)


def test_dissipation_step_estimate():
    d_eff = 0.6 - an.critical_width(G, R)
    D = an.dissipation_step_estimate(0.0606, d_eff, G, R)
    assert D == pytest.approx(D_S_0606, rel=1e-12)
    assert D == pytest.approx(0.0103, abs=3e-4)
    # substitute back: the TF loss must pay exactly for one pair
    E_vp = an.vortex_pair_energy(d_eff, G, R)
    assert an.tf_energy_loss(0.0606, D, G, R) == pytest.approx(E_vp, abs=1e-12)
    # E_vp -> 0 as d_eff -> xi
    xi = an.AnalyticContext().xi
    assert an.dissipation_step_estimate(0.0606, xi * (1 + 1e-9), G, R) < 1e-9
    with pytest.raises(an.InsufficientEnergyError):
        an.dissipation_step_estimate(0.01, d_eff, G, R)
