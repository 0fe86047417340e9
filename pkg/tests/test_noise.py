import math

import numpy as np
import pytest
from scipy.integrate import quad

from nvsim import filters as ff, noise as nz, sequences as sq
from nvsim.spin import KET_0, equator_state


def sinc2_integral():
    """int_0^inf sin^2 x / x^2 dx by quadrature plus the averaged 1/(2x^2) tail."""
    X = 400.0 * math.pi
    body = quad(lambda x: (math.sin(x) / x) ** 2 if x else 1.0, 0, X, limit=2000)[0]
    return body + 1.0 / (2.0 * X)


def ramsey_curve(tau, wmax=2000.0, n=200001):
    return ff.analytic_curve("ramsey", tau, 0.0, 0, np.linspace(0, wmax, n))


def test_sinc2_oracle():
    assert sinc2_integral() == pytest.approx(math.pi / 2, rel=1e-6)


def test_noise_spectrum_shapes():
    assert nz.NoiseSpectrum.flat(0.5)(3.0) == pytest.approx(math.pi)
    L = nz.NoiseSpectrum.lorentzian(2.0, 3.0, 1.0)
    assert L(1.0) == 2.0
    assert L(4.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nz.NoiseSpectrum.flat(-1.0)
    with pytest.raises(ValueError):
        nz.NoiseSpectrum("lorentzian", 1.0)
    with pytest.raises(ValueError):
        nz.NoiseSpectrum("pink", 1.0)


def test_flat_ramsey_chi():
    S0, tau = 0.01, 1.0
    # with u = omega tau / 2, int_0^inf tau^2 sinc^2 d omega = 2 tau int_0^inf sinc^2 du
    expect = S0 * 2 * tau * sinc2_integral()
    got = nz.chi(ramsey_curve(tau), nz.NoiseSpectrum.flat(S0))
    assert got == pytest.approx(expect, rel=1e-3)
    assert got == pytest.approx(math.pi * S0 * tau, rel=1e-3)


def test_chi_zero_and_linear():
    c = ramsey_curve(1.0)
    assert nz.chi(c, nz.NoiseSpectrum.flat(0.0)) == 0.0
    a = nz.chi(c, nz.NoiseSpectrum.lorentzian(1.0, 5.0))
    b = nz.chi(c, nz.NoiseSpectrum.lorentzian(2.0, 5.0))
    assert b == pytest.approx(2 * a, rel=1e-14)


class _Sum:
    def __init__(self, *parts):
        self.parts = parts
        self.S0 = sum(p.S0 for p in parts)

    def __call__(self, w):
        return sum(p(w) for p in self.parts)


def test_chi_additive_over_components():
    c = ramsey_curve(1.0)
    n1 = nz.NoiseSpectrum.lorentzian(1.0, 2.0, 0.0)
    n2 = nz.NoiseSpectrum.lorentzian(0.5, 1.0, 20.0)
    x1, t1 = nz.chi(c, n1, return_tail=True)
    x2, t2 = nz.chi(c, n2, return_tail=True)
    x12 = nz.chi(c, _Sum(n1, n2))
    # only the tail bound, a maximum, fails to be additive
    assert abs(x12 - (x1 + x2)) <= t1 + t2 + 1e-14


def test_grid_too_coarse():
    c = ramsey_curve(1.0, wmax=10.0, n=1001)
    with pytest.raises(nz.GridTooCoarse, match="extend the frequency grid"):
        nz.chi(c, nz.NoiseSpectrum.flat(0.01))
    # a looser tolerance accepts it
    assert nz.chi(c, nz.NoiseSpectrum.flat(0.01), tail_tol=0.5) > 0


def test_t2_examples():
    c = ramsey_curve(1.0)
    res = nz.t2_estimate(c, nz.NoiseSpectrum.flat(0.0), 1.0, eta_opt=2.0)
    assert res.T2 == math.inf and res.eta == 2.0
    S0 = 0.01
    x = nz.chi(c, nz.NoiseSpectrum.flat(S0))
    # rescale S0 so chi = 1; then t = 1 is T2 itself
    res = nz.t2_estimate(c, nz.NoiseSpectrum.flat(S0 / x), 1.0, eta_opt=3.0)
    assert res.chi == pytest.approx(1.0, rel=1e-12)
    assert res.T2 == pytest.approx(1.0, rel=1e-12)
    assert res.eta == pytest.approx(3.0 * math.e, rel=1e-12)
    with pytest.raises(ValueError):
        nz.t2_estimate(c, nz.NoiseSpectrum.flat(S0), 0.0)


@pytest.mark.parametrize("protocol,N", [("ramsey", 0), ("cpmg", 1)])
def test_flat_t2_independent_of_tau(protocol, N):
    S0 = 0.01
    vals = []
    for tau in (0.5, 1.0, 2.0, 5.0):
        c = ff.analytic_curve(protocol, tau, 0.0, N, np.linspace(0, 4000.0 / tau, 200001))
        t = tau if protocol == "ramsey" else 2 * tau
        vals.append(nz.t2_estimate(c, nz.NoiseSpectrum.flat(S0), t).T2)
    assert max(vals) / min(vals) - 1 < 2e-3
    # the module's convention gives 1 / (pi S0) here
    assert vals[1] == pytest.approx(1 / (math.pi * S0), rel=2e-3)


@pytest.mark.parametrize("protocol,N", [("ramsey", 0), ("cpmg", 1)])
def test_numeric_matches_analytic_t2_flat(protocol, N):
    tau, S0 = 1.0, 0.01
    w = np.linspace(0.0, 600.0, 3001)
    p = sq.ControlParams(0.0, math.inf)
    num = ff.numeric_ff("two-level-reference", protocol, tau, p, w, N=N)
    ana = ff.analytic_curve(protocol, tau, 0.0, N, w)
    noise = nz.NoiseSpectrum.flat(S0)
    t = num.extras["total_duration"]
    assert nz.t2_estimate(num, noise, t).T2 == pytest.approx(nz.t2_estimate(ana, noise, t).T2, rel=0.01)


def test_coherence_sweep_rows():
    w = np.linspace(0, 1000, 2001)
    noises = [nz.NoiseSpectrum.lorentzian(0.01, 1.0), nz.NoiseSpectrum.lorentzian(0.01, 10.0)]
    rows = nz.coherence_sensitivity_sweep("erc", [0.5, 1.0], noises, Omega_pi=1e5, omega_grid=w)
    assert [(r["TmuB"], r["Gamma"]) for r in rows] == [(0.5, 1.0), (0.5, 10.0), (1.0, 1.0), (1.0, 10.0)]
    assert all(r["eta_ratio"] >= 1 and r["T2"] > 0 for r in rows)
    # wider noise reaches more of the filter, so the coherence time drops
    assert rows[1]["T2"] < rows[0]["T2"]


def test_control_for():
    p = nz.control_for("cc", 2.0, 4.0)
    assert p.Omega == pytest.approx(math.pi / (math.sqrt(2) * 0.5))
    p = nz.control_for("erc", 1.0, 10.0)
    assert sq.erc_timings(10.0, p.Omega).TbarPrime == pytest.approx(0.1, rel=1e-10)
    with pytest.raises(ValueError):
        nz.control_for("erc", 3.0, 1.0)
    with pytest.raises(ValueError):
        nz.control_for("cc", 0.0, 1.0)


# ---------------------------------------------------------------------------
# robustness


ERC = sq.ControlParams(1.0, 2.5)


def test_phase_invariance_of_preparation():
    phis = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    rows = nz.phase_error_check(phis, ERC)
    f = np.array([r["fidelity"] for r in rows])
    assert np.std(f) <= 1e-9
    assert rows[0]["fidelity"] == nz.preparation_fidelity("erc", ERC)


def test_mid_sequence_phase_is_sensitive():
    phis = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    f = np.array([r["fidelity"] for r in nz.phase_error_check(phis, ERC, mode="split")])
    assert f[0] == pytest.approx(1.0, abs=1e-12)
    assert f.max() - f.min() > 0.1
    with pytest.raises(ValueError):
        nz.phase_error_check(phis, ERC, mode="split", split=1.0)


@pytest.mark.parametrize(
    "strategy,params",
    [("erc", sq.ControlParams(1.0, 2.5)), ("erc", sq.ControlParams(1.0, 10.0)), ("cc", nz.control_for("cc", 10.0, 1.0))],
)
def test_amplitude_error_locally_quadratic(strategy, params):
    alphas = np.linspace(-0.02, 0.02, 9)
    f = np.array([r["fidelity"] for r in nz.amplitude_error_sweep(strategy, alphas, params)])
    c2, c1, c0 = np.polyfit(alphas, f, 2)
    assert c2 < 0
    # the grid point nearest the vertex is alpha = 0; for CC the residual
    # |+1> leakage moves the vertex by about 1.6e-3
    assert abs(c1 / (2 * c2)) < 0.5 * (alphas[1] - alphas[0])
    assert np.max(np.abs(np.polyval([c2, c1, c0], alphas) - f)) < 1e-3 * abs(c2) * 0.02**2 + 1e-12
    if strategy == "erc":
        assert f[4] >= 1 - 1e-9


def test_cc_plateau_against_lab_oracle():
    # frozen from tests/oracles/lab_frame_ode.py cc_half_pi(10, 287)
    p = nz.control_for("cc", 10.0, 1.0, D=287.0, frame="lab")
    f = nz.amplitude_error_sweep("cc", [0.0], p)[0]["fidelity"]
    assert f == pytest.approx(0.9984383460837639, abs=1e-6)


def test_dq_lab_against_oracle():
    rows = nz.fidelity_sweep("dq", [0.5], muB=1.0, d_ratio=287.0)
    assert rows[0]["fidelity"] == pytest.approx(0.26765701811568404, abs=1e-6)


def test_equator_certificate():
    for phi in np.linspace(0, 2 * math.pi, 7):
        assert nz.equator_certificate(equator_state(phi)) == 0.0
    assert nz.equator_certificate(KET_0) == 1.0
    assert nz.equator_certificate(nz.prepared_state("erc", ERC)) <= 1e-9
    assert nz.equator_certificate(nz.prepared_state("erc", ERC, amplitude_scale=1.05)) > 1e-4


def test_fidelity_sweep_threads_preserve_order():
    grid = [0.3, 1.0, 3.0, 0.1]
    a = nz.fidelity_sweep("cc", grid)
    b = nz.fidelity_sweep("cc", grid, threads=4)
    assert a == b and [r["TmuB"] for r in a] == grid
