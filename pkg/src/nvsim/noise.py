"""Decoherence and sensitivity estimates, and pulse-error robustness.

The attenuation of a coherence under Gaussian noise with spectral density S is

    chi = int_0^inf (d omega / 2 pi) S(omega) F(omega),

from which T2 ~ t / chi and the sensitivity penalty eta / eta_opt = exp(t / T2)
follow for a sequence of total length t.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, trapezoid

from . import filters, models, propagator, sequences
from .sequences import ControlParams
from .spin import KET_0, ZERO, equator_state, fidelity, superpose

TAIL_TOL = 0.01

CC_TARGET = superpose([0, 1j, 1])  # (|-1> + i|0>)/sqrt 2
DQ_TARGET = superpose([1j, 0, 1])  # (|-1> + i|+1>)/sqrt 2


class GridTooCoarse(ValueError):
    """The frequency grid misses a non-negligible part of S(omega) F(omega)."""


@dataclass(frozen=True)
class NoiseSpectrum:
    """Flat or Lorentzian spectral density.

    ``flat`` means S(omega) = 2 pi S0. ``lorentzian`` means
    S(omega) = S0 Gamma^2 / ((omega - center)^2 + Gamma^2), peak value S0.
    """

    kind: str
    S0: float
    Gamma: float | None = None
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("flat", "lorentzian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.S0 >= 0:
            raise ValueError("S0 must be non-negative")
        if self.kind == "lorentzian" and not (self.Gamma is not None and self.Gamma > 0):
            raise ValueError("a Lorentzian needs Gamma > 0")

    @classmethod
    def flat(cls, S0):
        return cls("flat", S0)

    @classmethod
    def lorentzian(cls, S0, Gamma, center=0.0):
        return cls("lorentzian", S0, Gamma, center)

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        if self.kind == "flat":
            return np.full_like(w, 2.0 * np.pi * self.S0)
        return self.S0 * self.Gamma**2 / ((w - self.center) ** 2 + self.Gamma**2)


@dataclass(frozen=True)
class CoherenceResult:
    chi: float
    T2: float
    eta: float
    eta_opt: float
    total_duration: float

    @property
    def eta_ratio(self):
        return self.eta / self.eta_opt


def chi(curve: filters.FilterCurve, noise: NoiseSpectrum, tail_tol=TAIL_TOL, return_tail=False):
    """Gaussian attenuation exponent of ``curve`` under ``noise``.

    Composite Simpson over the stored grid plus a tail estimate beyond the
    last grid point, assuming S F decays at least as 1/omega^2 there (the
    bound constant is the largest S F omega^2 over the last tenth of the grid).

    Raises
    ------
    GridTooCoarse
        If the tail estimate exceeds ``tail_tol`` times the integral.
    """
    if noise.S0 == 0:
        return (0.0, 0.0) if return_tail else 0.0
    w = curve.omega
    if w[0] < 0:
        raise ValueError("chi integrates over omega >= 0; the grid starts below zero")
    g = noise(w) * curve.F / (2.0 * np.pi)
    body = float(simpson(g, x=w)) if len(w) > 2 else float(trapezoid(g, w))
    w_max = w[-1]
    tail = 0.0
    if w_max > 0:
        last = w >= w[0] + 0.9 * (w_max - w[0])
        tail = float(np.max(g[last] * w[last] ** 2)) / w_max
    total = body + tail
    if total > 0 and tail > tail_tol * total:
        raise GridTooCoarse(
            f"tail beyond omega={w_max:.6g} is {tail / total:.2%} of chi "
            f"(limit {tail_tol:.0%}); extend the frequency grid"
        )
    return (total, tail) if return_tail else total


def t2_estimate(curve, noise, total_duration, eta_opt=1.0, tail_tol=TAIL_TOL) -> CoherenceResult:
    """T2 = t / chi and eta = eta_opt / exp(-t / T2).

    chi = 0 gives T2 = inf and eta = eta_opt.
    """
    if not total_duration > 0:
        raise ValueError("total duration must be positive")
    x = chi(curve, noise, tail_tol)
    if x == 0:
        return CoherenceResult(0.0, math.inf, eta_opt, eta_opt, total_duration)
    T2 = total_duration / x
    with np.errstate(over="ignore"):
        eta = float(eta_opt * np.exp(total_duration / T2))
    return CoherenceResult(x, T2, eta, eta_opt, total_duration)


# ---------------------------------------------------------------------------
# sweeps


def control_for(strategy, TmuB, muB, Omega_pi=None, D=None, frame=None) -> ControlParams:
    """Control parameters whose first pulse has length T = TmuB / muB.

    For ``erc`` T is the preparation time Tbar'; otherwise T is the
    conventional pi/2 length.
    """
    if not (TmuB > 0 and muB > 0):
        raise ValueError("TmuB and muB must be positive")
    T = TmuB / muB
    if strategy == "erc":
        Omega = sequences.erc_omega_for_prep_time(muB, T)
    else:
        Omega = math.pi / (math.sqrt(2.0) * T)
    return ControlParams(muB, Omega, D, Omega_pi, frame)


def coherence_sensitivity_sweep(
    strategy,
    tmub_grid,
    noises,
    *,
    tau=1.0,
    muB=10.0,
    protocol="cpmg",
    N=1,
    Omega_pi=None,
    omega_grid=None,
    epsilon=None,
    eta_opt=1.0,
    cfg=None,
    threads=1,
):
    """T2 and eta/eta_opt from numeric filter functions over a TmuB grid.

    Returns one row per (TmuB, noise) in input order with keys
    ``strategy, TmuB, kind, S0, Gamma, chi, T2, eta_ratio``.
    """
    rows = []
    for tm in tmub_grid:
        params = control_for(strategy, tm, muB, Omega_pi)
        curve = filters.numeric_ff(strategy, protocol, tau, params, omega_grid, epsilon, N, cfg, threads)
        total = curve.extras["total_duration"]
        for noise in noises:
            res = t2_estimate(curve, noise, total, eta_opt)
            rows.append(
                {
                    "strategy": strategy,
                    "TmuB": float(tm),
                    "kind": noise.kind,
                    "S0": float(noise.S0),
                    "Gamma": float(noise.Gamma) if noise.Gamma is not None else 0.0,
                    "chi": res.chi,
                    "T2": res.T2,
                    "eta_ratio": res.eta_ratio,
                }
            )
    return rows


def _frame_of(strategy):
    return {"cc": "rwa-cc", "erc": "rwa-erc", "two-level-reference": "two-level-reference", "dq": "interaction"}[
        strategy
    ]


def nominal_target(strategy, params: ControlParams):
    if strategy == "erc":
        return equator_state(sequences.erc_timings(params.muB, params.Omega).phi)
    if strategy == "dq":
        return DQ_TARGET
    return CC_TARGET


def prepared_state(strategy, params: ControlParams, amplitude_scale=1.0, phase=0.0, cfg=None):
    """State after the preparation pulse(s), expressed in the strategy's rotating frame."""
    if strategy == "dq":
        nominal = sequences.build_dq_prep(params.muB, params.Omega, params.D)
        # durations stay at their nominal values
        seq = sequences.with_segments(
            nominal,
            [sequences.drive(s.duration, s.rabi * amplitude_scale, s.phase + phase, s.carrier) for s in nominal.segments],
        )
    else:
        seq = sequences.build_preparation(strategy, params, amplitude_scale, phase)
    psi = propagator.run_sequence(seq, KET_0, None, cfg)
    if seq.frame == "lab":
        psi = propagator.final_frame_state(seq, psi, _frame_of(strategy))
    return np.asarray(psi)


def preparation_fidelity(strategy, params: ControlParams, amplitude_scale=1.0, phase=0.0, cfg=None) -> float:
    """Fidelity of the prepared state to the nominal target.

    ``cc``: (|-1> + i|0>)/sqrt 2; ``erc``: |phi>; ``dq``: (|-1> + i|+1>)/sqrt 2
    (lab frame only, read in the interaction picture of D Sz^2 + muB Sz).
    """
    psi = prepared_state(strategy, params, amplitude_scale, phase, cfg)
    return fidelity(psi, nominal_target(strategy, params))


def fidelity_sweep(strategy, tmub_grid, *, muB=1.0, frame=None, d_ratio=287.0, cfg=None, threads=1):
    """Preparation fidelity against TmuB (rows ``TmuB, fidelity``)."""
    if strategy == "dq":
        frame = "lab"
    D = d_ratio * muB if frame == "lab" else None

    def one(tm):
        params = control_for(strategy, tm, muB, D=D, frame=frame)
        return {"strategy": strategy, "TmuB": float(tm), "fidelity": preparation_fidelity(strategy, params, cfg=cfg)}

    return _ordered_map(one, tmub_grid, threads)


def _ordered_map(fn, items, threads):
    items = list(items)
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def amplitude_error_sweep(strategy, alpha_grid, params: ControlParams, cfg=None, threads=1):
    """Fidelity to the nominal target with the drive at Omega (1 + alpha).

    Pulse durations and the target keep their nominal values, so an ERC drive
    that falls below 2 muB is simply a wrong pulse, not an error.
    """

    def one(a):
        return {"strategy": strategy, "alpha": float(a), "fidelity": preparation_fidelity(strategy, params, 1.0 + a, cfg=cfg)}

    return _ordered_map(one, alpha_grid, threads)


def phase_error_check(phi_grid, params: ControlParams, mode="prep", split=0.5):
    """ERC preparation fidelity against the carrier phase phi_p.

    ``mode="prep"`` applies the whole Tbar' pulse with phase phi_p starting
    from |0>. ``mode="split"`` runs the first ``split`` fraction at phase 0
    and the rest at phi_p, so the phased part neither starts nor ends in |0>.
    Fidelity is always taken to the phi_p-independent target |phi>.
    """
    if mode not in ("prep", "split"):
        raise ValueError("mode must be 'prep' or 'split'")
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie strictly between 0 and 1")
    tm = sequences.erc_timings(params.muB, params.Omega)
    target = equator_state(tm.phi)
    rows = []
    for ph in phi_grid:
        if mode == "prep":
            H = models.rwa_erc_hamiltonian(params.muB, params.Omega, ph)
            psi = propagator.propagate_constant(KET_0, H, tm.TbarPrime)
        else:
            H0 = models.rwa_erc_hamiltonian(params.muB, params.Omega, 0.0)
            H1 = models.rwa_erc_hamiltonian(params.muB, params.Omega, ph)
            psi = propagator.propagate_constant(KET_0, H0, split * tm.TbarPrime)
            psi = propagator.propagate_constant(psi, H1, (1.0 - split) * tm.TbarPrime)
        rows.append({"mode": mode, "phi_p": float(ph), "fidelity": fidelity(psi, target)})
    return rows


def equator_certificate(state) -> float:
    """|<0|state>|^2; zero certifies a state of the form (|-1> - e^{i phi}|+1>)/sqrt 2."""
    return float(np.abs(np.asarray(state)[..., ZERO]) ** 2)
