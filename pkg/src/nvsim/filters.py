"""Filter functions of Ramsey and CPMG-type sequences.

Three routes to F(omega) = |int h(t) exp(i omega t) dt|^2 are provided:

* closed forms for the piecewise-linear response model (``ramsey_ff``,
  ``cpmg_ff``);
* the same model built from an actual :class:`PulseSequence` and Fourier
  transformed piece by piece (``response_function``, ``ff_from_response``);
* brute-force simulation with a weak coherent z-field, converting the readout
  population back to an accumulated phase (``numeric_ff``).
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import propagator, sequences
from .models import SignalProbe
from .spin import KET_0, ZERO

POPULATION_TOL = 1e-9
# below this |omega L / 2| the piecewise transforms switch to Taylor series
_SERIES_CUTOFF = 1e-3


class NumericFailure(RuntimeError):
    """Simulated readout population left [0, 1] beyond round-off."""


def _sinc(x):
    """sin(x)/x with sinc(0) = 1 (numpy's sinc is normalized by pi)."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def default_omega_grid(tau, n=801):
    """Linear grid over [0, 4 pi / tau]."""
    return np.linspace(0.0, 4.0 * np.pi / tau, n)


# ---------------------------------------------------------------------------
# closed forms


def ramsey_ff_impulsive(omega, tau):
    """tau^2 sinc^2(omega tau / 2)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return tau**2 * _sinc(0.5 * np.asarray(omega, dtype=float) * tau) ** 2


def _check_T(tau, T):
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not 0.0 <= T <= 0.5 * tau:
        raise ValueError(f"pulse length T={T!r} must lie in [0, tau/2] (tau={tau!r})")


def ramsey_ff(omega, tau, T):
    """Finite-pulse Ramsey filter function.

    F_R(omega, T) = (tau - T)^2 sinc^2(omega T / 2) sinc^2(omega (tau - T) / 2)

    Parameters
    ----------
    omega : float or array_like
        Signal angular frequency.
    tau : float
        Total sequence length, pulses included.
    T : float
        pi/2 pulse length, ``0 <= T <= tau/2``.
    """
    _check_T(tau, T)
    w = np.asarray(omega, dtype=float)
    return (tau - T) ** 2 * _sinc(0.5 * w * T) ** 2 * _sinc(0.5 * w * (tau - T)) ** 2


def _alternating_sum_sq(x, N):
    """|sum_{j<N} (-exp(2ix))^j|^2 by direct summation."""
    j = np.arange(N)
    terms = (-1.0) ** j * np.exp(2j * np.multiply.outer(x, j))
    return np.abs(terms.sum(axis=-1)) ** 2


def cpmg_ratio(x, N):
    """cos^2(Nx)/cos^2(x) for odd N, sin^2(Nx)/cos^2(x) for even N.

    Near the removable singularities cos(x) = 0 the equivalent geometric sum
    is evaluated directly; at the singularity it equals the limit N^2.
    """
    x = np.asarray(x, dtype=float)
    num = np.cos(N * x) ** 2 if N % 2 else np.sin(N * x) ** 2
    den = np.cos(x) ** 2
    near = np.abs(np.cos(x)) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near, 0.0, num / np.where(near, 1.0, den))
    if np.any(near):
        out = np.where(near, _alternating_sum_sq(np.where(near, x, 0.0), N), out)
    return out


def cpmg_ff(omega, tau, T, N):
    """Filter function of N pi pulses of length 2T with overlapping Hahn blocks.

    F_N = 4 sin^2(omega tau / 2) R_N(omega (2 tau - T) / 2) F_R(omega, T)
    with R_N from :func:`cpmg_ratio`; N = 1 is the Hahn echo.
    """
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    _check_T(tau, T)
    w = np.asarray(omega, dtype=float)
    hahn = 4.0 * np.sin(0.5 * w * tau) ** 2 * ramsey_ff(w, tau, T)
    if N == 1:
        return hahn
    return cpmg_ratio(0.5 * w * (2.0 * tau - T), int(N)) * hahn


# ---------------------------------------------------------------------------
# response-function model


@dataclass(frozen=True)
class ResponseFunction:
    """Continuous piecewise-linear h(t) given by its knots.

    Repeated knot times are allowed and stand for a jump (impulsive pulse).
    h vanishes before the first and after the last knot.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        h = np.asarray(self.values, dtype=float)
        if t.shape != h.shape or t.ndim != 1 or len(t) < 2:
            raise ValueError("need matching 1-d knot arrays with at least two knots")
        if np.any(np.diff(t) < 0):
            raise ValueError("knot times must be non-decreasing")
        if np.any(np.abs(h) > 1.0 + 1e-12):
            raise ValueError("|h| must not exceed 1")
        if h[0] != 0.0 or h[-1] != 0.0:
            raise ValueError("h must start and end at zero")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", h)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        return np.where(inside, np.interp(t, self.times, self.values), 0.0)

    def shifted(self, dt):
        return ResponseFunction(self.times + dt, self.values)

    @property
    def support(self):
        return float(self.times[0]), float(self.times[-1])


def response_function(seq: sequences.PulseSequence) -> ResponseFunction:
    """Piecewise-linear response model of a Ramsey or CPMG sequence.

    The first pulse ramps h from 0 to 1, every intermediate pulse ramps it
    linearly to the opposite sign, the last pulse ramps it back to 0, and h is
    flat during free evolution.
    """
    if seq.protocol not in ("ramsey", "cpmg"):
        raise ValueError(f"the response model covers ramsey and cpmg sequences, not {seq.protocol!r}")
    drives = seq.drive_count()
    expected = 2 if seq.protocol == "ramsey" else seq.N + 2
    if drives != expected:
        raise ValueError(f"{seq.protocol} sequence should contain {expected} pulses, found {drives}")
    t = 0.0
    h = 0.0
    times = [0.0]
    values = [0.0]
    k = 0
    for seg in seq.segments:
        t_end = t + seg.duration
        if seg.kind == "drive":
            k += 1
            if k == 1:
                h = 1.0
            elif k == drives:
                h = 0.0
            else:
                h = -h
        times.append(t_end)
        values.append(h)
        t = t_end
    return ResponseFunction(np.array(times), np.array(values))


def _piece_transform(w, a, b, ha, hb):
    """int_a^b h(t) exp(i w t) dt for h linear from ha to hb."""
    L = b - a
    if L == 0.0:
        return np.zeros_like(w, dtype=complex)
    c = 0.5 * (a + b)
    m = 0.5 * (ha + hb)
    k = (hb - ha) / L
    x = 0.5 * w * L
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    # g(x) = (sin x - x cos x)/x^2
    g = np.where(small, x / 3.0 - x**3 / 30.0 + x**5 / 840.0, (np.sin(xs) - xs * np.cos(xs)) / xs**2)
    return np.exp(1j * w * c) * (m * L * _sinc(x) + 1j * k * 0.5 * L * L * g)


def response_transform(rf: ResponseFunction, omega):
    """Complex Fourier transform int h(t) exp(i omega t) dt in closed form."""
    w = np.asarray(omega, dtype=float)
    acc = np.zeros(w.shape, dtype=complex)
    for a, b, ha, hb in zip(rf.times[:-1], rf.times[1:], rf.values[:-1], rf.values[1:]):
        if ha == 0.0 and hb == 0.0:
            continue
        acc += _piece_transform(w, a, b, ha, hb)
    return acc


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class FilterCurve:
    omega: np.ndarray
    F: np.ndarray
    source: str
    tau: float
    T: float = 0.0
    N: int = 0
    strategy: str = ""
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if w.ndim != 1 or w.shape != F.shape or len(w) == 0:
            raise ValueError("omega and F must be matching non-empty 1-d arrays")
        if len(w) > 1 and np.any(np.diff(w) <= 0):
            raise ValueError("omega grid must be strictly ascending")
        if np.any(F < 0):
            raise ValueError("filter function values must be non-negative")
        if self.source not in ("analytic", "numeric"):
            raise ValueError("source must be 'analytic' or 'numeric'")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "F", F)

    CSV_HEADER = "omega,F,source,tau,T,N,strategy"

    def rows(self):
        for w, f in zip(self.omega, self.F):
            yield {
                "omega": float(w),
                "F": float(f),
                "source": self.source,
                "tau": float(self.tau),
                "T": float(self.T),
                "N": int(self.N),
                "strategy": self.strategy,
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.CSV_HEADER + "\n")
        for r in self.rows():
            buf.write(
                f"{r['omega']:.17g},{r['F']:.17g},{r['source']},{r['tau']:.17g},"
                f"{r['T']:.17g},{r['N']},{r['strategy']}\n"
            )
        return buf.getvalue()


def ff_from_response(rf: ResponseFunction, omega_grid, *, tau=None, T=0.0, N=0, strategy="") -> FilterCurve:
    """|F[h]|^2 on ``omega_grid`` as an analytic :class:`FilterCurve`."""
    w = np.asarray(omega_grid, dtype=float)
    F = np.abs(response_transform(rf, w)) ** 2
    if tau is None:
        lo, hi = rf.support
        tau = hi - lo
    return FilterCurve(w, F, "analytic", tau, T, N, strategy)


def analytic_curve(protocol, tau, T, N=0, omega_grid=None, strategy="two-level-reference") -> FilterCurve:
    """Closed-form curve for ``protocol`` in {'ramsey', 'cpmg'}."""
    w = default_omega_grid(tau) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if protocol == "ramsey":
        F = ramsey_ff(w, tau, T)
    elif protocol == "cpmg":
        F = cpmg_ff(w, tau, T, N)
    else:
        raise ValueError(f"no closed form for protocol {protocol!r}")
    return FilterCurve(w, F, "analytic", tau, T, N if protocol == "cpmg" else 0, strategy)


# ---------------------------------------------------------------------------
# numeric extraction


def build_protocol(strategy, protocol, tau, params: sequences.ControlParams, N=0):
    """Sequence for a (strategy, protocol) pair; ``dq`` supports Ramsey only."""
    if strategy == "dq":
        if protocol != "ramsey":
            raise ValueError("double-quantum control is available for ramsey only")
        return sequences.build_dq_ramsey(tau, params.muB, params.Omega, params.D)
    if protocol == "ramsey":
        return sequences.build_ramsey(strategy, tau, params)
    if protocol == "cpmg":
        return sequences.build_cpmg(strategy, N, tau, params)
    raise ValueError(f"unknown protocol {protocol!r}")


def readout_flipped(strategy, protocol, N=0) -> bool:
    """True when the ideal signal-free sequence returns to |0>.

    The readout population p is then 1 - P0, otherwise p = P0; either way p
    vanishes for ideal pulses without a signal. Conventional pulses leave the
    spin in |0> after an even number of pi rotations in total (pi/2 + N pi +
    pi/2, so odd N); ERC and double-quantum sequences always close on |0>.
    """
    if strategy in ("erc", "dq"):
        return True
    if protocol == "ramsey":
        return False
    return N % 2 == 1


def phase_from_population(p):
    """arccos(1 - 2p) after checking p against [0, 1]."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -POPULATION_TOL) or np.any(p > 1.0 + POPULATION_TOL):
        bad = p[(p < -POPULATION_TOL) | (p > 1.0 + POPULATION_TOL)]
        raise NumericFailure(f"readout population outside [0, 1]: {bad[:3]}")
    return np.arccos(1.0 - 2.0 * np.clip(p, 0.0, 1.0))


def _readout_population(seq, probe, flipped, cfg):
    psi = propagator.run_sequence(seq, KET_0, probe, cfg)
    psi = np.asarray(psi)
    p0 = np.abs(psi[..., ZERO]) ** 2
    return 1.0 - p0 if flipped else p0


def numeric_phase(seq, omega, epsilon, quadrature, flipped, cfg=None, threads=1, chunk=64):
    """Accumulated phase per unit signal for each frequency in ``omega``."""
    w = np.asarray(omega, dtype=float)
    pieces = [w[i : i + chunk] for i in range(0, len(w), chunk)] or [w]

    def one(ws):
        probe = SignalProbe(ws, epsilon, quadrature)
        return _readout_population(seq, probe, flipped, cfg)

    if threads and threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            p = np.concatenate(list(pool.map(one, pieces)))
    else:
        p = np.concatenate([one(ws) for ws in pieces])
    return phase_from_population(p) / epsilon


def numeric_ff(
    strategy,
    protocol,
    tau,
    params: sequences.ControlParams,
    omega_grid=None,
    epsilon=None,
    N=0,
    cfg=None,
    threads=1,
) -> FilterCurve:
    """Filter function from simulated populations under a weak probe.

    Each frequency is run with a cosine and a sine probe of amplitude
    ``epsilon`` (default 0.01 / total duration); the readout population is
    inverted to a phase f = arccos(1 - 2p)/epsilon and F = f_cos^2 + f_sin^2.

    Raises
    ------
    NumericFailure
        If a readout population leaves [0, 1] by more than 1e-9.
    """
    seq = build_protocol(strategy, protocol, tau, params, N)
    w = default_omega_grid(tau) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    total = seq.total_duration
    eps = 0.01 / total if epsilon is None else float(epsilon)
    flipped = readout_flipped(strategy, protocol, seq.N)
    f_r = numeric_phase(seq, w, eps, "cos", flipped, cfg, threads)
    f_i = numeric_phase(seq, w, eps, "sin", flipped, cfg, threads)
    T = float(seq.pulse_T or 0.0)
    return FilterCurve(
        w,
        f_r**2 + f_i**2,
        "numeric",
        tau,
        T,
        seq.N,
        strategy,
        extras={"epsilon": eps, "total_duration": total, "frame": seq.frame},
    )
