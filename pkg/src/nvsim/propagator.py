"""Unitary time evolution of spin-1 states.

Time-dependent Hamiltonians are integrated with fixed steps, each step being
the exact exponential of the Hamiltonian at the step midpoint. Every step is
unitary by construction. Two exact shortcuts keep long lab-frame runs cheap:

* segments whose Hamiltonian stays diagonal (free evolution, with or without
  a z-field probe) are exponentiated in one shot from the time integral;
* lab-frame drive segments without a probe are periodic in the carrier, so a
  single carrier-period propagator is built step by step and then raised to
  the number of whole periods.

States may carry leading batch axes (shape ``(..., 3)``), which is how a
probe with an array of frequencies is evaluated in one pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .sequences import PulseSequence, Segment
from .spin import SZ, SpinState, as_array, renormalized

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control.

    ``max_step`` bounds the step in rotating frames; in the lab frame the
    step is additionally limited to one ``steps_per_period``-th of the
    carrier period.
    """

    max_step: float = 1e-3
    steps_per_period: int = 16384
    method: str = "midpoint"

    def __post_init__(self):
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if int(self.steps_per_period) < 1:
            raise ValueError("steps_per_period must be a positive integer")
        if self.method != "midpoint":
            raise ValueError("only the exponential-midpoint method is implemented")

    def halved(self) -> "IntegratorConfig":
        return IntegratorConfig(self.max_step / 2, 2 * self.steps_per_period, self.method)


def expm_hermitian(H, dt):
    """exp(-i H dt) for (stacks of) Hermitian matrices via eigendecomposition."""
    w, v = np.linalg.eigh(H)
    phases = np.exp(-1j * w * np.asarray(dt)[..., None])
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _check_hermitian(H):
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - np.swapaxes(H.conj(), -1, -2))) > HERMITIAN_TOL * scale:
        raise ValueError("Hamiltonian is not Hermitian")
    return H


def _apply(U, psi):
    return np.einsum("...ij,...j->...i", U, psi)


def _renorm(psi, stats=None):
    n = np.linalg.norm(psi, axis=-1, keepdims=True)
    if stats is not None:
        stats.norm_drift = max(stats.norm_drift, float(np.max(np.abs(n - 1.0))))
    return psi / n


def _wrap(psi):
    return renormalized(psi) if psi.ndim == 1 else psi


def propagate_constant(state, H, duration):
    """exp(-i H duration) |state> for a time-independent Hermitian ``H``."""
    H = _check_hermitian(H)
    if duration < 0:
        raise ValueError("duration must be non-negative")
    psi = as_array(state)
    if duration == 0:
        return state if isinstance(state, SpinState) else psi.copy()
    return _wrap(_renorm(_apply(expm_hermitian(H, duration), psi)))


def _midpoint_steps(psi, H_of_t, t0, t1, h_max, chunk=2048, stats=None):
    n = max(1, math.ceil((t1 - t0) / h_max - 1e-9))
    h = (t1 - t0) / n
    for start in range(0, n, chunk):
        k = np.arange(start, min(n, start + chunk))
        mids = t0 + (k + 0.5) * h
        Hs = np.asarray(H_of_t(mids))
        if Hs.ndim == 2:  # callable ignored its time argument
            Hs = np.broadcast_to(Hs, mids.shape + (3, 3))
        Us = expm_hermitian(Hs, h)
        # time axis sits just before the matrix axes
        for j in range(len(k)):
            psi = _apply(Us[..., j, :, :], psi)
        psi = _renorm(psi, stats)
    return psi, n


def propagate_timedep(state, H_of_t, t0, t1, cfg: IntegratorConfig | None = None):
    """Fixed-step exponential-midpoint evolution from ``t0`` to ``t1``.

    ``H_of_t`` must accept an array of times and return matrices of shape
    ``(..., len(t), 3, 3)``.
    """
    cfg = cfg or IntegratorConfig()
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    psi = as_array(state)
    if t1 == t0:
        return state if isinstance(state, SpinState) else psi.copy()
    psi, _ = _midpoint_steps(psi, H_of_t, t0, t1, cfg.max_step)
    return _wrap(psi)


def _matrix_power(U, n):
    """U**n for a unitary U via its eigendecomposition (n may be large)."""
    if n == 0:
        return np.eye(3, dtype=complex)
    return np.linalg.matrix_power(U, n)


def _period_propagator(H_of_t, t0, period, steps):
    mids = t0 + (np.arange(steps) + 0.5) * (period / steps)
    Us = expm_hermitian(H_of_t(mids), period / steps)
    while len(Us) > 1:
        if len(Us) % 2:
            Us = np.concatenate([Us[:-2], (Us[-1] @ Us[-2])[None]])
        Us = Us[1::2] @ Us[0::2]
    return Us[0]


def _diag_exact(psi, diag_rate, probe, t0, t1):
    """Exact evolution under diag(diag_rate) + eps q(w t) Sz."""
    phase = np.asarray(diag_rate) * (t1 - t0)
    if probe is not None:
        q = probe.epsilon * np.asarray(probe.integral(t0, t1))
        phase = phase + q[..., None] * np.diag(SZ).real
    return np.exp(-1j * phase) * psi


@dataclass
class RunStats:
    """Counters filled in by :func:`evolve`.

    ``norm_drift`` is the largest |norm - 1| seen before any renormalization.
    """

    steps: int = 0
    norm_drift: float = 0.0


def _segment_hamiltonian(seq: PulseSequence, seg: Segment):
    if seq.frame == "lab":
        p = models.SystemParams(
            D=seq.D,
            muB=seq.muB,
            Omega=seg.rabi if seg.kind == "drive" else 0.0,
            nu=seg.carrier if seg.kind == "drive" else 0.0,
            drive_phase=seg.phase,
            axis=seg.axis,
        )
        return lambda t: models.lab_frame_hamiltonian(p, t)
    if seg.kind == "free":
        return models.frame_free_hamiltonian(seq.frame, seq.muB)
    return models.frame_drive_hamiltonian(seq.frame, seq.muB, seg.rabi, seg.phase, seg.axis)


def evolve(seq: PulseSequence, psi, probe=None, cfg: IntegratorConfig | None = None, t_start=0.0, stats=None):
    """Array-level engine behind :func:`run_sequence`.

    ``psi`` has shape ``(3,)`` or ``(..., 3)``; with an array-valued probe
    frequency the result gains the probe's frequency axes in front.
    """
    cfg = cfg or IntegratorConfig()
    stats = stats if stats is not None else RunStats()
    psi = np.asarray(psi, dtype=complex)
    if probe is not None:
        batch = np.shape(probe.omega)
        psi = np.broadcast_to(psi, batch + psi.shape[-1:]).copy() if psi.ndim == 1 else psi
    t = float(t_start)
    for seg in seq.segments:
        t_end = t + seg.duration
        if seg.impulsive:
            if seq.frame == "lab":
                raise ValueError("impulsive pulses are not defined in the lab frame")
            G = models.frame_drive_hamiltonian(seq.frame, 0.0, 1.0, seg.phase, seg.axis)
            psi = _apply(expm_hermitian(G, seg.area), psi)
            continue
        H = _segment_hamiltonian(seq, seg)
        if seq.frame != "lab":
            if seg.kind == "free":
                psi = _diag_exact(psi, np.diag(H).real, probe, t, t_end)
            elif probe is None:
                psi = _apply(expm_hermitian(H, seg.duration), psi)
            else:
                psi, n = _probe_steps(psi, H, probe, t, t_end, cfg.max_step, stats=stats)
                stats.steps += n
        else:
            if seg.kind == "free":
                diag = np.array([seq.D + seq.muB, 0.0, seq.D - seq.muB])
                psi = _diag_exact(psi, diag, probe, t, t_end)
            else:
                period = 2.0 * math.pi / seg.carrier
                h_max = min(cfg.max_step, period / cfg.steps_per_period)
                if probe is None and seg.duration > period:
                    n_per = max(int(cfg.steps_per_period), math.ceil(period / cfg.max_step - 1e-9))
                    U1 = _period_propagator(H, t, period, n_per)
                    whole = int(seg.duration // period)
                    psi = _apply(_matrix_power(U1, whole), psi)
                    stats.steps += whole * n_per
                    rem_t0 = t + whole * period
                    if t_end - rem_t0 > 0:
                        psi, n = _midpoint_steps(psi, H, rem_t0, t_end, period / n_per, stats=stats)
                        stats.steps += n
                else:
                    Hp = H if probe is None else (lambda tt, H=H: models.add_signal(H, probe, tt))
                    psi, n = _midpoint_steps(psi, Hp, t, t_end, h_max, stats=stats)
                    stats.steps += n
        psi = _renorm(psi, stats)
        t = t_end
    return psi


def _probe_steps(psi, H, probe, t0, t1, h_max, chunk=256, stats=None):
    """Constant ``H`` plus probe; the probe term is averaged exactly per step."""
    n = max(1, math.ceil((t1 - t0) / h_max - 1e-9))
    h = (t1 - t0) / n
    for start in range(0, n, chunk):
        k = np.arange(start, min(n, start + chunk))
        a = t0 + k * h
        q = probe.epsilon * np.asarray(probe.integral(a, a + h)) / h  # (..., len(k))
        Hs = H + q[..., None, None] * SZ
        Us = expm_hermitian(Hs, h)
        for j in range(len(k)):
            psi = _apply(Us[..., j, :, :], psi)
        psi = _renorm(psi, stats)
    return psi, n


def run_sequence(seq: PulseSequence, initial, probe=None, cfg: IntegratorConfig | None = None):
    """Run every segment of ``seq`` from ``initial``.

    Free segments use the frame's drive-off Hamiltonian, drive segments the
    drive-on one; a probe adds its z-field throughout, pulses included. The
    result is a :class:`SpinState` for scalar probes and an array of shape
    ``(..., 3)`` when the probe frequency is an array. Lab-frame results are
    in the lab frame; see :func:`nvsim.models.to_rotating_frame`.
    """
    psi = as_array(initial)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    if not seq.segments:
        out = psi.copy()
        if probe is not None and np.ndim(probe.omega):
            out = np.broadcast_to(out, np.shape(probe.omega) + (3,)).copy()
        return _wrap(out)
    return _wrap(evolve(seq, psi, probe, cfg))


def final_frame_state(seq: PulseSequence, psi, frame, t=None):
    """Express a lab-frame result in a rotating frame at the end of ``seq``."""
    t = seq.total_duration if t is None else t
    gen = models.frame_generator(frame, seq.muB, seq.D)
    return models.to_rotating_frame(psi, gen, t)
