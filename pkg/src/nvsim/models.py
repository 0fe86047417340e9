"""Hamiltonians of a driven NV ground-state triplet.

All energies are angular frequencies (hbar = 1). Time arguments may be
scalars or numpy arrays; array inputs give stacks of matrices with shape
``t.shape + (3, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spin import MINUS1, PLUS1, SX, SY, SZ, SZ2, ZERO

FRAMES = ("lab", "rwa-cc", "rwa-erc", "two-level-reference")


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the lab-frame Hamiltonian.

    ``axis`` is the angle of the linearly polarized drive field in the plane
    transverse to the NV axis (0 means the drive couples through Sx).
    """

    D: float
    muB: float = 0.0
    Omega: float = 0.0
    nu: float = 0.0
    drive_phase: float = 0.0
    axis: float = 0.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("zero-field splitting D must be positive")
        if self.muB < 0 or self.Omega < 0:
            raise ValueError("muB and Omega must be non-negative")


@dataclass(frozen=True)
class SignalProbe:
    """Weak coherent z-field ``epsilon * cos(omega t)`` (or sine).

    ``omega`` may be an array, in which case every Hamiltonian built with the
    probe gains a leading batch axis over the frequencies.
    """

    omega: float | np.ndarray
    epsilon: float
    quadrature: str = "cos"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("probe amplitude epsilon must be positive")
        if self.quadrature not in ("cos", "sin"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")

    def waveform(self, t):
        """q(omega t) broadcast over (omega, t)."""
        phase = np.multiply.outer(np.asarray(self.omega, dtype=float), np.asarray(t, dtype=float))
        return np.cos(phase) if self.quadrature == "cos" else np.sin(phase)

    def integral(self, t0, t1):
        """Exact integral of q(omega t) over [t0, t1], omega -> 0 handled."""
        w = np.asarray(self.omega, dtype=float)
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        w_ = np.multiply.outer(w, np.ones_like(t0))
        dt = t1 - t0
        mid = 0.5 * (t0 + t1)
        # sin(w dt/2)/(w/2) = dt * sinc(w dt / 2 pi) in numpy's convention
        kernel = dt * np.sinc(w_ * dt / (2.0 * np.pi))
        if self.quadrature == "cos":
            return np.cos(w_ * mid) * kernel
        return np.sin(w_ * mid) * kernel


def _coupling(phase=0.0, axis=0.0, plus=True, minus=True):
    """Rotating-frame drive matrix for unit Rabi frequency.

    <+-1|G|0> = exp(-i phase) exp(-+i axis) / (2 sqrt 2).
    """
    g = np.zeros((3, 3), dtype=complex)
    base = np.exp(-1j * phase) / (2.0 * np.sqrt(2.0))
    if plus:
        g[PLUS1, ZERO] = base * np.exp(-1j * axis)
    if minus:
        g[MINUS1, ZERO] = base * np.exp(1j * axis)
    return g + g.conj().T


def lab_frame_hamiltonian(p: SystemParams, t):
    """D Sz^2 + muB Sz + Omega cos(nu t + phase) (cos(axis) Sx + sin(axis) Sy)."""
    t = np.asarray(t, dtype=float)
    static = p.D * SZ2 + p.muB * SZ
    drive_op = np.cos(p.axis) * SX + np.sin(p.axis) * SY
    amp = p.Omega * np.cos(p.nu * t + p.drive_phase)
    return static + amp[..., None, None] * drive_op


def rwa_cc_hamiltonian(muB, Omega, phase=0.0, axis=0.0):
    """Rotating frame for a carrier at D - muB.

    2 muB |+1><+1| + Omega/(2 sqrt 2) (|-1><0| + |+1><0| + h.c.)
    """
    h = Omega * _coupling(phase, axis)
    h[PLUS1, PLUS1] += 2.0 * muB
    return h


def rwa_erc_hamiltonian(muB, Omega, phase=0.0, axis=0.0):
    """Rotating frame for a carrier at D.

    Written in the |+-> = (|+1> +- |-1>)/sqrt 2 basis this is
    (muB |-> + Omega/2 |0>)<+| + h.c.; in the canonical basis the first term
    is simply ``muB * Sz``.
    """
    return muB * SZ + Omega * _coupling(phase, axis)


def two_level_reference_hamiltonian(detuning, rabi, phase=0.0, axis=0.0):
    """Ideal two-level drive on the {|0>, |-1>} pair; |+1> decoupled.

    ``rabi`` is the two-level Rabi frequency, so a pulse of length
    ``(pi/2)/rabi`` is a pi/2 rotation.
    """
    h = np.zeros((3, 3), dtype=complex)
    h[MINUS1, ZERO] = 0.5 * rabi * np.exp(-1j * phase) * np.exp(1j * axis)
    h[ZERO, MINUS1] = np.conj(h[MINUS1, ZERO])
    h[MINUS1, MINUS1] = detuning
    return h


def add_signal(H, probe: SignalProbe, t):
    """Add ``epsilon * q(omega t) * Sz`` to ``H``.

    ``H`` may be a matrix or a callable of time. With an array-valued probe
    frequency the result has a leading frequency axis.
    """
    if callable(H):
        H = H(t)
    q = probe.epsilon * probe.waveform(t)
    return np.asarray(H) + q[..., None, None] * SZ


def frame_drive_hamiltonian(frame, muB, Omega, phase=0.0, axis=0.0):
    """Time-independent drive-on Hamiltonian of a rotating frame.

    The segment Rabi frequency ``Omega`` is the Sx prefactor of the lab-frame
    drive in every frame; the two-level reference therefore runs at the
    effective two-level rate Omega/sqrt(2), exactly as the |0>-|-1> element of
    the conventional rotating frame.
    """
    if frame == "rwa-cc":
        return rwa_cc_hamiltonian(muB, Omega, phase, axis)
    if frame == "rwa-erc":
        return rwa_erc_hamiltonian(muB, Omega, phase, axis)
    if frame == "two-level-reference":
        return two_level_reference_hamiltonian(0.0, Omega / np.sqrt(2.0), phase, axis)
    raise ValueError(f"frame {frame!r} has no time-independent drive Hamiltonian")


def frame_free_hamiltonian(frame, muB):
    """Drive-off Hamiltonian of a rotating frame (diagonal)."""
    return frame_drive_hamiltonian(frame, muB, 0.0)


def frame_generator(frame, muB=0.0, D=None):
    """Diagonal of the generator that maps lab states into ``frame``.

    psi_frame(t) = exp(i G t) psi_lab(t).
    """
    if D is None:
        raise ValueError("D is required to relate lab and rotating frames")
    if frame in ("rwa-cc", "two-level-reference"):
        return (D - muB) * np.diag(SZ2).real
    if frame == "rwa-erc":
        return D * np.diag(SZ2).real
    if frame == "interaction":
        return np.diag(D * SZ2 + muB * SZ).real
    raise ValueError(f"unknown frame {frame!r}")


def to_rotating_frame(state, generator_diag, t):
    """Apply exp(i G t) for a diagonal generator."""
    return np.exp(1j * np.asarray(generator_diag) * t) * np.asarray(state)
