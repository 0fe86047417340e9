"""Spin-1 operators, pure states and overlaps.

Basis order is fixed everywhere in the package as (|+1>, |0>, |-1>), so that
index 0 is m=+1, index 1 is m=0 and index 2 is m=-1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLUS1, ZERO, MINUS1 = 0, 1, 2

_SQ2 = np.sqrt(2.0)

SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _SQ2
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _SQ2
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
SZ2 = SZ @ SZ
IDENTITY = np.eye(3, dtype=complex)

NORM_TOL = 1e-12


def spin1_operators():
    """Return copies of the spin-1 matrices ``(Sx, Sy, Sz)``."""
    return SX.copy(), SY.copy(), SZ.copy()


@dataclass(frozen=True, eq=False)
class SpinState:
    """Normalized pure state of a spin-1, amplitudes ordered (c+1, c0, c-1)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(3).copy()
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|psi| = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.amplitudes, dtype=dtype)

    def __repr__(self):
        c = ", ".join(f"{a:.6g}" for a in self.amplitudes)
        return f"SpinState({c})"

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other) -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, as_array(other)))


def as_array(state) -> np.ndarray:
    if isinstance(state, SpinState):
        return state.amplitudes
    return np.asarray(state, dtype=complex)


def superpose(coeffs) -> SpinState:
    """Normalize three complex coefficients into a :class:`SpinState`.

    Raises
    ------
    ValueError
        If every coefficient is zero.
    """
    v = np.asarray(coeffs, dtype=complex).reshape(3)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector into a spin state")
    return SpinState(v / norm)


def renormalized(vec) -> SpinState:
    """Wrap a propagated vector, absorbing floating-point norm drift."""
    v = np.asarray(vec, dtype=complex)
    return SpinState(v / np.linalg.norm(v))


def fidelity(state, target) -> float:
    """|<target|state>|^2, clipped to [0, 1]."""
    f = abs(np.vdot(as_array(target), as_array(state))) ** 2
    return float(min(max(f, 0.0), 1.0))


KET_P1 = SpinState([1, 0, 0])
KET_0 = SpinState([0, 1, 0])
KET_M1 = SpinState([0, 0, 1])
KET_PLUS = superpose([1, 0, 1])
KET_MINUS = superpose([1, 0, -1])


def equator_state(phi: float) -> SpinState:
    """(|-1> - exp(i phi)|+1>)/sqrt(2)."""
    return superpose([-np.exp(1j * phi), 0, 1])


def equator_phase(state) -> float:
    """Relative phase phi of a state written as |-1> - exp(i phi)|+1>."""
    a = as_array(state)
    return float(np.angle(-a[PLUS1] / a[MINUS1]))
