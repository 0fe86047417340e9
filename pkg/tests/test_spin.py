import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvsim import spin
from nvsim.spin import KET_0, KET_M1, KET_P1, KET_PLUS, SX, SY, SZ


def comm(a, b):
    return a @ b - b @ a


def test_operator_structure():
    sx, sy, sz = spin.spin1_operators()
    assert np.array_equal(sz, np.diag([1, 0, -1]))
    assert sx[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert sx[1, 2] == pytest.approx(1 / np.sqrt(2))
    # returned copies do not alias the module constants
    sx[0, 0] = 5
    assert SX[0, 0] == 0


def test_commutation_relations():
    assert np.max(np.abs(comm(SX, SY) - 1j * SZ)) <= 1e-14
    assert np.max(np.abs(comm(SY, SZ) - 1j * SX)) <= 1e-14
    assert np.max(np.abs(comm(SZ, SX) - 1j * SY)) <= 1e-14


def test_basis_actions():
    assert np.allclose(SZ @ KET_P1.amplitudes, KET_P1.amplitudes)
    assert np.allclose(SX @ KET_0.amplitudes, KET_PLUS.amplitudes)


def test_fidelity_examples():
    assert spin.fidelity(KET_0, KET_0) == pytest.approx(1.0)
    assert spin.fidelity(KET_0, KET_P1) == 0.0
    assert spin.fidelity(KET_0, spin.superpose([0, 1, 1])) == pytest.approx(0.5)


def test_superpose():
    assert spin.fidelity(spin.superpose([1, 0, 0]), KET_P1) == 1.0
    assert np.allclose(spin.superpose([1, 0, 1]).amplitudes, np.array([1, 0, 1]) / np.sqrt(2))
    with pytest.raises(ValueError):
        spin.superpose([0, 0, 0])


def test_state_validation_and_immutability():
    with pytest.raises(ValueError):
        spin.SpinState([1, 1, 0])
    s = spin.SpinState([0, 1, 0])
    with pytest.raises(ValueError):
        s.amplitudes[0] = 1


def test_equator_state_phase_roundtrip():
    for phi in np.linspace(-3, 3, 7):
        assert spin.equator_phase(spin.equator_state(phi)) == pytest.approx(phi)
        assert spin.equator_state(phi).populations[1] == 0.0


cplx = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@given(st.lists(cplx, min_size=3, max_size=3), st.lists(cplx, min_size=3, max_size=3), st.floats(-7, 7))
def test_fidelity_symmetric_and_phase_invariant(a, b, theta):
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    x, y = spin.superpose(a), spin.superpose(b)
    assert abs(np.linalg.norm(x.amplitudes) - 1) <= 1e-12
    f = spin.fidelity(x, y)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(spin.fidelity(y, x), abs=1e-12)
    rotated = np.exp(1j * theta) * x.amplitudes
    assert f == pytest.approx(spin.fidelity(rotated, y), abs=1e-12)
