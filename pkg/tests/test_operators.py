import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsmooth.errors import ContractError, DimensionError, PositivityError
from qsmooth.operators import (
    BlochVector,
    bloch_components,
    fidelity,
    from_bloch,
    hermitize,
    project_psd,
    pure_state,
    purity,
    to_bloch,
)

from .conftest import density_matrices

ONE = np.diag([0.0, 1.0]).astype(complex)
ZERO = np.diag([1.0, 0.0]).astype(complex)
MIXED = np.eye(2) / 2


def test_purity_examples():
    assert purity(ONE) == pytest.approx(1.0)
    assert purity(MIXED) == pytest.approx(0.5)
    assert purity(from_bloch((0, 0, 0.5))) == pytest.approx(0.625)


def test_purity_rejects_unnormalized():
    with pytest.raises(ContractError):
        purity(2 * ONE)


def test_fidelity_examples():
    assert fidelity(ONE, ONE) == pytest.approx(1.0)
    assert fidelity(ONE, ZERO) == pytest.approx(0.0)
    assert fidelity(ONE, MIXED) == pytest.approx(0.5)


def test_fidelity_warns_on_mixed_reference():
    with pytest.warns(RuntimeWarning):
        value = fidelity(MIXED, ONE)
    assert value == pytest.approx(0.5)


def test_bloch_examples():
    assert to_bloch(ONE) == pytest.approx((0, 0, 1))
    assert to_bloch(MIXED) == pytest.approx((0, 0, 0))
    plus = pure_state([1, 1])
    assert to_bloch(plus) == pytest.approx((1, 0, 0))
    assert isinstance(to_bloch(plus), BlochVector)


def test_bloch_requires_qubit():
    with pytest.raises(DimensionError):
        to_bloch(np.eye(3) / 3)


def test_hermitize_and_project_examples():
    a = np.array([[1, 2 - 1j], [2 + 1j, 3]])
    assert np.array_equal(hermitize(a), a)
    out = project_psd(np.diag([1.0, -1e-12]), floor=1e-9)
    assert np.allclose(out, np.diag([1.0, 0.0]), atol=0)
    with pytest.raises(PositivityError) as err:
        project_psd(np.diag([1.0, -1e-3]), floor=1e-9)
    assert err.value.eigenvalue == pytest.approx(-1e-3)


@given(density_matrices())
def test_purity_bounds(rho):
    assert 0.5 - 1e-12 <= purity(rho) <= 1 + 1e-12


@given(density_matrices(d=3))
def test_purity_bounds_qutrit(rho):
    assert 1 / 3 - 1e-12 <= purity(rho) <= 1 + 1e-12


@given(density_matrices())
def test_self_fidelity_is_purity(rho):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert fidelity(rho, rho) == pytest.approx(purity(rho), abs=1e-14)


@given(density_matrices())
def test_bloch_round_trip(rho):
    assert np.abs(from_bloch(to_bloch(rho)) - rho).max() < 1e-12
    assert np.allclose(bloch_components(rho[None])[0], to_bloch(rho), atol=1e-14)
    assert to_bloch(rho).length <= 1 + 1e-9


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_hermitize_idempotent_and_projection_psd(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = hermitize(a)
    assert np.array_equal(hermitize(h), h)
    vals, vecs = np.linalg.eigh(h)
    vals = np.where(vals < 0, -1e-11, vals)
    clipped = project_psd((vecs * vals) @ vecs.conj().T, floor=1e-9)
    assert np.linalg.eigvalsh(clipped).min() >= -1e-15
