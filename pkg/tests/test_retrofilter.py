import numpy as np
import pytest

from qsmooth.errors import PositivityError
from qsmooth.forward import filter_forward, sample_true_record
from qsmooth.model import HomodyneChannel, JumpChannel, OpenSystemModel, two_level_atom
from qsmooth.operators import SIGMA_MINUS, SIGMA_X
from qsmooth.records import Record
from qsmooth.retrofilter import (
    dump_effects,
    effect_back_step,
    load_effects,
    record_consistency,
    retrofilter_record,
)

from . import oracles

EXCITED = np.diag([0.0, 1.0]).astype(complex)


def test_final_effect_is_identity():
    m = two_level_atom(20, 1, 0.5, 0)
    grid = retrofilter_record(m, Record(1e-3, np.zeros(10)))
    assert np.allclose(grid.unnormalized(10), np.eye(2))


def test_effect_gives_future_record_probability():
    m = two_level_atom(20, 5, 0.5, np.pi / 2)
    dt = 0.005
    ys = np.random.default_rng(8).standard_normal(8) / np.sqrt(dt)
    grid = retrofilter_record(m, Record(dt, ys))
    rng = np.random.default_rng(9)
    for t in range(9):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        rho = a @ a.conj().T / np.trace(a @ a.conj().T).real
        exact = oracles.observed_likelihood(m, rho, ys[t:], dt)
        val = np.trace(grid.unnormalized(t) @ rho).real
        assert val == pytest.approx(exact, rel=1e-8)


def test_kernel_matches_single_steps():
    m = two_level_atom(20, 1, 0.7, 1.0)
    ys = np.random.default_rng(3).standard_normal(50) / np.sqrt(1e-3)
    grid = retrofilter_record(m, Record(1e-3, ys))
    E = np.eye(2, dtype=complex)
    for t in range(49, -1, -1):
        E = effect_back_step(m, E, ys[t], 1e-3)
        assert np.abs(grid.unnormalized(t) - E).max() < 1e-12 * np.abs(E).max()


def test_uninformative_observation_keeps_identity():
    # a blind detector: the future record carries no information, so E stays
    # the identity up to the O(dt) trace defect of the first-order map
    m = OpenSystemModel(10 * SIGMA_X, (HomodyneChannel(0 * SIGMA_MINUS),), (JumpChannel(SIGMA_MINUS),))
    defects = []
    for dt in (1e-3, 5e-4):
        grid = retrofilter_record(m, Record(dt, np.zeros(int(round(0.1 / dt)))))
        defects.append(np.abs(grid.effects - 0.5 * np.eye(2)).max())
    assert defects[0] < 1e-3
    assert defects[0] / defects[1] == pytest.approx(2, rel=0.05)


def test_consistency_with_filter_is_constant():
    m = two_level_atom(20, 1, 10 / 11, np.pi / 2)
    record, _ = sample_true_record(m, EXCITED, 4000, 1e-3, np.random.default_rng(2))
    obs = record.observed()
    c = record_consistency(retrofilter_record(m, obs), filter_forward(m, obs, EXCITED))
    assert np.std(c) < 1e-9


def test_positivity_guard():
    m = two_level_atom(20, 1, 0.5, 0)
    with pytest.raises(PositivityError):
        effect_back_step(m, np.diag([1.0, -1.0]), 0.0, 1e-3)


def test_serialization_round_trip(tmp_path):
    m = two_level_atom(20, 1, 0.5, 0.4)
    ys = np.random.default_rng(0).standard_normal(20) / np.sqrt(1e-3)
    grid = retrofilter_record(m, Record(1e-3, ys, t0=0.5))
    path = tmp_path / "eff.csv"
    dump_effects(grid, path)
    back = load_effects(path)
    assert np.array_equal(back.effects, grid.effects)
    assert np.array_equal(back.log_scale, grid.log_scale)
    assert back.t0 == 0.5 and back.dt == grid.dt


def test_empty_record_gives_identity():
    m = two_level_atom(20, 1, 0.5, 0)
    grid = retrofilter_record(m, Record(1e-3, np.zeros((0, 1))))
    assert len(grid) == 1
    assert np.allclose(grid.unnormalized(0), np.eye(2))


def test_uncoupled_effect_is_unchanged():
    zero = np.zeros((2, 2))
    m = OpenSystemModel(zero, (HomodyneChannel(zero),), (JumpChannel(zero),))
    E = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    assert np.allclose(effect_back_step(m, E, 5.0, 1e-3), E, atol=0)
