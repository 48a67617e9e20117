import numpy as np
import pytest

from qsmooth.errors import ContractError, ImpossibleRecordError, StepSizeError
from qsmooth.forward import (
    filter_forward,
    filter_forward_joint,
    jump_probabilities,
    kraus_step,
    observed_step,
    ostensible_jump_table,
    sample_ostensible_unobserved_step,
    sample_true_record,
    sample_true_step,
)
from qsmooth.model import two_level_atom
from qsmooth.records import Record, RecordStep
from qsmooth.smoother import ensemble_filtered_average

from . import oracles

EXCITED = np.diag([0.0, 1.0]).astype(complex)
GROUND = np.diag([1.0, 0.0]).astype(complex)


def test_no_jump_from_excited_state():
    m = two_level_atom(0, 1, 0.5, 0)
    dt = 1e-3
    out = kraus_step(m, EXCITED, RecordStep((0.0,), (0,)), dt)
    # no coherences appear and the excited weight drops by (1 - gamma dt / 2)^2
    assert abs(out[0, 1]) == 0
    assert out[1, 1].real == pytest.approx((1 - dt / 2) ** 2)


def test_jump_from_excited_state():
    m = two_level_atom(0, 1, 0.5, 0)
    dt = 1e-3
    out = kraus_step(m, EXCITED, RecordStep((0.0,), (1,)), dt)
    assert np.allclose(out, 0.5 * dt * GROUND)


def test_jump_from_ground_state_is_impossible():
    m = two_level_atom(0, 1, 0.5, 0)
    with pytest.raises(ImpossibleRecordError):
        kraus_step(m, GROUND, RecordStep((0.0,), (1,)), 1e-3)


def test_ostensible_reweighting_averages_to_observed_operation():
    m = two_level_atom(20, 1, 0.6, 0.3)
    dt = 1e-3
    rho = oracles.filtered_state(m, EXCITED, [1.0, -3.0], dt)
    p = jump_probabilities(m, rho, dt)
    mix = sum(
        (1 - p.sum() if n == 0 else p[0]) * kraus_step(m, rho, RecordStep((4.0,), (n,)), dt, p)
        for n in (0, 1)
    )
    assert np.allclose(mix, observed_step(m, rho, 4.0, dt), atol=1e-15)


def test_step_size_guard():
    m = two_level_atom(20, 1, 0.5, 0)
    with pytest.raises(StepSizeError):
        kraus_step(m, EXCITED, RecordStep((0.0,), (0,)), 0.05)


def test_count_contract():
    m = two_level_atom(20, 1, 0.5, 0)
    with pytest.raises(ContractError):
        kraus_step(m, EXCITED, RecordStep((0.0,), (0, 0)), 1e-3)


def test_true_jump_rate_matches_monte_carlo():
    m = two_level_atom(20, 1, 0.5, 0)
    dt = 1e-3
    rng = np.random.default_rng(7)
    draws = 100_000
    jumps = sum(sample_true_step(m, EXCITED, rng, dt).n[0] for _ in range(draws))
    p = 0.5 * dt
    assert abs(jumps - draws * p) < 4 * np.sqrt(draws * p * (1 - p))


def test_ostensible_draw_reports_filtered_rate():
    m = two_level_atom(20, 1, 0.5, 0)
    _, p = sample_ostensible_unobserved_step(EXCITED, m, np.random.default_rng(0), 1e-3)
    assert p == pytest.approx([0.5e-3])


def test_filter_matches_path_sum():
    m = two_level_atom(20, 5, 0.5, np.pi / 2)
    dt = 0.005
    ys = np.random.default_rng(2).standard_normal(8) / np.sqrt(dt)
    grid = filter_forward(m, Record(dt, ys), EXCITED)
    for t in range(9):
        assert np.abs(grid.states[t] - oracles.filtered_state(m, EXCITED, ys[:t], dt)).max() < 1e-13
        exact = oracles.observed_likelihood(m, EXCITED, ys[:t], dt)
        assert grid.weights[t] == pytest.approx(exact, rel=1e-8)


def test_kernel_matches_step_by_step_reference():
    m = two_level_atom(20, 1, 10 / 11, np.pi / 2)
    record, _ = sample_true_record(m, EXCITED, 300, 1e-3, np.random.default_rng(4))
    grid = filter_forward_joint(m, record, None, EXCITED, ostensible=False)
    rho, logw = EXCITED, 0.0
    for t, step in enumerate(record):
        rho = kraus_step(m, rho, step, record.dt)
        tr = np.trace(rho).real
        rho, logw = rho / tr, logw + np.log(tr)
        assert np.abs(grid.states[t + 1] - rho).max() < 1e-12
    assert grid.log_weights[-1] == pytest.approx(logw, rel=1e-10)


def test_true_states_stay_pure():
    m = two_level_atom(20, 1, 10 / 11, 0)
    _, rho_T = sample_true_record(m, EXCITED, 4000, 1e-3, np.random.default_rng(0))
    purities = np.einsum("tij,tji->t", rho_T, rho_T).real
    assert purities.min() > 1 - 1e-12


def test_ostensible_table_bounds():
    m = two_level_atom(20, 1, 0.5, 0)
    record, _ = sample_true_record(m, EXCITED, 200, 1e-3, np.random.default_rng(1))
    p = ostensible_jump_table(m, filter_forward(m, record.observed(), EXCITED))
    assert p.shape == (200, 1)
    assert (p >= 0).all() and (p <= 0.5e-3 + 1e-15).all()


def test_filtered_state_is_ensemble_average():
    """Likelihood-weighted average of doubly conditioned states is the filtered state."""
    m = two_level_atom(20, 1, 10 / 11, np.pi / 2)
    record, _ = sample_true_record(m, EXCITED, 2000, 1e-3, np.random.default_rng(5))
    obs = record.observed()
    filtered = filter_forward(m, obs, EXCITED)
    avg = ensemble_filtered_average(m, obs, EXCITED, 2000, np.random.default_rng(6), filtered)
    probes = np.linspace(200, 2000, 10).astype(int)
    sigma = np.sqrt(np.maximum(avg.var_re, avg.var_im))[probes]
    err = np.abs(avg.states[probes] - filtered.states[probes])
    assert (err <= 3 * sigma + 1e-12).all()


def test_fully_observed_filter_stays_pure():
    m = two_level_atom(20, 1, 1.0, 0)
    dt = 1e-3
    record, _ = sample_true_record(m, EXCITED, 4000, dt, np.random.default_rng(11))
    f = filter_forward(m, record.observed(), EXCITED)
    assert f.purities().min() >= 1 - 10 * dt
    # with no unobserved channel the joint filter is the same map
    joint = filter_forward_joint(m, record.observed(), Record(dt, None, np.zeros(4000)), EXCITED, ostensible=False)
    assert np.abs(joint.states - f.states).max() < 1e-12


def test_uncoupled_filter_is_unitary():
    from scipy.linalg import expm

    from qsmooth.model import HomodyneChannel, JumpChannel, OpenSystemModel
    from qsmooth.operators import SIGMA_X

    H = 3 * SIGMA_X
    zero = np.zeros((2, 2))
    m = OpenSystemModel(H, (HomodyneChannel(zero),), (JumpChannel(zero),))
    ys = np.random.default_rng(0).standard_normal(1000) / np.sqrt(1e-4)
    f = filter_forward(m, Record(1e-4, ys), EXCITED)
    U = expm(-1j * H * 0.1)
    assert np.abs(f.states[-1] - U @ EXCITED @ U.conj().T).max() < 1e-3
    assert np.allclose(f.log_weights, f.log_weights[0] + np.arange(1001) * np.log1p(9e-8), atol=1e-9)


def test_jump_sends_true_state_to_ground():
    m = two_level_atom(20, 1, 0.5, 0)
    ys = np.zeros((5, 1))
    n = np.array([[0], [0], [1], [0], [0]])
    g = filter_forward_joint(m, Record(1e-3, ys, n), None, EXCITED, ostensible=False)
    assert np.allclose(g.states[3], GROUND)


def test_ground_state_of_undriven_atom_never_jumps():
    m = two_level_atom(0, 1, 0.5, 0)
    assert jump_probabilities(m, GROUND, 1e-3) == pytest.approx([0.0])
    n, p = sample_ostensible_unobserved_step(GROUND, m, np.random.default_rng(0), 1e-3)
    assert n == (0,) and p == pytest.approx([0.0])


def test_default_atom_jump_probability():
    m = two_level_atom(20, 1, 10 / 11, np.pi / 2)
    assert jump_probabilities(m, EXCITED, 1e-3) == pytest.approx([1e-3 / 11])


def test_default_atom_generator_consistency_is_second_order():
    m = two_level_atom(20, 1, 10 / 11, np.pi / 2)
    rho = oracles.filtered_state(m, EXCITED, [3.0, -1.0], 1e-3)
    x, w = np.polynomial.hermite_e.hermegauss(20)
    w = w / w.sum()
    res = []
    for dt in (4e-3, 2e-3, 1e-3):
        avg = sum(wi * observed_step(m, rho, xi / np.sqrt(dt), dt) for xi, wi in zip(x, w))
        from qsmooth.model import lindblad_generator

        res.append(np.abs(avg - rho - lindblad_generator(m, rho) * dt).max())
    assert res[0] / res[1] == pytest.approx(4, rel=0.05)
    assert res[1] / res[2] == pytest.approx(4, rel=0.05)
