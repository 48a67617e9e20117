import numpy as np
import pytest

from qsmooth.cli import main
from qsmooth.experiment import ExperimentConfig, run_single_trajectory, simulate_record


@pytest.fixture(scope="module")
def runs():
    config = ExperimentConfig(n_u_samples=500)
    return [simulate_record(config, i) for i in range(120)]


def test_fully_observed_run_is_pure():
    rows, _ = run_single_trajectory(ExperimentConfig(eta=1.0, t_final=1.0, n_u_samples=20))
    assert min(min(r["purity_F"], r["purity_S"]) for r in rows) > 1 - 1e-9


def test_metrics_rows_within_ranges():
    rows, _ = run_single_trajectory(ExperimentConfig(t_final=1.0, n_u_samples=100))
    for r in rows:
        for key in ("purity_F", "purity_S"):
            assert 0.5 - 1e-12 <= r[key] <= 1 + 1e-9
        for key in ("fidelity_F", "fidelity_S"):
            assert -1e-12 <= r[key] <= 1 + 1e-9


@pytest.mark.slow
def test_smoothing_helps_fidelity_without_jumps(runs):
    gains = np.array([r.fidelity_S - r.fidelity_F for r in runs if not r.has_jump])
    assert len(gains) > 50
    assert gains.mean(axis=0).min() >= -1e-2


@pytest.mark.slow
def test_smoothed_purity_dips_before_jumps(runs):
    # rho_S hedges between "jumped" and "not yet" just before an actual jump
    dips = []
    for r in runs:
        if r.has_jump and 0.5 < r.jump_times[0] < 3.2:
            t = r.jump_times[0]
            w = (r.times > t - 0.3) & (r.times <= t)
            dips.append((r.purity_S - r.purity_F)[w].min())
    assert len(dips) >= 5
    assert np.mean(np.array(dips) < 0) > 0.5


@pytest.mark.slow
def test_y_homodyne_tracks_worse_than_x_homodyne():
    means = {}
    for phi in (0.0, np.pi / 2):
        config = ExperimentConfig(phi=phi, n_u_samples=1)
        p = [simulate_record(config, i).purity_F[2000:].mean() for i in range(40)]
        means[phi] = np.mean(p)
    assert means[np.pi / 2] < means[0.0]


def test_small_average_command(tmp_path):
    out = tmp_path / "avg.csv"
    argv = ["average", "--phi", "0", "--n-y-records", "2", "--n-u-samples", "2", "-o", str(out)]
    assert main(argv) == 0
    header = [line for line in out.read_text().splitlines() if not line.startswith("#")][0]
    assert header.startswith("t,mean_purity_F,mean_purity_S")


def test_full_length_single_invocation(tmp_path):
    out = tmp_path / "s.csv"
    argv = ["single", "--omega", "20", "--gamma", "1", "--eta", "0.90909", "--phi", "1.5708",
            "--dt", "0.001", "--t-final", "4", "--n-u-samples", "1000", "--seed", "42", "-o", str(out)]
    assert main(argv) == 0
    body = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 1 + 4001
