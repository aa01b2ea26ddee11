import math

import numpy as np
import pytest

from config import Experiment, build_config, load_config, render_config
from experiments import COLUMNS, RANDOM_EXPANSION_TARGETS, resolve_sweep, run_experiment
from utils.output import read_csv, write_csv


def make(experiment, **extra):
    data = {"experiment": experiment, "trials": 2000, "seed": 1, "engine": "exact"}
    data.update(extra)
    return build_config(data)


@pytest.mark.parametrize("experiment", list(Experiment))
def test_tables_follow_their_schema(experiment):
    cfg = make(experiment, noise_profile="manual", trials=200, sweep={"steps": 4})
    if experiment in (Experiment.ECHO, Experiment.RAMSEY):
        cfg = cfg.with_overrides(sweep={"start_ns": 0.0, "stop_ns": 3.0, "steps": 4})
    output = run_experiment(cfg)
    assert list(output.frame.columns) == COLUMNS[experiment]
    assert len(output.frame) > 0


def test_sweep_defaults_fill_in_missing_keys():
    sweep = resolve_sweep(make("echo", sweep={"steps": 5}))
    assert (sweep.start_ns, sweep.stop_ns, sweep.steps) == (38.0, 8000.0, 5)


def test_ideal_transfer_table():
    output = run_experiment(make("transfer", noise_profile="ideal"))
    pooled = output.frame[output.frame["outcome"] == "all"]
    assert list(pooled["target"]) == ["H", "D+", "sigma+"]
    assert np.allclose(pooled["fidelity"], 1.0)
    assert output.summary["classical_bound"] == 0.5
    assert output.summary["average_fidelity"] == pytest.approx((1.0, 0.0))
    assert output.summary["single_port_success_rate"] == pytest.approx(0.5)


def test_ideal_entangle_table():
    output = run_experiment(make("entangle", noise_profile="ideal"))
    values = dict(zip(output.frame["metric"], output.frame["value"]))
    assert values["F"] == pytest.approx(1.0)
    assert values["separable_F"] == pytest.approx(0.5)


def test_exact_echo_recovers_t2():
    output = run_experiment(make("echo", noise_profile="manual"))
    t2, _ = output.summary["t2_echo_us"]
    assert t2 == pytest.approx(2.7, rel=0.01)
    assert output.frame["visibility"].is_monotonic_decreasing


def test_exact_ramsey_recovers_t2_star():
    output = run_experiment(make("ramsey", noise_profile="manual"))
    t2_star, _ = output.summary["t2_star_ns"]
    assert t2_star == pytest.approx(1.7, rel=0.05)


def test_monte_carlo_echo_recovers_t2():
    cfg = make("echo", noise_profile="manual", engine="mc", trials=4000, seed=3)
    t2, _ = run_experiment(cfg).summary["t2_echo_us"]
    assert t2 == pytest.approx(2.7, rel=0.10)


def test_monte_carlo_ramsey_recovers_t2_star():
    cfg = make(
        "ramsey", noise_profile="manual", engine="mc", trials=4000, seed=5,
        sweep={"start_ns": 0.0, "stop_ns": 3.0, "steps": 13},
    )
    t2_star, _ = run_experiment(cfg).summary["t2_star_ns"]
    assert t2_star == pytest.approx(1.7, rel=0.10)


def test_ideal_fringe():
    output = run_experiment(make("fringe", noise_profile="ideal"))
    assert output.frame["probability"].iloc[0] == pytest.approx(0.15)
    assert output.summary["analytic_visibility"] == pytest.approx(1.0)
    visibility, _ = output.summary["fitted_visibility"]
    assert visibility == pytest.approx(1.0, abs=1e-3)


def test_loss_budget_table():
    output = run_experiment(make("lossbudget", noise_profile="manual"))
    assert output.frame["cumulative"].iloc[-1] == pytest.approx(3.456e-4, rel=1e-9)
    assert output.summary["herald_rate_lossless"] == pytest.approx(1.0)
    assert output.summary["herald_rate_lossy"] == pytest.approx(3.456e-4, rel=1e-6)
    assert output.summary["fidelity_shift_sigma"] == 0.0


def test_loss_budget_read_as_losses():
    output = run_experiment(make("lossbudget", noise_profile="manual", loss={"reading": "loss"}))
    assert output.frame["efficiency"].iloc[0] == pytest.approx(0.92)
    assert output.summary["overall_efficiency"] == pytest.approx(0.0989184, rel=1e-9)


def test_eq5check_table():
    output = run_experiment(make("eq5check"))
    assert len(output.frame) == 4 * (3 + RANDOM_EXPANSION_TARGETS)
    assert output.summary["max_residual"] < 1e-12
    assert output.summary["global_phase_chi+"].startswith("-1.000000")
    assert output.summary["global_phase_xi-"].startswith("+1.000000")


def _run_to_csv(cfg, path):
    output = run_experiment(cfg)
    write_csv(output.frame, path, render_config(output.config))
    return path.read_bytes()


def test_same_seed_gives_identical_files(tmp_path):
    cfg = make("transfer", engine="mc", trials=500, seed=42, protocol={"targets": "H"})
    assert _run_to_csv(cfg, tmp_path / "a.csv") == _run_to_csv(cfg, tmp_path / "b.csv")


def test_csv_header_reproduces_the_run(tmp_path):
    cfg = make("transfer", engine="mc", trials=500, seed=42, protocol={"targets": "H, D+"})
    first = _run_to_csv(cfg, tmp_path / "first.csv")
    again = _run_to_csv(load_config(tmp_path / "first.csv"), tmp_path / "again.csv")
    assert first == again


def test_csv_body_reads_back(tmp_path):
    path = tmp_path / "entangle.csv"
    _run_to_csv(make("entangle", noise_profile="ideal"), path)
    frame = read_csv(path)
    assert list(frame.columns) == COLUMNS[Experiment.ENTANGLE]
    assert math.isclose(frame.set_index("metric").loc["F", "value"], 1.0)


def test_monte_carlo_fringe_matches_the_analytic_coherence():
    cfg = make("fringe", noise_profile="calibrated", engine="mc", trials=20_000, seed=6)
    summary = run_experiment(cfg).summary
    visibility, err = summary["fitted_visibility"]
    assert visibility == pytest.approx(summary["analytic_visibility"], abs=4 * err + 0.02)


def test_loss_leaves_the_heralded_fidelity_unchanged():
    cfg = make("lossbudget", noise_profile="manual", engine="mc", trials=100_000, seed=2)
    summary = run_experiment(cfg).summary
    rate = summary["overall_efficiency"]
    assert summary["herald_rate_lossy"] == pytest.approx(rate, abs=4 * math.sqrt(rate / 100_000))
    assert summary["fidelity_shift_sigma"] < 4


def test_lossy_run_draws_until_the_herald_target():
    cfg = make(
        "lossbudget", noise_profile="manual", engine="mc", trials=5000, seed=3,
        loss={"stages": "detection:0.01", "min_heralds": 300},
    )
    summary = run_experiment(cfg).summary
    assert summary["heralded_lossless"] == 5000
    assert summary["heralded_lossy"] >= 300
    assert summary["trials_lossy"] % 5000 == 0
    assert summary["trials_lossy"] > 5000
    assert summary["fidelity_shift_sigma"] < 4


def test_transfer_summary_reports_the_three_axis_average():
    summary = run_experiment(make("transfer", noise_profile="calibrated")).summary
    per_target = [summary[f"fidelity_{name}"][0] for name in ("H", "D+", "sigma+")]
    average, err = summary["average_fidelity"]
    assert average == pytest.approx(np.mean(per_target), abs=1e-12)
    assert average == pytest.approx(0.785, abs=0.03)
    assert average > summary["classical_bound"] + 0.2
    assert err == 0.0
