import math

import numpy as np
import pytest

import reference_impl
from errors import InvalidEfficiency, InvalidParameter
from freq_measure import EomSettings
from optics_pipeline import NAMED_TARGETS, TargetState
from protocol import (
    DEFAULT_LOSS_STAGES,
    GHZ_VECTORS,
    PORTS,
    BaselineStrategy,
    CoincidenceRecord,
    Engine,
    GhzOutcome,
    LossReading,
    NoiseParams,
    classical_baseline,
    complementary_projectors,
    composite_fidelity,
    expansion_residuals,
    fringe_coherence,
    ghz_projectors,
    loss_budget,
    maximally_mixed_spin_resource,
    port_analysis,
    port_split,
    run_entanglement_verification,
    run_fringe,
    run_transfer,
    target_basis,
)
from qd_source import SourceParams
from spin_dynamics import SpinParams
from state_core import Basis

NO_DEPHASING = dict(t2_star_ns=math.inf, t2_echo_us=math.inf)


def test_ghz_expansion_matches_the_pauli_coefficients(rng):
    targets = list(NAMED_TARGETS.values()) + [TargetState.random(rng) for _ in range(50)]
    for target in targets:
        for r in expansion_residuals(target):
            assert r.residual < 1e-12
            assert r.probability == pytest.approx(0.25)
            expected_phase = -1.0 if r.outcome == GhzOutcome.CHI_PLUS else 1.0
            assert r.global_phase == pytest.approx(expected_phase)


def test_analyzer_and_complement_resolve_the_identity():
    total = sum(ch.kraus_ops[0] for _, ch in ghz_projectors())
    total = total + sum(ch.kraus_ops[0] for ch in complementary_projectors())
    assert np.allclose(total, np.eye(8))


def test_composed_analyzer_matches_the_ghz_states():
    for outcome, channel in ghz_projectors():
        vec = GHZ_VECTORS[outcome]
        assert np.allclose(channel.operator, np.outer(vec, vec.conj()), atol=1e-12, rtol=0)


def test_analyzer_follows_a_calibrated_eom_offset():
    eom = EomSettings(phase_offset=0.7)
    for outcome, channel in ghz_projectors(eom):
        vec = GHZ_VECTORS[outcome]
        assert np.allclose(channel.operator, np.outer(vec, vec.conj()), atol=1e-12, rtol=0)


def test_port_split_routes_each_ghz_pair_to_its_port():
    split = port_split()
    for outcome in GhzOutcome:
        routed = (split @ GHZ_VECTORS[outcome]).reshape(2, 2, 2)
        port = PORTS[outcome.port]
        assert np.linalg.norm(routed[:, :, port]) == pytest.approx(1.0)
        assert np.linalg.norm(routed[:, :, 1 - port]) == pytest.approx(0.0, abs=1e-15)


def test_port_analysis_alone_also_clicks_on_uncorrelated_light():
    # the etalon correlation is what removes |b,H,T> and |r,V,R> from port A
    assert np.linalg.matrix_rank(port_analysis(GhzOutcome.XI_PLUS), tol=1e-9) == 2


def test_outcome_metadata():
    assert [o.detector for o in GhzOutcome] == [1, 2, 3, 4]
    assert [o.correction for o in GhzOutcome] == ["Z", "I", "Y", "X"]
    assert GhzOutcome.XI_MINUS.port == "A"
    assert GhzOutcome.CHI_PLUS.port == "B"


@pytest.mark.parametrize("engine", [Engine.EXACT, Engine.MONTECARLO])
def test_ideal_transfer_is_perfect(named_target, engine):
    _, target = named_target
    result = run_transfer(target, NoiseParams.ideal(), trials=2000, seed=3, engine=engine)
    assert result.fidelity == pytest.approx(1.0, abs=1e-9)
    assert result.success_rate == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("name", ["H", "D+", "sigma+"])
def test_without_correction_half_the_outcomes_are_wrong(name):
    result = run_transfer(
        NAMED_TARGETS[name], NoiseParams.ideal(), engine=Engine.EXACT, apply_correction=False
    )
    assert result.fidelity == pytest.approx(0.5, abs=1e-9)


def test_default_loss_budget():
    assert loss_budget(DEFAULT_LOSS_STAGES) == pytest.approx(3.456e-4, rel=1e-9)
    assert NoiseParams().overall_efficiency == pytest.approx(3.456e-4, rel=1e-9)


def test_loss_reading_takes_complements():
    noise = NoiseParams(loss_reading=LossReading.LOSS)
    assert noise.overall_efficiency == pytest.approx(0.0989184, rel=1e-9)


@pytest.mark.parametrize("value", [0.0, -0.1, 1.5])
def test_loss_stage_outside_the_unit_interval(value):
    with pytest.raises(InvalidEfficiency):
        loss_budget([("detection", value)])


def test_success_rate_includes_the_loss_budget():
    result = run_transfer(NAMED_TARGETS["H"], NoiseParams(), engine=Engine.EXACT)
    assert result.success_rate == pytest.approx(3.456e-4, rel=1e-6)


def test_sampled_loss_thins_the_heralds():
    noise = NoiseParams.ideal(
        loss_stages=[("detection", 0.2)], sample_herald_loss=True
    )
    result = run_transfer(NAMED_TARGETS["H"], noise, trials=20_000, seed=1)
    assert result.success_rate == pytest.approx(0.2, abs=5 * math.sqrt(0.16 / 20_000))
    assert result.heralded < result.trials


@pytest.mark.parametrize("name", ["H", "D+", "sigma+"])
def test_labeled_pipeline_agrees_with_the_full_matrix_model(name):
    target = NAMED_TARGETS[name]
    noise = NoiseParams.ideal(
        source=SourceParams(init_error=0.1, reexcitation_weight=0.2),
        spin=SpinParams(readout_fidelity=0.95, **NO_DEPHASING),
    )
    result = run_transfer(target, noise, engine=Engine.EXACT)
    expected = reference_impl.transfer_fidelity(target.vector, 0.1, 0.2, 0.95)
    assert result.fidelity == pytest.approx(expected, abs=1e-10)


def test_monte_carlo_agrees_with_the_exact_engine():
    target = NAMED_TARGETS["D+"]
    noise = NoiseParams.ideal(
        source=SourceParams(init_error=0.1, reexcitation_weight=0.2),
        spin=SpinParams(readout_fidelity=0.95, **NO_DEPHASING),
    )
    exact = run_transfer(target, noise, engine=Engine.EXACT)
    mc = run_transfer(target, noise, trials=20_000, seed=11)
    assert mc.fidelity == pytest.approx(exact.fidelity, abs=5 * mc.stderr)


def test_a_mixed_spin_resource_carries_no_information(named_target):
    _, target = named_target
    result = run_transfer(
        target, NoiseParams.ideal(), engine=Engine.EXACT,
        resource=maximally_mixed_spin_resource(),
    )
    assert result.fidelity == pytest.approx(0.5, abs=1e-9)


def test_separable_resource_stays_at_the_classical_bound():
    result = classical_baseline(
        NAMED_TARGETS["H"], strategy=BaselineStrategy.SEPARABLE_RESOURCE, engine=Engine.EXACT
    )
    assert result.fidelity <= 0.5 + 1e-9
    assert result.metrics["F_ZZ"][0] == pytest.approx(1.0)


def test_single_port_heralds_half_the_photons():
    result = classical_baseline(
        NAMED_TARGETS["D+"], strategy=BaselineStrategy.SINGLE_PORT, engine=Engine.EXACT
    )
    assert result.fidelity == pytest.approx(1.0, abs=1e-9)
    assert result.success_rate == pytest.approx(0.5, abs=1e-9)


def test_random_guess_averages_one_half():
    exact = classical_baseline(
        NAMED_TARGETS["H"], strategy=BaselineStrategy.RANDOM_GUESS, engine=Engine.EXACT
    )
    assert exact.fidelity == 0.5
    mc = classical_baseline(
        NAMED_TARGETS["H"], trials=20_000, seed=2, strategy=BaselineStrategy.RANDOM_GUESS
    )
    assert mc.fidelity == pytest.approx(0.5, abs=5 * mc.stderr)


def test_composite_fidelity_of_the_reported_correlations():
    value, _ = composite_fidelity(0.942, 0.609, 0.690)
    assert value == pytest.approx(0.79575)
    _, err = composite_fidelity(0.942, 0.609, 0.690, (0.01, 0.02, 0.02))
    assert err == pytest.approx(0.5 * math.sqrt(1e-4 + 8e-4 / 4))


@pytest.mark.parametrize("engine", [Engine.EXACT, Engine.MONTECARLO])
def test_ideal_pair_passes_verification(engine):
    result = run_entanglement_verification(
        NoiseParams.ideal(), trials=3000, seed=4, engine=engine
    )
    for key in ("F_ZZ", "V_XX", "V_YY", "F"):
        assert result.metrics[key][0] == pytest.approx(1.0, abs=1e-9)


def test_engine_names():
    assert Engine.parse("mc") == Engine.MONTECARLO
    assert Engine.parse(" EXACT ") == Engine.EXACT
    with pytest.raises(InvalidParameter):
        Engine.parse("analytic")


def test_coincidence_record_validation():
    assert CoincidenceRecord(0, True, 3, 1, "x").key == (3, 1, "x")
    with pytest.raises(InvalidParameter):
        CoincidenceRecord(0, True, 5)
    with pytest.raises(InvalidParameter):
        CoincidenceRecord(0, False, 1)


def test_target_basis():
    assert target_basis(NAMED_TARGETS["H"]) == Basis.Z
    assert target_basis(NAMED_TARGETS["D+"]) == Basis.X
    assert target_basis(NAMED_TARGETS["sigma+"]) == Basis.Y


def test_parallel_runs_are_reproducible():
    noise = NoiseParams.ideal(source=SourceParams(init_error=0.2))
    runs = [
        run_transfer(NAMED_TARGETS["H"], noise, trials=3000, seed=9, workers=2)
        for _ in range(2)
    ]
    assert runs[0].counts == runs[1].counts
    assert runs[0].trials == 3000


def test_ideal_fringe_peaks_at_zero_phase():
    noise = NoiseParams.ideal()
    assert fringe_coherence(noise) == pytest.approx(1.0)
    (point,) = run_fringe(noise, rf_phases=[0.0], engine=Engine.EXACT)
    assert point.probability == pytest.approx(0.15, rel=1e-6)


def test_monte_carlo_fringe_point():
    (point,) = run_fringe(NoiseParams.ideal(), rf_phases=[0.0], trials=20_000, seed=5)
    assert point.probability == pytest.approx(0.15, abs=5 * point.stderr)
    assert point.trials == 20_000


@pytest.mark.parametrize("seed", range(10))
def test_engines_agree_on_random_configurations(seed):
    draw = np.random.default_rng(seed)
    noise = NoiseParams(
        source=SourceParams(
            init_error=draw.uniform(0, 0.1), reexcitation_weight=draw.uniform(0, 0.3)
        ),
        spin=SpinParams(
            t2_star_ns=draw.uniform(1.0, 3.0), readout_fidelity=draw.uniform(0.9, 1.0)
        ),
        ghz_misassignment=draw.uniform(0, 0.2),
        spin_analysis_delay_ns=draw.uniform(0, 1.0),
        loss_stages=[],
    )
    target = TargetState.random(draw)
    exact = run_transfer(target, noise, engine=Engine.EXACT)
    mc = run_transfer(target, noise, trials=8000, seed=seed)
    assert mc.fidelity == pytest.approx(exact.fidelity, abs=4 * mc.stderr + 1e-3)


@pytest.mark.parametrize("sample_loss", [False, True])
def test_monte_carlo_outcomes_are_uniform(calibrated_noise, named_target, sample_loss):
    _, target = named_target
    noise = calibrated_noise.model_copy(
        update={"loss_stages": [("detection", 0.25)], "sample_herald_loss": sample_loss}
    )
    result = run_transfer(target, noise, trials=16_000, seed=11, engine=Engine.MONTECARLO)
    n = result.heralded
    assert n == sum(result.counts.values())
    sigma = math.sqrt(0.25 * 0.75 / n)
    for outcome in GhzOutcome:
        hits = sum(c for (d, _, _), c in result.counts.items() if d == outcome.detector)
        assert hits / n == pytest.approx(0.25, abs=4 * sigma)


@pytest.mark.parametrize("name", ["D+", "sigma+"])
def test_transfer_fidelity_falls_with_reexcitation(name):
    fids = [
        run_transfer(
            NAMED_TARGETS[name],
            NoiseParams.ideal(source=SourceParams(reexcitation_weight=w)),
            engine=Engine.EXACT,
        ).fidelity
        for w in np.linspace(0.0, 1.0, 6)
    ]
    assert np.all(np.diff(fids) < 0)


def test_monte_carlo_collects_the_requested_heralds():
    noise = NoiseParams.ideal(loss_stages=[("detection", 0.02)], sample_herald_loss=True)
    first = run_transfer(NAMED_TARGETS["D+"], noise, trials=1000, seed=5, min_heralds=100)
    again = run_transfer(NAMED_TARGETS["D+"], noise, trials=1000, seed=5, min_heralds=100)
    assert first.heralded >= 100
    assert first.trials % 1000 == 0
    assert first.counts == again.counts
    assert first.success_rate == pytest.approx(0.02, abs=5 * math.sqrt(0.02 / first.trials))
    with pytest.raises(InvalidParameter):
        run_transfer(NAMED_TARGETS["D+"], noise, trials=1000, min_heralds=0)
