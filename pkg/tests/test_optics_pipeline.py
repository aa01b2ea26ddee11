import numpy as np
import pytest

from errors import InvalidParameter, LabelMismatch
from optics_pipeline import (
    FULL_LABELS,
    NAMED_TARGETS,
    EtalonModel,
    TargetState,
    WavePlateKind,
    WavePlateSetting,
    correlate_dofs,
    default_etalons,
    encode_target,
    ideal_composite_state,
    jones_matrix,
    lorentzian_transmission,
    pbs_channel,
    preparation_unitary,
)
from qd_source import SourceParams, generate_entangled_pair, ideal_entangled_state
from state_core import DofLabel, LabeledState, apply


def test_target_normalization_is_enforced():
    with pytest.raises(InvalidParameter):
        TargetState(1.0, 1.0)
    t = TargetState.normalized(3.0, 4.0j)
    assert abs(t.alpha) ** 2 + abs(t.beta) ** 2 == pytest.approx(1.0)


@pytest.mark.parametrize(
    "name, stokes",
    [("H", (1.0, 0.0, 0.0)), ("D+", (0.0, 1.0, 0.0)), ("sigma+", (0.0, 0.0, 1.0))],
)
def test_named_target_stokes_vectors(name, stokes):
    assert NAMED_TARGETS[name].stokes() == pytest.approx(stokes, abs=1e-12)


def test_half_wave_plate_at_45_degrees_swaps_h_and_v():
    hwp = jones_matrix(WavePlateSetting(WavePlateKind.HALF, np.pi / 4))
    assert np.allclose(hwp, [[0, 1], [1, 0]])


def test_waveplates_prepare_random_targets(rng):
    for _ in range(50):
        t = TargetState.random(rng)
        prepared = preparation_unitary(t) @ np.array([1, 0])
        assert abs(np.vdot(t.vector, prepared)) == pytest.approx(1.0, abs=1e-10)


def test_pbs_routes_v_to_r():
    v_t = LabeledState.basis({DofLabel.POLARIZATION: 1, DofLabel.PATH: 0})
    routed = apply(v_t, pbs_channel())
    assert routed.allclose(LabeledState.basis({DofLabel.POLARIZATION: 1, DofLabel.PATH: 1}))


def test_composite_state_matches_the_direct_expansion(rng):
    correlated = correlate_dofs(ideal_entangled_state())
    assert correlated.labels == FULL_LABELS
    for t in list(NAMED_TARGETS.values()) + [TargetState.random(rng) for _ in range(5)]:
        composite = encode_target(correlated, t)
        assert composite.allclose(ideal_composite_state(t), atol=1e-10)


@pytest.mark.parametrize("offset", [0.0, 1e-12, 1e-10, 1e-8, -1e-8])
@pytest.mark.parametrize("phase", [1j, -1j])
def test_targets_close_to_the_circular_poles_keep_the_composite_exact(offset, phase):
    t = TargetState.normalized(1.0, phase * (1.0 + offset))
    prepared = preparation_unitary(t) @ np.array([1, 0])
    assert abs(np.vdot(t.vector, prepared)) == pytest.approx(1.0, abs=1e-14)

    correlated = correlate_dofs(ideal_entangled_state())
    assert encode_target(correlated, t).allclose(ideal_composite_state(t), atol=1e-10)


@pytest.mark.parametrize("offset", [1e-12, 1e-8])
def test_targets_close_to_the_linear_poles_keep_the_composite_exact(offset):
    correlated = correlate_dofs(ideal_entangled_state())
    for t in (
        TargetState.normalized(1.0, offset * (1 + 1j)),
        TargetState.normalized(offset * (1 - 1j), 1.0),
    ):
        assert encode_target(correlated, t).allclose(ideal_composite_state(t), atol=1e-10)


def test_correlation_keeps_the_trace_of_noisy_pairs():
    pair = generate_entangled_pair(SourceParams(init_error=0.1, reexcitation_weight=0.2))
    assert correlate_dofs(pair).trace == pytest.approx(1.0)


def test_lorentzian_leakage_lets_some_wrong_bin_through():
    assert lorentzian_transmission(18.0, 1.0) == pytest.approx(1 / 1297)
    etalon_t, etalon_r = default_etalons(fwhm_ghz=1.0, model=EtalonModel.LORENTZIAN_LEAKAGE)
    leaky = correlate_dofs(ideal_entangled_state(), etalon_t, etalon_r)
    ideal = correlate_dofs(ideal_entangled_state())
    assert leaky.is_physical()
    assert not leaky.allclose(ideal, atol=1e-6)


def test_pipeline_stages_check_their_labels():
    with pytest.raises(LabelMismatch):
        correlate_dofs(LabeledState.basis({DofLabel.SPIN: 0}))
    with pytest.raises(LabelMismatch):
        encode_target(ideal_entangled_state(), NAMED_TARGETS["H"])
