import numpy as np
import pytest
from pydantic import ValidationError

from errors import InvalidParameter, LabelMismatch
from freq_measure import (
    FREQUENCY_SELECTION_EFFICIENCY,
    EomSettings,
    calibrate_phase_offset,
    detect_frequency,
    measure_frequency_basis,
    measurement_phase,
    modulation_depth_for_efficiency,
    rf_phase_for_theta,
    settings_for_outcome,
    sideband_efficiency,
)
from qd_source import ideal_entangled_state
from state_core import Basis, DofLabel, LabeledState

F = DofLabel.FREQUENCY


def test_default_drive_reaches_the_reported_efficiency():
    e = EomSettings()
    assert e.efficiency == pytest.approx(FREQUENCY_SELECTION_EFFICIENCY, rel=1e-9)


@pytest.mark.parametrize("target", [0.05, 0.2, 0.3])
def test_depth_for_efficiency_inverts_the_bessel_power(target):
    beta = modulation_depth_for_efficiency(target)
    assert sideband_efficiency(beta) == pytest.approx(target, rel=1e-9)


def test_unreachable_efficiency_is_rejected():
    with pytest.raises(InvalidParameter):
        modulation_depth_for_efficiency(0.5)
    with pytest.raises(InvalidParameter):
        modulation_depth_for_efficiency(0.0)


def test_phase_slope_must_be_two():
    with pytest.raises(ValidationError):
        EomSettings(phase_slope=3)


@pytest.mark.parametrize("theta", [0.0, 0.7, np.pi, 5.0])
def test_rf_phase_for_theta_is_the_inverse(theta):
    e = EomSettings(phase_offset=0.4, phase_slope=-2)
    e = e.model_copy(update={"rf_phase": rf_phase_for_theta(theta, e)})
    assert measurement_phase(e) == pytest.approx(theta)


def test_bins_in_the_z_and_x_bases():
    red = LabeledState.basis({F: 0})
    assert measure_frequency_basis(red, Basis.Z) == pytest.approx((1.0, 0.0))
    assert measure_frequency_basis(red, Basis.X) == pytest.approx((0.5, 0.5))


@pytest.mark.parametrize(
    "amplitudes, basis", [([1, 1], Basis.X), ([1, -1], Basis.X), ([1, 1j], Basis.Y)]
)
def test_superpositions_are_resolved(amplitudes, basis):
    state = LabeledState.pure((F,), amplitudes)
    p0, p1 = measure_frequency_basis(state, basis)
    expected = 0 if amplitudes[1] in (1, 1j) else 1
    assert (p0, p1)[expected] == pytest.approx(1.0)


def test_detection_scales_by_the_sideband_efficiency():
    plus = LabeledState.pure((F,), [1, 1])
    detected = detect_frequency(plus, EomSettings())
    assert detected.trace == pytest.approx(FREQUENCY_SELECTION_EFFICIENCY, rel=1e-9)


def test_measurement_needs_a_frequency_label():
    with pytest.raises(LabelMismatch):
        measure_frequency_basis(LabeledState.basis({DofLabel.SPIN: 0}), Basis.X)


def test_phase_offset_calibrates_to_zero_on_the_ideal_pair():
    offset = calibrate_phase_offset(ideal_entangled_state())
    assert min(offset, 2 * np.pi - offset) < 1e-3


@pytest.mark.parametrize("basis", [Basis.X, Basis.Y])
def test_sideband_efficiency_drops_out_after_renormalization(rng, basis):
    low = EomSettings(modulation_depth=modulation_depth_for_efficiency(0.1))
    for _ in range(20):
        amps = rng.normal(size=4) + 1j * rng.normal(size=4)
        state = LabeledState.pure((DofLabel.SPIN, F), amps)
        lossless = np.array(measure_frequency_basis(state, basis))
        assert lossless.sum() == pytest.approx(1.0)
        assert np.allclose(measure_frequency_basis(state, basis, low), lossless, atol=1e-12)

        for base in (EomSettings(), low):
            clicks = np.array(
                [
                    detect_frequency(state, settings_for_outcome(basis, k, base)).trace
                    for k in (0, 1)
                ]
            )
            assert clicks.sum() == pytest.approx(base.efficiency, rel=1e-9)
            assert np.allclose(clicks / clicks.sum(), lossless, atol=1e-12)
