"""
Frequency-qubit measurement with a phase-locked EOM and an etalon.

Driving the p-EOM at half the bin separation overlaps the blue sideband of
|omega_red> with the red sideband of |omega_blue>. The etalon keeps only that
overlapped bin, whose intensity follows the interference term, so the RF phase
selects the measured superposition (|red> + exp(i theta)|blue>)/sqrt(2).
The other peaks are absorbed as an efficiency J_n(beta)^2.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator
from scipy.optimize import brentq, minimize_scalar
from scipy.special import jnp_zeros, jv

from errors import InvalidParameter, LabelMismatch
from state_core import (
    Basis,
    DofLabel,
    LabeledState,
    QuantumChannel,
    apply,
    basis_vector,
)

logger = logging.getLogger(__name__)

FREQUENCY_SELECTION_EFFICIENCY = 0.3


def sideband_efficiency(modulation_depth: float, order: int = 1) -> float:
    """Power fraction J_n(beta)^2 left in the overlapped sideband."""
    return float(jv(order, modulation_depth) ** 2)


def modulation_depth_for_efficiency(target: float, order: int = 1) -> float:
    """
    Modulation index giving J_n(beta)^2 = target on the rising branch.

    Raises:
        InvalidParameter: if the target exceeds the first maximum of J_n^2.
    """
    peak = float(jnp_zeros(order, 1)[0])
    best = sideband_efficiency(peak, order)
    if not 0 < target <= best:
        raise InvalidParameter(
            f"Sideband efficiency {target} is unreachable at order {order} "
            f"(maximum {best:.4f})"
        )
    if np.isclose(target, best):
        return peak
    return float(brentq(lambda b: sideband_efficiency(b, order) - target, 1e-9, peak))


class EomSettings(BaseModel):
    """Drive settings of the phase-locked EOM."""

    modulation_freq_ghz: float = Field(default=9.0, gt=0.0)
    modulation_depth: float = Field(
        default_factory=lambda: modulation_depth_for_efficiency(
            FREQUENCY_SELECTION_EFFICIENCY
        ),
        ge=0.0,
    )
    rf_phase: float = 0.0
    phase_offset: float = 0.0
    sideband_order: int = Field(default=1, ge=1)
    phase_slope: int = 2

    @field_validator("phase_slope")
    @classmethod
    def _slope_sign(cls, value: int) -> int:
        if value not in (2, -2):
            raise ValueError("phase_slope must be +2 or -2")
        return value

    @property
    def efficiency(self) -> float:
        return sideband_efficiency(self.modulation_depth, self.sideband_order)


def measurement_phase(e: EomSettings) -> float:
    """theta(phi) = s * phi + theta_0."""
    return e.phase_slope * e.rf_phase + e.phase_offset


def rf_phase_for_theta(theta: float, e: EomSettings) -> float:
    """RF phase that realizes the measurement phase `theta`."""
    return (theta - e.phase_offset) / e.phase_slope


def frequency_projector(e: EomSettings) -> Tuple[QuantumChannel, float]:
    """
    Projector selected by the EOM drive and its detection efficiency.

    Returns:
        (projector onto (|red> + exp(i theta)|blue>)/sqrt(2), J_n(beta)^2)
    """
    theta = measurement_phase(e)
    channel = QuantumChannel.projector_onto(
        (DofLabel.FREQUENCY,), [1.0, np.exp(1j * theta)], name="p_eom"
    )
    return channel, e.efficiency


def detect_frequency(state: LabeledState, e: EomSettings) -> LabeledState:
    """Post-detection state; the efficiency only scales its trace."""
    channel, efficiency = frequency_projector(e)
    projected = apply(state, channel)
    return LabeledState(projected.labels, projected.matrix * efficiency)


def settings_for_outcome(
    basis: Basis, outcome: int, base: Optional[EomSettings] = None
) -> EomSettings:
    """EOM drive that projects onto outcome 0/1 of the X or Y basis."""
    base = base or EomSettings()
    theta = {Basis.X: 0.0, Basis.Y: np.pi / 2}[Basis(basis)] + np.pi * outcome
    return base.model_copy(update={"rf_phase": rf_phase_for_theta(theta, base)})


def basis_projector(
    basis: Basis, outcome: int, base: Optional[EomSettings] = None
) -> QuantumChannel:
    """Frequency projector for one outcome of the Z (bins), X or Y basis."""
    basis = Basis(basis)
    if basis == Basis.Z:
        return QuantumChannel.projector_onto(
            (DofLabel.FREQUENCY,), basis_vector(Basis.Z, outcome), name="bin"
        )
    channel, _ = frequency_projector(settings_for_outcome(basis, outcome, base))
    return channel


def measure_frequency_basis(
    state: LabeledState, basis: Basis, base: Optional[EomSettings] = None
) -> Tuple[float, float]:
    """
    Outcome probabilities of a frequency-basis measurement.

    Returns:
        (p0, p1), summing to the trace of the state.

    Raises:
        LabelMismatch: if the state has no Frequency label.
    """
    if DofLabel.FREQUENCY not in state.labels:
        raise LabelMismatch("measure_frequency_basis needs a Frequency label")
    return tuple(
        apply(state, basis_projector(basis, outcome, base)).trace for outcome in (0, 1)
    )


def calibrate_phase_offset(
    state: LabeledState, e: Optional[EomSettings] = None, grid: int = 360
) -> float:
    """
    Phase offset theta_0 that maximizes the fringe at zero RF phase.

    The fringe is the joint probability of the spin outcome
    (|down> - |up>)/sqrt(2) and a frequency click, evaluated on `state`
    (normally the ideal resource).
    """
    e = e or EomSettings()
    spin_minus = QuantumChannel.projector_onto(
        (DofLabel.SPIN,), basis_vector(Basis.X, 1), name="spin_minus"
    )
    conditioned = apply(state, spin_minus)

    def fringe(offset: float) -> float:
        settings = e.model_copy(update={"rf_phase": 0.0, "phase_offset": offset})
        channel, _ = frequency_projector(settings)
        return apply(conditioned, channel).trace

    offsets = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    start = offsets[int(np.argmax([fringe(o) for o in offsets]))]
    step = 2 * np.pi / grid
    result = minimize_scalar(
        lambda o: -fringe(o), bounds=(start - step, start + step), method="bounded"
    )
    offset = float(np.mod(result.x, 2 * np.pi))
    logger.info("Calibrated EOM phase offset %.6f rad", offset)
    return offset
