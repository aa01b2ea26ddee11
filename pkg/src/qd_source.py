"""
Quantum-dot spin-photon source.

The charged dot forms a Lambda system: the spin ground states |down>, |up>
and the trion |down up Down>. A pi pulse from |down> excites the trion, which
decays either back to |down> emitting a red photon or to |up> emitting a blue
one. Only the resulting two-qubit spin-frequency state is modeled; the trion
never appears in a stored state.
"""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from state_core import (
    DofLabel,
    LabeledState,
    QuantumChannel,
    apply,
    full_dephasing,
    partial_trace,
    tensor,
)

logger = logging.getLogger(__name__)

SPIN_FREQ = (DofLabel.SPIN, DofLabel.FREQUENCY)


class ReexcitationModel(str, Enum):
    """How the re-excitation error damages the frequency qubit."""

    DEPHASE = "dephase"  # frequency coherence destroyed, ZZ correlation kept
    DEPOLARIZE = "depolarize"  # frequency replaced by I/2, spin marginal kept


class SourceParams(BaseModel):
    """Imperfections of the spin-photon source."""

    init_error: float = Field(
        default=0.0, ge=0.0, le=1.0, description="P(spin starts in |up>)"
    )
    reexcitation_weight: float = Field(
        default=0.0, ge=0.0, le=1.0, description="Weight of the re-excitation admixture"
    )
    reexcitation_model: ReexcitationModel = ReexcitationModel.DEPHASE
    zeeman_splitting_ghz: float = Field(
        default=18.0, gt=0.0, description="Separation of the two frequency bins"
    )
    excitation_pulse_width_ps: float = Field(
        default=400.0, gt=0.0, description="Pi-pulse width (metadata only)"
    )


def ideal_entangled_state() -> LabeledState:
    """(|down>|red> - |up>|blue>)/sqrt(2)."""
    return LabeledState.pure(SPIN_FREQ, [1, 0, 0, -1])


def flipped_entangled_state() -> LabeledState:
    """Branch emitted when the spin starts in |up>: (|up>|red> - |down>|blue>)/sqrt(2)."""
    return LabeledState.pure(SPIN_FREQ, [0, -1, 1, 0])


def separable_pair() -> LabeledState:
    """Classically correlated mixture with the ZZ statistics of the ideal pair."""
    return apply(ideal_entangled_state(), full_dephasing(DofLabel.FREQUENCY))


def reexcitation_weight_for_penalty(
    penalty: float, model: ReexcitationModel = ReexcitationModel.DEPHASE
) -> float:
    """
    Invert the fidelity drop of the re-excitation admixture.

    Args:
        penalty: Drop in fidelity to the ideal pair (0.068 reported).
        model: Admixture model; dephasing costs w/2, depolarizing 3w/4.

    Returns:
        Admixture weight w, clipped to [0, 1].
    """
    slope = 0.5 if model == ReexcitationModel.DEPHASE else 0.75
    return float(np.clip(penalty / slope, 0.0, 1.0))


def _reexcitation_admixture(
    state: LabeledState, model: ReexcitationModel
) -> LabeledState:
    if model == ReexcitationModel.DEPHASE:
        return apply(state, full_dephasing(DofLabel.FREQUENCY))
    spin = partial_trace(state, {DofLabel.FREQUENCY})
    return tensor(spin, LabeledState.maximally_mixed([DofLabel.FREQUENCY]))


def generate_entangled_pair(p: SourceParams) -> LabeledState:
    """
    Spin-frequency state after initialization, pi pulse and decay.

    The initialization error mixes in the branch emitted from |up>; the
    re-excitation error mixes in a frequency-damaged copy of the state.

    Args:
        p: Source parameters.

    Returns:
        State over {Spin, Frequency} with unit trace.
    """
    eps = p.init_error
    rho = (1 - eps) * ideal_entangled_state().matrix + eps * flipped_entangled_state().matrix
    state = LabeledState(SPIN_FREQ, rho)

    w = p.reexcitation_weight
    if w > 0:
        damaged = _reexcitation_admixture(state, p.reexcitation_model)
        state = LabeledState(SPIN_FREQ, (1 - w) * state.matrix + w * damaged.matrix)

    logger.debug(
        "Generated pair (init_error=%.4f, reexcitation=%.4f, model=%s)",
        eps,
        w,
        p.reexcitation_model.value,
    )
    return state


def crossed_polarizer_projection() -> QuantumChannel:
    """Projector onto (|H> - i|V>)/sqrt(2) set by the crossed polarizers."""
    return QuantumChannel.projector_onto(
        (DofLabel.POLARIZATION,), [1, -1j], name="crossed_polarizers"
    )
