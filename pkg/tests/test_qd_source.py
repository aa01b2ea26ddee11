import numpy as np
import pytest
from pydantic import ValidationError

from qd_source import (
    SPIN_FREQ,
    ReexcitationModel,
    SourceParams,
    crossed_polarizer_projection,
    generate_entangled_pair,
    ideal_entangled_state,
    reexcitation_weight_for_penalty,
    separable_pair,
)
from state_core import DofLabel, LabeledState, apply, fidelity


def test_default_source_emits_the_ideal_pair():
    pair = generate_entangled_pair(SourceParams())
    assert pair.labels == SPIN_FREQ
    assert pair.allclose(ideal_entangled_state())


@pytest.mark.parametrize("eps", [0.0, 0.03, 0.2])
def test_init_error_costs_its_weight(eps):
    pair = generate_entangled_pair(SourceParams(init_error=eps))
    assert fidelity(pair, ideal_entangled_state()) == pytest.approx(1 - eps)


@pytest.mark.parametrize(
    "model, slope", [(ReexcitationModel.DEPHASE, 0.5), (ReexcitationModel.DEPOLARIZE, 0.75)]
)
def test_reexcitation_penalty(model, slope):
    w = 0.136
    pair = generate_entangled_pair(SourceParams(reexcitation_weight=w, reexcitation_model=model))
    assert fidelity(pair, ideal_entangled_state()) == pytest.approx(1 - slope * w)
    assert pair.trace == pytest.approx(1.0)


def test_weight_for_reported_penalty():
    assert reexcitation_weight_for_penalty(0.068) == pytest.approx(0.136)
    assert reexcitation_weight_for_penalty(
        0.068, ReexcitationModel.DEPOLARIZE
    ) == pytest.approx(0.068 / 0.75)
    assert reexcitation_weight_for_penalty(0.9) == 1.0


def test_depolarizing_admixture_keeps_the_spin_marginal():
    pair = generate_entangled_pair(
        SourceParams(reexcitation_weight=0.5, reexcitation_model=ReexcitationModel.DEPOLARIZE)
    )
    assert np.allclose(pair.marginal([DofLabel.SPIN]).matrix, np.eye(2) / 2)


def test_separable_pair_has_no_coherence():
    rho = separable_pair().matrix
    assert rho[0, 0].real == pytest.approx(0.5)
    assert rho[3, 3].real == pytest.approx(0.5)
    assert abs(rho[0, 3]) == pytest.approx(0.0)


def test_source_params_ranges():
    with pytest.raises(ValidationError):
        SourceParams(init_error=1.5)
    with pytest.raises(ValidationError):
        SourceParams(zeeman_splitting_ghz=0.0)


def test_crossed_polarizers_pass_half_of_h():
    h = LabeledState.basis({DofLabel.POLARIZATION: 0})
    assert apply(h, crossed_polarizer_projection()).trace == pytest.approx(0.5)


@pytest.mark.parametrize("model", list(ReexcitationModel))
def test_pair_fidelity_falls_monotonically_with_reexcitation(model):
    grid = np.linspace(0.0, 1.0, 11)
    fids = [
        fidelity(
            generate_entangled_pair(
                SourceParams(reexcitation_weight=w, reexcitation_model=model)
            ),
            ideal_entangled_state(),
        )
        for w in grid
    ]
    assert np.all(np.diff(fids) < 0)


@pytest.mark.parametrize("w", [0.0, 0.136])
def test_pair_fidelity_falls_monotonically_with_init_error(w):
    grid = np.linspace(0.0, 0.5, 11)
    fids = [
        fidelity(
            generate_entangled_pair(SourceParams(init_error=eps, reexcitation_weight=w)),
            ideal_entangled_state(),
        )
        for eps in grid
    ]
    assert np.all(np.diff(fids) < 0)
