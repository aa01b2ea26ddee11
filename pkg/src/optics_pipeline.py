"""
Photon-side apparatus as composable channels.

Bob's interferometer splits the photon on a PBS (H transmitted to path T, V
reflected to path R), filters each path with an etalon locked to one frequency
bin, flips V to H on the R path and finally prepares the target polarization
with identical wave-plate pairs on both paths.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from errors import InvalidParameter, LabelMismatch
from state_core import (
    ALGEBRA_TOL,
    DofLabel,
    LabeledState,
    QuantumChannel,
    apply,
    tensor,
)

logger = logging.getLogger(__name__)

PHOTON_BANDWIDTH_GHZ = 0.7

SPIN_FREQ = (DofLabel.SPIN, DofLabel.FREQUENCY)
FULL_LABELS = (
    DofLabel.SPIN,
    DofLabel.FREQUENCY,
    DofLabel.POLARIZATION,
    DofLabel.PATH,
)


class EtalonModel(str, Enum):
    IDEAL_PROJECTOR = "ideal_projector"
    LORENTZIAN_LEAKAGE = "lorentzian_leakage"


class EtalonSpec(BaseModel):
    """Narrowband filter on one path; `center_ghz` is measured from the bin midpoint."""

    center_ghz: float = 0.0
    fwhm_ghz: float = Field(default=1.0, gt=0.0)
    model: EtalonModel = EtalonModel.IDEAL_PROJECTOR


def default_etalons(
    splitting_ghz: float = 18.0,
    fwhm_ghz: float = 1.0,
    model: EtalonModel = EtalonModel.IDEAL_PROJECTOR,
) -> Tuple[EtalonSpec, EtalonSpec]:
    """Etalons locked on the red bin (path T) and on the blue bin (path R)."""
    return (
        EtalonSpec(center_ghz=-splitting_ghz / 2, fwhm_ghz=fwhm_ghz, model=model),
        EtalonSpec(center_ghz=splitting_ghz / 2, fwhm_ghz=fwhm_ghz, model=model),
    )


class WavePlateKind(str, Enum):
    HALF = "half"
    QUARTER = "quarter"


@dataclass(frozen=True)
class WavePlateSetting:
    """Wave plate with its fast axis at `angle` radians from H."""

    kind: WavePlateKind
    angle: float


@dataclass(frozen=True)
class TargetState:
    """Polarization state alpha|H> + beta|V> to be transferred."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1) > ALGEBRA_TOL:
            raise InvalidParameter(
                f"Target amplitudes must satisfy |alpha|^2 + |beta|^2 = 1 (got {norm:.15g})"
            )

    @classmethod
    def normalized(cls, alpha: complex, beta: complex) -> "TargetState":
        norm = np.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        return cls(complex(alpha / norm), complex(beta / norm))

    @classmethod
    def horizontal(cls) -> "TargetState":
        return cls(1.0, 0.0)

    @classmethod
    def diagonal(cls) -> "TargetState":
        return cls.normalized(1.0, 1.0)

    @classmethod
    def circular(cls) -> "TargetState":
        """|sigma+> = (|H> + i|V>)/sqrt(2)."""
        return cls.normalized(1.0, 1j)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "TargetState":
        vec = rng.normal(size=2) + 1j * rng.normal(size=2)
        return cls.normalized(vec[0], vec[1])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    def polarization_state(self) -> LabeledState:
        return LabeledState.pure((DofLabel.POLARIZATION,), self.vector)

    def spin_state(self) -> LabeledState:
        """alpha|down> + beta|up>, the state the spin should end up in."""
        return LabeledState.pure((DofLabel.SPIN,), self.vector)

    def stokes(self) -> Tuple[float, float, float]:
        a, b = self.alpha, self.beta
        cross = np.conj(a) * b
        return (
            float(abs(a) ** 2 - abs(b) ** 2),
            float(2 * cross.real),
            float(2 * cross.imag),
        )


NAMED_TARGETS = {
    "H": TargetState.horizontal(),
    "D+": TargetState.diagonal(),
    "sigma+": TargetState.circular(),
}


# ----------------------------------------------------------------------
# Jones calculus
# ----------------------------------------------------------------------


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]], dtype=complex)


def jones_matrix(w: WavePlateSetting) -> np.ndarray:
    """Retarder R(-theta) diag(1, exp(-i Gamma)) R(theta)."""
    retardance = np.pi if w.kind == WavePlateKind.HALF else np.pi / 2
    plate = np.diag([1.0, np.exp(-1j * retardance)])
    return _rotation(-w.angle) @ plate @ _rotation(w.angle)


def waveplate_channel(w: WavePlateSetting) -> QuantumChannel:
    """Unitary Jones operator of a wave plate acting on Polarization."""
    return QuantumChannel.unitary(
        (DofLabel.POLARIZATION,), jones_matrix(w), name=f"{w.kind.value}_wave_plate"
    )


def waveplates_for_target(t: TargetState) -> Tuple[float, float]:
    """
    HWP and QWP angles that turn |H> into `t` (up to a global phase).

    The QWP fast axis sits on the major axis of the target ellipse and the HWP
    rotates H to the linear state the QWP converts into that ellipse.

    Returns:
        (half_wave_angle, quarter_wave_angle) in radians.
    """
    s1, s2, s3 = t.stokes()
    orientation = 0.5 * np.arctan2(s2, s1)
    ellipticity = 0.5 * np.arctan2(s3, np.hypot(s1, s2))
    return float((orientation - ellipticity) / 2), float(orientation)


def preparation_unitary(t: TargetState) -> np.ndarray:
    half, quarter = waveplates_for_target(t)
    hwp = jones_matrix(WavePlateSetting(WavePlateKind.HALF, half))
    qwp = jones_matrix(WavePlateSetting(WavePlateKind.QUARTER, quarter))
    return qwp @ hwp


# ----------------------------------------------------------------------
# Beam splitter and etalons
# ----------------------------------------------------------------------


def lorentzian_transmission(detuning_ghz: float, fwhm_ghz: float) -> float:
    """Power transmission 1 / (1 + (2 detuning / fwhm)^2)."""
    return float(1.0 / (1.0 + (2.0 * detuning_ghz / fwhm_ghz) ** 2))


def spectral_efficiency(
    etalon_fwhm_ghz: float, photon_bandwidth_ghz: float = PHOTON_BANDWIDTH_GHZ
) -> float:
    """On-resonance transmission of a Lorentzian photon through a Lorentzian etalon."""
    return etalon_fwhm_ghz / (etalon_fwhm_ghz + photon_bandwidth_ghz)


def _bin_transmission(etalon: EtalonSpec, bin_index: int, splitting_ghz: float) -> float:
    bins = (-splitting_ghz / 2, splitting_ghz / 2)
    if etalon.model == EtalonModel.IDEAL_PROJECTOR:
        nearest = int(np.argmin([abs(b - etalon.center_ghz) for b in bins]))
        return 1.0 if nearest == bin_index else 0.0
    return lorentzian_transmission(bins[bin_index] - etalon.center_ghz, etalon.fwhm_ghz)


def pbs_channel() -> QuantumChannel:
    """Polarizing beam splitter: |V, T> -> |V, R> (H stays on T)."""
    op = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    return QuantumChannel.unitary(
        (DofLabel.POLARIZATION, DofLabel.PATH), op, name="pbs"
    )


def etalon_filter(
    etalon_t: EtalonSpec, etalon_r: EtalonSpec, splitting_ghz: float = 18.0
) -> QuantumChannel:
    """Path-resolved amplitude transmission on (Frequency, Path)."""
    amplitudes = []
    for freq in (0, 1):
        for etalon in (etalon_t, etalon_r):
            amplitudes.append(np.sqrt(_bin_transmission(etalon, freq, splitting_ghz)))
    return QuantumChannel.filter(
        (DofLabel.FREQUENCY, DofLabel.PATH), np.diag(amplitudes), name="etalons"
    )


def _require_labels(state: LabeledState, labels, stage: str) -> None:
    if state.labels != tuple(labels):
        raise LabelMismatch(
            f"{stage} expects labels {[l.value for l in labels]}, got "
            f"{[l.value for l in state.labels]}"
        )


def correlate_dofs(
    state: LabeledState,
    etalon_t: Optional[EtalonSpec] = None,
    etalon_r: Optional[EtalonSpec] = None,
    splitting_ghz: float = 18.0,
) -> LabeledState:
    """
    Correlate frequency, polarization and path of the photon.

    A fresh (|H> + |V>)/sqrt(2) polarization and path T are adjoined, the PBS
    routes V to R and the etalons keep the matching bin on each path. Photons
    rejected by the etalons are a heralding loss carried by the loss budget,
    so the output keeps the trace of the input.

    Args:
        state: State over {Spin, Frequency}.
        etalon_t: Etalon on path T (red bin by default).
        etalon_r: Etalon on path R (blue bin by default).
        splitting_ghz: Bin separation.

    Returns:
        State over {Spin, Frequency, Polarization, Path}.
    """
    _require_labels(state, SPIN_FREQ, "correlate_dofs")
    if etalon_t is None or etalon_r is None:
        default_t, default_r = default_etalons(splitting_ghz)
        etalon_t = etalon_t or default_t
        etalon_r = etalon_r or default_r

    fresh = tensor(
        LabeledState.pure((DofLabel.POLARIZATION,), [1, 1]),
        LabeledState.basis({DofLabel.PATH: 0}),
    )
    routed = apply(tensor(state, fresh), pbs_channel())
    filtered = apply(routed, etalon_filter(etalon_t, etalon_r, splitting_ghz))
    logger.debug("Etalon transmission %.6f", filtered.trace / state.trace)
    return filtered.rescaled(state.trace)


def encode_target(state: LabeledState, t: TargetState) -> LabeledState:
    """
    Disentangle polarization and write the target state into it.

    A HWP at pi/4 on path R maps V to H; identical HWP/QWP pairs on both paths
    then prepare t from |H>.

    Args:
        state: Output of correlate_dofs.
        t: Polarization state to transfer.

    Returns:
        The composite state with polarization in product with the rest.
    """
    _require_labels(state, FULL_LABELS, "encode_target")
    flip = jones_matrix(WavePlateSetting(WavePlateKind.HALF, np.pi / 4))
    on_t = np.diag([1.0, 0.0])
    on_r = np.diag([0.0, 1.0])
    conditional_flip = np.kron(np.eye(2), on_t) + np.kron(flip, on_r)
    state = apply(
        state,
        QuantumChannel.unitary(
            (DofLabel.POLARIZATION, DofLabel.PATH), conditional_flip, name="r_path_hwp"
        ),
    )
    return apply(
        state,
        QuantumChannel.unitary(
            (DofLabel.POLARIZATION,), preparation_unitary(t), name="target_encoding"
        ),
    )


def ideal_composite_state(t: TargetState) -> LabeledState:
    """|psi>_p (x) (|down, red, T> - |up, blue, R>)/sqrt(2), written out directly."""
    rest = LabeledState.pure(
        (DofLabel.SPIN, DofLabel.FREQUENCY, DofLabel.PATH),
        [1, 0, 0, 0, 0, 0, 0, -1],
    )
    return tensor(t.polarization_state(), rest)
