"""
Electron spin dynamics: Larmor precession, optical rotation pulses,
quasi-static Overhauser dephasing (T2*), echo-limited decoherence (T2)
and fluorescence readout.

Times are in ns and frequencies in GHz, so 2*pi*f*t is a phase in radians.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from pydantic import BaseModel, Field, model_validator

from errors import InvalidParameter, LabelMismatch, UnsortedSequence
from state_core import (
    ALGEBRA_TOL,
    PAULI,
    Basis,
    DofLabel,
    LabeledState,
    QuantumChannel,
    apply,
)

logger = logging.getLogger(__name__)

RandomSource = Union[None, int, np.random.Generator, np.random.SeedSequence]

DEFAULT_QUADRATURE_NODES = 64


class SpinParams(BaseModel):
    """Coherence and control parameters of the quantum-dot spin."""

    t2_star_ns: float = Field(default=1.7, gt=0.0)
    t2_echo_us: float = Field(default=2.7, gt=0.0)
    larmor_freq_ghz: float = Field(default=18.0, ge=0.0)
    readout_fidelity: float = Field(default=1.0, ge=0.0, le=1.0)
    rotation_error: float = Field(
        default=0.0, ge=-1.0, le=1.0, description="Relative pulse-area error"
    )

    @model_validator(mode="after")
    def _echo_outlasts_dephasing(self) -> "SpinParams":
        star, echo = self.t2_star_ns, self.t2_echo_us * 1e3
        if math.isinf(echo):
            return self
        if math.isinf(star) or echo <= star:
            raise ValueError(
                f"t2_echo ({echo} ns) must exceed t2_star ({star} ns); "
                "set t2_echo_us = inf to disable echo-limited decoherence"
            )
        return self

    @property
    def detuning_sigma_ghz(self) -> float:
        """Width of the Overhauser shift distribution."""
        if math.isinf(self.t2_star_ns):
            return 0.0
        return math.sqrt(2.0) / (2 * math.pi * self.t2_star_ns)

    def coherence_after(self, span_ns: float) -> float:
        """Echo-limited envelope exp(-T / T2)."""
        if math.isinf(self.t2_echo_us):
            return 1.0
        return math.exp(-span_ns / (self.t2_echo_us * 1e3))


@dataclass(frozen=True)
class PulseEvent:
    """Instantaneous rotation by `angle` about the Bloch unit vector `axis`."""

    time: float
    axis: Tuple[float, float, float]
    angle: float

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3 or abs(np.linalg.norm(axis) - 1) > ALGEBRA_TOL:
            raise InvalidParameter(f"Pulse axis {self.axis} is not a unit vector")
        if self.time < 0:
            raise InvalidParameter(f"Pulse time {self.time} ns is negative")
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class PulseSequence:
    """Time-ordered pulses; free precession fills the gaps up to `total_span`."""

    events: Tuple[PulseEvent, ...] = field(default_factory=tuple)
    total_span: float = 0.0

    def __post_init__(self):
        events = tuple(self.events)
        times = [e.time for e in events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise UnsortedSequence(f"Pulse times {times} are not non-decreasing")
        if times and self.total_span < times[-1]:
            raise InvalidParameter(
                f"total_span {self.total_span} ns ends before the last pulse at {times[-1]} ns"
            )
        object.__setattr__(self, "events", events)

    def then(self, other: "PulseSequence") -> "PulseSequence":
        """Concatenate `other` after this sequence's span."""
        shifted = tuple(
            PulseEvent(e.time + self.total_span, e.axis, e.angle) for e in other.events
        )
        return PulseSequence(self.events + shifted, self.total_span + other.total_span)


# ----------------------------------------------------------------------
# Sequence builders
# ----------------------------------------------------------------------

X_AXIS = (1.0, 0.0, 0.0)


def _equatorial(phase: float) -> Tuple[float, float, float]:
    return (math.cos(phase), math.sin(phase), 0.0)


def free_precession(span_ns: float) -> PulseSequence:
    return PulseSequence((), span_ns)


def ramsey_sequence(delay_ns: float, phase: float = 0.0) -> PulseSequence:
    """pi/2 - delay - pi/2, the second pulse about an axis at `phase` from x."""
    return PulseSequence(
        (
            PulseEvent(0.0, X_AXIS, np.pi / 2),
            PulseEvent(delay_ns, _equatorial(phase), np.pi / 2),
        ),
        delay_ns,
    )


def echo_sequence(span_ns: float, phase: float = 0.0) -> PulseSequence:
    """pi/2 - span/2 - pi - span/2 - pi/2."""
    return PulseSequence(
        (
            PulseEvent(0.0, X_AXIS, np.pi / 2),
            PulseEvent(span_ns / 2, X_AXIS, np.pi),
            PulseEvent(span_ns, _equatorial(phase), np.pi / 2),
        ),
        span_ns,
    )


def storage_sequence(span_ns: float = 38.0) -> PulseSequence:
    """Refocusing pi pulse halfway through the photon flight."""
    return PulseSequence((PulseEvent(span_ns / 2, X_AXIS, np.pi),), span_ns)


def basis_rotation(basis: Basis, at_time: float, p: SpinParams) -> List[PulseEvent]:
    """
    Pre-rotation that maps the |1> state of `basis` onto |up>.

    The deterministic Larmor phase accumulated up to `at_time` is folded into
    the pulse axis, so the rotation acts on the rotating-frame state.
    """
    basis = Basis(basis)
    if basis == Basis.Z:
        return []
    base = (0.0, -1.0, 0.0) if basis == Basis.X else X_AXIS
    phi = 2 * math.pi * p.larmor_freq_ghz * at_time
    c, s = math.cos(phi), math.sin(phi)
    axis = (c * base[0] - s * base[1], s * base[0] + c * base[1], 0.0)
    return [PulseEvent(at_time, axis, np.pi / 2)]


def analysis_sequence(basis: Basis, delay_ns: float, p: SpinParams) -> PulseSequence:
    """Free precession for `delay_ns` followed by the basis pre-rotation."""
    return PulseSequence(tuple(basis_rotation(basis, delay_ns, p)), delay_ns)


# ----------------------------------------------------------------------
# Evolution
# ----------------------------------------------------------------------


def rotation_operator(axis: Sequence[float], angle: float) -> np.ndarray:
    """exp(-i angle/2 n.sigma)."""
    nx, ny, nz = axis
    generator = nx * PAULI["X"] + ny * PAULI["Y"] + nz * PAULI["Z"]
    return math.cos(angle / 2) * PAULI["I"] - 1j * math.sin(angle / 2) * generator


def _precess(u: np.ndarray, phases: np.ndarray) -> np.ndarray:
    # Rz(phi) = diag(exp(-i phi/2), exp(i phi/2)) applied to a stack of 2x2
    out = u.copy()
    out[:, 0, :] *= np.exp(-0.5j * phases)[:, None]
    out[:, 1, :] *= np.exp(0.5j * phases)[:, None]
    return out


def _flip(u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = u.copy()
    out[mask, 1, :] *= -1
    return out


def _commutes_with_dephasing(event: PulseEvent, p: SpinParams) -> bool:
    # rotations mapping Z to +-Z: about z, or by a multiple of pi about an equatorial axis
    if abs(abs(event.axis[2]) - 1) < ALGEBRA_TOL:
        return True
    turns = event.angle * (1 + p.rotation_error) / np.pi
    return abs(event.axis[2]) < ALGEBRA_TOL and abs(turns - round(turns)) < ALGEBRA_TOL


def dephasing_points(seq: PulseSequence, p: SpinParams) -> List[Tuple[int, float]]:
    """
    Where the echo-limited phase damping acts, as (event index, flip probability).

    Phase damping exp(-t/T2) over a free interval is a random Z with
    probability (1 - exp(-t/T2))/2. It commutes with precession and with pi
    pulses, so the damping accumulated since the previous point is inserted
    just before each pulse that does not commute with it; index
    len(seq.events) stands for the end of the sequence.
    """
    points, last = [], 0.0
    boundaries = [
        (i, e.time) for i, e in enumerate(seq.events) if not _commutes_with_dephasing(e, p)
    ]
    for index, time in boundaries + [(len(seq.events), seq.total_span)]:
        q = (1 - p.coherence_after(time - last)) / 2
        last = time
        if q > 0:
            points.append((index, q))
    return points


def sequence_unitaries(
    seq: PulseSequence,
    p: SpinParams,
    detunings: Iterable[float],
    flips: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Spin propagators of `seq`, one per detuning.

    Args:
        flips: Optional boolean array of shape (n, len(seq.events) + 1); a
            True entry inserts Z just before that event (last column: at the end).

    Returns:
        Array of shape (len(detunings), 2, 2).
    """
    detunings = np.atleast_1d(np.asarray(detunings, dtype=float))
    omega = 2 * np.pi * (p.larmor_freq_ghz + detunings)
    u = np.broadcast_to(np.eye(2, dtype=complex), (detunings.size, 2, 2)).copy()
    now = 0.0
    for i, event in enumerate(seq.events):
        u = _precess(u, omega * (event.time - now))
        if flips is not None:
            u = _flip(u, flips[:, i])
        u = rotation_operator(event.axis, event.angle * (1 + p.rotation_error)) @ u
        now = event.time
    u = _precess(u, omega * (seq.total_span - now))
    if flips is not None:
        u = _flip(u, flips[:, -1])
    return u


def _require_spin(state: LabeledState, stage: str) -> None:
    if DofLabel.SPIN not in state.labels:
        raise LabelMismatch(f"{stage} needs a state with a Spin label")


def _sequence_channel(
    seq: PulseSequence, p: SpinParams, detunings: np.ndarray, weights: np.ndarray
) -> QuantumChannel:
    """Mixed-unitary channel over detunings and every pattern of dephasing flips."""
    points = dephasing_points(seq, p)
    logger.debug(
        "Sequence channel: %d detunings, %d dephasing points", detunings.size, len(points)
    )
    ops = []
    for pattern in itertools.product((False, True), repeat=len(points)):
        flips = np.zeros((detunings.size, len(seq.events) + 1), dtype=bool)
        weight = 1.0
        for (index, q), flipped in zip(points, pattern):
            flips[:, index] = flipped
            weight *= q if flipped else 1 - q
        us = sequence_unitaries(seq, p, detunings, flips)
        ops.extend(np.sqrt(wi * weight) * ui for wi, ui in zip(weights, us))
    return QuantumChannel.cptp((DofLabel.SPIN,), ops, name="spin_sequence")


def evolve(
    state: LabeledState,
    seq: PulseSequence,
    p: SpinParams,
    detuning_sample: float = 0.0,
) -> LabeledState:
    """
    Run `seq` on the spin for one quasi-static Overhauser shift.

    Free precession at larmor_freq + detuning_sample alternates with the
    pulses; echo-limited phase damping exp(-T/T2) acts during the free
    intervals.

    Raises:
        LabelMismatch: if the state has no Spin label.
    """
    _require_spin(state, "evolve")
    channel = _sequence_channel(seq, p, np.array([float(detuning_sample)]), np.ones(1))
    return apply(state, channel)


def ensemble_channel(
    seq: PulseSequence, p: SpinParams, nodes: int = DEFAULT_QUADRATURE_NODES
) -> QuantumChannel:
    """
    Channel of `seq` averaged over the Overhauser distribution.

    Gauss-Hermite nodes sample the Gaussian detuning; the weights become the
    Kraus probabilities.
    """
    sigma = p.detuning_sigma_ghz
    if sigma == 0.0:
        return _sequence_channel(seq, p, np.zeros(1), np.ones(1))
    x, w = hermegauss(nodes)
    return _sequence_channel(seq, p, sigma * x, w / w.sum())


def evolve_ensemble(
    state: LabeledState,
    seq: PulseSequence,
    p: SpinParams,
    nodes: int = DEFAULT_QUADRATURE_NODES,
) -> LabeledState:
    """Exact ensemble average of `evolve` over the detuning distribution."""
    _require_spin(state, "evolve_ensemble")
    return apply(state, ensemble_channel(seq, p, nodes))


def sample_detuning(
    p: SpinParams, rng: RandomSource = None, size: Optional[int] = None
):
    """
    Quasi-static Overhauser shift(s) in GHz.

    Zero-mean Gaussian with sigma = sqrt(2)/(2 pi T2*), so the ensemble
    Ramsey envelope is exp(-(t/T2*)^2). An integer seed gives a repeatable draw.
    """
    rng = np.random.default_rng(rng)
    sigma = p.detuning_sigma_ghz
    if sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    draw = rng.normal(0.0, sigma, size=size)
    return float(draw) if size is None else draw


def sample_unitaries(
    seq: PulseSequence, p: SpinParams, detunings: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One stochastic realization of `seq` per detuning, dephasing flips drawn from `rng`."""
    detunings = np.atleast_1d(np.asarray(detunings, dtype=float))
    flips = np.zeros((detunings.size, len(seq.events) + 1), dtype=bool)
    for index, q in dephasing_points(seq, p):
        flips[:, index] = rng.random(detunings.size) < q
    return sequence_unitaries(seq, p, detunings, flips)


# ----------------------------------------------------------------------
# Readout
# ----------------------------------------------------------------------


def flip_with_readout(q_up, p: SpinParams):
    """Probability of reporting bit 1 when |up> has population `q_up`."""
    f = p.readout_fidelity
    return f * q_up + (1 - f) * (1 - q_up)


def readout_probability(state: LabeledState, p: SpinParams) -> float:
    """Exact probability that the fluorescence readout reports |up> (bit 1)."""
    _require_spin(state, "readout")
    spin = state.marginal([DofLabel.SPIN]).normalized()
    q_up = float(np.real(spin.matrix[1, 1]))
    return float(flip_with_readout(q_up, p))


def readout(state: LabeledState, p: SpinParams, rng: RandomSource = None) -> int:
    """
    Sample one Z readout: 1 for |up>, flipped with probability 1 - readout_fidelity.

    Raises:
        LabelMismatch: if the state has no Spin label.
    """
    rng = np.random.default_rng(rng)
    return int(rng.random() < readout_probability(state, p))
