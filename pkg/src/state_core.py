"""Exact linear algebra over labeled composite two-level systems.

Every degree of freedom of the simulation is a qubit carrying a fixed label.
Basis conventions (index 0 first):

    Spin          |down> = 0, |up> = 1
    Frequency     |omega_red> = 0, |omega_blue> = 1
    Polarization  |H> = 0, |V> = 1
    Path          |T> = 0, |R> = 1

States are stored as density matrices in the canonical label order
(Spin, Frequency, Polarization, Path). A trace below one is the probability
that the state was heralded; detectors renormalize.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import (
    DuplicateLabel,
    EmptyRemainder,
    InvalidChannel,
    LabelMismatch,
    NonPureTarget,
    SimulationError,
    UnknownLabel,
)

ALGEBRA_TOL = 1e-12
EIGEN_TOL = 1e-10


class DofLabel(str, Enum):
    """Named two-level degrees of freedom."""

    SPIN = "spin"
    FREQUENCY = "frequency"
    POLARIZATION = "polarization"
    PATH = "path"


CANONICAL_ORDER: Tuple[DofLabel, ...] = (
    DofLabel.SPIN,
    DofLabel.FREQUENCY,
    DofLabel.POLARIZATION,
    DofLabel.PATH,
)

PHOTON_LABELS = frozenset(
    {DofLabel.FREQUENCY, DofLabel.POLARIZATION, DofLabel.PATH}
)

PAULI: Dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _canonical(labels: Iterable[DofLabel]) -> Tuple[DofLabel, ...]:
    present = set(labels)
    return tuple(label for label in CANONICAL_ORDER if label in present)


def _check_unique(labels: Sequence[DofLabel]) -> None:
    seen = set()
    for label in labels:
        if label in seen:
            raise DuplicateLabel(f"Label {label.value} appears more than once")
        seen.add(label)


def _permute(
    matrix: np.ndarray,
    order_from: Sequence[DofLabel],
    order_to: Sequence[DofLabel],
) -> np.ndarray:
    """Reorder the tensor factors of a density matrix."""
    if tuple(order_from) == tuple(order_to):
        return matrix
    k = len(order_from)
    perm = [list(order_from).index(label) for label in order_to]
    tensor = matrix.reshape((2,) * (2 * k))
    tensor = tensor.transpose(perm + [k + p for p in perm])
    return tensor.reshape(2**k, 2**k)


@dataclass(frozen=True, eq=False)
class LabeledState:
    """
    Density matrix over an ordered set of labeled qubits.

    The constructor accepts labels in any order and stores the matrix in the
    canonical order. The stored matrix is read-only.
    """

    labels: Tuple[DofLabel, ...]
    matrix: np.ndarray

    def __post_init__(self):
        labels = tuple(DofLabel(label) for label in self.labels)
        _check_unique(labels)
        if not labels:
            raise EmptyRemainder("A state needs at least one label")

        matrix = np.array(self.matrix, dtype=complex)
        dim = 2 ** len(labels)
        if matrix.shape != (dim, dim):
            raise LabelMismatch(
                f"Matrix shape {matrix.shape} does not match {len(labels)} labels"
            )

        canonical = _canonical(labels)
        matrix = _permute(matrix, labels, canonical)
        matrix.setflags(write=False)
        object.__setattr__(self, "labels", canonical)
        object.__setattr__(self, "matrix", matrix)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def pure(
        cls, labels: Sequence[DofLabel], amplitudes: Sequence[complex]
    ) -> "LabeledState":
        """
        Build |psi><psi| from amplitudes listed in the order of `labels`.

        Args:
            labels: Degrees of freedom, first label is the most significant bit.
            amplitudes: 2**len(labels) complex amplitudes (normalized here).

        Returns:
            Pure state with unit trace.
        """
        vec = np.asarray(amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise SimulationError("Cannot build a pure state from a zero vector")
        vec = vec / norm
        return cls(tuple(labels), np.outer(vec, vec.conj()))

    @classmethod
    def basis(cls, bits: Mapping[DofLabel, int]) -> "LabeledState":
        """Product basis state, e.g. {SPIN: 0, POLARIZATION: 1} = |down, V>."""
        labels = tuple(bits)
        index = 0
        for label in labels:
            index = 2 * index + int(bits[label])
        vec = np.zeros(2 ** len(labels), dtype=complex)
        vec[index] = 1.0
        return cls.pure(labels, vec)

    @classmethod
    def maximally_mixed(cls, labels: Sequence[DofLabel]) -> "LabeledState":
        dim = 2 ** len(labels)
        return cls(tuple(labels), np.eye(dim, dtype=complex) / dim)

    # ------------------------------------------------------------------
    # Properties
    # ------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def norm(self) -> float:
        """Heralding weight of the state (its trace)."""
        return self.trace

    def purity(self) -> float:
        """Tr(rho^2) of the normalized state."""
        rho = self.matrix / self.trace
        return float(np.real(np.trace(rho @ rho)))

    def is_physical(self) -> bool:
        """Hermitian, positive semidefinite and trace in (0, 1]."""
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=ALGEBRA_TOL, rtol=0):
            return False
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -EIGEN_TOL:
            return False
        return 0 < self.trace <= 1 + ALGEBRA_TOL

    # ------------------------------------------------------------------
    # Derived states
    # ------------------------------------------------------------------

    def rescaled(self, trace: float) -> "LabeledState":
        """Same state with its trace set to `trace`."""
        return LabeledState(self.labels, self.matrix * (trace / self.trace))

    def normalized(self) -> "LabeledState":
        return self.rescaled(1.0)

    def reordered(self, order: Sequence[DofLabel]) -> np.ndarray:
        """Matrix with tensor factors in `order` (a permutation of the labels)."""
        if set(order) != set(self.labels) or len(order) != len(self.labels):
            raise LabelMismatch(
                f"Order {[l.value for l in order]} is not a permutation of "
                f"{[l.value for l in self.labels]}"
            )
        return _permute(self.matrix, self.labels, tuple(order))

    def marginal(self, keep: Iterable[DofLabel]) -> "LabeledState":
        """Reduced state on `keep`."""
        keep = set(keep)
        discard = {label for label in self.labels if label not in keep}
        return partial_trace(self, discard) if discard else self

    def expectation(self, op: np.ndarray, targets: Sequence[DofLabel]) -> complex:
        """Tr(rho O) with O acting on `targets` (unnormalized)."""
        _require_targets(self.labels, targets)
        other = [label for label in self.labels if label not in targets]
        full = np.kron(op, np.eye(2 ** len(other), dtype=complex))
        full = _permute(full, tuple(targets) + tuple(other), self.labels)
        return complex(np.trace(self.matrix @ full))

    def allclose(self, other: "LabeledState", atol: float = ALGEBRA_TOL) -> bool:
        return self.labels == other.labels and np.allclose(
            self.matrix, other.matrix, atol=atol, rtol=0
        )

    def __repr__(self) -> str:
        names = ",".join(label.value for label in self.labels)
        return f"LabeledState([{names}], trace={self.trace:.6g})"


class ChannelKind(str, Enum):
    UNITARY = "unitary"
    CPTP = "cptp"
    PROJECTOR = "projector"
    FILTER = "filter"


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """
    Kraus map on a subset of labels.

    Operators are written in the basis of `targets` in the order given
    (first target is the most significant bit).
    """

    targets: Tuple[DofLabel, ...]
    kraus_ops: Tuple[np.ndarray, ...]
    kind: ChannelKind
    name: str = field(default="")

    def __post_init__(self):
        targets = tuple(DofLabel(t) for t in self.targets)
        _check_unique(targets)
        dim = 2 ** len(targets)
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise InvalidChannel("A channel needs at least one Kraus operator")
        for op in ops:
            if op.shape != (dim, dim):
                raise InvalidChannel(
                    f"Kraus operator shape {op.shape} does not match "
                    f"{len(targets)} target labels"
                )
            op.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "kraus_ops", ops)
        self._validate(dim)

    def _validate(self, dim: int) -> None:
        eye = np.eye(dim)
        ops = self.kraus_ops
        if self.kind in (ChannelKind.UNITARY, ChannelKind.PROJECTOR, ChannelKind.FILTER):
            if len(ops) != 1:
                raise InvalidChannel(f"{self.kind.value} channels take one operator")
        op = ops[0]
        if self.kind == ChannelKind.UNITARY:
            ok = np.allclose(op.conj().T @ op, eye, atol=ALGEBRA_TOL, rtol=0)
        elif self.kind == ChannelKind.CPTP:
            total = sum(k.conj().T @ k for k in ops)
            ok = np.allclose(total, eye, atol=ALGEBRA_TOL, rtol=0)
        elif self.kind == ChannelKind.PROJECTOR:
            ok = np.allclose(op @ op, op, atol=ALGEBRA_TOL, rtol=0) and np.allclose(
                op, op.conj().T, atol=ALGEBRA_TOL, rtol=0
            )
        else:
            ok = np.linalg.eigvalsh(op.conj().T @ op).max() <= 1 + ALGEBRA_TOL
        if not ok:
            raise InvalidChannel(
                f"Operators of channel '{self.name or self.kind.value}' violate "
                f"the {self.kind.value} constraint"
            )

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def unitary(cls, targets, op, name: str = "") -> "QuantumChannel":
        return cls(tuple(targets), (op,), ChannelKind.UNITARY, name)

    @classmethod
    def cptp(cls, targets, ops, name: str = "") -> "QuantumChannel":
        return cls(tuple(targets), tuple(ops), ChannelKind.CPTP, name)

    @classmethod
    def projector(cls, targets, op, name: str = "") -> "QuantumChannel":
        return cls(tuple(targets), (op,), ChannelKind.PROJECTOR, name)

    @classmethod
    def projector_onto(cls, targets, vector, name: str = "") -> "QuantumChannel":
        """Rank-1 projector onto `vector` (normalized here)."""
        vec = np.asarray(vector, dtype=complex).ravel()
        vec = vec / np.linalg.norm(vec)
        return cls.projector(targets, np.outer(vec, vec.conj()), name)

    @classmethod
    def filter(cls, targets, op, name: str = "") -> "QuantumChannel":
        return cls(tuple(targets), (op,), ChannelKind.FILTER, name)

    @property
    def operator(self) -> np.ndarray:
        """The single operator of a unitary, projector or filter channel."""
        if len(self.kraus_ops) != 1:
            raise InvalidChannel("CPTP channels have no single operator")
        return self.kraus_ops[0]


def _require_targets(labels: Sequence[DofLabel], targets: Iterable[DofLabel]) -> None:
    missing = [t.value for t in targets if t not in labels]
    if missing:
        raise UnknownLabel(
            f"Labels {missing} are not present in state "
            f"{[label.value for label in labels]}"
        )


def _sandwich(
    matrix: np.ndarray, labels: Sequence[DofLabel], op: np.ndarray, targets
) -> np.ndarray:
    """K rho K^dagger with K acting on the `targets` tensor factors."""
    k = len(labels)
    m = len(targets)
    axes = [list(labels).index(t) for t in targets]
    rho = matrix.reshape((2,) * (2 * k))
    kt = op.reshape((2,) * (2 * m))

    out = np.tensordot(kt, rho, axes=(list(range(m, 2 * m)), axes))
    out = np.moveaxis(out, list(range(m)), axes)
    out = np.tensordot(out, kt.conj(), axes=([k + a for a in axes], list(range(m, 2 * m))))
    out = np.moveaxis(out, list(range(2 * k - m, 2 * k)), [k + a for a in axes])
    return out.reshape(2**k, 2**k)


# ----------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------


def tensor(a: LabeledState, b: LabeledState) -> LabeledState:
    """
    Composite state a (x) b.

    Raises:
        DuplicateLabel: if the label sets intersect.
    """
    overlap = set(a.labels) & set(b.labels)
    if overlap:
        raise DuplicateLabel(
            f"Cannot combine states sharing labels {sorted(l.value for l in overlap)}"
        )
    return LabeledState(a.labels + b.labels, np.kron(a.matrix, b.matrix))


def apply(state: LabeledState, ch: QuantumChannel) -> LabeledState:
    """
    Apply a Kraus map to the embedded target subspace.

    Raises:
        UnknownLabel: if a target is absent from the state.
    """
    _require_targets(state.labels, ch.targets)
    out = sum(_sandwich(state.matrix, state.labels, k, ch.targets) for k in ch.kraus_ops)
    return LabeledState(state.labels, out)


def partial_trace(state: LabeledState, discard: Iterable[DofLabel]) -> LabeledState:
    """
    Trace out `discard`.

    Raises:
        UnknownLabel: if a discarded label is absent.
        EmptyRemainder: if every label would be discarded.
    """
    discard = set(DofLabel(d) for d in discard)
    _require_targets(state.labels, discard)
    keep = [label for label in state.labels if label not in discard]
    if not keep:
        raise EmptyRemainder("Partial trace would discard every label")
    if not discard:
        return state

    k = len(state.labels)
    rho = state.matrix.reshape((2,) * (2 * k))
    current = k
    for idx in sorted((state.labels.index(d) for d in discard), reverse=True):
        rho = np.trace(rho, axis1=idx, axis2=idx + current)
        current -= 1
    dim = 2 ** len(keep)
    return LabeledState(tuple(keep), rho.reshape(dim, dim))


def fidelity(state: LabeledState, target: LabeledState) -> float:
    """
    Overlap <target|rho|target> for a pure target.

    Both states must be normalized; heralded states are renormalized by the
    caller.

    Raises:
        LabelMismatch: if the label sets differ.
        NonPureTarget: if the target is not rank 1.
    """
    if state.labels != target.labels:
        raise LabelMismatch(
            f"Fidelity needs identical labels, got "
            f"{[l.value for l in state.labels]} and {[l.value for l in target.labels]}"
        )
    for s in (state, target):
        if abs(s.trace - 1) > EIGEN_TOL:
            raise SimulationError(
                f"Fidelity needs normalized states (trace {s.trace:.6g}); "
                "call normalized() first"
            )
    eigvals = np.linalg.eigvalsh(target.matrix)
    if np.sort(eigvals)[:-1].max(initial=0.0) > EIGEN_TOL:
        raise NonPureTarget("Fidelity target must be a pure state")
    value = float(np.real(np.trace(state.matrix @ target.matrix)))
    return min(max(value, 0.0), 1.0)


# ----------------------------------------------------------------------
# Channel library
# ----------------------------------------------------------------------


def pauli_channel(label: DofLabel, name: str) -> QuantumChannel:
    return QuantumChannel.unitary((label,), PAULI[name], name=f"sigma_{name.lower()}")


def phase_damping(label: DofLabel, coherence: float) -> QuantumChannel:
    """Multiply the off-diagonal element of `label` by `coherence` in [0, 1]."""
    lam = float(np.clip(coherence, 0.0, 1.0))
    ops = [np.sqrt((1 + lam) / 2) * PAULI["I"], np.sqrt((1 - lam) / 2) * PAULI["Z"]]
    return QuantumChannel.cptp((label,), ops, name="phase_damping")


def full_dephasing(label: DofLabel) -> QuantumChannel:
    ops = [np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)]
    return QuantumChannel.cptp((label,), ops, name="dephasing")


def depolarizing(label: DofLabel, p: float) -> QuantumChannel:
    """rho -> (1 - p) rho + p I/2."""
    ops = [np.sqrt(1 - 3 * p / 4) * PAULI["I"]] + [
        np.sqrt(p / 4) * PAULI[n] for n in ("X", "Y", "Z")
    ]
    return QuantumChannel.cptp((label,), ops, name="depolarizing")


def bit_flip(label: DofLabel, p: float) -> QuantumChannel:
    ops = [np.sqrt(1 - p) * PAULI["I"], np.sqrt(p) * PAULI["X"]]
    return QuantumChannel.cptp((label,), ops, name="bit_flip")


def probability(state: LabeledState, ch: QuantumChannel) -> float:
    """Trace left after applying a (trace-decreasing) channel."""
    return apply(state, ch).trace


def conditional(
    state: LabeledState, ch: QuantumChannel, discard: Optional[Iterable[DofLabel]] = None
) -> Tuple[float, Optional[LabeledState]]:
    """
    Project with `ch` and return (probability, normalized post-measurement state).

    Labels in `discard` are traced out of the post-measurement state.
    """
    projected = apply(state, ch)
    p = projected.trace
    if p <= 0:
        return 0.0, None
    if discard:
        projected = partial_trace(projected, discard)
    return p, projected.normalized()


class Basis(str, Enum):
    """Measurement bases shared by the spin and the frequency qubit."""

    Z = "Z"
    X = "X"
    Y = "Y"


def basis_vector(basis: Basis, outcome: int) -> np.ndarray:
    """
    Eigenvector for `outcome` of a basis.

    Z: |0>, |1>; X: (|0> +- |1>)/sqrt(2); Y: (|0> +- i|1>)/sqrt(2).
    """
    basis = Basis(basis)
    if basis == Basis.Z:
        vec = np.zeros(2, dtype=complex)
        vec[outcome] = 1.0
        return vec
    phase = 1.0 if basis == Basis.X else 1j
    sign = 1 if outcome == 0 else -1
    return np.array([1.0, sign * phase], dtype=complex) / np.sqrt(2)
