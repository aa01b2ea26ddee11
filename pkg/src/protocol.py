"""
End-to-end photon-to-spin transfer and spin-photon entanglement verification.

Two engines compute the same statistics:

- ``exact``: density matrices, with the Overhauser average done by quadrature
  and the Pauli correction applied as a channel.
- ``montecarlo``: one quasi-static detuning per trial, sampled herald,
  GHZ outcome and readout; the correction is applied in post-processing by
  choosing the analysis basis from the reported outcome.

Spin operations commute with projections on the photon, so the Monte Carlo
engine precomputes the conditional spin state of every photon outcome and
evolves only 2x2 matrices per trial.
"""

import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from errors import InvalidEfficiency, InvalidParameter, LabelMismatch
from freq_measure import EomSettings, basis_projector, frequency_projector
from optics_pipeline import (
    EtalonSpec,
    TargetState,
    correlate_dofs,
    default_etalons,
    encode_target,
    etalon_filter,
    pbs_channel,
)
from qd_source import (
    SPIN_FREQ,
    SourceParams,
    generate_entangled_pair,
    ideal_entangled_state,
    separable_pair,
)
from spin_dynamics import (
    DEFAULT_QUADRATURE_NODES,
    PulseSequence,
    SpinParams,
    analysis_sequence,
    evolve_ensemble,
    flip_with_readout,
    free_precession,
    sample_detuning,
    sample_unitaries,
    sequence_unitaries,
    storage_sequence,
)
from state_core import (
    PAULI,
    PHOTON_LABELS,
    Basis,
    DofLabel,
    LabeledState,
    QuantumChannel,
    apply,
    basis_vector,
    partial_trace,
    tensor,
)
from utils.stats import binomial_stderr, visibility_stderr

logger = logging.getLogger(__name__)

GHZ_LABELS = (DofLabel.FREQUENCY, DofLabel.POLARIZATION, DofLabel.PATH)

DEFAULT_LOSS_STAGES: Tuple[Tuple[str, float], ...] = (
    ("photon_extraction", 0.08),
    ("detection", 0.20),
    ("fiber_coupling", 0.40),
    ("cross_polarization", 0.50),
    ("waveplates_mirrors", 0.36),
    ("frequency_selection", 0.30),
)


# Upper bound on the batches drawn while waiting for heralds
HERALD_BATCH_LIMIT = 10_000


class Engine(str, Enum):
    EXACT = "exact"
    MONTECARLO = "montecarlo"

    @classmethod
    def parse(cls, value) -> "Engine":
        if isinstance(value, cls):
            return value
        value = str(value).strip().lower()
        if value == "mc":
            return cls.MONTECARLO
        try:
            return cls(value)
        except ValueError:
            raise InvalidParameter(
                f"Unknown engine '{value}'; use 'exact' or 'mc'"
            ) from None


class LossReading(str, Enum):
    """Whether the loss-stage numbers are efficiencies or losses."""

    EFFICIENCY = "efficiency"
    LOSS = "loss"


# ----------------------------------------------------------------------
# GHZ-type analyzer
# ----------------------------------------------------------------------


class GhzOutcome(str, Enum):
    XI_PLUS = "xi+"
    XI_MINUS = "xi-"
    CHI_PLUS = "chi+"
    CHI_MINUS = "chi-"

    @property
    def detector(self) -> int:
        return DETECTORS[self]

    @property
    def correction(self) -> str:
        return CORRECTIONS[self]

    @property
    def port(self) -> str:
        return "A" if self in (GhzOutcome.XI_PLUS, GhzOutcome.XI_MINUS) else "B"


OUTCOMES: Tuple[GhzOutcome, ...] = tuple(GhzOutcome)
DETECTORS = {
    GhzOutcome.XI_PLUS: 1,
    GhzOutcome.XI_MINUS: 2,
    GhzOutcome.CHI_PLUS: 3,
    GhzOutcome.CHI_MINUS: 4,
}
CORRECTIONS = {
    GhzOutcome.XI_PLUS: "Z",
    GhzOutcome.XI_MINUS: "I",
    GhzOutcome.CHI_PLUS: "Y",
    GhzOutcome.CHI_MINUS: "X",
}

# Coefficients of the GHZ-basis expansion, as usually written.
LISTED_COEFFICIENTS = {
    GhzOutcome.XI_PLUS: PAULI["Z"] / 2,
    GhzOutcome.XI_MINUS: PAULI["I"] / 2,
    GhzOutcome.CHI_PLUS: -1j * PAULI["Y"] / 2,
    GhzOutcome.CHI_MINUS: -PAULI["X"] / 2,
}


def _ghz_vector(first: int, second: int, sign: int) -> np.ndarray:
    # index = 4 * frequency + 2 * polarization + path
    vec = np.zeros(8, dtype=complex)
    vec[first] = 1.0
    vec[second] = sign
    return vec / np.sqrt(2)


GHZ_VECTORS = {
    GhzOutcome.XI_PLUS: _ghz_vector(0, 7, +1),  # |r,H,T> + |b,V,R>
    GhzOutcome.XI_MINUS: _ghz_vector(0, 7, -1),
    GhzOutcome.CHI_PLUS: _ghz_vector(5, 2, +1),  # |b,H,R> + |r,V,T>
    GhzOutcome.CHI_MINUS: _ghz_vector(5, 2, -1),
}


PORTS = {"A": 0, "B": 1}

# (polarization, frequency) X-basis outcomes summed on each detector:
# D/A from the diagonal PBS and +/- from the p-EOM.
PORT_ANALYSIS = {
    GhzOutcome.XI_PLUS: ((0, 0), (1, 1)),
    GhzOutcome.XI_MINUS: ((0, 1), (1, 0)),
    GhzOutcome.CHI_PLUS: ((0, 0), (1, 1)),
    GhzOutcome.CHI_MINUS: ((0, 1), (1, 0)),
}


def port_split() -> np.ndarray:
    """
    Etalon correlation followed by the PBS that recombines both paths.

    On {Frequency, Polarization, Path}; afterwards the Path bit names the
    port: |H,T> and |V,R> leave through A, |H,R> and |V,T> through B.
    """
    etalons = etalon_filter(*default_etalons()).operator.reshape(2, 2, 2, 2)
    correlate = np.einsum("axbz,pq->apxbqz", etalons, np.eye(2)).reshape(8, 8)
    return np.kron(np.eye(2), pbs_channel().operator) @ correlate


def port_analysis(outcome: GhzOutcome, eom: Optional[EomSettings] = None) -> np.ndarray:
    """Polarization and frequency superposition analysis behind one port."""
    port = np.zeros((2, 2))
    port[PORTS[outcome.port], PORTS[outcome.port]] = 1.0
    total = np.zeros((8, 8), dtype=complex)
    for pol, freq in PORT_ANALYSIS[outcome]:
        pol_vec = basis_vector(Basis.X, pol)
        freq_op = basis_projector(Basis.X, freq, eom).operator
        total += np.kron(np.kron(freq_op, np.outer(pol_vec, pol_vec.conj())), port)
    return total


def analyzer_operator(outcome: GhzOutcome, eom: Optional[EomSettings] = None) -> np.ndarray:
    split = port_split()
    return split.conj().T @ port_analysis(outcome, eom) @ split


def ghz_projectors(
    eom: Optional[EomSettings] = None,
) -> List[Tuple[GhzOutcome, QuantumChannel]]:
    """Detector 1 to 4 projectors on {Frequency, Polarization, Path}."""
    return [
        (o, QuantumChannel.projector(GHZ_LABELS, analyzer_operator(o, eom), name=o.value))
        for o in OUTCOMES
    ]


def complementary_projectors() -> List[QuantumChannel]:
    """The four GHZ states outside the analyzer span (no click)."""
    pairs = [(1, 6, +1), (1, 6, -1), (4, 3, +1), (4, 3, -1)]
    return [
        QuantumChannel.projector_onto(GHZ_LABELS, _ghz_vector(a, b, s), name="no_click")
        for a, b, s in pairs
    ]


# ----------------------------------------------------------------------
# Basis expansion of the composite state
# ----------------------------------------------------------------------


def composite_amplitudes(target: TargetState) -> np.ndarray:
    """|Phi> as a tensor indexed [spin, frequency, polarization, path]."""
    rest = np.zeros((2, 2, 2), dtype=complex)  # [spin, frequency, path]
    rest[0, 0, 0] = 1 / np.sqrt(2)
    rest[1, 1, 1] = -1 / np.sqrt(2)
    return np.einsum("p,sfx->sfpx", target.vector, rest)


def _projected_spin(outcome: GhzOutcome, target: TargetState) -> np.ndarray:
    g = GHZ_VECTORS[outcome].reshape(2, 2, 2)
    return np.einsum("fpx,sfpx->s", g.conj(), composite_amplitudes(target))


def expansion_coefficients() -> Dict[GhzOutcome, np.ndarray]:
    """
    Spin operators K_g with <g|Phi> = K_g |psi>_s, obtained by brute force.

    Columns come from expanding |Phi> for |H> and |V> separately.
    """
    basis = (TargetState(1.0, 0.0), TargetState(0.0, 1.0))
    return {
        o: np.column_stack([_projected_spin(o, t) for t in basis]) for o in OUTCOMES
    }


@dataclass(frozen=True)
class ExpansionResidual:
    """Deviation of a computed coefficient from the listed Pauli operator."""

    outcome: GhzOutcome
    residual: float
    global_phase: complex
    probability: float


def expansion_residuals(target: TargetState) -> List[ExpansionResidual]:
    """Compare <g|Phi> with the listed operator on |psi>, up to a global phase."""
    out = []
    for o in OUTCOMES:
        computed = _projected_spin(o, target)
        expected = LISTED_COEFFICIENTS[o] @ target.vector
        phase = np.vdot(expected, computed) / np.vdot(expected, expected)
        residual = float(np.linalg.norm(computed - phase * expected)) + abs(abs(phase) - 1)
        out.append(
            ExpansionResidual(o, residual, complex(phase), float(np.vdot(computed, computed).real))
        )
    return out


# ----------------------------------------------------------------------
# Parameters and results
# ----------------------------------------------------------------------


class NoiseParams(BaseModel):
    """Every imperfection of the apparatus in one place."""

    source: SourceParams = Field(default_factory=SourceParams)
    spin: SpinParams = Field(default_factory=SpinParams)
    etalon_t: EtalonSpec = Field(default_factory=lambda: default_etalons()[0])
    etalon_r: EtalonSpec = Field(default_factory=lambda: default_etalons()[1])
    eom: EomSettings = Field(default_factory=EomSettings)
    ghz_misassignment: float = Field(
        default=0.0, ge=0.0, le=1.0,
        description="P(analyzer reports one of the three wrong outcomes)",
    )
    spin_analysis_delay_ns: float = Field(default=0.0, ge=0.0)
    storage_span_ns: float = Field(default=38.0, ge=0.0)
    loss_stages: List[Tuple[str, float]] = Field(
        default_factory=lambda: list(DEFAULT_LOSS_STAGES)
    )
    loss_reading: LossReading = LossReading.EFFICIENCY
    sample_herald_loss: bool = False

    @classmethod
    def ideal(cls, **overrides) -> "NoiseParams":
        """Every error source off and no loss."""
        values = dict(
            spin=SpinParams(
                t2_star_ns=math.inf, t2_echo_us=math.inf, readout_fidelity=1.0
            ),
            loss_stages=[],
        )
        values.update(overrides)
        return cls(**values)

    @property
    def overall_efficiency(self) -> float:
        stages = self.loss_stages
        if self.loss_reading == LossReading.LOSS:
            stages = [(name, 1.0 - value) for name, value in stages]
        return loss_budget(stages)


@dataclass(frozen=True)
class CoincidenceRecord:
    """One trial of a coincidence measurement."""

    trial_id: int
    heralded: bool
    detector: Optional[int] = None
    spin_bit: Optional[int] = None
    spin_basis: Optional[str] = None

    def __post_init__(self):
        if self.heralded and self.detector not in (1, 2, 3, 4):
            raise InvalidParameter(f"Heralded record needs detector 1-4, got {self.detector}")
        if not self.heralded and self.detector is not None:
            raise InvalidParameter("Unheralded records carry no detector")

    @property
    def key(self) -> Tuple[int, int, str]:
        return (self.detector, self.spin_bit, self.spin_basis)


@dataclass
class ExperimentResult:
    """
    Outcome of a protocol run.

    `counts` tallies heralded records by (detector, spin_bit, spin_basis) and is
    empty for the exact engine. `metrics` holds named (value, stderr) figures.
    """

    fidelity: float
    stderr: float
    success_rate: float
    engine: Engine
    trials: int = 0
    heralded: int = 0
    counts: Counter = field(default_factory=Counter)
    per_outcome: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    metrics: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.fidelity = float(min(max(self.fidelity, 0.0), 1.0))
        self.stderr = max(float(self.stderr), 0.0)


@dataclass
class _Tally:
    counts: Counter = field(default_factory=Counter)
    trials: int = 0
    heralded: int = 0

    def merge(self, other: "_Tally") -> "_Tally":
        return _Tally(self.counts + other.counts, self.trials + other.trials,
                      self.heralded + other.heralded)


# ----------------------------------------------------------------------
# Loss budget
# ----------------------------------------------------------------------


def loss_budget(stages: Sequence[Tuple[str, float]]) -> float:
    """
    Overall efficiency as the product of stage efficiencies.

    Raises:
        InvalidEfficiency: if a stage is outside (0, 1].
    """
    total = 1.0
    for name, efficiency in stages:
        if not 0.0 < efficiency <= 1.0:
            raise InvalidEfficiency(
                f"Stage '{name}' has efficiency {efficiency}; it must lie in (0, 1]"
            )
        total *= efficiency
    return total


# ----------------------------------------------------------------------
# Shared machinery
# ----------------------------------------------------------------------


def _check_trials(trials: int) -> None:
    if trials < 1:
        raise InvalidParameter(f"trials must be at least 1 (got {trials})")


def _resource(noise: NoiseParams, resource: Optional[LabeledState]) -> LabeledState:
    if resource is None:
        return generate_entangled_pair(noise.source)
    if resource.labels != SPIN_FREQ:
        raise LabelMismatch("A resource state must be over {Spin, Frequency}")
    return resource


def _spin_matrix(state: LabeledState) -> np.ndarray:
    return partial_trace(state, [l for l in state.labels if l in PHOTON_LABELS]).matrix


def _normalize_stack(states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    probs = np.real(np.trace(states, axis1=1, axis2=2))
    safe = np.where(probs > 0, probs, 1.0)
    eye = np.eye(2, dtype=complex) / 2
    normalized = np.where(
        (probs > 0)[:, None, None], states / safe[:, None, None], eye
    )
    return normalized, np.clip(probs, 0.0, None)


def _evolve_stack(
    rho: np.ndarray,
    seq: PulseSequence,
    spin: SpinParams,
    detunings: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    u = sample_unitaries(seq, spin, detunings, rng)
    return u @ rho @ u.conj().transpose(0, 2, 1)


def _run_chunks(worker, make_job, trials: int, seed, workers: int) -> _Tally:
    """Split trials over independent seed streams and merge the tallies."""
    workers = max(1, min(int(workers), trials))
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(workers)
    sizes = [len(c) for c in np.array_split(np.arange(trials), workers)]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    jobs = [make_job(s, n, int(first)) for s, n, first in zip(streams, sizes, starts)]
    if workers == 1:
        parts = [worker(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, jobs))
    total = _Tally()
    for part in parts:
        total = total.merge(part)
    return total


def _collect_heralds(
    worker, make_job, batch: int, seed, workers: int, min_heralds: int
) -> _Tally:
    """Run batches of `batch` trials until `min_heralds` trials are heralded."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    total = _Tally()
    for _ in range(HERALD_BATCH_LIMIT):
        offset = total.trials
        part = _run_chunks(
            worker,
            lambda stream, n, first: make_job(stream, n, first + offset),
            batch,
            root.spawn(1)[0],
            workers,
        )
        total = total.merge(part)
        if total.heralded >= min_heralds:
            return total
    logger.warning(
        "Stopped after %d trials with %d of %d heralds",
        total.trials, total.heralded, min_heralds,
    )
    return total


# ----------------------------------------------------------------------
# State transfer
# ----------------------------------------------------------------------


def target_basis(t: TargetState) -> Basis:
    """The Pauli axis closest to the target's Bloch vector."""
    s1, s2, s3 = t.stokes()
    return (Basis.Z, Basis.X, Basis.Y)[int(np.argmax(np.abs([s1, s2, s3])))]


def transfer_sequence(noise: NoiseParams) -> PulseSequence:
    """Storage echo during the photon flight, then the spin analysis delay."""
    return storage_sequence(noise.storage_span_ns).then(
        free_precession(noise.spin_analysis_delay_ns)
    )


def _correction_unitaries(
    noise: NoiseParams, apply_correction: bool
) -> Dict[GhzOutcome, np.ndarray]:
    """
    W = C U_det^dagger per outcome.

    U_det is the intended spin sequence at zero detuning; it is known to the
    experimenter and undone together with the Pauli correction.
    """
    nominal = noise.spin.model_copy(update={"rotation_error": 0.0})
    u_det = sequence_unitaries(transfer_sequence(noise), nominal, [0.0])[0]
    return {
        o: (PAULI[o.correction] if apply_correction else PAULI["I"]) @ u_det.conj().T
        for o in OUTCOMES
    }


def _misassignment_matrix(p_m: float) -> np.ndarray:
    """M[reported, true]."""
    m = np.full((4, 4), p_m / 3)
    np.fill_diagonal(m, 1 - p_m)
    return m


def _photon_outcome_states(
    target: TargetState,
    noise: NoiseParams,
    pair: LabeledState,
    analyzed: Sequence[GhzOutcome],
) -> np.ndarray:
    """Unnormalized spin states Tr_photon(P_g Phi) for g in OUTCOMES."""
    composite = encode_target(
        correlate_dofs(
            pair, noise.etalon_t, noise.etalon_r, noise.source.zeeman_splitting_ghz
        ),
        target,
    )
    states = []
    for outcome, projector in ghz_projectors():
        if outcome in analyzed:
            states.append(_spin_matrix(apply(composite, projector)))
        else:
            states.append(np.zeros((2, 2), dtype=complex))
    return np.array(states)


def _transfer_exact(
    target, noise, resource, apply_correction, analyzed, nodes
) -> ExperimentResult:
    pair = evolve_ensemble(
        _resource(noise, resource), transfer_sequence(noise), noise.spin, nodes
    )
    sigma = _photon_outcome_states(target, noise, pair, analyzed)
    reported = np.einsum("jk,kab->jab", _misassignment_matrix(noise.ghz_misassignment), sigma)
    corrections = _correction_unitaries(noise, apply_correction)
    psi = target.vector

    per_outcome, weights, fids = {}, [], []
    for j, outcome in enumerate(OUTCOMES):
        weight = float(np.real(np.trace(reported[j])))
        if weight <= 0:
            continue
        w = corrections[outcome]
        rho = w @ reported[j] @ w.conj().T / weight
        f = float(flip_with_readout(np.real(psi.conj() @ rho @ psi), noise.spin))
        per_outcome[outcome.value] = (f, 0.0)
        weights.append(weight)
        fids.append(f)

    click = float(sum(weights))
    pooled = float(np.dot(weights, fids) / click) if click > 0 else 0.0
    return ExperimentResult(
        fidelity=pooled,
        stderr=0.0,
        success_rate=click * noise.overall_efficiency,
        engine=Engine.EXACT,
        per_outcome=per_outcome,
    )


@dataclass(frozen=True)
class _TransferJob:
    seed: np.random.SeedSequence
    trials: int
    first_trial: int
    spin_states: np.ndarray
    outcome_probs: np.ndarray
    misassignment: float
    spin: SpinParams
    sequence: PulseSequence
    analysis_vectors: np.ndarray
    efficiency: float
    sample_loss: bool
    basis: str


def _transfer_chunk(job: _TransferJob) -> _Tally:
    rng = np.random.default_rng(job.seed)
    n = job.trials
    true = rng.choice(5, size=n, p=job.outcome_probs)
    lost = rng.random(n) >= job.efficiency if job.sample_loss else np.zeros(n, bool)
    wrong = rng.random(n) < job.misassignment
    shift = rng.integers(1, 4, size=n)
    delta = sample_detuning(job.spin, rng, size=n)

    heralded = ~lost & (true < 4)
    reported = np.where(wrong & heralded, (true + shift) % 4, true)
    idx = np.flatnonzero(heralded)
    rho = _evolve_stack(
        job.spin_states[true[idx]], job.sequence, job.spin, delta[idx], rng
    )
    a = job.analysis_vectors[reported[idx]]
    q = np.real(np.einsum("ni,nij,nj->n", a.conj(), rho, a))
    bits = (rng.random(idx.size) < flip_with_readout(q, job.spin)).astype(int)

    records = [
        CoincidenceRecord(
            trial_id=job.first_trial + int(i),
            heralded=True,
            detector=OUTCOMES[reported[i]].detector,
            spin_bit=int(bit),
            spin_basis=job.basis,
        )
        for i, bit in zip(idx, bits)
    ]
    return _Tally(Counter(r.key for r in records), n, idx.size)


def _transfer_montecarlo(
    target, noise, trials, seed, workers, resource, apply_correction, analyzed,
    min_heralds=None,
) -> ExperimentResult:
    sigma = _photon_outcome_states(target, noise, _resource(noise, resource), analyzed)
    states, probs = _normalize_stack(sigma)
    no_click = max(0.0, 1.0 - probs.sum())
    outcome_probs = np.append(probs, no_click)
    outcome_probs /= outcome_probs.sum()

    corrections = _correction_unitaries(noise, apply_correction)
    vectors = np.array([corrections[o].conj().T @ target.vector for o in OUTCOMES])
    efficiency = noise.overall_efficiency
    basis = target_basis(target).value

    def make_job(stream, n, first):
        return _TransferJob(
            stream, n, first, states, outcome_probs, noise.ghz_misassignment,
            noise.spin, transfer_sequence(noise), vectors, efficiency,
            noise.sample_herald_loss, basis,
        )

    if min_heralds is None:
        tally = _run_chunks(_transfer_chunk, make_job, trials, seed, workers)
    else:
        tally = _collect_heralds(
            _transfer_chunk, make_job, trials, seed, workers, min_heralds
        )
    return _transfer_result(tally, efficiency, noise.sample_herald_loss)


def _transfer_result(tally: _Tally, efficiency: float, sampled_loss: bool) -> ExperimentResult:
    per_outcome = {}
    for outcome in OUTCOMES:
        hits = sum(c for (d, b, _), c in tally.counts.items() if d == outcome.detector and b == 1)
        total = sum(c for (d, _, _), c in tally.counts.items() if d == outcome.detector)
        if total:
            per_outcome[outcome.value] = (hits / total, binomial_stderr(hits / total, total))

    correct = sum(c for (_, b, _), c in tally.counts.items() if b == 1)
    fid = correct / tally.heralded if tally.heralded else 0.0
    rate = tally.heralded / tally.trials
    if not sampled_loss:
        rate *= efficiency
    return ExperimentResult(
        fidelity=fid,
        stderr=binomial_stderr(fid, tally.heralded),
        success_rate=rate,
        engine=Engine.MONTECARLO,
        trials=tally.trials,
        heralded=tally.heralded,
        counts=tally.counts,
        per_outcome=per_outcome,
    )


def run_transfer(
    target: TargetState,
    noise: Optional[NoiseParams] = None,
    trials: int = 10_000,
    seed: int = 0,
    engine: Engine = Engine.MONTECARLO,
    workers: int = 1,
    resource: Optional[LabeledState] = None,
    apply_correction: bool = True,
    analyzed: Optional[Sequence[GhzOutcome]] = None,
    nodes: int = DEFAULT_QUADRATURE_NODES,
    min_heralds: Optional[int] = None,
) -> ExperimentResult:
    """
    Transfer a polarization state to the spin.

    Args:
        target: Polarization state written by the wave plates.
        noise: Apparatus imperfections (ideal when omitted).
        trials: Emitted photons (Monte Carlo engine).
        seed: Root seed; worker streams are spawned from it.
        engine: exact or montecarlo.
        workers: Parallel processes for the Monte Carlo engine.
        resource: Spin-frequency state replacing the source output.
        apply_correction: Apply the outcome-dependent Pauli correction.
        analyzed: GHZ outcomes with a detector; others count as no click.
        nodes: Quadrature nodes of the exact Overhauser average.
        min_heralds: Monte Carlo only; repeat batches of `trials` until this
            many trials are heralded.

    Returns:
        Pooled heralded fidelity, per-outcome fidelities and herald rate.
    """
    noise = noise or NoiseParams.ideal()
    engine = Engine.parse(engine)
    analyzed = tuple(analyzed or OUTCOMES)
    if engine == Engine.EXACT:
        result = _transfer_exact(target, noise, resource, apply_correction, analyzed, nodes)
    else:
        _check_trials(trials)
        if min_heralds is not None and min_heralds < 1:
            raise InvalidParameter(f"min_heralds must be at least 1 (got {min_heralds})")
        result = _transfer_montecarlo(
            target, noise, trials, seed, workers, resource, apply_correction, analyzed,
            min_heralds,
        )
    logger.info(
        "Transfer (%s, %s): fidelity %.4f +- %.4f, success %.3g",
        engine.value, target_basis(target).value, result.fidelity, result.stderr,
        result.success_rate,
    )
    return result


# ----------------------------------------------------------------------
# Spin-photon correlation measurements
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class _AnalysisSetting:
    """One (spin basis, frequency outcome) configuration of the correlation setup."""

    spin_basis: Basis
    freq_outcome: int
    spin_state: np.ndarray
    click_prob: float


def _frequency_efficiency(basis: Basis, eom: EomSettings) -> float:
    return 1.0 if Basis(basis) == Basis.Z else eom.efficiency


def _analysis_setting(
    pair: LabeledState, spin_basis: Basis, freq_basis: Basis, outcome: int, eom: EomSettings
) -> _AnalysisSetting:
    projected = apply(pair, basis_projector(freq_basis, outcome, eom))
    sigma = partial_trace(projected, [DofLabel.FREQUENCY]).matrix
    (state,), (prob,) = _normalize_stack(sigma[None])
    return _AnalysisSetting(
        Basis(spin_basis), outcome, state, prob * _frequency_efficiency(freq_basis, eom)
    )


@dataclass(frozen=True)
class _AnalysisJob:
    seed: np.random.SeedSequence
    trials: int
    first_trial: int
    groups: Tuple[Tuple[_AnalysisSetting, ...], ...]
    spin: SpinParams
    delay_ns: float


def _analysis_chunk(job: _AnalysisJob) -> _Tally:
    """
    Trial i uses group (first_trial + i) mod len(groups) and a uniformly
    random setting inside it.
    """
    rng = np.random.default_rng(job.seed)
    n = job.trials
    trial_ids = job.first_trial + np.arange(n)
    group = trial_ids % len(job.groups)
    choice = rng.random(n)
    click_draw = rng.random(n)
    delta = sample_detuning(job.spin, rng, size=n)
    readout_draw = rng.random(n)

    counts: Counter = Counter()
    heralded = 0
    for g, settings in enumerate(job.groups):
        pick = np.minimum((choice * len(settings)).astype(int), len(settings) - 1)
        for s, setting in enumerate(settings):
            sel = np.flatnonzero((group == g) & (pick == s) & (click_draw < setting.click_prob))
            if not sel.size:
                continue
            seq = analysis_sequence(setting.spin_basis, job.delay_ns, job.spin)
            rho = _evolve_stack(
                np.broadcast_to(setting.spin_state, (sel.size, 2, 2)), seq, job.spin,
                delta[sel], rng,
            )
            p1 = flip_with_readout(np.real(rho[:, 1, 1]), job.spin)
            bits = (readout_draw[sel] < p1).astype(int)
            for i, bit in zip(sel, bits):
                record = CoincidenceRecord(
                    trial_id=int(trial_ids[i]),
                    heralded=True,
                    detector=setting.freq_outcome + 1,
                    spin_bit=int(bit),
                    spin_basis=setting.spin_basis.value,
                )
                counts[record.key] += 1
            heralded += sel.size
    return _Tally(counts, n, heralded)


def composite_fidelity(
    f_zz: float,
    v_xx: float,
    v_yy: float,
    stderrs: Optional[Tuple[float, float, float]] = None,
) -> Tuple[float, float]:
    """
    Entanglement fidelity [F_ZZ + (V_XX + V_YY)/2]/2 with propagated stderr.

    (0.942, 0.609, 0.690) -> 0.796.
    """
    value = (f_zz + (v_xx + v_yy) / 2) / 2
    if stderrs is None:
        return value, 0.0
    s_zz, s_xx, s_yy = stderrs
    return value, 0.5 * math.sqrt(s_zz**2 + (s_xx**2 + s_yy**2) / 4)


IDEAL_CORRELATION_SIGN = {Basis.Z: +1, Basis.X: -1, Basis.Y: +1}


def _correlation_settings(pair: LabeledState, eom: EomSettings):
    return tuple(
        tuple(_analysis_setting(pair, b, b, m, eom) for m in (0, 1))
        for b in (Basis.Z, Basis.X, Basis.Y)
    )


def _verification_exact(noise, pair, nodes) -> Tuple[Dict[Basis, float], float]:
    correlators, click = {}, 0.0
    for b in (Basis.Z, Basis.X, Basis.Y):
        evolved = evolve_ensemble(
            pair, analysis_sequence(b, noise.spin_analysis_delay_ns, noise.spin),
            noise.spin, nodes,
        )
        signed, total = 0.0, 0.0
        for m in (0, 1):
            projected = apply(evolved, basis_projector(b, m, noise.eom))
            weight = projected.trace
            if weight <= 0:
                continue
            spin = partial_trace(projected, [DofLabel.FREQUENCY]).matrix / weight
            p1 = flip_with_readout(float(np.real(spin[1, 1])), noise.spin)
            signed += weight * ((1 - p1) - p1) * (-1) ** m
            total += weight
            click += weight * _frequency_efficiency(b, noise.eom) / 6
        correlators[b] = signed / total if total else 0.0
    return correlators, click


def _correlators_from_counts(counts: Counter) -> Dict[Basis, Tuple[float, int]]:
    out = {}
    for b in (Basis.Z, Basis.X, Basis.Y):
        signed = sum(
            c * (-1) ** (bit + det - 1)
            for (det, bit, basis), c in counts.items()
            if basis == b.value
        )
        total = sum(c for (_, _, basis), c in counts.items() if basis == b.value)
        out[b] = (signed / total if total else 0.0, total)
    return out


def run_entanglement_verification(
    noise: Optional[NoiseParams] = None,
    trials: int = 30_000,
    seed: int = 0,
    engine: Engine = Engine.MONTECARLO,
    workers: int = 1,
    resource: Optional[LabeledState] = None,
    nodes: int = DEFAULT_QUADRATURE_NODES,
) -> ExperimentResult:
    """
    ZZ, XX and YY spin-frequency correlations and the composite fidelity.

    Trials cycle through the Z, X, Y bases; the frequency analyzer picks one of
    its two outcomes at random per trial and clicks with the projector
    probability times the sideband efficiency.

    Returns:
        Result whose fidelity is F; metrics hold F_ZZ, V_XX and V_YY.
    """
    noise = noise or NoiseParams.ideal()
    engine = Engine.parse(engine)
    pair = _resource(noise, resource)

    if engine == Engine.EXACT:
        correlators, click = _verification_exact(noise, pair, nodes)
        e = {b: (correlators[b], 0.0) for b in correlators}
        tally = _Tally()
    else:
        _check_trials(trials)
        groups = _correlation_settings(pair, noise.eom)

        def make_job(stream, n, first):
            return _AnalysisJob(stream, n, first, groups, noise.spin,
                                noise.spin_analysis_delay_ns)

        tally = _run_chunks(_analysis_chunk, make_job, trials, seed, workers)
        click = tally.heralded / tally.trials
        e = {
            b: (value, visibility_stderr(value, n))
            for b, (value, n) in _correlators_from_counts(tally.counts).items()
        }

    f_zz = (1 + e[Basis.Z][0]) / 2
    s_zz = e[Basis.Z][1] / 2
    v_xx = IDEAL_CORRELATION_SIGN[Basis.X] * e[Basis.X][0]
    v_yy = IDEAL_CORRELATION_SIGN[Basis.Y] * e[Basis.Y][0]
    f, s = composite_fidelity(f_zz, v_xx, v_yy, (s_zz, e[Basis.X][1], e[Basis.Y][1]))
    logger.info("Verification (%s): F_ZZ %.4f, V_XX %.4f, V_YY %.4f, F %.4f",
                engine.value, f_zz, v_xx, v_yy, f)
    return ExperimentResult(
        fidelity=f,
        stderr=s,
        success_rate=click,
        engine=engine,
        trials=tally.trials,
        heralded=tally.heralded,
        counts=tally.counts,
        metrics={
            "F_ZZ": (f_zz, s_zz),
            "V_XX": (v_xx, e[Basis.X][1]),
            "V_YY": (v_yy, e[Basis.Y][1]),
            "F": (f, s),
        },
    )


# ----------------------------------------------------------------------
# RF-phase fringe
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FringePoint:
    rf_phase: float
    probability: float
    stderr: float
    coincidences: int
    trials: int


def _reported_minus_povm(spin: SpinParams) -> np.ndarray:
    # POVM element of "readout reports the X-basis |1>" after the pre-rotation
    f = spin.readout_fidelity
    return np.diag([1 - f, f]).astype(complex)


def fringe_coherence(noise: NoiseParams, resource: Optional[LabeledState] = None,
                     nodes: int = DEFAULT_QUADRATURE_NODES) -> float:
    """
    Analytic fringe visibility 2|rho_rb| / Tr(rho) of the frequency state
    conditioned on the spin reported as (|down> - |up>)/sqrt(2).
    """
    pair = evolve_ensemble(
        _resource(noise, resource),
        analysis_sequence(Basis.X, noise.spin_analysis_delay_ns, noise.spin),
        noise.spin, nodes,
    )
    rho = pair.reordered(SPIN_FREQ).reshape(2, 2, 2, 2)
    povm = _reported_minus_povm(noise.spin)
    freq = np.einsum("ts,sftg->fg", povm, rho)
    return float(2 * abs(freq[0, 1]) / np.real(np.trace(freq)))


def run_fringe(
    noise: Optional[NoiseParams] = None,
    rf_phases: Sequence[float] = tuple(np.linspace(0, 2 * np.pi, 24, endpoint=False)),
    trials: int = 5_000,
    seed: int = 0,
    engine: Engine = Engine.MONTECARLO,
    workers: int = 1,
    resource: Optional[LabeledState] = None,
    nodes: int = DEFAULT_QUADRATURE_NODES,
) -> List[FringePoint]:
    """
    Coincidence probability versus RF phase with the spin analyzed on
    (|down> - |up>)/sqrt(2).

    Each phase is an independent run of `trials` photons; the probability is
    coincidences per photon, P = eta (1 + V cos theta)/4 for the ideal pair.
    """
    noise = noise or NoiseParams.ideal()
    engine = Engine.parse(engine)
    pair = _resource(noise, resource)
    streams = np.random.SeedSequence(seed).spawn(len(rf_phases))
    delay = noise.spin_analysis_delay_ns
    points = []
    if engine == Engine.EXACT:
        evolved = evolve_ensemble(
            pair, analysis_sequence(Basis.X, delay, noise.spin), noise.spin, nodes
        )
    else:
        _check_trials(trials)

    for phi, stream in zip(rf_phases, streams):
        channel, efficiency = frequency_projector(
            noise.eom.model_copy(update={"rf_phase": float(phi)})
        )
        if engine == Engine.EXACT:
            spin = partial_trace(apply(evolved, channel), [DofLabel.FREQUENCY]).matrix
            p1 = float(np.real(np.trace(_reported_minus_povm(noise.spin) @ spin)))
            points.append(FringePoint(float(phi), p1 * efficiency, 0.0, 0, 0))
            continue

        sigma = partial_trace(apply(pair, channel), [DofLabel.FREQUENCY]).matrix
        (state,), (prob,) = _normalize_stack(sigma[None])
        setting = _AnalysisSetting(Basis.X, 0, state, prob * efficiency)

        def make_job(s, n, first, setting=setting):
            return _AnalysisJob(s, n, first, ((setting,),), noise.spin, delay)

        tally = _run_chunks(_analysis_chunk, make_job, trials, stream, workers)
        hits = sum(c for (_, bit, _), c in tally.counts.items() if bit == 1)
        p = hits / tally.trials
        points.append(
            FringePoint(float(phi), p, binomial_stderr(p, tally.trials), hits, tally.trials)
        )
    return points


# ----------------------------------------------------------------------
# Classical comparison lines
# ----------------------------------------------------------------------


class BaselineStrategy(str, Enum):
    SINGLE_PORT = "single_port"
    RANDOM_GUESS = "random_guess"
    SEPARABLE_RESOURCE = "separable_resource"


def classical_baseline(
    target: TargetState,
    trials: int = 10_000,
    seed: int = 0,
    strategy: BaselineStrategy = BaselineStrategy.SINGLE_PORT,
    engine: Engine = Engine.MONTECARLO,
) -> ExperimentResult:
    """
    Entanglement-free comparison lines.

    - single_port: only port A (xi+-) is analyzed; half the photons herald,
      each with a faithful spin state.
    - random_guess: the spin is prepared in a random state with no
      information about the target; average fidelity 1/2.
    - separable_resource: entanglement verification on the classically
      correlated pair; F <= 1/2.
    """
    strategy = BaselineStrategy(strategy)
    engine = Engine.parse(engine)
    if strategy == BaselineStrategy.SINGLE_PORT:
        return run_transfer(
            target, NoiseParams.ideal(), trials, seed, engine,
            analyzed=(GhzOutcome.XI_PLUS, GhzOutcome.XI_MINUS),
        )
    if strategy == BaselineStrategy.SEPARABLE_RESOURCE:
        return run_entanglement_verification(
            NoiseParams.ideal(), trials, seed, engine, resource=separable_pair()
        )
    if engine == Engine.EXACT:
        return ExperimentResult(fidelity=0.5, stderr=0.0, success_rate=1.0, engine=engine)

    _check_trials(trials)
    rng = np.random.default_rng(seed)
    guesses = rng.normal(size=(trials, 2)) + 1j * rng.normal(size=(trials, 2))
    guesses /= np.linalg.norm(guesses, axis=1)[:, None]
    overlap = np.abs(guesses @ target.vector.conj()) ** 2
    hits = int(np.count_nonzero(rng.random(trials) < overlap))
    f = hits / trials
    return ExperimentResult(
        fidelity=f,
        stderr=binomial_stderr(f, trials),
        success_rate=1.0,
        engine=Engine.MONTECARLO,
        trials=trials,
        heralded=trials,
    )


def maximally_mixed_spin_resource() -> LabeledState:
    """Resource with the spin carrying no information about the photon."""
    freq = ideal_entangled_state().marginal([DofLabel.FREQUENCY])
    return tensor(LabeledState.maximally_mixed([DofLabel.SPIN]), freq)
