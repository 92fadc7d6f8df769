"""Quantum KNN building blocks on top of :mod:`quantum_knn.qsim`.

State preparation stores feature values as ancilla rotations, a swap test
turns overlaps into a one-qubit probability, amplitude estimation moves that
probability into a register, and a Duerr-Hoyer style search picks the k
smallest distances under a fixed Grover-iteration budget.

Training indexes are 1-based throughout (index register value j = 1..M);
register value 0 and values above M are the branches the comparator flags.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from . import qsim
from .config import QknnConfig
from .qsim import (
    CapacityError,
    GateOp,
    QubitRegisterLayout,
    StateVector,
    apply_gate,
    run_circuit,
)

GROWTH = 6 / 5  # BBHT schedule growth factor, any value in (1, 4/3) works


def index_width(count: int) -> int:
    """Qubits needed to hold indexes 1..count: ceil(log2(count + 1))."""
    return max(1, math.ceil(math.log2(count + 1)))


def _as_array(v) -> np.ndarray:
    return np.asarray(getattr(v, "components", v), dtype=float)


def _check_unit_interval(v: np.ndarray, what: str) -> None:
    if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
        bad = v[(v < 0) | (v > 1) | ~np.isfinite(v)][:3]
        raise ValueError(f"{what} components must lie in [0, 1]; found {bad.tolist()}")


# --------------------------------------------------------------------------
# state preparation


def index_superposition_circuit(layout: QubitRegisterLayout, reg: str, count: int,
                                flag_above: str, flag_zero: str) -> list[GateOp]:
    """Hadamards on `reg` followed by the comparator against `count`."""
    gates = [qsim.h(q) for q in layout.qubits(reg)]
    gates.append(qsim.comparator(layout.qubits(reg), count,
                                 layout.qubit(flag_above), layout.qubit(flag_zero)))
    return gates


def uniform_index_state(name: str, count: int, cap: int = qsim.DEFAULT_QUBIT_CAP) -> tuple[StateVector, float]:
    """(1/sqrt(count)) sum_{j=1..count} |j>, prepared by Hadamards and the
    comparator, then postselected on both flags clear.

    Returns the state over the single register `name` and the success
    probability count / 2**width.
    """
    w = index_width(count)
    layout = QubitRegisterLayout([(name, w), ("_above", 1), ("_zero", 1)], cap=cap)
    state = run_circuit(StateVector.zeros(layout), index_superposition_circuit(layout, name, count, "_above", "_zero"))
    return state.postselect(_above=0, _zero=0)


def _angle_table(values: np.ndarray, width: int) -> np.ndarray:
    """Angles for register values 0..2**width-1; value i holds values[i-1], others 0."""
    table = np.zeros(2 ** width)
    table[1:len(values) + 1] = values
    return table


def alpha_circuit(v0, layout: QubitRegisterLayout) -> list[GateOp]:
    """Rotation stages on an already-uniform `i` register: write cos/sin of v
    into `work`, rotate `data` by 2*arcsin(v), then undo the first stage."""
    v0 = _as_array(v0)
    n = layout.width("i")
    ctrl = layout.qubits("i")
    u2 = qsim.mux_ry(ctrl, layout.qubit("work"), _angle_table(2 * v0, n))
    u3 = qsim.mux_ry(ctrl, layout.qubit("data"), _angle_table(2 * np.arcsin(v0), n))
    return [u2, u3, qsim.inverse(u2)]


def prepare_alpha(v0, cap: int = qsim.DEFAULT_QUBIT_CAP) -> StateVector:
    """(1/sqrt N) sum_i |i> (sqrt(1-v_i^2)|0> + v_i|1>) |0> over registers (i, data, work)."""
    v0 = _as_array(v0)
    _check_unit_interval(v0, "test vector")
    idx, _ = uniform_index_state("i", len(v0), cap)
    layout = QubitRegisterLayout(idx.layout.registers + (qsim.Register("data", 1), qsim.Register("work", 1)), cap=cap)
    state = StateVector(layout, np.kron(idx.amplitudes, [1, 0, 0, 0]))
    return run_circuit(state, alpha_circuit(v0, state.layout))


def beta_layout(M: int, N: int, cap: int = qsim.DEFAULT_QUBIT_CAP) -> QubitRegisterLayout:
    return QubitRegisterLayout(
        [("j", index_width(M)), ("j_above", 1), ("j_zero", 1), ("i", index_width(N)), ("work", 1), ("data", 1)],
        cap=cap,
    )


def beta_circuit(training, layout: QubitRegisterLayout) -> list[GateOp]:
    """Full gate list preparing |beta> from |0...0>, except the i register,
    which is seeded as an exact uniform superposition by `prepare_beta`."""
    V = np.array([_as_array(v) for v in training])
    M, N = V.shape
    m, n = layout.width("j"), layout.width("i")
    table = np.zeros((2 ** m, 2 ** n))
    table[1:M + 1, 1:N + 1] = V
    ctrl = layout.qubits("j") + layout.qubits("i")
    gates = index_superposition_circuit(layout, "j", M, "j_above", "j_zero")
    u2 = qsim.mux_ry(ctrl, layout.qubit("work"), (2 * table).ravel())
    u3 = qsim.mux_ry(ctrl, layout.qubit("data"), (2 * np.arcsin(table)).ravel())
    return gates + [u2, u3, qsim.inverse(u2)]


def prepare_beta(training, cap: int = qsim.DEFAULT_QUBIT_CAP) -> StateVector:
    """|beta> over (j, j_above, j_zero, i, work, data).

    The j register is left unpostselected: the branch with both j flags clear
    carries probability M / 2**m and equals
    (1/sqrt M) sum_j |j> (1/sqrt N) sum_i |i> |0> (sqrt(1-v_ji^2)|0> + v_ji|1>).
    """
    V = np.array([_as_array(v) for v in training])
    if V.ndim != 2 or V.shape[0] < 1:
        raise ValueError("need at least one training vector")
    _check_unit_interval(V, "training vector")
    M, N = V.shape
    m = index_width(M)
    layout = beta_layout(M, N, cap)
    if M > 2 ** m - 1:
        raise CapacityError(f"{M} training vectors exceed a {m}-qubit index register")
    i_state, _ = uniform_index_state("i", N, cap)
    j_part = StateVector.zeros(QubitRegisterLayout([("j", m), ("j_above", 1), ("j_zero", 1)]))
    tail = StateVector.zeros(QubitRegisterLayout([("work", 1), ("data", 1)]))
    state = StateVector(layout, j_part.tensor(i_state).tensor(tail).amplitudes)
    return run_circuit(state, beta_circuit(V, layout))


def flag_clear_probability(beta: StateVector) -> float:
    probs = beta.probabilities()
    clear = (beta.register_values("j_above") == 0) & (beta.register_values("j_zero") == 0)
    return float(probs[clear].sum())


def encoded_state(state: StateVector, j: int | None = None) -> StateVector:
    """Amplitude-encoded feature vector sum_i v_i |i> carved out of a
    prepared state by postselection.

    For |beta>, `j` selects the training branch (and the j flags must read
    clear).  Postselecting `work` on 0 succeeds with certainty after
    uncomputation; postselecting `data` on 1 succeeds with probability
    ||v||^2 / N.
    """
    if j is not None:
        state, _ = state.postselect(j=j, j_above=0, j_zero=0)
    state, _ = state.postselect(work=0, data=1)
    return state


# --------------------------------------------------------------------------
# swap test and distances


def swap_test_circuit(layout: QubitRegisterLayout) -> list[GateOp]:
    anc = layout.qubit("anc")
    return [qsim.h(anc), qsim.cswap(anc, layout.qubits("a"), layout.qubits("b")), qsim.h(anc)]


def swap_test_input(alpha: StateVector, beta_j: StateVector) -> StateVector:
    """|0>_anc |alpha>_a |beta_j>_b."""
    if alpha.layout != beta_j.layout:
        raise ValueError(f"swap test needs identical layouts: {alpha.layout!r} vs {beta_j.layout!r}")
    w = alpha.n_qubits
    layout = QubitRegisterLayout([("anc", 1), ("a", w), ("b", w)], cap=alpha.layout.cap)
    amps = np.kron(np.array([1, 0], dtype=np.complex128), np.kron(alpha.amplitudes, beta_j.amplitudes))
    return StateVector(layout, amps)


def swap_test_distance(alpha: StateVector, beta_j: StateVector) -> float:
    """P(ancilla = 1) after H, controlled swap, H: equals 1/2 - |<alpha|beta_j>|^2 / 2."""
    state = swap_test_input(alpha, beta_j)
    out = run_circuit(state, swap_test_circuit(state.layout))
    return qsim.marginal_probability(out, state.layout.qubit("anc"), 1)


def quantize_distance(d, b: int):
    """round(d * (2**b - 1)), halves rounded up."""
    return np.floor(np.asarray(d, dtype=float) * (2 ** b - 1) + 0.5).astype(np.int64)


@dataclass
class DistanceTable:
    exact: np.ndarray
    quantized: np.ndarray
    b: int

    def __len__(self) -> int:
        return len(self.exact)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "exact", "quantized"])
            for j, (d, q) in enumerate(zip(self.exact, self.quantized), start=1):
                w.writerow([j, repr(float(d)), int(q)])


def distance_table(v0, training, b: int = 8) -> DistanceTable:
    """Closed-form swap-test distances 1/2 - <v0, v_j>^2 / 2 and their b-bit codes."""
    v0 = _as_array(v0)
    V = np.array([_as_array(v) for v in training])
    overlap = V @ v0
    exact = np.clip(0.5 - 0.5 * overlap ** 2, 0.0, 0.5)
    return DistanceTable(exact, quantize_distance(exact, b), b)


# --------------------------------------------------------------------------
# amplitude estimation


@dataclass(frozen=True)
class AeConfig:
    """Phase-register width t; R = 2**t - 1 Grover-operator applications."""

    t: int = 10
    delta: float | None = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"amplitude estimation needs t >= 1, got {self.t}")

    @property
    def R(self) -> int:
        return 2 ** self.t - 1

    @classmethod
    def from_delta(cls, delta: float) -> "AeConfig":
        """Smallest register whose iteration count meets R >= pi (pi + 1) / delta."""
        need = math.pi * (math.pi + 1) / delta
        return cls(t=max(1, math.ceil(math.log2(need + 1))), delta=delta)


@dataclass
class AmplitudeProblem:
    """A = `gates` applied to `initial`; the good subspace is `objective` reading 1."""

    initial: StateVector
    gates: list[GateOp]
    objective: int

    @classmethod
    def bernoulli(cls, p: float) -> "AmplitudeProblem":
        if not 0 <= p <= 1:
            raise ValueError(f"probability must lie in [0, 1], got {p}")
        layout = QubitRegisterLayout([("q", 1)])
        return cls(StateVector.zeros(layout), [qsim.ry(0, 2 * math.asin(math.sqrt(p)))], 0)

    def prepared(self) -> StateVector:
        return run_circuit(self.initial, self.gates)

    def good_probability(self) -> float:
        return qsim.marginal_probability(self.prepared(), self.objective, 1)

    def grover_matrix(self) -> np.ndarray:
        """Q = C (2|psi0><psi0| - I) C^dagger S_good, with C the gate list."""
        n = self.initial.n_qubits
        d = 2 ** n
        layout = QubitRegisterLayout([("q", n)])
        cols = []
        refl = qsim.reflection(StateVector(layout, self.initial.amplitudes))
        marked = ((np.arange(d) >> (n - 1 - self.objective)) & 1).astype(bool)
        oracle = qsim.phase_oracle(tuple(range(n)), marked)
        circuit = [oracle] + qsim.inverse_circuit(self.gates) + [refl] + list(self.gates)
        for i in range(d):
            e = np.zeros(d, dtype=np.complex128)
            e[i] = 1
            cols.append(run_circuit(StateVector(layout, e), circuit).amplitudes)
        return np.stack(cols, axis=1)


def _inverse_qft(t: int) -> np.ndarray:
    T = 2 ** t
    k = np.arange(T)
    return np.exp(-2j * np.pi * np.outer(k, k) / T) / np.sqrt(T)


DENSE_AE_QUBITS = 8


def phase_distribution(problem: AmplitudeProblem, cfg: AeConfig) -> np.ndarray:
    """Exact distribution of the measured phase-register value y.

    Small systems run the full phase-estimation circuit with controlled
    powers of the Grover operator.  Larger ones run it on the two-dimensional
    invariant subspace spanned by the good and bad components of A|0>, where
    the Grover operator acts as a rotation by 4*arcsin(a); the y statistics
    are identical.
    """
    t = cfg.t
    if problem.initial.n_qubits <= DENSE_AE_QUBITS:
        system = problem.prepared()
        Q = problem.grover_matrix()
    else:
        p = min(max(problem.good_probability(), 0.0), 1.0)
        reduced = AmplitudeProblem.bernoulli(p)
        system = reduced.prepared()
        Q = reduced.grover_matrix()
    phase_layout = QubitRegisterLayout([("phase", t)])
    layout = phase_layout.concat(QubitRegisterLayout([("sys", system.n_qubits)]))
    state = StateVector(layout, np.kron(StateVector.zeros(phase_layout).amplitudes, system.amplitudes))
    pq = layout.qubits("phase")
    sq = layout.qubits("sys")
    for q in pq:
        state = apply_gate(state, qsim.h(q))
    power = Q
    for k in range(t):
        # phase qubit with weight 2**k sits at position t-1-k of the register
        state = apply_gate(state, qsim.unitary(sq, power, controls=(pq[t - 1 - k],)))
        power = power @ power
    state = apply_gate(state, qsim.unitary(pq, _inverse_qft(t)))
    return state.register_probabilities("phase")


def amplitude_estimate(problem: AmplitudeProblem | float, cfg: AeConfig, rng: np.random.Generator) -> float:
    """Single-shot amplitude estimation: sin^2(pi y / 2**t) for a sampled y."""
    if isinstance(problem, (int, float)):
        problem = AmplitudeProblem.bernoulli(float(problem))
    probs = phase_distribution(problem, cfg)
    y = int(rng.choice(len(probs), p=probs / probs.sum()))
    return math.sin(math.pi * y / 2 ** cfg.t) ** 2


# --------------------------------------------------------------------------
# similarity register


def sigma_from_codes(codes: Sequence[int], b: int, cap: int = qsim.DEFAULT_QUBIT_CAP) -> StateVector:
    """(1/sqrt M) sum_j |j>|codes[j-1]> over registers (index, distance)."""
    codes = np.asarray(codes, dtype=np.int64)
    M = len(codes)
    idx, _ = uniform_index_state("index", M, cap)
    layout = QubitRegisterLayout(idx.layout.registers + (qsim.Register("distance", b),), cap=cap)
    zeros = np.zeros(2 ** b)
    zeros[0] = 1
    state = StateVector(layout, np.kron(idx.amplitudes, zeros))
    table = np.zeros(2 ** layout.width("index"), dtype=np.int64)
    table[1:M + 1] = codes
    return apply_gate(state, qsim.lookup(layout.qubits("index"), layout.qubits("distance"), table))


def circuit_distances(v0, training, cap: int = qsim.DEFAULT_QUBIT_CAP) -> np.ndarray:
    """Swap-test P(1) per training vector from the simulated circuits,
    conditioning |beta> on each index branch."""
    alpha = encoded_state(prepare_alpha(v0, cap))
    beta = prepare_beta(training, cap)
    return np.array([swap_test_distance(alpha, encoded_state(beta, j)) for j in range(1, len(training) + 1)])


def build_sigma(v0, training, cfg: QknnConfig, rng: np.random.Generator | None = None,
                mode: str = "oracle") -> tuple[StateVector, np.ndarray]:
    """Similarity state and the per-index distance estimates loaded into it.

    mode="full" runs state preparation, the swap test and amplitude
    estimation per index; mode="oracle" loads the closed-form distances.
    """
    b = cfg.b
    if mode == "full":
        if rng is None:
            raise ValueError("full-circuit mode needs an rng for amplitude estimation")
        exact = circuit_distances(v0, training, cfg.qubit_cap)
        ae = AeConfig(t=cfg.phase_qubits)
        estimates = np.array([amplitude_estimate(float(d), ae, rng) for d in exact])
    elif mode == "oracle":
        estimates = distance_table(v0, training, b).exact
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'full' or 'oracle'")
    return sigma_from_codes(quantize_distance(estimates, b), b, cfg.qubit_cap), estimates


# --------------------------------------------------------------------------
# search


@dataclass
class SearchStats:
    grover_iterations: int = 0
    oracle_calls: int = 0
    measurements: int = 0


def _index_count(sigma: StateVector) -> int:
    probs = sigma.register_probabilities("index")
    return int(np.count_nonzero(probs > 1e-12))


def _marked_mask(sigma: StateVector, threshold, exclude, values) -> np.ndarray:
    index = sigma.register_values("index")
    if values is None:
        good = sigma.register_values("distance") < threshold
    else:
        ext = np.full(2 ** sigma.layout.width("index"), np.inf)
        ext[1:len(values) + 1] = values
        good = ext[index] < threshold
    if len(exclude):
        good &= ~np.isin(index, np.asarray(list(exclude)))
    return good


def grover_threshold_search(sigma: StateVector, threshold, budget: int, rng: np.random.Generator, *,
                            exclude: Sequence[int] = (), values: np.ndarray | None = None,
                            stats: SearchStats | None = None, max_rounds: int = 10_000) -> int | None:
    """Find an index whose distance is below `threshold` and not in `exclude`.

    The marked count is unknown, so rounds draw their Grover iteration count
    uniformly below a growing cap (BBHT schedule), restart from `sigma`, and
    measure.  Iterations are charged to `stats`; the search gives up with
    None once `budget` iterations are spent.  Predicates read the `distance`
    register of `sigma` unless `values` (indexed from j=1) is given.
    """
    stats = stats if stats is not None else SearchStats()
    n = sigma.n_qubits
    mask = _marked_mask(sigma, threshold, exclude, values)
    oracle = qsim.phase_oracle(tuple(range(n)), mask)
    diffuse = qsim.reflection(sigma)
    cap = math.sqrt(_index_count(sigma))
    lam = 1.0
    remaining = budget
    for _ in range(max_rounds):
        r = min(int(rng.integers(0, math.ceil(lam))), remaining)
        state = sigma
        for _ in range(r):
            state = apply_gate(apply_gate(state, oracle), diffuse)
        remaining -= r
        stats.grover_iterations += r
        stats.oracle_calls += r
        bits, collapsed = qsim.measure_register(state, "index", rng)
        stats.measurements += 1
        j = int(bits, 2)
        if values is None:
            code = int(collapsed.register_probabilities("distance").argmax())
            hit = code < threshold and j not in exclude
        else:
            hit = 1 <= j <= len(values) and values[j - 1] < threshold and j not in exclude
        if hit:
            return j
        if remaining <= 0:
            return None
        lam = min(GROWTH * lam, cap)
    return None


@dataclass
class SearchResult:
    indexes: tuple[int, ...]
    grover_iterations: int
    oracle_calls: int
    budget: int
    success: bool
    history: list[tuple[float, ...]] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.indexes)) != len(self.indexes):
            raise ValueError(f"search returned repeated indexes {self.indexes}")
        if min(self.indexes) < 1:
            raise ValueError(f"indexes are 1-based, got {self.indexes}")
        if self.grover_iterations > self.budget:
            raise AssertionError(f"{self.grover_iterations} Grover iterations exceed budget {self.budget}")


def search_budget(k: int, M: int, c: float = 1.0) -> int:
    """Grover-iteration budget c * ceil(sqrt(k M))."""
    return int(math.floor(c * math.ceil(math.sqrt(k * M)) + 1e-9))


def durr_k_min(source: StateVector | DistanceTable, k: int, rng: np.random.Generator, c: float = 1.0, *,
               use_exact: bool = False) -> SearchResult:
    """k smallest distances by repeated threshold search.

    `source` is a similarity state with (index, distance) registers, or a
    distance table, in which case the search runs over a bare index register
    and the oracle reads the table (codes, or exact values with `use_exact`).
    Candidates start as k distinct random indexes; each successful search
    replaces the current worst candidate with a strictly closer index.  The
    returned indexes are ordered nearest first, ties by index.
    """
    if isinstance(source, DistanceTable):
        values = np.asarray(source.exact if use_exact else source.quantized, dtype=float)
        sigma, _ = uniform_index_state("index", len(values))
        oracle_values = values
    else:
        sigma = source
        M = _index_count(sigma)
        values = np.empty(M)
        for j in range(1, M + 1):
            sub, _ = sigma.project(index=j)
            values[j - 1] = sub.register_probabilities("distance").argmax()
        oracle_values = None
    M = len(values)
    if not 1 <= k <= M:
        raise ValueError(f"k must lie in 1..{M}, got {k}")
    budget = search_budget(k, M, c)
    stats = SearchStats()
    K = [int(j) for j in rng.choice(np.arange(1, M + 1), size=k, replace=False)]
    history = [tuple(sorted(values[j - 1] for j in K))]
    trace = [f"start K={K} budget={budget}"]

    while stats.grover_iterations < budget:
        worst_pos = max(range(k), key=lambda p: (values[K[p] - 1], K[p]))
        threshold = values[K[worst_pos] - 1]
        found = grover_threshold_search(sigma, threshold, budget - stats.grover_iterations, rng,
                                        exclude=K, values=oracle_values, stats=stats)
        if found is None:
            trace.append(f"iter={stats.grover_iterations} no index below {threshold:g}")
            break
        trace.append(f"iter={stats.grover_iterations} K[{worst_pos}]: {K[worst_pos]} -> {found} "
                     f"({threshold:g} -> {values[found - 1]:g})")
        K[worst_pos] = found
        history.append(tuple(sorted(values[j - 1] for j in K)))

    K.sort(key=lambda j: (values[j - 1], j))
    best = np.sort(values)[:k]
    success = bool(np.array_equal(np.sort(values[np.array(K) - 1]), best))
    return SearchResult(tuple(K), stats.grover_iterations, stats.oracle_calls, budget, success, history, trace)


def majority_vote(indexes: Sequence[int], labels: Sequence[Hashable]) -> Hashable:
    """Most frequent label among `labels[j-1]`; ties go to the label seen first."""
    if len(indexes) == 0:
        raise ValueError("cannot vote over an empty index list")
    votes = [labels[j - 1] for j in indexes]
    counts = Counter(votes)
    top = max(counts.values())
    return next(v for v in votes if counts[v] == top)
