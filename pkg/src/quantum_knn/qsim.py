"""Dense statevector simulator over named qubit registers.

Qubits are numbered globally in layout order; qubit 0 is the most significant
bit of the flat amplitude index, and within a register the first qubit carries
the highest-weight bit of the register value.  Register-valued gates
(comparator, lookup, phase oracle) are applied as permutations or diagonals on
the computational basis rather than decomposed into elementary gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

DEFAULT_QUBIT_CAP = 26
NORM_TOL = 1e-9


class CapacityError(ValueError):
    """Raised when a layout or register cannot hold what is asked of it."""


@dataclass(frozen=True)
class Register:
    name: str
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"register {self.name!r} needs width >= 1, got {self.width}")


class QubitRegisterLayout:
    """Ordered, uniquely named registers and their global qubit indexes."""

    def __init__(self, registers: Iterable[Register | tuple[str, int]], cap: int = DEFAULT_QUBIT_CAP):
        regs = tuple(r if isinstance(r, Register) else Register(*r) for r in registers)
        names = [r.name for r in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"register names must be unique: {names}")
        self.registers = regs
        self.cap = cap
        self._offsets = {}
        off = 0
        for r in regs:
            self._offsets[r.name] = off
            off += r.width
        self.n_qubits = off
        if off > cap:
            raise CapacityError(f"layout needs {off} qubits, cap is {cap}")

    def __contains__(self, name: str) -> bool:
        return name in self._offsets

    def __eq__(self, other) -> bool:
        if not isinstance(other, QubitRegisterLayout):
            return NotImplemented
        return self.registers == other.registers

    def __repr__(self) -> str:
        inner = ", ".join(f"{r.name}:{r.width}" for r in self.registers)
        return f"QubitRegisterLayout({inner})"

    def register(self, name: str) -> Register:
        for r in self.registers:
            if r.name == name:
                return r
        raise KeyError(f"no register named {name!r} in {self!r}")

    def width(self, name: str) -> int:
        return self.register(name).width

    def qubits(self, name: str) -> tuple[int, ...]:
        if name not in self._offsets:
            raise KeyError(f"no register named {name!r} in {self!r}")
        off = self._offsets[name]
        return tuple(range(off, off + self.width(name)))

    def qubit(self, name: str, bit: int = 0) -> int:
        return self.qubits(name)[bit]

    def concat(self, other: "QubitRegisterLayout") -> "QubitRegisterLayout":
        return QubitRegisterLayout(self.registers + other.registers, cap=min(self.cap, other.cap))

    def without(self, name: str) -> "QubitRegisterLayout":
        return QubitRegisterLayout([r for r in self.registers if r.name != name], cap=self.cap)


def _bits_value(index: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Integer value carried by `qubits` (first qubit most significant) for each basis index."""
    value = np.zeros_like(index)
    for q in qubits:
        value = (value << 1) | ((index >> (n - 1 - q)) & 1)
    return value


@lru_cache(maxsize=256)
def _register_values(n: int, qubits: tuple[int, ...]) -> np.ndarray:
    values = _bits_value(np.arange(2 ** n, dtype=np.int64), qubits, n)
    values.flags.writeable = False
    return values


def _scatter_bits(value: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Inverse of `_bits_value`: a basis-index mask with `value` written onto `qubits`."""
    out = np.zeros_like(value)
    k = len(qubits)
    for pos, q in enumerate(qubits):
        out |= ((value >> (k - 1 - pos)) & 1) << (n - 1 - q)
    return out


class StateVector:
    """Complex amplitudes over a register layout."""

    def __init__(self, layout: QubitRegisterLayout, amplitudes: np.ndarray):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (2 ** layout.n_qubits,):
            raise ValueError(
                f"expected {2 ** layout.n_qubits} amplitudes for {layout!r}, got shape {amplitudes.shape}"
            )
        self.layout = layout
        self.amplitudes = amplitudes

    @classmethod
    def zeros(cls, layout: QubitRegisterLayout) -> "StateVector":
        amps = np.zeros(2 ** layout.n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(layout, amps)

    @classmethod
    def basis(cls, layout: QubitRegisterLayout, **values: int) -> "StateVector":
        n = layout.n_qubits
        index = 0
        for name, v in values.items():
            w = layout.width(name)
            if not 0 <= v < 2 ** w:
                raise CapacityError(f"value {v} does not fit register {name!r} of width {w}")
            index |= int(_scatter_bits(np.array([v]), layout.qubits(name), n)[0])
        amps = np.zeros(2 ** n, dtype=np.complex128)
        amps[index] = 1.0
        return cls(layout, amps)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "StateVector") -> complex:
        if self.layout != other.layout:
            raise ValueError(f"layout mismatch: {self.layout!r} vs {other.layout!r}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(self.layout.concat(other.layout), np.kron(self.amplitudes, other.amplitudes))

    def register_values(self, name: str) -> np.ndarray:
        """Value of register `name` at every flat basis index."""
        return _register_values(self.n_qubits, self.layout.qubits(name))

    def register_probabilities(self, name: str) -> np.ndarray:
        probs = self.probabilities()
        return np.bincount(self.register_values(name), weights=probs, minlength=2 ** self.layout.width(name))

    def amplitude(self, **values: int) -> complex:
        """Amplitude of one basis state given every register's value."""
        missing = [r.name for r in self.layout.registers if r.name not in values]
        if missing:
            raise KeyError(f"values missing for registers {missing}")
        ref = StateVector.basis(self.layout, **values)
        return complex(self.amplitudes[int(np.argmax(np.abs(ref.amplitudes)))])

    def project(self, **values: int) -> tuple["StateVector", float]:
        """Project registers onto fixed values and renormalize; registers stay in the layout."""
        keep = np.ones(2 ** self.n_qubits, dtype=bool)
        for name, v in values.items():
            keep &= self.register_values(name) == v
        amps = np.where(keep, self.amplitudes, 0)
        prob = float(np.sum(np.abs(amps) ** 2))
        if prob <= 0:
            raise ValueError(f"projection onto {values} has zero probability")
        return StateVector(self.layout, amps / np.sqrt(prob)), prob

    def postselect(self, **values: int) -> tuple["StateVector", float]:
        """Project registers onto fixed values and drop them from the layout.

        Returns the renormalized reduced state and the success probability.
        """
        keep = np.ones(2 ** self.n_qubits, dtype=bool)
        for name, v in values.items():
            keep &= self.register_values(name) == v
        reduced = self.amplitudes[keep]
        prob = float(np.sum(np.abs(reduced) ** 2))
        if prob <= 0:
            raise ValueError(f"postselection on {values} has zero probability")
        layout = self.layout
        for name in values:
            layout = layout.without(name)
        return StateVector(layout, reduced / np.sqrt(prob)), prob

    def __repr__(self) -> str:
        return f"StateVector({self.layout!r}, norm={self.norm():.12f})"


# --------------------------------------------------------------------------
# gates


@dataclass(frozen=True, eq=False)
class GateOp:
    """One unitary operation.

    `targets` are global qubit indexes; `controls` maps to `control_value`
    (all-ones when None).  Array-valued parameters (angle tables, masks,
    matrices, reference states) live in `params`.
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    control_value: int | None = None
    params: tuple = field(default_factory=tuple)

    def qubits(self) -> tuple[int, ...]:
        qs = self.targets + self.controls
        if self.kind == "comparator":
            qs = qs + tuple(self.params[1:3])
        elif self.kind == "lookup":
            qs = qs + tuple(self.params[0])
        elif self.kind == "inverse":
            qs = self.params[0].qubits()
        return qs


_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def h(q: int) -> GateOp:
    return GateOp("h", (q,))


def x(q: int) -> GateOp:
    return GateOp("x", (q,))


def ry(q: int, theta: float) -> GateOp:
    return GateOp("ry", (q,), params=(float(theta),))


def cnot(control: int, target: int) -> GateOp:
    return GateOp("cnot", (target,), (control,))


def cswap(control: int, a: Sequence[int], b: Sequence[int]) -> GateOp:
    """Controlled swap of two equally wide qubit groups."""
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ValueError("controlled swap needs equally wide qubit groups")
    return GateOp("cswap", a + b, (control,))


def cry(controls: Sequence[int], target: int, theta: float, value: int | None = None) -> GateOp:
    """Ry on `target` when the control qubits read `value` (all ones by default)."""
    return GateOp("cry", (target,), tuple(controls), value, (float(theta),))


def mux_ry(controls: Sequence[int], target: int, angles: np.ndarray) -> GateOp:
    """Uniformly controlled Ry: angle `angles[c]` when the controls read value c.

    Equal to the product of one `cry` per control value; those factors commute.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (2 ** len(controls),):
        raise ValueError(f"need {2 ** len(controls)} angles, got {angles.shape}")
    return GateOp("mux_ry", (target,), tuple(controls), params=(angles,))


def comparator(register: Sequence[int], bound: int, flag_above: int, flag_zero: int) -> GateOp:
    """Flip `flag_zero` when the register reads 0 and `flag_above` when it exceeds `bound`."""
    register = tuple(register)
    if not 0 <= bound < 2 ** len(register):
        raise CapacityError(f"bound {bound} exceeds the capacity of a {len(register)}-qubit register")
    return GateOp("comparator", register, params=(int(bound), flag_above, flag_zero))


def lookup(index: Sequence[int], value: Sequence[int], table: Sequence[int]) -> GateOp:
    """|j>|y> -> |j>|y xor table[j]>."""
    table = np.asarray(table, dtype=np.int64)
    if table.shape != (2 ** len(index),):
        raise ValueError(f"lookup table needs {2 ** len(index)} entries, got {table.shape}")
    if table.min() < 0 or table.max() >= 2 ** len(value):
        raise CapacityError(f"lookup values exceed a {len(value)}-qubit register")
    return GateOp("lookup", tuple(index), params=(tuple(value), table))


def diffusion(qubits: Sequence[int]) -> GateOp:
    """Reflection about the uniform superposition of `qubits`: 2|s><s| - I."""
    return GateOp("diffusion", tuple(qubits))


def reflection(reference: StateVector) -> GateOp:
    """Reflection about a whole-register reference state: 2|r><r| - I."""
    return GateOp("reflection", tuple(range(reference.n_qubits)), params=(reference.amplitudes.copy(),))


def phase_oracle(qubits: Sequence[int], marked: np.ndarray) -> GateOp:
    """Negate the amplitude of every basis state whose `qubits` value is marked."""
    marked = np.asarray(marked, dtype=bool)
    if marked.shape != (2 ** len(qubits),):
        raise ValueError(f"marking mask needs {2 ** len(qubits)} entries, got {marked.shape}")
    return GateOp("phase_oracle", tuple(qubits), params=(marked,))


def unitary(targets: Sequence[int], matrix: np.ndarray, controls: Sequence[int] = (),
            value: int | None = None) -> GateOp:
    matrix = np.asarray(matrix, dtype=np.complex128)
    d = 2 ** len(targets)
    if matrix.shape != (d, d):
        raise ValueError(f"matrix for {len(targets)} targets must be {d}x{d}")
    return GateOp("unitary", tuple(targets), tuple(controls), value, (matrix,))


_SELF_INVERSE = {"h", "x", "cnot", "cswap", "comparator", "lookup", "diffusion", "reflection", "phase_oracle"}


def inverse(g: GateOp) -> GateOp:
    if g.kind == "inverse":
        return g.params[0]
    return GateOp("inverse", g.targets, g.controls, g.control_value, (g,))


def inverse_circuit(gates: Sequence[GateOp]) -> list[GateOp]:
    return [inverse(g) for g in reversed(gates)]


def _resolve(g: GateOp) -> GateOp:
    """Rewrite an `inverse` op as a concrete op of the same family."""
    if g.kind != "inverse":
        return g
    inner = _resolve(g.params[0])
    if inner.kind in _SELF_INVERSE:
        return inner
    if inner.kind in ("ry", "cry"):
        return GateOp(inner.kind, inner.targets, inner.controls, inner.control_value, (-inner.params[0],))
    if inner.kind == "mux_ry":
        return GateOp("mux_ry", inner.targets, inner.controls, params=(-inner.params[0],))
    if inner.kind == "unitary":
        return GateOp("unitary", inner.targets, inner.controls, inner.control_value,
                      (inner.params[0].conj().T,))
    raise ValueError(f"unknown gate kind {inner.kind!r}")


def _apply_matrix(psi: np.ndarray, n: int, matrix: np.ndarray, targets: Sequence[int],
                  controls: Sequence[int] = (), value: int | None = None) -> np.ndarray:
    t = psi.reshape([2] * n)
    idx: list = [slice(None)] * n
    if controls:
        if value is None:
            value = 2 ** len(controls) - 1
        for pos, c in enumerate(controls):
            idx[c] = (value >> (len(controls) - 1 - pos)) & 1
    sub = t[tuple(idx)]
    # axis of each target inside the control-sliced view
    tax = [q - sum(1 for c in controls if c < q) for q in targets]
    k = len(targets)
    moved = np.moveaxis(sub, tax, range(k))
    rest = moved.shape[k:]
    out = matrix @ moved.reshape(2 ** k, -1)
    sub[...] = np.moveaxis(out.reshape([2] * k + list(rest)), range(k), tax)
    return t.reshape(-1)


def _apply_mux_ry(psi: np.ndarray, n: int, controls: Sequence[int], target: int,
                  angles: np.ndarray) -> np.ndarray:
    c = len(controls)
    t = np.moveaxis(psi.reshape([2] * n), list(controls) + [target], range(c + 1))
    shape = t.shape
    t = t.reshape(2 ** c, 2, -1)
    co = np.cos(angles / 2)[:, None]
    si = np.sin(angles / 2)[:, None]
    a0, a1 = t[:, 0, :], t[:, 1, :]
    out = np.stack([co * a0 - si * a1, si * a0 + co * a1], axis=1)
    return np.moveaxis(out.reshape(shape), range(c + 1), list(controls) + [target]).reshape(-1)


def apply_gate(state: StateVector, g: GateOp) -> StateVector:
    """Return a new state with `g` applied."""
    n = state.n_qubits
    for q in g.qubits():
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit state ({g.kind})")
    if len(set(g.qubits())) != len(g.qubits()):
        raise ValueError(f"gate {g.kind} uses a qubit twice: {g.qubits()}")
    g = _resolve(g)
    psi = state.amplitudes.copy()
    kind = g.kind

    if kind in ("h", "x", "ry", "cnot", "cry", "unitary"):
        if kind == "h":
            m = _H
        elif kind in ("x", "cnot"):
            m = _X
        elif kind in ("ry", "cry"):
            if not np.isfinite(g.params[0]):
                raise ValueError(f"non-finite rotation angle {g.params[0]}")
            m = ry_matrix(g.params[0])
        else:
            m = g.params[0]
        psi = _apply_matrix(psi, n, m, g.targets, g.controls, g.control_value)
    elif kind == "cswap":
        w = len(g.targets) // 2
        for a, b in zip(g.targets[:w], g.targets[w:]):
            psi = _apply_matrix(psi, n, _SWAP, (a, b), g.controls)
    elif kind == "mux_ry":
        psi = _apply_mux_ry(psi, n, g.controls, g.targets[0], g.params[0])
    elif kind in ("comparator", "lookup"):
        index = np.arange(2 ** n, dtype=np.int64)
        reg = _register_values(n, g.targets)
        if kind == "comparator":
            bound, flag_above, flag_zero = g.params
            flip = np.where(reg == 0, 1 << (n - 1 - flag_zero), 0)
            flip |= np.where(reg > bound, 1 << (n - 1 - flag_above), 0)
        else:
            value_qubits, table = g.params
            flip = _scatter_bits(table[reg], value_qubits, n)
        out = np.empty_like(psi)
        out[index ^ flip] = psi
        psi = out
    elif kind == "phase_oracle":
        psi = np.where(g.params[0][_register_values(n, g.targets)], -psi, psi)
    elif kind == "diffusion":
        k = len(g.targets)
        t = np.moveaxis(psi.reshape([2] * n), g.targets, range(k))
        shape = t.shape
        t = t.reshape(2 ** k, -1)
        t = 2 * t.mean(axis=0, keepdims=True) - t
        psi = np.moveaxis(t.reshape(shape), range(k), g.targets).reshape(-1)
    elif kind == "reflection":
        ref = g.params[0]
        psi = 2 * np.vdot(ref, psi) * ref - psi
    else:
        raise ValueError(f"unknown gate kind {kind!r}")
    return StateVector(state.layout, psi)


def run_circuit(state: StateVector, gates: Iterable[GateOp]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def gate_matrix(g: GateOp, n_qubits: int) -> np.ndarray:
    """Dense matrix of `g` on `n_qubits` qubits, built column by column."""
    layout = QubitRegisterLayout([("q", n_qubits)])
    d = 2 ** n_qubits
    cols = []
    for i in range(d):
        e = np.zeros(d, dtype=np.complex128)
        e[i] = 1
        cols.append(apply_gate(StateVector(layout, e), g).amplitudes)
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# measurement


def marginal_probability(state: StateVector, qubit: int, outcome: int) -> float:
    """Born probability that `qubit` reads `outcome`, without collapsing."""
    n = state.n_qubits
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n}-qubit state")
    t = state.probabilities().reshape(2 ** qubit, 2, -1)
    return float(t[:, outcome, :].sum())


def measure_register(state: StateVector, name: str, rng: np.random.Generator) -> tuple[str, StateVector]:
    """Sample register `name` by the Born rule; return its bitstring and the collapsed state."""
    probs = state.register_probabilities(name)
    probs = probs / probs.sum()
    value = int(rng.choice(len(probs), p=probs))
    collapsed, _ = state.project(**{name: value})
    return format(value, f"0{state.layout.width(name)}b"), collapsed


# --------------------------------------------------------------------------
# trace


def describe(g: GateOp) -> str:
    """One-line text form of a gate, used by circuit traces."""
    parts = [g.kind, "t=" + ",".join(map(str, g.targets))]
    if g.controls:
        parts.append("c=" + ",".join(map(str, g.controls)))
        if g.control_value is not None:
            parts.append(f"cv={g.control_value}")
    if g.kind in ("ry", "cry"):
        parts.append(f"theta={g.params[0]:.12g}")
    elif g.kind == "comparator":
        parts.append(f"bound={g.params[0]} flags={g.params[1]},{g.params[2]}")
    elif g.kind == "lookup":
        parts.append("v=" + ",".join(map(str, g.params[0])))
    elif g.kind == "mux_ry":
        parts.append(f"angles[{len(g.params[0])}]")
    elif g.kind == "phase_oracle":
        parts.append(f"marked={int(np.count_nonzero(g.params[0]))}")
    elif g.kind == "inverse":
        return "inverse(" + describe(g.params[0]) + ")"
    return " ".join(parts)


def write_trace(gates: Iterable[GateOp], path) -> None:
    with open(path, "w") as fh:
        for g in gates:
            fh.write(describe(g) + "\n")
