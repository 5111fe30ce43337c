"""Synchronous flip-flop backend: netlist extraction, simulation, compression.

One bit per (subformula, state) pair, numbered bit = subformula_index * N +
state.  Binder bits are set/reset-dominant latches, delay bits are pipeline
registers, everything else is combinational.  Expressions reference other
bits through same-cycle reads ``(c k)`` or registered reads ``(r k)``; every
dependency cycle passes through a registered read, which extraction verifies
rather than assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formula import (KIND_COMB, KIND_MU, KIND_NU, KIND_PIPELINE, And, Atom,
                      Box, Diamond, Formula, Not, Or, Var, closure)


class CircuitError(ValueError):
    """Malformed netlist."""


class CombinationalCycleError(CircuitError):
    """A cycle in the same-cycle read dependencies."""


class NoSettleError(RuntimeError):
    """Internal-consistency failure: the circuit missed its settle bound."""


# Expression forms: ("const", bool) | ("reg", bit) | ("comb", bit)
#                 | ("and", (expr, ...)) | ("or", (expr, ...))

CONST_T = ("const", True)
CONST_F = ("const", False)


@dataclass(frozen=True)
class Circuit:
    """Netlist over m*N bits with per-subformula latch kinds."""

    n_subformulas: int
    n_states: int
    kinds: tuple            # per subformula
    exprs: tuple            # per bit
    reset: tuple            # per bit, bool
    formula_size: int = 0   # syntactic |phi|, 0 when loaded without provenance
    _order: tuple = field(default=None, compare=False, repr=False)

    @property
    def n_bits(self):
        return self.n_subformulas * self.n_states

    def bit(self, i, s):
        return i * self.n_states + s

    def kind_of_bit(self, b):
        return self.kinds[b // self.n_states]

    def is_register_bit(self, b):
        return self.kind_of_bit(b) in (KIND_MU, KIND_NU, KIND_PIPELINE)

    def step(self, values):
        """One rising edge: latch registers from the settled vector."""
        regs = values.copy()
        for b in range(self.n_bits):
            kind = self.kind_of_bit(b)
            if kind == KIND_COMB:
                continue
            inp = _eval_expr(self.exprs[b], values, values)
            if kind == KIND_MU:
                regs[b] = values[b] or inp
            elif kind == KIND_NU:
                regs[b] = values[b] and inp
            else:
                regs[b] = inp
        return self.settle_nets(regs)

    def settle_nets(self, regs):
        """Settled full vector given register bit values."""
        values = list(regs)
        for b in self._net_order():
            values[b] = _eval_expr(self.exprs[b], values, values)
        return values

    def _net_order(self):
        if self._order is None:
            object.__setattr__(self, "_order", tuple(_comb_topo_order(self)))
        return self._order

    def initial_vector(self):
        return list(self.reset)


def _eval_expr(expr, comb_values, reg_values):
    tag = expr[0]
    if tag == "const":
        return expr[1]
    if tag == "comb":
        return comb_values[expr[1]]
    if tag == "reg":
        return reg_values[expr[1]]
    if tag == "and":
        return all(_eval_expr(e, comb_values, reg_values) for e in expr[1])
    if tag == "or":
        return any(_eval_expr(e, comb_values, reg_values) for e in expr[1])
    raise CircuitError(f"bad expression tag {tag!r}")


def _comb_reads(expr):
    tag = expr[0]
    if tag == "comb":
        yield expr[1]
    elif tag in ("and", "or"):
        for e in expr[1]:
            yield from _comb_reads(e)


def _comb_topo_order(circuit):
    """Topological order of combinational bits; registered reads break cycles."""
    comb_bits = [b for b in range(circuit.n_bits)
                 if circuit.kind_of_bit(b) == KIND_COMB]
    deps = {b: [d for d in _comb_reads(circuit.exprs[b])
                if circuit.kind_of_bit(d) == KIND_COMB]
            for b in comb_bits}
    indeg = {b: 0 for b in comb_bits}
    rdeps = {b: [] for b in comb_bits}
    for b, ds in deps.items():
        for d in ds:
            indeg[b] += 1
            rdeps[d].append(b)
    ready = sorted(b for b, k in indeg.items() if k == 0)
    order = []
    while ready:
        b = ready.pop(0)
        order.append(b)
        for r in sorted(rdeps[b]):
            indeg[r] -= 1
            if indeg[r] == 0:
                ready.append(r)
        ready.sort()
    if len(order) != len(comb_bits):
        raise CombinationalCycleError(
            "combinational cycle: a Var read escaped every register")
    return order


def extract(f, model):
    """Compile formula + model to a netlist with verified acyclicity."""
    if not isinstance(f, Formula):
        f = Formula(f)
    clo = closure(f)
    n = model.n
    exprs = []
    for i, node in enumerate(clo.items):
        kind = clo.kinds[i]
        for s in range(n):
            if kind in (KIND_MU, KIND_NU, KIND_PIPELINE):
                # register input: same-cycle read of the body/child bit
                exprs.append(("comb", clo.child_index[i][0] * n + s))
            elif isinstance(node, Atom):
                exprs.append(CONST_T if s in model.atom_states(node.name)
                             else CONST_F)
            elif isinstance(node, Not):
                exprs.append(CONST_F if s in model.atom_states(node.child.name)
                             else CONST_T)
            elif isinstance(node, Var):
                binder = clo.binder_of_var[node.name]
                exprs.append(("reg", binder * n + s))
            elif isinstance(node, And):
                a, b = clo.child_index[i]
                exprs.append(("and", (("comb", a * n + s), ("comb", b * n + s))))
            elif isinstance(node, Or):
                a, b = clo.child_index[i]
                exprs.append(("or", (("comb", a * n + s), ("comb", b * n + s))))
            elif isinstance(node, Diamond):
                (c,) = clo.child_index[i]
                succ = model.successors(s)
                exprs.append(("or", tuple(("comb", c * n + t) for t in succ))
                             if succ else CONST_F)
            elif isinstance(node, Box):
                (c,) = clo.child_index[i]
                succ = model.successors(s)
                exprs.append(("and", tuple(("comb", c * n + t) for t in succ))
                             if succ else CONST_T)
            else:
                raise TypeError(f"unexpected node {node!r}")

    circuit = Circuit(n_subformulas=clo.m, n_states=n, kinds=clo.kinds,
                      exprs=tuple(exprs), reset=(False,) * (clo.m * n),
                      formula_size=f.size)
    _comb_topo_order(circuit)  # acyclicity check
    reset = _compute_reset(circuit)
    return Circuit(n_subformulas=clo.m, n_states=n, kinds=clo.kinds,
                   exprs=tuple(exprs), reset=tuple(reset),
                   formula_size=f.size)


def _compute_reset(circuit):
    """Reset vector: mu latches low, nu latches high, pipelines settled."""
    n = circuit.n_states
    values = [False] * circuit.n_bits
    for b in range(circuit.n_bits):
        if circuit.kind_of_bit(b) == KIND_NU:
            values[b] = True
    # pipelines seed from their input nets; a pipeline may feed another, so
    # iterate to a fixed point (depth bounded by delay nesting)
    order = circuit._net_order()
    pipeline_bits = [b for b in range(circuit.n_bits)
                     if circuit.kind_of_bit(b) == KIND_PIPELINE]
    for _ in range(len(pipeline_bits) + 1):
        for b in order:
            values[b] = _eval_expr(circuit.exprs[b], values, values)
        changed = False
        for b in pipeline_bits:
            v = _eval_expr(circuit.exprs[b], values, values)
            if v != values[b]:
                values[b] = v
                changed = True
        if not changed:
            break
    for b in order:
        values[b] = _eval_expr(circuit.exprs[b], values, values)
    return values


@dataclass
class SettleReport:
    """Simulation outcome: settle time, toggles, metastability flags."""

    settle_time: int
    history: list           # settled vectors q^0 .. q^{settle+1}
    toggles: list           # (cycle t, bit, new value) meaning q^{t+1} flips bit
    metastable: list        # m^t = [q^t == q^{t-1}] for t >= 1
    quiescent: list

    def toggle_log(self):
        """Per bit, the cycles at which it toggled (at most one per run
        for single-polarity formulas)."""
        log = {}
        for cycle, bit, _ in self.toggles:
            log.setdefault(bit, []).append(cycle)
        return log

    def to_vcd_lines(self):
        return [f"{cycle} {bit} {int(value)}"
                for cycle, bit, value in self.toggles]


def simulate(circuit, max_cycles):
    """Clock the circuit until quiescence; raises if the bound is missed."""
    values = circuit.settle_nets(circuit.initial_vector())
    history = [values]
    toggles = []
    metastable = []
    settle = None
    for t in range(max_cycles + 1):
        nxt = circuit.step(values)
        history.append(nxt)
        metastable.append(1 if nxt == values else 0)
        for b, (old, new) in enumerate(zip(values, nxt)):
            if old != new:
                toggles.append((t, b, new))
        if nxt == values:
            settle = t
            break
        values = nxt
    if settle is None:
        raise NoSettleError(f"no quiescence within {max_cycles} cycles")
    return SettleReport(settle_time=settle, history=history, toggles=toggles,
                        metastable=metastable, quiescent=history[settle])


class CompressedCircuit(Circuit):
    """Hazard-squashed transform: one macro step applies the base update and
    then iterates it to its inner closure."""

    def step(self, values):
        nxt = super().step(values)
        guard = 4 * self.n_bits + 4
        for _ in range(guard):
            after = super().step(nxt)
            if after == nxt:
                return nxt
            nxt = after
        raise NoSettleError("inner closure failed to stabilize")


def compress(circuit):
    """Return the compressed circuit; quiescent vector is preserved and the
    settle time drops to at most ceil(log2 m)."""
    return CompressedCircuit(n_subformulas=circuit.n_subformulas,
                             n_states=circuit.n_states, kinds=circuit.kinds,
                             exprs=circuit.exprs, reset=circuit.reset,
                             formula_size=circuit.formula_size)


# ---------------------------------------------------------------------------
# Netlist document

def _expr_text(expr):
    tag = expr[0]
    if tag == "const":
        return "T" if expr[1] else "F"
    if tag == "comb":
        return f"(c {expr[1]})"
    if tag == "reg":
        return f"(r {expr[1]})"
    op = "&" if tag == "and" else "|"
    inner = " ".join(_expr_text(e) for e in expr[1])
    return f"({op} {inner})" if inner else f"({op})"


def emit_netlist(circuit):
    """Deterministic textual netlist; round-trips through load_netlist."""
    lines = [f"subformulas {circuit.n_subformulas}",
             f"states {circuit.n_states}",
             f"size {circuit.formula_size}"]
    for i, kind in enumerate(circuit.kinds):
        lines.append(f"kind {i} {kind}")
    for b in range(circuit.n_bits):
        lines.append(f"bit {b} {_expr_text(circuit.exprs[b])}")
    lines.append("reset " + "".join("1" if v else "0" for v in circuit.reset))
    return "\n".join(lines) + "\n"


def _parse_expr(text, pos=0):
    while pos < len(text) and text[pos] == " ":
        pos += 1
    if pos >= len(text):
        raise CircuitError("truncated expression")
    ch = text[pos]
    if ch == "T":
        return CONST_T, pos + 1
    if ch == "F":
        return CONST_F, pos + 1
    if ch != "(":
        raise CircuitError(f"bad expression at {text[pos:pos + 10]!r}")
    pos += 1
    while text[pos] == " ":
        pos += 1
    head = text[pos]
    pos += 1
    if head in ("c", "r"):
        end = pos
        while end < len(text) and text[end] not in ")":
            end += 1
        bit = int(text[pos:end].strip())
        return ("comb" if head == "c" else "reg", bit), end + 1
    if head in ("&", "|"):
        parts = []
        while True:
            while pos < len(text) and text[pos] == " ":
                pos += 1
            if pos >= len(text):
                raise CircuitError("unterminated expression")
            if text[pos] == ")":
                tag = "and" if head == "&" else "or"
                return (tag, tuple(parts)), pos + 1
            expr, pos = _parse_expr(text, pos)
            parts.append(expr)
    raise CircuitError(f"bad expression head {head!r}")


def load_netlist(text):
    """Parse an emitted netlist back into a Circuit (with acyclicity check)."""
    n_subf = n_states = size = None
    kinds = {}
    exprs = {}
    reset = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "subformulas":
                n_subf = int(rest)
            elif head == "states":
                n_states = int(rest)
            elif head == "size":
                size = int(rest)
            elif head == "kind":
                idx, kind = rest.split()
                if kind not in (KIND_MU, KIND_NU, KIND_PIPELINE, KIND_COMB):
                    raise CircuitError(f"line {lineno}: unknown kind {kind!r}")
                kinds[int(idx)] = kind
            elif head == "bit":
                idx, expr_text = rest.split(" ", 1)
                expr, _ = _parse_expr(expr_text.strip())
                exprs[int(idx)] = expr
            elif head == "reset":
                reset = tuple(ch == "1" for ch in rest.strip())
            else:
                raise CircuitError(f"line {lineno}: unknown directive {head!r}")
        except (ValueError, IndexError) as exc:
            raise CircuitError(f"line {lineno}: {exc}") from exc
    if n_subf is None or n_states is None or reset is None:
        raise CircuitError("netlist needs subformulas, states and reset lines")
    n_bits = n_subf * n_states
    if sorted(kinds) != list(range(n_subf)) or sorted(exprs) != list(range(n_bits)):
        raise CircuitError("netlist is missing kind or bit lines")
    if len(reset) != n_bits:
        raise CircuitError("reset vector length mismatch")
    circuit = Circuit(n_subformulas=n_subf, n_states=n_states,
                      kinds=tuple(kinds[i] for i in range(n_subf)),
                      exprs=tuple(exprs[b] for b in range(n_bits)),
                      reset=reset, formula_size=size or 0)
    _comb_topo_order(circuit)
    return circuit


def stage_matrices(report, n_subformulas, n_states):
    """Per-cycle settled vectors as (m, N) boolean matrices."""
    return [np.array(vec, dtype=bool).reshape(n_subformulas, n_states)
            for vec in report.history]
