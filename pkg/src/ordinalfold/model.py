"""Finite Kripke models, fixture generators and serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class ModelFormatError(ValueError):
    """Raised for malformed model documents or inconsistent fields."""


@dataclass(frozen=True)
class KripkeModel:
    """Finite frame: dense state indices 0..n-1, adjacency and atom valuation."""

    n: int
    edges: tuple            # tuple of (src, dst), sorted, deduplicated
    valuation: dict         # atom name -> frozenset of states
    designated: int | None = None
    _succ: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ModelFormatError("a model needs at least one state (N >= 1)")
        for s, t in self.edges:
            if not (0 <= s < self.n and 0 <= t < self.n):
                raise ModelFormatError(f"edge {s} -> {t} out of range for N={self.n}")
        for atom, states in self.valuation.items():
            for s in states:
                if not (0 <= s < self.n):
                    raise ModelFormatError(
                        f"valuation of {atom} mentions out-of-range state {s}")
        if self.designated is not None and not (0 <= self.designated < self.n):
            raise ModelFormatError(f"designated state {self.designated} out of range")
        succ = [[] for _ in range(self.n)]
        for s, t in self.edges:
            succ[s].append(t)
        object.__setattr__(self, "_succ", tuple(tuple(sorted(set(ts))) for ts in succ))

    def successors(self, s):
        return self._succ[s]

    def atom_states(self, name):
        """States where the atom holds; unknown atoms are empty."""
        return self.valuation.get(name, frozenset())

    @property
    def root(self):
        return self.designated if self.designated is not None else 0


def make_model(n, edges, valuation, designated=None):
    norm_edges = tuple(sorted(set((int(s), int(t)) for s, t in edges)))
    norm_val = {str(a): frozenset(int(s) for s in states)
                for a, states in sorted(valuation.items())}
    return KripkeModel(n=int(n), edges=norm_edges, valuation=norm_val,
                       designated=designated)


# ---------------------------------------------------------------------------
# Serialization.  Two interchangeable formats: a line-oriented text document
# and a JSON object with the same fields.

def load_model(text):
    """Parse a model document (text sections or a JSON object)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _load_json(stripped)
    return _load_text(text)


def _load_json(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad JSON model document: {exc}") from exc
    if not isinstance(obj, dict) or "states" not in obj:
        raise ModelFormatError("JSON model document needs a 'states' field")
    try:
        return make_model(obj["states"], obj.get("edges", ()),
                          obj.get("valuation", {}), obj.get("designated"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"bad JSON model document: {exc}") from exc


def _load_text(text):
    n = None
    edges = []
    valuation = {}
    designated = None
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("states:"):
            n = _parse_int(line.split(":", 1)[1], lineno)
            section = None
        elif line == "edges:":
            section = "edges"
        elif line == "valuation:":
            section = "valuation"
        elif line.startswith("designated:"):
            designated = _parse_int(line.split(":", 1)[1], lineno)
            section = None
        elif section == "edges":
            if "->" not in line:
                raise ModelFormatError(f"line {lineno}: expected 'src -> dst'")
            src, dst = line.split("->", 1)
            edges.append((_parse_int(src, lineno), _parse_int(dst, lineno)))
        elif section == "valuation":
            if ":" not in line:
                raise ModelFormatError(f"line {lineno}: expected 'atom: s1 s2 ...'")
            atom, states = line.split(":", 1)
            atom = atom.strip()
            valuation[atom] = [_parse_int(tok, lineno) for tok in states.split()]
        else:
            raise ModelFormatError(f"line {lineno}: unexpected content {line!r}")
    if n is None:
        raise ModelFormatError("missing 'states:' section")
    return make_model(n, edges, valuation, designated)


def _parse_int(token, lineno):
    try:
        return int(token.strip())
    except ValueError:
        raise ModelFormatError(f"line {lineno}: not an integer: {token.strip()!r}")


def save_model(m):
    """Text document form; load_model(save_model(m)) == m field-by-field."""
    lines = [f"states: {m.n}", "edges:"]
    lines.extend(f"{s} -> {t}" for s, t in m.edges)
    lines.append("valuation:")
    for atom in sorted(m.valuation):
        states = " ".join(str(s) for s in sorted(m.valuation[atom]))
        lines.append(f"{atom}: {states}")
    if m.designated is not None:
        lines.append(f"designated: {m.designated}")
    return "\n".join(lines) + "\n"


def save_model_json(m):
    obj = {
        "states": m.n,
        "edges": [list(e) for e in m.edges],
        "valuation": {a: sorted(states) for a, states in sorted(m.valuation.items())},
        "designated": m.designated,
    }
    return json.dumps(obj, sort_keys=True)


# ---------------------------------------------------------------------------
# Fixture families

def fixture(kind, n):
    """Deterministic test-model families."""
    if n < 1:
        raise ModelFormatError("fixture size must be >= 1")
    if kind == "chain":
        # states 0..n, one path, p at the end, last state deadlocked
        edges = [(i, i + 1) for i in range(n)]
        return make_model(n + 1, edges, {"p": {n}}, designated=0)
    if kind == "ring":
        edges = [(i, (i + 1) % n) for i in range(n)]
        return make_model(n, edges, {"p": set(range(1, n))}, designated=0)
    if kind == "clique":
        # complete graph including self-loops; total relation keeps nu fixtures alive
        edges = [(i, j) for i in range(n) for j in range(n)]
        return make_model(n, edges, {"p": {0}}, designated=0)
    if kind == "fig2-truncation":
        # length-n chain prefix, every chain state exits to an absorbing sink
        sink = n
        edges = [(i, i + 1) for i in range(n - 1)]
        edges += [(i, sink) for i in range(n)]
        edges.append((sink, sink))
        return make_model(n + 1, edges, {"exit": {sink}}, designated=0)
    raise ModelFormatError(f"unknown fixture kind {kind!r}")


def export_dot(m):
    """Graphviz text for the model; deterministic node and edge order."""
    lines = ["digraph kripke {"]
    for s in range(m.n):
        atoms = sorted(a for a, states in m.valuation.items() if s in states)
        label = f"s{s}" + (f"\\n{{{','.join(atoms)}}}" if atoms else "")
        shape = ' shape=doublecircle' if s == m.root else ""
        lines.append(f'  s{s} [label="{label}"{shape}];')
    for s, t in m.edges:
        lines.append(f"  s{s} -> s{t};")
    lines.append("}")
    return "\n".join(lines) + "\n"
