"""Parity evaluation games: construction, small-progress-measure solving,
delay ranks, and the rank-vs-fold-back empirical comparison.

Winner semantics: Even (Verifier) wins an infinite play iff the highest
priority seen infinitely often is even; a player unable to move loses.
Terminals are encoded by giving the losing player an empty successor list.

Ranks on Even's winning region count how many moves the Falsifier can force
before defeat (least fixpoint, Even minimizing).  The supremum grows without
bound exactly on families like the truncated delay chain; values that exceed
the node count are reported symbolically as "omega" and never computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .engine import evaluate
from .formula import (And, Atom, Box, Delay, Diamond, Formula, Mu, Not, Nu,
                      Or, Var, closure)
from .model import save_model

EVEN = "E"
ODD = "O"

OMEGA = "omega"
TOP = "TOP"


class GameFormatError(ValueError):
    """Malformed game document."""


@dataclass(frozen=True)
class GameNode:
    owner: str
    priority: int
    succ: tuple


@dataclass(frozen=True)
class ParityGame:
    nodes: dict             # id -> GameNode
    root: str
    order: tuple            # deterministic node id order

    def __post_init__(self):
        if not self.nodes:
            raise GameFormatError("a game needs at least one node")
        if self.root not in self.nodes:
            raise GameFormatError(f"root {self.root!r} is not a node")
        for nid, node in self.nodes.items():
            if node.owner not in (EVEN, ODD):
                raise GameFormatError(f"node {nid}: owner must be E or O")
            for t in node.succ:
                if t not in self.nodes:
                    raise GameFormatError(f"dangling edge {nid} -> {t}")


# ---------------------------------------------------------------------------
# Game document format: `node <id> <E|O> <priority>`, `edge <src> <dst>`,
# `root <id>`.

def load_game(text):
    owners = {}
    priorities = {}
    succ = {}
    order = []
    root = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node" and len(parts) == 4:
                nid = parts[1]
                owners[nid] = parts[2]
                priorities[nid] = int(parts[3])
                succ.setdefault(nid, [])
                order.append(nid)
            elif parts[0] == "edge" and len(parts) == 3:
                succ.setdefault(parts[1], []).append(parts[2])
            elif parts[0] == "root" and len(parts) == 2:
                root = parts[1]
            else:
                raise GameFormatError(f"line {lineno}: bad directive {line!r}")
        except ValueError as exc:
            raise GameFormatError(f"line {lineno}: {exc}") from exc
    if not order:
        raise GameFormatError("empty node list")
    for src in succ:
        if src not in owners:
            raise GameFormatError(f"edge from unknown node {src!r}")
    nodes = {nid: GameNode(owner=owners[nid], priority=priorities[nid],
                           succ=tuple(succ[nid]))
             for nid in order}
    return ParityGame(nodes=nodes, root=root or order[0], order=tuple(order))


def dump_game(game):
    lines = [f"node {nid} {game.nodes[nid].owner} {game.nodes[nid].priority}"
             for nid in game.order]
    for nid in game.order:
        lines.extend(f"edge {nid} {t}" for t in game.nodes[nid].succ)
    lines.append(f"root {game.root}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Evaluation game construction

def _binder_priorities(clo):
    """Outer binders get higher priorities; mu odd, nu even, gates 0."""
    root = clo.items[0]

    depth_of = {}

    def walk(node, depth):
        if isinstance(node, (Mu, Nu)):
            depth_of[clo.index[node]] = depth
            depth += 1
        if isinstance(node, (And, Or)):
            walk(node.left, depth)
            walk(node.right, depth)
        elif isinstance(node, (Diamond, Box, Delay)):
            walk(node.child, depth)
        elif isinstance(node, (Mu, Nu)):
            walk(node.body, depth)

    walk(root, 0)
    max_depth = max(depth_of.values(), default=-1)
    prios = {}
    for idx, depth in depth_of.items():
        level = max_depth - depth + 1          # outermost binder: largest level
        base = 2 * level
        prios[idx] = base + 1 if isinstance(clo.items[idx], Mu) else base
    return prios


def build_game(f, model):
    """Standard evaluation parity game over (subformula, state) configurations.

    Verifier owns Or/Diamond choices, Falsifier owns And/Box; Delay, Var and
    binder nodes are unary unfolding moves; atoms are terminals whose owner is
    the player losing there.  Only configurations reachable from the root are
    materialized.
    """
    if not isinstance(f, Formula):
        f = Formula(f)
    clo = closure(f)
    prios = _binder_priorities(clo)

    def node_id(i, s):
        return f"f{i}s{s}"

    nodes = {}
    order = []
    root = node_id(0, model.root)
    queue = [(0, model.root)]
    seen = {(0, model.root)}
    while queue:
        i, s = queue.pop(0)
        node = clo.items[i]
        nid = node_id(i, s)
        prio = prios.get(i, 0)
        if isinstance(node, Atom):
            holds = s in model.atom_states(node.name)
            spec = GameNode(owner=ODD if holds else EVEN, priority=0, succ=())
        elif isinstance(node, Not):
            holds = s not in model.atom_states(node.child.name)
            spec = GameNode(owner=ODD if holds else EVEN, priority=0, succ=())
        elif isinstance(node, (Or, And)):
            owner = EVEN if isinstance(node, Or) else ODD
            kids = [(c, s) for c in clo.child_index[i]]
            spec = GameNode(owner=owner, priority=0,
                            succ=tuple(node_id(*k) for k in kids))
        elif isinstance(node, (Diamond, Box)):
            owner = EVEN if isinstance(node, Diamond) else ODD
            (c,) = clo.child_index[i]
            kids = [(c, t) for t in model.successors(s)]
            spec = GameNode(owner=owner, priority=0,
                            succ=tuple(node_id(*k) for k in kids))
        elif isinstance(node, Delay):
            (c,) = clo.child_index[i]
            kids = [(c, s)]
            spec = GameNode(owner=EVEN, priority=0, succ=(node_id(c, s),))
        elif isinstance(node, (Mu, Nu)):
            (c,) = clo.child_index[i]
            kids = [(c, s)]
            spec = GameNode(owner=EVEN, priority=prio, succ=(node_id(c, s),))
        elif isinstance(node, Var):
            b = clo.binder_of_var[node.name]
            kids = [(b, s)]
            spec = GameNode(owner=EVEN, priority=0, succ=(node_id(b, s),))
        else:
            raise TypeError(f"unexpected node {node!r}")
        nodes[nid] = spec
        order.append(nid)
        for k in kids if not isinstance(node, (Atom, Not)) else ():
            if k not in seen:
                seen.add(k)
                queue.append(k)
    return ParityGame(nodes=nodes, root=root, order=tuple(order))


# ---------------------------------------------------------------------------
# Small progress measures (winners) and delay ranks

@dataclass
class RankAssignment:
    """Per-node winner, progress measure, and Falsifier-delay rank."""

    winner: dict            # id -> EVEN | ODD
    measure: dict           # id -> tuple (over odd priorities, descending) | TOP
    rank: dict              # id -> int | OMEGA, only for Even-won nodes
    odd_priorities: tuple
    sup_rank: int | None
    unbounded: tuple        # Even-won nodes whose delay rank is unbounded
    game_value: object      # 1 + sup of finite ranks; None without Even wins

    def even_region(self):
        return [nid for nid, w in self.winner.items() if w == EVEN]


def _solve_measures(game):
    odd_prios = tuple(sorted({n.priority for n in game.nodes.values()
                              if n.priority % 2 == 1}, reverse=True))
    caps = {p: sum(1 for n in game.nodes.values() if n.priority == p)
            for p in odd_prios}
    bottom = (0,) * len(odd_prios)
    slot = {p: k for k, p in enumerate(odd_prios)}

    def prog(measure_w, prio):
        if measure_w == TOP:
            return TOP
        if prio % 2 == 0:
            cut = sum(1 for p in odd_prios if p >= prio)
            return measure_w[:cut] + (0,) * (len(odd_prios) - cut)
        # least measure strictly above measure_w on components >= prio
        for p in [q for q in odd_prios if q >= prio][::-1]:
            k = slot[p]
            if measure_w[k] + 1 <= caps[p]:
                higher = measure_w[:k] + (measure_w[k] + 1,)
                return higher + (0,) * (len(odd_prios) - len(higher))
        return TOP

    def less(a, b):
        if b == TOP:
            return a != TOP
        if a == TOP:
            return False
        return a < b

    rho = {nid: bottom for nid in game.order}
    changed = True
    while changed:
        changed = False
        for nid in game.order:
            node = game.nodes[nid]
            options = [prog(rho[t], node.priority) for t in node.succ]
            if node.owner == EVEN:
                target = TOP
                for opt in options:
                    if less(opt, target):
                        target = opt
            else:
                target = bottom
                for opt in options:
                    if less(target, opt):
                        target = opt
            if less(rho[nid], target):
                rho[nid] = target
                changed = True
    return rho, odd_prios


def _delay_ranks(game, winner):
    """Least fixpoint of Falsifier-delay counts on Even's winning region."""
    region = [nid for nid in game.order if winner[nid] == EVEN]
    cutoff = len(game.nodes) + 1
    rank = {nid: 0 for nid in region}
    changed = True
    while changed:
        changed = False
        for nid in region:
            node = game.nodes[nid]
            if node.owner == ODD:
                opts = [rank[t] for t in node.succ]
                new = (1 + max(opts)) if opts else 0
            else:
                opts = [rank[t] for t in node.succ if winner[t] == EVEN]
                new = min(opts) if opts else 0
            new = min(new, cutoff)
            if new != rank[nid]:
                rank[nid] = new
                changed = True
    return {nid: (OMEGA if r >= cutoff else r) for nid, r in rank.items()}


def solve_ranks(game):
    """Winners by small progress measures, then Falsifier-delay ranks."""
    rho, odd_prios = _solve_measures(game)
    winner = {nid: (ODD if rho[nid] == TOP else EVEN) for nid in game.order}
    rank = _delay_ranks(game, winner)
    finite = [r for r in rank.values() if r != OMEGA]
    unbounded = tuple(nid for nid in game.order if rank.get(nid) == OMEGA)
    sup = max(finite) if finite else None
    value = None if sup is None else 1 + sup
    return RankAssignment(winner=winner, measure=rho, rank=rank,
                          odd_priorities=odd_prios, sup_rank=sup,
                          unbounded=unbounded, game_value=value)


def verify_measures(game, assignment):
    """Independent check of the progress-measure lifting conditions."""
    rho = assignment.measure
    odd_prios = assignment.odd_priorities
    caps = {p: sum(1 for n in game.nodes.values() if n.priority == p)
            for p in odd_prios}

    def cmp_ok(mv, mw, prio):
        if mv == TOP:
            return True
        if mw == TOP:
            return False
        cut = sum(1 for p in odd_prios if p >= prio)
        if prio % 2 == 1:
            return mv[:cut] > mw[:cut]
        return mv[:cut] >= mw[:cut]

    for nid in game.order:
        node = game.nodes[nid]
        ok = [cmp_ok(rho[nid], rho[t], node.priority) for t in node.succ]
        if node.owner == EVEN:
            valid = any(ok) if node.succ else rho[nid] == TOP
        else:
            valid = all(ok)
        if not valid:
            return False
        if rho[nid] != TOP:
            for p, component in zip(odd_prios, rho[nid]):
                if component > caps[p]:
                    return False
    return True


def verify_ranks(game, assignment):
    """Check the delay-rank inequalities on Even's region (soundness only)."""
    rank = assignment.rank
    winner = assignment.winner
    for nid, r in rank.items():
        if r == OMEGA:
            continue
        node = game.nodes[nid]
        if node.owner == ODD:
            if not all(winner[t] == EVEN for t in node.succ):
                return False
            if node.succ and not all(rank[t] != OMEGA and r >= 1 + rank[t]
                                     for t in node.succ):
                return False
        else:
            wins = [t for t in node.succ if winner[t] == EVEN]
            if node.succ and not wins:
                return False
            if wins and not any(rank[t] != OMEGA and r >= rank[t]
                                for t in wins):
                return False
    return True


# ---------------------------------------------------------------------------
# Fixtures from the two figure families

def fig1_game():
    """The hand-drawn nine-node example with priorities 0..5 (value 3)."""
    text = """\
node a0 E 0
node b1 O 1
node c2 E 2
node d0 E 0
node e4 E 4
node f2 O 2
node g1 E 1
node h5 O 5
node i3 O 3
edge a0 b1
edge b1 c2
edge c2 i3
edge c2 d0
edge d0 e4
edge d0 h5
edge e4 f2
edge f2 g1
edge g1 h5
edge h5 i3
root a0
"""
    return load_game(text)


def fig2_truncation_game(n):
    """Length-n prefix of the delay chain: n Falsifier nodes, priority 0,
    each exiting to an absorbing Even-win sink."""
    if n < 1:
        raise GameFormatError("truncation length must be >= 1")
    lines = [f"node d{i} O 0" for i in range(n)]
    lines.append("node sink E 0")
    for i in range(n - 1):
        lines.append(f"edge d{i} d{i + 1}")
    for i in range(n):
        lines.append(f"edge d{i} sink")
    lines.append("edge sink sink")
    lines.append("root d0")
    return load_game("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Rank vs fold-back comparison (empirical; never asserted)

@dataclass
class RankOfiReport:
    formula: str
    model_doc: str
    ofi: int
    top_truth: bool
    game_value: object
    sup_rank: object
    unbounded: bool
    equal: bool | None

    def to_json(self):
        return json.dumps({
            "formula": self.formula,
            "model": self.model_doc,
            "ofi": self.ofi,
            "top_truth": self.top_truth,
            "game_value": self.game_value,
            "sup_rank": self.sup_rank,
            "unbounded": self.unbounded,
            "equal": self.equal,
        }, sort_keys=True)


def check_rank_ofi(f, model):
    """Compute fold-back and 1 + sup rank independently and report both.

    The comparison is reported, never asserted: the boundary convention for
    fold-back 0 and the coincidence itself have only sketch-level support.
    """
    if not isinstance(f, Formula):
        f = Formula(f)
    trace = evaluate(f, model)
    assignment = solve_ranks(build_game(f, model))
    unbounded = bool(assignment.unbounded)
    value = OMEGA if unbounded else assignment.game_value
    equal = None if unbounded else (value == trace.fold_back)
    return RankOfiReport(formula=str(f), model_doc=save_model(model),
                         ofi=trace.fold_back, top_truth=bool(trace.top_truth),
                         game_value=value, sup_rank=assignment.sup_rank,
                         unbounded=unbounded, equal=equal)


def export_game_dot(game, assignment=None):
    """Graphviz text mirroring the drawing convention: boxes for Even,
    diamonds for Odd, priority labels."""
    lines = ["digraph parity {"]
    for nid in game.order:
        node = game.nodes[nid]
        shape = "box" if node.owner == EVEN else "diamond"
        extra = ""
        if assignment is not None:
            r = assignment.rank.get(nid)
            w = assignment.winner.get(nid)
            extra = f"\\nwin={w}" + (f" rank={r}" if r is not None else "")
        peri = ' peripheries=2' if nid == game.root else ""
        lines.append(f'  {nid} [shape={shape} '
                     f'label="{nid}\\np={node.priority}{extra}"{peri}];')
    for nid in game.order:
        for t in game.nodes[nid].succ:
            lines.append(f"  {nid} -> {t};")
    lines.append("}")
    return "\n".join(lines) + "\n"
