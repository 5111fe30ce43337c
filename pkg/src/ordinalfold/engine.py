"""Staged fixed-point evaluation of delayed mu-calculus formulas.

A stage is the settled combinational snapshot of the register state: register
rows are the mu/nu binder latches and the delay pipelines, every other row is
recomputed bottom-up from the registers.  One evaluation step latches

    mu row   <- prev OR  body      (set-dominant: once high, never resets)
    nu row   <- prev AND body      (reset-dominant: once low, never rises)
    delay    <- child row          (one-stage pipeline)

where body/child are read from the previous settled snapshot.  The fold-back
stage is the first t with V^{t+1} = V^t; on a finite model it is reached
within 2*N*|phi| steps, which the evaluator asserts rather than assumes.

Boolean seeds: mu rows (and their variables) all-false, nu rows all-true,
everything else the combinational evaluation over that seed.  A limit stage
never occurs on finite models, so only successor stages are implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formula import (KIND_COMB, KIND_MU, KIND_NU, KIND_PIPELINE, And, Atom,
                      Box, Delay, Diamond, Formula, Mu, Not, Nu, Or, Var,
                      closure, node_size)


class BoundExceededError(RuntimeError):
    """Internal-consistency failure: the monotone iteration missed its bound."""


class ContractionError(ValueError):
    """Contraction harness precondition or bound violation."""


@dataclass
class StageTrace:
    """Ordinal-indexed approximant sequence V^0..V^{kappa+1} with delta layers.

    deltas[alpha] lists the (subformula, state) cells that changed at stage
    alpha+1; fold_back is kappa, the first stage with V^{kappa+1} = V^kappa.
    """

    stages: list
    deltas: list
    fold_back: int
    top_truth: object
    bound: int
    designated: int
    mode: str = "bool"
    converged: bool = True
    error_curve: list | None = None

    @property
    def final(self):
        return self.stages[self.fold_back]

    def toggle_counts(self):
        """Per-cell number of value changes over the whole trace."""
        m, n = self.stages[0].shape
        counts = np.zeros((m, n), dtype=int)
        for prev, cur in zip(self.stages, self.stages[1:]):
            counts += (prev != cur)
        return counts

    def to_csv(self):
        """Changed cells only: stage,subformula,state,value plus a summary line."""
        lines = ["stage,subformula,state,value"]
        for alpha, cells in enumerate(self.deltas):
            stage = self.stages[alpha + 1]
            for (i, s) in cells:
                lines.append(f"{alpha + 1},{i},{s},{_fmt_value(stage[i, s])}")
        lines.append(f"ofi={self.fold_back} truth={_fmt_value(self.top_truth)} "
                     f"bound={self.bound}")
        return "\n".join(lines) + "\n"


def _fmt_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return format(float(v), ".12g")


def iteration_bound(f, m):
    """Stabilization prefix bound 2 * N * |phi|."""
    size = f.size if isinstance(f, Formula) else node_size(f)
    return 2 * m.n * size


def _adjacency(m):
    adj = np.zeros((m.n, m.n), dtype=bool)
    for s, t in m.edges:
        adj[s, t] = True
    return adj


def _atom_row(model, name):
    row = np.zeros(model.n, dtype=bool)
    for s in model.atom_states(name):
        row[s] = True
    return row


def _settle_bool(clo, regs, adj, atom_rows):
    """Settled combinational snapshot over the given register rows."""
    m, n = regs.shape
    rows = np.zeros((m, n), dtype=bool)
    for i in clo.eval_order:
        node = clo.items[i]
        kind = clo.kinds[i]
        if kind != KIND_COMB:
            rows[i] = regs[i]
        elif isinstance(node, Atom):
            rows[i] = atom_rows[node.name]
        elif isinstance(node, Not):
            rows[i] = ~atom_rows[node.child.name]
        elif isinstance(node, Var):
            rows[i] = regs[clo.binder_of_var[node.name]]
        elif isinstance(node, And):
            a, b = clo.child_index[i]
            rows[i] = rows[a] & rows[b]
        elif isinstance(node, Or):
            a, b = clo.child_index[i]
            rows[i] = rows[a] | rows[b]
        elif isinstance(node, Diamond):
            (c,) = clo.child_index[i]
            rows[i] = (adj & rows[c][None, :]).any(axis=1)
        elif isinstance(node, Box):
            (c,) = clo.child_index[i]
            rows[i] = (~adj | rows[c][None, :]).all(axis=1)
        else:
            raise TypeError(f"unexpected node {node!r}")
    return rows


def _seed_bool(clo, model, adj, atom_rows):
    """Initial register rows: mu all-false, nu all-true, pipelines settled."""
    rows = np.zeros((clo.m, model.n), dtype=bool)
    for i, kind in enumerate(clo.kinds):
        if kind == KIND_NU:
            rows[i] = True
    for i in clo.eval_order:
        node = clo.items[i]
        kind = clo.kinds[i]
        if kind in (KIND_MU, KIND_NU):
            continue
        if isinstance(node, Atom):
            rows[i] = atom_rows[node.name]
        elif isinstance(node, Not):
            rows[i] = ~atom_rows[node.child.name]
        elif isinstance(node, Var):
            rows[i] = rows[clo.binder_of_var[node.name]]
        elif kind == KIND_PIPELINE:
            rows[i] = rows[clo.child_index[i][0]]
        elif isinstance(node, And):
            a, b = clo.child_index[i]
            rows[i] = rows[a] & rows[b]
        elif isinstance(node, Or):
            a, b = clo.child_index[i]
            rows[i] = rows[a] | rows[b]
        elif isinstance(node, Diamond):
            (c,) = clo.child_index[i]
            rows[i] = (adj & rows[c][None, :]).any(axis=1)
        elif isinstance(node, Box):
            (c,) = clo.child_index[i]
            rows[i] = (~adj | rows[c][None, :]).all(axis=1)
    return rows


def _deltas_between(prev, cur):
    diff = np.argwhere(prev != cur)
    return [(int(i), int(s)) for i, s in diff]


def evaluate(f, model):
    """Run the staged evaluation to its fold-back stage."""
    if not isinstance(f, Formula):
        f = Formula(f)
    clo = closure(f)
    adj = _adjacency(model)
    atom_rows = {node.name if isinstance(node, Atom) else node.child.name:
                 _atom_row(model, node.name if isinstance(node, Atom)
                           else node.child.name)
                 for node in clo.items if isinstance(node, (Atom, Not))}
    bound = iteration_bound(f, model)

    regs = _seed_bool(clo, model, adj, atom_rows)
    stage = _settle_bool(clo, regs, adj, atom_rows)
    stages = [stage]
    fold_back = None
    for t in range(bound + 1):
        new_regs = regs.copy()
        for i, kind in enumerate(clo.kinds):
            if kind == KIND_MU:
                new_regs[i] = regs[i] | stage[clo.child_index[i][0]]
            elif kind == KIND_NU:
                new_regs[i] = regs[i] & stage[clo.child_index[i][0]]
            elif kind == KIND_PIPELINE:
                new_regs[i] = stage[clo.child_index[i][0]]
        new_stage = _settle_bool(clo, new_regs, adj, atom_rows)
        stages.append(new_stage)
        if np.array_equal(new_stage, stage):
            fold_back = t
            break
        regs, stage = new_regs, new_stage
    if fold_back is None:
        raise BoundExceededError(
            f"no fold-back within bound {bound}; monotonicity is broken")

    deltas = [_deltas_between(stages[a], stages[a + 1]) for a in range(fold_back)]
    top = bool(stages[fold_back][0, model.root])
    return StageTrace(stages=stages, deltas=deltas, fold_back=fold_back,
                      top_truth=top, bound=bound, designated=model.root)


# ---------------------------------------------------------------------------
# Probabilistic semantics: And=min, Or=max, Diamond/Box = max/min over
# successors, ~p = 1-p.  Every delayed and variable read is multiplied by the
# contraction constant gamma; delay rows are pure attenuators here, the
# binder rows remain the only registers.  Stage equality is exact after
# clamping to a 1e-12 grid, which keeps the reachable value set finite.

_GRID = 1e-12


@dataclass(frozen=True)
class ContractionConfig:
    gamma: float
    epsilon: float
    norm: str = "l1"

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ContractionError(f"gamma must lie in (0,1), got {self.gamma}")
        if not (0.0 < self.epsilon < 1.0):
            raise ContractionError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.norm != "l1":
            raise ContractionError(f"unsupported norm {self.norm!r}")


def step_budget(gamma, epsilon):
    """Steps guaranteeing epsilon-proximity under a gamma contraction."""
    return math.ceil(math.log(epsilon) / math.log(gamma))


def _clamp(a):
    return np.round(a / _GRID) * _GRID


def _real_valuation(model, atoms):
    rows = {}
    for name, value in (atoms or {}).items():
        row = np.full(model.n, float(value)) if np.isscalar(value) \
            else np.asarray(value, dtype=float)
        if row.shape != (model.n,):
            raise ContractionError(f"atom {name}: expected {model.n} values")
        if (row < 0).any() or (row > 1).any():
            raise ContractionError(f"atom {name}: values must lie in [0,1]")
        rows[name] = row
    return rows


def _settle_prob(clo, regs, adj, atom_rows, gamma):
    m, n = regs.shape
    rows = np.zeros((m, n), dtype=float)
    for i in clo.eval_order:
        node = clo.items[i]
        kind = clo.kinds[i]
        if kind in (KIND_MU, KIND_NU):
            rows[i] = regs[i]
        elif isinstance(node, Atom):
            rows[i] = atom_rows[node.name]
        elif isinstance(node, Not):
            rows[i] = 1.0 - atom_rows[node.child.name]
        elif isinstance(node, Var):
            rows[i] = gamma * regs[clo.binder_of_var[node.name]]
        elif kind == KIND_PIPELINE:
            rows[i] = gamma * rows[clo.child_index[i][0]]
        elif isinstance(node, And):
            a, b = clo.child_index[i]
            rows[i] = np.minimum(rows[a], rows[b])
        elif isinstance(node, Or):
            a, b = clo.child_index[i]
            rows[i] = np.maximum(rows[a], rows[b])
        elif isinstance(node, Diamond):
            (c,) = clo.child_index[i]
            vals = np.where(adj, rows[c][None, :], -np.inf).max(axis=1)
            rows[i] = np.where(np.isfinite(vals), vals, 0.0)
        elif isinstance(node, Box):
            (c,) = clo.child_index[i]
            vals = np.where(adj, rows[c][None, :], np.inf).min(axis=1)
            rows[i] = np.where(np.isfinite(vals), vals, 1.0)
    return _clamp(rows)


def evaluate_prob(f, model, atoms, cfg):
    """Real-valued staged evaluation with gamma-attenuated delayed reads."""
    if not isinstance(f, Formula):
        f = Formula(f)
    clo = closure(f)
    adj = _adjacency(model)
    gamma = cfg.gamma

    atom_rows = {}
    overrides = _real_valuation(model, atoms)
    for node in clo.items:
        name = node.name if isinstance(node, Atom) else (
            node.child.name if isinstance(node, Not) else None)
        if name is not None and name not in atom_rows:
            atom_rows[name] = overrides.get(name, _atom_row(model, name).astype(float))

    regs = np.zeros((clo.m, model.n), dtype=float)
    for i, kind in enumerate(clo.kinds):
        if kind == KIND_NU:
            regs[i] = 1.0

    cap = max(step_budget(gamma, cfg.epsilon), step_budget(gamma, _GRID)) + 8
    stage = _settle_prob(clo, regs, adj, atom_rows, gamma)
    stages = [stage]
    fold_back = None
    for t in range(cap + 1):
        new_regs = regs.copy()
        for i, kind in enumerate(clo.kinds):
            if kind == KIND_MU:
                new_regs[i] = np.maximum(regs[i], stage[clo.child_index[i][0]])
            elif kind == KIND_NU:
                new_regs[i] = np.minimum(regs[i], stage[clo.child_index[i][0]])
        new_regs = _clamp(new_regs)
        new_stage = _settle_prob(clo, new_regs, adj, atom_rows, gamma)
        stages.append(new_stage)
        if np.array_equal(new_stage, stage):
            fold_back = t
            break
        regs, stage = new_regs, new_stage

    converged = fold_back is not None
    if not converged:
        fold_back = len(stages) - 1
    final = stages[fold_back]
    error_curve = [float(np.abs(final - st).sum()) for st in stages]
    deltas = [_deltas_between(stages[a], stages[a + 1]) for a in range(fold_back)]
    top = float(final[0, model.root])
    return StageTrace(stages=stages, deltas=deltas, fold_back=fold_back,
                      top_truth=top, bound=cap, designated=model.root,
                      mode="prob", converged=converged, error_curve=error_curve)


# ---------------------------------------------------------------------------
# Assumption-free harness for the exponential tail bound: iterate an affine
# contraction x -> a x + b and compare against the directly solved fixed point.

@dataclass
class ContractionTrace:
    iterates: list
    errors: list            # L1 distance to the exact fixed point, per step
    fixed_point: np.ndarray
    gamma_measured: float
    steps_to_epsilon: int | None
    predicted_budget: int


def affine_contract(a, b, x0, cfg):
    """Iterate x -> a x + b from x0 and certify error(alpha) <= gamma^alpha.

    The L1 operator norm of a (max column abs sum) must not exceed cfg.gamma.
    The certified bound is gamma^alpha * max(1, error(0)); with error(0) <= 1
    that is the plain gamma^alpha tail.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    n = b.shape[0]
    if a.shape != (n, n) or x.shape != (n,):
        raise ContractionError("dimension mismatch between a, b and x0")

    gamma_measured = float(np.abs(a).sum(axis=0).max())
    if gamma_measured > cfg.gamma + 1e-12:
        raise ContractionError(
            f"L1 operator norm {gamma_measured:.6g} exceeds gamma {cfg.gamma}")

    fixed_point = np.linalg.solve(np.eye(n) - a, b)
    budget = step_budget(cfg.gamma, cfg.epsilon)

    iterates = [x.copy()]
    errors = [float(np.abs(fixed_point - x).sum())]
    scale = max(1.0, errors[0])
    steps_to_epsilon = 0 if errors[0] <= cfg.epsilon else None
    for alpha in range(1, budget + 9):
        x = a @ x + b
        iterates.append(x.copy())
        err = float(np.abs(fixed_point - x).sum())
        errors.append(err)
        if err > (cfg.gamma ** alpha) * scale + 1e-12:
            raise ContractionError(
                f"error {err:.6g} at step {alpha} exceeds "
                f"gamma^alpha bound {(cfg.gamma ** alpha) * scale:.6g}")
        if steps_to_epsilon is None and err <= cfg.epsilon:
            steps_to_epsilon = alpha
        if err == 0.0:
            break
    return ContractionTrace(iterates=iterates, errors=errors,
                            fixed_point=fixed_point,
                            gamma_measured=gamma_measured,
                            steps_to_epsilon=steps_to_epsilon,
                            predicted_budget=budget)
