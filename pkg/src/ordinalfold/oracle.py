"""Naive reference evaluator used to cross-check the staged engine.

Same contract as engine.evaluate, rebuilt from scratch on plain Python sets
with explicit per-stage environments.  Nothing here touches the engine's
vectorized update path; only the closure indexing and the StageTrace
container are shared so traces can be compared cell by cell.
"""

from __future__ import annotations

import numpy as np

from .engine import BoundExceededError, StageTrace, iteration_bound
from .formula import (And, Atom, Box, Delay, Diamond, Formula, Mu, Not, Nu,
                      Or, Var, closure)


def _atom_set(model, name):
    return frozenset(model.atom_states(name))


def _full(model):
    return frozenset(range(model.n))


def _settled(node, regs, model, binders, memo):
    """Value of a subformula given the current register assignment."""
    if node in memo:
        return memo[node]
    if isinstance(node, (Mu, Nu, Delay)):
        value = regs[node]
    elif isinstance(node, Atom):
        value = _atom_set(model, node.name)
    elif isinstance(node, Not):
        value = _full(model) - _atom_set(model, node.child.name)
    elif isinstance(node, Var):
        value = regs[binders[node.name]]
    elif isinstance(node, And):
        value = _settled(node.left, regs, model, binders, memo) & \
            _settled(node.right, regs, model, binders, memo)
    elif isinstance(node, Or):
        value = _settled(node.left, regs, model, binders, memo) | \
            _settled(node.right, regs, model, binders, memo)
    elif isinstance(node, Diamond):
        child = _settled(node.child, regs, model, binders, memo)
        value = frozenset(s for s in range(model.n)
                          if any(t in child for t in model.successors(s)))
    elif isinstance(node, Box):
        child = _settled(node.child, regs, model, binders, memo)
        value = frozenset(s for s in range(model.n)
                          if all(t in child for t in model.successors(s)))
    else:
        raise TypeError(f"unexpected node {node!r}")
    memo[node] = value
    return value


def _seed_registers(root, model, binders):
    """mu registers empty, nu registers full, delays settled over that seed."""
    regs = {}

    def seed_binders(node):
        if isinstance(node, Mu):
            regs[node] = frozenset()
        elif isinstance(node, Nu):
            regs[node] = _full(model)
        for child in _children(node):
            seed_binders(child)

    def seed_value(node):
        if isinstance(node, (Mu, Nu)):
            return regs[node]
        if isinstance(node, Delay):
            if node not in regs:
                regs[node] = seed_value(node.child)
            return regs[node]
        if isinstance(node, Atom):
            return _atom_set(model, node.name)
        if isinstance(node, Not):
            return _full(model) - _atom_set(model, node.child.name)
        if isinstance(node, Var):
            return regs[binders[node.name]]
        if isinstance(node, And):
            return seed_value(node.left) & seed_value(node.right)
        if isinstance(node, Or):
            return seed_value(node.left) | seed_value(node.right)
        if isinstance(node, Diamond):
            child = seed_value(node.child)
            return frozenset(s for s in range(model.n)
                             if any(t in child for t in model.successors(s)))
        if isinstance(node, Box):
            child = seed_value(node.child)
            return frozenset(s for s in range(model.n)
                             if all(t in child for t in model.successors(s)))
        raise TypeError(f"unexpected node {node!r}")

    def seed_delays(node):
        for child in _children(node):
            seed_delays(child)
        if isinstance(node, Delay) and node not in regs:
            regs[node] = seed_value(node.child)

    seed_binders(root)
    seed_delays(root)
    return regs


def _children(node):
    if isinstance(node, (And, Or)):
        return (node.left, node.right)
    if isinstance(node, (Diamond, Box, Delay)):
        return (node.child,)
    if isinstance(node, (Mu, Nu)):
        return (node.body,)
    return ()


def _binder_map(root):
    binders = {}

    def walk(node):
        if isinstance(node, (Mu, Nu)):
            binders[node.var] = node
        for child in _children(node):
            walk(child)

    walk(root)
    return binders


def oracle_evaluate(f, model):
    """Brute-force staged evaluation; must agree with engine.evaluate exactly."""
    if not isinstance(f, Formula):
        f = Formula(f)
    root = f.root
    clo = closure(f)
    binders = _binder_map(root)
    bound = iteration_bound(f, model)

    regs = _seed_registers(root, model, binders)
    stage_sets = [_settled(node, regs, model, binders, {}) for node in clo.items]
    stages = [stage_sets]
    fold_back = None
    for t in range(bound + 1):
        memo = {}
        new_regs = {}
        for node in regs:
            if isinstance(node, Mu):
                new_regs[node] = regs[node] | _settled(node.body, regs, model,
                                                       binders, memo)
            elif isinstance(node, Nu):
                new_regs[node] = regs[node] & _settled(node.body, regs, model,
                                                       binders, memo)
            else:
                new_regs[node] = _settled(node.child, regs, model, binders, memo)
        memo2 = {}
        new_sets = [_settled(node, new_regs, model, binders, memo2)
                    for node in clo.items]
        stages.append(new_sets)
        if new_sets == stages[-2]:
            fold_back = t
            break
        regs = new_regs
    if fold_back is None:
        raise BoundExceededError(
            f"oracle: no fold-back within bound {bound}")

    matrices = [_to_matrix(sets, model.n) for sets in stages]
    deltas = []
    for alpha in range(fold_back):
        cells = [(i, s)
                 for i in range(clo.m)
                 for s in range(model.n)
                 if (s in stages[alpha][i]) != (s in stages[alpha + 1][i])]
        deltas.append(cells)
    top = bool(model.root in stages[fold_back][0])
    return StageTrace(stages=matrices, deltas=deltas, fold_back=fold_back,
                      top_truth=top, bound=bound, designated=model.root)


def _to_matrix(sets, n):
    mat = np.zeros((len(sets), n), dtype=bool)
    for i, states in enumerate(sets):
        for s in states:
            mat[i, s] = True
    return mat


def traces_equal(a, b):
    """Full trace equality: stages, deltas, fold-back and top value."""
    if a.fold_back != b.fold_back or a.top_truth != b.top_truth:
        return False
    if len(a.stages) != len(b.stages):
        return False
    if any(not np.array_equal(x, y) for x, y in zip(a.stages, b.stages)):
        return False
    return [sorted(d) for d in a.deltas] == [sorted(d) for d in b.deltas]
