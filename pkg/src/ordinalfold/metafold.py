"""Meta-fold repair loop over lazily generated, potentially unbounded domains.

The evaluator is the same latched staged semantics as the finite engine, run
demand-first: each stage re-evaluates only the cells in the backward slice of
the root query, short-circuiting at registers that latch dominance has
already determined (a set-dominant row that went high, a reset-dominant row
that went low) and at gates decided by one child.  Modal cells expand a
state's successors on first need; discovery is what can blow the size
budget.

"Stays a set" is operationalized as "discovered-state count <= size_budget";
exceeding it, or running out of the envelope's inner-iteration budget, emits
an anchor: the newest stored snapshot from which one more evaluation step
respects the budget.  The loop reboots from the anchor under the next
envelope; exhausting the schedule is a reportable outcome, not an error
(termination is not guaranteed on genuinely unbounded instances).
"""

from __future__ import annotations

from dataclasses import dataclass

from .formula import (KIND_COMB, KIND_MU, KIND_NU, KIND_PIPELINE, And, Atom,
                      Box, Delay, Diamond, Formula, Mu, Not, Nu, Or, Var,
                      closure)


class GeneratorNondeterminismError(RuntimeError):
    """The same payload expanded to different successors across calls."""


class MetafoldError(ValueError):
    pass


@dataclass(frozen=True)
class Envelope:
    index: int
    budget: int             # max inner iterations tau_k
    size_budget: int        # max discovered states

    def __post_init__(self):
        if self.budget < 1 or self.size_budget < 1:
            raise MetafoldError("envelope budgets must be >= 1")


def schedule_from_taus(taus, size_budget):
    if not taus:
        raise MetafoldError("schedule must be non-empty")
    return [Envelope(index=k, budget=t, size_budget=size_budget)
            for k, t in enumerate(taus)]


class DomainGenerator:
    """Lazily generated frame: seed payloads plus pure expansion/atom rules.

    Payloads must be hashable and canonically encode the state.  The
    expansion rule is memoized and re-checked on every call; impurity is a
    hard error.
    """

    def __init__(self, name, seeds, successors_fn, atoms_fn):
        if not seeds:
            raise MetafoldError("generator needs at least one seed state")
        self.name = name
        self.seeds = tuple(seeds)
        self._successors_fn = successors_fn
        self._atoms_fn = atoms_fn
        self._succ_cache = {}
        self._atom_cache = {}

    def successors(self, payload):
        result = tuple(self._successors_fn(payload))
        cached = self._succ_cache.get(payload)
        if cached is not None and cached != result:
            raise GeneratorNondeterminismError(
                f"{self.name}: payload {payload!r} expanded to {result!r} "
                f"after {cached!r}")
        self._succ_cache[payload] = result
        return result

    def atoms(self, payload):
        if payload not in self._atom_cache:
            self._atom_cache[payload] = frozenset(self._atoms_fn(payload))
        return self._atom_cache[payload]


def counter_generator(p_at=None, atom="p"):
    """0 -> 1 -> 2 -> ...; the atom holds at position p_at (never if None)."""
    return DomainGenerator(
        name=f"counter(p_at={p_at})",
        seeds=(0,),
        successors_fn=lambda n: (n + 1,),
        atoms_fn=lambda n: {atom} if n == p_at else set())


def grid_generator(p_at=None, atom="p"):
    """Quarter grid from (0,0); successors step right and up."""
    target = tuple(p_at) if p_at is not None else None
    return DomainGenerator(
        name=f"grid(p_at={target})",
        seeds=((0, 0),),
        successors_fn=lambda xy: ((xy[0] + 1, xy[1]), (xy[0], xy[1] + 1)),
        atoms_fn=lambda xy: {atom} if xy == target else set())


def collatz_generator(start, atom="p"):
    """start -> ... by n/2 or 3n+1; the atom holds at 1."""
    if start < 1:
        raise MetafoldError("collatz start must be >= 1")
    return DomainGenerator(
        name=f"collatz(start={start})",
        seeds=(start,),
        successors_fn=lambda n: (n // 2,) if n % 2 == 0 else (3 * n + 1,),
        atoms_fn=lambda n: {atom} if n == 1 else set())


def chain_generator(n, atom="p"):
    """Finite chain 0..n with the atom at the last state; mirrors the
    chain fixture so finite-domain runs can be compared with the engine."""
    return DomainGenerator(
        name=f"chain({n})",
        seeds=(0,),
        successors_fn=lambda k: (k + 1,) if k < n else (),
        atoms_fn=lambda k: {atom} if k == n else set())


BUILTIN_GENERATORS = {
    "counter": counter_generator,
    "grid": grid_generator,
    "collatz": collatz_generator,
    "chain": chain_generator,
}


# ---------------------------------------------------------------------------
# Snapshots, anchors, outcomes

@dataclass(frozen=True)
class Snapshot:
    stage: int              # global stage index at which it was taken
    registers: tuple        # sorted ((closure idx, payload), value) pairs
    discovered: tuple       # payloads in discovery order
    expanded: frozenset
    demand: tuple           # register cells scheduled for re-evaluation


@dataclass(frozen=True)
class Anchor:
    snapshot: Snapshot
    beta_star: int
    witness: dict           # {"states_after_step": int, "size_budget": int}


@dataclass(frozen=True)
class Converged:
    envelope: int
    stage: int              # inner stage within the envelope
    truth: bool             # top formula at the first seed state
    snapshot: Snapshot
    discovered_states: int


@dataclass(frozen=True)
class ScheduleExhausted:
    anchors: tuple
    last_anchor: Anchor | None
    overshoot_stages: tuple  # per envelope, the first stage past its budget


class _Overshoot(Exception):
    def __init__(self, stage):
        self.stage = stage


class _Runner:
    """Demand-driven staged evaluation over the discovered sub-domain."""

    def __init__(self, f, generator, size_budget):
        if not isinstance(f, Formula):
            f = Formula(f)
        self.clo = closure(f)
        self.gen = generator
        self.size_budget = size_budget
        self.regs = {}
        self.discovered = []
        self.known = set()
        self.expanded = set()
        self.succs = {}
        for seed in generator.seeds:
            self._discover(seed)

    # -- domain bookkeeping

    def _discover(self, payload):
        if payload in self.known:
            return
        self.known.add(payload)
        self.discovered.append(payload)
        if len(self.discovered) > self.size_budget:
            raise _Overshoot(self._stage_now)

    def _expand(self, payload):
        if payload in self.expanded:
            return self.succs[payload]
        succ = self.gen.successors(payload)
        self.expanded.add(payload)
        self.succs[payload] = succ
        for t in succ:
            self._discover(t)
        return succ

    def _reg(self, i, payload):
        cell = (i, payload)
        if cell not in self.regs:
            self.regs[cell] = self.clo.kinds[i] == KIND_NU or (
                self.clo.kinds[i] == KIND_PIPELINE and
                self._seed_pipeline(i, payload))
        return self.regs[cell]

    def _seed_pipeline(self, i, payload):
        # cold boot: pipeline seeds from its input over the binder seeds
        return self._seed_value(self.clo.child_index[i][0], payload)

    def _seed_value(self, i, payload):
        node = self.clo.items[i]
        kind = self.clo.kinds[i]
        if kind == KIND_MU:
            return False
        if kind == KIND_NU:
            return True
        if kind == KIND_PIPELINE:
            return self._seed_value(self.clo.child_index[i][0], payload)
        if isinstance(node, Atom):
            return node.name in self.gen.atoms(payload)
        if isinstance(node, Not):
            return node.child.name not in self.gen.atoms(payload)
        if isinstance(node, Var):
            return self.clo.kinds[self.clo.binder_of_var[node.name]] == KIND_NU
        if isinstance(node, And):
            a, b = self.clo.child_index[i]
            return self._seed_value(a, payload) and self._seed_value(b, payload)
        if isinstance(node, Or):
            a, b = self.clo.child_index[i]
            return self._seed_value(a, payload) or self._seed_value(b, payload)
        if isinstance(node, (Diamond, Box)):
            succ = self._expand(payload)
            (c,) = self.clo.child_index[i]
            vals = (self._seed_value(c, t) for t in succ)
            return any(vals) if isinstance(node, Diamond) else all(vals)
        raise TypeError(f"unexpected node {node!r}")

    # -- one stage

    def step(self, stage_now):
        """One demand-driven evaluation step; returns (changed, discovered)."""
        self._stage_now = stage_now
        before_known = len(self.known)
        pending = {}
        in_flight = set()
        memo = {}

        def read(i, payload):
            cell = (i, payload)
            if cell in memo:
                return memo[cell]
            node = self.clo.items[i]
            kind = self.clo.kinds[i]
            if kind != KIND_COMB:
                value = reg_read(i, payload)
            elif isinstance(node, Atom):
                value = node.name in self.gen.atoms(payload)
            elif isinstance(node, Not):
                value = node.child.name not in self.gen.atoms(payload)
            elif isinstance(node, Var):
                value = reg_read(self.clo.binder_of_var[node.name], payload)
            elif isinstance(node, And):
                a, b = self.clo.child_index[i]
                value = read(a, payload) and read(b, payload)
            elif isinstance(node, Or):
                a, b = self.clo.child_index[i]
                value = read(a, payload) or read(b, payload)
            elif isinstance(node, Diamond):
                (c,) = self.clo.child_index[i]
                value = any(read(c, t) for t in self._expand(payload))
            elif isinstance(node, Box):
                (c,) = self.clo.child_index[i]
                value = all(read(c, t) for t in self._expand(payload))
            else:
                raise TypeError(f"unexpected node {node!r}")
            memo[cell] = value
            return value

        def reg_read(i, payload):
            cell = (i, payload)
            current = self._reg(i, payload)
            kind = self.clo.kinds[i]
            determined = (kind == KIND_MU and current) or \
                (kind == KIND_NU and not current)
            if not determined and cell not in pending and cell not in in_flight:
                in_flight.add(cell)
                inp = read(self.clo.child_index[i][0], payload)
                if kind == KIND_MU:
                    pending[cell] = current or inp
                elif kind == KIND_NU:
                    pending[cell] = current and inp
                else:
                    pending[cell] = inp
                in_flight.discard(cell)
            return current

        for seed in self.gen.seeds:
            read(0, seed)

        changed = False
        for cell, value in pending.items():
            if self.regs.get(cell) != value:
                self.regs[cell] = value
                changed = True
        discovered = len(self.known) > before_known
        return changed, discovered

    def root_value(self):
        """Settled value of the top formula at the first seed state."""
        return self._settled(0, self.gen.seeds[0])

    def _settled(self, i, payload):
        node = self.clo.items[i]
        kind = self.clo.kinds[i]
        if kind != KIND_COMB:
            return self._reg(i, payload)
        if isinstance(node, Atom):
            return node.name in self.gen.atoms(payload)
        if isinstance(node, Not):
            return node.child.name not in self.gen.atoms(payload)
        if isinstance(node, Var):
            return self._reg(self.clo.binder_of_var[node.name], payload)
        if isinstance(node, And):
            a, b = self.clo.child_index[i]
            return self._settled(a, payload) and self._settled(b, payload)
        if isinstance(node, Or):
            a, b = self.clo.child_index[i]
            return self._settled(a, payload) or self._settled(b, payload)
        if isinstance(node, (Diamond, Box)):
            (c,) = self.clo.child_index[i]
            succ = self.succs.get(payload, ())
            vals = (self._settled(c, t) for t in succ)
            return any(vals) if isinstance(node, Diamond) else all(vals)
        raise TypeError(f"unexpected node {node!r}")

    # -- snapshot plumbing

    def snapshot(self, stage):
        return Snapshot(stage=stage,
                        registers=tuple(sorted(self.regs.items(),
                                               key=lambda kv: repr(kv[0]))),
                        discovered=tuple(self.discovered),
                        expanded=frozenset(self.expanded))

    def restore(self, snap):
        self.regs = dict(snap.registers)
        self.discovered = list(snap.discovered)
        self.known = set(snap.discovered)
        self.expanded = set(snap.expanded)
        self.succs = {p: self.gen.successors(p) for p in snap.expanded}


def _one_step_is_total(f, generator, snap, size_budget):
    """Totality witness: one evaluation step stays within the size budget."""
    probe = _Runner(f, generator, size_budget)
    probe.restore(snap)
    try:
        probe.step(snap.stage + 1)
    except _Overshoot:
        return None
    return len(probe.known)


def compute_anchor(f, generator, snapshots, size_budget):
    """Newest stored snapshot whose one-step image respects the budget."""
    for snap in reversed(snapshots):
        states_after = _one_step_is_total(f, generator, snap, size_budget)
        if states_after is not None:
            witness = {"states_after_step": states_after,
                       "size_budget": size_budget}
            return Anchor(snapshot=snap, beta_star=snap.stage, witness=witness)
    return None


def metafold_run(f, generator, schedule, global_cap=None):
    """Run the repair loop; returns Converged or ScheduleExhausted."""
    if not schedule:
        raise MetafoldError("schedule must be non-empty")
    if not isinstance(f, Formula):
        f = Formula(f)
    if global_cap is None:
        global_cap = sum(env.budget for env in schedule) + len(schedule)

    anchors = []
    overshoots = []
    runner = None
    resume = None
    total_stages = 0
    for env in schedule:
        runner = _Runner(f, generator, env.size_budget)
        if resume is not None:
            runner.restore(resume.snapshot)
        base_stage = resume.beta_star if resume is not None else 0
        snapshots = [runner.snapshot(base_stage)]
        overshoot_at = None
        for t in range(env.budget):
            stage = base_stage + t + 1
            total_stages += 1
            if total_stages > global_cap:
                overshoot_at = stage
                break
            try:
                changed, discovered = runner.step(stage)
            except _Overshoot as exc:
                overshoot_at = exc.stage
                runner.restore(snapshots[-1])
                break
            snapshots.append(runner.snapshot(stage))
            if not changed and not discovered:
                return Converged(envelope=env.index, stage=t,
                                 truth=runner.root_value(),
                                 snapshot=snapshots[-1],
                                 discovered_states=len(runner.known))
        if overshoot_at is None:
            overshoot_at = base_stage + env.budget  # envelope timed out
        overshoots.append(overshoot_at)
        anchor = compute_anchor(f, generator, snapshots, env.size_budget)
        if anchor is None:
            break
        anchors.append(anchor)
        resume = anchor
    return ScheduleExhausted(anchors=tuple(anchors),
                             last_anchor=anchors[-1] if anchors else None,
                             overshoot_stages=tuple(overshoots))


def verify_convergence(outcome, f, generator):
    """Idempotency inside the anchor envelope: one more step changes nothing."""
    if not isinstance(outcome, Converged):
        raise MetafoldError("verify_convergence expects a Converged outcome")
    runner = _Runner(f, generator, max(len(outcome.snapshot.discovered), 1))
    runner.restore(outcome.snapshot)
    try:
        changed, discovered = runner.step(outcome.snapshot.stage + 1)
    except _Overshoot:
        return False
    return not changed and not discovered
