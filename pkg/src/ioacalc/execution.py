"""Seeded step-by-step execution with optional fairness, and trace checking.

Targets are plain automata, channel-restricted automata (or protocols) and
coordinated automata.  Every choice among enabled transitions is a pure
function of the seed, the step index and the sorted enabled set, so equal
inputs give byte-identical traces.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Sequence

from .automata import (
    EPS,
    EPS_NAME,
    NIOA,
    Transition,
    accepts_at_halt,
    accepts_cycle,
    has_finite_semantics,
    quasi_determinism_violation,
    render_vector,
)
from .channels import CBRAutomaton, Protocol, cbr_successor
from .coordination import CoordinatedAutomaton

POLICIES = ("arbitrary", "weak", "strong")
ACCEPTED = "accepted"
REJECTED = "rejected"
UNDETERMINED = "undetermined"
DEFAULT_WINDOW = 100


class ExecutionError(Exception):
    pass


class InputRejected(ExecutionError):
    pass


class QuasiDeterminismError(ExecutionError):
    pass


class TraceMismatch(ExecutionError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    seed: int = 0
    policy: str = "arbitrary"
    max_steps: int = 100

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {', '.join(POLICIES)}")


@dataclass(frozen=True)
class TraceStep:
    index: int
    state: str  # before the step
    pending: tuple  # before the step, (channel index, symbol)
    transition: Transition


@dataclass(frozen=True, eq=False)
class ExecutionTrace:
    target: str
    seed: int
    policy: str
    max_steps: int
    steps: tuple
    final_state: str
    final_pending: tuple
    halted: bool
    accepted: str
    automaton: NIOA = field(repr=False)
    channel_names: tuple = ()

    def _pending_text(self, pending: tuple) -> str:
        if not pending:
            return "-"
        return ",".join(f"{self.channel_names[ci]}={s}" for ci, s in pending)

    def rows(self) -> list[tuple]:
        a = self.automaton
        return [
            (
                s.index,
                s.state,
                render_vector(s.transition.inp, a.inputs),
                render_vector(s.transition.out, a.outputs),
                self._pending_text(s.pending),
            )
            for s in self.steps
        ]

    def to_text(self) -> str:
        lines = [
            f"# target {self.target}",
            f"# seed {self.seed} policy {self.policy} max_steps {self.max_steps}",
            "# step|state|in|out|pending",
        ]
        lines.extend("|".join(str(x) for x in row) for row in self.rows())
        lines.append(f"# final {self.final_state} pending {self._pending_text(self.final_pending)}")
        lines.append(f"# halted {str(self.halted).lower()}")
        lines.append(f"# acceptance {self.accepted}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "seed": self.seed,
            "policy": self.policy,
            "max_steps": self.max_steps,
            "steps": [
                {"step": i, "state": q, "in": inp, "out": out, "pending": pend, "label": s.transition.label}
                for (i, q, inp, out, pend), s in zip(self.rows(), self.steps)
            ],
            "final_state": self.final_state,
            "final_pending": self._pending_text(self.final_pending),
            "halted": self.halted,
            "accepted": self.accepted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# -- target normalization -----------------------------------------------------


@dataclass(frozen=True)
class _Target:
    name: str
    nioa: NIOA
    channels: tuple = ()
    tree: bool = False
    coordinated: bool = False

    @property
    def channel_names(self) -> tuple:
        return tuple(c.name or f"c{k}" for k, c in enumerate(self.channels))

    def enabled(self, q: str, pending: tuple) -> list:
        out = []
        for t in self.nioa.outgoing.get(q, ()):
            if self.channels:
                nxt = cbr_successor(self.channels, t, pending, self.tree)
                if nxt is None:
                    continue
            out.append(t)
        return out

    def after(self, t: Transition, pending: tuple) -> tuple:
        if not self.channels:
            return ()
        return cbr_successor(self.channels, t, pending, self.tree)


def _normalize(target) -> _Target:
    if isinstance(target, Protocol):
        target = target.cbr
    if isinstance(target, CBRAutomaton):
        return _Target(target.base.name, target.base, target.channels, target.tree)
    if isinstance(target, CoordinatedAutomaton):
        return _Target(target.result.name, target.result, coordinated=True)
    if isinstance(target, NIOA):
        return _Target(target.name, target)
    raise TypeError(f"cannot execute {type(target).__name__}")


def fairness_key(t: Transition, a: NIOA) -> str:
    """The input character a transition consumes; spontaneous moves are keyed by their label."""
    if t.spontaneous:
        return f"{EPS_NAME}:{t.label}"
    return render_vector(t.inp, a.inputs)


def _parse_script(script: Sequence[str], tgt: _Target) -> list:
    wired = {c.in_component for c in tgt.channels}
    parsed = []
    for n, item in enumerate(script):
        if item == EPS_NAME:
            parsed.append(None)
            continue
        comp, _, sym = item.rpartition(".")
        try:
            k = tgt.nioa.input_index(comp)
        except KeyError:
            raise InputRejected(f"input rejected at step {n}: no input component {comp!r}") from None
        if k in wired:
            raise InputRejected(f"input rejected at step {n}: {comp} is driven by a channel")
        if sym not in tgt.nioa.inputs[k]:
            raise InputRejected(f"input rejected at step {n}: {sym!r} not in {comp}")
        parsed.append((k, sym))
    return parsed


def _consumes(t: Transition, k: int, sym: str, open_inputs) -> bool:
    return t.inp[k] == sym and all(t.inp[j] is EPS for j in open_inputs if j != k)


# -- the scheduler ------------------------------------------------------------


def run(target, cfg: SchedulerConfig, inputs: Sequence[str] | None = None) -> ExecutionTrace:
    """Execute ``target`` for at most ``cfg.max_steps`` steps.

    With scripted ``inputs`` (``"component.symbol"`` or ``eps``) each step
    either consumes the next scripted character or takes a spontaneous
    transition; once the script is used up only spontaneous transitions stay
    enabled.  Without a script the environment may supply any input.
    """
    tgt = _normalize(target)
    a = tgt.nioa
    script = _parse_script(inputs, tgt) if inputs is not None else None
    wired = {c.in_component for c in tgt.channels}
    open_inputs = [k for k in range(len(a.inputs)) if k not in wired]
    waits: dict[str, int] = {}

    q, pending = a.initial, ()
    steps = []
    pos = 0
    seen_cfg = {(q, pending): 0}
    lasso = None
    halted = False
    for n in range(cfg.max_steps):
        if tgt.coordinated:
            v = quasi_determinism_violation(a, [q])
            if v is not None:
                raise QuasiDeterminismError(f"quasi-determinism violated at {q} (step {n})")
        enabled = tgt.enabled(q, pending)
        if script is not None:
            nxt = script[pos] if pos < len(script) else "end"
            spont = [t for t in enabled if all(t.inp[j] is EPS for j in open_inputs)]
            if nxt == "end" or nxt is None:
                enabled = spont
            else:
                enabled = spont + [t for t in enabled if _consumes(t, nxt[0], nxt[1], open_inputs)]
            if not enabled and nxt != "end":
                raise InputRejected(f"input rejected at step {n}")
        if not enabled:
            halted = True
            break
        t = _choose(enabled, a, cfg, n, waits)
        if script is not None and pos < len(script):
            nxt = script[pos]
            if nxt is None or not all(t.inp[j] is EPS for j in open_inputs):
                pos += 1
        steps.append(TraceStep(n, q, pending, t))
        q, pending = t.dst, tgt.after(t, pending)
        if lasso is None:
            key = (q, pending)
            if key in seen_cfg:
                lasso = (seen_cfg[key], n + 1)
            else:
                seen_cfg[key] = n + 1

    if halted:
        ok = not pending and accepts_at_halt(a, q)
        verdict = ACCEPTED if ok else REJECTED
    elif lasso is not None and not has_finite_semantics(a):
        start, end = lasso
        cycle_states = [s.state for s in steps[start:end]]
        verdict = ACCEPTED if accepts_cycle(a, cycle_states) else REJECTED
    else:
        verdict = UNDETERMINED
    return ExecutionTrace(tgt.name, cfg.seed, cfg.policy, cfg.max_steps, tuple(steps), q, pending,
                          halted, verdict, a, tgt.channel_names)


def _choose(enabled: list, a: NIOA, cfg: SchedulerConfig, n: int, waits: dict) -> Transition:
    enabled = sorted(enabled, key=Transition.sort_key)
    rng = random.Random(f"{cfg.seed}:{n}:{len(enabled)}")
    if cfg.policy == "arbitrary":
        return enabled[rng.randrange(len(enabled))]
    keys = sorted({fairness_key(t, a) for t in enabled})
    if cfg.policy == "weak":
        # waiting only accumulates while continuously enabled
        for k in list(waits):
            if k not in keys:
                del waits[k]
    best = max(waits.get(k, 0) for k in keys)
    tied = [k for k in keys if waits.get(k, 0) == best]
    pick = tied[rng.randrange(len(tied))]
    for k in keys:
        waits[k] = 0 if k == pick else waits.get(k, 0) + 1
    options = [t for t in enabled if fairness_key(t, a) == pick]
    return options[rng.randrange(len(options))]


# -- post-hoc checks ----------------------------------------------------------


@dataclass(frozen=True)
class FairnessResult:
    fair: bool
    policy: str
    window: int
    position: int | None = None
    key: str | None = None

    def __bool__(self) -> bool:
        return self.fair


def check_fairness(trace: ExecutionTrace, target, policy: str = "weak", window: int = DEFAULT_WINDOW) -> FairnessResult:
    """Windowed fairness surrogate for a finite trace.

    ``weak``: no input character stays continuously enabled for ``window``
    steps without being chosen.  ``strong``: no input character is enabled at
    ``window`` steps (not necessarily consecutive) since it was last chosen.
    """
    if policy not in ("weak", "strong"):
        raise ValueError("fairness policy must be weak or strong")
    tgt = _normalize(target)
    a = tgt.nioa
    if trace.steps and trace.steps[0].state != a.initial:
        raise TraceMismatch("trace does not start in the initial state")
    counts: dict[str, int] = {}
    for s in trace.steps:
        enabled = tgt.enabled(s.state, s.pending)
        if s.transition not in enabled:
            raise TraceMismatch(f"step {s.index}: transition not enabled in the target")
        keys = {fairness_key(t, a) for t in enabled}
        chosen = fairness_key(s.transition, a)
        if policy == "weak":
            counts = {k: v for k, v in counts.items() if k in keys}
        for k in sorted(keys):
            if k == chosen:
                counts[k] = 0
                continue
            counts[k] = counts.get(k, 0) + 1
            if counts[k] >= window:
                return FairnessResult(False, policy, window, s.index, k)
    return FairnessResult(True, policy, window)


def validate_cbr_trace(trace: ExecutionTrace, base: NIOA, channels) -> list[str]:
    """Independent replay of the channel rules over a trace; returns the violations found.

    A character emitted on channel ``(k, l)`` must be read at input position
    ``l`` by the very next step; a step after one that emitted nothing on
    ``k`` must read nothing at ``l``.
    """
    problems = []
    q = base.initial
    prev = None
    for s in trace.steps:
        t = s.transition
        if s.state != q:
            problems.append(f"step {s.index}: trace state {s.state} but replay is at {q}")
        if t not in base.outgoing.get(s.state, ()):
            problems.append(f"step {s.index}: {t} is not a transition of {base.name}")
        for ch in channels:
            sent = prev.out[ch.out_component] if prev is not None else EPS
            got = t.inp[ch.in_component]
            if sent is EPS and got is not EPS:
                problems.append(f"step {s.index}: reads {got} at {base.inputs[ch.in_component].name} with nothing sent")
            elif sent is not EPS and got != sent:
                problems.append(f"step {s.index}: {sent} sent on {ch.name} but not read next")
        prev = t
        q = t.dst
    if q != trace.final_state:
        problems.append(f"final state {trace.final_state} but replay ends at {q}")
    return problems
