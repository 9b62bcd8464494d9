"""Verdicts and witnesses produced by the checkers."""
from __future__ import annotations

from dataclasses import dataclass, field

from .automata import NIOA, Transition, render_vector

REPORT_VERSION = 1

PASS = "pass"
FAIL = "fail"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class Witness:
    """A path from the initial state, optionally followed by a cycle.

    ``kind`` is one of ``unreceived``, ``deadlock``, ``livelock``,
    ``unterminated-chain``, ``quasi-determinism``, ``acceptance``,
    ``projection`` or ``subset``.
    """

    kind: str
    path: tuple = ()
    cycle: tuple = ()
    note: str = ""

    @property
    def end(self) -> str | None:
        if self.path:
            return self.path[-1].dst
        return None

    def lines(self, a: NIOA | None = None) -> list[str]:
        def fmt(t: Transition) -> str:
            ins = render_vector(t.inp, a.inputs if a else None)
            outs = render_vector(t.out, a.outputs if a else None)
            return f"  {t.src} -[{ins} / {outs}]-> {t.dst}"

        out = [f"witness {self.kind}: {self.note}".rstrip(": ")]
        out.extend(fmt(t) for t in self.path)
        if self.cycle:
            out.append("  cycle:")
            out.extend("  " + fmt(t) for t in self.cycle)
        return out

    def to_dict(self) -> dict:
        def t2d(t: Transition) -> dict:
            return {
                "src": t.src,
                "dst": t.dst,
                "in": list(t.inp),
                "out": list(t.out),
                "label": t.label,
            }

        return {
            "kind": self.kind,
            "note": self.note,
            "path": [t2d(t) for t in self.path],
            "cycle": [t2d(t) for t in self.cycle],
        }


@dataclass(frozen=True)
class CheckReport:
    check: str
    target: str
    verdict: str
    witnesses: tuple = ()
    explored: int = 0
    capped: bool = False
    messages: tuple = field(default=())
    automaton: NIOA | None = field(default=None, compare=False, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_text(self) -> str:
        lines = [
            f"check {self.check} on {self.target}: {self.verdict}",
            f"explored: {self.explored}",
        ]
        if self.capped:
            lines.append("capped: state cap reached, verdict unknown")
        lines.extend(f"note: {m}" for m in self.messages)
        for w in self.witnesses:
            lines.extend(w.lines(self.automaton))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "check": self.check,
            "target": self.target,
            "verdict": self.verdict,
            "explored": self.explored,
            "capped": self.capped,
            "messages": list(self.messages),
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


def replays(a: NIOA, path) -> bool:
    """True when ``path`` is a chain of transitions of ``a`` starting at its initial state."""
    q = a.initial
    for t in path:
        if t.src != q or t not in a.outgoing.get(q, ()):
            return False
        q = t.dst
    return True


def replays_witness(a: NIOA, w: Witness) -> bool:
    if not replays(a, w.path):
        return False
    if not w.cycle:
        return True
    q = w.end if w.path else a.initial
    start = q
    for t in w.cycle:
        if t.src != q or t not in a.outgoing.get(q, ()):
            return False
        q = t.dst
    return q == start
