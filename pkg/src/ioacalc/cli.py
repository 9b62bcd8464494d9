"""Command-line entry point: ``ioacalc check|compose|simulate|coordinate|export``.

Exit codes: 0 pass, 1 a check failed, 2 usage, parse or I/O error,
3 a state cap or budget left the verdict unknown.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from .automata import AutomatonError, StateCapExceeded, weakly_synchronized_product
from .channels import ChannelError, check_consistent, check_well_formed
from .coordination import (
    CoordinationError,
    ProcessCompositionError,
    SynthesisBudgetError,
    UnknownTransitionClass,
    apply_rules,
    check_coordinated,
    compose_processes,
    synthesize_rules,
)
from .dsl import load_files, serialize
from .dsl.syntax import Document, GuardDecl, RuleDecl, RulesDecl
from .dsl.writer import automaton_decl, export_dot, system_decl
from .execution import (
    POLICIES,
    ExecutionError,
    SchedulerConfig,
    check_fairness,
    run,
)
from .expr import ExprError
from .report import FAIL, PASS, REPORT_VERSION, UNKNOWN
from .systems import (
    SystemSpecError,
    check_compositionality,
    compose_loop,
    compose_parallel,
    compose_sequential,
    compose_u,
    compose_while,
    counter_system,
    loop_body,
    to_diofa,
    zero_finder,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_UNKNOWN = 0, 1, 2, 3
_EXIT = {PASS: EXIT_OK, FAIL: EXIT_FAIL, UNKNOWN: EXIT_UNKNOWN}
TARGET_ORDER = ("protocol", "process", "automaton", "system")


class UsageError(Exception):
    pass


def exit_code(verdicts) -> int:
    """Worst verdict wins: any fail gives 1, otherwise any unknown gives 3."""
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return EXIT_FAIL
    if UNKNOWN in verdicts:
        return EXIT_UNKNOWN
    return EXIT_OK


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_report(path, payload: dict) -> None:
    if path:
        write_atomic(path, json.dumps({"report_version": REPORT_VERSION, **payload}, indent=2, sort_keys=True) + "\n")


def _load(files):
    try:
        model, errors = load_files(files)
    except OSError as e:
        raise UsageError(f"cannot read {e.filename}: {e.strerror}") from None
    except UnicodeDecodeError as e:
        raise UsageError(f"input is not UTF-8: {e}") from None
    if errors:
        raise UsageError("\n".join(str(e) for e in errors))
    return model


def _kind_of(model, name: str, allowed=TARGET_ORDER) -> str:
    kinds = model.kinds_of(name)
    for k in TARGET_ORDER:
        if k in kinds and k in allowed:
            return k
    if kinds:
        raise UsageError(f"target {name} is a {kinds[0]}; expected one of: {', '.join(allowed)}")
    raise UsageError(f"unknown target {name}")


# -- check --------------------------------------------------------------------


def cmd_check(args) -> int:
    model = _load(args.files)
    kind = _kind_of(model, args.target, ("protocol", "process"))
    reports = []
    if kind == "protocol":
        if args.which == "coordinated":
            raise UsageError(f"{args.target} is a protocol; the coordinated check applies to processes")
        p = model.protocol(args.target, tree=args.tree, cap=args.cap)
        for w in p.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if args.which in ("wellformed", "all"):
            reports.append(check_well_formed(p))
        if args.which in ("consistent", "all"):
            reports.append(check_consistent(p))
    else:
        if args.which in ("wellformed", "consistent"):
            raise UsageError(f"{args.target} is a process; only the coordinated check applies")
        reports.append(model.process(args.target, strict=False).coordinated.report)
    for r in reports:
        print(r.to_text(), end="")
        if r.capped:
            print("verdict: unknown (capped)")
    code = exit_code(r.verdict for r in reports)
    _write_report(args.report, {
        "command": "check",
        "target": args.target,
        "verdict": {EXIT_OK: PASS, EXIT_FAIL: FAIL, EXIT_UNKNOWN: UNKNOWN}[code],
        "checks": [r.to_dict() for r in reports],
    })
    return code


# -- compose ------------------------------------------------------------------


def _systems(model, names, count):
    if len(names) != count:
        raise UsageError(f"expected {count} operand(s), got {len(names)}")
    out = []
    for n in names:
        if n not in model.systems:
            raise UsageError(f"unknown system {n}")
        out.append(model.systems[n])
    return out


def _function(model, name, arity):
    f = model.functions.get(name)
    if f is None:
        raise UsageError(f"unknown function {name}")
    if getattr(f, "arity", arity) != arity:
        raise UsageError(f"function {name} takes {f.arity} argument(s), expected {arity}")
    return f


def cmd_compose(args) -> int:
    model = _load(args.files)
    op, names = args.op, args.operands
    name = args.name or "_".join([op] + list(names))
    payload = {"command": "compose", "op": op, "operands": list(names)}
    decls = []
    code = EXIT_OK
    if op in ("seq", "par"):
        s1, s2 = _systems(model, names, 2)
        composed = (compose_sequential if op == "seq" else compose_parallel)(s1, s2, name=name)
        rep = check_compositionality(op, [(s1, s2)])
        note = [f"{op} composition is {rep.verdict}"] + list(rep.details)
        decls.append(system_decl(composed))
        payload["verdict"] = rep.verdict
    elif op == "u":
        s1, s2, s3 = _systems(model, names, 3)
        composed = compose_u(s1, s2, s3, name=name)
        note = ["u composition is compositional", composed.meta["note"]]
        decls.append(system_decl(composed))
        payload["verdict"] = "compositional"
    elif op == "loop":
        if len(names) != 2:
            raise UsageError("loop takes two operands: the step function h(a, b, c) and the start function g(a)")
        h, g = _function(model, names[0], 3), _function(model, names[1], 1)
        body = loop_body(h, g, name=names[0])
        composed = compose_loop(counter_system(), body, args.a, args.n, name=name)
        rep = check_compositionality("loop", [(counter_system(), body, args.a, args.n)])
        value = composed.meta["value"]
        note = [f"loop composition is {rep.verdict}", f"a={args.a} n={args.n} value={value}"] + list(rep.details)
        decls.append(system_decl(composed))
        payload.update(verdict=rep.verdict, a=args.a, n=args.n, value=value)
    elif op == "while":
        if len(names) != 1:
            raise UsageError("while takes one operand: the search function g(a, b)")
        g = _function(model, names[0], 2)
        finder = zero_finder(g, name=names[0])
        res = compose_while(counter_system(), finder, args.a, args.budget)
        rep = check_compositionality("while", [(counter_system(), finder, args.a, args.budget)])
        if res.exhausted:
            note = [f"budget {args.budget} exhausted: no zero found, time step unknown"]
            code = EXIT_UNKNOWN
        else:
            note = [f"δ={res.delta}", f"while composition is {rep.verdict}"] + list(rep.details)
        payload.update(verdict=rep.verdict, a=args.a, budget=args.budget, delta=res.delta, exhausted=res.exhausted)
    elif op == "process":
        if len(names) != 2 or not args.via:
            raise UsageError("process takes two process operands and --via PROTOCOL")
        for n in names:
            _kind_of(model, n, ("process",))
        _kind_of(model, args.via, ("protocol",))
        merged = compose_processes(model.process(names[0]), model.process(names[1]), model.protocol(args.via),
                                   name=name)
        roles = ", ".join(merged.coordinated.role_names)
        binds = ", ".join(f"{r} -> {cp}" for r, cp in sorted(merged.bindings.items()))
        note = [f"process composition via {args.via}", f"remaining roles: {roles}", f"bindings: {binds}"]
        decls.append(automaton_decl(merged.coordinated.result))
        payload.update(verdict="composed", roles=list(merged.coordinated.role_names), bindings=dict(merged.bindings))
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown op {op}")

    for line in note:
        print(line)
    payload["note"] = note
    if args.out:
        text = "".join(f"# {line}\n" for line in note) + serialize(Document(tuple(decls)))
        write_atomic(args.out, text)
    _write_report(args.report, payload)
    return code


# -- coordinate ---------------------------------------------------------------


def rules_decl(name: str, rules) -> RulesDecl:
    out = []
    for r in rules:
        guards = []
        for g in r.when:
            states = tuple(sorted(g.states))
            if len(states) == 1:
                guards.append(GuardDecl(g.role, "!=" if g.negate else "=", states))
            else:
                guards.append(GuardDecl(g.role, "not in" if g.negate else "in", states))
        out.append(RuleDecl(r.name, tuple(guards), r.on, tuple(sorted(r.forbid))))
    return RulesDecl(name, tuple(out))


def cmd_coordinate(args) -> int:
    model = _load(args.files)
    _kind_of(model, args.target, ("process",))
    decl = model.processes[args.target]
    roles = [model.automata[r] for r in decl.roles]
    base = weakly_synchronized_product(roles, name=args.target)
    payload = {"command": "coordinate", "target": args.target}
    if args.synthesize:
        res = synthesize_rules(base, roles, budget=args.budget)
        print(f"synthesis: {res.status} after {res.candidates} candidate(s)")
        payload.update(status=res.status, candidates=res.candidates)
        if res.status != "found":
            _write_report(args.report, {**payload, "verdict": FAIL if res.status == "exhausted" else UNKNOWN})
            return EXIT_FAIL if res.status == "exhausted" else EXIT_UNKNOWN
        rules = res.rules
        c = res.coordinated
    else:
        rules = tuple(r for rs in decl.rule_sets for r in model.rule_sets[rs])
        c = apply_rules(base, roles, rules, strict=False)
    rep = check_coordinated(c)
    print(rep.to_text(), end="")
    text = serialize(Document((rules_decl(f"{args.target}_rules", rules),)))
    if args.synthesize:
        print(text, end="")
    if args.out:
        write_atomic(args.out, text)
    if args.dot:
        write_atomic(args.dot, export_dot(c))
    payload.update(verdict=rep.verdict, check=rep.to_dict(), states=len(c.result.states),
                   transitions=len(c.result.transitions))
    _write_report(args.report, payload)
    return _EXIT[rep.verdict]


# -- simulate -----------------------------------------------------------------


def _read_script(path) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read script {path}: {e.strerror}") from None
    items = []
    for line in text.splitlines():
        items.extend(line.split("#", 1)[0].split())
    return items


def cmd_simulate(args) -> int:
    model = _load(args.files)
    kind = _kind_of(model, args.target, ("protocol", "process", "automaton"))
    if kind == "protocol":
        target = model.protocol(args.target, tree=args.tree)
    elif kind == "process":
        c = model.process(args.target, strict=False).coordinated
        if not c.ok:
            print(c.report.to_text(), end="")
            for w in c.report.witnesses:
                if w.kind == "quasi-determinism":
                    print(f"quasi-determinism violated at {w.note or (w.path[-1].dst if w.path else '')}")
            return EXIT_FAIL
        target = c
    else:
        target = model.automata[args.target]
    script = _read_script(args.script) if args.script else None
    cfg = SchedulerConfig(seed=args.seed, policy=args.policy, max_steps=args.steps)
    try:
        trace = run(target, cfg, script)
    except ExecutionError as e:
        print(str(e))
        _write_report(args.report, {"command": "simulate", "target": args.target, "verdict": FAIL, "error": str(e)})
        return EXIT_FAIL
    text = trace.to_json() if args.trace and str(args.trace).endswith(".json") else trace.to_text()
    if args.trace:
        write_atomic(args.trace, text)
    else:
        print(text, end="")
    print(f"steps: {len(trace.steps)}  halted: {str(trace.halted).lower()}")
    print(f"acceptance: {trace.accepted}")
    fair = {}
    for policy in ("weak", "strong"):
        f = check_fairness(trace, target, policy, window=args.window)
        fair[policy] = f.fair
        where = "" if f.fair else f" (starved {f.key} at step {f.position})"
        print(f"fairness {policy} (window {f.window}): {'ok' if f.fair else 'violated'}{where}")
    _write_report(args.report, {
        "command": "simulate",
        "target": args.target,
        "verdict": PASS,
        "seed": args.seed,
        "policy": args.policy,
        "steps": len(trace.steps),
        "halted": trace.halted,
        "acceptance": trace.accepted,
        "fairness": fair,
    })
    return EXIT_OK


# -- export -------------------------------------------------------------------


def cmd_export(args) -> int:
    model = _load(args.files)
    kind = _kind_of(model, args.target)
    if kind == "protocol":
        x = model.protocol(args.target, tree=args.tree, cap=args.cap)
    elif kind == "process":
        x = model.process(args.target, strict=False).coordinated
    elif kind == "automaton":
        x = model.automata[args.target]
    else:
        x = to_diofa(model.systems[args.target])
    text = export_dot(x)
    if args.dot:
        try:
            write_atomic(args.dot, text)
        except OSError as e:
            raise UsageError(f"cannot write {args.dot}: {e.strerror}") from None
        print(f"wrote {args.dot}")
    else:
        print(text, end="")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ioacalc", description="Check, compose, coordinate and run I/O automata.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, target=True):
        p.add_argument("files", nargs="+", type=Path, help=".ioa files")
        if target:
            p.add_argument("--target", required=True, help="name of the declaration to act on")
        p.add_argument("--report", type=Path, help="write a JSON report here")

    p = sub.add_parser("check", help="well-formedness, consistency or coordination checks")
    common(p)
    p.add_argument("--which", choices=("wellformed", "consistent", "coordinated", "all"), default="all")
    p.add_argument("--cap", type=int, default=10**5, help="CBR state cap")
    p.add_argument("--tree", action="store_true", help="allow tree-executable protocols")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compose", help="compose systems or processes")
    common(p, target=False)
    p.add_argument("--op", required=True, choices=("seq", "par", "loop", "while", "u", "process"))
    p.add_argument("--operands", nargs="+", required=True, metavar="NAME", help="systems, functions or processes")
    p.add_argument("--a", type=int, default=0, help="loop/while parameter")
    p.add_argument("--n", type=int, default=0, help="loop count")
    p.add_argument("--budget", type=int, default=100, help="while step budget")
    p.add_argument("--via", help="connecting protocol for process composition")
    p.add_argument("--name", help="name of the composed declaration")
    p.add_argument("--out", type=Path, help="write the composed .ioa here")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("simulate", help="seeded execution")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--policy", choices=POLICIES, default="arbitrary")
    p.add_argument("--script", type=Path, help="input script: component.symbol or eps per item")
    p.add_argument("--trace", type=Path, help="write the trace here (.json for JSON)")
    p.add_argument("--window", type=int, default=100, help="fairness window")
    p.add_argument("--tree", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coordinate", help="apply or synthesize coordination rules")
    common(p)
    p.add_argument("--synthesize", action="store_true", help="search for rules instead of applying declared ones")
    p.add_argument("--budget", type=int, default=10**4, help="synthesis candidate budget")
    p.add_argument("--out", type=Path, help="write the rules as .ioa here")
    p.add_argument("--dot", type=Path, help="write the coordinated automaton as DOT here")
    p.set_defaults(func=cmd_coordinate)

    p = sub.add_parser("export", help="DOT export")
    common(p)
    p.add_argument("--dot", type=Path, help="output path (stdout when absent)")
    p.add_argument("--cap", type=int, default=10**5)
    p.add_argument("--tree", action="store_true")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (StateCapExceeded, SynthesisBudgetError) as e:
        print(f"unknown (capped): {e}", file=sys.stderr)
        return EXIT_UNKNOWN
    except (SystemSpecError, ChannelError, ProcessCompositionError, UnknownTransitionClass, CoordinationError,
            AutomatonError, ExprError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
