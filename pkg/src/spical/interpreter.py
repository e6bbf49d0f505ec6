"""Multi-instant execution: tau scheduling + end-of-instant advancement.

Each instant composes the state with the script's emission context for
that instant, runs tau steps under the chosen policy until suspension
(or the budget runs out, which is reported as suspected divergence --
the semantics has no fairness assumption, so the tool never "resolves"
a divergence), then advances with one or all value choices.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .eoi import ValueChoice, instant_choices, _eoi_all
from .lts import Explorer, Tau, ValueUniverse, canonical_state
from .surface import print_program, print_term
from .syntax import Definitions, Emit, Par, Program, program_key


@dataclass
class RunConfig:
    max_instants: int = 1
    tau_budget: int = 2000
    policy: str = "first"  # "first" | "random" | "enumerate"
    seed: int = 0
    script: tuple = ()  # per instant: tuple of (Name, Term) emissions
    trace_cap: int = 128
    choice_cap: int = 20000

    def __post_init__(self):
        if self.max_instants <= 0 or self.tau_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.policy not in ("first", "random", "enumerate"):
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class Instant:
    injected: tuple  # tuple[(Name, Term), ...]
    steps: tuple  # tuple[(action str, state str), ...]
    suspended: str | None
    choice: dict | None  # {signal text: [value strings]}
    next_program: str | None
    diverged: bool = False


@dataclass
class Trace:
    instants: list = field(default_factory=list)
    final: Program | None = None

    @property
    def divergence_suspected(self) -> bool:
        return any(i.diverged for i in self.instants)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "divergence_suspected": self.divergence_suspected,
            "final": print_program(self.final) if self.final is not None else None,
            "instants": [
                {
                    "injected": [
                        {"signal": s.text, "value": print_term(v)}
                        for s, v in i.injected
                    ],
                    "steps": [
                        {"action": a, "state": st} for a, st in i.steps
                    ],
                    "suspended": i.suspended,
                    "choice": i.choice,
                    "next": i.next_program,
                    "diverged": i.diverged,
                }
                for i in self.instants
            ],
        }


class DivergenceSuspected(Exception):
    def __init__(self, trace: Trace):
        super().__init__("tau budget exhausted without reaching suspension")
        self.trace = trace


def _inject(state: Program, emissions) -> Program:
    for s, v in emissions:
        state = Par(state, Emit(s, v))
    return state


def _choice_json(choice: ValueChoice) -> dict:
    return {
        s.text: [print_term(v) for v in vs] for s, vs in choice.table
    }


def run(
    p: Program,
    defs: Definitions,
    u: ValueUniverse,
    cfg: RunConfig,
) -> list:
    """Execute for up to cfg.max_instants; returns one Trace per explored
    schedule (singleton for the deterministic policies)."""
    ex = Explorer(defs, u)
    rng = random.Random(cfg.seed)

    def tau_options(state: Program) -> list:
        return [q for a, q in ex.transitions(state) if isinstance(a, Tau)]

    def run_instant_path(state: Program, injected) -> list:
        """(steps, suspended_state or None) alternatives under the policy."""
        state = ex.rep(_inject(state, injected))
        if cfg.policy == "enumerate":
            paths = []
            stack = [(state, (), frozenset((program_key(state),)))]
            while stack:
                cur, steps, visited = stack.pop()
                if len(steps) > cfg.tau_budget:
                    paths.append((steps, None))
                    continue
                opts = tau_options(cur)
                if not opts:
                    paths.append((steps, cur))
                    continue
                progressed = False
                for q in reversed(opts):
                    if len(paths) + len(stack) > cfg.trace_cap:
                        break
                    k = program_key(q)
                    if k in visited:
                        continue  # cycle along this path
                    progressed = True
                    stack.append((q, steps + (q,), visited | {k}))
                if not progressed:
                    # every option loops back: suspected divergence
                    paths.append((steps, None))
            return paths
        steps = []
        cur = state
        for _ in range(cfg.tau_budget):
            opts = tau_options(cur)
            if not opts:
                return [(tuple(steps), cur)]
            cur = opts[0] if cfg.policy == "first" else rng.choice(opts)
            steps.append(cur)
        return [(tuple(steps), None)]

    traces: list = []

    def advance(state: Program, instant_index: int, record: Trace):
        if instant_index >= cfg.max_instants:
            record.final = state
            traces.append(record)
            return
        injected = cfg.script[instant_index] if instant_index < len(cfg.script) else ()
        for steps, suspended in run_instant_path(state, injected):
            if len(traces) >= cfg.trace_cap:
                return
            step_log = tuple(("tau", print_program(q)) for q in steps)
            if suspended is None:
                t = _clone(record)
                t.instants.append(Instant(tuple(injected), step_log, None,
                                          None, None, diverged=True))
                t.final = None
                traces.append(t)
                continue
            choices = instant_choices(suspended, cfg.choice_cap)
            if cfg.policy != "enumerate":
                choices = choices[:1]
            for choice in choices:
                succs = _eoi_all(suspended, choice, cfg.choice_cap)
                if cfg.policy != "enumerate":
                    succs = succs[:1]
                for succ in sorted({program_key(canonical_state(s)):
                                    canonical_state(s) for s in succs}.values(),
                                   key=program_key):
                    if len(traces) >= cfg.trace_cap:
                        return
                    t = _clone(record)
                    t.instants.append(Instant(
                        tuple(injected), step_log,
                        print_program(suspended),
                        _choice_json(choice),
                        print_program(succ),
                    ))
                    advance(succ, instant_index + 1, t)

    advance(ex.rep(p), 0, Trace())
    return traces


def _clone(t: Trace) -> Trace:
    out = Trace()
    out.instants = list(t.instants)
    out.final = t.final
    return out


def traces_to_json(traces: list) -> str:
    payload = {
        "version": 1,
        "traces": sorted(
            (t.to_json() for t in traces),
            key=lambda d: json.dumps(d, sort_keys=True),
        ),
    }
    return json.dumps(payload, sort_keys=True, indent=2)
