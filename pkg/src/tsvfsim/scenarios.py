"""Canonical interferometer scenarios and their self-checking expectation tables.

Every constructor returns a :class:`Scenario` whose ``expected`` table has
already been re-derived from the circuit (evolution, weak values, ABL) and
found to hold; a failing table raises :class:`ScenarioError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .circuit import (
    Absorber,
    Circuit,
    CircuitError,
    Mixer,
    Router,
    Swap,
    branch_on_absorber,
    detector_probabilities,
    evolve,
    evolve_joint,
    validate,
)
from .state import StateVector, inner, projector_onto
from .tsvf import (
    ImpossibleHistory,
    NullPostSelection,
    abl_probability,
    postselection_probability,
    two_state_at,
    weak_value,
)

TOL = 1e-9

Value = Union[complex, tuple[tuple[str, complex], ...]]

# kind -> (target type, value type)
KINDS = {
    "forward": ("slice", "state"),
    "backward": ("slice", "state"),
    "overlap": ("slice", "scalar"),
    "weak": ("railslice", "scalar"),
    "abl": ("railslice", "scalar"),
    "postprob": (None, "scalar"),
    "absorb": ("railslice", "scalar"),
    "detect": ("detector", "scalar"),
    "probe": (None, "state"),
    "probecorr": (None, "scalar"),
    "rflag": ("branch", "scalar"),
}
SOURCES = ("reported", "derived")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Label:
    symbol: str
    rail: Optional[str]
    slice: int

    def __str__(self):
        return f"{self.rail or ''}@{self.slice}"


@dataclass(frozen=True)
class Expectation:
    """One expected number (or state) in a scenario's table.

    ``group`` ties several lines into one reported check; ``source`` is
    ``"reported"`` for values taken from the published analysis and
    ``"derived"`` for values computed independently.
    """

    group: str
    kind: str
    target: str
    value: Value
    source: str = "derived"


@dataclass(frozen=True)
class Scenario:
    name: str
    circuit: Circuit
    labels: tuple[Label, ...] = ()
    expected: tuple[Expectation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(sorted(self.labels, key=lambda l: l.symbol)))
        object.__setattr__(self, "expected", tuple(self.expected))

    def label(self, symbol: str) -> Label:
        for l in self.labels:
            if l.symbol == symbol:
                return l
        raise KeyError(symbol)

    def resolve(self, ref: str) -> tuple[Optional[str], int]:
        """Map a symbol, ``rail@slice``, ``@slice`` or bare slice number to (rail, slice)."""
        try:
            l = self.label(ref)
            return l.rail, l.slice
        except KeyError:
            pass
        if "@" in ref:
            rail, _, s = ref.partition("@")
            return (rail or None), int(s)
        return None, int(ref)


def split_railslice(target: str) -> tuple[str, int]:
    rail, _, s = target.partition("@")
    return rail, int(s)


@dataclass(frozen=True)
class CheckResult:
    group: str
    passed: bool
    details: tuple[str, ...] = field(default=())


def _close(a: complex, b: complex) -> bool:
    return abs(a - b) <= TOL


def conditional_probe(circuit: Circuit) -> StateVector:
    """Unnormalized probe state given the system's post-selection."""
    final = evolve_joint(circuit)[-1]
    return final.condition_on_system(circuit.postselect)


def router_flags(scenario: Scenario) -> dict[int, str]:
    """Expected probe flag per branch: R where the shutter's projector weak value is 1, T where 0."""
    trace = evolve(scenario.circuit)
    flags = {}
    for n, step in enumerate(scenario.circuit.steps, 1):
        for e in step:
            if isinstance(e, Router):
                wv = weak_value(two_state_at(trace, n - 1), projector_onto(e.rail, scenario.circuit.rails)).value
                if _close(wv, 1):
                    flags[e.branch] = "R"
                elif _close(wv, 0):
                    flags[e.branch] = "T"
                else:
                    raise ScenarioError(f"branch {e.branch}: weak value {wv:.6g} on {e.rail} is neither 0 nor 1")
    return flags


def d5_state(scenario: Scenario) -> StateVector:
    """Probe state that interferes constructively at the probe's output port."""
    c = scenario.circuit
    flags = router_flags(scenario)
    amps = {f"p{k}{flags.get(k, 'T')}": a for k, a in enumerate(c.probe_amps, 1)}
    return StateVector.from_mapping(c.probe_basis, amps)


def measure(scenario: Scenario, e: Expectation, trace=None) -> Value:
    """Compute the quantity an expectation refers to."""
    c = scenario.circuit
    trace = trace or evolve(c)
    if e.kind in ("forward", "backward"):
        states = trace.forward if e.kind == "forward" else trace.backward
        s = states[int(e.target)]
        return tuple((r, complex(a)) for r, a in zip(s.basis, s.amps))
    if e.kind == "overlap":
        return two_state_at(trace, int(e.target)).overlap
    if e.kind == "weak":
        rail, k = split_railslice(e.target)
        return weak_value(two_state_at(trace, k), projector_onto(rail, c.rails)).value
    if e.kind == "abl":
        rail, k = split_railslice(e.target)
        return complex(abl_probability(trace, k, projector_onto(rail, c.rails)))
    if e.kind == "postprob":
        return complex(postselection_probability(trace))
    if e.kind == "absorb":
        rail, n = split_railslice(e.target)
        return complex(branch_on_absorber(c, n, rail).absorbed.probability)
    if e.kind == "detect":
        return complex(detector_probabilities(trace)[e.target])
    if e.kind == "probe":
        s = conditional_probe(c).normalized()
        return tuple((r, complex(a)) for r, a in zip(s.basis, s.amps))
    if e.kind == "probecorr":
        got = conditional_probe(c).normalized()
        return complex(abs(inner(d5_state(scenario), got)) ** 2)
    if e.kind == "rflag":
        k = int(e.target)
        amp = conditional_probe(c)[f"p{k}R"]
        overlap = inner(c.postselect, trace.forward[-1])
        return amp / (overlap * c.probe_amps[k - 1])
    raise ScenarioError(f"unknown expectation kind {e.kind!r}")


def _compare(e: Expectation, got: Value) -> Optional[str]:
    if isinstance(e.value, tuple):
        want = dict(e.value)
        got_d = dict(got)
        if e.kind == "probe":
            w = np.array([want.get(r, 0) for r in got_d], dtype=complex)
            g = np.array(list(got_d.values()), dtype=complex)
            fid = abs(np.vdot(w / np.linalg.norm(w), g)) ** 2
            if fid < 1 - TOL:
                return f"probe fidelity {fid:.12g} < 1 - {TOL:g}"
            return None
        bad = [r for r in got_d if not _close(got_d[r], want.get(r, 0))]
        if bad:
            return "amplitude mismatch on " + ", ".join(f"{r}: got {got_d[r]:.12g}, want {want.get(r, 0):.12g}" for r in bad)
        return None
    if not _close(got, e.value):
        return f"got {got:.12g}, want {e.value:.12g}"
    return None


def run_checks(scenario: Scenario) -> list[CheckResult]:
    """Evaluate the expectation table, one result per group in table order."""
    problems = validate(scenario.circuit)
    if problems:
        return [CheckResult("validate", False, tuple(problems))]
    trace = evolve(scenario.circuit)
    groups: dict[str, list[str]] = {}
    for e in scenario.expected:
        msgs = groups.setdefault(e.group, [])
        try:
            err = _compare(e, measure(scenario, e, trace))
        except (NullPostSelection, ImpossibleHistory, CircuitError, ScenarioError, KeyError, ValueError, IndexError) as exc:
            err = f"{type(exc).__name__}: {exc}"
        if err:
            msgs.append(f"{e.kind} {e.target}: {err}".replace("  ", " "))
    return [CheckResult(g, not msgs, tuple(msgs)) for g, msgs in groups.items()]


def verified(scenario: Scenario) -> Scenario:
    failed = [r for r in run_checks(scenario) if not r.passed]
    if failed:
        raise ScenarioError(f"{scenario.name}: " + "; ".join(f"{r.group}: {' / '.join(r.details)}" for r in failed))
    return scenario


# -- constructors -----------------------------------------------------------

S2 = math.sqrt(1 / 2)
S3 = math.sqrt(1 / 3)
S23 = math.sqrt(2 / 3)


def _state(rails, **amps) -> StateVector:
    return StateVector.from_mapping(rails, amps)


def _x(group, kind, target, value, source="derived"):
    if isinstance(value, dict):
        value = tuple((r, complex(a)) for r, a in value.items())
    else:
        value = complex(value)
    return Expectation(group, kind, target, value, source)


def single_bs_split() -> Scenario:
    """One balanced mixer; each output rail carries a detector.

    Photon enters on A. Post-selecting D1 (rail A) makes rail B the void
    branch of the forward state after the mixer and of the backward state
    before it.
    """
    rails = ("A", "B")
    c = Circuit(
        rails,
        [[Mixer("A", "B", S2)]],
        _state(rails, A=1),
        _state(rails, A=1),
        {"D1": "A", "D2": "B"},
    )
    expected = [
        _x("postselection", "postprob", "", 0.5),
        _x("weak_values_before", "weak", "A@0", 1),
        _x("weak_values_before", "weak", "B@0", 0),
        _x("weak_values_after", "weak", "A@1", 1),
        _x("weak_values_after", "weak", "B@1", 0),
        _x("detectors", "detect", "D1", 0.5),
        _x("detectors", "detect", "D2", 0.5),
    ]
    labels = [Label("t1", None, 0), Label("t2", None, 1)]
    return verified(Scenario("single_bs", c, labels, expected))


def _nested_steps(with_probe: bool):
    bs1 = [Mixer("C", "S", S23)]
    steps = [
        bs1,                                          # BS1: 1/3 to C, 2/3 to S
        [Swap("S", "E")],                             # S -> arm E
        [Mixer("B", "E", S2)],                        # BS2 (B is the empty port)
        [Swap("E", "A")],                             # E -> inner arm A
        [Mixer("B", "A", S2)],                        # BS3: constructive exit on B
        [Swap("B", "D1"), Swap("A", "F")],            # exits: D1, F
        [Mixer("C", "F", S3)],                        # BS4: 2/3 of F to C
        [Swap("C", "D3"), Swap("F", "D2")],
    ]
    if with_probe:
        steps.insert(2, [Router("E", 1, 1)])
        steps.insert(5, [Router("A", 2, 2), Router("C", 3, 2)])
        steps.insert(8, [Router("F", 4, 3)])
    return steps


NESTED_RAILS = ("S", "C", "E", "A", "B", "F", "D1", "D2", "D3")
NESTED_DETECTORS = {"D1": "D1", "D2": "D2", "D3": "D3"}


def nested_mzi(obstruct_f: bool = False) -> Scenario:
    """Large interferometer with a balanced one nested in its E arm.

    Slices: 2 = arm E, 4 = inner arms A, B and outer arm C, 6 = exit F.
    With ``obstruct_f`` an absorber is placed on F right after the inner
    interferometer (extra step 7), and no expectation table is attached.
    """
    rails = NESTED_RAILS
    steps = _nested_steps(False)
    if obstruct_f:
        steps.insert(6, [Absorber("F")])
    c = Circuit(rails, steps, _state(rails, S=1), _state(rails, D3=1), NESTED_DETECTORS)
    labels = [
        Label("E", "E", 2), Label("A", "A", 4), Label("B", "B", 4), Label("C", "C", 4), Label("F", "F", 6),
        Label("t1", None, 2), Label("t2", None, 4), Label("t3", None, 6),
    ]
    if obstruct_f:
        return Scenario("nested_mzi_obstructed", c, labels)
    expected = [
        _x("forward_state", "forward", "4", {"A": S3, "B": S3, "C": S3}, "reported"),
        _x("backward_state", "backward", "4", {"A": S3, "B": -S3, "C": S3}, "reported"),
        _x("two_state_overlap", "overlap", "4", 1 / 3, "reported"),
        _x("inner_arm_weak_values", "weak", "A@4", 1, "reported"),
        _x("inner_arm_weak_values", "weak", "B@4", -1, "reported"),
        _x("inner_arm_weak_values", "weak", "C@4", 1, "reported"),
        _x("entry_exit_weak_values", "weak", "E@2", 0, "reported"),
        _x("entry_exit_weak_values", "weak", "F@6", 0, "reported"),
        _x("postselection_rate", "postprob", "", 1 / 9, "reported"),
        _x("abl_certainties", "abl", "A@4", 1, "reported"),
        _x("abl_certainties", "abl", "C@4", 1, "reported"),
        _x("abl_certainties", "abl", "B@4", 0.2),
    ]
    return verified(Scenario("nested_mzi", c, labels, expected))


def three_box_cycle() -> Scenario:
    """Three boxes; A and B are coupled, C is isolated.

    R (45 degree real rotation, A -> (A+B)/sqrt2, B -> (B-A)/sqrt2) acts
    between t1 and t2 and again between t2 and t3, then R^-2 (A -> -B,
    B -> A) between t3 and t4. Slices 0..3 are t1..t4.
    """
    rails = ("A", "B", "C")
    r = Mixer("B", "A", S2)
    c = Circuit(
        rails,
        [[r], [r], [Mixer("A", "B", 0.0)]],
        _state(rails, A=S3, B=S3, C=S3),
        _state(rails, A=S3, B=-S3, C=S3),
    )
    table = {0: (1, -1, 1), 1: (0, 0, 1), 2: (-1, 1, 1), 3: (1, -1, 1)}
    expected = []
    for k, vals in table.items():
        for rail, v in zip(rails, vals):
            expected.append(_x(f"weak_values_t{k + 1}", "weak", f"{rail}@{k}", v))
    expected += [_x("overlap", "overlap", str(k), 1 / 3) for k in range(4)]
    labels = [Label(f"t{k + 1}", None, k) for k in range(4)]
    return verified(Scenario("three_box", c, labels, expected))


def shutter_probe(alphas=(0.5, 0.5, 0.5, 0.5)) -> Scenario:
    """Nested interferometer photon as a shutter for a four-branch probe.

    Probe branch k starts transmitted (T) and is flipped to reflected (R)
    by a router wherever the shutter occupies its location: E before the
    inner interferometer (t1), A and C inside it (t2), F after it (t3).
    """
    alphas = tuple(complex(a) for a in alphas)
    rails = NESTED_RAILS
    c = Circuit(
        rails,
        _nested_steps(True),
        _state(rails, S=1),
        _state(rails, D3=1),
        NESTED_DETECTORS,
        probe_amps=alphas,
    )
    a1, a2, a3, a4 = alphas
    labels = [
        Label("E", "E", 2), Label("A", "A", 5), Label("B", "B", 5), Label("C", "C", 5), Label("F", "F", 8),
        Label("t1", None, 2), Label("t2", None, 5), Label("t3", None, 8),
    ]
    expected = [
        _x("probe_state", "probe", "", {"p1T": a1, "p2R": a2, "p3R": a3, "p4T": a4}, "reported"),
        _x("reflection_weak_values", "rflag", "1", 0),
        _x("reflection_weak_values", "rflag", "2", 1),
        _x("reflection_weak_values", "rflag", "3", 1),
        _x("reflection_weak_values", "rflag", "4", 0),
        _x("probe_output_port", "probecorr", "", 1, "reported"),
        _x("postselection_rate", "postprob", "", 1 / 9, "reported"),
    ]
    return verified(Scenario("shutter_probe", c, labels, expected))


def ifm(with_absorber: bool = True) -> Scenario:
    """Balanced interferometer with an absorbing object in arm L.

    Without the object every photon leaves on L (``bright``); the object
    makes the otherwise dark port U fire in a quarter of all trials.
    """
    rails = ("U", "L")
    middle = [Absorber("L")] if with_absorber else []
    c = Circuit(
        rails,
        [[Mixer("U", "L", S2)], middle, [Mixer("U", "L", S2)]],
        _state(rails, U=1),
        _state(rails, U=1),
        {"bright": "L", "dark": "U"},
    )
    labels = [Label("L", "L", 1), Label("U", "U", 1)]
    if not with_absorber:
        expected = [_x("detectors", "detect", "dark", 0), _x("detectors", "detect", "bright", 1)]
        return verified(Scenario("ifm_open", c, labels, expected))
    expected = [
        _x("absorption", "absorb", "L@2", 0.5),
        _x("detectors", "detect", "dark", 0.25),
        _x("detectors", "detect", "bright", 0.25),
        _x("postselection_rate", "postprob", "", 0.25),
        _x("dark_click_weak_values", "weak", "L@1", 0),
        _x("dark_click_weak_values", "weak", "U@1", 1),
    ]
    return verified(Scenario("ifm", c, labels, expected))


CANONICAL: dict[str, tuple[Callable[[], Scenario], str]] = {
    "single_bs": (single_bs_split, "single balanced mixer: void branches of the forward and backward states"),
    "nested_mzi": (nested_mzi, "nested Mach-Zehnder: inner-arm weak values +1/-1/+1, post-selection 1/9"),
    "three_box": (three_box_cycle, "three boxes: disappearance and reappearance cycle over t1..t4"),
    "shutter_probe": (shutter_probe, "nested Mach-Zehnder shutter probed by a four-branch router photon"),
    "ifm": (ifm, "interaction-free measurement: absorber in one arm of a balanced interferometer"),
}


def canonical(name: str) -> Scenario:
    return CANONICAL[name][0]()
