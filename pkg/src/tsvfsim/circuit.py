"""Time-sliced optical circuits and their forward/backward evolution.

Slices are numbered 0..S. Step ``n`` (1-based, as in the netlist format)
maps slice ``n-1`` to slice ``n``; ``ops[n-1]`` in code.

Mixer convention: a mixer on the ordered rail pair (r1, r2) with
transmission ``t``, reflection ``r = sqrt(1 - t^2)`` and optional phase
``phi`` acts on the amplitude column (a1, a2) as::

    [[ t,               r e^{i phi}],
     [-r e^{-i phi},    t          ]]

so with ``phi = 0`` a photon entering on r1 leaves as ``t|r1> - r|r2>``
and one entering on r2 leaves as ``r|r1> + t|r2>``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .state import ATOL, Operator, StateVector, apply, identity, JointState, tensor


class CircuitError(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Mixer:
    r1: str
    r2: str
    t: float
    phase: float = 0.0

    @property
    def rails(self):
        return (self.r1, self.r2)

    @property
    def r(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.t * self.t))

    def block(self) -> np.ndarray:
        t, r = self.t, self.r
        e = cmath.exp(1j * self.phase)
        return np.array([[t, r * e], [-r * e.conjugate(), t]], dtype=complex)


@dataclass(frozen=True)
class Phase:
    rail: str
    angle: float

    @property
    def rails(self):
        return (self.rail,)


@dataclass(frozen=True)
class Swap:
    r1: str
    r2: str

    @property
    def rails(self):
        return (self.r1, self.r2)


@dataclass(frozen=True)
class Absorber:
    rail: str

    @property
    def rails(self):
        return (self.rail,)


@dataclass(frozen=True)
class Router:
    """Flips probe branch ``branch`` from T to R when the system photon is on ``rail``.

    ``at`` is the probe time-bin index the branch occupies (t1, t2, ...).
    It labels the probe mode and has no effect on the dynamics.
    """

    rail: str
    branch: int
    at: int

    @property
    def rails(self):
        return (self.rail,)


Element = Union[Mixer, Phase, Swap, Absorber, Router]


def probe_rails(n_branches: int) -> tuple[str, ...]:
    """Probe basis: branch k carries a transmitted (T) and a reflected (R) rail."""
    return tuple(f"p{k}{flag}" for k in range(1, n_branches + 1) for flag in "TR")


@dataclass(frozen=True)
class Circuit:
    rails: tuple[str, ...]
    steps: tuple[tuple[Element, ...], ...]
    preselect: StateVector
    postselect: StateVector
    detectors: tuple[tuple[str, str], ...] = ()
    probe_amps: tuple[complex, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rails", tuple(self.rails))
        object.__setattr__(self, "steps", tuple(tuple(s) for s in self.steps))
        dets = self.detectors.items() if isinstance(self.detectors, Mapping) else self.detectors
        object.__setattr__(self, "detectors", tuple(sorted(tuple(d) for d in dets)))
        if self.probe_amps is not None:
            object.__setattr__(self, "probe_amps", tuple(complex(a) for a in self.probe_amps))

    @property
    def n_slices(self) -> int:
        """Index S of the final slice."""
        return len(self.steps)

    @property
    def detector_map(self) -> dict[str, str]:
        return dict(self.detectors)

    @property
    def has_absorbers(self) -> bool:
        return any(isinstance(e, Absorber) for s in self.steps for e in s)

    @property
    def probe_basis(self) -> tuple[str, ...]:
        return probe_rails(len(self.probe_amps or ()))

    def absorbers(self) -> list[tuple[int, str]]:
        """(step number, rail) of every absorber."""
        return [(n, e.rail) for n, s in enumerate(self.steps, 1) for e in s if isinstance(e, Absorber)]


def _step_problems(step: Sequence[Element], rails: Sequence[str]) -> list[str]:
    errors = []
    seen: dict[str, Element] = {}
    branches: set[int] = set()
    for e in step:
        if len(set(e.rails)) != len(e.rails):
            errors.append(f"{type(e).__name__.lower()} uses rail {e.rails[0]!r} twice")
        for r in e.rails:
            if r not in rails:
                errors.append(f"unknown rail {r!r}")
            elif r in seen and seen[r] is not e:
                errors.append(f"rail {r!r} used by more than one element in the same step")
            seen[r] = e
        if isinstance(e, Mixer):
            if not (math.isfinite(e.t) and 0.0 <= e.t <= 1.0):
                errors.append(f"mixer on ({e.r1}, {e.r2}) not normalized: t={e.t!r} outside [0, 1]")
            if not math.isfinite(e.phase):
                errors.append(f"mixer on ({e.r1}, {e.r2}) has non-finite phase")
        elif isinstance(e, Phase) and not math.isfinite(e.angle):
            errors.append(f"phase on {e.rail!r} is not finite")
        elif isinstance(e, Router):
            if e.branch in branches:
                errors.append(f"probe branch {e.branch} routed twice in the same step")
            branches.add(e.branch)
    return errors


def _step_matrix(step: Sequence[Element], rails: tuple[str, ...]) -> tuple[np.ndarray, bool]:
    m = np.eye(len(rails), dtype=complex)
    absorbing = False
    for e in step:
        if isinstance(e, Mixer):
            i, j = rails.index(e.r1), rails.index(e.r2)
            m[np.ix_([i, j], [i, j])] = e.block()
        elif isinstance(e, Phase):
            i = rails.index(e.rail)
            m[i, i] = cmath.exp(1j * e.angle)
        elif isinstance(e, Swap):
            i, j = rails.index(e.r1), rails.index(e.r2)
            m[i, i] = m[j, j] = 0.0
            m[i, j] = m[j, i] = 1.0
        elif isinstance(e, Absorber):
            i = rails.index(e.rail)
            m[i, i] = 0.0
            absorbing = True
    return m, absorbing


def compile_step(step: Sequence[Element], rails: Sequence[str]) -> Operator:
    """System-side operator of one step.

    Unitary (and flagged so) unless the step holds an absorber, in which
    case the result is the survival operator ``I - P[absorbed rails]``
    composed with the step's unitary part. Routers act as the identity on
    the system alone; see :func:`evolve_joint`.
    """
    rails = tuple(rails)
    problems = _step_problems(step, rails)
    if problems:
        raise CircuitError(problems)
    m, absorbing = _step_matrix(step, rails)
    return Operator(rails, m, unitary=not absorbing)


def step_operators(c: Circuit) -> list[Operator]:
    return [compile_step(s, c.rails) for s in c.steps]


def validate(c: Circuit) -> list[str]:
    """Every problem found in ``c``; an empty list means the circuit is valid."""
    errors: list[str] = []
    if len(set(c.rails)) != len(c.rails):
        errors.append("duplicate rail labels")
    for n, step in enumerate(c.steps, 1):
        problems = _step_problems(step, c.rails)
        errors += [f"step {n}: {p}" for p in problems]
        if not problems:
            m, absorbing = _step_matrix(step, c.rails)
            if not absorbing and not np.allclose(m.conj().T @ m, np.eye(len(c.rails)), rtol=0, atol=ATOL):
                errors.append(f"step {n}: compiled operator is not unitary")
        if c.probe_amps is None and any(isinstance(e, Router) for e in step):
            errors.append(f"step {n}: router used but no probe declared")
        elif c.probe_amps is not None:
            for e in step:
                if isinstance(e, Router) and not 1 <= e.branch <= len(c.probe_amps):
                    errors.append(f"step {n}: router refers to probe branch {e.branch}, only {len(c.probe_amps)} declared")
    for what, s in (("preselect", c.preselect), ("postselect", c.postselect)):
        if s.basis != c.rails:
            errors.append(f"{what} basis {list(s.basis)} differs from circuit rails")
        elif not s.is_unit():
            errors.append(f"{what} state not normalized: norm^2 = {s.norm() ** 2:.17g}")
    for name, rail in c.detectors:
        if rail not in c.rails:
            errors.append(f"detector {name!r} on unknown rail {rail!r}")
    if c.probe_amps is not None:
        n2 = sum(abs(a) ** 2 for a in c.probe_amps)
        if abs(n2 - 1.0) > ATOL:
            errors.append(f"probe amplitudes not normalized: norm^2 = {n2:.17g}")
        clash = set(c.rails) & set(c.probe_basis)
        if clash:
            errors.append(f"probe rail labels collide with system rails: {sorted(clash)}")
    return errors


def check(c: Circuit) -> Circuit:
    errors = validate(c)
    if errors:
        raise CircuitError(errors)
    return c


@dataclass(frozen=True)
class EvolutionTrace:
    circuit: Circuit
    ops: tuple[Operator, ...]
    forward: tuple[StateVector, ...]
    backward: tuple[StateVector, ...]

    @property
    def n_slices(self) -> int:
        return len(self.ops)

    def propagate(self, s: StateVector, start: int) -> list[StateVector]:
        """Forward-evolve ``s`` from slice ``start`` to slice S (inclusive list)."""
        out = [s]
        for op in self.ops[start:]:
            out.append(apply(op, out[-1]))
        return out


def evolve_forward(c: Circuit, ops: Sequence[Operator] | None = None) -> tuple[StateVector, ...]:
    """forward[k+1] = U_k forward[k], starting from the pre-selected state."""
    ops = step_operators(check(c)) if ops is None else ops
    states = [c.preselect]
    for op in ops:
        states.append(apply(op, states[-1]))
    return tuple(states)


def evolve_backward(c: Circuit, ops: Sequence[Operator] | None = None) -> tuple[StateVector, ...]:
    """Kets whose duals are the backward-evolving states.

    ``<backward[k]| = <postselect| U_{S-1} ... U_k``.
    """
    ops = step_operators(check(c)) if ops is None else ops
    states = [c.postselect]
    for op in reversed(ops):
        states.append(apply(op.dagger, states[-1]))
    return tuple(reversed(states))


def evolve(c: Circuit) -> EvolutionTrace:
    ops = tuple(step_operators(check(c)))
    return EvolutionTrace(c, ops, evolve_forward(c, ops), evolve_backward(c, ops))


@dataclass(frozen=True)
class Branch:
    probability: float
    forward: tuple[StateVector, ...]


@dataclass(frozen=True)
class AbsorberBranches:
    absorbed: Branch
    survived: Branch


def branch_on_absorber(c: Circuit, step: int, rail: str) -> AbsorberBranches:
    """Split the evolution at the absorber on ``rail`` in step ``step``.

    The absorber reads the state entering the step, ``forward[step-1]``
    (normalized if earlier absorbers already removed weight). The absorbed
    branch holds the photon localized on ``rail`` from then on; the
    survived branch continues through the remaining steps from the
    renormalized ``(I - P) forward[step-1]``. Probabilities are conditional
    on reaching the absorber and sum to one.
    """
    if (step, rail) not in c.absorbers():
        raise CircuitError([f"no absorber on rail {rail!r} in step {step}"])
    trace = evolve(c)
    psi = trace.forward[step - 1]
    n2 = psi.norm() ** 2
    if n2 <= ATOL:
        raise CircuitError([f"no amplitude reaches step {step}"])
    i = c.rails.index(rail)
    hit = np.zeros(len(c.rails), dtype=complex)
    hit[i] = psi.amps[i]
    miss = psi.amps - hit
    p_abs = float(abs(psi.amps[i]) ** 2 / n2)
    p_surv = 1.0 - p_abs
    head = trace.forward[:step]
    if p_abs > 0:
        held = StateVector(c.rails, hit / math.sqrt(abs(psi.amps[i]) ** 2))
        absorbed = head + (held,) * (c.n_slices - step + 1)
    else:
        absorbed = head
    if p_surv > 0:
        s = StateVector(c.rails, miss / math.sqrt(n2 * p_surv))
        # the rest of this step acts unitarily on the other rails
        rest = [e for e in c.steps[step - 1] if not (isinstance(e, Absorber) and e.rail == rail)]
        s = apply(compile_step(rest, c.rails), s)
        survived = head + tuple(trace.propagate(s, step))
    else:
        survived = head
    return AbsorberBranches(Branch(p_abs, absorbed), Branch(p_surv, survived))


def detector_probabilities(trace: EvolutionTrace) -> dict[str, float]:
    """Click probability of each detector over all trials, read at slice S."""
    final = trace.forward[-1]
    return {name: abs(final[rail]) ** 2 for name, rail in trace.circuit.detectors}


def _apply_routers(j: JointState, routers: Sequence[Router]) -> JointState:
    amps = np.array(j.amps)
    for e in routers:
        i = j.sys_basis.index(e.rail)
        t = j.probe_basis.index(f"p{e.branch}T")
        r = j.probe_basis.index(f"p{e.branch}R")
        amps[i, [t, r]] = amps[i, [r, t]]
    return JointState(j.sys_basis, j.probe_basis, amps)


def initial_probe(c: Circuit) -> StateVector:
    """Every probe branch starts in its transmitted (T) flag."""
    if c.probe_amps is None:
        raise CircuitError(["circuit declares no probe"])
    basis = c.probe_basis
    return StateVector.from_mapping(basis, {f"p{k}T": a for k, a in enumerate(c.probe_amps, 1)})


def evolve_joint(c: Circuit) -> tuple[JointState, ...]:
    """Joint system (x) probe states at every slice.

    Each step applies its system operator (x) identity, then its routers as
    controlled T<->R swaps on the probe. The two commute because a step's
    elements touch disjoint system rails.
    """
    ops = step_operators(check(c))
    states = [tensor(c.preselect, initial_probe(c))]
    for op, step in zip(ops, c.steps):
        j = states[-1].apply_system(op)
        states.append(_apply_routers(j, [e for e in step if isinstance(e, Router)]))
    return tuple(states)


def router_matrix(c: Circuit, router: Router) -> np.ndarray:
    """Dense joint matrix of one router, for cross-checks against the index form."""
    sys_i = identity(c.rails).matrix
    pb = c.probe_basis
    i = c.rails.index(router.rail)
    p = np.zeros((len(c.rails),) * 2)
    p[i, i] = 1.0
    flip = np.eye(len(pb))
    t, r = pb.index(f"p{router.branch}T"), pb.index(f"p{router.branch}R")
    flip[[t, r]] = flip[[r, t]]
    return np.kron(sys_i - p, np.eye(len(pb))) + np.kron(p, flip)
