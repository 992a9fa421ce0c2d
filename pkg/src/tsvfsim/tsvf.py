"""Two-state vectors, weak values and ABL probabilities."""
from __future__ import annotations

from dataclasses import dataclass

from .circuit import EvolutionTrace
from .state import Operator, StateVector, StructuralError, apply, inner, projector_onto

EPS = 1e-12


class NullPostSelection(ArithmeticError):
    """Pre- and post-selected states are (numerically) orthogonal."""


class ImpossibleHistory(ArithmeticError):
    """Neither outcome of an intermediate measurement is compatible with both selections."""


@dataclass(frozen=True)
class TwoState:
    slice: int
    bra: StateVector
    ket: StateVector
    overlap: complex


@dataclass(frozen=True)
class WeakValue:
    value: complex
    operator: str
    slice: int

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag


def two_state_at(trace: EvolutionTrace, k: int) -> TwoState:
    if not 0 <= k <= trace.n_slices:
        raise IndexError(f"slice {k} outside 0..{trace.n_slices}")
    bra, ket = trace.backward[k], trace.forward[k]
    ov = inner(bra, ket)
    if abs(ov) <= EPS:
        raise NullPostSelection(f"<phi|psi> = {ov:.3g} at slice {k}; weak values undefined")
    return TwoState(k, bra, ket, ov)


def weak_value(ts: TwoState, op: Operator) -> WeakValue:
    """<phi|A|psi> / <phi|psi>."""
    if abs(ts.overlap) <= EPS:
        raise NullPostSelection(f"<phi|psi> = {ts.overlap:.3g}")
    if op.basis != ts.ket.basis:
        raise StructuralError("operator basis does not match the two-state")
    return WeakValue(inner(ts.bra, apply(op, ts.ket)) / ts.overlap, op.name, ts.slice)


def projector_weak_values(ts: TwoState) -> dict[str, WeakValue]:
    """Weak value of the projector onto each rail; they sum to one."""
    basis = ts.ket.basis
    return {r: weak_value(ts, projector_onto(r, basis)) for r in basis}


def postselection_probability(trace: EvolutionTrace) -> float:
    return abs(inner(trace.circuit.postselect, trace.forward[-1])) ** 2


def abl_probability(trace: EvolutionTrace, k: int, p: Operator) -> float:
    """Probability that a projective test of ``p`` at slice ``k`` finds it,
    given both the pre- and the post-selection."""
    if not p.projector:
        raise ValueError("ABL probability needs a flagged projector")
    if not 0 <= k <= trace.n_slices:
        raise IndexError(f"slice {k} outside 0..{trace.n_slices}")
    bra, ket = trace.backward[k], trace.forward[k]
    found = abs(inner(bra, apply(p, ket))) ** 2
    missed = abs(inner(bra, apply(p.complement(), ket))) ** 2
    total = found + missed
    if total <= EPS:
        raise ImpossibleHistory(f"both outcomes of {p.name or 'P'} at slice {k} are excluded by the post-selection")
    return found / total
