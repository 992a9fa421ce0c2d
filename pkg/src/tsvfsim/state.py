"""Dense complex vectors and operators over a labelled rail basis.

Every value here is immutable after construction. Amplitude arrays are
copied on the way in and marked read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

ATOL = 1e-12


class StructuralError(ValueError):
    """Basis or dimension mismatch between two objects."""


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_basis(basis: Sequence[str]) -> tuple[str, ...]:
    basis = tuple(basis)
    if len(set(basis)) != len(basis):
        seen = set()
        dup = next(b for b in basis if b in seen or seen.add(b))
        raise StructuralError(f"duplicate rail label {dup!r}")
    return basis


@dataclass(frozen=True, eq=False)
class StateVector:
    """One complex amplitude per rail.

    Also used for dual (bra) vectors: the bra <v| is stored as the ket |v>
    and conjugated where it is consumed.
    """

    basis: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self):
        basis = _check_basis(self.basis)
        amps = _frozen(self.amps)
        if amps.shape != (len(basis),):
            raise StructuralError(
                f"{amps.shape[0] if amps.ndim == 1 else amps.shape} amplitudes for {len(basis)} rails"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitude")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_mapping(cls, basis: Sequence[str], amps: Mapping[str, complex]) -> "StateVector":
        basis = tuple(basis)
        unknown = [r for r in amps if r not in basis]
        if unknown:
            raise StructuralError(f"unknown rail {unknown[0]!r}")
        return cls(basis, [complex(amps.get(r, 0.0)) for r in basis])

    @classmethod
    def basis_state(cls, basis: Sequence[str], rail: str) -> "StateVector":
        return cls.from_mapping(basis, {rail: 1.0})

    def __len__(self):
        return len(self.basis)

    def __getitem__(self, rail: str) -> complex:
        return complex(self.amps[self.index(rail)])

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.amps, other.amps)

    def __repr__(self):
        terms = ", ".join(f"{r}: {a:.6g}" for r, a in zip(self.basis, self.amps) if a != 0)
        return f"StateVector({{{terms}}})"

    def index(self, rail: str) -> int:
        try:
            return self.basis.index(rail)
        except ValueError:
            raise StructuralError(f"unknown rail {rail!r}") from None

    def as_dict(self) -> dict[str, complex]:
        return {r: complex(a) for r, a in zip(self.basis, self.amps)}

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amps / n)

    def is_unit(self, atol: float = ATOL) -> bool:
        return abs(self.norm() ** 2 - 1.0) <= atol

    def allclose(self, other: "StateVector", atol: float = ATOL) -> bool:
        return self.basis == other.basis and bool(np.allclose(self.amps, other.amps, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix over a rail basis.

    The ``unitary`` and ``projector`` flags are promises checked on
    construction to ``ATOL``.
    """

    basis: tuple[str, ...]
    matrix: np.ndarray
    unitary: bool = False
    projector: bool = False
    name: str = ""

    def __post_init__(self):
        basis = _check_basis(self.basis)
        m = _frozen(self.matrix)
        n = len(basis)
        if m.shape != (n, n):
            raise StructuralError(f"matrix shape {m.shape} does not match {n} rails")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "matrix", m)
        eye = np.eye(n)
        if self.unitary and not np.allclose(m.conj().T @ m, eye, rtol=0, atol=ATOL):
            raise ValueError(f"operator {self.name or '?'} flagged unitary but U^dagger U != I")
        if self.projector and not (
            np.allclose(m @ m, m, rtol=0, atol=ATOL) and np.allclose(m, m.conj().T, rtol=0, atol=ATOL)
        ):
            raise ValueError(f"operator {self.name or '?'} flagged projector but is not idempotent Hermitian")

    def __eq__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.matrix, other.matrix)

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        _same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix - other.matrix)

    def scaled(self, c: complex) -> "Operator":
        return Operator(self.basis, c * self.matrix)

    @property
    def dagger(self) -> "Operator":
        return Operator(self.basis, self.matrix.conj().T, unitary=self.unitary, projector=self.projector)

    def complement(self) -> "Operator":
        """I - P for a projector P."""
        return Operator(
            self.basis,
            np.eye(len(self.basis)) - self.matrix,
            projector=self.projector,
            name=f"1-{self.name}" if self.name else "",
        )

    def is_unitary(self, atol: float = ATOL) -> bool:
        m = self.matrix
        return bool(np.allclose(m.conj().T @ m, np.eye(len(self.basis)), rtol=0, atol=atol))


def _same_basis(a: Sequence[str], b: Sequence[str]):
    if tuple(a) != tuple(b):
        raise StructuralError(f"basis mismatch: {list(a)} vs {list(b)}")


def inner(bra: StateVector, ket: StateVector) -> complex:
    """<bra|ket> = sum conj(bra_i) ket_i."""
    _same_basis(bra.basis, ket.basis)
    return complex(np.vdot(bra.amps, ket.amps))


def apply(op: Operator, s: StateVector) -> StateVector:
    _same_basis(op.basis, s.basis)
    return StateVector(s.basis, op.matrix @ s.amps)


def identity(basis: Sequence[str]) -> Operator:
    return Operator(tuple(basis), np.eye(len(basis)), unitary=True, projector=True, name="I")


def projector_onto(rail: str, basis: Sequence[str]) -> Operator:
    basis = tuple(basis)
    if rail not in basis:
        raise StructuralError(f"unknown rail {rail!r}")
    m = np.zeros((len(basis), len(basis)))
    i = basis.index(rail)
    m[i, i] = 1.0
    return Operator(basis, m, projector=True, name=f"P[{rail}]")


def projector_onto_set(rails: Iterable[str], basis: Sequence[str]) -> Operator:
    basis = tuple(basis)
    rails = list(rails)
    m = np.zeros((len(basis), len(basis)))
    for r in rails:
        if r not in basis:
            raise StructuralError(f"unknown rail {r!r}")
        m[basis.index(r), basis.index(r)] = 1.0
    return Operator(basis, m, projector=True, name="P[" + ",".join(rails) + "]")


@dataclass(frozen=True, eq=False)
class JointState:
    """System photon (rows) tensored with a probe photon (columns)."""

    sys_basis: tuple[str, ...]
    probe_basis: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self):
        sb = _check_basis(self.sys_basis)
        pb = _check_basis(self.probe_basis)
        clash = set(sb) & set(pb)
        if clash:
            raise StructuralError(f"label namespace collision: {sorted(clash)}")
        a = _frozen(self.amps)
        if a.shape != (len(sb), len(pb)):
            raise StructuralError(f"joint table shape {a.shape} != {(len(sb), len(pb))}")
        object.__setattr__(self, "sys_basis", sb)
        object.__setattr__(self, "probe_basis", pb)
        object.__setattr__(self, "amps", a)

    def __eq__(self, other):
        if not isinstance(other, JointState):
            return NotImplemented
        return (
            self.sys_basis == other.sys_basis
            and self.probe_basis == other.probe_basis
            and np.array_equal(self.amps, other.amps)
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def flat(self) -> np.ndarray:
        return self.amps.reshape(-1).copy()

    @classmethod
    def from_flat(cls, sys_basis, probe_basis, vec) -> "JointState":
        return cls(tuple(sys_basis), tuple(probe_basis), np.asarray(vec).reshape(len(sys_basis), len(probe_basis)))

    def apply_system(self, op: Operator) -> "JointState":
        _same_basis(op.basis, self.sys_basis)
        return JointState(self.sys_basis, self.probe_basis, op.matrix @ self.amps)

    def apply_probe(self, op: Operator) -> "JointState":
        _same_basis(op.basis, self.probe_basis)
        return JointState(self.sys_basis, self.probe_basis, self.amps @ op.matrix.T)

    def apply_joint(self, matrix: np.ndarray) -> "JointState":
        """Apply a full (sys*probe)-dimensional matrix in row-major order."""
        return JointState.from_flat(self.sys_basis, self.probe_basis, np.asarray(matrix) @ self.flat())

    def condition_on_system(self, bra: StateVector) -> StateVector:
        """Unnormalized probe state <bra|_sys applied to the joint state."""
        _same_basis(bra.basis, self.sys_basis)
        return StateVector(self.probe_basis, bra.amps.conj() @ self.amps)


def tensor(sys: StateVector, probe: StateVector) -> JointState:
    return JointState(sys.basis, probe.basis, np.outer(sys.amps, probe.amps))


def kron(sys_op: Operator, probe_op: Operator) -> np.ndarray:
    """Matrix of sys_op (x) probe_op acting on ``JointState.flat()``."""
    return np.kron(sys_op.matrix, probe_op.matrix)
