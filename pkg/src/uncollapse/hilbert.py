"""Composite Hilbert space of three qubits and two truncated resonators.

Conventions used throughout the package:

* Subsystems are ordered Q1, Q2, Q3, B, M1. Q1 is the slowest index and M1
  the fastest, so an amplitude vector printed in basis order reads exactly
  like the ket notation ``|q1 q2 q3>|b m1>``.
* Qubit levels are g = 0 and e = 1; resonator levels are photon numbers.
* States are values: every operation returns a new object and never mutates
  amplitudes in place, which keeps branch enumeration free of aliasing bugs.
* Unnormalized states are used deliberately. After a post-selecting
  measurement the squared norm of a branch equals the probability of that
  outcome, and unnormalized branches stay linearly related to the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_EPS = 1e-9


class ZeroProbabilityError(ValueError):
    """Raised when a requested outcome has zero probability."""


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered subsystem identifiers with their local dimensions."""

    names: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.dims):
            raise ValueError("names and dims must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("subsystem identifiers must be unique")
        if any(d < 2 for d in self.dims):
            raise ValueError("local dimensions must be >= 2")

    @classmethod
    def standard(cls, resonator_dim: int = 2) -> "SubsystemLayout":
        """Three qubits plus bus and memory resonators (default dim 32)."""
        return cls(
            names=("Q1", "Q2", "Q3", "B", "M1"),
            dims=(2, 2, 2, resonator_dim, resonator_dim),
        )

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown subsystem {name!r}") from None

    def dim_of(self, name: str) -> int:
        return self.dims[self.axis(name)]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CompositeState:
    """Pure (possibly unnormalized) state on a :class:`SubsystemLayout`."""

    layout: SubsystemLayout
    amps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amps", _frozen(self.amps))
        if self.amps.shape != (self.layout.dim,):
            raise ValueError(
                f"amplitude vector has length {self.amps.shape}, expected {self.layout.dim}"
            )
        if self.norm2 > 1.0 + NORM_EPS:
            raise ValueError(f"squared norm {self.norm2} exceeds 1")

    @classmethod
    def ground(cls, layout: SubsystemLayout) -> "CompositeState":
        amps = np.zeros(layout.dim, dtype=np.complex128)
        amps[0] = 1.0
        return cls(layout, amps)

    @classmethod
    def product(
        cls, layout: SubsystemLayout, locals: Mapping[str, Sequence[complex]]
    ) -> "CompositeState":
        """Tensor product of per-subsystem vectors; omitted subsystems are in level 0."""
        factors = []
        for name, d in zip(layout.names, layout.dims):
            if name in locals:
                v = np.asarray(locals[name], dtype=np.complex128)
                if v.shape != (d,):
                    raise ValueError(f"local state for {name} must have length {d}")
            else:
                v = np.zeros(d, dtype=np.complex128)
                v[0] = 1.0
            factors.append(v)
        amps = factors[0]
        for v in factors[1:]:
            amps = np.kron(amps, v)
        return cls(layout, amps)

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.layout.dims)


@dataclass(frozen=True)
class Operator:
    """Square matrix acting on a declared subset of subsystems.

    ``targets`` lists the subsystems in the order of the matrix's tensor
    factors (first target is the slowest index).  ``target_dims`` gives the
    local dimensions in the same order.
    """

    matrix: np.ndarray
    targets: tuple[str, ...]
    target_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        d = prod(self.target_dims)
        if self.matrix.shape != (d, d):
            raise ValueError(
                f"operator on {self.targets} must be {d}x{d}, got {self.matrix.shape}"
            )

    @property
    def dim(self) -> int:
        return prod(self.target_dims)

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.targets, self.target_dims)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        d = self.dim
        return bool(
            np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(d))) < tol
        )


def embed(op: Operator, layout: SubsystemLayout) -> Operator:
    """Extend ``op`` with identities to the full space, respecting layout order."""
    for name, d in zip(op.targets, op.target_dims):
        if name not in layout.names:
            raise KeyError(f"unknown subsystem {name!r}")
        if layout.dim_of(name) != d:
            raise ValueError(
                f"dimension mismatch on {name}: operator {d}, layout {layout.dim_of(name)}"
            )
    if op.targets == layout.names:
        return op
    rest = tuple(n for n in layout.names if n not in op.targets)
    order = op.targets + rest
    rest_dim = prod(layout.dim_of(n) for n in rest)
    full = np.kron(op.matrix, np.eye(rest_dim, dtype=np.complex128))
    # Permute tensor axes from (targets, rest) order to layout order.
    n = len(layout.names)
    dims_order = tuple(layout.dim_of(name) for name in order)
    t = full.reshape(dims_order + dims_order)
    src = [order.index(name) for name in layout.names]
    t = t.transpose(src + [s + n for s in src])
    return Operator(t.reshape(layout.dim, layout.dim), layout.names, layout.dims)


def apply(state: CompositeState, op: Operator) -> CompositeState:
    """Apply an operator to a state, embedding it first if needed."""
    full = embed(op, state.layout)
    return CompositeState(state.layout, full.matrix @ state.amps)


@dataclass(frozen=True)
class Branch:
    """One pure-state trajectory: jump record, measurement record, selection flag."""

    state: CompositeState
    jumps: tuple[str, ...] = ()
    outcomes: tuple[tuple[str, int], ...] = ()
    selected: bool = True

    @property
    def weight(self) -> float:
        return self.state.norm2

    def outcome_of(self, name: str) -> int | None:
        for label, value in self.outcomes:
            if label == name:
                return value
        return None


@dataclass(frozen=True)
class BranchEnsemble:
    """Weighted list of pure-state branches representing an unnormalized mixture."""

    layout: SubsystemLayout
    branches: tuple[Branch, ...]

    def __post_init__(self):
        if self.total_weight > 1.0 + NORM_EPS:
            raise ValueError("total branch weight exceeds 1")

    @classmethod
    def from_state(cls, state: CompositeState) -> "BranchEnsemble":
        return cls(state.layout, (Branch(state),))

    @property
    def total_weight(self) -> float:
        return sum(b.weight for b in self.branches)

    @property
    def selected_weight(self) -> float:
        return sum(b.weight for b in self.branches if b.selected)

    def selected(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if b.selected)

    def apply(self, op: Operator) -> "BranchEnsemble":
        full = embed(op, self.layout)
        return BranchEnsemble(
            self.layout,
            tuple(replace(b, state=apply(b.state, full)) for b in self.branches),
        )


def partial_trace_qubit(state: CompositeState, target: str) -> np.ndarray:
    """Reduced matrix of one subsystem, tracing out everything else."""
    axis = state.layout.axis(target)
    d = state.layout.dim_of(target)
    a = np.moveaxis(state.tensor(), axis, 0).reshape(d, -1)
    return a @ a.conj().T


def reduce_to_qubit(ensemble: BranchEnsemble, target: str) -> np.ndarray:
    """Unnormalized density matrix of ``target`` summed over selected branches.

    The trace equals the summed squared norms of the selected branches, i.e.
    the probability of the post-selected outcome.
    """
    selected = ensemble.selected()
    if not selected or ensemble.selected_weight == 0.0:
        raise ZeroProbabilityError("all branches rejected: zero-probability outcome")
    d = ensemble.layout.dim_of(target)
    rho = np.zeros((d, d), dtype=np.complex128)
    for b in selected:
        rho += partial_trace_qubit(b.state, target)
    return rho
