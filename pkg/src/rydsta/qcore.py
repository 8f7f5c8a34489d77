"""Dense quantum-state primitives over small labelled tensor-product spaces.

Basis states are addressed by tuples of level labels, one label per atom,
e.g. ``("1", "m")`` for a control atom in ``|1>`` and a target atom in
``|m>``.  The global basis is ordered lexicographically over those tuples in
the declared atom order, first atom most significant, so the index of
``(l_0, ..., l_{n-1})`` is the usual mixed-radix number.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from math import prod
from typing import Iterable, Sequence

import numpy as np

KET_NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
OPERATOR_HERMITIAN_TOL = 1e-10

CONTROL_LEVELS = ("0", "1", "r")
TARGET_LEVELS = ("0", "1", "m", "r")


class StateError(ValueError):
    """Raised when an array is not a valid ket or density matrix."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor product of per-atom level sets.

    Args:
        atoms: one tuple of level labels per atom, in tensor order.
    """

    atoms: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        atoms = tuple(tuple(str(l) for l in levels) for levels in self.atoms)
        if not atoms:
            raise ValueError("a Hilbert space needs at least one atom")
        for levels in atoms:
            if not levels or len(set(levels)) != len(levels):
                raise ValueError(f"level labels must be non-empty and unique: {levels}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def register(cls, n: int) -> "HilbertSpace":
        """``n - 1`` control atoms {0,1,r} followed by one target {0,1,m,r}."""
        if n < 2:
            raise ValueError("a controlled gate needs n >= 2 atoms")
        return cls((CONTROL_LEVELS,) * (n - 1) + (TARGET_LEVELS,))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(levels) for levels in self.atoms)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        strides = []
        acc = 1
        for d in reversed(self.dims):
            strides.append(acc)
            acc *= d
        return tuple(reversed(strides))

    @cached_property
    def basis(self) -> tuple[tuple[str, ...], ...]:
        return tuple(product(*self.atoms))

    def index(self, labels: Sequence[str] | str) -> int:
        """Basis index of a label tuple; a plain string is split per character."""
        labels = tuple(labels)
        if len(labels) != self.n_atoms:
            raise KeyError(f"expected {self.n_atoms} labels, got {labels!r}")
        idx = 0
        for levels, stride, lab in zip(self.atoms, self._strides, labels):
            try:
                idx += levels.index(str(lab)) * stride
            except ValueError:
                raise KeyError(f"unknown level {lab!r}; atom levels are {levels}") from None
        return idx

    def labels(self, index: int) -> tuple[str, ...]:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        return self.basis[index]

    def label_string(self, index: int) -> str:
        return "".join(self.labels(index))

    def indices_where(self, atom: int, level: str) -> np.ndarray:
        """Indices of all basis states in which ``atom`` sits in ``level``."""
        if level not in self.atoms[atom]:
            raise KeyError(f"unknown level {level!r} for atom {atom}")
        return np.array([i for i, lab in enumerate(self.basis) if lab[atom] == level], dtype=int)


@dataclass(frozen=True)
class Operator:
    """Dense matrix tied to a Hilbert space."""

    matrix: np.ndarray
    space: HilbertSpace
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {m.shape} does not match dim {self.space.dim}")
        if self.hermitian and m.size and np.max(np.abs(m - m.conj().T)) >= OPERATOR_HERMITIAN_TOL:
            raise ValueError("operator flagged hermitian is not")
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.space, self.hermitian)

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.space != self.space:
            raise ValueError("operators live on different spaces")
        return Operator(self.matrix @ other.matrix, self.space)


def local_operator(levels: Sequence[str], terms: Iterable[tuple[str, str, complex]]) -> np.ndarray:
    """Single-atom matrix from ``(bra-level, ket-level, amplitude)`` terms.

    ``("r", "1", w)`` produces ``w |r><1|``.
    """
    levels = tuple(levels)
    m = np.zeros((len(levels), len(levels)), dtype=complex)
    for out_level, in_level, amp in terms:
        m[levels.index(out_level), levels.index(in_level)] += amp
    return m


def tensor_embed(local_op: np.ndarray | Operator, position: int, space: HilbertSpace) -> Operator:
    """Place a single-atom operator at ``position``, identity everywhere else."""
    if not 0 <= position < space.n_atoms:
        raise IndexError(f"atom position {position} out of range for {space.n_atoms} atoms")
    m = local_op.matrix if isinstance(local_op, Operator) else np.asarray(local_op, dtype=complex)
    d = space.dims[position]
    if m.shape != (d, d):
        raise ValueError(f"local operator shape {m.shape} does not match atom {position} with {d} levels")
    left = prod(space.dims[:position])
    right = prod(space.dims[position + 1:])
    full = np.kron(np.kron(np.eye(left), m), np.eye(right))
    herm = bool(np.allclose(m, m.conj().T, atol=OPERATOR_HERMITIAN_TOL, rtol=0))
    return Operator(full, space, hermitian=herm)


def projector(space: HilbertSpace, labels: Sequence[str]) -> Operator:
    i = space.index(labels)
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[i, i] = 1.0
    return Operator(m, space, hermitian=True)


def transition(space: HilbertSpace, out_labels: Sequence[str], in_labels: Sequence[str]) -> np.ndarray:
    """Matrix of ``|out><in|`` on the full space."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[space.index(out_labels), space.index(in_labels)] = 1.0
    return m


@dataclass(frozen=True)
class QuantumState:
    """A ket (1-D) or density matrix (2-D) over ``space``.

    Construction validates normalisation, Hermiticity and positivity at the
    module tolerances; pass ``validate=False`` for intermediate objects.
    """

    data: np.ndarray
    space: HilbertSpace
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        a = _frozen(self.data)
        d = self.space.dim
        if a.shape not in ((d,), (d, d)):
            raise StateError(f"state shape {a.shape} does not match dim {d}")
        object.__setattr__(self, "data", a)
        if self.validate:
            check_state(a)

    @classmethod
    def basis_state(cls, space: HilbertSpace, labels: Sequence[str]) -> "QuantumState":
        psi = np.zeros(space.dim, dtype=complex)
        psi[space.index(labels)] = 1.0
        return cls(psi, space)

    @classmethod
    def superposition(cls, space: HilbertSpace, amplitudes: dict) -> "QuantumState":
        """Normalised ket from ``{labels: amplitude}``."""
        psi = np.zeros(space.dim, dtype=complex)
        for labels, amp in amplitudes.items():
            psi[space.index(labels)] += amp
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise StateError("all amplitudes are zero")
        return cls(psi / nrm, space)

    @property
    def is_ket(self) -> bool:
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        if self.is_ket:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def to_dm(self) -> "QuantumState":
        return self if not self.is_ket else QuantumState(self.density_matrix(), self.space)

    def populations(self) -> np.ndarray:
        if self.is_ket:
            return np.abs(self.data) ** 2
        return np.real(np.diagonal(self.data)).copy()


def check_state(a: np.ndarray) -> None:
    """Raise :class:`StateError` if ``a`` is not a normalised ket or valid density matrix."""
    if a.ndim == 1:
        nrm = np.linalg.norm(a)
        if abs(nrm - 1.0) > KET_NORM_TOL:
            raise StateError(f"ket norm {nrm:.12g} differs from 1")
        return
    herm = np.max(np.abs(a - a.conj().T))
    if herm > HERMITIAN_TOL:
        raise StateError(f"density matrix is not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(a).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise StateError(f"density matrix trace {tr:.12g} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    if lam[0] < -POSITIVITY_TOL:
        raise StateError(f"density matrix has negative eigenvalue {lam[0]:.3g}")


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if lam[0] < -POSITIVITY_TOL:
        raise StateError(f"negative eigenvalue {lam[0]:.3g} beyond tolerance")
    # eigenvalues at the solver's noise floor would contribute sqrt(noise) ~ 1e-8
    floor = 64 * np.finfo(float).eps * max(float(lam[-1]), 1.0)
    lam = np.where(lam > floor, lam, 0.0)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def uhlmann_fidelity(rho: QuantumState | np.ndarray, sigma: QuantumState | np.ndarray) -> float:
    """``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``; kets are promoted to projectors.

    Evaluated as the squared trace norm of ``sqrt(rho) sqrt(sigma)``, which
    avoids square roots of round-off eigenvalues.  A pure argument uses the
    exact form ``<psi|sigma|psi>``.
    """
    mats, kets = [], []
    for s in (rho, sigma):
        if isinstance(s, QuantumState):
            a = s.data
        else:
            a = np.asarray(s, dtype=complex)
            check_state(a)
        kets.append(a if a.ndim == 1 else None)
        mats.append(np.outer(a, a.conj()) if a.ndim == 1 else a)
    a, b = mats
    if a.shape != b.shape:
        raise StateError("states live on different spaces")
    if isinstance(rho, QuantumState) and isinstance(sigma, QuantumState) and rho.space != sigma.space:
        raise StateError("states live on different spaces")
    if kets[0] is not None or kets[1] is not None:
        psi, other = (kets[0], b) if kets[0] is not None else (kets[1], a)
        f = float(np.real(np.vdot(psi, other @ psi)))
    else:
        sv = np.linalg.svd(_psd_sqrt(a) @ _psd_sqrt(b), compute_uv=False)
        f = float(np.sum(sv) ** 2)
    return min(max(f, 0.0), 1.0)


def population(state: QuantumState, labels: Sequence[str]) -> float:
    i = state.space.index(labels)
    if state.is_ket:
        return float(abs(state.data[i]) ** 2)
    return float(state.data[i, i].real)
