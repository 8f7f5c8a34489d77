import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydsta.qcore import (HilbertSpace, Operator, QuantumState, StateError, local_operator, population, projector,
                          tensor_embed, uhlmann_fidelity)


def random_dm(rng, d, rank=None):
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_register_dims_and_labels():
    sp = HilbertSpace.register(3)
    assert sp.dims == (3, 3, 4)
    assert sp.dim == 36
    assert len(set(sp.basis)) == sp.dim
    for i in range(sp.dim):
        assert sp.index(sp.labels(i)) == i


def test_basis_order_is_lexicographic_first_atom_most_significant():
    sp = HilbertSpace.register(2)
    assert sp.labels(0) == ("0", "0")
    assert sp.labels(1) == ("0", "1")
    assert sp.labels(4) == ("1", "0")
    assert sp.index("1m") == sp.index(("1", "m"))


def test_unknown_label_raises():
    sp = HilbertSpace.register(2)
    with pytest.raises((KeyError, ValueError)):
        sp.index(("x", "0"))


def test_embed_identity_gives_identity():
    sp = HilbertSpace.register(3)
    for pos, d in enumerate(sp.dims):
        assert np.array_equal(tensor_embed(np.eye(d), pos, sp).matrix, np.eye(sp.dim))


def test_embed_r1_on_target_of_3x4_has_four_nonzeros():
    sp = HilbertSpace.register(2)
    op = tensor_embed(local_operator(sp.atoms[1], [("r", "1", 1.0)]), 1, sp)
    assert op.matrix.shape == (12, 12)
    assert np.count_nonzero(op.matrix) == 3
    op0 = tensor_embed(local_operator(sp.atoms[0], [("r", "1", 1.0)]), 0, sp)
    assert np.count_nonzero(op0.matrix) == 4


def test_embed_errors():
    sp = HilbertSpace.register(2)
    with pytest.raises(ValueError):
        tensor_embed(np.eye(4), 0, sp)
    with pytest.raises(IndexError):
        tensor_embed(np.eye(3), 2, sp)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_embeds_on_distinct_atoms_commute(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.register(3)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    ea, eb = tensor_embed(a, 1, sp), tensor_embed(b, 2, sp)
    assert np.allclose((ea @ eb).matrix, (eb @ ea).matrix, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_embed_preserves_hermiticity_and_unitarity(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.register(2)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = h + h.conj().T
    eh = tensor_embed(h, 1, sp)
    assert eh.hermitian
    assert np.max(np.abs(eh.matrix - eh.matrix.conj().T)) < 1e-12
    u = tensor_embed(random_unitary(rng, 3), 0, sp).matrix
    assert np.allclose(u @ u.conj().T, np.eye(sp.dim), atol=1e-12)


def test_operator_hermitian_flag_checked():
    sp = HilbertSpace.register(2)
    m = np.zeros((12, 12), dtype=complex)
    m[0, 1] = 1.0
    with pytest.raises(ValueError):
        Operator(m, sp, hermitian=True)
    with pytest.raises(ValueError):
        Operator(np.eye(3), sp)


def test_state_validation():
    sp = HilbertSpace.register(2)
    with pytest.raises(StateError):
        QuantumState(np.ones(12), sp)
    rho = np.zeros((12, 12))
    rho[0, 0] = 1.2
    with pytest.raises(StateError):
        QuantumState(rho, sp)
    bad = np.diag([1.1, -0.1] + [0.0] * 10)
    with pytest.raises(StateError):
        QuantumState(bad, sp)
    nonh = np.eye(12) / 12
    nonh[0, 1] = 1e-3
    with pytest.raises(StateError):
        QuantumState(nonh, sp)


def test_fidelity_known_values():
    sp = HilbertSpace.register(2)
    z0 = QuantumState.basis_state(sp, "00")
    z1 = QuantumState.basis_state(sp, "01")
    plus = QuantumState.superposition(sp, {"00": 1, "01": 1})
    assert uhlmann_fidelity(z0, z0) == pytest.approx(1.0, abs=1e-12)
    assert uhlmann_fidelity(z0, z1) == pytest.approx(0.0, abs=1e-12)
    assert uhlmann_fidelity(plus, z0) == pytest.approx(0.5, abs=1e-12)
    assert uhlmann_fidelity(plus.to_dm(), z0.density_matrix()) == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_fidelity_symmetric_and_bounded(seed, rank):
    rng = np.random.default_rng(seed)
    a, b = random_dm(rng, 6, rank), random_dm(rng, 6)
    f1, f2 = uhlmann_fidelity(a, b), uhlmann_fidelity(b, a)
    assert abs(f1 - f2) < 1e-9
    assert 0.0 <= f1 <= 1.0
    assert uhlmann_fidelity(a, a) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fidelity_pure_state_reduces_to_overlap(seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    phi = rng.normal(size=5) + 1j * rng.normal(size=5)
    psi /= np.linalg.norm(psi)
    phi /= np.linalg.norm(phi)
    assert uhlmann_fidelity(psi, phi) == pytest.approx(abs(np.vdot(psi, phi)) ** 2, abs=1e-9)


def test_fidelity_tolerates_tiny_negative_eigenvalues():
    rho = np.diag([1.0 + 5e-9, -5e-9, 0.0])
    assert uhlmann_fidelity(rho, np.array([1.0, 0, 0])) == pytest.approx(1.0, abs=1e-8)


def test_population():
    sp = HilbertSpace.register(2)
    s = QuantumState.basis_state(sp, "11")
    assert population(s, "11") == 1.0
    assert population(s, "rr") == 0.0
    assert s.populations().sum() == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    mixed = QuantumState(random_dm(rng, sp.dim), sp)
    assert sum(population(mixed, sp.labels(i)) for i in range(sp.dim)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises((KeyError, ValueError)):
        population(s, ("1", "q"))


def test_projector_is_hermitian_idempotent():
    sp = HilbertSpace.register(2)
    p = projector(sp, "1m").matrix
    assert np.allclose(p @ p, p)
    assert np.trace(p).real == 1.0
