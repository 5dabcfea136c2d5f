import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cplinear.errors import DimensionError, HermiticityError, InvalidStateError
from cplinear.linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    check_density,
    check_unitary,
    eig_hermitian,
    matrix_from_json,
    matrix_to_json,
    partial_trace_env,
    partial_trace_sys,
    pseudoinverse,
    random_density,
    random_hermitian,
    random_unitary,
    tensor,
)

from conftest import BELL, PAULI_X, PAULI_Z, proj

seeds = st.integers(0, 2**32 - 1)


def kron_oracle(a, b):
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n * m, n * m), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(m):
                for l in range(m):
                    out[i * m + k, j * m + l] = a[i, j] * b[k, l]
    return out


def ptrace_oracle(mat, d_S, d_E):
    out = np.zeros((d_S, d_S), dtype=complex)
    for i in range(d_S):
        for j in range(d_S):
            out[i, j] = sum(mat[i * d_E + e, j * d_E + e] for e in range(d_E))
    return out


def test_tensor_identity():
    np.testing.assert_array_equal(tensor(np.eye(2), np.eye(2)), np.eye(4))


def test_tensor_is_system_first():
    out = tensor(proj([1, 0]), proj([0, 1]))
    expected = np.zeros((4, 4))
    expected[1, 1] = 1
    np.testing.assert_array_equal(out, expected)


def test_tensor_matches_elementwise_oracle():
    assert np.max(np.abs(tensor(PAULI_X, PAULI_Z) - kron_oracle(PAULI_X, PAULI_Z))) <= 1e-9


def test_partial_trace_product_state(rng):
    rho = random_density(3, seed=rng)
    omega = random_density(2, seed=rng)
    np.testing.assert_allclose(partial_trace_env(tensor(rho, omega), 3, 2), rho, atol=1e-12)


def test_partial_trace_bell():
    expected = ptrace_oracle(BELL, 2, 2)
    np.testing.assert_allclose(expected, np.eye(2) / 2)
    np.testing.assert_allclose(partial_trace_env(BELL, 2, 2), expected, atol=1e-12)


@pytest.mark.parametrize("d_S,d_E", [(2, 3), (3, 2), (1, 4)])
def test_partial_traces_match_oracle(rng, d_S, d_E):
    m = random_hermitian(d_S * d_E, rng) + 1j * random_hermitian(d_S * d_E, rng)
    np.testing.assert_allclose(partial_trace_env(m, d_S, d_E), ptrace_oracle(m, d_S, d_E), atol=1e-12)
    swapped = np.einsum("iaja->ij", m.reshape(d_S, d_E, d_S, d_E).transpose(1, 0, 3, 2))
    np.testing.assert_allclose(partial_trace_sys(m, d_S, d_E), swapped, atol=1e-12)


def test_partial_trace_dimension_error():
    with pytest.raises(DimensionError):
        partial_trace_env(np.eye(5), 2, 2)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d_S=st.integers(1, 3), d_E=st.integers(1, 3))
def test_partial_trace_linear_and_trace_preserving(seed, d_S, d_E):
    rng = np.random.default_rng(seed)
    d = d_S * d_E
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    alpha, beta = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    lhs = partial_trace_env(alpha * x + beta * z, d_S, d_E)
    rhs = alpha * partial_trace_env(x, d_S, d_E) + beta * partial_trace_env(z, d_S, d_E)
    assert np.max(np.abs(lhs - rhs)) <= DEFAULT_TOL.tol_equality(lhs)
    tr = np.trace(x)
    assert abs(np.trace(partial_trace_env(x, d_S, d_E)) - tr) <= DEFAULT_TOL.trace * max(1, abs(tr))


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 3), m=st.integers(1, 3))
def test_tensor_trace_and_partial_trace(seed, n, m):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    t = tensor(a, b)
    assert abs(np.trace(t) - np.trace(a) * np.trace(b)) <= 1e-9 * max(1, abs(np.trace(t)))
    np.testing.assert_allclose(partial_trace_env(t, n, m), np.trace(b) * a, atol=1e-9 * max(1, np.abs(t).max()))


def test_eig_hermitian_simple():
    w, _ = eig_hermitian(np.eye(2))
    np.testing.assert_allclose(w, [1, 1])
    w, _ = eig_hermitian(PAULI_Z)
    np.testing.assert_allclose(w, [-1, 1])


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(HermiticityError):
        eig_hermitian(np.array([[0, 1], [0, 0]]))


@settings(max_examples=25, deadline=None)
@given(seed=seeds, d=st.integers(1, 8))
def test_eig_hermitian_reconstruction(seed, d):
    h = random_hermitian(d, seed)
    w, v = eig_hermitian(h)
    norm = np.linalg.norm(h, 2)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(v @ np.diag(w) @ v.conj().T - h)) <= 1e-10 * max(norm, 1)
    assert np.max(np.abs(v.conj().T @ v - np.eye(d))) <= 1e-9
    assert abs(w.sum() - np.trace(h).real) <= 1e-9 * max(1, norm)


def test_pseudoinverse_examples():
    np.testing.assert_allclose(pseudoinverse(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(pseudoinverse(np.diag([2.0, 0.0]), 1e-12), np.diag([0.5, 0]))


def test_pseudoinverse_rank_deficient_gram(rng):
    a, b = random_density(2, seed=rng), random_density(2, seed=rng)
    states = [a, b, 0.3 * a + 0.7 * b]
    r = np.array([s.reshape(-1) for s in states]).T
    g = r.conj().T @ r
    gp = pseudoinverse(g, 1e-9)
    assert np.linalg.matrix_rank(g, tol=1e-9) == 2
    assert np.max(np.abs(g @ gp @ g - g)) <= 1e-10
    assert np.max(np.abs(gp @ g @ gp - gp)) <= 1e-9 * np.abs(gp).max()


def test_random_unitary_d1_and_invariants():
    u = random_unitary(1, 3)
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-12
    for d in (2, 3, 6):
        check_unitary(random_unitary(d, d))
    np.testing.assert_array_equal(random_unitary(3, 11), random_unitary(3, 11))


def test_random_unitary_haar_first_moment():
    rng = np.random.default_rng(5)
    acc = np.zeros((2, 2), dtype=complex)
    n = 10_000
    for _ in range(n):
        col = random_unitary(2, rng)[:, 0]
        acc += np.outer(col, col.conj())
    assert np.max(np.abs(acc / n - np.eye(2) / 2)) <= 0.02


def test_random_density_pure_and_valid():
    w = np.linalg.eigvalsh(random_density(2, 1, seed=1))
    np.testing.assert_allclose(w, [0, 1], atol=1e-12)
    for rank in (1, 2, 3):
        check_density(random_density(3, rank, seed=rank))
    with pytest.raises(DimensionError):
        random_density(2, 3)


def test_random_density_mean_is_maximally_mixed():
    rng = np.random.default_rng(9)
    n = 10_000
    acc = sum(random_density(4, seed=rng) for _ in range(n))
    assert np.max(np.abs(acc / n - np.eye(4) / 4)) <= 0.02


def test_check_density_rejects():
    with pytest.raises(InvalidStateError):
        check_density(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidStateError):
        check_density(np.eye(2))
    with pytest.raises(InvalidStateError):
        check_density(np.array([[0.5, 1], [0, 0.5]]))


def test_tolerance_policy():
    tol = TolerancePolicy()
    assert tol.tol_equality(np.full((2, 2), 10.0)) == pytest.approx(1e-8)
    assert tol.tol_psd(4) == pytest.approx(4e-9)
    assert tol.scaled(10).rank == pytest.approx(1e-8)
    with pytest.raises(ValueError):
        TolerancePolicy(herm=-1)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d=st.integers(1, 5))
def test_matrix_json_round_trip_is_bit_exact(seed, d):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) * 10.0 ** rng.integers(-300, 300) + 1j * rng.normal(size=(d, d)) / 3
    m[0, 0] = complex(-0.0, -0.0)
    back = matrix_from_json(json.loads(json.dumps(matrix_to_json(m))))
    assert back.tobytes() == m.tobytes()
