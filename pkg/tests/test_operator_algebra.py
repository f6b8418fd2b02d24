import math

import numpy as np
import pytest
import scipy.sparse as sp

from ddphase.operator_algebra import (
    DimensionCapError,
    OccupationBasis,
    algebra_selftest,
    coherent_matter_vector,
    collective_matrix,
    enumerate_basis,
    pair_product,
    quadratic_casimir,
    symmetric_dimension,
    total_number,
)


def dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


@pytest.mark.parametrize(
    "n,na,dim",
    [(2, 1, 2), (3, 2, 6), (2, 5, 6), (3, 1, 3), (4, 3, 20)],
)
def test_basis_dimensions(n, na, dim):
    basis = enumerate_basis(n, na)
    assert basis.dim == dim
    assert symmetric_dimension(n, na) == dim
    assert len(set(basis.states)) == dim
    assert all(sum(s) == na for s in basis.states)


def test_basis_ordering_deterministic():
    basis = enumerate_basis(2, 3)
    assert basis.states == ((3, 0), (2, 1), (1, 2), (0, 3))
    # all-in-level-1 comes first for any n
    basis = enumerate_basis(3, 4)
    assert basis.states[0] == (4, 0, 0)
    assert basis.index[(4, 0, 0)] == 0


def test_dimension_cap(monkeypatch):
    with pytest.raises(DimensionCapError):
        enumerate_basis(3, 4, max_dim=10)
    monkeypatch.setenv("DDPHASE_MAX_DIM", "10")
    with pytest.raises(DimensionCapError):
        enumerate_basis(3, 4)
    monkeypatch.setenv("DDPHASE_MAX_DIM", "1000")
    assert enumerate_basis(3, 4).dim == 15


def test_population_diagonal():
    basis = enumerate_basis(2, 3)
    a11 = dense(collective_matrix(basis, 1, 1))
    assert np.allclose(a11, np.diag([3.0, 2.0, 1.0, 0.0]))


def test_offdiagonal_single_atom():
    basis = enumerate_basis(2, 1)
    a12 = dense(collective_matrix(basis, 1, 2))
    expect = np.zeros((2, 2))
    expect[basis.index[(1, 0)], basis.index[(0, 1)]] = 1.0
    assert np.array_equal(a12, expect)


def test_matrix_element_rule():
    # every nonzero element is sqrt(n_j + 1) sqrt(n_k) between shifted states
    basis = enumerate_basis(3, 3)
    rng = np.random.default_rng(7)
    for _ in range(10):
        j, k = rng.integers(1, 4, size=2)
        mat = dense(collective_matrix(basis, int(j), int(k)))
        for col, occ in enumerate(basis.states):
            for row in range(basis.dim):
                val = mat[row, col]
                if val == 0.0:
                    continue
                tgt = list(occ)
                tgt[k - 1] -= 1
                tgt[j - 1] += 1
                assert basis.states[row] == tuple(tgt)
                if j == k:
                    assert val == occ[k - 1]
                else:
                    assert val == pytest.approx(
                        math.sqrt((occ[j - 1] + 1) * occ[k - 1])
                    )


def test_dense_sparse_switch():
    small = enumerate_basis(2, 5)  # dim 6
    assert isinstance(collective_matrix(small, 1, 2), np.ndarray)
    big = enumerate_basis(3, 12)  # dim 91
    assert sp.issparse(collective_matrix(big, 1, 2))


def test_adjoint_pairing():
    basis = enumerate_basis(3, 4)
    for j, k in [(1, 2), (2, 3), (1, 3)]:
        ajk = dense(collective_matrix(basis, j, k))
        akj = dense(collective_matrix(basis, k, j))
        assert np.allclose(ajk.T, akj)


def test_total_number_identity():
    for n, na in [(2, 4), (3, 3), (4, 2)]:
        basis = enumerate_basis(n, na)
        assert np.allclose(dense(total_number(basis)), na * np.eye(basis.dim))


@pytest.mark.parametrize("n,na,value", [(2, 3, 12.0), (3, 2, 8.0)])
def test_quadratic_casimir_value(n, na, value):
    # n=2, N_a=3: 3*(3+1) = 12 ; n=3, N_a=2: 2*(2+2) = 8
    basis = enumerate_basis(n, na)
    assert np.allclose(dense(quadratic_casimir(basis)), value * np.eye(basis.dim))


def test_pair_product_vanishes_single_atom():
    basis = enumerate_basis(3, 1)
    for idx in [(1, 2, 2, 1), (1, 1, 2, 2), (2, 3, 3, 1), (1, 2, 3, 1)]:
        assert np.max(np.abs(dense(pair_product(basis, *idx)))) == 0.0


def test_pair_product_explicit_two_atoms():
    # n=2, N_a=2: A12 A21 - A11 computed by explicit matrix arithmetic
    basis = enumerate_basis(2, 2)
    a12 = dense(collective_matrix(basis, 1, 2))
    a21 = dense(collective_matrix(basis, 2, 1))
    a11 = dense(collective_matrix(basis, 1, 1))
    expect = a12 @ a21 - a11
    assert np.allclose(dense(pair_product(basis, 1, 2, 2, 1)), expect)
    assert np.allclose(np.diag(expect), [0.0, 1.0, 0.0])


def test_pair_product_symmetry_random_indices():
    rng = np.random.default_rng(11)
    basis = enumerate_basis(4, 3)
    for _ in range(20):
        p, q, r, s = (int(v) for v in rng.integers(1, 5, size=4))
        lhs = dense(pair_product(basis, p, q, r, s))
        assert np.allclose(lhs, dense(pair_product(basis, r, s, p, q)), atol=1e-12)
        assert np.allclose(lhs, dense(pair_product(basis, p, s, r, q)), atol=1e-12)


def test_coherent_vector_normalised_and_extremal():
    basis = enumerate_basis(3, 4)
    vec = coherent_matter_vector(basis, [1.0, 0.0, 0.0])
    assert vec[basis.index[(4, 0, 0)]] == pytest.approx(1.0)
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    g = rng.normal(size=3) + 1j * rng.normal(size=3)
    vec = coherent_matter_vector(basis, g)
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)


def test_coherent_vector_population_expectation():
    # <A_kk> = N_a |gamma_k|^2 / |gamma|^2 for the product state
    basis = enumerate_basis(3, 5)
    gamma = np.array([1.0, 0.8 - 0.3j, 0.5j])
    vec = coherent_matter_vector(basis, gamma)
    frac = np.abs(gamma) ** 2 / np.sum(np.abs(gamma) ** 2)
    for k in range(1, 4):
        akk = dense(collective_matrix(basis, k, k))
        val = np.real(np.conj(vec) @ (akk @ vec))
        assert val == pytest.approx(5 * frac[k - 1], abs=1e-12)


def test_selftest_passes():
    report = algebra_selftest(n_values=(2, 3), n_atoms_values=(1, 2, 3, 4))
    assert report["passed"]
    assert all(
        err <= report["tol"] for errs in report["cases"].values() for err in errs.values()
    )


def test_selftest_four_levels():
    report = algebra_selftest(n_values=(4,), n_atoms_values=(2, 3))
    assert report["passed"]
