"""Collective matter operators for identical n-level atoms.

The totally symmetric (bosonic) sector of N_a atoms with n internal levels is
spanned by occupation vectors (n_1, ..., n_n) with sum n_k = N_a.  Collective
transition operators A_jk act on this sector like bilinears b_j^dag b_k of a
Schwinger-boson representation and close the u(n) algebra

    [A_pq, A_rs] = delta_qr A_ps - delta_ps A_rq.

This module builds the basis, the operator matrices, and the self-interaction
free two-body products used by the dipole-dipole Hamiltonian, together with a
self-test of the algebraic identities that every representation must satisfy.
Level indices in the public API are 1-based.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp

# Above this dimension operator matrices are returned as CSR; below, dense.
DENSE_DIM_LIMIT = 64

# Hard cap on basis size unless overridden (env var DDPHASE_MAX_DIM).
DEFAULT_MAX_DIM = 200_000


class DimensionCapError(ValueError):
    """Requested symmetric-sector dimension exceeds the configured cap."""


def symmetric_dimension(n: int, n_atoms: int) -> int:
    """Dimension of the symmetric sector: binomial(n_atoms + n - 1, n - 1)."""
    return math.comb(n_atoms + n - 1, n - 1)


def _max_dim(override: int | None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get("DDPHASE_MAX_DIM")
    return int(env) if env else DEFAULT_MAX_DIM


@dataclass(frozen=True)
class OccupationBasis:
    """Occupation-number basis of the symmetric sector.

    States are ordered lexicographically descending on (n_1, ..., n_n), which
    makes the ordering deterministic and puts the all-in-level-1 state first.
    """

    n: int
    n_atoms: int
    states: tuple[tuple[int, ...], ...]
    index: dict[tuple[int, ...], int] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def occupations(self) -> np.ndarray:
        """(dim, n) integer array of occupation vectors."""
        return np.array(self.states, dtype=np.int64)


def enumerate_basis(n: int, n_atoms: int, max_dim: int | None = None) -> OccupationBasis:
    """Enumerate occupation vectors of n levels holding n_atoms excitations.

    Parameters
    ----------
    n : int
        Number of internal levels, n >= 2.
    n_atoms : int
        Number of atoms, n_atoms >= 1.
    max_dim : int, optional
        Cap on the sector dimension; defaults to DDPHASE_MAX_DIM or 200000.

    Returns
    -------
    OccupationBasis
    """
    if n < 2:
        raise ValueError(f"need at least two levels, got n={n}")
    if n_atoms < 1:
        raise ValueError(f"need at least one atom, got n_atoms={n_atoms}")
    dim = symmetric_dimension(n, n_atoms)
    cap = _max_dim(max_dim)
    if dim > cap:
        raise DimensionCapError(
            f"symmetric sector for n={n}, n_atoms={n_atoms} has dimension "
            f"{dim}, above the cap {cap}"
        )
    states = []
    for slots in combinations_with_replacement(range(n), n_atoms):
        occ = [0] * n
        for lvl in slots:
            occ[lvl] += 1
        states.append(tuple(occ))
    states.sort(reverse=True)
    index = {s: i for i, s in enumerate(states)}
    return OccupationBasis(n=n, n_atoms=n_atoms, states=tuple(states), index=index)


def _as_operator(rows, cols, vals, dim: int):
    if dim > DENSE_DIM_LIMIT:
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=np.float64)
        return mat.tocsr()
    mat = np.zeros((dim, dim))
    mat[rows, cols] = vals
    return mat


def collective_matrix(basis: OccupationBasis, j: int, k: int):
    """Matrix of the collective operator A_jk = b_j^dag b_k (1-based levels).

    The only nonzero elements are <m + e_j - e_k| A_jk |m> =
    sqrt(m_j + 1) sqrt(m_k); diagonal operators A_kk count the population of
    level k.  Returns a dense array for dim <= 64 and CSR above.
    """
    n = basis.n
    if not (1 <= j <= n and 1 <= k <= n):
        raise ValueError(f"level indices must lie in 1..{n}, got ({j}, {k})")
    jj, kk = j - 1, k - 1
    rows, cols, vals = [], [], []
    for col, occ in enumerate(basis.states):
        if occ[kk] == 0:
            continue
        if jj == kk:
            rows.append(col)
            cols.append(col)
            vals.append(float(occ[kk]))
            continue
        shifted = list(occ)
        shifted[kk] -= 1
        shifted[jj] += 1
        row = basis.index[tuple(shifted)]
        rows.append(row)
        cols.append(col)
        vals.append(math.sqrt((occ[jj] + 1) * occ[kk]))
    return _as_operator(rows, cols, vals, basis.dim)


def pair_product(basis: OccupationBasis, p: int, q: int, r: int, s: int):
    """Two-body product A_pq A_rs - delta_qr A_ps with self-interaction removed.

    The subtraction cancels the one-body contamination of the naive operator
    product, so the result annihilates every state when n_atoms = 1.  The
    product is symmetric in its two index pairs, and antisymmetrising it in
    (q <-> s) gives zero identically on the symmetric sector.
    """
    apq = collective_matrix(basis, p, q)
    ars = collective_matrix(basis, r, s)
    out = apq @ ars
    if q == r:
        out = out - collective_matrix(basis, p, s)
    return out


def total_number(basis: OccupationBasis):
    """Sum of level populations; equals n_atoms times identity."""
    out = collective_matrix(basis, 1, 1)
    for k in range(2, basis.n + 1):
        out = out + collective_matrix(basis, k, k)
    return out


def quadratic_casimir(basis: OccupationBasis):
    """Sum_{j,k} A_kj A_jk; equals n_atoms (n_atoms + n - 1) times identity."""
    n = basis.n
    out = None
    for j in range(1, n + 1):
        for k in range(1, n + 1):
            term = collective_matrix(basis, k, j) @ collective_matrix(basis, j, k)
            out = term if out is None else out + term
    return out


def coherent_matter_vector(basis: OccupationBasis, gamma) -> np.ndarray:
    """Symmetric-sector coefficients of the product state (gamma . b^dag)^N_a |0>.

    gamma is a length-n complex vector of level amplitudes; the state is
    normalised internally, so only the direction of gamma matters.
    """
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.shape != (basis.n,):
        raise ValueError(f"gamma must have length {basis.n}, got shape {gamma.shape}")
    nrm = np.linalg.norm(gamma)
    if nrm == 0:
        raise ValueError("gamma must be nonzero")
    c = gamma / nrm
    na = basis.n_atoms
    vec = np.empty(basis.dim, dtype=complex)
    for i, occ in enumerate(basis.states):
        w = math.factorial(na)
        amp = 1.0 + 0.0j
        for nk, ck in zip(occ, c):
            w //= math.factorial(nk)
            amp *= ck**nk
        vec[i] = math.sqrt(w) * amp
    return vec


def _maxabs(mat) -> float:
    if sp.issparse(mat):
        return 0.0 if mat.nnz == 0 else float(abs(mat).max())
    return float(np.max(np.abs(mat))) if mat.size else 0.0


def _identity(dim: int, sparse: bool):
    return sp.identity(dim, format="csr") if sparse else np.eye(dim)


def algebra_selftest(
    n_values=(2, 3, 4),
    n_atoms_values=(1, 2, 3, 4, 5, 6),
    tol: float = 1e-12,
) -> dict:
    """Verify the structural identities of the collective operators.

    For each (n, n_atoms) the commutation relations, the population sum rule,
    the quadratic Casimir value and the vanishing of the exchange
    antisymmetrisation O_pqrs = (A_pq (x) A_rs) - (A_ps (x) A_rq) are checked
    to within tol.  Returns a report dict with per-case maximum errors and an
    overall ``passed`` flag.
    """
    cases = {}
    passed = True
    for n in n_values:
        for na in n_atoms_values:
            basis = enumerate_basis(n, na)
            sparse = basis.dim > DENSE_DIM_LIMIT
            eye = _identity(basis.dim, sparse)
            ops = {
                (j, k): collective_matrix(basis, j, k)
                for j in range(1, n + 1)
                for k in range(1, n + 1)
            }
            comm_err = 0.0
            for (p, q), apq in ops.items():
                for (r, s), ars in ops.items():
                    lhs = apq @ ars - ars @ apq
                    rhs = None
                    if q == r:
                        rhs = ops[(p, s)]
                    if p == s:
                        rhs = -ops[(r, q)] if rhs is None else rhs - ops[(r, q)]
                    diff = lhs if rhs is None else lhs - rhs
                    comm_err = max(comm_err, _maxabs(diff))
            number_err = _maxabs(total_number(basis) - na * eye)
            casimir_err = _maxabs(quadratic_casimir(basis) - na * (na + n - 1) * eye)
            exch_err = 0.0
            sym_err = 0.0
            for p in range(1, n + 1):
                for q in range(1, n + 1):
                    for r in range(1, n + 1):
                        for s in range(1, n + 1):
                            ppqrs = pair_product(basis, p, q, r, s)
                            exch_err = max(
                                exch_err,
                                _maxabs(ppqrs - pair_product(basis, p, s, r, q)),
                            )
                            sym_err = max(
                                sym_err,
                                _maxabs(ppqrs - pair_product(basis, r, s, p, q)),
                            )
            errs = {
                "commutator": comm_err,
                "number": number_err,
                "casimir": casimir_err,
                "exchange": exch_err,
                "pair_symmetry": sym_err,
            }
            cases[(n, na)] = errs
            passed = passed and all(e <= tol for e in errs.values())
    return {"tol": tol, "cases": cases, "passed": passed}
