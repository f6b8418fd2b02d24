"""Independent checks: exact diagonalization and dense grid minimisation.

The exact path builds H = H_D + H_mf + H_dd on the symmetric atomic sector
tensored with photon-number truncations, finds the lowest eigenvalue, and
grows the cutoffs until the ground energy stops moving.  The brute path
scans the reduced energy on a uniform amplitude grid over every phase
branch.  Both bound or confirm the variational minimiser from the outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .model import ModelSpec, ValidationError, assemble_hdd
from .operator_algebra import (
    DimensionCapError,
    OccupationBasis,
    collective_matrix,
    enumerate_basis,
)
from .variational import minimize_ground

DENSE_EIG_LIMIT = 4000
TRUNCATED_DIM_CAP = 200_000


@dataclass(frozen=True)
class TruncatedSpace:
    """Symmetric atomic sector tensored with per-mode photon truncations."""

    basis: OccupationBasis
    cutoffs: tuple[int, ...]

    def __post_init__(self):
        if any(int(c) != c or c < 0 for c in self.cutoffs):
            raise ValidationError("photon cutoffs must be nonnegative integers")

    @property
    def field_dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return self.basis.dim * math.prod(self.field_dims)


@dataclass(frozen=True)
class ExactReport:
    """Convergence record of one exact-ground computation."""

    cutoffs: tuple[int, ...]
    dim: int
    method: str
    shift: float
    converged: bool


def _annihilator(cutoff: int) -> sp.csr_matrix:
    data = np.sqrt(np.arange(1, cutoff + 1, dtype=np.float64))
    return sp.diags(data, offsets=1, format="csr")


def _mode_operator(op, mode: int, field_dims) -> sp.csr_matrix:
    out = None
    for s, d in enumerate(field_dims):
        factor = op if s == mode else sp.identity(d, format="csr")
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return out


def assemble_hamiltonian(
    spec: ModelSpec, n_atoms: int, cutoffs, cap: int = TRUNCATED_DIM_CAP
):
    """Full sparse Hamiltonian on the truncated space; returns (H, space)."""
    space = TruncatedSpace(
        basis=enumerate_basis(spec.n, n_atoms), cutoffs=tuple(int(c) for c in cutoffs)
    )
    if len(space.cutoffs) != spec.ell:
        raise ValidationError("one photon cutoff per mode is required")
    if space.dim > cap:
        raise DimensionCapError(
            f"truncated dimension {space.dim} exceeds the cap {cap}"
        )
    basis = space.basis
    field_dims = space.field_dims
    id_field = sp.identity(math.prod(field_dims), format="csr")
    id_atom = sp.identity(basis.dim, format="csr")

    h = sp.csr_matrix((space.dim, space.dim), dtype=np.complex128)
    for k in range(1, spec.n + 1):
        akk = sp.csr_matrix(collective_matrix(basis, k, k))
        h = h + spec.omegas[k - 1] * sp.kron(akk, id_field, format="csr")
    for s in range(spec.ell):
        number = sp.diags(
            np.arange(field_dims[s], dtype=np.float64), format="csr"
        )
        h = h + spec.mode_freqs[s] * sp.kron(
            id_atom, _mode_operator(number, s, field_dims), format="csr"
        )
    scale = -1.0 / math.sqrt(n_atoms)
    for c in spec.couplings:
        ajk = sp.csr_matrix(collective_matrix(basis, c.j, c.k))
        akj = sp.csr_matrix(collective_matrix(basis, c.k, c.j))
        a_op = _annihilator(space.cutoffs[c.mode - 1])
        quad = _mode_operator(a_op + a_op.T, c.mode - 1, field_dims)
        h = h + scale * c.mu * sp.kron(ajk + akj, quad, format="csr")
    hdd = sp.csr_matrix(assemble_hdd(spec.gtable, basis))
    if hdd.nnz:
        h = h + sp.kron(hdd, id_field, format="csr")
    return h.tocsr(), space


def _lowest_eigenvalue(h: sp.csr_matrix, dense_limit: int) -> tuple[float, str]:
    dim = h.shape[0]
    if dim <= dense_limit:
        return float(np.linalg.eigvalsh(h.toarray())[0]), "dense"
    v0 = np.full(dim, 1.0 / math.sqrt(dim))
    vals = spla.eigsh(h, k=1, which="SA", v0=v0, return_eigenvectors=False)
    return float(vals[0]), "sparse"


def default_cutoffs(spec: ModelSpec, n_atoms: int) -> tuple[int, ...]:
    """Starting truncation from the variational field occupation."""
    sol = minimize_ground(spec)
    r2 = max((v * v for v in sol.params.r), default=0.0)
    start = max(10, math.ceil(4.0 * n_atoms * r2))
    return (start,) * spec.ell


def exact_ground(
    spec: ModelSpec,
    n_atoms: int,
    cutoffs=None,
    *,
    tol: float = 1e-8,
    grow: bool = True,
    max_rounds: int = 8,
    step: int = 5,
    cap: int = TRUNCATED_DIM_CAP,
    dense_limit: int = DENSE_EIG_LIMIT,
) -> tuple[float, ExactReport]:
    """Exact ground energy per atom with a cutoff-convergence report.

    The shift is the ground-energy change when every cutoff grows by
    ``step``; growth repeats until the shift drops below tol (or the cap
    or round limit is hit, which flags the result unconverged).
    """
    if n_atoms < 1:
        raise ValidationError("need at least one atom")
    current = tuple(cutoffs) if cutoffs is not None else default_cutoffs(spec, n_atoms)
    h, space = assemble_hamiltonian(spec, n_atoms, current, cap)
    energy, method = _lowest_eigenvalue(h, dense_limit)
    shift = math.inf
    converged = False
    for _ in range(max_rounds):
        bigger = tuple(c + step for c in current)
        try:
            h2, _ = assemble_hamiltonian(spec, n_atoms, bigger, cap)
        except DimensionCapError:
            break
        e2, method = _lowest_eigenvalue(h2, dense_limit)
        shift = abs(e2 - energy)
        if shift < tol:
            converged = True
            break
        if not grow:
            break
        current, energy = bigger, e2
        space = TruncatedSpace(basis=space.basis, cutoffs=bigger)
    report = ExactReport(
        cutoffs=current,
        dim=space.dim,
        method=method,
        shift=shift,
        converged=converged,
    )
    return energy / n_atoms, report


def brute_min(
    spec: ModelSpec, resolution=400, *, rho_max: float = 10.0
) -> tuple[float, np.ndarray]:
    """Global reduced-energy minimum on a uniform amplitude grid.

    resolution: points per axis when an integer >= 2, grid step when a
    float below 1.  Scans every phase branch; ties resolve to the smaller
    amplitude norm.
    """
    if spec.n > 3:
        raise ValidationError("grid search supports at most two free amplitudes")
    if isinstance(resolution, float) and resolution < 1.0:
        if resolution <= 0.0:
            raise ValidationError("grid step must be positive")
        axis = np.arange(0.0, rho_max + 0.5 * resolution, resolution)
    else:
        points = int(resolution)
        if points < 2:
            raise ValidationError("need at least two grid points per axis")
        axis = np.linspace(0.0, rho_max, points)
    k = spec.n - 1
    if k == 1:
        grid = axis[:, None]
    else:
        aa, bb = np.meshgrid(axis, axis, indexing="ij")
        grid = np.column_stack([aa.ravel(), bb.ravel()])
    zeros = np.zeros(grid.shape[0])
    best_e = math.inf
    best_rho = np.zeros(k)
    best_n2 = math.inf
    for branch in kernels.compile_branches(spec):
        energies = kernels.energy_many(grid, zeros, zeros, branch.arrays)
        i = int(np.argmin(energies))
        e, rho = float(energies[i]), grid[i]
        n2 = float(rho @ rho)
        if e < best_e - 1e-15 or (abs(e - best_e) <= 1e-15 and n2 < best_n2):
            best_e, best_rho, best_n2 = e, rho.copy(), n2
    return best_e, best_rho
