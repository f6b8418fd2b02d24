"""Ground-state phase diagrams over coupling-strength grids.

A :class:`PhaseGrid` holds the variational ground state on a rectangular
grid of dimensionless strengths ``(x_a, x_b)`` for the scanned
transitions of a configuration.  Detector fields are attached to the
grid: the summed first and second Ehrenfest derivatives of the energy
surface, the signed difference of the two-level subsystem Casimir
expectations, and the local Bures-distance ridge.  Separatrix curves
are traced from those fields and classified as first order, second
order, or continuous unstable.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from . import kernels
from .model import ModelSpec, ValidationError, named_configuration
from .variational import CoherentParams, GroundSolution, minimize_ground

# energy level at which the normal boundary is traced
BOUNDARY_LEVEL = -1e-10
# energy tie tolerance shared with the minimiser
TIE_TOL = 1e-12
# two minima closer than this are the same point
SAME_POINT_TOL = 1e-7
# degeneracy needs separation beyond flat-valley convergence scatter
DEGEN_POINT_TOL = 1e-4


# ---------------------------------------------------------------------------
# domain types

@dataclass
class PhaseGrid:
    """Variational ground state and detector fields on a strength grid.

    energy is exactly zero on the normal set and negative elsewhere;
    rho, sigma, tau and r store the minimiser per node (amplitudes,
    level phase signs, mode phase signs, field amplitudes).  Detector
    surfaces are None until their operation has run.
    """

    spec: ModelSpec
    pairs: tuple[tuple[int, int], ...]
    axis_a: np.ndarray
    axis_b: np.ndarray
    energy: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    r: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray
    meta: dict = field(default_factory=dict)
    de: np.ndarray | None = None
    d2e: np.ndarray | None = None
    dc: np.ndarray | None = None
    bures: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.energy.shape

    @property
    def normal_mask(self) -> np.ndarray:
        return self.energy == 0.0

    def node_spec(self, i: int, j: int) -> ModelSpec:
        """Model with the couplings set to the strengths of node (i, j)."""
        xs = []
        for c in self.spec.couplings:
            pair = (c.j, c.k)
            if pair == self.pairs[0]:
                xs.append(float(self.axis_a[i]))
            elif len(self.pairs) > 1 and pair == self.pairs[1]:
                xs.append(float(self.axis_b[j]))
            else:
                xs.append(c.mu / self.spec.mu_critical(c))
        return self.spec.with_x(xs)

    def params_at(self, i: int, j: int) -> CoherentParams:
        sigma = self.sigma[i, j].astype(np.float64)
        tau = self.tau[i, j]
        return CoherentParams(
            rho=tuple(float(v) for v in self.rho[i, j]),
            phi=tuple(0.0 if s > 0 else math.pi for s in sigma[1:]),
            r=tuple(float(v) for v in self.r[i, j]),
            theta=tuple(0.0 if t > 0 else math.pi for t in tau),
        )

    def solution_at(self, i: int, j: int) -> GroundSolution:
        params = self.params_at(i, j)
        region = "normal" if self.energy[i, j] == 0.0 else "collective"
        return GroundSolution(
            params=params,
            branch=(
                tuple(int(v) for v in self.sigma[i, j]),
                tuple(int(v) for v in self.tau[i, j]),
            ),
            energy=float(self.energy[i, j]),
            region=region,
            converged=bool(self.converged[i, j]),
            degenerate=bool(self.degenerate[i, j]),
        )


@dataclass(frozen=True)
class SeparatrixCurve:
    """Ordered polyline of one transition line in the (x_a, x_b) plane.

    kind is normal_boundary or mode_swap; order is first, second,
    continuous_unstable, or unclassified; region names the adjoining
    collective subregion (S<jk>) when known.
    """

    points: np.ndarray
    kind: str
    order: str
    region: str | None = None


# ---------------------------------------------------------------------------
# grid solver

def _pair_seed_vectors(spec, pairs, xa, xb, rho_max):
    """Analytic single-pair minima per node, one start per scanned pair."""
    m = xa.size
    nfree = spec.n - 1
    axis_x = (xa, xb)
    out = []
    for axis, (j, k) in enumerate(pairs):
        gap = spec.gap(j, k)
        gt = spec.gtable.get
        geff = float(np.real(gt(j, k, j, k)) + np.real(gt(j, k, k, j)))
        x = axis_x[axis]
        u = x * x - (gap + geff) / gap
        up = np.maximum(u, 0.0)
        rel = np.sqrt(up / (up + 2.0))
        vec = np.zeros((m, nfree))
        if j == 1:
            vec[:, k - 2] = rel
        else:
            # pairs away from level 1 minimise at the amplitude bound
            vec[:, j - 2] = np.where(up > 0.0, rho_max, 0.0)
            vec[:, k - 2] = rel * rho_max
        out.append(vec)
    return out


def _cold_starts(spec, pairs, xa, xb, multistarts, rho_max, seed):
    cols = [np.full((xa.size, spec.n - 1), 1e-3)]
    cols.extend(_pair_seed_vectors(spec, pairs, xa, xb, rho_max))
    rng = np.random.default_rng(seed)
    while len(cols) < multistarts:
        v = rng.uniform(0.0, min(3.0, rho_max), size=spec.n - 1)
        cols.append(np.broadcast_to(v, cols[0].shape).copy())
    return np.stack(cols, axis=1)


def _fold(best, e, x, conv, branch_index):
    """Merge one candidate per node into the running reduction."""
    n2 = np.einsum("ij,ij->i", x, x)
    if best is None:
        return {
            "e": e.copy(),
            "x": x.copy(),
            "n2": n2,
            "conv": conv.copy(),
            "b": np.full(e.shape, branch_index, dtype=np.int16),
            "degen": np.zeros(e.shape, dtype=bool),
        }
    de = e - best["e"]
    close = np.abs(de) <= TIE_TOL
    strict = de < -TIE_TOL
    tie = close & (n2 < best["n2"] - TIE_TOL)
    better = strict | tie
    # ties at the same amplitudes are sign-branch twins, not degeneracy
    same_pt = np.max(np.abs(x - best["x"]), axis=1) <= SAME_POINT_TOL
    dist = np.max(np.abs(x - best["x"]), axis=1) > DEGEN_POINT_TOL
    best["degen"] = best["degen"] | (close & dist)
    best["degen"][strict] = False
    # a tied same-point candidate vouches for convergence either way
    merged = np.where(strict, conv, np.where(same_pt, conv | best["conv"], conv))
    best["conv"][close & same_pt & conv] = True
    best["conv"] = np.where(better, merged, best["conv"])
    best["e"] = np.where(better, e, best["e"])
    best["n2"] = np.where(better, n2, best["n2"])
    best["x"] = np.where(better[:, None], x, best["x"])
    best["b"] = np.where(better, branch_index, best["b"])
    return best


def _fold_batch(best, branches, xa, xb, starts, rho_max, tol, max_iter):
    """Minimise every start of every branch and fold per-start results."""
    m, n_starts, nfree = starts.shape
    xar = np.repeat(xa, n_starts)
    xbr = np.repeat(xb, n_starts)
    flat = starts.reshape(m * n_starts, 1, nfree)
    for bi, branch in enumerate(branches):
        e, x, conv = kernels.minimize_many(
            xar, xbr, flat, branch.arrays, rho_max, tol, max_iter
        )
        e = e.reshape(m, n_starts)
        x = x.reshape(m, n_starts, nfree)
        conv = conv.reshape(m, n_starts)
        for s in range(n_starts):
            best = _fold(best, e[:, s], x[:, s], conv[:, s], bi)
    return best


def _phase_arrays(spec, pairs, branches, best, xa, xb):
    """Per-node level signs, mode signs, and field amplitudes."""
    sig_lut = np.array([b.sigma for b in branches], dtype=np.int8)
    sigma = sig_lut[best["b"]]
    sigf = sigma.astype(np.float64)
    full_rho = np.concatenate(
        [np.ones((xa.size, 1)), best["x"]], axis=1
    )
    s = np.zeros((xa.size, spec.ell))
    for c in spec.couplings:
        pair = (c.j, c.k)
        if pair == pairs[0]:
            mu = xa * spec.mu_critical(c)
        elif len(pairs) > 1 and pair == pairs[1]:
            mu = xb * spec.mu_critical(c)
        else:
            mu = np.full(xa.size, c.mu)
        s[:, c.mode - 1] += (
            mu
            * sigf[:, c.j - 1]
            * sigf[:, c.k - 1]
            * full_rho[:, c.j - 1]
            * full_rho[:, c.k - 1]
        )
    n2 = 1.0 + best["n2"]
    tau = np.where(s >= 0.0, 1, -1).astype(np.int8)
    r = 2.0 * np.abs(s) / (np.asarray(spec.mode_freqs) * n2[:, None])
    return sigma, tau, r


def _check_axis(axis, name):
    axis = np.asarray(axis, dtype=np.float64)
    if axis.ndim != 1 or axis.size < 1:
        raise ValidationError(f"{name} must be a 1-d sample vector")
    if axis.size > 1 and np.any(np.diff(axis) <= 0.0):
        raise ValidationError(f"{name} must increase strictly")
    if axis[0] < 0.0:
        raise ValidationError(f"{name} must start at a nonnegative strength")
    return axis


def scan_ground(
    config,
    row: str | None = None,
    axes=None,
    *,
    omega2: float | None = None,
    window: tuple[float, float, float, float] = (0.0, 3.0, 0.0, 3.0),
    shape: tuple[int, int] = (201, 201),
    multistarts: int = 8,
    tol: float = 1e-10,
    max_iter: int = 2000,
    rho_max: float = 10.0,
    seed: int = 0,
) -> PhaseGrid:
    """Minimise the ground state on a grid of coupling strengths.

    config is a configuration name (with an optional strength row label
    and omega2 override) or a ready ModelSpec whose scan_pairs select
    the axes.  Nodes are solved from shared cold multistarts plus the
    analytic single-pair seeds, then refined once from the neighbouring
    minima; the warm pass only adds candidate starts, so the result is
    independent of traversal order.  Non-converged nodes are flagged in
    the converged array, never fatal.
    """
    if isinstance(config, ModelSpec):
        if row is not None or omega2 is not None:
            raise ValidationError(
                "row and omega2 apply to named configurations only"
            )
        spec = config
    else:
        spec = named_configuration(config, omega2=omega2, g=row)
    pairs = spec.scan_pairs
    if not 1 <= len(pairs) <= 2:
        raise ValidationError("scans need one or two scan pairs")

    if axes is not None:
        axis_a = _check_axis(axes[0], "axis_a")
        axis_b = _check_axis(axes[1], "axis_b")
    else:
        axis_a = np.linspace(window[0], window[1], shape[0])
        axis_b = np.linspace(window[2], window[3], shape[1])
        axis_a = _check_axis(axis_a, "axis_a")
        axis_b = _check_axis(axis_b, "axis_b")
    if len(pairs) == 1:
        axis_b = np.zeros(1)

    na, nb = axis_a.size, axis_b.size
    xa = np.repeat(axis_a, nb)
    xb = np.tile(axis_b, na)

    branches = kernels.compile_branches(spec, pairs)
    starts = _cold_starts(spec, pairs, xa, xb, multistarts, rho_max, seed)
    best = _fold_batch(None, branches, xa, xb, starts, rho_max, tol, max_iter)

    if na * nb > 1:
        r3 = best["x"].reshape(na, nb, spec.n - 1)
        warm = np.stack(
            [
                np.concatenate([r3[:1], r3[:-1]], axis=0),
                np.concatenate([r3[1:], r3[-1:]], axis=0),
                np.concatenate([r3[:, :1], r3[:, :-1]], axis=1),
                np.concatenate([r3[:, 1:], r3[:, -1:]], axis=1),
            ],
            axis=2,
        ).reshape(na * nb, 4, spec.n - 1)
        best = _fold_batch(
            best, branches, xa, xb, warm, rho_max, tol, max_iter
        )

    sigma, tau, r = _phase_arrays(spec, pairs, branches, best, xa, xb)
    meta = {
        "config": spec.name,
        "row": row,
        "omega2": spec.omegas[1] if spec.n == 3 else None,
        "pairs": [list(p) for p in pairs],
        "multistarts": multistarts,
        "tol": tol,
        "max_iter": max_iter,
        "rho_max": rho_max,
        "seed": seed,
        "backend": kernels.active_backend(),
        "n_atoms": {},
    }
    return PhaseGrid(
        spec=spec,
        pairs=pairs,
        axis_a=axis_a,
        axis_b=axis_b,
        energy=best["e"].reshape(na, nb),
        rho=best["x"].reshape(na, nb, spec.n - 1),
        sigma=sigma.reshape(na, nb, spec.n),
        tau=tau.reshape(na, nb, spec.ell),
        r=r.reshape(na, nb, spec.ell),
        converged=best["conv"].reshape(na, nb),
        degenerate=best["degen"].reshape(na, nb),
        meta=meta,
    )


def audit_scan(grid: PhaseGrid, count: int = 50, seed: int = 2026) -> float:
    """Max |energy difference| against fresh cold minimisations.

    Re-solves count random nodes with the standalone minimiser and
    returns the largest deviation from the stored grid energies.
    """
    rng = np.random.default_rng(seed)
    na, nb = grid.shape
    worst = 0.0
    for _ in range(count):
        i = int(rng.integers(na))
        j = int(rng.integers(nb))
        sol = minimize_ground(
            grid.node_spec(i, j),
            multistarts=grid.meta.get("multistarts", 8),
            tol=grid.meta.get("tol", 1e-10),
            max_iter=grid.meta.get("max_iter", 2000),
            rho_max=grid.meta.get("rho_max", 10.0),
            seed=grid.meta.get("seed", 0),
        )
        worst = max(worst, abs(sol.energy - float(grid.energy[i, j])))
    return worst


# ---------------------------------------------------------------------------
# Ehrenfest derivative fields

def _uniform_step(axis, name):
    if axis.size < 2:
        return None
    d = np.diff(axis)
    if np.any(np.abs(d - d[0]) > 1e-9 * max(1.0, abs(float(d[0])))):
        raise ValidationError(f"{name} must be uniform for derivatives")
    return float(d[0])


def derivative_fields(grid: PhaseGrid):
    """Summed first and second derivatives of the energy surface.

    de = dE/dx_a + dE/dx_b and d2e = d(de)/dx_a + d(de)/dx_b via central
    differences, one-sided at the edges; a degenerate axis (a single
    sample) contributes nothing.  Results are stored on the grid.
    """
    da = _uniform_step(grid.axis_a, "axis_a")
    db = _uniform_step(grid.axis_b, "axis_b")
    if da is None and db is None:
        raise ValidationError("derivatives need at least one real axis")
    de = np.zeros_like(grid.energy)
    if da is not None:
        de += np.gradient(grid.energy, da, axis=0)
    if db is not None:
        de += np.gradient(grid.energy, db, axis=1)
    d2e = np.zeros_like(de)
    if da is not None:
        d2e += np.gradient(de, da, axis=0)
    if db is not None:
        d2e += np.gradient(de, db, axis=1)
    grid.de = de
    grid.d2e = d2e
    return de, d2e


# ---------------------------------------------------------------------------
# subsystem Casimir difference

def casimir_expectation(gamma, pair, n_atoms: int = 2) -> float:
    """Expectation of the two-level subsystem Casimir on a matter state.

    For the coherent matter state the four quadratic terms reduce to
    N(N-1) F^2 + 2 N F with F the population fraction of the pair; the
    value approaches N(N+1) when the pair holds all population.
    """
    gamma = np.asarray(gamma, dtype=np.complex128)
    j, k = pair
    if not (1 <= j < k <= gamma.size):
        raise ValidationError(f"pair ({j}, {k}) out of range")
    w = np.abs(gamma) ** 2
    frac = (w[j - 1] + w[k - 1]) / np.sum(w)
    n = int(n_atoms)
    return float(n * (n - 1) * frac * frac + 2.0 * n * frac)


def casimir_delta(
    solution: GroundSolution,
    pair_a: tuple[int, int],
    pair_b: tuple[int, int],
    *,
    n_atoms: int = 2,
) -> float:
    """|<C_a - C_b>| between two subsystem Casimirs of one ground state."""
    gamma = solution.params.gamma()
    return abs(
        casimir_expectation(gamma, pair_a, n_atoms)
        - casimir_expectation(gamma, pair_b, n_atoms)
    )


def casimir_field(grid: PhaseGrid, n_atoms: int = 2) -> np.ndarray:
    """Signed Casimir difference <C_a> - <C_b> over the grid.

    The sign supports contouring the delta C = 0 locus; take the
    absolute value for the detector itself.  Stored on the grid.
    """
    if len(grid.pairs) != 2:
        raise ValidationError("the Casimir difference needs two scan pairs")
    full_rho = np.concatenate(
        [np.ones(grid.shape + (1,)), grid.rho], axis=2
    )
    w = full_rho * full_rho
    total = np.sum(w, axis=2)
    n = int(n_atoms)

    def expect(pair):
        j, k = pair
        frac = (w[:, :, j - 1] + w[:, :, k - 1]) / total
        return n * (n - 1) * frac * frac + 2.0 * n * frac

    grid.dc = expect(grid.pairs[0]) - expect(grid.pairs[1])
    grid.meta.setdefault("n_atoms", {})["casimir"] = n
    return grid.dc


# ---------------------------------------------------------------------------
# Bures-distance ridge

def _state_fields(rho, sigma, tau, r, n_atoms):
    """Signed matter and field vectors of the stored minima."""
    full_rho = np.concatenate([np.ones(rho.shape[:-1] + (1,)), rho], axis=-1)
    gamma = sigma.astype(np.float64) * full_rho
    alpha = math.sqrt(n_atoms) * tau.astype(np.float64) * r
    return gamma, alpha


def _distance(gamma_p, alpha_p, gamma_q, alpha_q, n_atoms):
    a2 = np.sum(alpha_p * alpha_p, axis=-1) + np.sum(
        alpha_q * alpha_q, axis=-1
    )
    dot = np.sum(alpha_p * alpha_q, axis=-1)
    field_ov = np.exp(-0.5 * (a2 - 2.0 * dot))
    gp = np.sqrt(np.sum(gamma_p * gamma_p, axis=-1))
    gq = np.sqrt(np.sum(gamma_q * gamma_q, axis=-1))
    base = np.sum(gamma_p * gamma_q, axis=-1) / (gp * gq)
    ov = field_ov * base ** int(n_atoms)
    return np.sqrt(np.clip(2.0 * (1.0 - ov * ov), 0.0, 2.0))


def bures_ridge(
    grid: PhaseGrid, n_atoms: int, eps: float | None = None
) -> np.ndarray:
    """Largest Bures distance to the re-minimised four-neighbour states.

    With the default eps (one grid step) the neighbouring grid minima
    are reused; an explicit eps re-minimises the four shifted strength
    points per node.  Edge nodes use the neighbours that exist; values
    lie in [0, sqrt(2)].  Stored on the grid.
    """
    n_atoms = int(n_atoms)
    if n_atoms < 1:
        raise ValidationError("n_atoms must be a positive integer")
    gamma, alpha = _state_fields(grid.rho, grid.sigma, grid.tau, grid.r, n_atoms)
    out = np.zeros(grid.shape)

    if eps is None:
        d = _distance(
            gamma[:-1], alpha[:-1], gamma[1:], alpha[1:], n_atoms
        )
        if d.size:
            out[:-1] = np.maximum(out[:-1], d)
            out[1:] = np.maximum(out[1:], d)
        d = _distance(
            gamma[:, :-1], alpha[:, :-1], gamma[:, 1:], alpha[:, 1:], n_atoms
        )
        if d.size:
            out[:, :-1] = np.maximum(out[:, :-1], d)
            out[:, 1:] = np.maximum(out[:, 1:], d)
        used_eps = [
            float(grid.axis_a[1] - grid.axis_a[0]) if grid.axis_a.size > 1 else 0.0,
            float(grid.axis_b[1] - grid.axis_b[0]) if grid.axis_b.size > 1 else 0.0,
        ]
    else:
        eps = float(eps)
        if eps <= 0.0:
            raise ValidationError("eps must be positive")
        na, nb = grid.shape
        xa = np.repeat(grid.axis_a, nb)
        xb = np.tile(grid.axis_b, na)
        branches = kernels.compile_branches(grid.spec, grid.pairs)
        opts = grid.meta
        shifts = [(eps, 0.0), (-eps, 0.0)]
        if len(grid.pairs) > 1:
            shifts += [(0.0, eps), (0.0, -eps)]
        for da, db in shifts:
            sxa, sxb = xa + da, xb + db
            valid = (sxa >= 0.0) & (sxb >= 0.0)
            if not np.any(valid):
                continue
            starts = _cold_starts(
                grid.spec, grid.pairs, sxa, sxb,
                opts.get("multistarts", 8), opts.get("rho_max", 10.0),
                opts.get("seed", 0),
            )
            best = _fold_batch(
                None, branches, sxa, sxb, starts,
                opts.get("rho_max", 10.0), opts.get("tol", 1e-10),
                opts.get("max_iter", 2000),
            )
            sig, tau, r = _phase_arrays(
                grid.spec, grid.pairs, branches, best, sxa, sxb
            )
            g_q, a_q = _state_fields(
                best["x"].reshape(na, nb, -1),
                sig.reshape(na, nb, -1),
                tau.reshape(na, nb, -1),
                r.reshape(na, nb, -1),
                n_atoms,
            )
            d = _distance(gamma, alpha, g_q, a_q, n_atoms)
            d = np.where(valid.reshape(na, nb), d, 0.0)
            out = np.maximum(out, d)
        used_eps = [eps, eps]

    grid.bures = out
    grid.meta.setdefault("n_atoms", {})["bures"] = n_atoms
    grid.meta["bures_eps"] = used_eps
    return out


# ---------------------------------------------------------------------------
# separatrix classification

def _envelope_partials(grid: PhaseGrid):
    """Exact dE/dx per scan axis at every node.

    Only the field coupling depends on the scanned strengths, so at a
    minimiser dE/dx_axis = -8 sum_s S_s (dS_s/dx_axis) / (Omega_s N2^2)
    by the envelope theorem (free amplitudes are stationary; amplitudes
    pinned at the box bound do not move with x).
    """
    spec, pairs = grid.spec, grid.pairs
    na, nb = grid.shape
    full_rho = np.concatenate([np.ones(grid.shape + (1,)), grid.rho], axis=2)
    sigf = grid.sigma.astype(np.float64)
    n2 = np.sum(full_rho * full_rho, axis=2)
    xs = (
        np.broadcast_to(grid.axis_a[:, None], (na, nb)),
        np.broadcast_to(grid.axis_b[None, :], (na, nb)),
    )
    s = np.zeros(grid.shape + (spec.ell,))
    ds = [np.zeros(grid.shape + (spec.ell,)) for _ in pairs]
    for c in spec.couplings:
        pair = (c.j, c.k)
        w = (
            sigf[:, :, c.j - 1]
            * sigf[:, :, c.k - 1]
            * full_rho[:, :, c.j - 1]
            * full_rho[:, :, c.k - 1]
        )
        if pair == pairs[0]:
            mu = xs[0] * spec.mu_critical(c)
            ds[0][:, :, c.mode - 1] += spec.mu_critical(c) * w
        elif len(pairs) > 1 and pair == pairs[1]:
            mu = xs[1] * spec.mu_critical(c)
            ds[1][:, :, c.mode - 1] += spec.mu_critical(c) * w
        else:
            mu = c.mu
        s[:, :, c.mode - 1] += mu * w
    om = np.asarray(spec.mode_freqs)
    denom = om * n2[:, :, None] ** 2
    parts = [np.sum(-8.0 * s * d / denom, axis=2) for d in ds]
    while len(parts) < 2:
        parts.append(np.zeros(grid.shape))
    return parts[0], parts[1]


def _bisect_boundary(grid: PhaseGrid, faces, iters: int = 20):
    """Sub-cell normal-boundary coordinate along each interface axis.

    Bisects the full minimisation between the normal and collective
    node of every interface; the zero-energy plateau makes the
    predicate exact.
    """
    if not faces:
        return np.zeros(0)
    axes = (grid.axis_a, grid.axis_b)
    branches = kernels.compile_branches(grid.spec, grid.pairs)
    opts = grid.meta
    lo = np.array([axes[axis][p[axis]] for p, q, axis, _ in faces])
    hi = np.array([axes[axis][q[axis]] for p, q, axis, _ in faces])
    fixed = np.array(
        [axes[1 - axis][p[1 - axis]] for p, q, axis, _ in faces]
    )
    is_a = np.array([axis == 0 for _, _, axis, _ in faces])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        xa = np.where(is_a, mid, fixed)
        xb = np.where(is_a, fixed, mid)
        starts = _cold_starts(
            grid.spec, grid.pairs, xa, xb,
            opts.get("multistarts", 8), opts.get("rho_max", 10.0),
            opts.get("seed", 0),
        )
        best = _fold_batch(
            None, branches, xa, xb, starts,
            opts.get("rho_max", 10.0), opts.get("tol", 1e-10),
            opts.get("max_iter", 2000),
        )
        collective = best["e"] < 0.0
        hi = np.where(collective, mid, hi)
        lo = np.where(collective, lo, mid)
    return 0.5 * (lo + hi)


def _sided_limit(svals, fvals):
    """Value and slope of a field at s=0 from samples on one side.

    Quadratic fit for three samples, linear for two, constant for one;
    distances enter in grid-step units for conditioning.
    """
    s = np.asarray(svals, dtype=np.float64)
    f = np.asarray(fvals, dtype=np.float64)
    if s.size >= 3:
        coef = np.linalg.solve(
            np.vander(s[:3], 3, increasing=True), f[:3]
        )
        return float(coef[0]), float(coef[1])
    if s.size == 2:
        slope = (f[1] - f[0]) / (s[1] - s[0])
        return float(f[0] - slope * s[0]), float(slope)
    if s.size == 1:
        return float(f[0]), None
    return None, None


def _median_neighbor_diff(fld, collective):
    parts = []
    both = collective[:-1] & collective[1:]
    parts.append(np.abs(fld[:-1] - fld[1:])[both])
    both = collective[:, :-1] & collective[:, 1:]
    parts.append(np.abs(fld[:, :-1] - fld[:, 1:])[both])
    diffs = np.concatenate(parts) if parts else np.array([])
    if diffs.size == 0:
        return 0.0
    med = float(np.median(diffs))
    if med == 0.0:
        med = 1e-12 * max(1.0, float(np.max(np.abs(fld))))
    return med


def _extrapolated(fld, normal, q, axis, step, offsets):
    """Linear extrapolation of fld to the interface from interior cells.

    offsets lists (t0, t1) cell depths measured from the first
    collective cell; the first pair whose cells are in bounds and
    collective is used.  Cell t sits at distance (0.5 + t) grid steps
    from the interface.
    """
    na, nb = normal.shape
    for t0, t1 in offsets:
        if axis == 0:
            c0 = (q[0] + step * t0, q[1])
            c1 = (q[0] + step * t1, q[1])
        else:
            c0 = (q[0], q[1] + step * t0)
            c1 = (q[0], q[1] + step * t1)
        ok = True
        for c in (c0, c1):
            if not (0 <= c[0] < na and 0 <= c[1] < nb) or normal[c]:
                ok = False
                break
        if not ok:
            continue
        f0, f1 = float(fld[c0]), float(fld[c1])
        s0, s1 = 0.5 + t0, 0.5 + t1
        slope = (f1 - f0) / (s1 - s0)
        return f0 - slope * s0
    return None


def _collect_faces(normal):
    faces = []
    for axis in (0, 1):
        if axis == 0:
            idx = np.argwhere(normal[:-1, :] != normal[1:, :])
        else:
            idx = np.argwhere(normal[:, :-1] != normal[:, 1:])
        for i, j in idx:
            lo = (int(i), int(j))
            hi = (int(i + 1), int(j)) if axis == 0 else (int(i), int(j + 1))
            p, q = (lo, hi) if normal[lo] else (hi, lo)
            step = 1 if q[axis] > p[axis] else -1
            faces.append((p, q, axis, step))
    return faces


def _boundary_interfaces(grid, partials, tau1, tau2):
    """Classify every normal/collective cell interface.

    The boundary coordinate is refined by bisection inside the cell;
    the collective-side limits of the summed first derivative (value
    and slope) then come from a quadratic fit of the exact per-node
    derivatives, so sub-cell boundary placement cannot fake a jump.
    The normal side is an exact zero plateau.
    """
    normal = grid.normal_mask
    axes = (grid.axis_a, grid.axis_b)
    faces = _collect_faces(normal)
    if not faces:
        return []
    xhat = _bisect_boundary(grid, faces)
    dex = partials[0] + partials[1]
    have_dc = grid.dc is not None
    recs = []
    for (p, q, axis, step), xc in zip(faces, xhat):
        h = float(axes[axis][q[axis]] - axes[axis][p[axis]])
        svals, fvals = [], []
        for t in range(3):
            cell = (
                (q[0] + step * t, q[1]) if axis == 0 else (q[0], q[1] + step * t)
            )
            if (
                not (0 <= cell[0] < normal.shape[0] and 0 <= cell[1] < normal.shape[1])
                or normal[cell]
            ):
                break
            svals.append((float(axes[axis][cell[axis]]) - xc) / h)
            fvals.append(float(dex[cell]))
        jde, slope = _sided_limit(svals, fvals)
        jd2 = None if slope is None else slope / abs(h)
        if jde is None:
            order = "unclassified"
        elif abs(jde) > tau1:
            order = "first"
        elif jd2 is not None and abs(jd2) > tau2:
            order = "second"
        else:
            order = "unclassified"
        region = None
        if have_dc:
            deep = (q[0] + step, q[1]) if axis == 0 else (q[0], q[1] + step)
            cell = q
            if (
                0 <= deep[0] < normal.shape[0]
                and 0 <= deep[1] < normal.shape[1]
                and not normal[deep]
            ):
                cell = deep
            val = float(grid.dc[cell])
            if val != 0.0:
                pair = grid.pairs[0] if val > 0.0 else grid.pairs[1]
                region = f"S{pair[0]}{pair[1]}"
        mid = [0.0, 0.0]
        mid[axis] = float(xc)
        mid[1 - axis] = float(axes[1 - axis][p[1 - axis]])
        recs.append(
            {
                "mid": (mid[0], mid[1]),
                "order": order,
                "region": region,
                "jde": jde,
                "jd2": jd2,
            }
        )
    return recs


def _runs(recs):
    out = []
    run = [recs[0]]
    for rec in recs[1:]:
        if (rec["order"], rec["region"]) == (run[0]["order"], run[0]["region"]):
            run.append(rec)
        else:
            out.append(run)
            run = [rec]
    out.append(run)
    return out


def _group_boundary(recs, grid):
    if not recs:
        return []
    a0 = float(grid.axis_a[0])
    b0 = float(grid.axis_b[0])
    recs = sorted(
        recs, key=lambda r: -math.atan2(r["mid"][1] - b0, r["mid"][0] - a0)
    )
    curves = _runs(recs)
    # the two interface staircases interleave near junction corners and
    # can leave single stray labels between equal runs; reabsorb those
    changed = True
    while changed and len(curves) > 2:
        changed = False
        for i in range(1, len(curves) - 1):
            before, mid, after = curves[i - 1], curves[i], curves[i + 1]
            key = (before[0]["order"], before[0]["region"])
            if len(mid) == 1 and key == (after[0]["order"], after[0]["region"]):
                for rec in mid:
                    rec["order"], rec["region"] = key
                curves = _runs([r for run in curves for r in run])
                changed = True
                break
    return [
        SeparatrixCurve(
            points=np.array([r["mid"] for r in run]),
            kind="normal_boundary",
            order=run[0]["order"],
            region=run[0]["region"],
        )
        for run in curves
    ]


def _contour_to_points(polyline, axis_a, axis_b):
    xa = np.interp(polyline[:, 0], np.arange(axis_a.size), axis_a)
    xb = np.interp(polyline[:, 1], np.arange(axis_b.size), axis_b)
    return np.column_stack([xa, xb])


def _swap_order(grid, partials):
    """First order when a partial derivative jumps across the locus.

    The summed derivative can stay continuous by cancellation between
    the two partials, so each axis is probed with its own exact
    component and its own relative threshold.
    """
    normal = grid.normal_mask
    collective = ~normal
    ratios = []
    for axis in (0, 1):
        fld = partials[axis]
        thr = 10.0 * _median_neighbor_diff(fld, collective)
        dc = grid.dc
        if axis == 0:
            flip = (dc[:-1, :] * dc[1:, :] < 0.0) & collective[:-1, :] & collective[1:, :]
        else:
            flip = (dc[:, :-1] * dc[:, 1:] < 0.0) & collective[:, :-1] & collective[:, 1:]
        for i, j in np.argwhere(flip):
            i, j = int(i), int(j)
            lo = (i, j)
            hi = (i + 1, j) if axis == 0 else (i, j + 1)
            va = _extrapolated(fld, normal, lo, axis, -1, ((1, 2), (0, 1)))
            vb = _extrapolated(fld, normal, hi, axis, 1, ((1, 2), (0, 1)))
            if va is not None and vb is not None and thr > 0.0:
                ratios.append(abs(va - vb) / thr)
    if not ratios:
        return "continuous_unstable"
    return "first" if float(np.median(ratios)) > 1.0 else "continuous_unstable"


def _mode_swap_curves(grid, partials):
    if len(grid.pairs) != 2 or min(grid.shape) < 2:
        return []
    if grid.dc is None:
        casimir_field(grid)
    masked = np.where(grid.normal_mask, np.nan, grid.dc)
    finite = masked[np.isfinite(masked)]
    if finite.size == 0 or not (finite.min() < 0.0 < finite.max()):
        return []
    order = _swap_order(grid, partials)
    curves = []
    for polyline in measure.find_contours(masked, 0.0):
        pts = _contour_to_points(polyline, grid.axis_a, grid.axis_b)
        curves.append(
            SeparatrixCurve(points=pts, kind="mode_swap", order=order)
        )
    return curves


def thresholds(grid: PhaseGrid) -> tuple[float, float]:
    """Default jump thresholds: 10x the median collective neighbour move."""
    if grid.de is None or grid.d2e is None:
        raise ValidationError("derivative fields not computed")
    collective = ~grid.normal_mask
    return (
        10.0 * _median_neighbor_diff(grid.de, collective),
        10.0 * _median_neighbor_diff(grid.d2e, collective),
    )


def classify_separatrix(
    grid: PhaseGrid,
    tau1: float | None = None,
    tau2: float | None = None,
) -> list[SeparatrixCurve]:
    """Label the transition lines of a scanned grid.

    Normal-boundary interfaces are first order when the summed first
    derivative jumps by more than tau1, measured as the collective-side
    limit at the bisected boundary coordinate (the normal side is an
    exact zero plateau); otherwise second order when its slope, the
    second-derivative limit, exceeds tau2; otherwise unclassified.
    Interior mode-swap curves come from the zero set of the signed
    Casimir difference and are continuous unstable unless a first
    derivative component itself jumps there.
    """
    if grid.de is None or grid.d2e is None:
        derivative_fields(grid)
    t1_def, t2_def = thresholds(grid)
    tau1 = t1_def if tau1 is None else float(tau1)
    tau2 = t2_def if tau2 is None else float(tau2)
    if len(grid.pairs) == 2 and grid.dc is None:
        casimir_field(grid)
    partials = _envelope_partials(grid)
    curves = _group_boundary(
        _boundary_interfaces(grid, partials, tau1, tau2), grid
    )
    curves.extend(_mode_swap_curves(grid, partials))
    return curves


def _degenerate_crossings(energy, axis_vals, eta):
    """1-d boundary points for single-axis scans."""
    pts = []
    e = energy[:, 0] if energy.shape[1] == 1 else energy[0, :]
    for i in range(e.size - 1):
        lo, hi = e[i], e[i + 1]
        if (lo == 0.0) == (hi == 0.0):
            continue
        if hi == lo:
            continue
        t = (-eta - lo) / (hi - lo)
        t = min(max(t, 0.0), 1.0)
        pts.append(axis_vals[i] + t * (axis_vals[i + 1] - axis_vals[i]))
    return pts


def extract_separatrix(
    grid: PhaseGrid,
    eta: float = -BOUNDARY_LEVEL,
    curves: list[SeparatrixCurve] | None = None,
) -> list[SeparatrixCurve]:
    """Sub-cell separatrix polylines with order labels.

    The normal boundary is the marching-squares contour of the energy
    at level -eta; polylines are split into runs labelled by the
    nearest classified interface.  Mode-swap polylines are passed
    through from the classification.  Contours may end open at the
    window edge.
    """
    if grid.de is None or grid.d2e is None:
        derivative_fields(grid)
    if curves is None:
        curves = classify_separatrix(grid)
    labelled = [
        c for c in curves if c.kind == "normal_boundary" and len(c.points)
    ]
    out = []

    if min(grid.shape) < 2:
        axis = grid.axis_a if grid.shape[1] == 1 else grid.axis_b
        fixed = grid.axis_b[0] if grid.shape[1] == 1 else grid.axis_a[0]
        order = labelled[0].order if labelled else "unclassified"
        for x in _degenerate_crossings(grid.energy, axis, eta):
            pt = (x, fixed) if grid.shape[1] == 1 else (fixed, x)
            out.append(
                SeparatrixCurve(
                    points=np.array([pt]),
                    kind="normal_boundary",
                    order=order,
                    region=labelled[0].region if labelled else None,
                )
            )
    else:
        mids = (
            np.concatenate([c.points for c in labelled])
            if labelled
            else np.zeros((0, 2))
        )
        tags = [
            (c.order, c.region) for c in labelled for _ in range(len(c.points))
        ]
        for polyline in measure.find_contours(grid.energy, -eta):
            pts = _contour_to_points(polyline, grid.axis_a, grid.axis_b)
            if mids.shape[0]:
                d2 = (
                    (pts[:, None, 0] - mids[None, :, 0]) ** 2
                    + (pts[:, None, 1] - mids[None, :, 1]) ** 2
                )
                nearest = np.argmin(d2, axis=1)
                labels = [tags[i] for i in nearest]
            else:
                labels = [("unclassified", None)] * len(pts)
            start = 0
            for stop in range(1, len(pts) + 1):
                if stop == len(pts) or labels[stop] != labels[start]:
                    out.append(
                        SeparatrixCurve(
                            points=pts[start:stop],
                            kind="normal_boundary",
                            order=labels[start][0],
                            region=labels[start][1],
                        )
                    )
                    start = stop
    out.extend(c for c in curves if c.kind == "mode_swap")
    return out


def normal_cell_count(grid: PhaseGrid) -> int:
    """Number of grid nodes in the normal region."""
    return int(np.sum(grid.normal_mask))


# ---------------------------------------------------------------------------
# file outputs

_FIELD_ATTR = {
    "e_min": "energy",
    "de": "de",
    "d2e": "d2e",
    "dc": "dc",
    "bures": "bures",
}


def write_field_csv(grid: PhaseGrid, name: str, path) -> None:
    """One grid field as x_jk,x_lm,value rows in row-major node order."""
    if name not in _FIELD_ATTR:
        raise ValidationError(f"unknown field {name!r}")
    arr = getattr(grid, _FIELD_ATTR[name])
    if arr is None:
        raise ValidationError(f"field {name!r} has not been computed")
    na, nb = grid.shape
    cols = np.column_stack(
        [
            np.repeat(grid.axis_a, nb),
            np.tile(grid.axis_b, na),
            np.asarray(arr, dtype=np.float64).reshape(na * nb),
        ]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x_jk,x_lm,value\n")
        for row in cols:
            fh.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g}\n")


def _curve_payload(curves):
    return [
        {
            "kind": c.kind,
            "order": c.order,
            "region": c.region,
            "points": [[float(a), float(b)] for a, b in c.points],
        }
        for c in curves
    ]


def write_summary_json(grid: PhaseGrid, curves, path) -> None:
    """Scan metadata plus separatrix polylines and order labels."""
    payload = {
        "configuration": grid.meta.get("config"),
        "row": grid.meta.get("row"),
        "omega2": grid.meta.get("omega2"),
        "pairs": grid.meta.get("pairs"),
        "axis_a": [float(v) for v in grid.axis_a],
        "axis_b": [float(v) for v in grid.axis_b],
        "backend": grid.meta.get("backend"),
        "seed": grid.meta.get("seed"),
        "n_atoms": grid.meta.get("n_atoms", {}),
        "normal_cells": normal_cell_count(grid),
        "unconverged_cells": int(np.sum(~grid.converged)),
        "degenerate_cells": int(np.sum(grid.degenerate)),
        "curves": _curve_payload(curves),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_separatrix_dat(curves, path) -> None:
    """Gnuplot-friendly polylines: blank-line-separated blocks."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in curves:
            region = f" region={c.region}" if c.region else ""
            fh.write(f"# kind={c.kind} order={c.order}{region}\n")
            for a, b in c.points:
                fh.write(f"{a:.17g} {b:.17g}\n")
            fh.write("\n")


_GNUPLOT_FIELD = """\
# plot the {name} surface; run: gnuplot -p {script}
set datafile separator ','
set xlabel 'x_{{jk}}'
set ylabel 'x_{{lm}}'
set title '{name}'
plot '{csv}' skip 1 using 1:2:3 with image notitle
"""

_GNUPLOT_CURVES = """\
# plot the separatrix polylines; run: gnuplot -p {script}
set xlabel 'x_{{jk}}'
set ylabel 'x_{{lm}}'
set title 'separatrix'
plot '{dat}' using 1:2 with lines lw 2 notitle
"""


def export_grid(grid: PhaseGrid, curves, outdir) -> list[str]:
    """Write every computed field, the curve summary, and plot scripts.

    Returns the list of file names written inside outdir.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    for name, attr in _FIELD_ATTR.items():
        if getattr(grid, attr) is None:
            continue
        csv_name = f"{name}.csv"
        write_field_csv(grid, name, os.path.join(outdir, csv_name))
        written.append(csv_name)
        script = f"plot_{name}.gp"
        with open(os.path.join(outdir, script), "w", encoding="utf-8") as fh:
            fh.write(
                _GNUPLOT_FIELD.format(name=name, csv=csv_name, script=script)
            )
        written.append(script)
    write_summary_json(grid, curves, os.path.join(outdir, "separatrix.json"))
    written.append("separatrix.json")
    write_separatrix_dat(curves, os.path.join(outdir, "separatrix.dat"))
    written.append("separatrix.dat")
    with open(
        os.path.join(outdir, "plot_separatrix.gp"), "w", encoding="utf-8"
    ) as fh:
        fh.write(
            _GNUPLOT_CURVES.format(dat="separatrix.dat", script="plot_separatrix.gp")
        )
    written.append("plot_separatrix.gp")
    return written
