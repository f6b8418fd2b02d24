"""Coherent-state energy surface and its variational ground state.

The trial state is a product of field coherent states alpha_s = R_s e^{i
theta_s} (R_s = sqrt(N_a) r_s) and a symmetric matter coherent state built
from gamma_k = rho_k e^{i phi_k}, with rho_1 = 1 and phi_1 = 0 fixed.  In
the reduced variables the energy per atom is independent of the atom
number.  Minimisation eliminates the field at its critical amplitude and
scans the discrete phase branches, descending over rho with the kernel
backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import GTable, ModelSpec, ValidationError


@dataclass(frozen=True)
class CoherentParams:
    """Free parameters of the trial state.

    rho and phi hold levels 2..n (level 1 is pinned at rho = 1, phi = 0);
    r and theta hold one reduced amplitude and phase per mode.
    """

    rho: tuple[float, ...]
    phi: tuple[float, ...]
    r: tuple[float, ...]
    theta: tuple[float, ...]

    def __post_init__(self):
        if len(self.rho) != len(self.phi):
            raise ValidationError("rho and phi must have equal length")
        if len(self.r) != len(self.theta):
            raise ValidationError("r and theta must have equal length")
        if any(v < 0.0 for v in self.rho):
            raise ValidationError("level amplitudes must be nonnegative")
        if any(v < 0.0 for v in self.r):
            raise ValidationError("field amplitudes must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.rho) + 1

    @property
    def ell(self) -> int:
        return len(self.r)

    def full_rho(self) -> np.ndarray:
        return np.concatenate(([1.0], np.asarray(self.rho, dtype=np.float64)))

    def full_phi(self) -> np.ndarray:
        return np.concatenate(([0.0], np.asarray(self.phi, dtype=np.float64)))

    def gamma(self) -> np.ndarray:
        """Unnormalised matter vector gamma_k = rho_k e^{i phi_k}."""
        return self.full_rho() * np.exp(1j * self.full_phi())

    def alpha(self, n_atoms: int) -> np.ndarray:
        """Field amplitudes alpha_s = sqrt(N_a) r_s e^{i theta_s}."""
        return (
            math.sqrt(n_atoms)
            * np.asarray(self.r, dtype=np.float64)
            * np.exp(1j * np.asarray(self.theta, dtype=np.float64))
        )


@dataclass(frozen=True)
class GroundSolution:
    """Variational ground state of one model.

    branch holds the sign assignment (cos phi_k^c for all n levels, cos
    theta_s^c for all modes); degenerate flags an energy tie within 1e-12
    between distinct minima.
    """

    params: CoherentParams
    branch: tuple[tuple[int, ...], tuple[int, ...]]
    energy: float
    region: str
    converged: bool
    degenerate: bool


# ---------------------------------------------------------------------------
# dipole-dipole surface

def _dd_monomials(gtable: GTable):
    """Terms Re[c e^{i w.phi}] prod_k rho_k^e of the interaction numerator.

    Returns (c (T,) complex, e (T, n) int, w (T, n) int); the energy
    divides the sum by the fourth power of the matter norm.
    """
    n = gtable.n
    g = gtable.get
    coef, expo, wgt = [], [], []

    def add(c, pairs_e, pairs_w):
        if c == 0:
            return
        e = np.zeros(n, dtype=np.int64)
        w = np.zeros(n, dtype=np.int64)
        for idx, val in pairs_e:
            e[idx - 1] += val
        for idx, val in pairs_w:
            w[idx - 1] += val
        coef.append(complex(c))
        expo.append(e)
        wgt.append(w)

    for j in range(1, n + 1):
        for k in range(j + 1, n + 1):
            # phi_jk = phi_k - phi_j
            add(g(j, k, j, k), [(j, 2), (k, 2)], [(k, 2), (j, -2)])
            add(g(j, k, k, j), [(j, 2), (k, 2)], [])
            for p in range(1, n + 1):
                if p in (j, k):
                    continue
                e = [(j, 1), (k, 1), (p, 2)]
                add(2.0 * g(j, p, k, p), e, [(p, 2), (j, -1), (k, -1)])
                add(2.0 * g(j, p, p, k), e, [(k, 1), (j, -1)])
            for l in range(k + 1, n + 1):
                for m in range(l + 1, n + 1):
                    e = [(j, 1), (k, 1), (l, 1), (m, 1)]
                    add(2.0 * g(j, k, l, m), e,
                        [(k, 1), (j, -1), (m, 1), (l, -1)])
                    add(2.0 * g(j, k, m, l), e,
                        [(k, 1), (j, -1), (m, -1), (l, 1)])
                    add(2.0 * g(j, l, k, m), e,
                        [(l, 1), (j, -1), (m, 1), (k, -1)])
                    add(2.0 * g(j, l, m, k), e,
                        [(l, 1), (j, -1), (m, -1), (k, 1)])
                    add(2.0 * g(j, m, k, l), e,
                        [(m, 1), (j, -1), (l, 1), (k, -1)])
                    add(2.0 * g(j, m, l, k), e,
                        [(m, 1), (j, -1), (l, -1), (k, 1)])
    if not coef:
        z = np.zeros((0, n), dtype=np.int64)
        return np.zeros(0, dtype=np.complex128), z, z
    return np.asarray(coef), np.asarray(expo), np.asarray(wgt)


def _dd_numerator(rho, phi, mono):
    coef, expo, wgt = mono
    if coef.shape[0] == 0:
        return 0.0
    amp = np.prod(rho[None, :] ** expo, axis=1)
    return float(np.real(coef * np.exp(1j * (wgt @ phi))) @ amp)


def dd_energy(rho, phi, gtable: GTable) -> float:
    """Dipole-dipole energy per atom at matter amplitudes and phases.

    rho and phi cover all n levels; complex tables are supported, the
    phase factors making the result real.
    """
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if rho.shape != (gtable.n,) or phi.shape != (gtable.n,):
        raise ValidationError("rho and phi must cover all levels")
    n2 = float(rho @ rho)
    return _dd_numerator(rho, phi, _dd_monomials(gtable)) / n2**2


# ---------------------------------------------------------------------------
# full surface

def _check_params(params: CoherentParams, spec: ModelSpec) -> None:
    if params.n != spec.n:
        raise ValidationError(f"params describe {params.n} levels, model {spec.n}")
    if params.ell != spec.ell:
        raise ValidationError(f"params describe {params.ell} modes, model {spec.ell}")


def _coupling_sums(rho, phi, spec: ModelSpec):
    """T_s = sum mu_jk^(s) rho_j rho_k cos(phi_k - phi_j) per mode."""
    t = np.zeros(spec.ell)
    for c in spec.couplings:
        t[c.mode - 1] += (
            c.mu * rho[c.j - 1] * rho[c.k - 1] * math.cos(phi[c.k - 1] - phi[c.j - 1])
        )
    return t


def energy(params: CoherentParams, spec: ModelSpec) -> float:
    """Variational energy per atom at the given trial parameters."""
    _check_params(params, spec)
    rho = params.full_rho()
    phi = params.full_phi()
    r = np.asarray(params.r, dtype=np.float64)
    theta = np.asarray(params.theta, dtype=np.float64)
    n2 = float(rho @ rho)
    omegas = np.asarray(spec.omegas)
    field = float(np.asarray(spec.mode_freqs) @ (r * r))
    matter = float(omegas @ (rho * rho)) / n2
    coupling = -4.0 * float((r * np.cos(theta)) @ _coupling_sums(rho, phi, spec)) / n2
    return field + matter + coupling + dd_energy(rho, phi, spec.gtable)


def energy_gradient(params: CoherentParams, spec: ModelSpec) -> np.ndarray:
    """Analytic gradient over [rho_2.., phi_2.., r_1.., theta_1..]."""
    _check_params(params, spec)
    rho = params.full_rho()
    phi = params.full_phi()
    r = np.asarray(params.r, dtype=np.float64)
    theta = np.asarray(params.theta, dtype=np.float64)
    n = spec.n
    n2 = float(rho @ rho)
    omegas = np.asarray(spec.omegas)
    mode_omega = np.asarray(spec.mode_freqs)

    a_val = float(omegas @ (rho * rho))
    t = _coupling_sums(rho, phi, spec)
    dt_drho = np.zeros((spec.ell, n))
    dt_dphi = np.zeros((spec.ell, n))
    for c in spec.couplings:
        s, j, k = c.mode - 1, c.j - 1, c.k - 1
        cosd = math.cos(phi[k] - phi[j])
        sind = math.sin(phi[k] - phi[j])
        dt_drho[s, j] += c.mu * rho[k] * cosd
        dt_drho[s, k] += c.mu * rho[j] * cosd
        dt_dphi[s, k] -= c.mu * rho[j] * rho[k] * sind
        dt_dphi[s, j] += c.mu * rho[j] * rho[k] * sind
    rc = r * np.cos(theta)

    mono = _dd_monomials(spec.gtable)
    coef, expo, wgt = mono
    b_val = _dd_numerator(rho, phi, mono)
    db_drho = np.zeros(n)
    db_dphi = np.zeros(n)
    if coef.shape[0]:
        phase = coef * np.exp(1j * (wgt @ phi))
        amp = np.prod(rho[None, :] ** expo, axis=1)
        re = np.real(phase)
        im = np.imag(phase)
        for m in range(n):
            em = expo[:, m]
            mask = em > 0
            if np.any(mask):
                partial = np.prod(
                    np.delete(rho, m)[None, :] ** np.delete(expo[mask], m, axis=1),
                    axis=1,
                )
                db_drho[m] = float(
                    re[mask] @ (em[mask] * rho[m] ** (em[mask] - 1) * partial)
                )
            db_dphi[m] = float(-(im * wgt[:, m]) @ amp)

    grad_rho = np.empty(n - 1)
    grad_phi = np.empty(n - 1)
    for m in range(1, n):
        grad_rho[m - 1] = (
            2.0 * omegas[m] * rho[m] / n2
            - 2.0 * rho[m] * a_val / n2**2
            - 4.0 * float(rc @ dt_drho[:, m]) / n2
            + 8.0 * rho[m] * float(rc @ t) / n2**2
            + db_drho[m] / n2**2
            - 4.0 * rho[m] * b_val / n2**3
        )
        grad_phi[m - 1] = (
            -4.0 * float(rc @ dt_dphi[:, m]) / n2 + db_dphi[m] / n2**2
        )
    grad_r = 2.0 * mode_omega * r - 4.0 * np.cos(theta) * t / n2
    grad_theta = 4.0 * r * np.sin(theta) * t / n2
    return np.concatenate([grad_rho, grad_phi, grad_r, grad_theta])


def field_critical(rho, phi, spec: ModelSpec, theta) -> np.ndarray:
    """Critical reduced field amplitudes r_s^c at fixed matter parameters.

    Each coupled pair must satisfy mu cos(phi_jk) cos(theta_s) >= 0 on the
    chosen branch, which keeps every r_s^c nonnegative.
    """
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if rho.shape != (spec.n,) or phi.shape != (spec.n,):
        raise ValidationError("rho and phi must cover all levels")
    if theta.shape != (spec.ell,):
        raise ValidationError("theta must cover all modes")
    for c in spec.couplings:
        signed = (
            c.mu
            * math.cos(phi[c.k - 1] - phi[c.j - 1])
            * math.cos(theta[c.mode - 1])
        )
        if signed < -1e-12:
            raise ValidationError(
                f"branch makes coupling ({c.j}, {c.k}) on mode {c.mode} negative"
            )
    n2 = float(rho @ rho)
    t = _coupling_sums(rho, phi, spec)
    r = 2.0 * t * np.cos(theta) / (np.asarray(spec.mode_freqs) * n2)
    return np.maximum(r, 0.0)


# ---------------------------------------------------------------------------
# ground-state search

def _pair_seeds(spec: ModelSpec, rho_max: float) -> list[np.ndarray]:
    """Analytic two-level minima of each coupled pair, used as starts."""
    seeds = []
    g = spec.gtable.get
    for c in spec.couplings:
        gap = spec.gap(c.j, c.k)
        geff = float(np.real(g(c.j, c.k, c.j, c.k)) + np.real(g(c.j, c.k, c.k, c.j)))
        x = c.mu / spec.mu_critical(c)
        u = x * x - (gap + geff) / gap
        if u <= 0.0:
            continue
        rel = math.sqrt(u / (u + 2.0))
        vec = np.zeros(spec.n - 1)
        if c.j == 1:
            vec[c.k - 2] = rel
        else:
            # pairs away from level 1 minimise at the amplitude bound
            vec[c.j - 2] = rho_max
            vec[c.k - 2] = rel * rho_max
        seeds.append(vec)
    return seeds


def _assemble_starts(spec, multistarts, rho_max, seed) -> np.ndarray:
    k = spec.n - 1
    starts = [np.full(k, 1e-3)]
    starts.extend(_pair_seeds(spec, rho_max))
    rng = np.random.default_rng(seed)
    while len(starts) < multistarts:
        starts.append(rng.uniform(0.0, min(3.0, rho_max), size=k))
    return np.asarray(starts)


def _branch_signs(branch, free_rho, spec):
    """Phase signs (sigma over levels, tau over modes) and mode sums."""
    rho = np.concatenate(([1.0], free_rho))
    sigma = branch.sigma
    s = np.zeros(spec.ell)
    for c in spec.couplings:
        s[c.mode - 1] += (
            c.mu * sigma[c.j - 1] * sigma[c.k - 1] * rho[c.j - 1] * rho[c.k - 1]
        )
    tau = tuple(1 if v >= 0.0 else -1 for v in s)
    return sigma, tau


def minimize_ground(
    spec: ModelSpec,
    *,
    multistarts: int = 8,
    tol: float = 1e-10,
    max_iter: int = 2000,
    rho_max: float = 10.0,
    seed: int = 0,
) -> GroundSolution:
    """Variational ground state over all phase branches.

    Every admissible discrete branch is minimised over rho in
    [0, rho_max]^(n-1) from multiple starts; the best candidate wins, with
    energy ties within 1e-12 resolved to the smaller amplitude norm and
    flagged as degenerate when the tied minima are distinct.
    """
    starts = _assemble_starts(spec, multistarts, rho_max, seed)
    n_starts = starts.shape[0]
    zeros = np.zeros(n_starts)
    candidates = []
    for branch in kernels.compile_branches(spec):
        e, x, conv = kernels.minimize_many(
            zeros, zeros, starts[:, None, :], branch.arrays,
            rho_max, tol, max_iter,
        )
        for i in range(n_starts):
            candidates.append((float(e[i]), x[i], bool(conv[i]), branch))

    best = None
    for cand in candidates:
        if best is None:
            best = cand
            continue
        de = cand[0] - best[0]
        close = abs(de) <= 1e-12
        same_pt = np.max(np.abs(cand[1] - best[1])) <= 1e-7
        if de < -1e-12:
            best = cand
        elif close and cand[1] @ cand[1] < best[1] @ best[1] - 1e-12:
            merged = (cand[2] or best[2]) if same_pt else cand[2]
            best = (cand[0], cand[1], merged, cand[3])
        elif close and same_pt and cand[2] and not best[2]:
            best = (best[0], best[1], True, best[3])
    e_best, rho_best, conv_best, branch_best = best

    # ties at the same amplitudes are sign-branch twins, not degeneracy;
    # separation must exceed flat-valley convergence scatter
    degenerate = False
    for cand in candidates:
        if abs(cand[0] - e_best) > 1e-12:
            continue
        if np.max(np.abs(cand[1] - rho_best)) > 1e-4:
            degenerate = True
            break

    sigma, tau = _branch_signs(branch_best, rho_best, spec)
    phi = tuple(0.0 if s > 0 else math.pi for s in sigma[1:])
    theta = tuple(0.0 if t > 0 else math.pi for t in tau)
    full_rho = np.concatenate(([1.0], rho_best))
    full_phi = np.concatenate(([0.0], phi))
    r = field_critical(full_rho, full_phi, spec, np.asarray(theta))
    params = CoherentParams(
        rho=tuple(float(v) for v in rho_best),
        phi=phi,
        r=tuple(float(v) for v in r),
        theta=theta,
    )
    region = "normal" if float(rho_best @ rho_best) == 0.0 else "collective"
    return GroundSolution(
        params=params,
        branch=(sigma, tau),
        energy=e_best,
        region=region,
        converged=conv_best,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# state distance

def state_overlap(a, b, n_atoms: int) -> complex:
    """Overlap of two product coherent states (alpha, gamma)."""
    alpha_a, gamma_a = (np.asarray(v, dtype=np.complex128) for v in a)
    alpha_b, gamma_b = (np.asarray(v, dtype=np.complex128) for v in b)
    if alpha_a.shape != alpha_b.shape:
        raise ValidationError("field dimensions differ")
    if gamma_a.shape != gamma_b.shape:
        raise ValidationError("matter dimensions differ")
    field = np.exp(
        -0.5
        * (
            np.vdot(alpha_a, alpha_a)
            + np.vdot(alpha_b, alpha_b)
            - 2.0 * np.vdot(alpha_a, alpha_b)
        )
    )
    matter_base = np.vdot(gamma_a, gamma_b) / (
        np.linalg.norm(gamma_a) * np.linalg.norm(gamma_b)
    )
    return complex(field * matter_base**n_atoms)


def bures_distance(a, b, n_atoms: int) -> float:
    """Bures distance between product coherent states, in [0, sqrt(2)]."""
    ov = state_overlap(a, b, n_atoms)
    return math.sqrt(2.0 * max(0.0, 1.0 - abs(ov) ** 2))
