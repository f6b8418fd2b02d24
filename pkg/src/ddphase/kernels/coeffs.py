"""Compilation of a model into flat coefficient arrays for the kernels.

After eliminating the field variables at their critical values, the energy
per atom depends only on the level amplitudes rho (rho_1 = 1 fixed) and on a
discrete phase branch sigma_k = cos(phi_k) in {+1, -1}:

    E(rho; sigma) = sum_k omega_k rho_k^2 / N2
                    - (4 / N2^2) sum_s S_s^2 / Omega_s
                    + E_dd(rho; sigma),
    S_s = sum_{j<k} mu_jk^(s) sigma_j sigma_k rho_j rho_k,
    N2 = sum_k rho_k^2.

All phase dependence reduces to sign folds sigma_j sigma_k on the bilinear
couplings and on the odd interaction monomials, so a branch compiles into
plain arrays of monomial indices and signed coefficients.  Two of the
couplings may be tagged with a scan axis; the kernels then scale them by a
per-node strength (xa, xb).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..model import ModelSpec

#: number of arrays in the packed coefficient tuple
N_COEFF_ARRAYS = 19


@dataclass(frozen=True)
class BranchCoeffs:
    """One phase branch of a model, packed for the kernels.

    ``arrays`` holds, in order: omega (n,), mode_omega (L,), pair_j, pair_k,
    pair_mode, pair_mu, pair_axis (P,), quad_j, quad_k, quad_a (Q,), cub_j,
    cub_k, cub_p, cub_b (C,), quar_j, quar_k, quar_l, quar_m, quar_c (F,).
    Index arrays are 0-based into the full amplitude vector.
    """

    sigma: tuple[int, ...]
    index: int
    arrays: tuple[np.ndarray, ...]


def _dd_terms(spec: ModelSpec):
    """Interaction monomials of the energy surface at critical phases.

    Returns (quad, cub, quar) lists of (indices..., coefficient) built from
    the completed table; only the real parts survive at phases 0 or pi.
      quad: a * rho_j^2 rho_k^2                (phase independent)
      cub:  b * rho_j rho_k rho_p^2            (folds sigma_j sigma_k)
      quar: c * rho_j rho_k rho_l rho_m        (folds sigma_j..sigma_m)
    """
    g = spec.gtable.get
    n = spec.n
    quad, cub, quar = [], [], []
    for j in range(1, n + 1):
        for k in range(j + 1, n + 1):
            a = np.real(g(j, k, j, k)) + np.real(g(j, k, k, j))
            if a != 0.0:
                quad.append((j - 1, k - 1, float(a)))
            for p in range(1, n + 1):
                if p in (j, k):
                    continue
                b = 2.0 * (np.real(g(j, p, k, p)) + np.real(g(j, p, p, k)))
                if b != 0.0:
                    cub.append((j - 1, k - 1, p - 1, float(b)))
            for l in range(k + 1, n + 1):
                for m in range(l + 1, n + 1):
                    c = 2.0 * (
                        np.real(g(j, k, l, m))
                        + np.real(g(j, k, m, l))
                        + np.real(g(j, l, k, m))
                        + np.real(g(j, l, m, k))
                        + np.real(g(j, m, k, l))
                        + np.real(g(j, m, l, k))
                    )
                    if c != 0.0:
                        quar.append((j - 1, k - 1, l - 1, m - 1, float(c)))
    return quad, cub, quar


def _pack(spec: ModelSpec, sigma, quad, cub, quar, scan_pairs):
    omega = np.asarray(spec.omegas, dtype=np.float64)
    mode_omega = np.asarray(spec.mode_freqs, dtype=np.float64)
    pj, pk, pm, pmu, pax = [], [], [], [], []
    for c in spec.couplings:
        fold = sigma[c.j - 1] * sigma[c.k - 1]
        if (c.j, c.k) in scan_pairs:
            axis = scan_pairs.index((c.j, c.k))
            base = spec.mu_critical(c)
        else:
            axis = -1
            base = c.mu
        pj.append(c.j - 1)
        pk.append(c.k - 1)
        pm.append(c.mode - 1)
        pmu.append(fold * base)
        pax.append(axis)
    qj = [t[0] for t in quad]
    qk = [t[1] for t in quad]
    qa = [t[2] for t in quad]
    cj = [t[0] for t in cub]
    ck = [t[1] for t in cub]
    cp = [t[2] for t in cub]
    cb = [sigma[t[0]] * sigma[t[1]] * t[3] for t in cub]
    fj = [t[0] for t in quar]
    fk = [t[1] for t in quar]
    fl = [t[2] for t in quar]
    fm = [t[3] for t in quar]
    fc = [
        sigma[t[0]] * sigma[t[1]] * sigma[t[2]] * sigma[t[3]] * t[4] for t in quar
    ]

    def ia(x):
        return np.asarray(x, dtype=np.int64)

    def fa(x):
        return np.asarray(x, dtype=np.float64)

    return (
        omega,
        mode_omega,
        ia(pj),
        ia(pk),
        ia(pm),
        fa(pmu),
        ia(pax),
        ia(qj),
        ia(qk),
        fa(qa),
        ia(cj),
        ia(ck),
        ia(cp),
        fa(cb),
        ia(fj),
        ia(fk),
        ia(fl),
        ia(fm),
        fa(fc),
    )


def _signature(arrays) -> tuple:
    """Branch fingerprint: kernels see only these folded coefficients.

    The field term is a sum of squares S_s^2, so flipping every coupling sign
    within one mode leaves the energy unchanged; pair signs are normalised by
    the first coupling of each mode before hashing.
    """
    (_, mode_omega, pj, pk, pm, pmu, _, _, _, _, *_rest) = arrays
    cb = arrays[13]
    fc = arrays[18]
    norm = {}
    pair_signs = []
    for i in range(pmu.shape[0]):
        s = 1.0 if pmu[i] >= 0 else -1.0
        mode = int(pm[i])
        if mode not in norm:
            norm[mode] = s
        pair_signs.append(s * norm[mode])
    return (tuple(pair_signs), tuple(np.sign(cb)), tuple(np.sign(fc)))


def compile_branches(
    spec: ModelSpec, scan_pairs: tuple[tuple[int, int], ...] = ()
) -> list[BranchCoeffs]:
    """Enumerate the distinct phase branches of a model.

    Branches run over sigma in {+1,-1}^(n-1) (sigma_1 = +1 fixed) in a
    deterministic order; branches whose folded coefficients coincide are
    merged, keeping the lowest branch index.
    """
    quad, cub, quar = _dd_terms(spec)
    out = []
    seen = {}
    for index, tail in enumerate(product((1, -1), repeat=spec.n - 1)):
        sigma = (1,) + tail
        arrays = _pack(spec, sigma, quad, cub, quar, tuple(scan_pairs))
        sig = _signature(arrays)
        if sig in seen:
            continue
        seen[sig] = index
        out.append(BranchCoeffs(sigma=sigma, index=index, arrays=arrays))
    return out
