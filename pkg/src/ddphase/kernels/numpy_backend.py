"""Pure-numpy kernel backend: vectorised over every node and start at once."""

from __future__ import annotations

import numpy as np

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60
TIE_TOL = 1e-12
SAME_POINT_TOL = 1e-7
STEP_FLOOR = 1e-15
FLOOR_PG = 1e-6


def _mu_eff(pmu, pax, xa, xb):
    """Per-row effective coupling strengths, (R, P)."""
    scale = np.ones((xa.shape[0], pmu.shape[0]))
    if pmu.shape[0]:
        scale[:, pax == 0] = xa[:, None]
        scale[:, pax == 1] = xb[:, None]
    return pmu[None, :] * scale


def _energy_rows(rho, xa, xb, co):
    """Reduced energy for rho (R, n) with rho[:, 0] = 1; returns (R,)."""
    (omega, mode_omega, pj, pk, pm, pmu, pax,
     qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc) = co
    n2 = np.sum(rho * rho, axis=1)
    a = rho * rho @ omega
    b = np.zeros_like(a)
    if pmu.shape[0]:
        mu = _mu_eff(pmu, pax, xa, xb)
        s = np.zeros((rho.shape[0], mode_omega.shape[0]))
        for i in range(pmu.shape[0]):
            s[:, pm[i]] += mu[:, i] * rho[:, pj[i]] * rho[:, pk[i]]
        b -= 4.0 * (s * s) @ (1.0 / mode_omega)
    for i in range(qa.shape[0]):
        b += qa[i] * rho[:, qj[i]] ** 2 * rho[:, qk[i]] ** 2
    for i in range(cb.shape[0]):
        b += cb[i] * rho[:, cj[i]] * rho[:, ck[i]] * rho[:, cp[i]] ** 2
    for i in range(fc.shape[0]):
        b += fc[i] * rho[:, fj[i]] * rho[:, fk[i]] * rho[:, fl[i]] * rho[:, fm[i]]
    return a / n2 + b / n2**2


def _energy_grad_rows(rho, xa, xb, co):
    """Energy and gradient over the free components; returns (E, G (R, n-1))."""
    (omega, mode_omega, pj, pk, pm, pmu, pax,
     qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc) = co
    rows, n = rho.shape
    n2 = np.sum(rho * rho, axis=1)
    a = rho * rho @ omega
    b = np.zeros(rows)
    da = 2.0 * rho[:, 1:] * omega[None, 1:]
    db = np.zeros((rows, n - 1))

    def add(level, val):
        # level indexes the full vector; level 0 is pinned
        if level > 0:
            db[:, level - 1] += val

    if pmu.shape[0]:
        mu = _mu_eff(pmu, pax, xa, xb)
        s = np.zeros((rows, mode_omega.shape[0]))
        for i in range(pmu.shape[0]):
            s[:, pm[i]] += mu[:, i] * rho[:, pj[i]] * rho[:, pk[i]]
        b -= 4.0 * (s * s) @ (1.0 / mode_omega)
        for i in range(pmu.shape[0]):
            t = -8.0 * s[:, pm[i]] / mode_omega[pm[i]] * mu[:, i]
            add(pj[i], t * rho[:, pk[i]])
            add(pk[i], t * rho[:, pj[i]])
    for i in range(qa.shape[0]):
        rj, rk = rho[:, qj[i]], rho[:, qk[i]]
        b += qa[i] * rj**2 * rk**2
        add(qj[i], 2.0 * qa[i] * rj * rk**2)
        add(qk[i], 2.0 * qa[i] * rj**2 * rk)
    for i in range(cb.shape[0]):
        rj, rk, rp = rho[:, cj[i]], rho[:, ck[i]], rho[:, cp[i]]
        b += cb[i] * rj * rk * rp**2
        add(cj[i], cb[i] * rk * rp**2)
        add(ck[i], cb[i] * rj * rp**2)
        add(cp[i], 2.0 * cb[i] * rj * rk * rp)
    for i in range(fc.shape[0]):
        rj, rk, rl, rm = (rho[:, fj[i]], rho[:, fk[i]], rho[:, fl[i]], rho[:, fm[i]])
        b += fc[i] * rj * rk * rl * rm
        add(fj[i], fc[i] * rk * rl * rm)
        add(fk[i], fc[i] * rj * rl * rm)
        add(fl[i], fc[i] * rj * rk * rm)
        add(fm[i], fc[i] * rj * rk * rl)
    energy = a / n2 + b / n2**2
    grad = (
        da / n2[:, None]
        - 2.0 * rho[:, 1:] * (a / n2**2)[:, None]
        + db / (n2**2)[:, None]
        - 4.0 * rho[:, 1:] * (b / n2**3)[:, None]
    )
    return energy, grad


def _with_anchor(free):
    rho = np.empty((free.shape[0], free.shape[1] + 1))
    rho[:, 0] = 1.0
    rho[:, 1:] = free
    return rho


def energy_many(free, xa, xb, co):
    """Energy at free amplitudes (M, n-1) with per-node strengths."""
    return _energy_rows(_with_anchor(free), xa, xb, co)


def energy_grad_many(free, xa, xb, co):
    """Energy and gradient at free amplitudes (M, n-1)."""
    return _energy_grad_rows(_with_anchor(free), xa, xb, co)


def _projected_grad_inf(x, g, rho_max):
    pg = g.copy()
    pg[(x <= 0.0) & (g > 0.0)] = 0.0
    pg[(x >= rho_max) & (g < 0.0)] = 0.0
    return np.max(np.abs(pg), axis=1)


def minimize_many(xa, xb, starts, co, rho_max, gtol, max_iter):
    """Projected Barzilai-Borwein descent from every start of every node.

    Parameters
    ----------
    xa, xb : (M,) per-node strengths for the two scan axes (ignored by
        couplings with no axis tag).
    starts : (M, S, n-1) starting amplitudes.
    co : packed coefficient arrays of one branch.
    rho_max : box bound; the search domain is [0, rho_max]^(n-1).
    gtol : infinity-norm tolerance on the projected gradient.
    max_iter : iteration cap per start.

    Returns
    -------
    (E, rho, conv) : best energy (M,), amplitudes (M, n-1), bool (M,).
    The zero state enters as an implicit candidate with exactly E = 0, and
    ties within 1e-12 resolve to the smaller amplitude norm, so the normal
    region is exact.
    """
    m, n_starts, k = starts.shape
    rows = m * n_starts
    x = np.clip(starts.reshape(rows, k).astype(np.float64), 0.0, rho_max)
    xa_r = np.repeat(np.asarray(xa, dtype=np.float64), n_starts)
    xb_r = np.repeat(np.asarray(xb, dtype=np.float64), n_starts)
    f, g = energy_grad_many(x, xa_r, xb_r, co)
    alpha = 0.1 / np.maximum(1.0, np.linalg.norm(g, axis=1))
    conv = np.zeros(rows, dtype=bool)
    active = _projected_grad_inf(x, g, rho_max) > gtol
    conv[~active] = True
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi, gi, fi, ai = x[idx], g[idx], f[idx], alpha[idx]
        xn = np.clip(xi - ai[:, None] * gi, 0.0, rho_max)
        fn = energy_many(xn, xa_r[idx], xb_r[idx], co)
        for _bt in range(MAX_BACKTRACKS):
            lin = np.einsum("ij,ij->i", gi, xn - xi)
            bad = fn > fi + ARMIJO_C1 * lin
            if not np.any(bad):
                break
            ai[bad] *= 0.5
            xn[bad] = np.clip(xi[bad] - ai[bad, None] * gi[bad], 0.0, rho_max)
            fn[bad] = energy_many(xn[bad], xa_r[idx][bad], xb_r[idx][bad], co)
        fn, gn = energy_grad_many(xn, xa_r[idx], xb_r[idx], co)
        step = xn - xi
        sts = np.einsum("ij,ij->i", step, step)
        sty = np.einsum("ij,ij->i", step, gn - gi)
        new_alpha = np.where(sty > 1e-300, sts / np.maximum(sty, 1e-300), ai * 2.0)
        alpha[idx] = np.clip(new_alpha, 1e-12, 1e8)
        x[idx], f[idx], g[idx] = xn, fn, gn
        # steps at the rounding floor of the energy cannot descend further
        scale = np.maximum(1.0, np.max(np.abs(xi), axis=1))
        floor = (sts <= (STEP_FLOOR * scale) ** 2) & (
            _projected_grad_inf(xi, gi, rho_max) <= FLOOR_PG
        )
        done = (_projected_grad_inf(xn, gn, rho_max) <= gtol) | (sts == 0.0) | floor
        conv[idx[done]] = True
        active[idx[done]] = False
    # deterministic per-node reduction with the implicit zero candidate
    e_all = f.reshape(m, n_starts)
    n2_all = np.sum(x * x, axis=1).reshape(m, n_starts)
    x_all = x.reshape(m, n_starts, k)
    conv_all = conv.reshape(m, n_starts)
    best_e = np.zeros(m)
    best_n2 = np.zeros(m)
    best_x = np.zeros((m, k))
    best_conv = np.ones(m, dtype=bool)
    for s in range(n_starts):
        close = np.abs(e_all[:, s] - best_e) <= TIE_TOL
        better = e_all[:, s] < best_e - TIE_TOL
        tie = close & (n2_all[:, s] < best_n2 - TIE_TOL)
        same_pt = np.max(np.abs(x_all[:, s] - best_x), axis=1) <= SAME_POINT_TOL
        take = better | tie
        merged = np.where(
            better,
            conv_all[:, s],
            np.where(same_pt, conv_all[:, s] | best_conv, conv_all[:, s]),
        )
        best_conv[close & same_pt & conv_all[:, s]] = True
        best_conv[take] = merged[take]
        best_e[take] = e_all[take, s]
        best_n2[take] = n2_all[take, s]
        best_x[take] = x_all[take, s]
    return best_e, best_x, best_conv
