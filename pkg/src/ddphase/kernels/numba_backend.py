"""Numba kernel backend: per-node minimisation compiled with @njit/prange."""

from __future__ import annotations

import numpy as np
from numba import njit, prange

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60
TIE_TOL = 1e-12
SAME_POINT_TOL = 1e-7
STEP_FLOOR = 1e-15
FLOOR_PG = 1e-6


@njit(cache=True)
def _energy(rho, xa, xb, omega, mode_omega, pj, pk, pm, pmu, pax,
            qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc):
    n = rho.shape[0]
    n2 = 0.0
    a = 0.0
    for i in range(n):
        n2 += rho[i] * rho[i]
        a += omega[i] * rho[i] * rho[i]
    b = 0.0
    n_modes = mode_omega.shape[0]
    if pmu.shape[0] > 0:
        s = np.zeros(n_modes)
        for i in range(pmu.shape[0]):
            mu = pmu[i]
            if pax[i] == 0:
                mu *= xa
            elif pax[i] == 1:
                mu *= xb
            s[pm[i]] += mu * rho[pj[i]] * rho[pk[i]]
        for s_idx in range(n_modes):
            b -= 4.0 * s[s_idx] * s[s_idx] / mode_omega[s_idx]
    for i in range(qa.shape[0]):
        b += qa[i] * rho[qj[i]] ** 2 * rho[qk[i]] ** 2
    for i in range(cb.shape[0]):
        b += cb[i] * rho[cj[i]] * rho[ck[i]] * rho[cp[i]] ** 2
    for i in range(fc.shape[0]):
        b += fc[i] * rho[fj[i]] * rho[fk[i]] * rho[fl[i]] * rho[fm[i]]
    return a / n2 + b / (n2 * n2)


@njit(cache=True)
def _energy_grad(rho, grad, xa, xb, omega, mode_omega, pj, pk, pm, pmu, pax,
                 qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc):
    """Fills grad (n-1,) over the free components; returns the energy."""
    n = rho.shape[0]
    n2 = 0.0
    a = 0.0
    for i in range(n):
        n2 += rho[i] * rho[i]
        a += omega[i] * rho[i] * rho[i]
    b = 0.0
    db = np.zeros(n)
    n_modes = mode_omega.shape[0]
    if pmu.shape[0] > 0:
        s = np.zeros(n_modes)
        mu_eff = np.empty(pmu.shape[0])
        for i in range(pmu.shape[0]):
            mu = pmu[i]
            if pax[i] == 0:
                mu *= xa
            elif pax[i] == 1:
                mu *= xb
            mu_eff[i] = mu
            s[pm[i]] += mu * rho[pj[i]] * rho[pk[i]]
        for s_idx in range(n_modes):
            b -= 4.0 * s[s_idx] * s[s_idx] / mode_omega[s_idx]
        for i in range(pmu.shape[0]):
            t = -8.0 * s[pm[i]] / mode_omega[pm[i]] * mu_eff[i]
            db[pj[i]] += t * rho[pk[i]]
            db[pk[i]] += t * rho[pj[i]]
    for i in range(qa.shape[0]):
        rj = rho[qj[i]]
        rk = rho[qk[i]]
        b += qa[i] * rj * rj * rk * rk
        db[qj[i]] += 2.0 * qa[i] * rj * rk * rk
        db[qk[i]] += 2.0 * qa[i] * rj * rj * rk
    for i in range(cb.shape[0]):
        rj = rho[cj[i]]
        rk = rho[ck[i]]
        rp = rho[cp[i]]
        b += cb[i] * rj * rk * rp * rp
        db[cj[i]] += cb[i] * rk * rp * rp
        db[ck[i]] += cb[i] * rj * rp * rp
        db[cp[i]] += 2.0 * cb[i] * rj * rk * rp
    for i in range(fc.shape[0]):
        rj = rho[fj[i]]
        rk = rho[fk[i]]
        rl = rho[fl[i]]
        rm = rho[fm[i]]
        b += fc[i] * rj * rk * rl * rm
        db[fj[i]] += fc[i] * rk * rl * rm
        db[fk[i]] += fc[i] * rj * rl * rm
        db[fl[i]] += fc[i] * rj * rk * rm
        db[fm[i]] += fc[i] * rj * rk * rl
    inv2 = 1.0 / (n2 * n2)
    for m_i in range(1, n):
        grad[m_i - 1] = (
            2.0 * omega[m_i] * rho[m_i] / n2
            - 2.0 * rho[m_i] * a * inv2
            + db[m_i] * inv2
            - 4.0 * rho[m_i] * b * inv2 / n2
        )
    return a / n2 + b * inv2


@njit(cache=True)
def _minimize_one(start, xa, xb, rho_max, gtol, max_iter,
                  omega, mode_omega, pj, pk, pm, pmu, pax,
                  qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc,
                  out_x):
    k = start.shape[0]
    n = k + 1
    rho = np.empty(n)
    rho[0] = 1.0
    x = np.empty(k)
    xn = np.empty(k)
    g = np.empty(k)
    gn = np.empty(k)
    for i in range(k):
        v = start[i]
        if v < 0.0:
            v = 0.0
        elif v > rho_max:
            v = rho_max
        x[i] = v
        rho[i + 1] = v
    f = _energy_grad(rho, g, xa, xb, omega, mode_omega, pj, pk, pm, pmu, pax,
                     qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc)
    gnorm = 0.0
    for i in range(k):
        gnorm += g[i] * g[i]
    gnorm = np.sqrt(gnorm)
    alpha = 0.1 / (gnorm if gnorm > 1.0 else 1.0)
    conv = False
    for _ in range(max_iter):
        pg_inf = 0.0
        for i in range(k):
            pgi = g[i]
            if x[i] <= 0.0 and pgi > 0.0:
                pgi = 0.0
            elif x[i] >= rho_max and pgi < 0.0:
                pgi = 0.0
            if abs(pgi) > pg_inf:
                pg_inf = abs(pgi)
        if pg_inf <= gtol:
            conv = True
            break
        fn = 0.0
        for _bt in range(MAX_BACKTRACKS):
            for i in range(k):
                v = x[i] - alpha * g[i]
                if v < 0.0:
                    v = 0.0
                elif v > rho_max:
                    v = rho_max
                xn[i] = v
                rho[i + 1] = v
            fn = _energy(rho, xa, xb, omega, mode_omega, pj, pk, pm, pmu, pax,
                         qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc)
            lin = 0.0
            for i in range(k):
                lin += g[i] * (xn[i] - x[i])
            if fn <= f + ARMIJO_C1 * lin:
                break
            alpha *= 0.5
        sts = 0.0
        for i in range(k):
            d = xn[i] - x[i]
            sts += d * d
        if sts == 0.0:
            conv = True
            break
        # steps at the rounding floor of the energy cannot descend further
        scale = 1.0
        for i in range(k):
            if abs(x[i]) > scale:
                scale = abs(x[i])
        if sts <= (STEP_FLOOR * scale) ** 2 and pg_inf <= FLOOR_PG:
            conv = True
            break
        fn = _energy_grad(rho, gn, xa, xb, omega, mode_omega, pj, pk, pm, pmu,
                          pax, qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc)
        sty = 0.0
        for i in range(k):
            sty += (xn[i] - x[i]) * (gn[i] - g[i])
        if sty > 1e-300:
            alpha = sts / sty
        else:
            alpha = alpha * 2.0
        if alpha < 1e-12:
            alpha = 1e-12
        elif alpha > 1e8:
            alpha = 1e8
        for i in range(k):
            x[i] = xn[i]
            g[i] = gn[i]
        f = fn
    if not conv:
        pg_inf = 0.0
        for i in range(k):
            pgi = g[i]
            if x[i] <= 0.0 and pgi > 0.0:
                pgi = 0.0
            elif x[i] >= rho_max and pgi < 0.0:
                pgi = 0.0
            if abs(pgi) > pg_inf:
                pg_inf = abs(pgi)
        conv = pg_inf <= gtol
    for i in range(k):
        out_x[i] = x[i]
    return f, conv


@njit(cache=True, parallel=True)
def _minimize_many(xa, xb, starts, rho_max, gtol, max_iter,
                   omega, mode_omega, pj, pk, pm, pmu, pax,
                   qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc):
    m, n_starts, k = starts.shape
    best_e = np.zeros(m)
    best_x = np.zeros((m, k))
    best_conv = np.ones(m, dtype=np.bool_)
    for node in prange(m):
        cand = np.empty(k)
        b_e = 0.0
        b_n2 = 0.0
        b_conv = True
        for s in range(n_starts):
            e, cv = _minimize_one(
                starts[node, s], xa[node], xb[node], rho_max, gtol, max_iter,
                omega, mode_omega, pj, pk, pm, pmu, pax,
                qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc, cand)
            n2 = 0.0
            for i in range(k):
                n2 += cand[i] * cand[i]
            better = e < b_e - TIE_TOL
            close = abs(e - b_e) <= TIE_TOL
            same_pt = True
            for i in range(k):
                if abs(cand[i] - best_x[node, i]) > SAME_POINT_TOL:
                    same_pt = False
                    break
            if better:
                b_e = e
                b_n2 = n2
                b_conv = cv
                for i in range(k):
                    best_x[node, i] = cand[i]
            elif close and n2 < b_n2 - TIE_TOL:
                b_e = e
                b_n2 = n2
                b_conv = (b_conv or cv) if same_pt else cv
                for i in range(k):
                    best_x[node, i] = cand[i]
            elif close and same_pt and cv:
                b_conv = True
        best_e[node] = b_e
        best_conv[node] = b_conv
    return best_e, best_x, best_conv


def minimize_many(xa, xb, starts, co, rho_max, gtol, max_iter):
    """Same contract as the numpy backend; see numpy_backend.minimize_many."""
    xa = np.ascontiguousarray(xa, dtype=np.float64)
    xb = np.ascontiguousarray(xb, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    return _minimize_many(xa, xb, starts, float(rho_max), float(gtol),
                          int(max_iter), *co)


@njit(cache=True)
def _energy_many(free, xa, xb, omega, mode_omega, pj, pk, pm, pmu, pax,
                 qj, qk, qa, cj, ck, cp, cb, fj, fk, fl, fm, fc):
    m, k = free.shape
    out = np.empty(m)
    rho = np.empty(k + 1)
    rho[0] = 1.0
    for r in range(m):
        for i in range(k):
            rho[i + 1] = free[r, i]
        out[r] = _energy(rho, xa[r], xb[r], omega, mode_omega, pj, pk, pm,
                         pmu, pax, qj, qk, qa, cj, ck, cp, cb,
                         fj, fk, fl, fm, fc)
    return out


def energy_many(free, xa, xb, co):
    """Energy at free amplitudes (M, n-1) with per-node strengths."""
    free = np.ascontiguousarray(free, dtype=np.float64)
    xa = np.ascontiguousarray(xa, dtype=np.float64)
    xb = np.ascontiguousarray(xb, dtype=np.float64)
    return _energy_many(free, xa, xb, *co)


def energy_grad_many(free, xa, xb, co):
    """Energy and gradient at free amplitudes (M, n-1)."""
    free = np.ascontiguousarray(free, dtype=np.float64)
    m, k = free.shape
    energies = np.empty(m)
    grads = np.empty((m, k))
    rho = np.empty(k + 1)
    rho[0] = 1.0
    xa = np.asarray(xa, dtype=np.float64)
    xb = np.asarray(xb, dtype=np.float64)
    for r in range(m):
        rho[1:] = free[r]
        energies[r] = _energy_grad(rho, grads[r], xa[r], xb[r], *co)
    return energies, grads
