"""Inner loops of the two-time integrator (numba)."""
import numpy as np
from numba import njit


@njit(cache=True)
def horner(c, x):
    y = c[c.shape[0] - 1]
    for k in range(c.shape[0] - 2, -1, -1):
        y = y * x + c[k]
    return y


@njit(cache=True)
def memory_sweep(i, dt, R, C, Q, M, nu1, nu2, GR, GC, GQ, PC, PQ):
    """Memory integrals for row i and every column j <= i (trapezoid rule).

    GR[j] = int_{t_j}^{s_i} R(u,t_j) R(s_i,u) nu''(C(s_i,u)) du
    GC[j] = int_0^{s_i} C(u,t_j) R(s_i,u) nu''(C(s_i,u)) du
            + int_0^{t_j} nu'(C(s_i,u)) R(t_j,u) du
    GQ[j] = as GC with Q in place of C (nu'' is still evaluated on C)

    Row i of R, C, Q (and M[i]) must hold the current iterate.  One pass over
    the stored rows; every history row is read once.  Returns
    int_0^{s_i} M(u) R(s_i,u) nu''(C(s_i,u)) du.
    """
    oi = i * (i + 1) // 2
    a = np.empty(i + 1)
    b = np.empty(i + 1)
    vC = np.empty(i + 1)
    vQ = np.empty(i + 1)
    for k in range(i + 1):
        c = C[oi + k]
        wk = R[oi + k] * horner(nu2, c)
        a[k] = wk
        b[k] = wk
        vC[k] = horner(nu1, c)
        vQ[k] = horner(nu1, Q[oi + k])
    w0 = a[0]
    a[0] *= 0.5
    a[i] *= 0.5
    b[i] *= 0.5
    vC[0] *= 0.5
    vQ[0] *= 0.5

    gm = 0.0
    for j in range(i + 1):
        GR[j] = 0.0
        GC[j] = 0.0
        GQ[j] = 0.0
        gm += a[j] * M[j]
    for j in range(i + 1):
        off = j * (j + 1) // 2
        aj = a[j]
        bj = b[j]
        dc = 0.0
        dq = 0.0
        pc = 0.0
        pq = 0.0
        for k in range(j):
            rr = R[off + k]
            cc = C[off + k]
            qq = Q[off + k]
            GR[k] += bj * rr
            GC[k] += aj * cc
            GQ[k] += aj * qq
            dc += a[k] * cc
            dq += a[k] * qq
            pc += rr * vC[k]
            pq += rr * vQ[k]
        rjj = R[off + j]
        GR[j] += bj * rjj
        GC[j] += aj * C[off + j] + dc
        GQ[j] += aj * Q[off + j] + dq
        if j > 0:
            pc += 0.5 * rjj * vC[j]
            pq += 0.5 * rjj * vQ[j]
        PC[j] = pc
        PQ[j] = pq
    for j in range(i + 1):
        GC[j] = dt * (GC[j] + PC[j])
        GQ[j] = dt * (GQ[j] + PQ[j])
    # lower end of int_{t_j}^{s_i} carries weight 1/2
    for j in range(i):
        wj = w0 if j == 0 else a[j]
        GR[j] = dt * (GR[j] - 0.5 * wj * R[j * (j + 1) // 2 + j])
    GR[i] = 0.0
    return dt * gm


@njit(cache=True)
def _fill_row(i, dt, mu, beta2, h, prev, F, G, Mh, out, forced):
    denom = 1.0 + 0.5 * dt * mu
    for j in range(i):
        out[j] = (prev[j] + 0.5 * dt * (F[j] + beta2 * G[j] + forced * h * Mh[j])) / denom


@njit(cache=True)
def _trapz_psi(i, dt, psi_c, rowC, rowR):
    s = 0.0
    for j in range(i + 1):
        v = horner(psi_c, rowC[j]) * rowR[j]
        if j == 0 or j == i:
            v *= 0.5
        s += v
    return dt * s


@njit(cache=True)
def solve_row(i, dt, beta2, h, hard, r, kconst, fp_c, fpp_c, psi_c,
              prevR, prevC, prevQ, FR, FC, FQ, Mh,
              M_prev, FM_prev, D_prev, FD_prev, K_prev, FK_prev,
              GR, GC, GQ, GM, rowR, rowC, rowQ, guess, tol, maxit):
    """Trapezoid corrector for row i with the memory integrals frozen.

    The only implicit scalar is the multiplier mu(s_i) (hard) or K(s_i) (soft);
    it is solved to ``tol`` with the row recomputed at each trial value.
    Returns (mu, M_i, D_i, K_i, I_psi, iterations, converged).
    """
    rowR[i] = 1.0
    GQd = GQ[i]
    if hard:
        rowC[i] = r
        mu = guess
        it = 0
        converged = False
        Mi = 0.0
        Ipsi = 0.0
        while it < maxit:
            it += 1
            _fill_row(i, dt, mu, beta2, h, prevR, FR, GR, Mh, rowR, 0.0)
            _fill_row(i, dt, mu, beta2, h, prevC, FC, GC, Mh, rowC, 1.0)
            Mi = (M_prev + 0.5 * dt * (FM_prev + h + beta2 * GM)) / (1.0 + 0.5 * dt * mu)
            Ipsi = _trapz_psi(i, dt, psi_c, rowC, rowR)
            mu_new = (kconst + 2.0 * beta2 * Ipsi + 2.0 * h * Mi) / (2.0 * r)
            d = mu_new - mu
            mu = mu_new
            if abs(d) <= tol * max(1.0, abs(mu)):
                converged = True
                break
        # final row consistent with the final mu
        _fill_row(i, dt, mu, beta2, h, prevR, FR, GR, Mh, rowR, 0.0)
        _fill_row(i, dt, mu, beta2, h, prevC, FC, GC, Mh, rowC, 1.0)
        Mi = (M_prev + 0.5 * dt * (FM_prev + h + beta2 * GM)) / (1.0 + 0.5 * dt * mu)
        Ipsi = _trapz_psi(i, dt, psi_c, rowC, rowR)
        Ki = r
    else:
        K = guess
        it = 0
        converged = False
        Mi = 0.0
        Ipsi = 0.0
        mu = 0.0
        while it < maxit:
            it += 1
            mu = horner(fp_c, K)
            rowC[i] = K
            _fill_row(i, dt, mu, beta2, h, prevR, FR, GR, Mh, rowR, 0.0)
            _fill_row(i, dt, mu, beta2, h, prevC, FC, GC, Mh, rowC, 1.0)
            Mi = (M_prev + 0.5 * dt * (FM_prev + h + beta2 * GM)) / (1.0 + 0.5 * dt * mu)
            Ipsi = _trapz_psi(i, dt, psi_c, rowC, rowR)
            FK = -2.0 * mu * K + 1.0 + 2.0 * beta2 * Ipsi + 2.0 * h * Mi
            res = K - K_prev - 0.5 * dt * (FK_prev + FK)
            jac = 1.0 + dt * (horner(fpp_c, K) * K + mu)
            step = res / jac
            K -= step
            if abs(step) <= tol * max(1.0, abs(K)):
                converged = True
                break
        mu = horner(fp_c, K)
        rowC[i] = K
        _fill_row(i, dt, mu, beta2, h, prevR, FR, GR, Mh, rowR, 0.0)
        _fill_row(i, dt, mu, beta2, h, prevC, FC, GC, Mh, rowC, 1.0)
        Mi = (M_prev + 0.5 * dt * (FM_prev + h + beta2 * GM)) / (1.0 + 0.5 * dt * mu)
        Ipsi = _trapz_psi(i, dt, psi_c, rowC, rowR)
        Ki = K
    # Q shares mu, the forcing h M(t_j) and the frozen memory terms
    _fill_row(i, dt, mu, beta2, h, prevQ, FQ, GQ, Mh, rowQ, 1.0)
    # D' = 2 dQ/ds at the diagonal
    Di = (D_prev + 0.5 * dt * FD_prev + dt * (h * Mi + beta2 * GQd)) / (1.0 + dt * mu)
    rowQ[i] = Di
    return mu, Mi, Di, Ki, Ipsi, it, converged
