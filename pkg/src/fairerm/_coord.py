"""Compiled coordinate-update loops for the SVM dual and the Lasso.

Each sweep visits every box-constrained dual coordinate once with its
exact 1-D maximizer, then (when a fairness direction is active) takes
the exact soft-threshold step in the unbounded direction coefficient.
Every update is an exact 1-D optimum, so the objective never decreases;
a solve terminates when the largest single-update improvement over a
full sweep drops below tol.

The linear-kernel loop carries the explicit weight vector (O(d) per
update); the Gram loop carries the kernel expansion values (O(n) per
update).  Objective values are tracked per sweep from the maintained
state; callers re-derive the final state exactly from (alpha, rho).
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["solve_svm_linear", "solve_svm_gram", "solve_lasso_cd"]


@njit(cache=True, nogil=True)
def _rho_step(s, u_norm_sq, eps, rho_old):
    """Exact maximizer over rho of -0.5*rho^2*U - rho*s - eps*|rho|.

    Returns (new rho, objective improvement over rho_old).
    """
    t = abs(s) - eps
    rho_new = 0.0
    if t > 0.0:
        rho_new = (t if s < 0.0 else -t) / u_norm_sq
    def part(r):
        return -0.5 * r * r * u_norm_sq - r * s - eps * abs(r)
    return rho_new, part(rho_new) - part(rho_old)


@njit(cache=True, nogil=True)
def _alpha_step(alpha_i, g, kii, c):
    """Exact clipped 1-D maximizer for one box coordinate.

    g is the partial derivative at the current point, kii the curvature.
    Returns (delta alpha, objective improvement).
    """
    if kii > 0.0:
        da = alpha_i + g / kii
        if da < 0.0:
            da = 0.0
        elif da > c:
            da = c
        da -= alpha_i
        return da, g * da - 0.5 * kii * da * da
    # flat coordinate: the 1-D objective is linear, optimum sits on a box edge
    if g > 0.0:
        da = c - alpha_i
    elif g < 0.0:
        da = -alpha_i
    else:
        da = 0.0
    return da, g * da


@njit(cache=True, nogil=True)
def solve_svm_linear(x, y, u, u_norm_sq, c, eps, fair, tol, max_sweeps):
    """Hinge-loss SVM dual ascent in weight space (linear kernel).

    When fair is true the weight vector is w = sum alpha_i y_i x_i + rho*u
    and rho is re-optimized exactly once per sweep.  Returns
    (alpha, rho, sweeps run, converged flag, per-sweep objective values).
    """
    n, d = x.shape
    alpha = np.zeros(n)
    rho = 0.0
    w = np.zeros(d)
    xsq = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += x[i, j] * x[i, j]
        xsq[i] = acc

    trace = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        best = 0.0
        for i in range(n):
            fi = 0.0
            for j in range(d):
                fi += w[j] * x[i, j]
            g = 1.0 - y[i] * fi
            da, gain = _alpha_step(alpha[i], g, xsq[i], c)
            if da != 0.0:
                alpha[i] += da
                step = da * y[i]
                for j in range(d):
                    w[j] += step * x[i, j]
            if gain > best:
                best = gain
        if fair:
            s = 0.0
            for j in range(d):
                s += (w[j] - rho * u[j]) * u[j]
            rho_new, gain = _rho_step(s, u_norm_sq, eps, rho)
            if rho_new != rho:
                dr = rho_new - rho
                for j in range(d):
                    w[j] += dr * u[j]
                rho = rho_new
            if gain > best:
                best = gain
        wsq = 0.0
        for j in range(d):
            wsq += w[j] * w[j]
        asum = 0.0
        for i in range(n):
            asum += alpha[i]
        trace[sweep] = -0.5 * wsq + asum - eps * abs(rho)
        sweeps = sweep + 1
        if best < tol:
            converged = True
            break
    return alpha, rho, sweeps, converged, trace[:sweeps].copy()


@njit(cache=True, nogil=True)
def solve_svm_gram(k, y, v, u_norm_sq, c, eps, fair, tol, max_sweeps):
    """Hinge-loss SVM dual ascent on a precomputed Gram matrix.

    Maintains q_i = sum_j alpha_j y_j K_ij; decision values are
    q_i + rho * v_i.  Same return contract as solve_svm_linear.
    """
    n = k.shape[0]
    alpha = np.zeros(n)
    rho = 0.0
    q = np.zeros(n)

    trace = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        best = 0.0
        for i in range(n):
            g = 1.0 - y[i] * (q[i] + rho * v[i])
            da, gain = _alpha_step(alpha[i], g, k[i, i], c)
            if da != 0.0:
                alpha[i] += da
                step = da * y[i]
                for j in range(n):
                    q[j] += step * k[j, i]
            if gain > best:
                best = gain
        s = 0.0
        for i in range(n):
            s += alpha[i] * y[i] * v[i]
        if fair:
            rho_new, gain = _rho_step(s, u_norm_sq, eps, rho)
            rho = rho_new
            if gain > best:
                best = gain
        hsq = 0.0
        asum = 0.0
        for i in range(n):
            hsq += alpha[i] * y[i] * q[i]
            asum += alpha[i]
        trace[sweep] = (-0.5 * (hsq + 2.0 * rho * s + rho * rho * u_norm_sq)
                        + asum - eps * abs(rho))
        sweeps = sweep + 1
        if best < tol:
            converged = True
            break
    return alpha, rho, sweeps, converged, trace[:sweeps].copy()


@njit(cache=True, nogil=True)
def solve_lasso_cd(x, y, lam, tol, max_sweeps):
    """Cyclic coordinate descent for (1/n)*||y - Xw||^2 + lam*||w||_1.

    Exact soft-threshold update per coordinate on the maintained
    residual.  Returns (w, sweeps, converged, per-sweep objectives).
    """
    n, d = x.shape
    w = np.zeros(d)
    r = y.copy()  # residual y - Xw
    a = np.empty(d)  # curvature (2/n) * ||x_j||^2
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc += x[i, j] * x[i, j]
        a[j] = 2.0 * acc / n

    trace = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        biggest = 0.0
        for j in range(d):
            if a[j] <= 0.0:
                continue  # all-zero column stays at weight 0
            dot = 0.0
            for i in range(n):
                dot += x[i, j] * r[i]
            b = 2.0 * dot / n + a[j] * w[j]
            t = abs(b) - lam
            w_new = 0.0
            if t > 0.0:
                w_new = (t if b > 0.0 else -t) / a[j]
            dw = w_new - w[j]
            if dw != 0.0:
                for i in range(n):
                    r[i] -= dw * x[i, j]
                w[j] = w_new
            if abs(dw) > biggest:
                biggest = abs(dw)
        rss = 0.0
        for i in range(n):
            rss += r[i] * r[i]
        l1 = 0.0
        for j in range(d):
            l1 += abs(w[j])
        trace[sweep] = rss / n + lam * l1
        sweeps = sweep + 1
        if biggest < tol:
            converged = True
            break
    return w, sweeps, converged, trace[:sweeps].copy()
