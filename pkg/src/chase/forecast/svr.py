"""Epsilon-SVR dual solver (SMO with second-order working-set selection).

The dual is written over 2n variables ``beta = [alpha, alpha_star]``::

    min  1/2 beta' Q beta + p' beta
    s.t. z' beta = 0,  0 <= beta <= C

with ``z = [+1]*n + [-1]*n``, ``Q[i, j] = z_i z_j K[i mod n, j mod n]`` and
``p = [eps - y, eps + y]``. The regression function is
``f(x) = sum_i (alpha_i - alpha_star_i) K(x_i, x) - rho``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU = 1e-12


@dataclass
class DualSolution:
    coef: np.ndarray  # alpha - alpha_star, length n
    rho: float
    iterations: int
    converged: bool
    kkt_gap: float
    objective: float


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _select(G, beta, z, C, Qd, Krow, n):
    up = ((z > 0) & (beta < C)) | ((z < 0) & (beta > 0))
    low = ((z > 0) & (beta > 0)) | ((z < 0) & (beta < C))
    score = -z * G
    if not up.any() or not low.any():
        return -1, -1, 0.0
    cand = np.where(up, score, -np.inf)
    i = int(np.argmax(cand))
    gmax = cand[i]
    gmax2 = np.max(np.where(low, -score, -np.inf))
    gap = gmax + gmax2

    # second-order choice of j among violating partners
    grad_diff = gmax - score
    Ki = Krow(i)
    # Q_ii + Q_tt - 2 z_i z_t Q_it reduces to K_ii + K_tt - 2 K_it on the base kernel
    quad = Qd[i] + Qd - 2.0 * Ki
    quad = np.where(quad > 0, quad, TAU)
    mask = low & (grad_diff > 0)
    if not mask.any():
        return i, -1, gap
    obj = np.where(mask, -(grad_diff**2) / quad, np.inf)
    j = int(np.argmin(obj))
    return i, j, gap


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-3, max_iter: int = 10_000) -> DualSolution:
    n = len(y)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    idx = np.concatenate([np.arange(n), np.arange(n)])
    Kfull = K[np.ix_(idx, idx)]
    Qd = np.diag(Kfull).copy()
    beta = np.zeros(2 * n)
    G = p.copy()

    def Krow(i):
        return Kfull[i]

    iterations = 0
    converged = False
    gap = np.inf
    while iterations < max_iter:
        i, j, gap = _select(G, beta, z, C, Qd, Krow, n)
        if i < 0 or j < 0 or gap < tol:
            converged = True
            break
        iterations += 1
        Qi = z[i] * z * Kfull[i]
        Qj = z[j] * z * Kfull[j]
        old_i, old_j = beta[i], beta[j]
        if z[i] != z[j]:
            quad = Qd[i] + Qd[j] + 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            elif beta[i] < 0:
                beta[i] = 0.0
                beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            elif beta[j] > C:
                beta[j] = C
                beta[i] = C + diff
        else:
            quad = Qd[i] + Qd[j] - 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
            elif beta[j] < 0:
                beta[j] = 0.0
                beta[i] = total
            if total > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            elif beta[i] < 0:
                beta[i] = 0.0
                beta[j] = total
        G += Qi * (beta[i] - old_i) + Qj * (beta[j] - old_j)
    else:
        i, j, gap = _select(G, beta, z, C, Qd, Krow, n)
        converged = i < 0 or j < 0 or gap < tol

    rho = _rho(G, beta, z, C)
    coef = beta[:n] - beta[n:]
    objective = float(0.5 * beta @ (G - p) + p @ beta)
    return DualSolution(coef, rho, iterations, bool(converged), float(gap), objective)


def _rho(G, beta, z, C) -> float:
    yG = z * G
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (z < 0)) | (at_lower & (z > 0))
    lb_mask = (at_upper & (z > 0)) | (at_lower & (z < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)
