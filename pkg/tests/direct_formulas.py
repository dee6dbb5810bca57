"""Loop-based evaluations of the variance and adjustment formulas.

Written independently of the package: plain Python lists, ``math.fsum``
and the normal-equations oracle only. Tests compare the vectorised code
against these.
"""
from __future__ import annotations

import math

from crtinfer.oracle import solve_normal_equations


def _mean(xs):
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def zeta_system(C, A, S, pi, tau):
    """(within, heterogeneity, assignment) for per-cluster values C."""
    G = len(C)
    strata = sorted(set(S), key=str)
    mu = {a: _mean(c for c, x in zip(C, A) if x == a) for a in (0, 1)}
    mu_sq = {a: _mean(c * c for c, x in zip(C, A) if x == a) for a in (0, 1)}
    mu_s = {(s, a): _mean(c for c, x, t in zip(C, A, S) if x == a and t == s) for s in strata for a in (0, 1)}
    w = {s: sum(1 for t in S if t == s) / G for s in strata}
    within = (mu_sq[1] - math.fsum(w[s] * mu_s[s, 1] ** 2 for s in strata)) / pi + (
        mu_sq[0] - math.fsum(w[s] * mu_s[s, 0] ** 2 for s in strata)
    ) / (1 - pi)
    het = math.fsum(w[s] * ((mu_s[s, 1] - mu[1]) - (mu_s[s, 0] - mu[0])) ** 2 for s in strata)
    assign = math.fsum(
        tau[s] * w[s] * ((mu_s[s, 1] - mu[1]) / pi + (mu_s[s, 0] - mu[0]) / (1 - pi)) ** 2 for s in strata
    )
    return within, het, assign


def var_theta1(ybar, A, S, pi, tau):
    return sum(zeta_system(ybar, A, S, pi, tau))


def hat_y(ybar, N, A):
    G = len(ybar)
    nbar = math.fsum(N) / G
    c = {}
    for a in (0, 1):
        num = math.fsum(y * n for y, n, x in zip(ybar, N, A) if x == a)
        den = math.fsum(n for n, x in zip(N, A) if x == a)
        c[a] = num / den
    return [(n / nbar) * (y - c[x]) for y, n, x in zip(ybar, N, A)]


def var_theta2(ybar, N, A, S, pi, tau):
    return sum(zeta_system(hat_y(ybar, N, A), A, S, pi, tau))


def var_hc(ybar, A):
    G = len(ybar)
    out = 0.0
    for a in (0, 1):
        ys = [y for y, x in zip(ybar, A) if x == a]
        m = _mean(ys)
        out += _mean((y - m) ** 2 for y in ys) / (len(ys) / G)
    return out


def var_cr(ybar, M, N, A):
    """Cluster-robust variance from individual rows reconstructed as cluster means."""
    G = len(ybar)
    out = 0.0
    for a in (0, 1):
        num = math.fsum(y * n for y, n, x in zip(ybar, N, A) if x == a)
        den = math.fsum(n for n, x in zip(N, A) if x == a)
        c = num / den
        meat = math.fsum(((n / m) * m * (y - c)) ** 2 for y, m, n, x in zip(ybar, M, N, A) if x == a) / G
        out += meat / (den / G) ** 2
    return out


def finpop(y1_lists, y0_lists, pi):
    G = len(y1_lists)
    N = sum(len(v) for v in y1_lists)
    m1 = math.fsum(y for v in y1_lists for y in v) / N
    m0 = math.fsum(y for v in y0_lists for y in v) / N
    t1 = [math.fsum(y - m1 for y in v) for v in y1_lists]
    t0 = [math.fsum(y - m0 for y in v) for v in y0_lists]
    f = (G / N) ** 2
    main = f * math.fsum(a * a / pi + b * b / (1 - pi) for a, b in zip(t1, t0)) / G
    het = f * math.fsum((a - b) ** 2 for a, b in zip(t1, t0)) / G
    return main, het


def adjusted(ybar, N, A, S, features, target):
    """Adjusted estimate and variance with per-cell least squares on (1, features)."""
    G = len(ybar)
    V = list(ybar) if target == "theta1" else [y * n for y, n in zip(ybar, N)]
    nu = [1.0] * G if target == "theta1" else [float(n) for n in N]
    eta = {0: [0.0] * G, 1: [0.0] * G}
    pihat = [0.0] * G
    strata = sorted(set(S), key=str)
    for s in strata:
        idx = [g for g in range(G) if S[g] == s]
        treated = [g for g in idx if A[g] == 1]
        for a in (0, 1):
            cell = [g for g in idx if A[g] == a]
            cols = [[1.0] * len(cell)] + [[features[g][j] for g in cell] for j in range(len(features[0]))]
            beta = solve_normal_equations(cols, [V[g] for g in cell])
            for g in idx:
                eta[a][g] = beta[0] + math.fsum(b * f for b, f in zip(beta[1:], features[g]))
        for g in idx:
            pihat[g] = len(treated) / len(idx)
    xi = [
        A[g] * (V[g] - eta[1][g]) / pihat[g] - (1 - A[g]) * (V[g] - eta[0][g]) / (1 - pihat[g]) + eta[1][g] - eta[0][g]
        for g in range(G)
    ]
    est = math.fsum(xi) / G if target == "theta1" else math.fsum(xi) / math.fsum(N)
    om1 = [(1 - 1 / pihat[g]) * eta[1][g] - eta[0][g] + V[g] / pihat[g] for g in range(G)]
    om0 = [(1 / (1 - pihat[g]) - 1) * eta[0][g] - eta[1][g] + V[g] / (1 - pihat[g]) for g in range(G)]
    total = []
    for s in strata:
        idx = [g for g in range(G) if S[g] == s]
        nu_bar = _mean(nu[g] for g in idx)
        c1 = [g for g in idx if A[g] == 1]
        c0 = [g for g in idx if A[g] == 0]
        m1 = _mean(om1[g] for g in c1)
        m0 = _mean(om0[g] for g in c0)
        v1 = _mean(V[g] for g in c1)
        v0 = _mean(V[g] for g in c0)
        for g in idx:
            o2 = v1 - v0 - est * nu_bar
            if A[g] == 1:
                o = om1[g] - m1 - est * (nu[g] - nu_bar)
            else:
                o = om0[g] - m0 - est * (nu[g] - nu_bar)
            total.append(o * o + o2 * o2)
    var = math.fsum(total) / G
    if target == "theta2":
        var /= (math.fsum(N) / G) ** 2
    return est, var
