"""Reference computations written independently of the package internals.

They use rational arithmetic, direct numerical quadrature or plain loops,
and never call the code they check.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate


def gamma_constant(kind: str, d: int, beta=None) -> float:
    if kind == "beta":
        return math.exp(math.lgamma(d / 2 + beta + 1) - math.lgamma(beta + 1)) / math.pi ** (d / 2)
    if kind == "beta_prime":
        return math.exp(math.lgamma(beta) - math.lgamma(beta - d / 2)) / math.pi ** (d / 2)
    return (2 * math.pi) ** (-d / 2)


def density(kind: str, d: int, beta, h: float) -> float:
    c = gamma_constant(kind, d, beta)
    if kind == "beta":
        return c * h ** beta if h >= 0 else 0.0
    if kind == "beta_prime":
        return c * (-h) ** (-beta) if h < 0 else 0.0
    return c * math.exp(h / 2)


def unit_ball(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def k_region_quad(kind: str, d: int, beta, A: float, t: float) -> float:
    """Mean count in K(A, t) by adaptive quadrature over the height."""
    m = d - 1

    def f(h):
        return density(kind, d, beta, h) * unit_ball(m) * (A + math.sqrt(t - h)) ** m

    if kind == "beta":
        if t <= 0:
            return 0.0
        val, _ = integrate.quad(f, 0, t, epsabs=0, epsrel=1e-13, limit=200)
        return val
    if kind == "beta_prime":
        # substitute h = t - u and split the half-line
        g = lambda u: f(t - u)  # noqa: E731
        a, _ = integrate.quad(g, 0, 1, epsabs=0, epsrel=1e-13, limit=200)
        b, _ = integrate.quad(g, 1, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        return a + b
    g = lambda u: f(t - u)  # noqa: E731
    a, _ = integrate.quad(g, 0, 1, epsabs=0, epsrel=1e-13, limit=200)
    b, _ = integrate.quad(g, 1, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return a + b


def _det(rows):
    a = [list(r) for r in rows]
    n, det = len(a), Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            for k in range(c, n):
                a[r][k] -= f * a[c][k]
    return det


def apex(points):
    """Exact apex (v', h') of the downward paraboloid through d points (Cramer's rule)."""
    m = len(points[0][0])
    rows, rhs = [], []
    for v, h in points:
        v = [Fraction(x) for x in v]
        rows.append([2 * x for x in v] + [Fraction(1)])
        rhs.append(Fraction(h) + sum(x * x for x in v))
    D = _det(rows)
    if D == 0:
        raise ZeroDivisionError("affinely dependent")
    sol = []
    for j in range(m + 1):
        Mj = [r[:j] + [b] + r[j + 1:] for r, b in zip(rows, rhs)]
        sol.append(_det(Mj) / D)
    vp = sol[:m]
    return vp, sol[m] + sum(x * x for x in vp)


def inside(ap, q) -> int:
    """+1 strictly inside the open downward paraboloid, 0 on it, -1 outside."""
    vp, hp = ap
    v, h = q
    lvl = hp - sum((Fraction(a) - b) ** 2 for a, b in zip(v, vp))
    h = Fraction(h)
    return (h < lvl) - (h > lvl)


def brute_cells(v, h) -> set:
    """All d-tuples with an empty open circumparaboloid (general position assumed)."""
    n, m = v.shape
    out = set()
    pts = [(tuple(float(x) for x in v[i]), float(h[i])) for i in range(n)]
    for c in itertools.combinations(range(n), m + 1):
        try:
            ap = apex([pts[i] for i in c])
        except ZeroDivisionError:
            continue
        if all(inside(ap, pts[j]) <= 0 for j in range(n) if j not in c):
            out.add(c)
    return out


def delaunay_incircle_cells(v) -> set:
    """Classical planar Delaunay by exact in-circle tests (equal heights)."""
    n = len(v)
    pts = [tuple(Fraction(float(x)) for x in p) for p in v]
    out = set()
    for c in itertools.combinations(range(n), 3):
        a, b, cc = (pts[i] for i in c)
        orient = (b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0])
        if orient == 0:
            continue
        ok = True
        for j in range(n):
            if j in c:
                continue
            p = pts[j]
            M = [[q[0] - p[0], q[1] - p[1], (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2]
                 for q in (a, b, cc)]
            det = (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
                   - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
                   + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))
            if det * orient > 0:
                ok = False
                break
        if ok:
            out.add(c)
    return out


def euler_characteristic(cells) -> int:
    """V - E + F (- T ...) of the simplicial complex generated by ``cells``."""
    chi = 0
    k = len(cells[0])
    for j in range(1, k + 1):
        faces = {tuple(sorted(f)) for c in cells for f in itertools.combinations(c, j)}
        chi += (-1) ** (j - 1) * len(faces)
    return chi
