"""Independent numpy/scipy model used to freeze reference values in the C++ tests.

Run: python3 tests/oracle/reference_values.py
Shares no code with the library; the C++ tests hard-code its printed output.
"""
import itertools

import numpy as np
from scipy.optimize import minimize

DET_TO_MODE = [0, 2, 1, 3]  # D1..D4 -> H_A, H_B, V_A, V_B
PI = np.pi


def source(l1, l2):
    g = np.eye(8)
    a, b = 2 * l1 + 1, 2 * l2 + 1
    c1, c2 = 2 * np.sqrt(l1 * (l1 + 1)), 2 * np.sqrt(l2 * (l2 + 1))
    for off, s in ((0, 1), (4, -1)):
        g[off + 0, off + 0] = g[off + 3, off + 3] = a
        g[off + 1, off + 1] = g[off + 2, off + 2] = b
        g[off + 0, off + 3] = g[off + 3, off + 0] = s * c1
        g[off + 1, off + 2] = g[off + 2, off + 1] = -s * c2
    return g


def rotation(th, i, j):
    s_mat = np.eye(8)
    c, s = np.cos(th), np.sin(th)
    for o in (0, 4):
        s_mat[o + i, o + i] = c
        s_mat[o + i, o + j] = s
        s_mat[o + j, o + i] = -s
        s_mat[o + j, o + j] = c
    return s_mat


def final(l1, l2, ta, tb, eta_det):
    g = source(l1, l2)
    sa, sb = rotation(ta, 0, 1), rotation(tb, 2, 3)
    g = sb.T @ sa.T @ g @ sa @ sb
    eta_mode = np.zeros(4)
    for l in range(4):
        eta_mode[DET_TO_MODE[l]] = eta_det[l]
    k = np.diag(np.sqrt(np.r_[eta_mode, eta_mode]))
    return k @ g @ k + np.diag(1 - np.r_[eta_mode, eta_mode])


def overlap(g, modes):
    if not modes:
        return 1.0
    idx = list(modes) + [m + 4 for m in modes]
    sub = g[np.ix_(idx, idx)]
    return 2 ** len(modes) / np.sqrt(np.linalg.det(sub + np.eye(len(idx))))


def distribution(g, nu):
    p = np.zeros(16)
    for pat in range(16):
        on = [l for l in range(4) if pat >> l & 1]
        off = [l for l in range(4) if not pat >> l & 1]
        tot = 0.0
        for r in range(len(on) + 1):
            for sub in itertools.combinations(on, r):
                ms = sorted(DET_TO_MODE[l] for l in list(sub) + off)
                tot += (-1) ** r * (1 - nu) ** (r + len(off)) * overlap(g, ms)
        p[pat] = tot
    return p


def correlator(p):
    t = 0.0
    for pat in range(16):
        a = -1 if (pat & 1 and not pat & 4) else 1
        b = -1 if (pat & 2 and not pat & 8) else 1
        t += a * b * p[pat]
    return t


def chsh(l1, l2, a, b, eta=(1, 1, 1, 1), nu=0.0):
    e = {}
    for i in range(2):
        for j in range(2):
            e[i, j] = correlator(distribution(final(l1, l2, a[i], b[j], eta), nu))
    return e[0, 0] + e[1, 0] + e[0, 1] - e[1, 1], e


def transmission(etas):
    n = len(etas)
    t = np.zeros((2 ** n, 2 ** n))
    for i in range(2 ** n):
        for j in range(2 ** n):
            v = 1.0
            for l in range(n):
                ci, cj = i >> l & 1, j >> l & 1
                if cj and ci:
                    v *= etas[l]
                elif cj:
                    v *= 1 - etas[l]
                elif ci:
                    v = 0.0
            t[i, j] = v
    return t


def simplex_lsq(t, p):
    n = t.shape[1]
    res = minimize(lambda q: np.sum((p - t @ q) ** 2), np.full(n, 1 / n),
                   jac=lambda q: -2 * t.T @ (p - t @ q),
                   constraints=[{"type": "eq", "fun": lambda q: np.sum(q) - 1}],
                   bounds=[(0, None)] * n, method="SLSQP",
                   options=dict(ftol=1e-16, maxiter=2000))
    return res.x, res.fun


def main():
    np.set_printoptions(precision=17)
    s, e = chsh(0.62, 0.62, (0, PI / 5), (3 * PI / 5, -3 * PI / 5))
    print("reference config S", repr(float(s)), "E", [repr(float(e[k])) for k in sorted(e)])

    g = final(0.3, 0.7, 0.3, -1.1, (0.9, 0.8, 0.7, 0.6))
    print("distribution A", [repr(float(x)) for x in distribution(g, 1e-3)])

    s, _ = chsh(0.25, 0.4, (0.1, 0.9), (1.3, -0.4), (0.95, 0.85, 0.75, 0.65), 2e-4)
    print("lossy S", repr(float(s)))

    t = transmission([0.3, 0.6])
    p = np.array([0.5, 0.1, 0.05, 0.35])
    q, f = simplex_lsq(t, p)
    print("qp4 q", [repr(float(x)) for x in q], "objective", repr(float(f)))


if __name__ == "__main__":
    main()
