"""Dynamical determinant of the twisted cat map from its periodic orbits.

Independent of the Fourier truncation: d(lam) = exp(-sum_n t_n / n) with
t_n the average of exp(-lam r^(n)) over the fixed points of M^n (the flat
trace of the n-th power of the twisted transfer operator, since the
fixed-point count equals |det(M^n - I)|).  The exponential is expanded as a
power series in an auxiliary variable z and summed at z = 1, where the
coefficients decay super-exponentially for analytic roofs.
"""

import mpmath as mp
import numpy as np

CAT = ((2, 1), (1, 1))


def _int_power(M, n):
    R = ((1, 0), (0, 1))
    for _ in range(n):
        R = tuple(tuple(sum(R[i][k] * M[k][j] for k in range(2)) for j in range(2)) for i in range(2))
    return R


def fixed_points(n, M=CAT):
    """All x in [0,1)^2 with M^n x = x (mod 1), as rationals y / D."""
    P = _int_power(M, n)
    A = ((P[0][0] - 1, P[0][1]), (P[1][0], P[1][1] - 1))
    D = abs(A[0][0] * A[1][1] - A[0][1] * A[1][0])
    gens = [(A[1][1] % D, -A[1][0] % D), (-A[0][1] % D, A[0][0] % D)]  # columns of adj(A)
    seen = {(0, 0)}
    frontier = [(0, 0)]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = ((p[0] + g[0]) % D, (p[1] + g[1]) % D)
                if q not in seen:
                    seen.add(q)
                    nxt.append(q)
        frontier = nxt
    assert len(seen) == D
    return np.array(sorted(seen), dtype=float) / D


def birkhoff_roof_sums(n, eps, M=CAT):
    x = fixed_points(n, M)
    Mf = np.array(M, dtype=float)
    total = np.zeros(len(x))
    for _ in range(n):
        total += 1 + eps * np.cos(2 * np.pi * x[:, 0])
        x = (x @ Mf.T) % 1
    return total


class DynamicalDeterminant:
    def __init__(self, eps, n_max=10):
        self.n_max = n_max
        self.sums = [birkhoff_roof_sums(n, eps) for n in range(1, n_max + 1)]

    def __call__(self, lam):
        lam = complex(lam)
        t = [np.mean(np.exp(-lam * s)) for s in self.sums]
        a = [0] + [-t[n - 1] / n for n in range(1, self.n_max + 1)]
        c = [1.0 + 0j] + [0j] * self.n_max
        for k in range(1, self.n_max + 1):
            c[k] = sum(j * a[j] * c[k - j] for j in range(1, k + 1)) / k
        return sum(c)

    def zero_near(self, lam0):
        return complex(mp.findroot(lambda z: self(complex(z)), mp.mpc(lam0)))
