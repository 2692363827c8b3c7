"""Independent reference implementations used only by the tests.

Fields are rebuilt from the model data with sympy, straight from the
defining formulas, and bracketed with sympy's own differentiation. Nothing
here imports the symbolic layer of the package.
"""

from __future__ import annotations

import random
from fractions import Fraction

import sympy as sp

from hypoflag.model import ModelSpec


def symbols(n):
    return sp.symbols(f"phi1:{n + 1}", positive=True)


def diffs(spec: ModelSpec):
    base = spec.lam[0]
    return [[sp.Rational(x - b) for x, b in zip(spec.lam[i], base)] for i in range(1, spec.n + 1)]


def sym_fields(spec: ModelSpec):
    """(D_0, [D_1..D_k], J) as sympy column matrices in phi."""
    n, k = spec.n, spec.k
    phi = symbols(n)
    a = diffs(spec)
    y = 1 + sum(phi)
    Q = [[sp.Rational(q) for q in row] for row in spec.Q]
    sig = [[sum(a[i][r] * a[j][r] for r in range(k)) for j in range(n)] for i in range(n)]
    D0 = sp.Matrix([phi[i] * (sum(sig[l][i] * phi[l] for l in range(n)) / y - sp.Rational(1, 2) * sig[i][i])
                    for i in range(n)])
    D = [sp.Matrix([a[i][r] * phi[i] for i in range(n)]) for r in range(k)]
    full = [sp.Integer(1)] + list(phi)
    J = sp.Matrix([sum((Q[i][j + 1] - Q[i][0] * phi[j]) * full[i] for i in range(n + 1)) for j in range(n)])
    return phi, D0, D, J


def sym_bracket(F, G, phi):
    """[F, G] = DG F - DF G (component c = F(g_c) - G(f_c))."""
    return G.jacobian(phi) * F - F.jacobian(phi) * G


def sym_eval(V, phi, point):
    sub = {p: sp.Rational(x.numerator, x.denominator) for p, x in zip(phi, point)}
    out = []
    for v in V:
        q = sp.Rational(sp.simplify(v.subs(sub)))
        out.append(Fraction(int(q.p), int(q.q)))
    return out


def sym_rank(vectors):
    if not vectors:
        return 0
    return sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in v] for v in vectors]).rank()


def random_drifts(rng: random.Random, k: int, n: int, lo=-3, hi=3):
    """n+1 distinct integer drift vectors with no antipodal difference pair."""
    while True:
        lam = [tuple(rng.randint(lo, hi) for _ in range(k)) for _ in range(n + 1)]
        if len(set(lam)) != n + 1:
            continue
        a = [tuple(x - b for x, b in zip(lam[i], lam[0])) for i in range(1, n + 1)]
        if any(all(x == -y for x, y in zip(a[i], a[j])) for i in range(n) for j in range(i + 1, n)):
            continue
        return [list(v) for v in lam]


def random_generator(rng: random.Random, size: int, density=0.5, max_rate=3):
    Q = [[Fraction(0)] * size for _ in range(size)]
    for i in range(size):
        for j in range(size):
            if i != j and rng.random() < density:
                Q[i][j] = Fraction(rng.randint(1, max_rate * 2), 2)
        Q[i][i] = -sum(Q[i])
    return Q


def random_model(rng: random.Random, k=None, n=None, testing=False) -> ModelSpec:
    k = k or rng.randint(1, 2)
    n = n or rng.randint(k + 1, k + 2)
    lam = random_drifts(rng, k, n)
    Q = None if testing else random_generator(rng, n + 1)
    return ModelSpec.from_values(lam, Q)


def fuzz_models(count: int, seed: int, testing=False):
    rng = random.Random(seed)
    return [random_model(rng, testing=testing) for _ in range(count)]
