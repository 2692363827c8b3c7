"""Exact vector fields on (0, inf)^n with coefficients sum_m p_m(phi) / y(phi)^m.

Here ``y = 1 + phi_1 + ... + phi_n``. Because every partial derivative of y
is 1, this class of coefficients is closed under differentiation and so under
Lie brackets. Fields may carry extra coordinates (time, observation) after the
phi coordinates; their coefficients still depend on phi only.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .model import DriftGeometry, ModelSpec

DEFAULT_MAX_DEGREE = 40


class DegreeGuardError(RuntimeError):
    """A computation produced a polynomial above the configured degree guard."""


class DomainError(ValueError):
    """Evaluation point outside the open orthant."""


def _fmt_coef(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"({c})"


class MultiPoly:
    """Sparse polynomial in ``nvars`` variables with rational coefficients.

    Terms are stored as ``{exponent tuple: Fraction}`` with no zero entries,
    so structural equality is polynomial equality.
    """

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], Fraction] | None = None):
        self.nvars = nvars
        if terms:
            self.terms = {e: Fraction(c) for e, c in terms.items() if c != 0}
        else:
            self.terms = {}
        self._hash = None

    @classmethod
    def _raw(cls, nvars, terms):
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def constant(cls, nvars: int, c) -> "MultiPoly":
        c = Fraction(c)
        return cls._raw(nvars, {(0,) * nvars: c} if c else {})

    @classmethod
    def var(cls, nvars: int, j: int, coef=1) -> "MultiPoly":
        """``coef * phi_{j+1}`` (j is 0-based)."""
        e = [0] * nvars
        e[j] = 1
        return cls(nvars, {tuple(e): Fraction(coef)})

    @classmethod
    def zero(cls, nvars: int) -> "MultiPoly":
        return cls._raw(nvars, {})

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def __eq__(self, other):
        if isinstance(other, MultiPoly):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == MultiPoly.constant(self.nvars, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e)
            if v is None:
                out[e] = c
            else:
                v += c
                if v:
                    out[e] = v
                else:
                    del out[e]
        return MultiPoly._raw(self.nvars, out)

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "MultiPoly") -> "MultiPoly":
        return self + (-other)

    def scale(self, c) -> "MultiPoly":
        c = Fraction(c)
        if not c:
            return MultiPoly.zero(self.nvars)
        if c == 1:
            return self
        return MultiPoly._raw(self.nvars, {e: v * c for e, v in self.terms.items()})

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            return self.scale(other)
        if not self.terms or not other.terms:
            return MultiPoly.zero(self.nvars)
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e)
                out[e] = c1 * c2 if v is None else v + c1 * c2
        return MultiPoly._raw(self.nvars, {e: c for e, c in out.items() if c})

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "MultiPoly":
        out = MultiPoly.constant(self.nvars, 1)
        for _ in range(k):
            out = out * self
        return out

    def diff(self, j: int) -> "MultiPoly":
        out = {}
        for e, c in self.terms.items():
            d = e[j]
            if d:
                e2 = e[:j] + (d - 1,) + e[j + 1:]
                out[e2] = c * d
        return MultiPoly._raw(self.nvars, out)

    def evaluate(self, point: Sequence[Fraction]) -> Fraction:
        total = Fraction(0)
        for e, c in self.terms.items():
            v = c
            for x, d in zip(point, e):
                if d:
                    v *= x ** d
            total += v
        return total

    def sorted_terms(self) -> list[tuple[tuple[int, ...], Fraction]]:
        return sorted(self.terms.items())

    def to_str(self) -> str:
        if not self.terms:
            return "0"
        return _join_terms(_term_str(c, e) for e, c in self.sorted_terms())

    def __repr__(self):
        return f"MultiPoly({self.to_str()})"


def _monomial_str(e: tuple[int, ...]) -> str:
    parts = []
    for i, d in enumerate(e):
        if d == 1:
            parts.append(f"phi{i + 1}")
        elif d > 1:
            parts.append(f"phi{i + 1}^{d}")
    return "*".join(parts)


def _term_str(c: Fraction, e: tuple[int, ...], ypow: int = 0) -> str:
    mono = _monomial_str(e)
    factors = []
    if mono:
        if c == -1:
            factors.append("-" + mono)
        elif c != 1:
            factors.extend([_fmt_coef(c), mono])
        else:
            factors.append(mono)
    else:
        factors.append(_fmt_coef(c))
    if ypow:
        factors.append(f"y^-{ypow}")
    return "*".join(factors)


def _join_terms(terms) -> str:
    out = ""
    for t in terms:
        if not out:
            out = t
        elif t.startswith("-"):
            out += " - " + t[1:]
        else:
            out += " + " + t
    return out


_Y_CACHE: dict[tuple[int, int], MultiPoly] = {}


def y_poly(nvars: int, power: int = 1) -> MultiPoly:
    key = (nvars, power)
    p = _Y_CACHE.get(key)
    if p is None:
        if power == 0:
            p = MultiPoly.constant(nvars, 1)
        elif power == 1:
            terms = {(0,) * nvars: Fraction(1)}
            for j in range(nvars):
                e = [0] * nvars
                e[j] = 1
                terms[tuple(e)] = Fraction(1)
            p = MultiPoly(nvars, terms)
        else:
            p = y_poly(nvars, power - 1) * y_poly(nvars, 1)
        _Y_CACHE[key] = p
    return p


class RationalCoefficient:
    """``sum_m parts[m] / y^m``; zero parts are never stored.

    Terms with different y-powers are not merged in storage, so equal
    functions can have different representations; compare with
    :meth:`equals` (or ``==``), which clears denominators.
    """

    __slots__ = ("nvars", "parts")

    def __init__(self, nvars: int, parts: Mapping[int, MultiPoly] | None = None):
        self.nvars = nvars
        self.parts = {m: p for m, p in (parts or {}).items() if not p.is_zero()}

    @classmethod
    def _raw(cls, nvars, parts):
        r = cls.__new__(cls)
        r.nvars = nvars
        r.parts = parts
        return r

    @classmethod
    def zero(cls, nvars: int) -> "RationalCoefficient":
        return cls._raw(nvars, {})

    @classmethod
    def poly(cls, p: MultiPoly, ypow: int = 0) -> "RationalCoefficient":
        return cls._raw(p.nvars, {} if p.is_zero() else {ypow: p})

    @classmethod
    def constant(cls, nvars: int, c) -> "RationalCoefficient":
        return cls.poly(MultiPoly.constant(nvars, c))

    def is_zero_stored(self) -> bool:
        return not self.parts

    def is_zero(self) -> bool:
        return self.cleared()[1].is_zero()

    def max_degree(self) -> int:
        return max((p.degree() for p in self.parts.values()), default=-1)

    def __add__(self, other: "RationalCoefficient") -> "RationalCoefficient":
        if not other.parts:
            return self
        if not self.parts:
            return other
        out = dict(self.parts)
        for m, p in other.parts.items():
            q = out.get(m)
            if q is None:
                out[m] = p
            else:
                s = q + p
                if s.is_zero():
                    del out[m]
                else:
                    out[m] = s
        return RationalCoefficient._raw(self.nvars, out)

    def __neg__(self) -> "RationalCoefficient":
        return RationalCoefficient._raw(self.nvars, {m: -p for m, p in self.parts.items()})

    def __sub__(self, other: "RationalCoefficient") -> "RationalCoefficient":
        return self + (-other)

    def __mul__(self, other) -> "RationalCoefficient":
        if isinstance(other, MultiPoly):
            other = RationalCoefficient.poly(other)
        elif not isinstance(other, RationalCoefficient):
            c = Fraction(other)
            if not c:
                return RationalCoefficient.zero(self.nvars)
            return RationalCoefficient._raw(self.nvars, {m: p.scale(c) for m, p in self.parts.items()})
        out: dict[int, MultiPoly] = {}
        for m1, p1 in self.parts.items():
            for m2, p2 in other.parts.items():
                prod = p1 * p2
                m = m1 + m2
                out[m] = prod if m not in out else out[m] + prod
        return RationalCoefficient._raw(self.nvars, {m: p for m, p in out.items() if not p.is_zero()})

    __rmul__ = __mul__

    def diff(self, j: int) -> "RationalCoefficient":
        """d/dphi_j (p/y^m) = p_j/y^m - m p / y^(m+1)."""
        out: dict[int, MultiPoly] = {}
        for m, p in self.parts.items():
            dp = p.diff(j)
            if not dp.is_zero():
                out[m] = dp if m not in out else out[m] + dp
            if m:
                t = p.scale(-m)
                out[m + 1] = t if (m + 1) not in out else out[m + 1] + t
        return RationalCoefficient._raw(self.nvars, {m: p for m, p in out.items() if not p.is_zero()})

    def cleared(self) -> tuple[int, MultiPoly]:
        """Return ``(M, P)`` with this coefficient equal to ``P / y^M``."""
        if not self.parts:
            return 0, MultiPoly.zero(self.nvars)
        top = max(self.parts)
        total = MultiPoly.zero(self.nvars)
        for m, p in self.parts.items():
            total = total + p * y_poly(self.nvars, top - m)
        return top, total

    def equals(self, other: "RationalCoefficient") -> bool:
        return (self - other).is_zero()

    def __eq__(self, other):
        if isinstance(other, RationalCoefficient):
            return self.equals(other)
        return NotImplemented

    __hash__ = None

    def evaluate(self, point: Sequence[Fraction], y: Fraction | None = None) -> Fraction:
        if y is None:
            y = 1 + sum(point)
        total = Fraction(0)
        for m, p in self.parts.items():
            v = p.evaluate(point)
            if m:
                v /= y ** m
            total += v
        return total

    def to_str(self) -> str:
        if not self.parts:
            return "0"
        terms = []
        for e, m, c in sorted((e, m, c) for m, p in self.parts.items() for e, c in p.terms.items()):
            terms.append(_term_str(c, e, m))
        return _join_terms(terms)

    def __repr__(self):
        return f"RationalCoefficient({self.to_str()})"


class VectorField:
    """Field ``sum_c comps[c] * d/d(coord c)``.

    The first ``n`` coordinates are phi_1..phi_n; any further coordinates
    (``coord_names``) are ones the coefficients never depend on.
    """

    __slots__ = ("n", "comps", "name", "coord_names", "_dcache")

    def __init__(self, n: int, comps: Sequence[RationalCoefficient], name: str = "",
                 coord_names: Sequence[str] | None = None):
        self.n = n
        self.comps = tuple(comps)
        if coord_names is None:
            coord_names = tuple(f"phi{j + 1}" for j in range(len(self.comps)))
        self.coord_names = tuple(coord_names)
        if len(self.comps) < n or len(self.coord_names) != len(self.comps):
            raise ValueError("component count does not match the ambient dimension")
        self.name = name
        self._dcache = {}

    @property
    def dim(self) -> int:
        return len(self.comps)

    @classmethod
    def zero(cls, n: int, name: str = "0", coord_names=None) -> "VectorField":
        dim = n if coord_names is None else len(coord_names)
        return cls(n, [RationalCoefficient.zero(n)] * dim, name, coord_names)

    @classmethod
    def from_polys(cls, polys: Sequence[MultiPoly], name: str = "") -> "VectorField":
        n = len(polys)
        return cls(n, [RationalCoefficient.poly(p) for p in polys], name)

    def renamed(self, name: str) -> "VectorField":
        return VectorField(self.n, self.comps, name, self.coord_names)

    def _check_compatible(self, other: "VectorField"):
        if self.n != other.n or self.coord_names != other.coord_names:
            raise ValueError(f"fields live on different spaces: {self.coord_names} vs {other.coord_names}")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check_compatible(other)
        return VectorField(self.n, [a + b for a, b in zip(self.comps, other.comps)],
                           f"({self.name} + {other.name})", self.coord_names)

    def __neg__(self) -> "VectorField":
        return VectorField(self.n, [-a for a in self.comps], f"-{self.name}", self.coord_names)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check_compatible(other)
        return VectorField(self.n, [a - b for a, b in zip(self.comps, other.comps)],
                           f"({self.name} - {other.name})", self.coord_names)

    def scale(self, g, name: str | None = None) -> "VectorField":
        """Multiply every component by a scalar, polynomial or coefficient ``g``."""
        return VectorField(self.n, [c * g for c in self.comps],
                           name if name is not None else f"g*{self.name}", self.coord_names)

    def derivative(self, c: int, j: int) -> RationalCoefficient:
        key = (c, j)
        d = self._dcache.get(key)
        if d is None:
            d = self.comps[c].diff(j)
            self._dcache[key] = d
        return d

    def apply(self, g: RationalCoefficient) -> RationalCoefficient:
        """Directional derivative F(g) = sum_j f_j dg/dphi_j."""
        out = RationalCoefficient.zero(self.n)
        for j in range(self.n):
            f = self.comps[j]
            if f.parts:
                out = out + f * g.diff(j)
        return out

    def max_degree(self) -> int:
        return max((c.max_degree() for c in self.comps), default=-1)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.comps)

    def evaluate(self, point: Sequence) -> list[Fraction]:
        pt = [Fraction(x) for x in point[: self.n]]
        if len(pt) != self.n:
            raise ValueError(f"point needs {self.n} phi coordinates")
        if any(x <= 0 for x in pt):
            raise DomainError(f"point {point} is not in the open orthant (0,inf)^{self.n}")
        y = 1 + sum(pt)
        return [c.evaluate(pt, y) for c in self.comps]

    def to_str(self) -> str:
        parts = []
        for c, name in zip(self.comps, self.coord_names):
            if not c.parts:
                continue
            parts.append(f"({c.to_str()}) d/d{name}")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"VectorField[{self.name}]({self.to_str()})"


def lie_bracket(F: VectorField, G: VectorField, max_degree: int = DEFAULT_MAX_DEGREE,
                name: str | None = None) -> VectorField:
    """[F, G] with component c equal to F(g_c) - G(f_c)."""
    F._check_compatible(G)
    n = F.n
    comps = []
    for c in range(F.dim):
        acc = RationalCoefficient.zero(n)
        for j in range(n):
            fj = F.comps[j]
            gj = G.comps[j]
            if fj.parts:
                dg = G.derivative(c, j)
                if dg.parts:
                    acc = acc + fj * dg
            if gj.parts:
                df = F.derivative(c, j)
                if df.parts:
                    acc = acc - gj * df
        comps.append(acc)
    out = VectorField(n, comps, name if name is not None else f"[{F.name},{G.name}]", F.coord_names)
    deg = out.max_degree()
    if deg > max_degree:
        raise DegreeGuardError(f"bracket {out.name} reached degree {deg} > guard {max_degree}")
    return out


def fields_equal(F: VectorField, G: VectorField) -> bool:
    """Equality as rational functions on the whole orthant."""
    F._check_compatible(G)
    return all(a.equals(b) for a, b in zip(F.comps, G.comps))


def evaluate(F: VectorField, point: Sequence) -> list[Fraction]:
    return F.evaluate(point)


# -- the model's fields ------------------------------------------------------

def build_diffusion_fields(geom: DriftGeometry) -> list[VectorField]:
    """D_r = sum_i a_{ir} phi_i d/dphi_i for r = 1..k."""
    n = geom.n
    return [
        VectorField.from_polys([MultiPoly.var(n, i, geom.A[r][i]) for i in range(n)], name=f"D_{r + 1}")
        for r in range(geom.k)
    ]


def build_testing_drift(geom: DriftGeometry) -> VectorField:
    """Component i: phi_i * ((1/y) sum_l Sigma_{li} phi_l - |a_i|^2 / 2)."""
    n = geom.n
    comps = []
    for i in range(n):
        quad = MultiPoly.zero(n)
        for l in range(n):
            s = geom.sigma[l][i]
            if s:
                e = [0] * n
                e[i] += 1
                e[l] += 1
                quad = quad + MultiPoly(n, {tuple(e): s})
        lin = MultiPoly.var(n, i, -geom.sqnorms[i] / 2)
        comps.append(RationalCoefficient(n, {1: quad, 0: lin}))
    return VectorField(n, comps, "D_0")


def build_jump_field(spec: ModelSpec) -> VectorField:
    """J_j = q_0j + sum_m q_mj phi_m - phi_j sum_m q_m0 phi_m - phi_j q_00."""
    n = spec.n
    Q = spec.Q
    polys = []
    for j in range(1, n + 1):
        p = MultiPoly.constant(n, Q[0][j])
        for m in range(1, n + 1):
            p = p + MultiPoly.var(n, m - 1, Q[m][j])
        p = p + MultiPoly.var(n, j - 1, -Q[0][0])
        for m in range(1, n + 1):
            if Q[m][0]:
                e = [0] * n
                e[j - 1] += 1
                e[m - 1] += 1
                p = p + MultiPoly(n, {tuple(e): -Q[m][0]})
        polys.append(p)
    return VectorField.from_polys(polys, name="J")


def build_detection_drift(spec: ModelSpec, geom: DriftGeometry) -> VectorField:
    """D_0^J = D_0 + J."""
    return (build_testing_drift(geom) + build_jump_field(spec)).renamed("D_0^J")


def extend_coords(F: VectorField, extra: Sequence[str], extra_comps: Sequence[RationalCoefficient] | None = None,
                  name: str | None = None) -> VectorField:
    """Embed F into phi x (extra coordinates)."""
    if extra_comps is None:
        extra_comps = [RationalCoefficient.zero(F.n)] * len(extra)
    return VectorField(F.n, list(F.comps) + list(extra_comps), name if name is not None else F.name,
                       tuple(F.coord_names) + tuple(extra))


def linear_combination(fields: Iterable[tuple[object, VectorField]], n: int, name: str = "",
                       coord_names=None) -> VectorField:
    out = VectorField.zero(n, name, coord_names)
    for coef, F in fields:
        out = out + F.scale(coef)
    return out.renamed(name)
