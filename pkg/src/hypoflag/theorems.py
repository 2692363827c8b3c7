"""Parametric rank criteria, closed-form bracket formulas, and isolating
operators, each cross-checked against the bracket engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

from .hormander import (
    DEFAULT_NUM_POINTS,
    LieSpanReport,
    augment_observation,
    augment_parabolic,
    default_depth,
    generate_lie_span,
    model_generators,
    sample_points,
)
from .linalg import bareiss_rank, solve_left
from .model import DriftGeometry, ModelSpec, derive_geometry
from .polyfield import (
    MultiPoly,
    RationalCoefficient,
    VectorField,
    build_diffusion_fields,
    build_jump_field,
    lie_bracket,
)

TESTING_IFF = "TESTING_IFF"
DETECT_SUFF_INFLOW = "DETECT_SUFF_INFLOW"
DETECT_SUFF_AUGMENTED = "DETECT_SUFF_AUGMENTED"

PURE_E_I = "PURE_E_I"
NEEDS_FALLBACK = "NEEDS_FALLBACK"


def _s(x):
    return str(x) if isinstance(x, Fraction) else x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _s(obj)


@dataclass
class TheoremVerdict:
    theorem: str
    applicable: bool
    reason: str
    holds: bool | None = None
    witness: dict = field(default_factory=dict)
    predicted_lie_dim: int | None = None

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "applicable": self.applicable,
            "reason": self.reason,
            "holds": self.holds,
            "witness": _jsonable(self.witness),
            "predicted_lie_dim": self.predicted_lie_dim,
        }


def augmented_testing_matrix(geom: DriftGeometry) -> list[list[Fraction]]:
    """Rows (a_i | |a_i|^2), i = 1..n."""
    return [list(geom.a(i)) + [geom.sqnorms[i - 1]] for i in range(1, geom.n + 1)]


def check_testing_iff(geom: DriftGeometry) -> TheoremVerdict:
    n, k = geom.n, geom.k
    rank_a = bareiss_rank(geom.A)
    aug = augmented_testing_matrix(geom)
    rank_aug = bareiss_rank(aug)
    coeffs = solve_left(geom.A, geom.sqnorms)
    witness = {
        "rank_A": rank_a,
        "augmented_matrix": aug,
        "rank_augmented": rank_aug,
        "sqnorms": list(geom.sqnorms),
        "sqnorms_in_rowspace": coeffs is not None,
        "rowspace_coefficients": coeffs,
    }
    if n <= k:
        return TheoremVerdict(TESTING_IFF, False, f"k={k} >= n={n}: elliptic regime, criterion stated for n > k",
                              None, witness, rank_aug)
    if n > k + 1:
        return TheoremVerdict(TESTING_IFF, True, f"n={n} > k+1={k + 1}: bracket algebra has dimension <= k+1",
                              False, witness, rank_aug)
    holds = rank_a == k and coeffs is None
    if holds:
        reason = "rank(A) = k and the squared-norm vector is outside rowsp(A)"
    elif rank_a < k:
        reason = f"rank(A) = {rank_a} < k"
    else:
        reason = "squared-norm vector lies in rowsp(A)"
    return TheoremVerdict(TESTING_IFF, True, reason, holds, witness, rank_aug)


def _distinct(vectors) -> bool:
    return len(set(vectors)) == len(vectors)


def check_detection_suff_inflow(spec: ModelSpec) -> TheoremVerdict:
    geom = derive_geometry(spec)
    cols = geom.columns
    if not _distinct(cols):
        return TheoremVerdict(DETECT_SUFF_INFLOW, False, "drift differences are not pairwise distinct")
    Q = spec.Q
    missing = [i for i in range(1, spec.n + 1) if not any(Q[m][i] > 0 for m in range(spec.n + 1) if m != i)]
    witness = {
        "columns_without_inflow": missing,
        "inflow_sources": {str(i): [m for m in range(spec.n + 1) if m != i and Q[m][i] > 0]
                           for i in range(1, spec.n + 1)},
    }
    if missing:
        return TheoremVerdict(DETECT_SUFF_INFLOW, True,
                              f"no positive inflow into state(s) {missing}; try the augmented criterion",
                              False, witness, None)
    return TheoremVerdict(DETECT_SUFF_INFLOW, True, "every state 1..n has positive inflow from another state",
                          True, witness, spec.n)


def detection_augmented_matrix(geom: DriftGeometry) -> list[list[Fraction]]:
    """Rows (a_i | |a_i|^2 | 1)."""
    return [list(geom.a(i)) + [geom.sqnorms[i - 1], Fraction(1)] for i in range(1, geom.n + 1)]


def check_detection_suff_augmented(spec: ModelSpec, geom: DriftGeometry | None = None) -> TheoremVerdict:
    geom = geom or derive_geometry(spec)
    Q = spec.Q
    n = spec.n
    inflow = [(m, j) for j in range(1, n + 1) for m in range(n + 1) if m != j and Q[m][j] != 0]
    exits = [j for j in range(1, n + 1) if Q[j][0] > 0]
    aug = detection_augmented_matrix(geom)
    rank_aug = bareiss_rank(aug)
    witness = {"augmented_matrix": aug, "rank_augmented": rank_aug, "inflow_entries": inflow,
               "states_jumping_to_0": exits}
    if inflow:
        return TheoremVerdict(DETECT_SUFF_AUGMENTED, False,
                              f"q_mj != 0 for m != j at {inflow[:4]}", None, witness, None)
    if not exits:
        return TheoremVerdict(DETECT_SUFF_AUGMENTED, False, "no state j >= 1 with q_j0 > 0", None, witness, None)
    predicted = min(rank_aug, n)
    if n > geom.k + 2:
        reason = f"n={n} > k+2={geom.k + 2}: augmented matrix cannot reach rank n"
    else:
        reason = f"rank of augmented matrix is {rank_aug}"
    return TheoremVerdict(DETECT_SUFF_AUGMENTED, True, reason, predicted == n, witness, predicted)


# -- closed forms --------------------------------------------------------------

def closed_form_d0_bracket(geom: DriftGeometry, r: int) -> VectorField:
    """-(sum_s (alpha_rs / y - beta_r beta_s / y^2) D_s), r 1-based."""
    n, k = geom.n, geom.k
    if not 1 <= r <= k:
        raise ValueError(f"r must be in 1..{k}")
    D = build_diffusion_fields(geom)

    def beta(s):
        return sum((MultiPoly.var(n, j, geom.A[s][j]) for j in range(n)), MultiPoly.zero(n))

    def alpha(s):
        return sum((MultiPoly.var(n, j, geom.A[r - 1][j] * geom.A[s][j]) for j in range(n)), MultiPoly.zero(n))

    out = VectorField.zero(n)
    br = beta(r - 1)
    for s in range(k):
        coef = RationalCoefficient(n, {1: -alpha(s), 2: br * beta(s)})
        out = out + D[s].scale(coef)
    return out.renamed(f"closed[D_0,D_{r}]")


def _eigen(exponent: Sequence[int], j: int, cols: Sequence[Sequence[Fraction]], k: int) -> tuple[Fraction, ...]:
    """ad_{D_r}(phi^e d/dphi_j) = (sum_m e_m a_mr - a_jr) phi^e d/dphi_j."""
    out = []
    for r in range(k):
        v = -cols[j][r]
        for m, e in enumerate(exponent):
            if e:
                v += e * cols[m][r]
        out.append(v)
    return tuple(out)


def g_alpha_jump(spec: ModelSpec, geom: DriftGeometry, alpha: Sequence[int]) -> VectorField:
    """Closed form of ad_{D_1}^{alpha_1} ... ad_{D_k}^{alpha_k} J.

    Component j: (-1)^|alpha| prod_r a_jr^alpha_r q_0j
    + sum_m prod_r (a_mr - a_jr)^alpha_r q_mj phi_m
    - phi_j sum_m prod_r a_mr^alpha_r q_m0 phi_m.
    """
    alpha = tuple(alpha)
    if len(alpha) != geom.k or any(a < 0 for a in alpha):
        raise ValueError("alpha must be a nonnegative multi-index of length k")
    if sum(alpha) == 0:
        raise ValueError("|alpha| must be positive")
    n, Q = spec.n, spec.Q
    cols = geom.columns

    def pw(vec):
        v = Fraction(1)
        for x, e in zip(vec, alpha):
            v *= x ** e
        return v

    sign = -1 if sum(alpha) % 2 else 1
    polys = []
    for j in range(n):
        p = MultiPoly.constant(n, sign * pw(cols[j]) * Q[0][j + 1])
        for m in range(n):
            if Q[m + 1][j + 1]:
                diff = [x - y for x, y in zip(cols[m], cols[j])]
                p = p + MultiPoly.var(n, m, pw(diff) * Q[m + 1][j + 1])
        for m in range(n):
            if Q[m + 1][0]:
                e = [0] * n
                e[j] += 1
                e[m] += 1
                p = p + MultiPoly(n, {tuple(e): -pw(cols[m]) * Q[m + 1][0]})
        polys.append(p)
    label = ",".join(str(a) for a in alpha)
    return VectorField.from_polys(polys, name=f"G^({label})J")


def iterated_jump_bracket(spec: ModelSpec, geom: DriftGeometry, order: Sequence[int]) -> VectorField:
    """Engine brackets [D_{order[0]}, [D_{order[1]}, ... [D_{order[-1]}, J]]] (1-based indices)."""
    D = build_diffusion_fields(geom)
    out = build_jump_field(spec)
    for r in reversed(order):
        out = lie_bracket(D[r - 1], out)
    return out


# -- isolating operators ------------------------------------------------------------

@dataclass
class IsolatingOperator:
    target: int
    coefficients: dict[tuple[int, ...], Fraction]
    field: VectorField | None
    achieved_form: str
    eigenvalue: tuple[Fraction, ...] | None = None
    route: str = ""
    polynomials: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "achieved_form": self.achieved_form,
            "route": self.route,
            "eigenvalue": None if self.eigenvalue is None else [str(x) for x in self.eigenvalue],
            "coefficients": {",".join(map(str, a)): str(c) for a, c in sorted(self.coefficients.items())},
            "field": None if self.field is None else self.field.to_str(),
        }


def jump_eigen_groups(spec: ModelSpec, geom: DriftGeometry) -> dict[tuple[Fraction, ...], list[tuple[int, tuple, Fraction]]]:
    """Terms (coordinate, exponent, coefficient) of J grouped by their joint ad_{D_r} eigenvalue."""
    J = build_jump_field(spec)
    cols = geom.columns
    groups: dict[tuple[Fraction, ...], list] = {}
    for j, comp in enumerate(J.comps):
        for e, c in comp.parts.get(0, MultiPoly.zero(spec.n)).terms.items():
            groups.setdefault(_eigen(e, j, cols, geom.k), []).append((j, e, c))
    return groups


def _product_polynomials(target: tuple[Fraction, ...], kill: Sequence[tuple[Fraction, ...]], k: int):
    """Per-channel node sets so prod_r P_r(target_r) = 1 and prod_r P_r(w_r) = 0 for each w in kill.

    Each killed vector is pinned on the smallest channel where it differs
    from the target; P_r is the Lagrange-type product with value 1 at the
    target coordinate and 0 at every pinned node.
    """
    nodes: list[set[Fraction]] = [set() for _ in range(k)]
    for w in kill:
        r = next(r for r in range(k) if w[r] != target[r])
        nodes[r].add(w[r])
    polys = []
    for r in range(k):
        # coefficients of prod (x - w) / (t - w), lowest degree first
        coefs = [Fraction(1)]
        for w in sorted(nodes[r]):
            denom = target[r] - w
            new = [Fraction(0)] * (len(coefs) + 1)
            for d, c in enumerate(coefs):
                new[d + 1] += c / denom
                new[d] -= c * w / denom
            coefs = new
        polys.append(coefs)
    return nodes, polys


def _expand(polys: Sequence[Sequence[Fraction]]) -> dict[tuple[int, ...], Fraction]:
    out: dict[tuple[int, ...], Fraction] = {}
    for degs in product(*[range(len(p)) for p in polys]):
        c = Fraction(1)
        for p, d in zip(polys, degs):
            c *= p[d]
            if not c:
                break
        if c:
            out[degs] = out.get(degs, Fraction(0)) + c
    return out


def _nonvanishing_on_orthant(p: MultiPoly) -> bool:
    if p.is_zero():
        return False
    # every monomial is positive on the open orthant
    return len({c > 0 for c in p.terms.values()}) == 1


def construct_isolating_operators(spec: ModelSpec, geom: DriftGeometry | None = None,
                                  require_inflow: bool = True) -> list[IsolatingOperator]:
    """For each coordinate i, a combination sum C_alpha G^alpha J equal to c_i(phi) e_i.

    Each monomial term of J is an eigenvector of every ad_{D_r}, so a product
    polynomial prod_r P_r(ad_{D_r}) scales each term by P evaluated at its
    eigenvalue. We pick, per coordinate, a group of terms with a common
    eigenvalue that lives only in that coordinate (first the constant
    q_0i term, then the linear q_mi phi_m terms), keep it and annihilate
    every other group together with the zero eigenvalue (so C_0 = 0).
    """
    geom = geom or derive_geometry(spec)
    if require_inflow:
        verdict = check_detection_suff_inflow(spec)
        if not verdict.holds:
            raise ValueError(f"inflow criterion does not hold: {verdict.reason}")
    n, k = spec.n, geom.k
    cols = geom.columns
    groups = jump_eigen_groups(spec, geom)
    zero = tuple(Fraction(0) for _ in range(k))
    Q = spec.Q
    result = []
    for i in range(n):
        candidates = []
        if Q[0][i + 1] > 0:
            candidates.append(("constant", tuple(-x for x in cols[i])))
        for m in range(n):
            if m != i and Q[m + 1][i + 1] > 0:
                candidates.append((f"linear-from-{m + 1}", tuple(x - y for x, y in zip(cols[m], cols[i]))))
        chosen = None
        for route, v in candidates:
            terms = groups.get(v, [])
            if v != zero and terms and all(j == i for j, _, _ in terms):
                chosen = (route, v)
                break
        if chosen is None:
            result.append(IsolatingOperator(i + 1, {}, None, NEEDS_FALLBACK, route="no isolated eigen-group"))
            continue
        route, v = chosen
        kill = [w for w in groups if w != v]
        if zero not in kill and v != zero:
            kill.append(zero)
        nodes, polys = _product_polynomials(v, kill, k)
        coeffs = _expand(polys)
        assert (0,) * k not in coeffs
        fieldsum = VectorField.zero(n)
        for a, c in sorted(coeffs.items()):
            fieldsum = fieldsum + g_alpha_jump(spec, geom, a).scale(c)
        fieldsum = fieldsum.renamed(f"T^{i + 1}J")
        others_zero = all(fieldsum.comps[j].is_zero() for j in range(n) if j != i)
        _, main = fieldsum.comps[i].cleared()
        ok = others_zero and _nonvanishing_on_orthant(main)
        poly_info = [{"channel": r + 1, "zeros": sorted(nodes[r]), "coefficients": polys[r]} for r in range(k)]
        result.append(IsolatingOperator(i + 1, coeffs, fieldsum, PURE_E_I if ok else NEEDS_FALLBACK, v, route,
                                        poly_info))
    return result


# -- composite analysis -------------------------------------------------------

@dataclass
class AnalysisReport:
    model: ModelSpec
    mode: str
    verdicts: list[TheoremVerdict]
    brute: LieSpanReport
    agreement: bool
    warnings: list[str]
    parabolic: LieSpanReport | None = None
    observation: LieSpanReport | None = None
    isolating: list[IsolatingOperator] | None = None
    checks: list[dict] = field(default_factory=list)

    def verdict(self, theorem: str) -> TheoremVerdict | None:
        return next((v for v in self.verdicts if v.theorem == theorem), None)

    def to_dict(self) -> dict:
        d = {
            "model": self.model.to_dict(),
            "mode": self.mode,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "brute": self.brute.to_dict(),
            "agreement": self.agreement,
            "agreement_checks": self.checks,
            "warnings": list(self.warnings),
        }
        if self.parabolic is not None:
            d["parabolic"] = self.parabolic.to_dict()
            d["parabolic_additive"] = _additive(self.brute, self.parabolic, 1)
        if self.observation is not None:
            d["observation"] = self.observation.to_dict()
            d["observation_additive"] = _additive(self.brute, self.observation, self.model.k)
        if self.isolating is not None:
            d["isolating_operators"] = [op.to_dict() for op in self.isolating]
        return d


def _additive(base: LieSpanReport, aug: LieSpanReport, extra: int) -> bool:
    return all(b + extra == a for b, a in zip(base.rank_per_point, aug.rank_per_point))


def analyze(spec: ModelSpec, max_depth: int | None = None, num_points: int = DEFAULT_NUM_POINTS, seed: int = 0,
            parabolic: bool = False, with_x: bool = False, isolating: bool = False) -> AnalysisReport:
    geom = derive_geometry(spec)
    warnings = [w.message for w in geom.warnings]
    mode = "testing" if spec.is_testing else "detection"
    if mode == "testing":
        verdicts = [check_testing_iff(geom)]
    else:
        verdicts = [check_detection_suff_inflow(spec), check_detection_suff_augmented(spec, geom)]
    depth = default_depth(spec) if max_depth is None else max_depth
    points = sample_points(spec.n, num_points, seed)
    gens = model_generators(spec, mode)
    brute = generate_lie_span(gens, depth, points)
    if brute.verdict == "DEPTH_EXHAUSTED":
        warnings.append(f"bracket search exhausted at depth {brute.depth_reached}: analysis inconclusive "
                        + brute.note)
    checks = []
    agreement = True
    for v in verdicts:
        if v.applicable and v.predicted_lie_dim is not None:
            ok = all(r == v.predicted_lie_dim for r in brute.rank_per_point)
            checks.append({"theorem": v.theorem, "predicted": v.predicted_lie_dim,
                           "brute_ranks": brute.rank_per_point, "agree": ok})
            if not ok:
                agreement = False
                warnings.append(f"DISAGREEMENT: {v.theorem} predicts dimension {v.predicted_lie_dim} "
                                f"but sampled ranks are {brute.rank_per_point}")
    para = obs = None
    if parabolic:
        para = generate_lie_span(augment_parabolic(gens, spec.n), depth, points)
        if not _additive(brute, para, 1):
            warnings.append("parabolic rank is not base rank + 1 at every sample")
    if with_x:
        obs = generate_lie_span(augment_observation(spec, mode), depth, points)
        if not _additive(brute, obs, spec.k):
            warnings.append(f"(phi,x) rank is not base rank + {spec.k} at every sample")
    iso = None
    inflow = next((v for v in verdicts if v.theorem == DETECT_SUFF_INFLOW), None)
    if isolating and inflow is not None and inflow.holds:
        iso = construct_isolating_operators(spec, geom)
        fallback = [op.target for op in iso if op.achieved_form != PURE_E_I]
        if fallback:
            warnings.append(f"isolating operator construction fell back for coordinates {fallback}")
    return AnalysisReport(spec, mode, verdicts, brute, agreement, warnings, para, obs, iso, checks)
