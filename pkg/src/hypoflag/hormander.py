"""Bracket-generating rank checks at sampled interior points.

The engine grows right-nested brackets ``[g, E]`` of generators ``g`` with
retained entries ``E`` and keeps a candidate only if it raises the exact rank
of the evaluated span at some sample point. Rank failures at rational points
are certificates; success at every sample is only evidence, which is why the
positive verdict is called ``SPANS_EVERY_SAMPLE``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .linalg import bareiss_rank, integer_row
from .model import ModelSpec, derive_geometry
from .polyfield import (
    DEFAULT_MAX_DEGREE,
    DegreeGuardError,
    DomainError,
    MultiPoly,
    RationalCoefficient,
    VectorField,
    build_detection_drift,
    build_diffusion_fields,
    build_testing_drift,
    extend_coords,
    lie_bracket,
)

SPANS_EVERY_SAMPLE = "SPANS_EVERY_SAMPLE"
FAILS_AT_SAMPLE = "FAILS_AT_SAMPLE"
DEPTH_EXHAUSTED = "DEPTH_EXHAUSTED"

DEFAULT_NUM_POINTS = 5
DEFAULT_MAX_ENTRIES = 400


class UsageError(ValueError):
    pass


@dataclass
class BracketEntry:
    field: VectorField
    depth: int
    provenance: str


@dataclass
class LieSpanReport:
    points: list[list[Fraction]]
    rank_per_point: list[int]
    achieved_at_depth: list[int]
    spanning_basis: list[list[str]]
    verdict: str
    failing_points: list[int] = field(default_factory=list)
    ambient_dim: int = 0
    coords: tuple[str, ...] = ()
    depth_reached: int = 0
    retained: int = 0
    note: str = ""

    @property
    def min_rank(self) -> int:
        return min(self.rank_per_point, default=0)

    def to_dict(self) -> dict:
        return {
            "points": [[str(x) for x in p] for p in self.points],
            "ranks": list(self.rank_per_point),
            "depth": list(self.achieved_at_depth),
            "basis": [list(b) for b in self.spanning_basis],
            "verdict": self.verdict,
            "failing_points": list(self.failing_points),
            "ambient_dim": self.ambient_dim,
            "coords": list(self.coords),
            "depth_reached": self.depth_reached,
            "note": self.note,
        }


class _PointSpan:
    """Independent evaluated rows at one sample point."""

    def __init__(self, dim: int):
        self.dim = dim
        self.rows: list[list[int]] = []

    @property
    def rank(self) -> int:
        return len(self.rows)

    def increases(self, vec: Sequence[Fraction]) -> bool:
        if self.rank == self.dim or all(v == 0 for v in vec):
            return False
        row = integer_row(vec)
        return bareiss_rank(self.rows + [row]) > self.rank

    def add(self, vec: Sequence[Fraction]) -> None:
        self.rows.append(integer_row(vec))


def _check_points(points, n):
    pts = []
    for p in points:
        p = [Fraction(x) for x in p]
        if len(p) != n:
            raise ValueError(f"sample point {p} must have {n} phi coordinates")
        if any(x <= 0 for x in p):
            raise DomainError(f"sample point {p} is not in the open orthant")
        pts.append(p)
    return pts


def generate_lie_span(generators: Sequence[VectorField], max_depth: int, points: Sequence[Sequence],
                      max_degree: int = DEFAULT_MAX_DEGREE, max_entries: int = DEFAULT_MAX_ENTRIES) -> LieSpanReport:
    """Grow the bracket algebra of ``generators`` and record the span rank at each point.

    Points are phi coordinates only; extra coordinates never enter the
    coefficients.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if not generators:
        raise ValueError("need at least one generator")
    g0 = generators[0]
    for g in generators[1:]:
        g0._check_compatible(g)
    n, dim = g0.n, g0.dim
    pts = _check_points(points, n)
    spans = [_PointSpan(dim) for _ in pts]
    basis: list[list[str]] = [[] for _ in pts]
    achieved = [0] * len(pts)
    retained: list[BracketEntry] = []
    note = ""

    def offer(entry: BracketEntry) -> bool:
        values = [entry.field.evaluate(p) for p in pts]
        hit = False
        for idx, (span, vec) in enumerate(zip(spans, values)):
            if span.increases(vec):
                span.add(vec)
                basis[idx].append(entry.provenance)
                achieved[idx] = entry.depth
                hit = True
        return hit

    def full() -> bool:
        return all(s.rank == dim for s in spans)

    frontier = []
    for g in generators:
        e = BracketEntry(g, 0, g.name)
        if offer(e):
            retained.append(e)
        frontier.append(e)
    depth = 0
    exhausted = False
    # generators are always bracketed once even if they add no rank themselves
    while not full():
        if depth >= max_depth:
            exhausted = bool(frontier)
            break
        depth += 1
        new_frontier = []
        try:
            for e in frontier:
                for g in generators:
                    if g is e.field:
                        continue
                    b = lie_bracket(g, e.field, max_degree=max_degree, name=f"[{g.name},{e.provenance}]")
                    cand = BracketEntry(b, depth, b.name)
                    if offer(cand):
                        retained.append(cand)
                        new_frontier.append(cand)
                        if len(retained) > max_entries:
                            raise DegreeGuardError(f"more than {max_entries} retained brackets")
                    if full():
                        break
                if full():
                    break
        except DegreeGuardError as exc:
            exhausted = True
            note = str(exc)
            break
        frontier = new_frontier
        if not frontier:
            break

    ranks = [s.rank for s in spans]
    failing = [i for i, r in enumerate(ranks) if r < dim]
    if not failing:
        verdict = SPANS_EVERY_SAMPLE
    elif exhausted:
        verdict = DEPTH_EXHAUSTED
    else:
        verdict = FAILS_AT_SAMPLE
    return LieSpanReport(
        points=pts,
        rank_per_point=ranks,
        achieved_at_depth=achieved,
        spanning_basis=basis,
        verdict=verdict,
        failing_points=failing,
        ambient_dim=dim,
        coords=g0.coord_names,
        depth_reached=depth,
        retained=len(retained),
        note=note,
    )


def sample_points(n: int, num_points: int = DEFAULT_NUM_POINTS, seed: int = 0) -> list[list[Fraction]]:
    """Random rationals p/q with p, q uniform in 1..64, reproducible from ``seed``."""
    rng = random.Random(seed)
    return [[Fraction(rng.randint(1, 64), rng.randint(1, 64)) for _ in range(n)] for _ in range(num_points)]


def model_generators(spec: ModelSpec, mode: str | None = None) -> list[VectorField]:
    """Drift first, then the k diffusion fields."""
    if mode is None:
        mode = "testing" if spec.is_testing else "detection"
    geom = derive_geometry(spec)
    diffusion = build_diffusion_fields(geom)
    if mode == "testing":
        if not spec.is_testing:
            raise UsageError("testing mode requires Q = 0")
        drift = build_testing_drift(geom)
    elif mode == "detection":
        drift = build_detection_drift(spec, geom)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    return [drift] + diffusion


def default_depth(spec: ModelSpec) -> int:
    return spec.n + 2


def check_hormander(spec: ModelSpec, mode: str | None = None, max_depth: int | None = None,
                    num_points: int = DEFAULT_NUM_POINTS, seed: int = 0,
                    max_degree: int = DEFAULT_MAX_DEGREE) -> LieSpanReport:
    gens = model_generators(spec, mode)
    depth = default_depth(spec) if max_depth is None else max_depth
    return generate_lie_span(gens, depth, sample_points(spec.n, num_points, seed), max_degree=max_degree)


def augment_parabolic(generators: Sequence[VectorField], n: int) -> list[VectorField]:
    """Replace the drift (first generator) by -d/dt + drift on phi x t."""
    drift, rest = generators[0], generators[1:]
    if drift.n != n:
        raise ValueError("generators do not live on phi^n")
    minus_one = RationalCoefficient.constant(n, -1)
    out = [extend_coords(drift, ["t"], [minus_one], name=f"-d_t+{drift.name}")]
    out += [extend_coords(g, ["t"]) for g in rest]
    return out


def observation_drift_coefficients(spec: ModelSpec) -> list[RationalCoefficient]:
    """Posterior mean drift (lambda_0 + sum_i lambda_i phi_i) / y, one coefficient per channel."""
    n = spec.n
    out = []
    for r in range(spec.k):
        p = MultiPoly.constant(n, spec.lam[0][r])
        for i in range(1, n + 1):
            p = p + MultiPoly.var(n, i - 1, spec.lam[i][r])
        out.append(RationalCoefficient.poly(p, 1))
    return out


def augment_observation(spec: ModelSpec, mode: str | None = None) -> list[VectorField]:
    """Generators on phi x x: drift + sum_r lam~_r d/dx_r, and D_r + d/dx_r."""
    base = model_generators(spec, mode)
    n, k = spec.n, spec.k
    xs = [f"x{r + 1}" for r in range(k)]
    drift = extend_coords(base[0], xs, observation_drift_coefficients(spec), name=f"{base[0].name}+D^X")
    out = [drift]
    for r, D in enumerate(base[1:]):
        extra = [RationalCoefficient.constant(n, 1 if s == r else 0) for s in range(k)]
        out.append(extend_coords(D, xs, extra, name=f"~{D.name}"))
    return out
