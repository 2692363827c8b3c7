"""Hidden-Markov drift model: the drift vectors, the generator Q and the
drift-difference geometry (A, Sigma) every other module is built on."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence


class StructuralError(ValueError):
    """Model data is malformed (wrong shapes, unparseable numbers)."""


class ModelError(ValueError):
    """Model is well formed but violates a semantic assumption."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> dict:
        return {
            "valid": self.ok,
            "violations": [{"code": v.code, "message": v.message} for v in self.violations],
            "warnings": [{"code": v.code, "message": v.message} for v in self.warnings],
        }


def parse_rational(value) -> Fraction:
    """Parse ``"p/q"``, a decimal literal, or an int exactly.

    Floats are converted through their shortest repr so ``0.1`` means 1/10.
    """
    if isinstance(value, bool):
        raise StructuralError(f"not a number: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise StructuralError(f"cannot parse rational {value!r}") from exc
    raise StructuralError(f"cannot parse rational {value!r}")


def format_rational(x: Fraction) -> str:
    return str(x)


def _matrix(rows, name: str) -> tuple[tuple[Fraction, ...], ...]:
    if not isinstance(rows, (list, tuple)):
        raise StructuralError(f"{name} must be a list of rows")
    out = []
    for row in rows:
        if not isinstance(row, (list, tuple)):
            raise StructuralError(f"{name} rows must be lists")
        out.append(tuple(parse_rational(v) for v in row))
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """Drift vectors ``lam[0..n]`` in Q^k and generator ``Q`` of size (n+1)x(n+1)."""

    k: int
    n: int
    lam: tuple[tuple[Fraction, ...], ...]
    Q: tuple[tuple[Fraction, ...], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "lam", _matrix(self.lam, "lambda"))
        object.__setattr__(self, "Q", _matrix(self.Q, "Q"))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        check_structure(self)

    @classmethod
    def from_values(cls, lam, Q=None, labels=None) -> "ModelSpec":
        """Build from nested numbers; ``Q=None`` means the zero generator."""
        lam = _matrix(lam, "lambda")
        if not lam:
            raise StructuralError("need at least one drift vector")
        n = len(lam) - 1
        k = len(lam[0])
        if Q is None:
            Q = [[0] * (n + 1) for _ in range(n + 1)]
        return cls(k=k, n=n, lam=lam, Q=Q, labels=labels)

    @property
    def is_testing(self) -> bool:
        return all(q == 0 for row in self.Q for q in row)

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "n": self.n,
            "lambda": [[format_rational(v) for v in row] for row in self.lam],
            "Q": [[format_rational(v) for v in row] for row in self.Q],
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        if not isinstance(d, dict):
            raise StructuralError("model file must hold a JSON object")
        missing = [key for key in ("k", "n", "lambda", "Q") if key not in d]
        if missing:
            raise StructuralError(f"missing keys: {', '.join(missing)}")
        k, n = d["k"], d["n"]
        if not isinstance(k, int) or not isinstance(n, int) or isinstance(k, bool) or isinstance(n, bool):
            raise StructuralError("k and n must be integers")
        return cls(k=k, n=n, lam=d["lambda"], Q=d["Q"], labels=d.get("labels"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def check_structure(spec: ModelSpec) -> None:
    if spec.k < 1 or spec.n < 1:
        raise StructuralError("k and n must be positive")
    if len(spec.lam) != spec.n + 1:
        raise StructuralError(f"expected {spec.n + 1} drift vectors, got {len(spec.lam)}")
    for i, v in enumerate(spec.lam):
        if len(v) != spec.k:
            raise StructuralError(f"drift vector {i} has length {len(v)}, expected k={spec.k}")
    if len(spec.Q) != spec.n + 1 or any(len(row) != spec.n + 1 for row in spec.Q):
        raise StructuralError(f"Q must be {spec.n + 1}x{spec.n + 1}")
    if spec.labels is not None and len(spec.labels) != spec.n + 1:
        raise StructuralError("labels must name every state")


def validate_model(spec: ModelSpec) -> ValidationResult:
    """Check generator and drift assumptions; never raises for semantic problems."""
    violations = []
    warnings = []
    size = spec.n + 1
    for i, row in enumerate(spec.Q):
        if sum(row) != 0:
            violations.append(Violation("generator-row-sum", f"row {i} of Q sums to {sum(row)}"))
        for j, q in enumerate(row):
            if i != j and q < 0:
                violations.append(Violation("generator-negative-rate", f"Q[{i}][{j}] = {q} < 0"))
        if row[i] > 0:
            violations.append(Violation("generator-positive-diagonal", f"Q[{i}][{i}] = {row[i]} > 0"))
    for i in range(size):
        for j in range(i + 1, size):
            if spec.lam[i] == spec.lam[j]:
                violations.append(Violation("drifts-not-distinct", f"lambda_{i} == lambda_{j}"))
    if spec.k >= spec.n:
        warnings.append(
            Violation("elliptic-regime", f"k={spec.k} >= n={spec.n}: classically elliptic regime, outside the degenerate case this tool targets")
        )
    return ValidationResult(tuple(violations), tuple(warnings))


@dataclass(frozen=True)
class DriftGeometry:
    """``A`` is k x n with columns a_i = lambda_i - lambda_0; ``sigma`` = A^T A."""

    k: int
    n: int
    A: tuple[tuple[Fraction, ...], ...]
    sigma: tuple[tuple[Fraction, ...], ...]
    sqnorms: tuple[Fraction, ...]
    warnings: tuple[Violation, ...] = field(default=())

    def a(self, i: int) -> tuple[Fraction, ...]:
        """Difference vector a_i for i in 1..n."""
        return tuple(self.A[r][i - 1] for r in range(self.k))

    @property
    def columns(self) -> list[tuple[Fraction, ...]]:
        return [self.a(i) for i in range(1, self.n + 1)]


def difference_vectors(spec: ModelSpec) -> list[tuple[Fraction, ...]]:
    base = spec.lam[0]
    return [tuple(x - b for x, b in zip(spec.lam[i], base)) for i in range(1, spec.n + 1)]


def derive_geometry(spec: ModelSpec) -> DriftGeometry:
    result = validate_model(spec)
    if not result.ok:
        raise ModelError(result.violations)
    cols = difference_vectors(spec)
    bad = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            if all(x == -y for x, y in zip(cols[i], cols[j])):
                bad.append(Violation(
                    "difference-vectors-antipodal",
                    f"a_{i + 1} == -a_{j + 1}: lambda_0 is not a vertex of the drift hull",
                ))
    if bad:
        raise ModelError(bad)
    A = tuple(tuple(cols[i][r] for i in range(spec.n)) for r in range(spec.k))
    sigma = tuple(
        tuple(sum((x * y for x, y in zip(cols[i], cols[j])), Fraction(0)) for j in range(spec.n))
        for i in range(spec.n)
    )
    sqnorms = tuple(sigma[i][i] for i in range(spec.n))
    return DriftGeometry(spec.k, spec.n, A, sigma, sqnorms, result.warnings)


def permute_states(spec: ModelSpec, order: Sequence[int]) -> ModelSpec:
    """New state ``s`` is old state ``order[s]``."""
    if sorted(order) != list(range(spec.n + 1)):
        raise ValueError("order must be a permutation of the states")
    lam = [spec.lam[o] for o in order]
    Q = [[spec.Q[a][b] for b in order] for a in order]
    labels = None if spec.labels is None else [spec.labels[o] for o in order]
    return ModelSpec(k=spec.k, n=spec.n, lam=lam, Q=Q, labels=labels)


def relabel_base(spec: ModelSpec, new_base: int) -> ModelSpec:
    """Move state ``new_base`` to the front, keeping the others in order."""
    if not 0 <= new_base <= spec.n:
        raise IndexError(f"state {new_base} out of range 0..{spec.n}")
    order = [new_base] + [s for s in range(spec.n + 1) if s != new_base]
    return permute_states(spec, order)


def zero_generator(size: int) -> list[list[int]]:
    return [[0] * size for _ in range(size)]


def as_fractions(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(parse_rational(v) for v in values)
