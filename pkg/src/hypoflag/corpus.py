"""Built-in example models: testing three drifts, multi-coordinate change
detection, regime tracking, and the Byzantine channel model."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Callable

from .model import ModelSpec


def testing_three_drifts() -> ModelSpec:
    return ModelSpec.from_values([[0], [1], [2]], labels=["H0", "H1", "H2"])


def multi_coordinate_detection(N: int = 4, K: int = 2, mu=1, rate=1) -> ModelSpec:
    """N channels; after an exponential time exactly K of them gain drift ``mu``.

    State 0 is "no change"; state j >= 1 is the j-th K-subset (lexicographic).
    """
    mu, rate = Fraction(mu), Fraction(rate)
    if mu == 0:
        raise ValueError("mu must be nonzero")
    subsets = list(combinations(range(N), K))
    n = len(subsets)
    lam = [[0] * N] + [[mu if r in S else 0 for r in range(N)] for S in subsets]
    Q = [[0] * (n + 1) for _ in range(n + 1)]
    Q[0][0] = -n * rate
    for j in range(1, n + 1):
        Q[0][j] = rate
    labels = ["none"] + ["+".join(str(r + 1) for r in S) for S in subsets]
    return ModelSpec.from_values(lam, Q, labels)


def regime_tracking(switch_on=(1, 2, 3), switch_off=(1, 1, 2)) -> ModelSpec:
    """k=2, n=3: state 0 is "off"; it switches on to level i at rate q_i and back at rate p_i."""
    lam = [[0, 0], [1, 0], [0, 1], [1, 2]]
    n = 3
    Q = [[0] * (n + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        Q[0][i] = Fraction(switch_on[i - 1])
        Q[i][0] = Fraction(switch_off[i - 1])
        Q[i][i] = -Q[i][0]
    Q[0][0] = -sum(Q[0][1:])
    return ModelSpec.from_values(lam, Q, ["off", "level1", "level2", "level3"])


def byzantine(mu0=0, mu1=1, m0=0, m1=1, rate=1) -> ModelSpec:
    """Two channels; state 0 is post-change (mu1, m1); states 1..3 are the
    pre-change configurations, each switching to state 0 at ``rate``."""
    rate = Fraction(rate)
    lam = [[mu1, m1], [mu0, m1], [mu1, m0], [mu0, m0]]
    Q = [[0, 0, 0, 0], [rate, -rate, 0, 0], [rate, 0, -rate, 0], [rate, 0, 0, -rate]]
    return ModelSpec.from_values(lam, Q, ["both-changed", "x2-only", "x1-only", "none"])


def classic_detection(mu=1, rate=1) -> ModelSpec:
    """One channel, one change to drift ``mu`` at an exponential time."""
    return ModelSpec.from_values([[0], [mu]], [[-rate, rate], [0, 0]], ["before", "after"])


@dataclass(frozen=True)
class ExampleDescriptor:
    name: str
    title: str
    build: Callable[..., ModelSpec]
    parameters: dict = field(default_factory=dict)
    expected_theorem: str = ""
    expected_rank: int = 0

    def model(self, **overrides) -> ModelSpec:
        params = dict(self.parameters)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return self.build(**params)

    def expected(self, **overrides) -> dict:
        if self.name == "multi-coordinate-detection":
            params = dict(self.parameters)
            params.update({k: v for k, v in overrides.items() if v is not None})
            rank = comb(params["N"], params["K"])
        else:
            rank = self.expected_rank
        return {"theorem": self.expected_theorem, "holds": True, "rank": rank,
                "verdict": "SPANS_EVERY_SAMPLE"}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "parameters": {k: str(v) for k, v in self.parameters.items()},
            "expected": self.expected(),
        }


EXAMPLES: dict[str, ExampleDescriptor] = {
    d.name: d
    for d in [
        ExampleDescriptor("testing-three-drifts", "Testing three drifts of a 1D Brownian motion",
                          testing_three_drifts, {}, "TESTING_IFF", 2),
        ExampleDescriptor("multi-coordinate-detection", "Change in K of N coordinates",
                          multi_coordinate_detection, {"N": 4, "K": 2, "mu": 1, "rate": 1},
                          "DETECT_SUFF_INFLOW", 6),
        ExampleDescriptor("regime-tracking", "Sequential tracking with regime switching",
                          regime_tracking, {}, "DETECT_SUFF_INFLOW", 3),
        ExampleDescriptor("byzantine", "Byzantine testing and detection", byzantine,
                          {"mu0": 0, "mu1": 1, "m0": 0, "m1": 1, "rate": 1}, "DETECT_SUFF_AUGMENTED", 3),
    ]
}


def corpus_models() -> dict[str, ModelSpec]:
    return {name: d.model() for name, d in EXAMPLES.items()}
