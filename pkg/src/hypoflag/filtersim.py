"""Monte-Carlo simulation of the hidden chain, the observation and both filters.

The posterior-probability filter (on the simplex) and the posterior-likelihood
filter (on the orthant) are integrated by Euler-Maruyama from the same
observation increments, so ``Pi^i`` and ``Phi^i / Y`` must agree up to
discretisation error. That agreement is the dynamics-level check on the
coordinate change the symbolic layer relies on.

Seeding: path ``p`` draws everything (initial state, chain jumps, noise) from
``numpy.random.default_rng(SeedSequence(seed).spawn(num_paths)[p])``, so
results do not depend on chunking or evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, derive_geometry

DEFAULT_PHI_FLOOR = 1e-12
FLAG_THRESHOLD = 0.01


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    dt: float = 1e-3
    num_paths: int = 1000
    seed: int = 0
    prior: tuple[float, ...] | None = None
    save_every: int | None = None
    phi_floor: float = DEFAULT_PHI_FLOOR
    chunk_size: int = 2000

    def validate(self, n: int) -> None:
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if not 0 < self.dt < self.T:
            raise ValueError("need 0 < dt < T")
        if self.num_paths < 1:
            raise ValueError("num_paths must be positive")
        if self.prior is not None:
            p = np.asarray(self.prior, dtype=float)
            if p.shape != (n + 1,) or np.any(p <= 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
                raise ValueError("prior must be a strictly positive probability vector over the n+1 states")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def prior_vector(self, n: int) -> np.ndarray:
        if self.prior is None:
            return np.full(n + 1, 1.0 / (n + 1))
        p = np.asarray(self.prior, dtype=float)
        return p / p.sum()

    def to_dict(self) -> dict:
        return {"T": self.T, "dt": self.dt, "num_paths": self.num_paths, "seed": self.seed,
                "prior": None if self.prior is None else list(self.prior),
                "save_every": self.save_every, "phi_floor": self.phi_floor}


@dataclass
class SimulationBatch:
    times: np.ndarray
    theta: np.ndarray
    X: np.ndarray
    Pi: np.ndarray
    Phi: np.ndarray
    flagged: np.ndarray
    diagnostics: dict
    statistics: dict
    config: SimConfig

    def summary(self) -> dict:
        return {"config": self.config.to_dict(), "diagnostics": self.diagnostics, "statistics": self.statistics}

    def dump_csv(self, path) -> None:
        n1 = self.Pi.shape[-1]
        k = self.X.shape[-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "t", "theta"] + [f"X{r + 1}" for r in range(k)]
                       + [f"Pi{i}" for i in range(n1)] + [f"Phi{i + 1}" for i in range(n1 - 1)])
            for p in range(self.theta.shape[0]):
                for s, t in enumerate(self.times):
                    w.writerow([p, repr(float(t)), int(self.theta[p, s])]
                               + [repr(float(v)) for v in self.X[p, s]]
                               + [repr(float(v)) for v in self.Pi[p, s]]
                               + [repr(float(v)) for v in self.Phi[p, s]])


def _float_model(spec: ModelSpec):
    lam = np.array([[float(x) for x in row] for row in spec.lam])
    Q = np.array([[float(x) for x in row] for row in spec.Q])
    return lam, Q


def simulate_chain(Q, T: float, dt: float, rng: np.random.Generator, initial_state: int) -> np.ndarray:
    """Exact-jump chain sampled on the grid 0, dt, ..., T (state at each grid time)."""
    Q = np.asarray(Q, dtype=float)
    steps = int(round(T / dt))
    grid = np.arange(steps + 1) * dt
    path = np.empty(steps + 1, dtype=np.int64)
    state = int(initial_state)
    t = 0.0
    idx = 0
    while True:
        rate = -Q[state, state]
        if rate <= 0:
            path[idx:] = state
            break
        t_next = t + rng.exponential(1.0 / rate)
        end = int(np.searchsorted(grid, t_next, side="left"))
        path[idx:end] = state
        idx = end
        if idx > steps:
            break
        probs = np.clip(Q[state], 0.0, None)
        probs[state] = 0.0
        state = int(rng.choice(len(probs), p=probs / probs.sum()))
        t = t_next
    return path


def simulate_observation(theta: np.ndarray, lam, dt: float, rng: np.random.Generator) -> np.ndarray:
    """X on the grid with increments lam[theta] dt + sqrt(dt) xi; X_0 = 0."""
    lam = np.asarray(lam, dtype=float)
    steps = len(theta) - 1
    k = lam.shape[1]
    dX = lam[theta[:-1]] * dt + math.sqrt(dt) * rng.standard_normal((steps, k))
    X = np.zeros((steps + 1, k))
    np.cumsum(dX, axis=0, out=X[1:])
    return X


def pi_step(Pi: np.ndarray, dX: np.ndarray, lam: np.ndarray, Q: np.ndarray, dt: float):
    """One Euler-Maruyama step of the simplex filter; returns (new, pre-normalisation drift, invalid mask)."""
    lbar = Pi @ lam
    dW = dX - lbar * dt
    innov = (lam[None, :, :] - lbar[:, None, :]) @ dW[:, :, None]
    new = Pi + (Pi @ Q) * dt + Pi * innov[:, :, 0]
    drift = np.abs(new.sum(axis=1) - 1.0)
    np.clip(new, 0.0, None, out=new)
    total = new.sum(axis=1)
    invalid = ~(total > 0) | ~np.isfinite(total)
    total = np.where(invalid, 1.0, total)
    new /= total[:, None]
    return new, drift, invalid


def phi_step(Phi: np.ndarray, dX: np.ndarray, lam: np.ndarray, Q: np.ndarray, A: np.ndarray,
             sigma: np.ndarray, dt: float, floor: float):
    """One Euler-Maruyama step of the likelihood filter; returns (new, floor hits per path, invalid mask)."""
    full = np.concatenate([np.ones((Phi.shape[0], 1)), Phi], axis=1)
    Y = full.sum(axis=1)
    lbar = (full @ lam) / Y[:, None]
    dW = dX - lbar * dt
    flow = full @ Q
    drift = flow[:, 1:] - Phi * flow[:, :1] + Phi * (Phi @ sigma) / Y[:, None]
    new = Phi + drift * dt + Phi * (dW @ A)
    low = new <= 0
    hits = low.sum(axis=1)
    if hits.any():
        new = np.where(low, floor, new)
    invalid = ~np.all(np.isfinite(new), axis=1)
    return new, hits, invalid


def _geometry_arrays(spec: ModelSpec):
    geom = derive_geometry(spec)
    A = np.array([[float(x) for x in row] for row in geom.A])
    sigma = np.array([[float(x) for x in row] for row in geom.sigma])
    return A, sigma


def filter_pi(X: np.ndarray, spec: ModelSpec, pi0, dt: float) -> np.ndarray:
    """Simplex filter along observation path(s) ``X`` of shape (steps+1, k) or (paths, steps+1, k)."""
    lam, Q = _float_model(spec)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    dX = np.diff(X, axis=1)
    Pi = np.tile(np.asarray(pi0, dtype=float), (X.shape[0], 1))
    out = np.empty((X.shape[0], X.shape[1], Pi.shape[1]))
    out[:, 0] = Pi
    for s in range(dX.shape[1]):
        Pi, _, _ = pi_step(Pi, dX[:, s], lam, Q, dt)
        out[:, s + 1] = Pi
    return out[0] if single else out


def filter_phi(X: np.ndarray, spec: ModelSpec, phi0, dt: float, floor: float = DEFAULT_PHI_FLOOR) -> np.ndarray:
    """Likelihood filter along observation path(s) ``X``."""
    lam, Q = _float_model(spec)
    A, sigma = _geometry_arrays(spec)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    dX = np.diff(X, axis=1)
    Phi = np.tile(np.asarray(phi0, dtype=float), (X.shape[0], 1))
    out = np.empty((X.shape[0], X.shape[1], Phi.shape[1]))
    out[:, 0] = Phi
    for s in range(dX.shape[1]):
        Phi, _, _ = phi_step(Phi, dX[:, s], lam, Q, A, sigma, dt, floor)
        out[:, s + 1] = Phi
    return out[0] if single else out


def phi_drift(spec: ModelSpec, phi) -> np.ndarray:
    """Drift coefficient of the likelihood SDE at ``phi`` (float)."""
    lam, Q = _float_model(spec)
    A, sigma = _geometry_arrays(spec)
    Phi = np.asarray(phi, dtype=float)[None]
    full = np.concatenate([[[1.0]], Phi], axis=1)
    Y = full.sum(axis=1)
    flow = full @ Q
    return (flow[:, 1:] - Phi * flow[:, :1] + Phi * (Phi @ sigma) / Y[:, None])[0]


def path_generators(seed: int, num_paths: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_paths)]


def run_batch(spec: ModelSpec, cfg: SimConfig) -> SimulationBatch:
    cfg.validate(spec.n)
    lam, Q = _float_model(spec)
    A, sigma = _geometry_arrays(spec)
    n1, k = spec.n + 1, spec.k
    steps = cfg.steps
    dt = cfg.dt
    save_every = cfg.save_every or max(1, steps // 100)
    saved_idx = list(range(0, steps + 1, save_every))
    if saved_idx[-1] != steps:
        saved_idx.append(steps)
    save_pos = {s: i for i, s in enumerate(saved_idx)}
    P = cfg.num_paths
    prior = cfg.prior_vector(spec.n)
    phi0 = prior[1:] / prior[0]

    theta_s = np.empty((P, len(saved_idx)), dtype=np.int64)
    X_s = np.empty((P, len(saved_idx), k))
    Pi_s = np.empty((P, len(saved_idx), n1))
    Phi_s = np.empty((P, len(saved_idx), n1 - 1))
    flagged = np.zeros(P, dtype=bool)
    floor_hits = np.zeros(P, dtype=np.int64)
    max_drift = 0.0
    sup_gap = np.zeros(P)
    sum_pi = np.zeros((len(saved_idx), n1))
    sum_phi = np.zeros((len(saved_idx), n1))
    min_phi = np.inf

    gens = path_generators(cfg.seed, P)
    for start in range(0, P, cfg.chunk_size):
        stop = min(P, start + cfg.chunk_size)
        m = stop - start
        thetas = np.empty((m, steps + 1), dtype=np.int64)
        dX = np.empty((m, steps, k))
        for p in range(m):
            rng = gens[start + p]
            s0 = int(rng.choice(n1, p=prior))
            thetas[p] = simulate_chain(Q, cfg.T, dt, rng, s0)
            dX[p] = lam[thetas[p, :-1]] * dt + math.sqrt(dt) * rng.standard_normal((steps, k))
        Pi = np.tile(prior, (m, 1))
        Phi = np.tile(phi0, (m, 1))
        X = np.zeros((m, k))
        bad = np.zeros(m, dtype=bool)
        hits = np.zeros(m, dtype=np.int64)
        gap = np.zeros(m)
        for s in range(steps + 1):
            if s > 0:
                inc = dX[:, s - 1]
                X = X + inc
                Pi, drift, inv_pi = pi_step(Pi, inc, lam, Q, dt)
                Phi, h, inv_phi = phi_step(Phi, inc, lam, Q, A, sigma, dt, cfg.phi_floor)
                max_drift = max(max_drift, float(drift.max()))
                bad |= inv_pi | inv_phi
                hits += h
            Y = 1.0 + Phi.sum(axis=1)
            ratio = np.concatenate([1.0 / Y[:, None], Phi / Y[:, None]], axis=1)
            with np.errstate(invalid="ignore"):
                gap = np.fmax(gap, np.abs(Pi - ratio).max(axis=1))
            pos = save_pos.get(s)
            if pos is not None:
                theta_s[start:stop, pos] = thetas[:, s]
                X_s[start:stop, pos] = X
                Pi_s[start:stop, pos] = Pi
                Phi_s[start:stop, pos] = Phi
                good = ~bad
                sum_pi[pos] += Pi[good].sum(axis=0)
                sum_phi[pos] += ratio[good].sum(axis=0)
        flagged[start:stop] = bad
        floor_hits[start:stop] = hits
        sup_gap[start:stop] = gap
        if (~bad).any():
            min_phi = min(min_phi, float(Phi_s[start:stop][~bad].min()))

    good = ~flagged
    n_good = int(good.sum())
    n_flag = int(flagged.sum())
    if n_flag > FLAG_THRESHOLD * P:
        raise SimulationError(f"{n_flag} of {P} paths flagged invalid (> {FLAG_THRESHOLD:.0%})")
    final_pi = Pi_s[good, -1]
    means = final_pi.mean(axis=0)
    stderr = final_pi.std(axis=0, ddof=1) / math.sqrt(n_good) if n_good > 1 else np.zeros(n1)
    weak_gap = float(np.abs(sum_pi - sum_phi).max() / max(n_good, 1))
    stats = {
        "paths_used": n_good,
        "flagged_paths": n_flag,
        "pi_T_mean": means.tolist(),
        "pi_T_stderr": stderr.tolist(),
        "true_state_T_freq": (np.bincount(theta_s[good, -1], minlength=n1) / max(n_good, 1)).tolist(),
        "map_accuracy_T": float(np.mean(final_pi.argmax(axis=1) == theta_s[good, -1])) if n_good else float("nan"),
        "prior": prior.tolist(),
        "consistency_sup": float(sup_gap[good].max()) if n_good else float("nan"),
        "consistency_mean_sup": float(sup_gap[good].mean()) if n_good else float("nan"),
        "weak_consistency_sup": weak_gap,
        "one_minus_pi0_T_mean": float(1.0 - means[0]),
        "floor_hits": int(floor_hits.sum()),
    }
    if spec.is_testing:
        dev = np.abs(means - prior)
        stats["martingale_deviation"] = dev.tolist()
        stats["martingale_ok"] = bool(np.all(dev <= 3 * stderr))
    diagnostics = {
        "max_simplex_drift": max_drift,
        "min_phi": min_phi,
        "floor_hits": int(floor_hits.sum()),
        "flagged_paths": n_flag,
        "saved_points": len(saved_idx),
        "seeding": "SeedSequence(seed).spawn(num_paths); one stream per path",
    }
    times = np.array(saved_idx) * dt
    return SimulationBatch(times, theta_s, X_s, Pi_s, Phi_s, flagged, diagnostics, stats, cfg)
