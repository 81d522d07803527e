"""Two-sided Brownian paths, valley events and diffusive-scaling checks.

A path is stored as two one-sided arrays on the grid ``t_k = k dt``:
``plus[k] = B(k dt)`` and ``minus[k] = B(-k dt)``. Passage times are grid
times of the first crossing (``B - y`` changes sign), so they are biased late;
event frequencies computed from them are therefore conservative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .env import Environment, make_environment
from .errors import DomainError, HorizonTooShort, SpecInvalid
from .rng import derive_seed, task_rng


@dataclass
class BMPath:
    dt: float
    plus: np.ndarray
    minus: np.ndarray
    sigma: float = 1.0

    @property
    def horizon(self) -> float:
        return self.dt * (min(len(self.plus), len(self.minus)) - 1)

    def side(self, sign: str) -> np.ndarray:
        return self.plus if sign == "+" else self.minus

    @classmethod
    def from_function(cls, f, dt: float, T: float, sigma: float = 1.0) -> "BMPath":
        """Deterministic path for tests: ``B(t) = f(t)`` sampled on the grid."""
        k = int(round(T / dt))
        t = np.arange(k + 1) * dt
        plus = np.asarray(f(t), dtype=float)
        minus = np.asarray(f(-t), dtype=float)
        return cls(dt, plus, minus, sigma)


def sample_bm(sigma: float, dt: float, T: float, seed: int) -> BMPath:
    """Gaussian-increment path on ``[-T, T]`` with ``Var B(t) = sigma^2 |t|``."""
    if not (sigma > 0 and dt > 0 and T > 0):
        raise DomainError("sigma, dt and T must be positive")
    k = int(math.ceil(T / dt - 1e-9))
    rng = task_rng(seed)
    inc = rng.standard_normal((2, k)) * (sigma * math.sqrt(dt))
    sides = np.zeros((2, k + 1))
    np.cumsum(inc, axis=1, out=sides[:, 1:])
    return BMPath(dt, sides[0], sides[1], sigma)


def _first_index(arr: np.ndarray, y: float):
    if y > 0:
        mask = arr >= y
    elif y < 0:
        mask = arr <= y
    else:
        return 0
    i = int(mask.argmax())
    return i if mask[i] else None


def first_passage(path: BMPath, y: float, side: str = "+"):
    """First grid time at which the path reaches ``y`` on one side of the origin.

    On the negative side the returned time is ``<= 0`` (the crossing closest to
    the origin). ``None`` when the level is not reached within the horizon.
    """
    if side not in ("+", "-"):
        raise DomainError("side must be '+' or '-'")
    i = _first_index(path.side(side), y)
    if i is None:
        return None
    t = i * path.dt
    return t if side == "+" else -t


def _min_between(arr, i, j):
    return float(arr[i : j + 1].min())


def _side_events(arr: np.ndarray, dt: float, L: float, delta: float) -> dict:
    """Event clauses on one side, with time measured away from the origin."""
    q = delta * L / 4.0
    fp = lambda y: _first_index(arr, y)  # noqa: E731

    up, down = fp(delta * L), fp(-delta * L)
    F = up is not None and (down is None or up < down)

    G = []
    for i in range(3):
        a, b = fp(2 * i * q), fp((2 * i + 2) * q)
        G.append(a is not None and b is not None and _min_between(arr, a, b) >= (2 * i - 1) * q)

    t11 = fp(1.1 * L)
    A = (
        F
        and t11 is not None
        and t11 * dt <= L * L
        and _min_between(arr, up, t11) >= q
    )

    t12 = fp(1.2 * L)
    t15 = fp(1.5 * delta * L)
    D = (
        all(G)
        and t12 is not None
        and t15 is not None
        and t12 * dt <= 0.9 * L * L
        and _min_between(arr, t15, t12) >= 3 * q
    )
    return {"F": F, "G": tuple(G), "A": bool(A), "D": bool(D)}


@dataclass(frozen=True)
class ValleyEvents:
    A_plus: bool
    A_minus: bool
    D_plus: bool
    D_minus: bool
    F_plus: bool
    F_minus: bool
    G_plus: tuple
    G_minus: tuple

    @property
    def both_D(self) -> bool:
        return self.D_plus and self.D_minus


def event_AD(path: BMPath, L: float, delta: float) -> ValleyEvents:
    """Evaluate the events ``F, G(0..2), A, D`` on both sides of ``path``.

    Each clause is read verbatim off the grid: passage levels ``+-delta L``,
    ``(2i) delta L / 4``, ``1.1 L`` and ``1.2 L``; deadlines ``L^2`` and
    ``0.9 L^2``; running-minimum floors ``delta L / 4`` and ``3 delta L / 4``.
    """
    if not 0.0 < delta < 0.5:
        raise DomainError("delta must lie in (0, 1/2)")
    if path.horizon < 1.3 * L * L * (1 - 1e-9):
        raise HorizonTooShort(f"horizon {path.horizon} < 1.3 L^2 = {1.3 * L * L}")
    p = _side_events(path.plus, path.dt, L, delta)
    m = _side_events(path.minus, path.dt, L, delta)
    return ValleyEvents(p["A"], m["A"], p["D"], m["D"], p["F"], m["F"], p["G"], m["G"])


@dataclass
class EventEstimate:
    delta: float
    L: float
    trials: int
    hits: int
    ci_low: float
    ci_high: float
    confidence: float = 0.99

    @property
    def estimate(self) -> float:
        return self.hits / self.trials

    def to_json(self) -> str:
        return json.dumps(
            {
                "delta": self.delta,
                "L": self.L,
                "trials": self.trials,
                "hits": self.hits,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
            },
            sort_keys=True,
        )


def binomial_ci(hits: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    ci = stats.binomtest(hits, trials).proportion_ci(confidence_level=confidence, method="exact")
    return float(ci.low), float(ci.high)


def count_D_events(delta, L, trial_ids, seed, sigma=1.0, dt=None) -> int:
    """Number of trials (by logical id) whose path lies in ``D+ and D-``."""
    dt = 1e-4 * L * L if dt is None else dt
    T = 1.3 * L * L
    hits = 0
    for i in trial_ids:
        path = sample_bm(sigma, dt, T, derive_seed(seed, int(i)))
        hits += event_AD(path, L, delta).both_D
    return hits


def event_probability(
    delta: float,
    L: float,
    trials: int,
    seed: int,
    sigma: float = 1.0,
    dt: float | None = None,
    confidence: float = 0.99,
    workers: int = 1,
) -> EventEstimate:
    """Monte Carlo frequency of ``D+(L, delta) and D-(L, delta)`` with an exact binomial CI."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if not 0.0 < delta < 0.5:
        raise DomainError("delta must lie in (0, 1/2)")
    ids = np.arange(trials)
    if workers > 1:
        from .parallel import map_tasks

        chunks = np.array_split(ids, workers * 4)
        parts = map_tasks(count_D_events, [(delta, L, c, seed, sigma, dt) for c in chunks], workers)
        hits = int(sum(parts))
    else:
        hits = count_D_events(delta, L, ids, seed, sigma, dt)
    lo, hi = binomial_ci(hits, trials, confidence)
    return EventEstimate(delta, L, trials, hits, lo, hi, confidence)


@dataclass
class TailRow:
    x: float
    mc: float
    se: float
    reflection: float
    bound: float

    @property
    def passes(self) -> bool:
        return self.mc <= self.bound + 4.0 * self.se


def reflection_tail_check(
    sigma: float, T: float, x_grid, trials: int, seed: int = 0, n_steps: int = 10_000
) -> list[TailRow]:
    """Compare ``P(max_{[0,T]} B >= x sigma sqrt(T))`` with ``2 P(Z >= x)`` and ``e^{-x^2/2}/(x sqrt(2 pi))``."""
    xs = np.asarray(list(x_grid), dtype=float)
    if np.any(xs <= 0):
        raise DomainError("x values must be positive")
    scale = sigma * math.sqrt(T / n_steps)
    maxima = np.empty(trials)
    block = 500
    for b, start in enumerate(range(0, trials, block)):
        m = min(block, trials - start)
        rng = task_rng(seed, b)
        paths = np.cumsum(rng.standard_normal((m, n_steps)) * scale, axis=1)
        maxima[start : start + m] = np.maximum(paths.max(axis=1), 0.0)
    rows = []
    for x in xs:
        p = float(np.mean(maxima >= x * sigma * math.sqrt(T)))
        rows.append(
            TailRow(
                float(x),
                p,
                math.sqrt(p * (1 - p) / trials),
                float(2.0 * stats.norm.sf(x)),
                math.exp(-x * x / 2.0) / (x * math.sqrt(2.0 * math.pi)),
            )
        )
    return rows


@dataclass
class DiffusiveReport:
    ks: float
    pvalue: float
    sigma_hat: float
    N: int
    replicas: int


def diffusive_diagnostic(env: Environment, N: int, replicas: int, seed: int | None = None) -> DiffusiveReport:
    """KS distance between ``V(N) / (sigma sqrt(N))`` over replica environments and N(0, 1).

    Replicas reuse the law of ``env`` with seeds derived from ``seed`` (default:
    the environment's own seed). ``sigma^2 = Var(log rho_0)`` is exact.
    """
    if replicas < 2:
        raise DomainError("replicas must be >= 2")
    if N < 1:
        raise DomainError("N must be >= 1")
    spec = env.spec
    if spec.family in ("constant", "explicit"):
        raise SpecInvalid("diffusive diagnostic needs an iid nondegenerate law")
    sigma = spec.sigma
    if not sigma > 0:
        raise SpecInvalid("Var(log rho) = 0")
    base = spec.seed if seed is None else seed
    vals = np.empty(replicas)
    for r in range(replicas):
        rep = make_environment(_reseed(spec, derive_seed(base, r)))
        vals[r] = rep.potential_at(N)
    res = stats.kstest(vals / (sigma * math.sqrt(N)), "norm")
    return DiffusiveReport(float(res.statistic), float(res.pvalue), sigma, N, replicas)


def _reseed(spec, seed):
    from dataclasses import replace

    return replace(spec, seed=seed)
