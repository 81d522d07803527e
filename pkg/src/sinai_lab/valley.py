"""Valleys of the potential, return-probability series and recurrence diagnostics.

For a height ``L`` the positive side of a valley is described by

* ``T+``  first ``z >= 0`` where ``V(z) - min_{[0, z]} V >= L``,
* ``R1+`` depth ``-min_{[0, T+]} V``,
* ``b+``  first site in ``[0, T+]`` attaining that minimum,
* ``R2+`` backslope ``max_{[0, b+]} V``,

and the negative side mirrors it (scanning leftwards, ``b-`` the largest
minimizer). An environment is in ``Gamma(L, delta)`` when both depths and
both backslopes are at most ``delta L`` and ``|T+-| <= L^2``.

Potential levels are compared with an absolute slack of ``TIE_TOL`` so that
lattice potentials (two-point laws) do not flip on rounding noise.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import chain1d
from .env import Environment
from .errors import DomainError, EmptyRange, GridMismatch, NotInGamma, ScanExhausted

TIE_TOL = 1e-9


@dataclass
class ValleyDescriptor:
    L: float
    t_minus: int
    t_plus: int
    r1_minus: float
    r1_plus: float
    b_minus: int
    b_plus: int
    r2_minus: float
    r2_plus: float
    delta: float | None = None
    in_gamma: bool = False
    env: Environment | None = field(default=None, repr=False, compare=False)

    def membership(self, delta: float) -> bool:
        lim = delta * self.L + TIE_TOL
        cap = self.L * self.L
        return (
            self.r1_plus <= lim
            and self.r1_minus <= lim
            and self.r2_plus <= lim
            and self.r2_minus <= lim
            and abs(self.t_minus) <= cap
            and self.t_plus <= cap
        )

    def as_row(self) -> dict:
        return {
            "L": self.L,
            "delta": self.delta,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "r1_minus": self.r1_minus,
            "r1_plus": self.r1_plus,
            "b_minus": self.b_minus,
            "b_plus": self.b_plus,
            "r2_minus": self.r2_minus,
            "r2_plus": self.r2_plus,
            "in_gamma": self.in_gamma,
        }


def _side(v: np.ndarray, L: float):
    """Valley statistics on one side; ``v[k]`` is the potential ``k`` sites out."""
    runmin = np.minimum.accumulate(v)
    hits = np.flatnonzero(v - runmin >= L - TIE_TOL)
    if hits.size == 0:
        return None
    t = int(hits[0])
    r1 = -float(runmin[t])
    kb = int(np.flatnonzero(v[: t + 1] <= -r1 + TIE_TOL)[0])
    r2 = float(v[: kb + 1].max())
    return t, r1, kb, r2


def _default_cap(L: float) -> int:
    return int(math.ceil(L * L)) + 64


def _outward(env: Environment, cap: int):
    right = env.potentials(0, cap)
    left = env.potentials(-cap, 0)[::-1]
    return right, left


def _assemble(env, L, right, left, delta):
    plus = _side(right, L)
    minus = _side(left, L)
    if plus is None or minus is None:
        return plus, minus, None
    tp, r1p, bp, r2p = plus
    tm, r1m, bm, r2m = minus
    d = ValleyDescriptor(L, -tm, tp, r1m, r1p, -bm, bp, r2m, r2p, delta=delta, env=env)
    if delta is not None:
        d.in_gamma = d.membership(delta)
    return plus, minus, d


def valley_descriptor(
    env: Environment,
    L: float,
    scan_cap: int | None = None,
    delta: float | None = None,
    unbounded: bool = False,
) -> ValleyDescriptor:
    """Compute the eight valley statistics for height ``L``.

    ``unbounded=True`` keeps doubling the scan (up to ``2**26`` sites) instead
    of stopping at ``scan_cap``.
    """
    if not L > 0:
        raise DomainError("L must be positive")
    cap = _default_cap(L) if scan_cap is None else int(scan_cap)
    while True:
        right, left = _outward(env, cap)
        plus, minus, d = _assemble(env, L, right, left, delta)
        if d is not None:
            return d
        if not unbounded or cap >= 2**26:
            side = "both" if plus is None and minus is None else ("+" if plus is None else "-")
            raise ScanExhausted(side, cap)
        cap *= 2


def gamma_member(env: Environment, L: float, delta: float, scan_cap: int | None = None) -> bool:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta={delta} outside (0, 1)")
    cap = int(math.floor(L * L)) if scan_cap is None else min(int(scan_cap), int(math.floor(L * L)))
    try:
        return valley_descriptor(env, L, cap, delta).in_gamma
    except ScanExhausted:
        return False


@dataclass
class GammaHit:
    L: float
    member: bool
    exhausted: bool
    descriptor: ValleyDescriptor | None = None


def gamma_search(env: Environment, delta: float, L_grid) -> list[GammaHit]:
    """Membership in ``Gamma(L, delta)`` for every ``L`` in an increasing grid.

    One outward scan, sized for the largest ``L``, serves the whole grid.
    """
    grid = [float(L) for L in L_grid]
    if not grid:
        raise DomainError("empty L grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("L grid must be increasing")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta={delta} outside (0, 1)")
    cap = int(math.floor(grid[-1] ** 2))
    right_all, left_all = _outward(env, cap)
    out = []
    for L in grid:
        c = int(math.floor(L * L))
        _, _, d = _assemble(env, L, right_all[: c + 1], left_all[: c + 1], delta)
        if d is None:
            out.append(GammaHit(L, False, True))
        else:
            out.append(GammaHit(L, d.in_gamma, False, d))
    return out


# ---------------------------------------------------------------------------
# return probabilities on long time scales


def prop1_n_grid(L: float, delta: float, points: int = 16) -> np.ndarray:
    """Geometric grid of at most ``points`` integers in ``[e^{3 delta L}, e^{(1-2 delta) L}]``."""
    if delta >= 0.2:
        raise EmptyRange(f"delta={delta} >= 1/5 leaves no admissible n")
    lo = math.ceil(math.exp(3 * delta * L))
    hi = math.floor(math.exp((1 - 2 * delta) * L))
    if lo > hi:
        raise EmptyRange(f"[{lo}, {hi}] is empty")
    grid = np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))
    return np.clip(grid, lo, hi)


@dataclass
class Prop1Report:
    descriptor: ValleyDescriptor
    delta: float
    ns: np.ndarray
    lhs: np.ndarray
    threshold: float

    @property
    def passed(self) -> np.ndarray:
        return self.lhs >= self.threshold

    @property
    def ratios(self) -> np.ndarray:
        return self.lhs / self.threshold

    @property
    def observed_c(self) -> float:
        return float(self.ratios.min())

    def to_json(self) -> str:
        d = self.descriptor
        payload = {
            "L": d.L,
            "delta": self.delta,
            "t_minus": d.t_minus,
            "t_plus": d.t_plus,
            "b_minus": d.b_minus,
            "b_plus": d.b_plus,
            "threshold": self.threshold,
            "rows": [
                {"n": int(n), "lhs": float(v), "threshold": self.threshold, "pass": bool(v >= self.threshold)}
                for n, v in zip(self.ns, self.lhs)
            ],
            "observed_C": self.observed_c,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def prop1_check(env: Environment, L: float, delta: float, n_samples=None) -> Prop1Report:
    """Certified lower bounds for ``P(X_{2n} = 0)`` inside a ``Gamma(L, delta)`` valley.

    The walk is killed outside ``[T- - 1, T+ + 1]``; the bound is compared with
    ``exp(-3 delta L)``. The ratio to that threshold is reported, not assumed.
    """
    grid = prop1_n_grid(L, delta)
    if n_samples is None:
        ns = grid
    else:
        ns = np.asarray(n_samples, dtype=np.int64)
        lo, hi = grid[0], grid[-1]
        if np.any((ns < lo) | (ns > hi)):
            raise EmptyRange(f"sample n outside [{lo}, {hi}]")
    if not gamma_member(env, L, delta):
        raise NotInGamma(f"environment not in Gamma({L}, {delta})")
    d = valley_descriptor(env, L, int(math.floor(L * L)), delta)
    window = (d.t_minus - 1, d.t_plus + 1)
    lhs = chain1d.absorbing_mass_at_times(env, window, 0, 0, 2 * ns)
    return Prop1Report(d, delta, ns, lhs, math.exp(-3 * delta * L))


# ---------------------------------------------------------------------------
# series and diagnostics


@dataclass
class ReturnSeries:
    env_id: str
    ns: np.ndarray
    probs: np.ndarray
    mode: str = "exact"

    def __post_init__(self):
        self.ns = np.asarray(self.ns, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=float)
        if len(self.ns) != len(self.probs):
            raise DomainError("ns and probs differ in length")
        if np.any(np.diff(self.ns) <= 0):
            raise DomainError("n must be strictly increasing")
        if np.any((self.probs < 0) | (self.probs > 1 + 1e-12)):
            raise DomainError("probabilities must lie in [0, 1]")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,probability,mode\n")
        for n, p in zip(self.ns, self.probs):
            buf.write(f"{int(n)},{float(p)!r},{self.mode}\n")
        return buf.getvalue()


def return_series(env: Environment, n_max: int, mode: str = "exact", window=None, env_id: str | None = None):
    probs = chain1d.return_probabilities(env, n_max, mode, window)
    if env_id is None:
        env_id = f"{env.spec.family}:{env.spec.seed}"
    return ReturnSeries(env_id, np.arange(1, n_max + 1), probs, mode)


def local_exponent(n: int, p: float) -> float:
    """``a`` with ``p = n^{-a}``; ``p = 0`` maps to ``inf``."""
    if n < 2:
        raise DomainError("n must be >= 2")
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if p == 0.0:
        return math.inf
    return -math.log(p) / math.log(n)


@dataclass
class PartialSums:
    ns: np.ndarray
    weighted: np.ndarray
    power: np.ndarray
    product: np.ndarray | None = None

    def at(self, n: int) -> dict:
        i = int(np.searchsorted(self.ns, n))
        if i >= len(self.ns) or self.ns[i] != n:
            raise KeyError(n)
        row = {"weighted": float(self.weighted[i]), "power": float(self.power[i])}
        if self.product is not None:
            row["product"] = float(self.product[i])
        return row

    def to_csv(self) -> str:
        cols = ["N", "weighted", "power"] + (["product"] if self.product is not None else [])
        lines = [",".join(cols)]
        for i, n in enumerate(self.ns):
            vals = [repr(float(self.weighted[i])), repr(float(self.power[i]))]
            if self.product is not None:
                vals.append(repr(float(self.product[i])))
            lines.append(",".join([str(int(n))] + vals))
        return "\n".join(lines) + "\n"


def partial_sums(series: ReturnSeries, alpha: float = 0.0, power: float = 1.0, companions=()) -> PartialSums:
    """Cumulative sums over the series grid.

    * ``weighted``: ``sum p_n n^{-alpha}``
    * ``power``: ``sum p_n^power``
    * ``product``: ``sum p_n prod_k q^{(k)}_n`` over companion series, if any.
    """
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    if power <= 0:
        raise DomainError("power must be > 0")
    ns = series.ns
    p = series.probs
    weighted = np.cumsum(p * ns.astype(float) ** (-alpha))
    powered = np.cumsum(p**power)
    product = None
    if companions:
        prod = p.copy()
        for other in companions:
            if not np.array_equal(other.ns, ns):
                raise GridMismatch("companion series use a different n grid")
            prod = prod * other.probs
        product = np.cumsum(prod)
    return PartialSums(ns.copy(), weighted, powered, product)


def dyadic_block_ends(n_max: int) -> list[int]:
    """``1, 2, 4, ..., 2^k <= n_max`` followed by ``n_max`` itself."""
    ends = []
    k = 1
    while k <= n_max:
        ends.append(k)
        k *= 2
    if ends[-1] != n_max:
        ends.append(n_max)
    return ends


def cp_density(z):
    """Limit density of the return exponent of the continuous-time walk.

    ``2 - z - (z + 2) e^{-2z}`` on ``(0, 1)`` and ``((e^2 - 1) z - 2) e^{-2z}`` for
    ``z >= 1``; zero at ``z = 0``.
    """
    zs = np.asarray(z, dtype=float)
    if np.any(zs < 0):
        raise DomainError("density defined for z >= 0")
    low = 2.0 - zs - (zs + 2.0) * np.exp(-2.0 * zs)
    high = ((math.e**2 - 1.0) * zs - 2.0) * np.exp(-2.0 * zs)
    out = np.where(zs < 1.0, low, high)
    out = np.where(zs == 0.0, 0.0, out)
    return float(out) if np.ndim(z) == 0 else out
