"""Exact quenched computations for the one-dimensional walk.

Laws of ``X_n`` are propagated with one tridiagonal update per step in three
modes:

``exact``
    the window grows by one cell per side per step, so no mass is ever lost;
``absorbing``
    fixed window, mass stepping outside is dropped. What remains is a
    sub-probability, so every event probability read from it is a lower bound;
``reflecting``
    the walk lives on ``[T-, T+]`` and the boundary cells move inward with
    probability one.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .env import Environment
from .errors import DomainError, NotInGamma, TooLarge, WindowOverflow

MODES = ("exact", "absorbing", "reflecting")

DEFAULT_CELL_CAP = 50_000_000


@dataclass
class DistVector:
    """Probability (or sub-probability) vector on the integer window ``[lo, hi]``."""

    lo: int
    values: np.ndarray
    mode: str = "exact"
    steps: int = 0
    bounds: tuple[int, int] | None = None

    @property
    def hi(self) -> int:
        return self.lo + len(self.values) - 1

    @classmethod
    def point_mass(cls, x0: int, mode: str = "exact", window=None, bounds=None) -> "DistVector":
        if mode == "reflecting":
            if bounds is None:
                raise DomainError("reflecting mode needs bounds (T-, T+)")
            window = bounds
        if window is None:
            window = (x0, x0)
        lo, hi = window
        if not lo <= x0 <= hi:
            raise DomainError(f"start {x0} outside window [{lo}, {hi}]")
        values = np.zeros(hi - lo + 1)
        values[x0 - lo] = 1.0
        return cls(lo, values, mode, 0, tuple(bounds) if bounds is not None else None)

    def at(self, x: int) -> float:
        i = x - self.lo
        if 0 <= i < len(self.values):
            return float(self.values[i])
        return 0.0

    def total(self) -> float:
        return float(math.fsum(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# lo={self.lo},hi={self.hi},mode={self.mode},steps={self.steps}")
        if self.bounds is not None:
            buf.write(f",bounds={self.bounds[0]}:{self.bounds[1]}")
        buf.write("\nx,value\n")
        for i, v in enumerate(self.values):
            buf.write(f"{self.lo + i},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DistVector":
        lines = text.strip().splitlines()
        meta = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split(","))
        values = np.array([float(line.split(",")[1]) for line in lines[2:]])
        bounds = None
        if "bounds" in meta:
            a, b = meta["bounds"].split(":")
            bounds = (int(a), int(b))
        return cls(int(meta["lo"]), values, meta["mode"], int(meta["steps"]), bounds)


@dataclass
class MeasureVector:
    lo: int
    values: np.ndarray
    kind: str = "free"

    @property
    def hi(self) -> int:
        return self.lo + len(self.values) - 1

    def at(self, x: int) -> float:
        return float(self.values[x - self.lo])

    def to_csv(self) -> str:
        rows = "".join(f"{self.lo + i},{float(v)!r}\n" for i, v in enumerate(self.values))
        return f"# lo={self.lo},hi={self.hi},kind={self.kind}\nx,value\n" + rows


# ---------------------------------------------------------------------------
# propagation


def _step_fixed(p, w, q, out):
    """One update on a fixed window; mass leaving either end is dropped."""
    r = p * w
    lft = p * q
    out[:] = 0.0
    out[1:] += r[:-1]
    out[:-1] += lft[1:]
    return out


def _reflecting_rates(env: Environment, lo: int, hi: int):
    w = env.omegas(lo, hi)
    w[0] = 1.0
    w[-1] = 0.0
    return w, 1.0 - w


def evolve_distribution(
    env: Environment, init: DistVector, steps: int, cell_cap: int = DEFAULT_CELL_CAP
) -> DistVector:
    """Advance ``init`` by ``steps`` steps of the walk in ``env``."""
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    mode = init.mode
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")

    if mode == "exact":
        width = len(init.values) + 2 * steps
        if width > cell_cap:
            raise WindowOverflow(f"exact window of {width} cells exceeds cap {cell_cap}")
        lo = init.lo - steps
        w = env.omegas(lo, lo + width - 1)
        q = 1.0 - w
        cur = np.zeros(width)
        nxt = np.zeros(width)
        a, b = steps, steps + len(init.values)  # active slice [a, b)
        cur[a:b] = init.values
        for _ in range(steps):
            pa = cur[a:b]
            nxt[a - 1 : b + 1] = 0.0
            nxt[a + 1 : b + 1] += pa * w[a:b]
            nxt[a - 1 : b - 1] += pa * q[a:b]
            cur, nxt = nxt, cur
            a -= 1
            b += 1
        return DistVector(lo, cur, mode, init.steps + steps, init.bounds)

    if mode == "reflecting":
        t_lo, t_hi = init.bounds
        if not (t_lo <= init.lo and init.hi <= t_hi):
            raise DomainError("reflecting window must lie inside [T-, T+]")
        p = np.zeros(t_hi - t_lo + 1)
        p[init.lo - t_lo : init.hi - t_lo + 1] = init.values
        if t_hi == t_lo:
            return DistVector(t_lo, p, mode, init.steps + steps, init.bounds)
        w, q = _reflecting_rates(env, t_lo, t_hi)
        lo = t_lo
    else:
        lo = init.lo
        p = init.values.astype(float, copy=True)
        w = env.omegas(lo, init.hi)
        q = 1.0 - w

    out = np.empty_like(p)
    for _ in range(steps):
        p, out = _step_fixed(p, w, q, out), p
    return DistVector(lo, p, mode, init.steps + steps, init.bounds)


def _mass_track(env, lo, hi, x0, target, steps, mode):
    """Mass at ``target`` after each of ``0..steps`` steps on a fixed window."""
    if mode == "reflecting":
        w, q = _reflecting_rates(env, lo, hi)
    else:
        w = env.omegas(lo, hi)
        q = 1.0 - w
    p = np.zeros(hi - lo + 1)
    p[x0 - lo] = 1.0
    out = np.empty_like(p)
    track = np.empty(steps + 1)
    track[0] = p[target - lo]
    t = target - lo
    for k in range(1, steps + 1):
        p, out = _step_fixed(p, w, q, out), p
        track[k] = p[t]
    return track


def return_probabilities(env: Environment, n_max: int, mode: str = "exact", window=None) -> np.ndarray:
    """``P(X_{2n} = 0)`` for ``n = 1 .. n_max`` from a single propagation.

    ``exact`` grows the window as needed (cost quadratic in ``n_max``);
    ``absorbing`` keeps the walk in ``window`` and returns certified lower bounds.
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    steps = 2 * n_max
    if mode == "absorbing":
        lo, hi = window
        if not lo <= 0 <= hi:
            raise DomainError("absorbing window must contain the origin")
        return _mass_track(env, lo, hi, 0, 0, steps, "absorbing")[2::2]
    if mode != "exact":
        raise DomainError(f"unsupported mode {mode!r} for return probabilities")
    lo = -steps
    width = 2 * steps + 1
    if width > DEFAULT_CELL_CAP:
        raise WindowOverflow(f"exact window of {width} cells exceeds cap")
    w = env.omegas(lo, steps)
    q = 1.0 - w
    cur = np.zeros(width)
    nxt = np.zeros(width)
    c = steps
    cur[c] = 1.0
    out = np.empty(n_max)
    a, b = c, c + 1
    for k in range(1, steps + 1):
        pa = cur[a:b]
        nxt[a - 1 : b + 1] = 0.0
        nxt[a + 1 : b + 1] += pa * w[a:b]
        nxt[a - 1 : b - 1] += pa * q[a:b]
        cur, nxt = nxt, cur
        a -= 1
        b += 1
        if k % 2 == 0:
            out[k // 2 - 1] = cur[c]
    return out


def return_probability(env: Environment, n: int, mode: str = "exact", window=None) -> float:
    """``P_omega(X_{2n} = 0)``; a certified lower bound in absorbing mode."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if mode == "exact":
        init = DistVector.point_mass(0)
    elif mode == "absorbing":
        init = DistVector.point_mass(0, "absorbing", window=window)
    else:
        raise DomainError(f"unsupported mode {mode!r}")
    return evolve_distribution(env, init, 2 * n).at(0)


def brute_force_return(env: Environment, n: int) -> float:
    """Sum of the weights of all length-``2n`` nearest-neighbour loops at 0."""
    if 2 * n > 14:
        raise TooLarge("brute force enumeration is limited to 2n <= 14")
    if n < 1:
        raise DomainError("n must be >= 1")
    m = 2 * n
    w = env.omegas(-m, m)
    codes = np.arange(2**m)
    ups = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    steps = np.where(ups, 1, -1)
    pos = np.concatenate([np.zeros((len(codes), 1), dtype=int), np.cumsum(steps, axis=1)], axis=1)
    closed = pos[:, -1] == 0
    before = pos[closed, :-1]
    up = ups[closed]
    site_w = w[before + m]
    weights = np.where(up, site_w, 1.0 - site_w).prod(axis=1)
    return float(math.fsum(weights))


# ---------------------------------------------------------------------------
# measures, hitting


def reversible_measure(env: Environment, window) -> MeasureVector:
    """``mu(x) = exp(-V(x)) + exp(-V(x-1))`` on ``window``; note ``mu(0) = 1/omega_0``."""
    lo, hi = window
    v = env.potentials(lo - 1, hi)
    return MeasureVector(lo, np.exp(-v[1:]) + np.exp(-v[:-1]), "free")


def reflected_measure(env: Environment, t_lo: int, t_hi: int) -> MeasureVector:
    """Reversible measure of the walk reflected at ``t_lo`` and ``t_hi``."""
    v = env.potentials(t_lo - 1, t_hi)
    mu = np.exp(-v[1:]) + np.exp(-v[:-1])
    mu[0] = math.exp(-v[1])  # exp(-V(T-))
    mu[-1] = math.exp(-v[-2])  # exp(-V(T+ - 1))
    return MeasureVector(t_lo, mu, "reflected")


def transition_probability(env: Environment, x: int, y: int, n: int) -> float:
    """``P^x(X_n = y)`` by exact propagation."""
    return evolve_distribution(env, DistVector.point_mass(x), n).at(y)


def check_reversibility(env: Environment, x: int, y: int, n: int) -> float:
    """Residual ``|mu(x) P^x(X_n=y) - mu(y) P^y(X_n=x)|``."""
    mu = reversible_measure(env, (min(x, y), max(x, y)))
    lhs = mu.at(x) * transition_probability(env, x, y, n)
    rhs = mu.at(y) * transition_probability(env, y, x, n)
    return abs(lhs - rhs)


def _ordered(x, y, z):
    if not (x < y < z):
        raise DomainError(f"need x < y < z, got {x}, {y}, {z}")


def hitting_probability(env: Environment, x: int, y: int, z: int) -> float:
    """``P^y(tau(z) < tau(x))`` from the potential, with a max shift against overflow."""
    _ordered(x, y, z)
    v = env.potentials(x, z - 1)
    e = np.exp(v - v.max())
    return float(e[: y - x].sum() / e.sum())


def hitting_solve(env: Environment, x: int, y: int, z: int) -> float:
    """Same probability as :func:`hitting_probability` from the first-step equations.

    Solves ``h(w) = omega_w h(w+1) + (1 - omega_w) h(w-1)`` with ``h(x) = 0`` and
    ``h(z) = 1`` by forward elimination ``h(w) = a_w h(w+1)``. The pivots are
    formed as ``omega_w + (1 - omega_w)(1 - a_{w-1})`` with ``1 - a`` carried
    separately, so no step subtracts and the result keeps full relative accuracy
    even across deep potential barriers (a plain LU solve does not).
    """
    _ordered(x, y, z)
    if z - x > 1_000_000:
        raise DomainError("z - x limited to 1e6")
    w = env.omegas(x + 1, z - 1)
    q = 1.0 - w
    m = len(w)
    a = np.empty(m)
    comp = 1.0  # 1 - a_{w-1}; a_x = 0
    for i in range(m):
        piv = w[i] + q[i] * comp
        a[i] = w[i] / piv
        comp = q[i] * comp / piv
    # back substitution from h(z) = 1
    return float(np.prod(a[y - x - 1 :]))


@dataclass(frozen=True)
class PotentialBounds:
    prel2_rhs: float
    prel3_rhs: float
    prel4_rhs: float


def potential_bounds(env: Environment, x: int, y: int, z: int, k: int) -> PotentialBounds:
    """Right-hand sides of the three classical potential bounds.

    * ``P^y(tau(z) < k) <= k exp(-max_{y<=i<z} [V(z-1) - V(i)])``
    * ``P^y(tau(x) < k) <= k exp(-max_{x<i<=y} [V(x+1) - V(i)])``
    * ``E^y[tau(z) 1{tau(z) < tau(x)}] <= (z-x)^2 exp(max_{x<=i<=j<=z} (V(j) - V(i)))``
    """
    _ordered(x, y, z)
    if k < 1:
        raise DomainError("k must be >= 1")
    v = env.potentials(x, z)
    at = lambda s: v[s - x]  # noqa: E731
    seg2 = v[y - x : z - x]  # i = y .. z-1
    prel2 = k * math.exp(-float(np.max(at(z - 1) - seg2)))
    seg3 = v[x + 1 - x : y - x + 1]  # i = x+1 .. y
    prel3 = k * math.exp(-float(np.max(at(x + 1) - seg3)))
    rise = float(np.max(v - np.minimum.accumulate(v)))
    prel4 = (z - x) ** 2 * math.exp(rise)
    return PotentialBounds(prel2, prel3, prel4)


# ---------------------------------------------------------------------------
# Monte Carlo oracles for the bounds


def mc_hit_before(env: Environment, y: int, z: int, k: int, trials: int, rng: np.random.Generator):
    """Estimate ``P^y(tau(z) < k)``; returns ``(estimate, standard_error)``."""
    if k <= 0:
        return 0.0, 0.0
    lo = y - k
    w = env.omegas(lo, z)
    pos = np.full(trials, y, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    hit = np.zeros(trials, dtype=bool)
    hit[pos == z] = True
    alive &= ~hit
    for _ in range(k - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        u = rng.random(idx.size)
        cur = pos[idx]
        cur += np.where(u < w[cur - lo], 1, -1)
        pos[idx] = cur
        done = cur == z
        hit[idx[done]] = True
        alive[idx[done]] = False
    p = hit.mean()
    return float(p), float(math.sqrt(max(p * (1 - p), 0.0) / trials))


def mc_tau_before(
    env: Environment, x: int, y: int, z: int, trials: int, rng: np.random.Generator, max_steps: int = 10**7
):
    """Estimate ``E^y[tau(z) 1{tau(z) < tau(x)}]``; returns ``(mean, standard_error)``."""
    _ordered(x, y, z)
    w = env.omegas(x, z)
    pos = np.full(trials, y, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    value = np.zeros(trials)
    t = 0
    idx = np.arange(trials)
    while idx.size and t < max_steps:
        t += 1
        u = rng.random(idx.size)
        cur = pos[idx] + np.where(u < w[pos[idx] - x], 1, -1)
        pos[idx] = cur
        top = cur == z
        value[idx[top]] = t
        keep = (cur != z) & (cur != x)
        alive[idx[~keep]] = False
        idx = idx[keep]
    if idx.size:
        raise RuntimeError(f"{idx.size} walkers not absorbed after {max_steps} steps")
    return float(value.mean()), float(value.std(ddof=1) / math.sqrt(trials))


# ---------------------------------------------------------------------------
# reflected chain and long-time absorbing propagation


def reflected_return_series(env: Environment, t_lo: int, t_hi: int, start: int, ell_max: int) -> np.ndarray:
    """``P^start(X~_ell = start)`` for ``ell = 0 .. ell_max`` for the reflected walk."""
    if not t_lo <= start <= t_hi:
        raise DomainError("start outside [T-, T+]")
    if t_lo == t_hi:
        return np.ones(ell_max + 1)
    return _mass_track(env, t_lo, t_hi, start, start, ell_max, "reflecting")


@dataclass(frozen=True)
class ReflectedFloor:
    ell: int
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


def reflected_floor_rhs(descriptor, delta: float) -> float:
    width = abs(descriptor.t_minus) + descriptor.t_plus + 1
    return 0.5 / width * math.exp(-delta * descriptor.L)


def reflected_return_floor(descriptor, ell: int, delta: float | None = None, env: Environment | None = None):
    """Both sides of the floor ``P^{b+}(X~_ell = b+) >= e^{-delta L} / (2 (|T-| + T+ + 1))``."""
    delta = descriptor.delta if delta is None else delta
    env = descriptor.env if env is None else env
    if not descriptor.in_gamma:
        raise NotInGamma("descriptor is not in Gamma(L, delta)")
    if ell < 0 or ell % 2:
        raise DomainError("ell must be a nonnegative even integer")
    lhs = reflected_return_series(env, descriptor.t_minus, descriptor.t_plus, descriptor.b_plus, ell)[ell]
    return ReflectedFloor(ell, float(lhs), reflected_floor_rhs(descriptor, delta))


def absorbing_transition_matrix(env: Environment, lo: int, hi: int) -> np.ndarray:
    """Dense column-stochastic (up to losses) matrix of the walk killed outside ``[lo, hi]``.

    Column ``j`` holds the law after one step from site ``lo + j``.
    """
    w = env.omegas(lo, hi)
    n = hi - lo + 1
    m = np.zeros((n, n))
    j = np.arange(n)
    m[j[:-1] + 1, j[:-1]] = w[:-1]
    m[j[1:] - 1, j[1:]] = 1.0 - w[1:]
    return m


def absorbing_mass_at_times(env: Environment, window, x0: int, target: int, times) -> np.ndarray:
    """``P^{x0}(X_t = target, walk stayed in window)`` for large ``t`` by dyadic powers.

    The killed transition matrix is squared repeatedly and applied to the start
    vectors bit by bit. All entries are nonnegative, so there is no
    cancellation and the result stays a lower bound up to rounding.
    """
    lo, hi = window
    times = np.asarray(times, dtype=np.int64)
    if np.any(times < 0):
        raise DomainError("times must be nonnegative")
    m = absorbing_transition_matrix(env, lo, hi)
    vecs = np.zeros((hi - lo + 1, len(times)))
    vecs[x0 - lo, :] = 1.0
    remaining = times.copy()
    power = m
    while np.any(remaining > 0):
        sel = (remaining & 1).astype(bool)
        if np.any(sel):
            vecs[:, sel] = power @ vecs[:, sel]
        remaining >>= 1
        if np.any(remaining > 0):
            power = power @ power
    return vecs[target - lo, :].copy()
