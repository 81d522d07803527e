"""Random environments for the one-dimensional walk.

An environment is an iid sequence ``omega_x`` in ``[eps, 1 - eps]`` indexed by
all integers. Values are produced lazily from a counter-based hash of
``(seed, x)``, so the order in which sites are queried never matters.

The potential is ``V(0) = 0``, ``V(x) = sum_{i=1}^{x} log rho_i`` for ``x > 0``
and ``V(x) = -sum_{i=x+1}^{0} log rho_i`` for ``x < 0``, where
``rho_i = (1 - omega_i) / omega_i``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import SpecInvalid
from .rng import site_uniforms

FAMILIES = ("two-point", "uniform-symmetric", "table", "constant", "explicit")

_BLOCK = 1024


def _log_rho(w):
    return np.log((1.0 - w) / w)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Description of an environment law.

    Parameters per family:

    * ``two-point``: ``p`` in (0, 1/2); omega is ``p`` or ``1 - p`` with equal odds.
    * ``uniform-symmetric``: omega uniform on ``[epsilon, 1 - epsilon]``.
    * ``table``: ``table`` is a tuple of ``(omega, weight)`` pairs.
    * ``constant``: omega identically ``p``; needs ``degenerate=True``.
    * ``explicit``: fixed per-site values ``sites`` (``{x: omega}``) and ``fill``
      elsewhere. Not iid, so it also needs ``degenerate=True``; used to build
      hand-checkable fixtures.

    ``epsilon`` defaults to the tightest ellipticity constant of the family.
    """

    family: str
    p: float | None = None
    epsilon: float | None = None
    table: tuple[tuple[float, float], ...] | None = None
    sites: tuple[tuple[int, float], ...] | None = None
    fill: float = 0.5
    seed: int = 0
    tolerance: float = 1e-12
    degenerate: bool = False

    # -- law summaries ------------------------------------------------------

    def support(self) -> list[float]:
        if self.family == "two-point":
            return [self.p, 1.0 - self.p]
        if self.family == "uniform-symmetric":
            return [self.epsilon, 1.0 - self.epsilon]
        if self.family == "table":
            return [w for w, _ in self.table]
        if self.family == "constant":
            return [self.p]
        return [w for _, w in self.sites or ()] + [self.fill]

    def ellipticity(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        tight = min(min(w, 1.0 - w) for w in self.support())
        # omega == 1/2 everywhere is compatible with any epsilon below 1/2
        return tight if tight < 0.5 else 0.25

    def log_rho_moments(self) -> tuple[float, float]:
        """Exact ``(E[log rho_0], Var(log rho_0))`` of the single-site law."""
        fam = self.family
        if fam == "two-point":
            a = math.log((1.0 - self.p) / self.p)
            return 0.0, a * a
        if fam == "uniform-symmetric":
            eps = self.epsilon
            width = 1.0 - 2.0 * eps
            # log rho is odd about omega = 1/2, so the mean vanishes exactly
            second, _ = integrate.quad(
                lambda w: math.log((1.0 - w) / w) ** 2, eps, 1.0 - eps, epsabs=1e-14, epsrel=1e-12
            )
            return 0.0, second / width
        if fam == "table":
            ws = np.array([w for w, _ in self.table], dtype=float)
            pw = np.array([q for _, q in self.table], dtype=float)
            pw = pw / pw.sum()
            lr = _log_rho(ws)
            mean = math.fsum(pw * lr)
            var = math.fsum(pw * (lr - mean) ** 2)
            return mean, var
        if fam == "constant":
            return math.log((1.0 - self.p) / self.p), 0.0
        return float("nan"), float("nan")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.log_rho_moments()[1])

    # -- validation ---------------------------------------------------------

    def validate(self) -> "EnvironmentSpec":
        fam = self.family
        if fam not in FAMILIES:
            raise SpecInvalid(f"unknown family {fam!r}; expected one of {FAMILIES}")
        if fam in ("two-point",) and not (self.p is not None and 0.0 < self.p < 0.5):
            raise SpecInvalid("two-point family needs p in (0, 1/2)")
        if fam == "constant" and not (self.p is not None and 0.0 < self.p < 1.0):
            raise SpecInvalid("constant family needs p in (0, 1)")
        if fam == "uniform-symmetric" and self.epsilon is None:
            raise SpecInvalid("uniform-symmetric family needs epsilon")
        if fam == "table":
            if not self.table:
                raise SpecInvalid("table family needs a nonempty table")
            if any(q < 0 for _, q in self.table) or sum(q for _, q in self.table) <= 0:
                raise SpecInvalid("table weights must be nonnegative with positive sum")
        if fam == "explicit" and self.sites is None:
            raise SpecInvalid("explicit family needs sites")
        if any(not (0.0 < w < 1.0) for w in self.support()):
            raise SpecInvalid("omega values must lie in (0, 1)")

        eps = self.ellipticity()
        if not (0.0 < eps < 0.5):
            raise SpecInvalid(f"ellipticity epsilon={eps} outside (0, 1/2)")
        lo = min(self.support())
        hi = max(self.support())
        if lo < eps - 1e-15 or hi > 1.0 - eps + 1e-15:
            raise SpecInvalid(f"omega values leave [epsilon, 1 - epsilon] for epsilon={eps}")

        if fam in ("constant", "explicit"):
            if not self.degenerate:
                raise SpecInvalid(f"family {fam!r} is admitted only with degenerate=True")
            return self
        mean, var = self.log_rho_moments()
        if abs(mean) > self.tolerance:
            raise SpecInvalid(f"E[log rho] = {mean:.6g} is not zero (recurrence assumption)")
        if var <= 0.0 and not self.degenerate:
            raise SpecInvalid("Var(log rho) = 0; set degenerate=True to allow it")
        return self

    # -- key/value serialization -------------------------------------------

    def to_config(self) -> dict[str, str]:
        out = {"family": self.family, "seed": str(self.seed)}
        if self.p is not None:
            out["p"] = repr(float(self.p))
        if self.epsilon is not None:
            out["epsilon"] = repr(float(self.epsilon))
        if self.table is not None:
            out["table"] = ", ".join(f"{w!r}:{q!r}" for w, q in self.table)
        if self.sites is not None:
            out["sites"] = ", ".join(f"{x}:{w!r}" for x, w in self.sites)
            out["fill"] = repr(float(self.fill))
        if self.tolerance != 1e-12:
            out["tolerance"] = repr(self.tolerance)
        if self.degenerate:
            out["degenerate"] = "true"
        return out

    @classmethod
    def from_config(cls, block) -> "EnvironmentSpec":
        """Parse a key/value mapping (e.g. a configparser section)."""
        known = {"family", "p", "epsilon", "table", "sites", "fill", "seed", "tolerance", "degenerate"}
        unknown = set(block) - known
        if unknown:
            raise SpecInvalid(f"unknown environment keys: {sorted(unknown)}")
        if "family" not in block:
            raise SpecInvalid("missing family")

        def pairs(text, kx, kv):
            items = []
            for chunk in str(text).split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                a, _, b = chunk.partition(":")
                items.append((kx(a), kv(b)))
            return tuple(items)

        try:
            kwargs = dict(family=str(block["family"]).strip())
            if "p" in block:
                kwargs["p"] = float(block["p"])
            if "epsilon" in block:
                kwargs["epsilon"] = float(block["epsilon"])
            if "table" in block:
                kwargs["table"] = pairs(block["table"], float, float)
            if "sites" in block:
                kwargs["sites"] = pairs(block["sites"], int, float)
            if "fill" in block:
                kwargs["fill"] = float(block["fill"])
            if "seed" in block:
                kwargs["seed"] = int(block["seed"])
            if "tolerance" in block:
                kwargs["tolerance"] = float(block["tolerance"])
            if "degenerate" in block:
                kwargs["degenerate"] = str(block["degenerate"]).strip().lower() in ("1", "true", "yes", "on")
        except ValueError as exc:
            raise SpecInvalid(str(exc)) from None
        return cls(**kwargs).validate()


class Environment:
    """Lazily materialized two-sided environment with its potential.

    The cache grows in whole blocks by doubling and is guarded by a lock.
    Because every value is a pure function of ``(seed, x)`` and prefix sums are
    accumulated strictly left-to-right from the origin, the cached numbers are
    bit-identical regardless of query order.
    """

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec
        self.epsilon = spec.ellipticity()
        self._lock = threading.Lock()
        # index k on the negative side stands for site -k-1
        self._w_pos = np.empty(0)
        self._w_neg = np.empty(0)
        self._v_pos = np.empty(0)  # V(0), V(1), ...
        self._v_neg = np.empty(0)  # V(-1), V(-2), ...
        if spec.family == "explicit":
            self._explicit = dict(spec.sites)
        if spec.family == "table":
            ws = np.array([w for w, _ in spec.table], dtype=float)
            q = np.array([q for _, q in spec.table], dtype=float)
            self._table_w = ws
            self._table_cdf = np.cumsum(q / q.sum())
            self._table_cdf[-1] = 1.0

    def __repr__(self):
        return f"Environment({self.spec.family!r}, seed={self.spec.seed})"

    # -- raw site values -----------------------------------------------------

    def _site_values(self, xs: np.ndarray) -> np.ndarray:
        spec = self.spec
        fam = spec.family
        if fam == "constant":
            return np.full(xs.shape, float(spec.p))
        if fam == "explicit":
            return np.array([self._explicit.get(int(x), spec.fill) for x in xs], dtype=float)
        u = site_uniforms(spec.seed, xs)
        if fam == "two-point":
            return np.where(u < 0.5, spec.p, 1.0 - spec.p)
        if fam == "uniform-symmetric":
            return spec.epsilon + (1.0 - 2.0 * spec.epsilon) * u
        idx = np.searchsorted(self._table_cdf, u, side="right")
        return self._table_w[np.minimum(idx, len(self._table_w) - 1)]

    # -- cache growth ------------------------------------------------------

    def _ensure(self, lo: int, hi: int) -> None:
        need_pos = hi + 1 if hi >= 0 else 0
        need_neg = -lo if lo < 0 else 0
        if need_pos <= len(self._w_pos) and need_neg <= len(self._w_neg):
            return
        with self._lock:
            if need_pos > len(self._w_pos):
                self._grow_pos(need_pos)
            if need_neg > len(self._w_neg):
                self._grow_neg(need_neg)

    @staticmethod
    def _target(have: int, need: int) -> int:
        size = max(_BLOCK, have)
        while size < need:
            size *= 2
        return size

    def _grow_pos(self, need: int) -> None:
        have = len(self._w_pos)
        size = self._target(have, need)
        xs = np.arange(have, size, dtype=np.int64)
        w_new = self._site_values(xs)
        w = np.concatenate([self._w_pos, w_new])
        if have == 0:
            steps = _log_rho(w_new[1:])
            v_new = np.cumsum(np.concatenate([[0.0], steps]))
        else:
            steps = _log_rho(w_new)
            v_new = np.cumsum(np.concatenate([[self._v_pos[-1]], steps]))[1:]
        v = np.concatenate([self._v_pos, v_new])
        self._v_pos = v
        self._w_pos = w

    def _grow_neg(self, need: int) -> None:
        have = len(self._w_neg)
        size = self._target(have, need)
        xs = -np.arange(have, size, dtype=np.int64) - 1
        w_new = self._site_values(xs)
        w = np.concatenate([self._w_neg, w_new])
        # V(-k-1) = V(-k) - log rho_{-k}: needs omega at 0, -1, ..., -(size-1)
        if have == 0:
            w0 = self._site_values(np.zeros(1, dtype=np.int64))
            steps = -_log_rho(np.concatenate([w0, w_new[:-1]]))
            v_new = np.cumsum(steps)
        else:
            steps = -_log_rho(np.concatenate([self._w_neg[-1:], w_new[:-1]]))
            v_new = np.cumsum(np.concatenate([[self._v_neg[-1]], steps]))[1:]
        self._v_neg = np.concatenate([self._v_neg, v_new])
        self._w_neg = w

    def _gather(self, pos: np.ndarray, neg: np.ndarray, lo: int, hi: int) -> np.ndarray:
        if lo >= 0:
            return pos[lo : hi + 1].copy()
        if hi < 0:
            return neg[-hi - 1 : -lo][::-1].copy()
        return np.concatenate([neg[:-lo][::-1], pos[: hi + 1]])

    # -- public accessors --------------------------------------------------

    def omegas(self, lo: int, hi: int) -> np.ndarray:
        """Array of ``omega_x`` for ``x = lo .. hi`` (inclusive)."""
        lo, hi = int(lo), int(hi)
        if hi < lo:
            return np.empty(0)
        self._ensure(lo, hi)
        return self._gather(self._w_pos, self._w_neg, lo, hi)

    def potentials(self, lo: int, hi: int) -> np.ndarray:
        """Array of ``V(x)`` for ``x = lo .. hi`` (inclusive)."""
        lo, hi = int(lo), int(hi)
        if hi < lo:
            return np.empty(0)
        self._ensure(min(lo, 0), hi)
        return self._gather(self._v_pos, self._v_neg, lo, hi)

    def omega_at(self, x: int) -> float:
        return float(self.omegas(x, x)[0])

    def potential_at(self, x: int) -> float:
        return float(self.potentials(x, x)[0])

    def rho_at(self, x: int) -> float:
        w = self.omega_at(x)
        return (1.0 - w) / w


def make_environment(spec: EnvironmentSpec) -> Environment:
    return Environment(spec.validate())


def omega_at(env: Environment, x: int) -> float:
    return env.omega_at(x)


def potential_at(env: Environment, x: int) -> float:
    return env.potential_at(x)


def two_point(p: float = 0.3, seed: int = 0) -> Environment:
    """Shorthand for the symmetric two-point law used throughout the tests."""
    return make_environment(EnvironmentSpec("two-point", p=p, seed=seed))


def constant(p: float = 0.5) -> Environment:
    return make_environment(EnvironmentSpec("constant", p=p, degenerate=True))


def explicit(sites, fill: float = 0.5) -> Environment:
    """Fixed environment from a ``{x: omega}`` mapping (test fixtures, oracles)."""
    items = tuple(sorted((int(x), float(w)) for x, w in dict(sites).items()))
    return make_environment(EnvironmentSpec("explicit", sites=items, fill=fill, degenerate=True))
