"""Two-dimensional walks driven by a one-dimensional environment.

Kinds:

``I``   direct product: every step moves ``X`` by the Sinai walk and ``Y`` by a
        sample of the vertical law ``nu``;
``II``  with probability ``delta`` a horizontal Sinai move, otherwise a
        vertical ``nu`` move;
``III`` as ``II`` but the vertical displacement at column ``x`` is ``(-1)^x Z``
        with ``Z ~ nu`` (even columns point up for ``nu = delta_1``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .env import Environment, EnvironmentSpec, make_environment
from .errors import DomainError, GridMismatch, KindMismatch, SpecInvalid, WindowOverflow
from .rng import derive_seed, task_rng
from .valley import ReturnSeries, dyadic_block_ends

STEP_KINDS = ("point-mass", "finite-table", "rademacher", "heavy-tail-lattice")
CHUNK = 1 << 20


class AliasTable:
    """Vose's alias method over a finite probability vector."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        p = p / p.sum()
        n = len(p)
        scaled = p * n
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        i = rng.integers(0, len(self.prob), size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


@dataclass
class StepLaw:
    """Vertical step distribution on the integers.

    Finite laws keep an explicit ``support``/``probs`` table. The heavy-tailed
    law ``p(+-k) ∝ k^{-(1+beta)}`` on ``1 <= |k| <= cutoff`` is sampled exactly:
    a dyadic layer ``[2^j, 2^{j+1})`` is picked by an alias table, then ``k``
    inside the layer by rejection (acceptance at least ``2^{-(1+beta)}``).
    """

    kind: str
    beta: float = 2.0
    support: np.ndarray | None = None
    probs: np.ndarray | None = None
    cutoff: int | None = None
    _layers: tuple | None = field(default=None, repr=False)
    _alias: AliasTable | None = field(default=None, repr=False)

    @property
    def mean(self) -> float:
        if self.kind == "heavy-tail-lattice":
            return 0.0
        return float(np.dot(self.support, self.probs))

    @property
    def total(self) -> float:
        if self.kind == "heavy-tail-lattice":
            lo, hi, w, z = self._layers
            return float(2.0 * np.sum(w) / z)
        return float(np.sum(self.probs))

    def pmf(self, z: int) -> float:
        if self.kind == "heavy-tail-lattice":
            k = abs(int(z))
            if k == 0 or k > self.cutoff:
                return 0.0
            return float(k ** -(1.0 + self.beta) / self._layers[3])
        hit = np.flatnonzero(self.support == z)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def is_point_mass(self) -> bool:
        return self.kind == "point-mass" or (self.support is not None and np.count_nonzero(self.probs) == 1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "heavy-tail-lattice":
            return self._sample_heavy(rng, size)
        if len(self.support) == 1:
            return np.full(size, int(self.support[0]), dtype=np.int64)
        return self.support[self._alias.sample(rng, size)]

    def _sample_heavy(self, rng, size):
        lo, hi, _, _ = self._layers
        s = 1.0 + self.beta
        layer = self._alias.sample(rng, size)
        out = np.empty(size, dtype=np.int64)
        todo = np.arange(size)
        while todo.size:
            a, b = lo[layer[todo]], hi[layer[todo]]
            k = rng.integers(a, b + 1)
            ok = rng.random(todo.size) < (k / a) ** (-s)
            out[todo[ok]] = k[ok]
            todo = todo[~ok]
        sign = rng.integers(0, 2, size) * 2 - 1
        return out * sign

    def finite_table(self):
        """``(support, probs)`` for finite laws, building it for the heavy-tailed law."""
        if self.kind != "heavy-tail-lattice":
            return self.support, self.probs
        k = np.arange(1, self.cutoff + 1)
        w = k ** -(1.0 + self.beta) / self._layers[3]
        return np.concatenate([-k[::-1], k]), np.concatenate([w[::-1], w])


def make_step_law(kind: str, params: dict | None = None, **kw) -> StepLaw:
    """Build a vertical step law.

    ``point-mass``: ``z0``; ``finite-table``: ``table`` as ``{z: weight}``;
    ``rademacher``: no parameters; ``heavy-tail-lattice``: ``beta`` in (1, 2] and
    ``cutoff`` (default ``10**6``). ``beta`` may be declared for finite laws and
    defaults to 2.
    """
    params = {**(params or {}), **kw}
    if kind == "heavy-tail":
        kind = "heavy-tail-lattice"
    if kind not in STEP_KINDS:
        raise SpecInvalid(f"unknown step law {kind!r}; expected one of {STEP_KINDS}")
    beta = float(params.get("beta", 2.0))
    if not 1.0 < beta <= 2.0:
        raise SpecInvalid(f"beta={beta} outside (1, 2]")
    if kind == "point-mass":
        sup = np.array([int(params.get("z0", 1))], dtype=np.int64)
        return StepLaw(kind, beta, sup, np.array([1.0]))
    if kind == "rademacher":
        law = StepLaw(kind, 2.0, np.array([-1, 1], dtype=np.int64), np.array([0.5, 0.5]))
        law._alias = AliasTable(law.probs)
        return law
    if kind == "finite-table":
        table = dict(params["table"])
        zs = np.array(sorted(int(z) for z in table), dtype=np.int64)
        w = np.array([float(table[z]) for z in zs])
        if np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise SpecInvalid("table weights must be nonnegative and normalizable")
        law = StepLaw(kind, beta, zs, w / w.sum())
        law._alias = AliasTable(law.probs)
        return law
    cutoff = int(params.get("cutoff", 10**6))
    if cutoff < 1:
        raise SpecInvalid("cutoff must be >= 1")
    s = 1.0 + beta
    bounds = []
    a = 1
    while a <= cutoff:
        bounds.append((a, min(2 * a - 1, cutoff)))
        a *= 2
    lo = np.array([b[0] for b in bounds], dtype=np.int64)
    hi = np.array([b[1] for b in bounds], dtype=np.int64)
    w = np.array([np.sum(np.arange(x, y + 1, dtype=float) ** -s) for x, y in bounds])
    z = 2.0 * w.sum()
    law = StepLaw(kind, beta, cutoff=cutoff)
    law._layers = (lo, hi, w, z)
    law._alias = AliasTable(w)
    return law


def step_law_from_config(block) -> StepLaw:
    kind = str(block.get("kind", "rademacher")).strip()
    params = {}
    if "z0" in block:
        params["z0"] = int(block["z0"])
    if "beta" in block:
        params["beta"] = float(block["beta"])
    if "cutoff" in block:
        params["cutoff"] = int(block["cutoff"])
    if "table" in block:
        pairs = [c.split(":") for c in str(block["table"]).split(",") if c.strip()]
        params["table"] = {int(a): float(b) for a, b in pairs}
    return make_step_law(kind, **params)


@dataclass
class Model2DConfig:
    kind: str
    env_spec: EnvironmentSpec
    nu: StepLaw
    delta: float = 0.5
    seed: int = 0

    def validate(self) -> "Model2DConfig":
        if self.kind not in ("I", "II", "III"):
            raise SpecInvalid(f"unknown model kind {self.kind!r}")
        if self.kind != "I" and not 0.0 < self.delta < 1.0:
            raise SpecInvalid(f"delta={self.delta} outside (0, 1)")
        if self.kind in ("I", "II") and abs(self.nu.mean) > 1e-9:
            raise SpecInvalid(f"model {self.kind} needs a centred vertical law (mean {self.nu.mean})")
        self.env_spec.validate()
        return self

    @property
    def kind_code(self) -> int:
        return {"I": 1, "II": 2, "III": 3}[self.kind]


@dataclass
class TrajectoryStats:
    kind: str
    steps: int
    returns: int
    horizontal_moves: int
    vertical_moves: int
    max_abs_x: int
    max_abs_y: int
    parity: dict
    site_lo: int
    visits: np.ndarray
    rights: np.ndarray
    tau: np.ndarray
    gap_sum: int
    gap_sq_sum: int
    final: tuple

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "steps": self.steps,
            "returns": self.returns,
            "horizontal_moves": self.horizontal_moves,
            "vertical_moves": self.vertical_moves,
            "max_abs_x": self.max_abs_x,
            "max_abs_y": self.max_abs_y,
            "parity": dict(self.parity),
            "final_x": self.final[0],
            "final_y": self.final[1],
        }

    def site_table(self, min_visits: int = 1):
        """``(x, visits, rights)`` rows for sites with at least ``min_visits`` horizontal moves."""
        idx = np.flatnonzero(self.visits >= min_visits)
        return idx + self.site_lo, self.visits[idx], self.rights[idx]

    def to_csv(self) -> str:
        xs, v, r = self.site_table()
        lines = ["x,visits,rights"] + [f"{a},{b},{c}" for a, b, c in zip(xs, v, r)]
        return "\n".join(lines) + "\n"


def _grow(arr, lo_old, lo_new, size_new):
    out = np.zeros(size_new, dtype=arr.dtype)
    out[lo_old - lo_new : lo_old - lo_new + len(arr)] = arr
    return out


def simulate_model(config: Model2DConfig, steps: int, max_tau_records: int = 0, env: Environment | None = None):
    """Run one trajectory of ``steps`` steps from the origin."""
    if steps < 1:
        raise DomainError("steps must be >= 1")
    config.validate()
    env = make_environment(config.env_spec) if env is None else env
    rng = task_rng(config.seed)
    half = 4096
    lo = -half
    omega = env.omegas(lo, half)
    visits = np.zeros(len(omega), dtype=np.int64)
    rights = np.zeros(len(omega), dtype=np.int64)
    counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
    tau_buf = np.zeros((max_tau_records, 4), dtype=np.int64)
    state = np.zeros(4, dtype=np.int64)
    code = config.kind_code
    done = 0
    while done < steps:
        m = min(CHUNK, steps - done)
        u_move = rng.random(m)
        u_dir = rng.random(m)
        z = config.nu.sample(rng, m)
        pos = 0
        while pos < m:
            used = K.model_2d(
                code, config.delta, omega, lo, state, done + pos,
                u_move[pos:], u_dir[pos:], z[pos:], visits, rights, counters, tau_buf,
            )
            pos += used
            if pos < m:
                half *= 2
                new_lo = -half
                visits = _grow(visits, lo, new_lo, 2 * half + 1)
                rights = _grow(rights, lo, new_lo, 2 * half + 1)
                lo = new_lo
                omega = env.omegas(lo, half)
        done += m
    n_tau = int(min(counters[K.N_TAU], max_tau_records))
    parity = {
        "up_even": int(counters[K.UP_EVEN]),
        "down_even": int(counters[K.DOWN_EVEN]),
        "up_odd": int(counters[K.UP_ODD]),
        "down_odd": int(counters[K.DOWN_ODD]),
        "zero": int(counters[K.ZERO_V]),
    }
    return TrajectoryStats(
        config.kind, steps, int(counters[K.RETURNS]), int(counters[K.N_H]), int(counters[K.N_V]),
        int(counters[K.MAX_X]), int(counters[K.MAX_Y]), parity, lo, visits, rights,
        tau_buf[:n_tau].copy(), int(counters[K.GAP_SUM]), int(counters[K.GAP_SQ]),
        (int(state[0]), int(state[1])),
    )


@dataclass
class EmbeddedChain:
    records: np.ndarray  # rows (k, tau_k, X_tau_k, Y_tau_k)
    stats: TrajectoryStats

    @property
    def gaps(self) -> np.ndarray:
        t = np.concatenate([[0], self.records[:, 1]])
        return np.diff(t)

    def mean_gap(self) -> float:
        return self.stats.gap_sum / self.stats.horizontal_moves

    def gap_se(self) -> float:
        n = self.stats.horizontal_moves
        m = self.mean_gap()
        var = self.stats.gap_sq_sum / n - m * m
        return math.sqrt(var * n / (n - 1) / n)


def embedded_chain(config: Model2DConfig, steps: int, max_records: int = 1_000_000, env=None) -> EmbeddedChain:
    """The process observed at horizontal-move times, plus per-site step counts."""
    if config.kind == "I":
        raise KindMismatch("the embedded chain is defined for kinds II and III")
    st = simulate_model(config, steps, max_tau_records=max_records, env=env)
    return EmbeddedChain(st.tau, st)


# ---------------------------------------------------------------------------
# several walkers


@dataclass
class MeetingReport:
    d: int
    same_env: bool
    steps: int
    trials: int
    block_ends: list
    block_counts: list

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.block_counts)

    @property
    def total(self) -> int:
        return int(sum(self.block_counts))

    def to_csv(self) -> str:
        lines = ["block_end_n,count,cumulative"]
        for e, c, s in zip(self.block_ends, self.block_counts, self.cumulative):
            lines.append(f"{e},{c},{s}")
        return "\n".join(lines) + "\n"


def _walker_returns(env: Environment, steps: int, rng: np.random.Generator) -> np.ndarray:
    n_even = steps // 2
    at_zero = np.zeros(n_even, dtype=np.bool_)
    half = 4096
    lo = -half
    omega = env.omegas(lo, half)
    x = 0
    done = 0
    while done < steps:
        m = min(CHUNK, steps - done)
        u = rng.random(m)
        pos = 0
        while pos < m:
            x, used = K.walk_1d(omega, lo, x, done + pos, u[pos:], at_zero)
            pos += used
            if pos < m:
                half *= 2
                lo = -half
                omega = env.omegas(lo, half)
        done += m
    return at_zero


def _meeting_envs(specs, d, same_env):
    if same_env:
        return [make_environment(specs[0])] * d
    if len(specs) >= d:
        return [make_environment(s) for s in specs[:d]]
    base = specs[0]
    return [make_environment(replace(base, seed=derive_seed(base.seed, k))) for k in range(d)]


def meeting_counts(env_specs, d, same_env, steps, seed, trial_ids) -> np.ndarray:
    """Per-dyadic-block meeting counts summed over the given logical trial ids."""
    envs = _meeting_envs(list(env_specs), d, same_env)
    n_even = steps // 2
    ends = dyadic_block_ends(n_even) if n_even else []
    counts = np.zeros(len(ends), dtype=np.int64)
    for r in trial_ids:
        all_zero = np.ones(n_even, dtype=np.bool_)
        for k in range(d):
            all_zero &= _walker_returns(envs[k], steps, task_rng(seed, int(r), k))
        hits = np.flatnonzero(all_zero) + 1  # n values
        counts += np.bincount(np.searchsorted(ends, hits), minlength=len(ends))
    return counts


def meeting_experiment(
    env_specs, d: int, same_env: bool, steps: int, seed: int, trials: int = 1, workers: int = 1
) -> MeetingReport:
    """Count times ``2n <= steps`` at which all ``d`` independent walkers sit at 0.

    ``same_env`` puts every walker in the environment of ``env_specs[0]``;
    otherwise walker ``k`` uses ``env_specs[k]`` (or, with a single spec, a copy
    reseeded from it). Walker ``k`` in trial ``r`` draws from stream ``(seed, r, k)``.
    """
    if d < 1:
        raise DomainError("d must be >= 1")
    if steps < 0 or trials < 1:
        raise DomainError("steps must be >= 0 and trials >= 1")
    specs = list(env_specs)
    if not specs:
        raise DomainError("at least one environment spec is required")
    n_even = steps // 2
    ends = dyadic_block_ends(n_even) if n_even else []
    if workers > 1 and trials > 1:
        from .parallel import map_tasks

        ids = np.array_split(np.arange(trials), min(trials, workers * 4))
        parts = map_tasks(meeting_counts, [(specs, d, same_env, steps, seed, c) for c in ids], workers)
        counts = np.sum(parts, axis=0)
    else:
        counts = meeting_counts(specs, d, same_env, steps, seed, range(trials))
    return MeetingReport(d, same_env, steps, trials, ends, [int(c) for c in counts])


# ---------------------------------------------------------------------------
# recurrence comparison


def srw_recurrence_classifier(beta: float) -> str:
    """Recurrence of kinds II/III with ``omega = 1/2`` and a ``beta``-stable vertical law.

    With ``A_n = n^{1/beta}`` the walk is recurrent iff ``sum 1/(A_n sqrt n)``
    diverges, i.e. iff ``1/beta + 1/2 <= 1``.
    """
    if not 1.0 < beta <= 2.0:
        raise DomainError(f"beta={beta} outside (1, 2]")
    return "recurrent" if 1.0 / beta + 0.5 <= 1.0 else "transient"


def classify_config(config: Model2DConfig) -> str:
    """Simple-walk comparison verdict for a model configuration."""
    if config.kind == "III" and config.nu.is_point_mass():
        raise DomainError("nu(-.) * nu is a point mass; excluded from classification")
    return srw_recurrence_classifier(config.nu.beta)


def product_series(series_x: ReturnSeries, series_y: ReturnSeries) -> ReturnSeries:
    if not np.array_equal(series_x.ns, series_y.ns):
        raise GridMismatch("series use different n grids")
    return ReturnSeries(
        f"{series_x.env_id}*{series_y.env_id}", series_x.ns, series_x.probs * series_y.probs, "product"
    )


def law_return_series(law: StepLaw, n_max: int, cell_cap: int = 1 << 26) -> ReturnSeries:
    """``P(Y_{2n} = 0)`` for a random walk with steps ``law``, ``n <= n_max``.

    Narrow laws are propagated by direct convolution of the two-step law.
    Wide ones use the discrete Fourier identity
    ``P(S_m = 0) = M^{-1} sum_k phi(2 pi k / M)^m``, which is exact (no
    wrap-around) once ``M`` exceeds the largest reachable ``|S_m|``.
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    sup, probs = law.finite_table()
    zmin, zmax = int(sup.min()), int(sup.max())
    ns = np.arange(1, n_max + 1)
    out = np.empty(n_max)
    span = zmax - zmin
    if span * n_max <= 4096:
        pmf = np.zeros(span + 1)
        pmf[sup - zmin] = probs
        two = np.convolve(pmf, pmf)
        dist = np.array([1.0])
        lo = 0
        for n in ns:
            dist = np.convolve(dist, two)
            lo += 2 * zmin
            i = -lo
            out[n - 1] = dist[i] if 0 <= i < len(dist) else 0.0
        return ReturnSeries(f"law:{law.kind}", ns, out, "exact")
    reach = 2 * n_max * max(abs(zmin), abs(zmax))
    m = 1 << int(reach).bit_length()
    if m > cell_cap:
        raise WindowOverflow(f"{m} Fourier points exceed cap {cell_cap}")
    pmf = np.zeros(m)
    pmf[np.mod(sup, m)] = probs
    phi2 = np.fft.fft(pmf) ** 2
    if np.allclose(phi2.imag, 0.0, atol=1e-15):
        phi2 = phi2.real
    cur = np.ones_like(phi2)
    for n in ns:
        cur *= phi2
        out[n - 1] = cur.sum().real / m
    np.clip(out, 0.0, 1.0, out=out)
    return ReturnSeries(f"law:{law.kind}", ns, out, "exact")


def stats_json(stats: TrajectoryStats) -> str:
    return json.dumps(stats.as_dict(), sort_keys=True)
