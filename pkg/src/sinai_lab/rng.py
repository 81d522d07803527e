"""Counter-based hashing and seed derivation.

Site values are pure functions of ``(seed, x)``: a SplitMix64 finalizer is
applied to ``mix(seed) + x * GOLDEN``. Streams for Monte Carlo tasks come from
``numpy.random.SeedSequence`` keyed by logical task indices, never by worker.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def site_uniforms(seed: int, xs) -> np.ndarray:
    """Uniforms in [0, 1) for integer sites ``xs``, deterministic in (seed, x)."""
    xs = np.asarray(xs, dtype=np.int64).view(np.uint64)
    key = _mix64(np.array([seed & _MASK64], dtype=np.uint64) + GOLDEN)
    z = _mix64(key + xs * GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def task_rng(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for logical task ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, *index]))


def derive_seed(seed: int, *index: int) -> int:
    """A 64-bit child seed, stable across runs and worker counts."""
    ss = np.random.SeedSequence([seed & _MASK64, *index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
