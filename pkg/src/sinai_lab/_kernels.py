"""Compiled inner loops for long sequential trajectories.

All randomness is drawn by the caller with numpy and passed in, so results
depend only on the generator stream and never on compilation details. Each
kernel stops early when the walker reaches the edge of the materialized
environment window and reports how many steps it consumed; the caller widens
the window and resumes with the unused draws.
"""

import numpy as np
from numba import njit

# counter slots of the 2D kernel
RETURNS, N_H, N_V, UP_EVEN, DOWN_EVEN, UP_ODD, DOWN_ODD, ZERO_V, MAX_X, MAX_Y, GAP_SUM, GAP_SQ, N_TAU = range(13)
N_COUNTERS = 13


@njit(cache=True)
def walk_1d(omega, lo, x, t0, u, at_zero):
    """Advance one walker; ``at_zero[n-1]`` is set when it sits at 0 at time ``2n``.

    Returns ``(x, consumed)``.
    """
    hi = lo + omega.shape[0] - 1
    m = u.shape[0]
    nz = at_zero.shape[0]
    for i in range(m):
        if x <= lo or x >= hi:
            return x, i
        if u[i] < omega[x - lo]:
            x += 1
        else:
            x -= 1
        t = t0 + i + 1
        if t % 2 == 0 and x == 0:
            k = t // 2 - 1
            if k < nz:
                at_zero[k] = True
    return x, m


@njit(cache=True)
def model_2d(kind, delta, omega, lo, state, t0, u_move, u_dir, z, visits, rights, counters, tau_buf):
    """Advance a 2D walker.

    ``state = [x, y, k, last_tau]``. Kind 1 moves both coordinates every step;
    kinds 2 and 3 move horizontally with probability ``delta``, otherwise
    vertically by ``z`` (kind 3 flips the sign on odd columns).
    """
    hi = lo + omega.shape[0] - 1
    x, y, k, last = state[0], state[1], state[2], state[3]
    m = u_move.shape[0]
    cap = tau_buf.shape[0]
    for i in range(m):
        if x <= lo or x >= hi:
            state[0], state[1], state[2], state[3] = x, y, k, last
            counters[N_TAU] = k
            return i
        t = t0 + i + 1
        horizontal = kind == 1 or u_move[i] < delta
        if horizontal:
            j = x - lo
            visits[j] += 1
            if u_dir[i] < omega[j]:
                rights[j] += 1
                x += 1
            else:
                x -= 1
            counters[N_H] += 1
            k += 1
            gap = t - last
            counters[GAP_SUM] += gap
            counters[GAP_SQ] += gap * gap
            last = t
            if k <= cap:
                tau_buf[k - 1, 0] = k
                tau_buf[k - 1, 1] = t
                tau_buf[k - 1, 2] = x
                tau_buf[k - 1, 3] = y
        if kind == 1 or not horizontal:
            dz = z[i]
            if kind == 3 and (x & 1) == 1:
                dz = -dz
            if kind != 1:
                counters[N_V] += 1
                even = (x & 1) == 0
                if dz > 0:
                    counters[UP_EVEN if even else UP_ODD] += 1
                elif dz < 0:
                    counters[DOWN_EVEN if even else DOWN_ODD] += 1
                else:
                    counters[ZERO_V] += 1
            y += dz
        if x == 0 and y == 0:
            counters[RETURNS] += 1
        ax = x if x >= 0 else -x
        ay = y if y >= 0 else -y
        if ax > counters[MAX_X]:
            counters[MAX_X] = ax
        if ay > counters[MAX_Y]:
            counters[MAX_Y] = ay
    state[0], state[1], state[2], state[3] = x, y, k, last
    counters[N_TAU] = k
    return m
