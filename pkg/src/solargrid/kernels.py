"""Hot numeric kernels.

Each kernel has a loop form compiled with numba and, for the load-flow
kernels, an independent vectorised numpy form used when numba is disabled
(see ``solargrid._accel``). The Q-learning loop has no vectorised form; with
numba disabled it runs as plain Python over numpy arrays.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit


# --------------------------------------------------------------------------
# load flow
# --------------------------------------------------------------------------


@njit
def _injections_loop(vm, va, G, B):
    n = vm.shape[0]
    p = np.zeros(n)
    q = np.zeros(n)
    for i in range(n):
        pi = 0.0
        qi = 0.0
        for k in range(n):
            gik = G[i, k]
            bik = B[i, k]
            if gik == 0.0 and bik == 0.0:
                continue
            t = va[i] - va[k]
            c = np.cos(t)
            s = np.sin(t)
            pi += vm[k] * (gik * c + bik * s)
            qi += vm[k] * (gik * s - bik * c)
        p[i] = vm[i] * pi
        q[i] = vm[i] * qi
    return p, q


def _injections_numpy(vm, va, G, B):
    v = vm * np.exp(1j * va)
    s = v * np.conj((G + 1j * B) @ v)
    return s.real.copy(), s.imag.copy()


@njit
def _jacobian_loop(vm, va, G, B, p, q, pvpq, pq):
    npvpq = pvpq.shape[0]
    npq = pq.shape[0]
    n = npvpq + npq
    J = np.zeros((n, n))
    # row/column lookup: position of a bus in pq, -1 if absent
    nb = vm.shape[0]
    pq_pos = -np.ones(nb, dtype=np.int64)
    for r in range(npq):
        pq_pos[pq[r]] = r
    for r in range(npvpq):
        i = pvpq[r]
        for c in range(npvpq):
            k = pvpq[c]
            if i == k:
                J[r, c] = -q[i] - B[i, i] * vm[i] * vm[i]
            else:
                t = va[i] - va[k]
                J[r, c] = vm[i] * vm[k] * (G[i, k] * np.sin(t) - B[i, k] * np.cos(t))
        for c in range(npq):
            k = pq[c]
            if i == k:
                J[r, npvpq + c] = p[i] / vm[i] + G[i, i] * vm[i]
            else:
                t = va[i] - va[k]
                J[r, npvpq + c] = vm[i] * (G[i, k] * np.cos(t) + B[i, k] * np.sin(t))
    for r in range(npq):
        i = pq[r]
        for c in range(npvpq):
            k = pvpq[c]
            if i == k:
                J[npvpq + r, c] = p[i] - G[i, i] * vm[i] * vm[i]
            else:
                t = va[i] - va[k]
                J[npvpq + r, c] = -vm[i] * vm[k] * (G[i, k] * np.cos(t) + B[i, k] * np.sin(t))
        for c in range(npq):
            k = pq[c]
            if i == k:
                J[npvpq + r, npvpq + c] = q[i] / vm[i] - B[i, i] * vm[i]
            else:
                t = va[i] - va[k]
                J[npvpq + r, npvpq + c] = vm[i] * (G[i, k] * np.sin(t) - B[i, k] * np.cos(t))
    return J


def _jacobian_numpy(vm, va, G, B, p, q, pvpq, pq):
    # complex-derivative form: dS/dVa and dS/dVm
    Y = G + 1j * B
    v = vm * np.exp(1j * va)
    current = Y @ v
    dv = np.diag(v)
    dS_dva = 1j * dv @ np.conj(np.diag(current) - Y @ dv)
    vnorm = np.diag(v / vm)
    dS_dvm = dv @ np.conj(Y @ vnorm) + np.conj(np.diag(current)) @ vnorm
    top = np.hstack((dS_dva[np.ix_(pvpq, pvpq)].real, dS_dvm[np.ix_(pvpq, pq)].real))
    bottom = np.hstack((dS_dva[np.ix_(pq, pvpq)].imag, dS_dvm[np.ix_(pq, pq)].imag))
    return np.vstack((top, bottom))


if NUMBA_ENABLED:
    power_injections = _injections_loop
    jacobian = _jacobian_loop
else:
    power_injections = _injections_numpy
    jacobian = _jacobian_numpy


# --------------------------------------------------------------------------
# SVC voltage-control environment and tabular Q-learning
# --------------------------------------------------------------------------


@njit
def voltage_bin(v, v_min, bin_width, n_bins):
    idx = int(np.floor((v - v_min) / bin_width + 0.5))
    if idx < 0:
        return 0
    if idx > n_bins - 1:
        return n_bins - 1
    return idx


@njit
def step_dynamics(svc_q, action, next_offset, k_v, q_limit, nominal,
                  band_low, band_high, w_dev, bonus):
    """Advance one control step; returns (svc_q', voltage', reward)."""
    q_new = svc_q + action
    if q_new > q_limit:
        q_new = q_limit
    elif q_new < -q_limit:
        q_new = -q_limit
    v_new = nominal + k_v * q_new + next_offset
    reward = -w_dev * abs(v_new - nominal)
    if band_low <= v_new <= band_high:
        reward += bonus
    return q_new, v_new, reward


@njit
def greedy_index(row):
    # first maximum wins; callers order actions by increasing magnitude
    best = 0
    for a in range(1, row.shape[0]):
        if row[a] > row[best]:
            best = a
    return best


@njit
def train_q_table(q_table, offsets, explore_u, explore_a, epsilons, actions,
                  k_v, q_limit, nominal, band_low, band_high, w_dev, bonus,
                  v_min, bin_width, alpha, gamma):
    """Run epsilon-greedy one-step Q-learning in place on ``q_table``.

    ``offsets`` has shape (episodes, steps + 1): column 0 is the disturbance
    at reset, column t + 1 the disturbance seen after step t. Random draws
    are supplied by the caller so both execution paths consume the same
    stream. Returns per-episode cumulative reward and the index of the first
    episode that produced a non-finite value (-1 when none did).
    """
    n_episodes = offsets.shape[0]
    n_steps = offsets.shape[1] - 1
    n_bins = q_table.shape[0]
    returns = np.zeros(n_episodes)
    bad = -1
    for e in range(n_episodes):
        svc_q = 0.0
        v = nominal + offsets[e, 0]
        s = voltage_bin(v, v_min, bin_width, n_bins)
        total = 0.0
        for t in range(n_steps):
            if explore_u[e, t] < epsilons[e]:
                a = explore_a[e, t]
            else:
                a = greedy_index(q_table[s])
            svc_q, v, r = step_dynamics(svc_q, actions[a], offsets[e, t + 1], k_v,
                                        q_limit, nominal, band_low, band_high,
                                        w_dev, bonus)
            s_next = voltage_bin(v, v_min, bin_width, n_bins)
            best_next = q_table[s_next, greedy_index(q_table[s_next])]
            target = r + gamma * best_next
            q_table[s, a] += alpha * (target - q_table[s, a])
            if not np.isfinite(q_table[s, a]):
                return returns, e
            total += r
            s = s_next
        returns[e] = total
    return returns, bad
