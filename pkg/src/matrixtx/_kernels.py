"""Hot loops: moving-boundary finite differences and particle stepping.

Each kernel exists twice.  The ``*_loop`` functions are plain Python written
for numba; the ``*_numpy`` functions are vectorized numpy equivalents used
when numba is disabled.  ``select`` picks the active one, ``BACKENDS`` holds
both for benchmarking.
"""

import math

import numpy as np
from scipy.special import erfc as _erfc

from ._accel import njit, use_numba

# ---------------------------------------------------------------------------
# Moving-boundary FDM in normalized variables
#
#   x = r / a,  c = C / C_s,  t = D_m t_phys / a^2,  u = x c
#   grid xi in [0, 1] mapped to x = R + xi (1 - R)
#   u_t = u_xixi / L^2 + Rdot (1 - xi) / L u_xi,   L = 1 - R
#   u(xi=0) = R,  u(xi=1) = 0,  Rdot = (u_xi(0) / L - 1) / (R (ratio - 1))
# ---------------------------------------------------------------------------


@njit
def _released(u, R, h, ratio):
    n = u.shape[0]
    L = 1.0 - R
    s = 0.0
    for i in range(n):
        w = 0.5 if (i == 0 or i == n - 1) else 1.0
        s += w * (R + i * h * L) * u[i]
    return 1.0 - R * R * R - 3.0 / ratio * s * h * L


def fdm_loop(u, R, t, ratio, dt_cap, front_tol, max_steps, t_rec, t_out, R_out, F_out):
    n = u.shape[0]
    h = 1.0 / (n - 1)
    un = u.copy()
    m = 0
    k = 0
    while R > front_tol:
        if k >= max_steps:
            break
        L = 1.0 - R
        hx = h * L
        ux0 = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h) / L
        rdot = (ux0 - 1.0) / (R * (ratio - 1.0))
        dt = 0.2 * hx * hx
        if dt > dt_cap:
            dt = dt_cap
        if rdot != 0.0:
            lim = 0.1 * min(hx, R) / abs(rdot)
            if dt > lim:
                dt = lim
        inv_h2L2 = 1.0 / (h * h * L * L)
        adv = rdot / L / (2.0 * h)
        for i in range(1, n - 1):
            xi = i * h
            un[i] = u[i] + dt * (
                (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2L2 + adv * (1.0 - xi) * (u[i + 1] - u[i - 1])
            )
        R += dt * rdot
        if R < 0.0:
            R = 0.0
        un[0] = R
        un[n - 1] = 0.0
        for i in range(n):
            u[i] = un[i]
        t += dt
        k += 1
        while m < t_rec.shape[0] and t >= t_rec[m]:
            t_out[m] = t
            R_out[m] = R
            F_out[m] = _released(u, R, h, ratio)
            m += 1
    return t, R, m, k


def fdm_numpy(u, R, t, ratio, dt_cap, front_tol, max_steps, t_rec, t_out, R_out, F_out):
    n = u.shape[0]
    h = 1.0 / (n - 1)
    xi = np.arange(1, n - 1) * h
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    m = 0
    k = 0
    while R > front_tol and k < max_steps:
        L = 1.0 - R
        hx = h * L
        ux0 = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h) / L
        rdot = (ux0 - 1.0) / (R * (ratio - 1.0))
        dt = min(0.2 * hx * hx, dt_cap)
        if rdot != 0.0:
            dt = min(dt, 0.1 * min(hx, R) / abs(rdot))
        lap = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h * L * L)
        grad = (u[2:] - u[:-2]) * (rdot / L / (2.0 * h))
        u[1:-1] = u[1:-1] + dt * (lap + (1.0 - xi) * grad)
        R = max(R + dt * rdot, 0.0)
        u[0] = R
        u[-1] = 0.0
        t += dt
        k += 1
        while m < t_rec.shape[0] and t >= t_rec[m]:
            L = 1.0 - R
            x = R + np.arange(n) * h * L
            t_out[m] = t
            R_out[m] = R
            F_out[m] = 1.0 - R ** 3 - 3.0 / ratio * float(np.sum(w * x * u)) * h * L
            m += 1
    return t, R, m, k


# ---------------------------------------------------------------------------
# Particle stepping for the matrix release and the end-to-end channel
#
# status: 0 undissolved, 1 diffusing in the matrix, 2 free in the channel,
#         3 absorbed (or frozen at release when the channel is not simulated),
#         4 released this step, awaiting its half-step channel move
# ---------------------------------------------------------------------------

MODE_RELEASE_ONLY = 0
MODE_END_OF_STEP = 1
MODE_BRIDGE = 2
MODE_APRIORI = 3

# bridge crossing probabilities below exp(-40) are treated as zero
BRIDGE_CUTOFF = 40.0


@njit
def _phi(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def pbs_loop(
    pos, radius, status, front, sd_matrix, sd_channel, a, rx_x, r_rx,
    D_m_dt, D_c_dt, mode, surface_bridge, noise, step_lo, step_hi,
    n_active_start, activated, active, released_counts, absorbed_counts,
):
    """Advance one realization through steps ``[step_lo, step_hi)``.

    ``noise`` holds standard normals for these steps, consumed in a fixed
    order: per step, each active molecule in ``active`` order takes 3
    values, or 4 with a channel or the surface bridge test.  ``activated``
    counts molecules (sorted by decreasing radius) already freed by the
    front; ``active[:n_active]`` lists indices of moving molecules.
    Counts are written to ``released_counts[1:]`` and ``absorbed_counts[1:]``
    (index 0 holds the totals before ``step_lo``).  Returns
    ``(activated, n_active, cursor)``.
    """
    n = pos.shape[0]
    n_active = n_active_start
    cursor = 0
    released = released_counts[0]
    absorbed = absorbed_counts[0]
    per = 3 if (mode == MODE_RELEASE_ONLY and not surface_bridge) else 4
    a2 = a * a
    rr2 = r_rx * r_rx
    for k in range(step_lo, step_hi):
        rk = front[k + 1]
        rk2 = rk * rk
        # dissolve molecules the front has passed
        while activated < n and radius[activated] >= rk:
            status[activated] = 1
            active[n_active] = activated
            n_active += 1
            activated += 1
        keep = 0
        for j in range(n_active):
            i = active[j]
            g0 = noise[cursor]
            g1 = noise[cursor + 1]
            g2 = noise[cursor + 2]
            g3 = noise[cursor + 3] if per == 4 else 0.0
            cursor += per
            x = pos[i, 0]
            y = pos[i, 1]
            z = pos[i, 2]
            if status[i] == 1:
                nx = x + sd_matrix * g0
                ny = y + sd_matrix * g1
                nz = z + sd_matrix * g2
                d2 = nx * nx + ny * ny + nz * nz
                if d2 < rk2:
                    # bounced off the undissolved core
                    active[keep] = i
                    keep += 1
                    continue
                pos[i, 0] = nx
                pos[i, 1] = ny
                pos[i, 2] = nz
                out = d2 >= a2
                arg = 0.0
                if not out and surface_bridge:
                    # Brownian bridge: did the path touch the surface mid-step?
                    gap1 = a - math.sqrt(x * x + y * y + z * z)
                    gap2 = a - math.sqrt(d2)
                    arg = gap1 * gap2 / D_m_dt
                    out = arg < BRIDGE_CUTOFF and _phi(g3) < math.exp(-arg)
                if out:
                    released += 1
                    if mode == MODE_RELEASE_ONLY:
                        status[i] = 3
                        continue
                    status[i] = 2
                    if mode == MODE_APRIORI:
                        # first absorption test over the remaining half step;
                        # a uniform that passed the bridge test is rescaled
                        u = _phi(g3)
                        if d2 < a2:
                            u = u / math.exp(-arg)
                        ex = nx - rx_x
                        rho = math.sqrt(ex * ex + ny * ny + nz * nz)
                        p = r_rx / rho * math.erfc((rho - r_rx) / math.sqrt(2.0 * D_c_dt))
                        if u < p:
                            status[i] = 3
                            absorbed += 1
                            continue
                        status[i] = 4
                active[keep] = i
                keep += 1
                continue
            # free channel diffusion towards the receiver at (rx_x, 0, 0)
            bx = x - rx_x
            if mode == MODE_APRIORI:
                # absorb with the probability of a hit within the step from
                # the start point; survivors may not end inside the receiver
                rho = math.sqrt(bx * bx + y * y + z * z)
                p = r_rx / rho * math.erfc((rho - r_rx) / math.sqrt(4.0 * D_c_dt))
                hit = _phi(g3) < p
            else:
                hit = False
            if not hit:
                nx = x + sd_channel * g0
                ny = y + sd_channel * g1
                nz = z + sd_channel * g2
                ex = nx - rx_x
                e2 = ex * ex + ny * ny + nz * nz
                if mode == MODE_APRIORI:
                    if e2 > rr2:
                        pos[i, 0] = nx
                        pos[i, 1] = ny
                        pos[i, 2] = nz
                else:
                    pos[i, 0] = nx
                    pos[i, 1] = ny
                    pos[i, 2] = nz
                    hit = e2 <= rr2
                    if not hit and mode == MODE_BRIDGE:
                        s1 = math.sqrt(bx * bx + y * y + z * z) - r_rx
                        arg = s1 * (math.sqrt(e2) - r_rx) / D_c_dt
                        hit = arg < BRIDGE_CUTOFF and _phi(g3) < math.exp(-arg)
            if hit:
                status[i] = 3
                absorbed += 1
                continue
            active[keep] = i
            keep += 1
        n_active = keep
        if mode == MODE_APRIORI:
            # survivors of the half-step test move for that half step,
            # drawing 3 extra normals each after the main sweep
            sd_half = math.sqrt(D_c_dt)
            for j in range(n_active):
                i = active[j]
                if status[i] != 4:
                    continue
                status[i] = 2
                nx = pos[i, 0] + sd_half * noise[cursor]
                ny = pos[i, 1] + sd_half * noise[cursor + 1]
                nz = pos[i, 2] + sd_half * noise[cursor + 2]
                cursor += 3
                ex = nx - rx_x
                if ex * ex + ny * ny + nz * nz > rr2:
                    pos[i, 0] = nx
                    pos[i, 1] = ny
                    pos[i, 2] = nz
        released_counts[k + 1 - step_lo] = released
        absorbed_counts[k + 1 - step_lo] = absorbed
    return activated, n_active, cursor


def _norm2(v):
    # same summation order as the scalar loop
    return v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2]


def pbs_numpy(
    pos, radius, status, front, sd_matrix, sd_channel, a, rx_x, r_rx,
    D_m_dt, D_c_dt, mode, surface_bridge, noise, step_lo, step_hi,
    n_active_start, activated, active, released_counts, absorbed_counts,
):
    n = pos.shape[0]
    n_active = n_active_start
    cursor = 0
    released = released_counts[0]
    absorbed = absorbed_counts[0]
    per = 3 if (mode == MODE_RELEASE_ONLY and not surface_bridge) else 4
    for k in range(step_lo, step_hi):
        rk = front[k + 1]
        new = activated
        while new < n and radius[new] >= rk:
            new += 1
        if new > activated:
            status[activated:new] = 1
            active[n_active:n_active + new - activated] = np.arange(activated, new)
            n_active += new - activated
            activated = new
        idx = active[:n_active].copy()
        g = noise[cursor:cursor + per * n_active].reshape(n_active, per)
        cursor += per * n_active
        old = pos[idx]
        st = status[idx]
        in_matrix = st == 1
        sd = np.where(in_matrix, sd_matrix, sd_channel)[:, None]
        new_pos = old + sd * g[:, :3]
        d2 = _norm2(new_pos)
        bounced = in_matrix & (d2 < rk * rk)
        new_pos[bounced] = old[bounced]
        pos[idx] = new_pos
        out = in_matrix & ~bounced & (d2 >= a * a)
        if surface_bridge:
            test = in_matrix & ~bounced & ~out
            gap1 = a - np.sqrt(_norm2(old[test]))
            gap2 = a - np.sqrt(d2[test])
            u_s = 0.5 * _erfc(-g[test, 3] / math.sqrt(2.0))
            arg = gap1 * gap2 / D_m_dt
            out[test] = (arg < BRIDGE_CUTOFF) & (u_s < np.exp(-arg))
        released += int(np.count_nonzero(out))
        keep = np.ones(n_active, dtype=bool)
        if mode == MODE_RELEASE_ONLY:
            status[idx[out]] = 3
            keep &= ~out
        else:
            status[idx[out]] = 2
            free = st == 2
            shift = np.array([rx_x, 0.0, 0.0])
            if mode == MODE_APRIORI:
                u_r = 0.5 * _erfc(-g[out, 3] / math.sqrt(2.0))
                if surface_bridge:
                    via = ~(d2[out] >= a * a)
                    gap1 = a - np.sqrt(_norm2(old[out][via]))
                    gap2 = a - np.sqrt(d2[out][via])
                    u_r[via] = u_r[via] / np.exp(-(gap1 * gap2 / D_m_dt))
                rho = np.sqrt(_norm2(new_pos[out] - shift))
                p = r_rx / rho * _erfc((rho - r_rx) / math.sqrt(2.0 * D_c_dt))
                early = np.zeros(n_active, dtype=bool)
                early[np.flatnonzero(out)[u_r < p]] = True
                status[idx[early]] = 3
                absorbed += int(np.count_nonzero(early))
                keep &= ~early
                late = out & ~early
            e2 = _norm2(new_pos - shift)
            u = 0.5 * _erfc(-g[:, 3] / math.sqrt(2.0))
            if mode == MODE_APRIORI:
                rho = np.sqrt(_norm2(old - shift))
                p = np.zeros(n_active)
                p[free] = r_rx / rho[free] * _erfc((rho[free] - r_rx) / math.sqrt(4.0 * D_c_dt))
                hit = free & (u < p)
                stay = hit | (free & (e2 <= r_rx * r_rx))
                pos[idx[stay]] = old[stay]
            else:
                hit = free & (e2 <= r_rx * r_rx)
                if mode == MODE_BRIDGE:
                    test = free & ~hit
                    s1 = np.sqrt(_norm2(old[test] - shift)) - r_rx
                    arg = s1 * (np.sqrt(e2[test]) - r_rx) / D_c_dt
                    hit[test] = (arg < BRIDGE_CUTOFF) & (u[test] < np.exp(-arg))
            status[idx[hit]] = 3
            absorbed += int(np.count_nonzero(hit))
            keep &= ~hit
            if mode == MODE_APRIORI and np.any(late):
                mv = idx[late]
                h = noise[cursor:cursor + 3 * mv.size].reshape(mv.size, 3)
                cursor += 3 * mv.size
                cand = pos[mv] + math.sqrt(D_c_dt) * h
                ok = _norm2(cand - shift) > r_rx * r_rx
                pos[mv[ok]] = cand[ok]
        kept = idx[keep]
        active[:kept.size] = kept
        n_active = kept.size
        released_counts[k + 1 - step_lo] = released
        absorbed_counts[k + 1 - step_lo] = absorbed
    return activated, n_active, cursor


BACKENDS = {"numpy": {"fdm": fdm_numpy, "pbs": pbs_numpy}}
if use_numba():
    BACKENDS["numba"] = {"fdm": njit(fdm_loop), "pbs": njit(pbs_loop)}
else:
    # kept importable without numba; plain-Python loops are far too slow to use
    BACKENDS["python"] = {"fdm": fdm_loop, "pbs": pbs_loop}

ACTIVE_BACKEND = "numba" if use_numba() else "numpy"


def select(kernel):
    return BACKENDS[ACTIVE_BACKEND][kernel]
