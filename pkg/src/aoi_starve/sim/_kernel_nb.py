"""Compiled whole-run kernel.

Every branch and every random draw mirrors :mod:`._kernel_np` exactly; the
two are checked against each other for bit-identical state in the tests.
"""

import numpy as np
from numba import njit

from .world import (
    COLLISION, EV_RX, EV_TX, F_P_IDLE, F_P_KEEP, F_PHI, F_RAW2, F_ROAD, F_SENSE2,
    HALF_DUPLEX, HIST_BINS, I_ABSTRACT, I_EVE_MODE, I_EVE_ON, I_EVE_R, I_EVE_T0, I_G,
    I_HCAP, I_HD, I_K, I_LOGCAP, I_M, I_N, I_NTHR, I_Q, I_RCMAX, I_RCMIN, I_RING,
    I_RLOGCAP, I_S1, I_T, I_WARM, NEVER, OK, PHY_LOSS, PROBE_TRIES, S_ATTEMPT,
    S_AVAIL_FREE, S_AVAIL_TOTAL, S_COLL, S_EVE_CLAIMS, S_EXIT, S_HD, S_KEEP, S_KEEPDEC,
    S_LOG_DROP, S_LOG_N, S_NOTFOUND, S_OK, S_OOR, S_PASSAGE_N, S_PASSAGE_SUM, S_PHY,
    S_RESET_N, S_RLOG_DROP, S_RLOG_N, S_TX,
)

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _u01(key, ctr):
    return (_mix(key + np.uint64(ctr + 1) * _GOLD) >> np.uint64(11)) * _INV53


@njit(inline="always")
def _d2(xs, y, u, v, road, ring):
    dx = abs(xs[u] - xs[v])
    if ring != 0 and road - dx < dx:
        dx = road - dx
    dy = y[u] - y[v]
    return dx * dx + dy * dy


@njit(inline="always")
def _blocked(u, sf, sc, t, own, ip, fp, xs, y, eve_until, occ, holders):
    road, ring, sense2 = fp[F_ROAD], ip[I_RING], fp[F_SENSE2]
    for j in range(sc, sc + ip[I_K]):
        if eve_until[sf, j] > t:
            return True
        for h in range(occ[sf, j]):
            v = holders[sf, j, h]
            if v == u:
                if own:
                    return True
                continue
            if _d2(xs, y, u, v, road, ring) <= sense2:
                return True
    return False


@njit(cache=True)
def _hold(u, sf, sc, ip, occ, holders, hold_sf, hold_sc):
    for j in range(sc, sc + ip[I_K]):
        c = occ[sf, j]
        if c >= ip[I_HCAP]:
            raise RuntimeError("holder capacity exceeded")
        holders[sf, j, c] = u
        occ[sf, j] = c + 1
    hold_sf[u] = sf
    hold_sc[u] = sc


@njit(cache=True)
def _release(u, ip, occ, holders, hold_sf, hold_sc):
    sf, sc = hold_sf[u], hold_sc[u]
    for j in range(sc, sc + ip[I_K]):
        c = occ[sf, j]
        for h in range(c):
            if holders[sf, j, h] == u:
                holders[sf, j, h] = holders[sf, j, c - 1]
                holders[sf, j, c - 1] = -1
                occ[sf, j] = c - 1
                break
    hold_sf[u] = -1
    hold_sc[u] = -1


@njit(cache=True)
def _eve_step(t, ip, eve_until, occ, eve_ptr, stats):
    g, m, q = ip[I_G], ip[I_M], ip[I_Q]
    p = eve_ptr[0]
    v = p % g
    want = ((v + 1) * q) // g - (v * q) // g
    got = 0
    for j in range(m):
        if got == want:
            break
        if occ[v, j] > 0:
            continue
        eve_until[v, j] = t + g
        got += 1
    stats[S_EVE_CLAIMS] += got
    eve_ptr[0] = p + 1


@njit(inline="always")
def _integrate(u, r, rx, ip, thr, last_rx, last_reset, area2, obs, tcount):
    a0 = last_rx[u, r]
    a = max(a0, float(ip[I_WARM]))
    b = min(rx, float(ip[I_T]))
    if b > a:
        v0 = last_reset[u, r] + (a - a0)
        L = b - a
        area2[u, r] += 2.0 * L * v0 + L * L
        obs[u, r] += L
        for i in range(ip[I_NTHR]):
            c = thr[i] - v0
            if c < 0.0:
                c = 0.0
            elif c > L:
                c = L
            tcount[u, r, i] += c


@njit(inline="always")
def _draw_rc(u, ip, k_rc, ctr_rc):
    span = ip[I_RCMAX] - ip[I_RCMIN] + 1
    val = ip[I_RCMIN] + np.int64(_u01(k_rc[u], ctr_rc[u]) * span)
    ctr_rc[u] += 1
    return val


@njit(cache=True)
def run_kernel(t_start, t_stop, ip, fp, thr, x0, y, vel, k_idle, k_csr, k_rc, k_keep, k_phy,
               next_tx, idle_since, rc, hold_sf, hold_sc, age, anchor, ctr_csr, ctr_rc, ctr_keep,
               since_dec, eve_until, occ, holders, eve_ptr, last_rx, last_reset, pend, pend_gen,
               area2, obs, nrx, tcount, reset_hist, reset_le, reset_sum, rc_hist, stats, log, rlog):
    n, g, m, k = ip[I_N], ip[I_G], ip[I_M], ip[I_K]
    warm, s1 = ip[I_WARM], ip[I_S1]
    S = g * s1
    road, ring = fp[F_ROAD], ip[I_RING]
    raw2 = fp[F_RAW2]
    eve_mode, eve_on, eve_r, eve_t0 = ip[I_EVE_MODE], ip[I_EVE_ON], ip[I_EVE_R], ip[I_EVE_T0]
    abstract, hd = ip[I_ABSTRACT], ip[I_HD]
    logcap, rlogcap, nthr = ip[I_LOGCAP], ip[I_RLOGCAP], ip[I_NTHR]
    p_idle, p_keep, phi = fp[F_P_IDLE], fp[F_P_KEEP], fp[F_PHI]
    txl = np.empty(n, dtype=np.int64)
    stamp = np.zeros((g, m), dtype=np.int64)
    token = np.int64(0)
    xs = x0.copy()

    for t in range(t_start, t_stop):
        if t < 0:
            if eve_on != 0 and (t - eve_t0) % eve_r == 0:
                _eve_step(t, ip, eve_until, occ, eve_ptr, stats)
            continue
        post = t >= warm
        if ring != 0:
            for u in range(n):
                xs[u] = (x0[u] + vel[u] * (t * 0.001)) % road

        # ---- transmissions and receptions
        ntx = 0
        for u in range(n):
            if next_tx[u] == t:
                txl[ntx] = u
                ntx += 1
        for i in range(ntx):
            u = txl[i]
            if post:
                stats[S_TX] += 1
            if logcap > 0:
                if stats[S_LOG_N] < logcap:
                    row = stats[S_LOG_N]
                    log[row, 0] = EV_TX
                    log[row, 1] = u
                    log[row, 2] = -1
                    log[row, 3] = t + 1 - age[u]
                    log[row, 4] = t
                    log[row, 5] = hold_sf[u]
                    log[row, 6] = hold_sc[u]
                    log[row, 7] = -1
                    stats[S_LOG_N] += 1
                else:
                    stats[S_LOG_DROP] += 1
        rx = float(t + 1)
        for i in range(ntx):
            u = txl[i]
            gen = float(t + 1 - age[u])
            for r in range(n):
                if r == u:
                    continue
                if _d2(xs, y, u, r, road, ring) > raw2:
                    if post:
                        stats[S_OOR] += 1
                    continue
                outcome = -1
                if abstract == 0:
                    if hd != 0 and next_tx[r] == t:
                        outcome = HALF_DUPLEX
                    else:
                        for jj in range(ntx):
                            w = txl[jj]
                            if w == u:
                                continue
                            if hold_sc[w] < hold_sc[u] + k and hold_sc[u] < hold_sc[w] + k:
                                if _d2(xs, y, w, r, road, ring) <= raw2:
                                    outcome = COLLISION
                                    break
                if outcome < 0:
                    if _u01(k_phy[u, r], t) < phi:
                        outcome = OK
                    else:
                        outcome = PHY_LOSS
                if post:
                    if outcome == OK:
                        stats[S_OK] += 1
                    elif outcome == COLLISION:
                        stats[S_COLL] += 1
                    elif outcome == PHY_LOSS:
                        stats[S_PHY] += 1
                    else:
                        stats[S_HD] += 1
                if logcap > 0:
                    if stats[S_LOG_N] < logcap:
                        row = stats[S_LOG_N]
                        log[row, 0] = EV_RX
                        log[row, 1] = u
                        log[row, 2] = r
                        log[row, 3] = t + 1 - age[u]
                        log[row, 4] = t + 1
                        log[row, 5] = hold_sf[u]
                        log[row, 6] = hold_sc[u]
                        log[row, 7] = outcome
                        stats[S_LOG_N] += 1
                    else:
                        stats[S_LOG_DROP] += 1
                if outcome == OK:
                    if pend[u, r]:
                        reset = rx - pend_gen[u, r]
                        pend[u, r] = False
                    else:
                        reset = rx - gen
                    if last_rx[u, r] >= 0.0:
                        _integrate(u, r, rx, ip, thr, last_rx, last_reset, area2, obs, tcount)
                    last_rx[u, r] = rx
                    last_reset[u, r] = reset
                    if rx >= warm:
                        nrx[u, r] += 1
                        b = np.int64(np.ceil(reset))
                        if b > HIST_BINS:
                            b = HIST_BINS
                        reset_hist[b] += 1
                        reset_sum[0] += reset
                        stats[S_RESET_N] += 1
                        for q in range(nthr):
                            if reset <= thr[q]:
                                reset_le[q] += 1
                        if rlogcap > 0:
                            if stats[S_RLOG_N] < rlogcap:
                                row = stats[S_RLOG_N]
                                rlog[row, 0] = u
                                rlog[row, 1] = r
                                rlog[row, 2] = t + 1
                                rlog[row, 3] = np.int64(reset)
                                stats[S_RLOG_N] += 1
                            else:
                                stats[S_RLOG_DROP] += 1
                elif not pend[u, r]:
                    pend[u, r] = True
                    pend_gen[u, r] = gen

        # ---- reselection counter, keep or release
        for i in range(ntx):
            u = txl[i]
            since_dec[u] += 1
            rc[u] -= 1
            if rc[u] > 0:
                next_tx[u] = t + g
                continue
            if post:
                stats[S_KEEPDEC] += 1
                c = since_dec[u]
                if c >= rc_hist.shape[0]:
                    c = rc_hist.shape[0] - 1
                rc_hist[c] += 1
            since_dec[u] = 0
            draw = _u01(k_keep[u], ctr_keep[u])
            ctr_keep[u] += 1
            if draw < p_keep:
                if post:
                    stats[S_KEEP] += 1
                rc[u] = _draw_rc(u, ip, k_rc, ctr_rc)
                next_tx[u] = t + g
            else:
                _release(u, ip, occ, holders, hold_sf, hold_sc)
                next_tx[u] = NEVER
                idle_since[u] = t + 1
                anchor[u] = t + 1

        # ---- adversary
        if eve_on != 0 and (t - eve_t0) % eve_r == 0:
            _eve_step(t, ip, eve_until, occ, eve_ptr, stats)

        # ---- Idle UEs attempt selection
        for u in range(n):
            if next_tx[u] != NEVER or idle_since[u] > t:
                continue
            if post:
                stats[S_ATTEMPT] += 1
            if not _u01(k_idle[u], t) < p_idle:
                continue
            sf = -1
            sc = -1
            if eve_mode != 0:
                idx = np.int64(_u01(k_csr[u], ctr_csr[u]) * S)
                ctr_csr[u] += 1
                if not _blocked(u, idx // s1, idx % s1, t, False, ip, fp, xs, y,
                                eve_until, occ, holders):
                    sf = idx // s1
                    sc = idx % s1
            else:
                for _ in range(PROBE_TRIES):
                    idx = np.int64(_u01(k_csr[u], ctr_csr[u]) * S)
                    ctr_csr[u] += 1
                    if not _blocked(u, idx // s1, idx % s1, t, False, ip, fp, xs, y,
                                    eve_until, occ, holders):
                        sf = idx // s1
                        sc = idx % s1
                        break
                if sf < 0:
                    nfree = 0
                    for idx in range(S):
                        if not _blocked(u, idx // s1, idx % s1, t, False, ip, fp, xs, y,
                                        eve_until, occ, holders):
                            nfree += 1
                    if nfree > 0:
                        pick = np.int64(_u01(k_csr[u], ctr_csr[u]) * nfree)
                        ctr_csr[u] += 1
                        for idx in range(S):
                            if not _blocked(u, idx // s1, idx % s1, t, False, ip, fp, xs, y,
                                            eve_until, occ, holders):
                                if pick == 0:
                                    sf = idx // s1
                                    sc = idx % s1
                                    break
                                pick -= 1
            if sf < 0:
                if post:
                    stats[S_NOTFOUND] += 1
                continue
            _hold(u, sf, sc, ip, occ, holders, hold_sf, hold_sc)
            wait = (sf - (t + 1)) % g
            first = t + 1 + wait + g
            if post:
                stats[S_EXIT] += 1
                stats[S_PASSAGE_SUM] += first - idle_since[u]
                stats[S_PASSAGE_N] += 1
            next_tx[u] = first
            idle_since[u] = NEVER
            age[u] = first + 1 - anchor[u]
            rc[u] = _draw_rc(u, ip, k_rc, ctr_rc)
            since_dec[u] = 0

        # ---- availability, sampled once per RRI
        if post and (t - warm) % g == 0:
            eve_cnt = 0
            for sf in range(g):
                for j in range(m):
                    if eve_until[sf, j] > t:
                        eve_cnt += 1
            for u in range(n):
                token += 1
                extra = 0
                for v in range(n):
                    if hold_sf[v] < 0:
                        continue
                    if v != u and _d2(xs, y, u, v, road, ring) > fp[F_SENSE2]:
                        continue
                    sf = hold_sf[v]
                    for j in range(hold_sc[v], hold_sc[v] + k):
                        if stamp[sf, j] != token:
                            stamp[sf, j] = token
                            if eve_until[sf, j] <= t:
                                extra += 1
                if k == 1:
                    free = S - eve_cnt - extra
                else:
                    free = 0
                    for sf in range(g):
                        for sc in range(s1):
                            ok = True
                            for j in range(sc, sc + k):
                                if eve_until[sf, j] > t or stamp[sf, j] == token:
                                    ok = False
                                    break
                            if ok:
                                free += 1
                stats[S_AVAIL_FREE] += free
                stats[S_AVAIL_TOTAL] += S
    return t_stop
