"""Pure-numpy simulation path.

One Python iteration per subframe; receptions, counter updates and
availability sampling are vectorized, selections run in UE order because
each one changes what the next UE senses.
"""

from __future__ import annotations

import numpy as np

from .. import rng
from .world import (
    COLLISION, EV_RX, EV_TX, F_P_IDLE, F_P_KEEP, F_PHI, F_RAW2, F_ROAD, F_SENSE2,
    HALF_DUPLEX, HIST_BINS, I_ABSTRACT, I_EVE_MODE, I_EVE_ON, I_EVE_R, I_EVE_T0, I_G,
    I_HCAP, I_HD, I_K, I_LOGCAP, I_M, I_Q, I_RCMAX, I_RCMIN, I_RING,
    I_RLOGCAP, I_S1, I_T, I_WARM, NEVER, OK, PHY_LOSS, PROBE_TRIES, S_ATTEMPT,
    S_AVAIL_FREE, S_AVAIL_TOTAL, S_COLL, S_EVE_CLAIMS, S_EXIT, S_HD, S_KEEP, S_KEEPDEC,
    S_LOG_DROP, S_LOG_N, S_NOTFOUND, S_OK, S_OOR, S_PASSAGE_N, S_PASSAGE_SUM, S_PHY,
    S_RESET_N, S_RLOG_DROP, S_RLOG_N, S_TX, World, positions_x,
)


def _u01(key, ctr) -> float:
    return float(rng.uniform(np.asarray([key], dtype=np.uint64), np.asarray([ctr]))[0])


def pair_d2(w: World, us, vs, t) -> np.ndarray:
    """Squared distances for index arrays ``us`` and ``vs`` at subframe ``t``."""
    ring = bool(w.ip[I_RING])
    road = w.fp[F_ROAD]
    x = positions_x(w.x0, w.vel, t, road, ring)
    dx = np.abs(x[us] - x[vs])
    if ring:
        dx = np.where(road - dx < dx, road - dx, dx)
    dy = w.y[us] - w.y[vs]
    return dx * dx + dy * dy


def blocked(w: World, u: int, sf: int, sc: int, t: int, own: bool = False) -> bool:
    """Whether UE ``u`` senses window (sf, sc) as reserved at ``t``."""
    k = int(w.ip[I_K])
    sense2 = w.fp[F_SENSE2]
    for j in range(sc, sc + k):
        if w.eve_until[sf, j] > t:
            return True
        c = int(w.occ[sf, j])
        if c == 0:
            continue
        hs = w.holders[sf, j, :c]
        if own and np.any(hs == u):
            return True
        hs = hs[hs != u]
        if hs.size and np.any(pair_d2(w, np.full(hs.size, u), hs, t) <= sense2):
            return True
    return False


def hold(w: World, u: int, sf: int, sc: int) -> None:
    for j in range(sc, sc + int(w.ip[I_K])):
        c = int(w.occ[sf, j])
        if c >= w.ip[I_HCAP]:
            raise RuntimeError("holder capacity exceeded")
        w.holders[sf, j, c] = u
        w.occ[sf, j] = c + 1
    w.hold_sf[u] = sf
    w.hold_sc[u] = sc


def release(w: World, u: int) -> None:
    sf, sc = int(w.hold_sf[u]), int(w.hold_sc[u])
    for j in range(sc, sc + int(w.ip[I_K])):
        c = int(w.occ[sf, j])
        row = w.holders[sf, j]
        h = int(np.flatnonzero(row[:c] == u)[0])
        row[h] = row[c - 1]
        row[c - 1] = -1
        w.occ[sf, j] = c - 1
    w.hold_sf[u] = -1
    w.hold_sc[u] = -1


def eve_step(w: World, t: int) -> int:
    """One adversary announcement: refresh the next subframe of the rotation."""
    g, q = int(w.ip[I_G]), int(w.ip[I_Q])
    p = int(w.eve_ptr[0])
    v = p % g
    want = ((v + 1) * q) // g - (v * q) // g
    free = np.flatnonzero(w.occ[v] == 0)[:want]
    w.eve_until[v, free] = t + g
    w.stats[S_EVE_CLAIMS] += free.size
    w.eve_ptr[0] = p + 1
    return int(free.size)


def draw_rc(w: World, u) -> np.ndarray:
    span = w.ip[I_RCMAX] - w.ip[I_RCMIN] + 1
    val = w.ip[I_RCMIN] + (rng.uniform(w.k_rc[u], w.ctr_rc[u]) * span).astype(np.int64)
    w.ctr_rc[u] += 1
    return val


def select(w: World, u: int, t: int):
    """Pick a window for Idle UE ``u`` whose Bernoulli attempt fired; None if nothing usable."""
    s1 = int(w.ip[I_S1])
    S = int(w.ip[I_G]) * s1
    if w.ip[I_EVE_MODE]:
        idx = int(_u01(w.k_csr[u], w.ctr_csr[u]) * S)
        w.ctr_csr[u] += 1
        return None if blocked(w, u, idx // s1, idx % s1, t) else (idx // s1, idx % s1)
    for _ in range(PROBE_TRIES):
        idx = int(_u01(w.k_csr[u], w.ctr_csr[u]) * S)
        w.ctr_csr[u] += 1
        if not blocked(w, u, idx // s1, idx % s1, t):
            return idx // s1, idx % s1
    free = [i for i in range(S) if not blocked(w, u, i // s1, i % s1, t)]
    if not free:
        return None
    pick = int(_u01(w.k_csr[u], w.ctr_csr[u]) * len(free))
    w.ctr_csr[u] += 1
    return free[pick] // s1, free[pick] % s1


def commit(w: World, u: int, sf: int, sc: int, t: int, post: bool) -> int:
    g = int(w.ip[I_G])
    hold(w, u, sf, sc)
    first = t + 1 + (sf - (t + 1)) % g + g
    if post:
        w.stats[S_EXIT] += 1
        w.stats[S_PASSAGE_SUM] += first - int(w.idle_since[u])
        w.stats[S_PASSAGE_N] += 1
    w.next_tx[u] = first
    w.idle_since[u] = NEVER
    w.age[u] = first + 1 - w.anchor[u]
    w.rc[u] = draw_rc(w, np.array([u]))[0]
    w.since_dec[u] = 0
    return first


def _log_rows(w: World, rows: np.ndarray) -> None:
    cap = int(w.ip[I_LOGCAP])
    if cap <= 0 or rows.shape[0] == 0:
        return
    n0 = int(w.stats[S_LOG_N])
    take = min(rows.shape[0], cap - n0)
    if take > 0:
        w.log[n0:n0 + take] = rows[:take]
        w.stats[S_LOG_N] += take
    w.stats[S_LOG_DROP] += rows.shape[0] - max(take, 0)


def _integrate(w: World, us, rs, rx: float) -> None:
    a0 = w.last_rx[us, rs]
    a = np.maximum(a0, float(w.ip[I_WARM]))
    b = min(rx, float(w.ip[I_T]))
    sel = b > a
    if not np.any(sel):
        return
    us, rs, a, a0 = us[sel], rs[sel], a[sel], a0[sel]
    v0 = w.last_reset[us, rs] + (a - a0)
    L = b - a
    w.area2[us, rs] += 2.0 * L * v0 + L * L
    w.obs[us, rs] += L
    c = np.clip(w.thr[None, :] - v0[:, None], 0.0, None)
    c = np.minimum(c, L[:, None])
    w.tcount[us, rs] += c


def transmit(w: World, t: int, post: bool) -> np.ndarray:
    """Emit this subframe's transmissions and resolve every reception."""
    txl = np.flatnonzero(w.next_tx == t)
    if txl.size == 0:
        return txl
    n, k = w.n, int(w.ip[I_K])
    gen_i = t + 1 - w.age[txl]
    if post:
        w.stats[S_TX] += txl.size
    if w.ip[I_LOGCAP] > 0:
        rows = np.column_stack([np.full(txl.size, EV_TX), txl, np.full(txl.size, -1), gen_i,
                                np.full(txl.size, t), w.hold_sf[txl], w.hold_sc[txl],
                                np.full(txl.size, -1)]).astype(np.int64)
        _log_rows(w, rows)

    # all (tx, rx) pairs, tx-major then rx ascending
    U = np.repeat(txl, n)
    R = np.tile(np.arange(n), txl.size)
    keep = U != R
    U, R = U[keep], R[keep]
    inr = pair_d2(w, U, R, t) <= w.fp[F_RAW2]
    if post:
        w.stats[S_OOR] += int(np.count_nonzero(~inr))
    U, R = U[inr], R[inr]
    out = np.full(U.size, -1, dtype=np.int64)
    if not w.ip[I_ABSTRACT]:
        if w.ip[I_HD]:
            out[w.next_tx[R] == t] = HALF_DUPLEX
        und = out < 0
        if txl.size > 1 and np.any(und):
            coll = np.zeros(U.size, dtype=bool)
            raw2 = w.fp[F_RAW2]
            for wj in txl:
                ov = (U != wj) & (w.hold_sc[wj] < w.hold_sc[U] + k) & (w.hold_sc[U] < w.hold_sc[wj] + k)
                ov &= und
                if np.any(ov):
                    idx = np.flatnonzero(ov)
                    hit = pair_d2(w, np.full(idx.size, wj), R[idx], t) <= raw2
                    coll[idx[hit]] = True
            out[coll] = COLLISION
    und = out < 0
    if np.any(und):
        draws = rng.uniform(w.k_phy[U[und], R[und]], np.full(int(und.sum()), t))
        out[und] = np.where(draws < w.fp[F_PHI], OK, PHY_LOSS)
    if post:
        w.stats[S_OK] += int(np.count_nonzero(out == OK))
        w.stats[S_COLL] += int(np.count_nonzero(out == COLLISION))
        w.stats[S_PHY] += int(np.count_nonzero(out == PHY_LOSS))
        w.stats[S_HD] += int(np.count_nonzero(out == HALF_DUPLEX))

    gen = (t + 1 - w.age[U]).astype(np.float64)
    if w.ip[I_LOGCAP] > 0 and U.size:
        rows = np.column_stack([np.full(U.size, EV_RX), U, R, gen.astype(np.int64),
                                np.full(U.size, t + 1), w.hold_sf[U], w.hold_sc[U], out]).astype(np.int64)
        _log_rows(w, rows)

    rx = float(t + 1)
    ok = out == OK
    if np.any(ok):
        uo, ro, go = U[ok], R[ok], gen[ok]
        pend = w.pend[uo, ro]
        reset = np.where(pend, rx - w.pend_gen[uo, ro], rx - go)
        w.pend[uo, ro] = False
        had = w.last_rx[uo, ro] >= 0.0
        if np.any(had):
            _integrate(w, uo[had], ro[had], rx)
        w.last_rx[uo, ro] = rx
        w.last_reset[uo, ro] = reset
        if rx >= w.ip[I_WARM]:
            w.nrx[uo, ro] += 1
            bins = np.minimum(np.ceil(reset).astype(np.int64), HIST_BINS)
            np.add.at(w.reset_hist, bins, 1)
            for v in reset:  # sequential sum keeps float order identical
                w.reset_sum[0] += v
            w.stats[S_RESET_N] += reset.size
            w.reset_le += (reset[:, None] <= w.thr[None, :]).sum(axis=0)
            cap = int(w.ip[I_RLOGCAP])
            if cap > 0:
                n0 = int(w.stats[S_RLOG_N])
                take = max(0, min(reset.size, cap - n0))
                if take:
                    w.rlog[n0:n0 + take] = np.column_stack(
                        [uo[:take], ro[:take], np.full(take, t + 1), reset[:take].astype(np.int64)])
                    w.stats[S_RLOG_N] += take
                w.stats[S_RLOG_DROP] += reset.size - take
    fail = ~ok
    if np.any(fail):
        uf, rf, gf = U[fail], R[fail], gen[fail]
        fresh = ~w.pend[uf, rf]
        w.pend_gen[uf[fresh], rf[fresh]] = gf[fresh]
        w.pend[uf, rf] = True
    return txl


def countdown(w: World, txl: np.ndarray, t: int, post: bool) -> None:
    g = int(w.ip[I_G])
    w.since_dec[txl] += 1
    w.rc[txl] -= 1
    alive = txl[w.rc[txl] > 0]
    w.next_tx[alive] = t + g
    exp = txl[w.rc[txl] <= 0]
    if exp.size == 0:
        return
    if post:
        w.stats[S_KEEPDEC] += exp.size
        c = np.minimum(w.since_dec[exp], w.rc_hist.shape[0] - 1)
        np.add.at(w.rc_hist, c, 1)
    w.since_dec[exp] = 0
    draws = rng.uniform(w.k_keep[exp], w.ctr_keep[exp])
    w.ctr_keep[exp] += 1
    kept = exp[draws < w.fp[F_P_KEEP]]
    gone = exp[~(draws < w.fp[F_P_KEEP])]
    if post:
        w.stats[S_KEEP] += kept.size
    if kept.size:
        w.rc[kept] = draw_rc(w, kept)
        w.next_tx[kept] = t + g
    for u in gone:
        release(w, int(u))
    w.next_tx[gone] = NEVER
    w.idle_since[gone] = t + 1
    w.anchor[gone] = t + 1


def idle_attempts(w: World, t: int, post: bool) -> None:
    idle = np.flatnonzero((w.next_tx == NEVER) & (w.idle_since <= t))
    if idle.size == 0:
        return
    if post:
        w.stats[S_ATTEMPT] += idle.size
    fire = idle[rng.uniform(w.k_idle[idle], np.full(idle.size, t)) < w.fp[F_P_IDLE]]
    if fire.size == 0:
        return
    if w.ip[I_EVE_MODE] and fire.size > 1:
        _probe_batch(w, fire, t, post)
        return
    for u in fire:
        u = int(u)
        pick = select(w, u, t)
        if pick is None:
            if post:
                w.stats[S_NOTFOUND] += 1
            continue
        commit(w, u, pick[0], pick[1], t, post)


def _probe_batch(w: World, fire: np.ndarray, t: int, post: bool) -> None:
    """Single-probe selection for many UEs at once.

    A probe rejected against the map at the start of the subframe stays
    rejected after earlier UEs commit (commits only add reservations), so only
    the accepted probes need a sequential re-check.
    """
    s1 = int(w.ip[I_S1])
    S = int(w.ip[I_G]) * s1
    idx = (rng.uniform(w.k_csr[fire], w.ctr_csr[fire]) * S).astype(np.int64)
    w.ctr_csr[fire] += 1
    sf, sc = idx // s1, idx % s1
    k = int(w.ip[I_K])
    eve_hit = np.zeros(fire.size, dtype=bool)
    for j in range(k):
        eve_hit |= w.eve_until[sf, sc + j] > t
    nf = 0
    for i in range(fire.size):
        u = int(fire[i])
        if eve_hit[i] or blocked(w, u, int(sf[i]), int(sc[i]), t):
            nf += 1
            continue
        commit(w, u, int(sf[i]), int(sc[i]), t, post)
    if post:
        w.stats[S_NOTFOUND] += nf


def sample_availability(w: World, t: int) -> None:
    g, m, k = int(w.ip[I_G]), int(w.ip[I_M]), int(w.ip[I_K])
    s1, n = int(w.ip[I_S1]), w.n
    S = g * s1
    eve = w.eve_until > t
    holding = np.flatnonzero(w.hold_sf >= 0)
    marks = np.zeros((n, g, m), dtype=bool)
    if holding.size:
        U = np.repeat(np.arange(n), holding.size)
        V = np.tile(holding, n)
        aud = (U == V) | (pair_d2(w, U, V, t) <= w.fp[F_SENSE2])
        U, V = U[aud], V[aud]
        for j in range(k):
            marks[U, w.hold_sf[V], w.hold_sc[V] + j] = True
    if k == 1:
        extra = (marks & ~eve[None]).reshape(n, -1).sum(axis=1)
        free = S - int(eve.sum()) - extra
    else:
        bad = marks | eve[None]
        win = np.zeros((n, g, s1), dtype=bool)
        for j in range(k):
            win |= bad[:, :, j:j + s1]
        free = (~win).reshape(n, -1).sum(axis=1)
    w.stats[S_AVAIL_FREE] += int(free.sum())
    w.stats[S_AVAIL_TOTAL] += S * n


def step(w: World, t: int) -> np.ndarray:
    """Advance one subframe; returns the indices of UEs that transmitted."""
    if t < 0:
        if w.ip[I_EVE_ON] and (t - w.ip[I_EVE_T0]) % w.ip[I_EVE_R] == 0:
            eve_step(w, t)
        return np.empty(0, dtype=np.int64)
    warm = int(w.ip[I_WARM])
    post = t >= warm
    txl = transmit(w, t, post)
    if txl.size:
        countdown(w, txl, t, post)
    if w.ip[I_EVE_ON] and (t - w.ip[I_EVE_T0]) % w.ip[I_EVE_R] == 0:
        eve_step(w, t)
    idle_attempts(w, t, post)
    if post and (t - warm) % int(w.ip[I_G]) == 0:
        sample_availability(w, t)
    return txl


def run_range(w: World, t_start: int, t_stop: int) -> int:
    for t in range(t_start, t_stop):
        step(w, t)
    return t_stop
