"""Compiled step loop.

One call advances the whole population by one step: slates, synchronous
opinion updates, content generation, then rewiring. The routines mirror the
pure-Python path (core reference engine + recommenders module) decision for
decision and draw for draw; tests/test_engine_equivalence.py holds the two
bit-identical. Content generation runs before the rewiring pass because both
read the time-t followee lists and rewiring mutates them; with per-purpose
substreams the order of the passes cannot change any draw.

Array conventions: post buffers arrive as (W, n) matrices, one row per
delivery step (oldest first, newest row = the current delivery), columns
indexed by carrier. Flattened row-major order is the canonical "pool order"
used for tie-breaking.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit

from .rng import (
    PURPOSE_POST,
    PURPOSE_RECOMMEND,
    PURPOSE_REWIRE,
    stream_next,
    stream_state,
)

STRATEGY_CODES = {"random": 0, "structure": 1, "opinion": 2}

_REC = np.uint64(PURPOSE_RECOMMEND)
_REW = np.uint64(PURPOSE_REWIRE)
_PST = np.uint64(PURPOSE_POST)


@njit(cache=True)
def _idx_below(state, m):
    state, u = stream_next(state)
    j = int(u * m)
    if j >= m:
        j = m - 1
    return state, j


@njit(cache=True)
def _slates_random(t, n, adj, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt):
    w_last = buf_origin.shape[0] - 1
    elig = np.empty(n, np.int32)
    for i in range(n):
        if w_last < 0:
            rec_cnt[i] = 0
            continue
        cnt = 0
        for j in range(n):
            o = buf_origin[w_last, j]
            if o != i and not adj[i, o]:
                elig[cnt] = j
                cnt += 1
        if cnt <= k_r:
            for k in range(cnt):
                rec_row[i, k] = w_last
                rec_car[i, k] = elig[k]
            rec_cnt[i] = cnt
        else:
            state = stream_state(seed, _REC, np.uint64(t), np.uint64(i))
            for k in range(k_r):
                state, j = _idx_below(state, cnt - k)
                j += k
                tmp = elig[k]
                elig[k] = elig[j]
                elig[j] = tmp
                rec_row[i, k] = w_last
                rec_car[i, k] = elig[k]
            rec_cnt[i] = k_r


@njit(cache=True)
def _slates_opinion(t, n, x, adj, buf_op, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt):
    w = buf_op.shape[0]
    pool = w * n
    if pool == 0:
        for i in range(n):
            rec_cnt[i] = 0
        return
    flat_tau = buf_op.ravel()
    flat_origin = buf_origin.ravel()
    order = np.argsort(flat_tau)
    sorted_tau = flat_tau[order]

    cand = np.empty(pool, np.int64)      # original pool indices, eligible only
    cand_d = np.empty(pool, np.float64)
    ties = np.empty(pool, np.int64)

    for i in range(n):
        xi = x[i]
        pos = np.searchsorted(sorted_tau, xi)
        lo = pos - 1
        hi = pos
        cnt = 0
        # nearest-first expansion over the sorted pool, skipping ineligible
        while cnt < k_r and (lo >= 0 or hi < pool):
            take_lo = False
            if lo >= 0 and hi < pool:
                take_lo = (xi - sorted_tau[lo]) <= (sorted_tau[hi] - xi)
            elif lo >= 0:
                take_lo = True
            if take_lo:
                d = xi - sorted_tau[lo]
                idx = order[lo]
                lo -= 1
            else:
                d = sorted_tau[hi] - xi
                idx = order[hi]
                hi += 1
            o = flat_origin[idx]
            if o != i and not adj[i, o]:
                cand[cnt] = idx
                cand_d[cnt] = d
                cnt += 1
        if cnt < k_r:
            # fewer eligible posts than slots: whole pool, in pool order
            sel = np.sort(cand[:cnt])
            for k in range(cnt):
                rec_row[i, k] = np.int32(sel[k] // n)
                rec_car[i, k] = np.int32(sel[k] % n)
            rec_cnt[i] = cnt
            continue
        d_star = cand_d[k_r - 1]
        n_strict = 0
        n_ties = 0
        for k in range(k_r):
            if cand_d[k] < d_star:
                n_strict += 1
            else:
                ties[n_ties] = cand[k]
                n_ties += 1
        # gather every remaining post at exactly the threshold distance
        while lo >= 0 and (xi - sorted_tau[lo]) == d_star:
            idx = order[lo]
            o = flat_origin[idx]
            if o != i and not adj[i, o]:
                ties[n_ties] = idx
                n_ties += 1
            lo -= 1
        while hi < pool and (sorted_tau[hi] - xi) == d_star:
            idx = order[hi]
            o = flat_origin[idx]
            if o != i and not adj[i, o]:
                ties[n_ties] = idx
                n_ties += 1
            hi += 1
        strict = np.sort(cand[:n_strict])
        tie_sorted = np.sort(ties[:n_ties])
        need = k_r - n_strict
        state = stream_state(seed, _REC, np.uint64(t), np.uint64(i))
        for k in range(need):
            state, j = _idx_below(state, n_ties - k)
            j += k
            tmp = tie_sorted[k]
            tie_sorted[k] = tie_sorted[j]
            tie_sorted[j] = tmp
        for k in range(n_strict):
            rec_row[i, k] = np.int32(strict[k] // n)
            rec_car[i, k] = np.int32(strict[k] % n)
        for k in range(need):
            rec_row[i, n_strict + k] = np.int32(tie_sorted[k] // n)
            rec_car[i, n_strict + k] = np.int32(tie_sorted[k] % n)
        rec_cnt[i] = k_r


@njit(cache=True)
def _slates_structure(t, n, adj, common, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt):
    w = buf_origin.shape[0]
    pool = w * n
    if pool == 0:
        for i in range(n):
            rec_cnt[i] = 0
        return
    # per-row index of carriers grouped by origin author, carriers ascending
    ob_start = np.zeros((w, n + 1), np.int32)
    ob_car = np.empty((w, n), np.int32)
    for row in range(w):
        for j in range(n):
            ob_start[row, buf_origin[row, j] + 1] += 1
        for o in range(n):
            ob_start[row, o + 1] += ob_start[row, o]
        fill = ob_start[row].copy()
        for j in range(n):
            o = buf_origin[row, j]
            ob_car[row, fill[o]] = j
            fill[o] += 1

    bucket = np.empty(n, np.int32)
    bucket_start = np.zeros(n + 2, np.int64)
    group = np.empty(n, np.int32)

    for i in range(n):
        smax = 0
        for c in range(n):
            if c != i and not adj[i, c] and common[i, c] > smax:
                smax = common[i, c]
        bucket_start[: smax + 2] = 0
        for c in range(n):
            if c != i and not adj[i, c]:
                bucket_start[common[i, c] + 1] += 1
        for s in range(smax + 1):
            bucket_start[s + 1] += bucket_start[s]
        fill = bucket_start[: smax + 2].copy()
        for c in range(n):
            if c != i and not adj[i, c]:
                s = common[i, c]
                bucket[fill[s]] = c
                fill[s] += 1

        state = stream_state(seed, _REC, np.uint64(t), np.uint64(i))
        filled = 0
        for s in range(smax, -1, -1):
            g0 = bucket_start[s]
            g1 = bucket_start[s + 1]
            ln = int(g1 - g0)
            if ln == 0:
                continue
            for k in range(ln):
                group[k] = bucket[g0 + k]
            while ln > 0 and filled < k_r:
                state, pick = _idx_below(state, ln)
                c = group[pick]
                group[pick] = group[ln - 1]
                ln -= 1
                # newest delivery first, carriers ascending within a delivery
                for row in range(w - 1, -1, -1):
                    for pos in range(ob_start[row, c], ob_start[row, c + 1]):
                        rec_row[i, filled] = row
                        rec_car[i, filled] = ob_car[row, pos]
                        filled += 1
                        if filled == k_r:
                            break
                    if filled == k_r:
                        break
            if filled == k_r:
                break
        rec_cnt[i] = filled


@njit(cache=True)
def step_kernel(
    t,
    x,
    offsets,
    targets,
    adj,
    common,
    maintain_common,
    buf_op,
    buf_origin,
    buf_created,
    strategy,
    k_r,
    k_h,
    eps,
    alpha,
    q,
    p,
    seed,
):
    n = x.shape[0]
    w = buf_op.shape[0]
    w_last = w - 1

    rec_row = np.empty((n, k_r), np.int32)
    rec_car = np.empty((n, k_r), np.int32)
    rec_cnt = np.zeros(n, np.int32)
    if strategy == 0:
        _slates_random(t, n, adj, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt)
    elif strategy == 1:
        _slates_structure(t, n, adj, common, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt)
    else:
        _slates_opinion(t, n, x, adj, buf_op, buf_origin, k_r, seed, rec_row, rec_car, rec_cnt)

    # --- synchronous opinion updates (and followee-force recording) ---
    x_new = np.empty(n)
    fod = np.full(n, np.nan)
    conc_feed = np.zeros(n, np.int32)
    conc_rec = np.zeros(n, np.int32)
    for i in range(n):
        xi = x[i]
        total = 0.0
        feed_total = 0.0
        cnt = 0
        feed_cnt = 0
        if w_last >= 0:
            for e in range(offsets[i], offsets[i + 1]):
                tau = buf_op[w_last, targets[e]]
                if abs(tau - xi) < eps:
                    total += tau - xi
                    feed_total += tau - xi
                    cnt += 1
                    feed_cnt += 1
        for r in range(rec_cnt[i]):
            tau = buf_op[rec_row[i, r], rec_car[i, r]]
            if abs(tau - xi) < eps:
                total += tau - xi
                cnt += 1
        if cnt > 0:
            v = xi + alpha * (total / cnt)
            if v > 1.0:
                v = 1.0
            elif v < -1.0:
                v = -1.0
            x_new[i] = v
        else:
            x_new[i] = xi
        if feed_cnt > 0:
            fod[i] = feed_total / feed_cnt
        conc_feed[i] = feed_cnt
        conc_rec[i] = cnt - feed_cnt

    # --- content generation (reads time-t followee lists: before rewiring) ---
    nb_op = np.empty(n)
    nb_origin = np.empty(n, np.int32)
    nb_created = np.empty(n, np.int32)
    nb_isrep = np.zeros(n, np.bool_)
    repost_count = 0
    for i in range(n):
        state = stream_state(seed, _PST, np.uint64(t), np.uint64(i))
        state, u = stream_next(state)
        pool = conc_feed[i] + conc_rec[i]
        done = False
        if u < p and pool > 0:
            state, idx = _idx_below(state, pool)
            xi = x[i]
            row = -1
            car = -1
            if idx < conc_feed[i]:
                k = -1
                for e in range(offsets[i], offsets[i + 1]):
                    j = targets[e]
                    if abs(buf_op[w_last, j] - xi) < eps:
                        k += 1
                        if k == idx:
                            row = w_last
                            car = j
                            break
            else:
                want = idx - conc_feed[i]
                k = -1
                for r in range(rec_cnt[i]):
                    if abs(buf_op[rec_row[i, r], rec_car[i, r]] - xi) < eps:
                        k += 1
                        if k == want:
                            row = rec_row[i, r]
                            car = rec_car[i, r]
                            break
            nb_op[i] = buf_op[row, car]
            nb_origin[i] = buf_origin[row, car]
            nb_created[i] = buf_created[row, car]
            nb_isrep[i] = True
            repost_count += 1
            done = True
        if not done:
            nb_op[i] = x_new[i]
            nb_origin[i] = i
            nb_created[i] = np.int32(t)
            nb_isrep[i] = False

    # --- rewiring (one-for-one swaps; mutates targets/adj/common in place) ---
    ev = np.empty((n, 3), np.int32)
    ev_count = 0
    disc = np.empty(n, np.int32)
    auth = np.empty(k_r, np.int32)
    elig = np.empty(k_r, np.int32)
    for i in range(n):
        state = stream_state(seed, _REW, np.uint64(t), np.uint64(i))
        state, u = stream_next(state)
        if u >= q:
            continue
        if w_last < 0:
            continue
        xi = x[i]
        dcnt = 0
        for e in range(offsets[i], offsets[i + 1]):
            j = targets[e]
            if not (abs(buf_op[w_last, j] - xi) < eps):
                disc[dcnt] = j
                dcnt += 1
        if dcnt == 0:
            continue
        acnt = 0
        for r in range(rec_cnt[i]):
            tau = buf_op[rec_row[i, r], rec_car[i, r]]
            if abs(tau - xi) < eps:
                a = buf_origin[rec_row[i, r], rec_car[i, r]]
                seen = False
                for k in range(acnt):
                    if auth[k] == a:
                        seen = True
                        break
                if not seen:
                    auth[acnt] = a
                    acnt += 1
        ecnt = 0
        for k in range(acnt):
            a = auth[k]
            if a != i and not adj[i, a]:
                elig[ecnt] = a
                ecnt += 1
        if ecnt == 0:
            continue
        state, du = _idx_below(state, dcnt)
        unfollowed = disc[du]
        state, fu = _idx_below(state, ecnt)
        followed = elig[fu]
        for e in range(offsets[i], offsets[i + 1]):
            if targets[e] == unfollowed:
                targets[e] = followed
                break
        adj[i, unfollowed] = False
        adj[i, followed] = True
        if maintain_common:
            for c in range(n):
                if c == i:
                    continue
                delta = np.int32(0)
                if adj[c, followed]:
                    delta += np.int32(1)
                if adj[c, unfollowed]:
                    delta -= np.int32(1)
                if delta != 0:
                    common[i, c] += delta
                    common[c, i] += delta
        ev[ev_count, 0] = i
        ev[ev_count, 1] = unfollowed
        ev[ev_count, 2] = followed
        ev_count += 1

    return (
        x_new,
        fod,
        ev[:ev_count].copy(),
        nb_op,
        nb_origin,
        nb_created,
        nb_isrep,
        repost_count,
    )
