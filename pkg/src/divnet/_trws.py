"""Flat-array kernels for sequential tree-reweighted message passing.

The solver state is a set of numpy arrays (label offsets, pooled cost
matrices, directed messages, incidence lists) so the sweep kernels can be
JIT-compiled with numba; without numba the same functions run as plain
Python, which is slow but identical.

Message/bound scheme, for nodes processed in index order with edges always
stored as (u, v), u < v:

* aggregate  th_i = unary_i + sum of incoming messages (both directions)
* propagate  M_{i->j}(xj) = min_x [ gamma_i*th_i(x) - M_{j->i}(x) + cost(x, xj) ]
  with gamma_i = 1 / max(#forward, #backward) neighbors; every new message
  is normalized to min 0.
* the lower bound accumulated during a backward sweep is
  sum_i start_i * min(gamma_i * th_i) + sum of normalization constants of
  the backward messages, where start_i = max(#forward - #backward, 0) (or 1
  for isolated nodes). This equals the sum over a monotonic-chain
  decomposition of each chain's exact minimum under the current potential
  split, so it is a valid bound for any message state; the sequential
  schedule additionally never decreases it.

The parallel schedule processes nodes grouped by dependency level (all
backward neighbors in strictly earlier levels); nodes within a level touch
disjoint state, so results are bit-identical to the sequential sweep.
"""

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


INF = np.inf


@njit(cache=True, nogil=True, inline="always")
def _cost(pool, poff, pcols, emid, eswap, map_flat, noff, eu, ev, m, xu, xv):
    pid = emid[m]
    r = map_flat[noff[eu[m]] + xu]
    c = map_flat[noff[ev[m]] + xv]
    if eswap[m]:
        return pool[poff[pid] + c * pcols[pid] + r]
    return pool[poff[pid] + r * pcols[pid] + c]


@njit(cache=True, nogil=True)
def _node_forward(
    i, nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
    pool, poff, pcols, emid, eswap, map_flat,
    fof, flist, bof, blist, gamma, labels, extract,
):
    Li = nlab[i]
    base = noff[i]
    th = np.empty(Li)
    for x in range(Li):
        th[x] = unary[base + x]
    for t in range(bof[i], bof[i + 1]):
        mo = moff_f[blist[t]]
        for x in range(Li):
            th[x] += msg[mo + x]
    for t in range(fof[i], fof[i + 1]):
        mo = moff_b[flist[t]]
        for x in range(Li):
            th[x] += msg[mo + x]

    if extract:
        # condition on already-labeled lower neighbors, min-marginals elsewhere
        bestx = 0
        bestv = INF
        for x in range(Li):
            v = unary[base + x]
            for t in range(fof[i], fof[i + 1]):
                v += msg[moff_b[flist[t]] + x]
            for t in range(bof[i], bof[i + 1]):
                m = blist[t]
                v += _cost(pool, poff, pcols, emid, eswap, map_flat, noff, eu, ev,
                           m, labels[eu[m]], x)
            if v < bestv:
                bestv = v
                bestx = x
        labels[i] = bestx

    g = gamma[i]
    for t in range(fof[i], fof[i + 1]):
        m = flist[t]
        j = ev[m]
        Lj = nlab[j]
        mof = moff_f[m]
        mob = moff_b[m]
        dmin = INF
        for xj in range(Lj):
            best = INF
            for x in range(Li):
                v = g * th[x] - msg[mob + x] + _cost(
                    pool, poff, pcols, emid, eswap, map_flat, noff, eu, ev, m, x, xj
                )
                if v < best:
                    best = v
            msg[mof + xj] = best
            if best < dmin:
                dmin = best
        for xj in range(Lj):
            msg[mof + xj] -= dmin


@njit(cache=True, nogil=True)
def _node_backward(
    i, nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
    pool, poff, pcols, emid, eswap, map_flat,
    fof, flist, bof, blist, gamma, nstart,
):
    Li = nlab[i]
    base = noff[i]
    th = np.empty(Li)
    for x in range(Li):
        th[x] = unary[base + x]
    for t in range(bof[i], bof[i + 1]):
        mo = moff_f[blist[t]]
        for x in range(Li):
            th[x] += msg[mo + x]
    for t in range(fof[i], fof[i + 1]):
        mo = moff_b[flist[t]]
        for x in range(Li):
            th[x] += msg[mo + x]

    g = gamma[i]
    mn = INF
    for x in range(Li):
        v = g * th[x]
        if v < mn:
            mn = v
    contrib = nstart[i] * mn

    for t in range(bof[i], bof[i + 1]):
        m = blist[t]
        u = eu[m]
        Lu = nlab[u]
        mof = moff_f[m]
        mob = moff_b[m]
        dmin = INF
        for xu in range(Lu):
            best = INF
            for x in range(Li):
                v = g * th[x] - msg[mof + x] + _cost(
                    pool, poff, pcols, emid, eswap, map_flat, noff, eu, ev, m, xu, x
                )
                if v < best:
                    best = v
            msg[mob + xu] = best
            if best < dmin:
                dmin = best
        for xu in range(Lu):
            msg[mob + xu] -= dmin
        contrib += dmin
    return contrib


@njit(cache=True, nogil=True)
def sweep_sequential(
    nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
    pool, poff, pcols, emid, eswap, map_flat,
    fof, flist, bof, blist, gamma, nstart, labels, lb_contrib,
):
    n = nlab.shape[0]
    for i in range(n):
        _node_forward(
            i, nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
            pool, poff, pcols, emid, eswap, map_flat,
            fof, flist, bof, blist, gamma, labels, True,
        )
    for i in range(n - 1, -1, -1):
        lb_contrib[i] = _node_backward(
            i, nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
            pool, poff, pcols, emid, eswap, map_flat,
            fof, flist, bof, blist, gamma, nstart,
        )


@njit(cache=True, nogil=True, parallel=True)
def sweep_parallel(
    nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
    pool, poff, pcols, emid, eswap, map_flat,
    fof, flist, bof, blist, gamma, nstart, labels, lb_contrib,
    order_f, loff_f, order_b, loff_b,
):
    for lev in range(loff_f.shape[0] - 1):
        for t in prange(loff_f[lev], loff_f[lev + 1]):
            _node_forward(
                order_f[t], nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
                pool, poff, pcols, emid, eswap, map_flat,
                fof, flist, bof, blist, gamma, labels, True,
            )
    for lev in range(loff_b.shape[0] - 1):
        for t in prange(loff_b[lev], loff_b[lev + 1]):
            i = order_b[t]
            lb_contrib[i] = _node_backward(
                i, nlab, noff, unary, eu, ev, moff_f, moff_b, msg,
                pool, poff, pcols, emid, eswap, map_flat,
                fof, flist, bof, blist, gamma, nstart,
            )


@njit(cache=True, nogil=True)
def labeling_energy(
    labels, nlab, noff, unary, eu, ev,
    pool, poff, pcols, emid, eswap, map_flat,
):
    total = 0.0
    for i in range(nlab.shape[0]):
        total += unary[noff[i] + labels[i]]
    for m in range(eu.shape[0]):
        total += _cost(
            pool, poff, pcols, emid, eswap, map_flat, noff, eu, ev,
            m, labels[eu[m]], labels[ev[m]],
        )
    return total


@njit(cache=True, nogil=True)
def dependency_levels(n, eu, ev, reverse):
    """Level of each node: 1 + max level over processed-earlier neighbors.

    Edges are (u, v) with u < v; in a forward sweep the earlier neighbor is
    u, in a backward sweep it is v (``reverse=True``). Callers must pass
    edges sorted by ev ascending (forward) or eu descending (backward) so
    the earlier endpoint's level is final when an edge is visited.
    """
    lev = np.zeros(n, dtype=np.int64)
    for m in range(eu.shape[0]):
        a = eu[m]
        b = ev[m]
        if reverse:
            if lev[b] + 1 > lev[a]:
                lev[a] = lev[b] + 1
        else:
            if lev[a] + 1 > lev[b]:
                lev[b] = lev[a] + 1
    return lev


def set_threads(threads: int) -> None:
    if HAVE_NUMBA:
        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
