"""Compiled CART kernel shared by the forest, extra-trees and boosting models.

Trees are grown level by level. Every node draws its randomness from a
counter-based generator keyed on the tree seed and the node's root-to-node
path, so a tree grown with a smaller depth limit is exactly the truncation of
a deeper one. Exhaustive splits walk per-feature presorted row lists that are
kept as one contiguous segment per node and stably partitioned at each level.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True, inline="always")
def _next(state):
    state[0] = state[0] + GOLDEN
    return mix64(state[0])


@njit(cache=True, inline="always")
def _uniform_open(state):
    # strictly inside (0, 1)
    return (np.float64(_next(state) >> S11) + 0.5) * INV53


@njit(cache=True, inline="always")
def _below(state, n):
    return np.int64(_next(state) % np.uint64(n))


@njit(cache=True)
def child_key(key, side):
    return mix64(key ^ (GOLDEN * np.uint64(side + 1)))


@njit(cache=True, error_model="numpy")
def _node_score(stat, k, newton, n_out, reg_lambda):
    # Gini: sum_c w_c^2 / W ; Newton: G^2 / (H + lambda)
    if newton:
        return stat[k, 0] * stat[k, 0] / (stat[k, 1] + reg_lambda)
    w = 0.0
    s = 0.0
    for c in range(n_out):
        w += stat[k, c]
        s += stat[k, c] * stat[k, c]
    if w <= 0.0:
        return 0.0
    return s / w


@njit(cache=True, inline="always")
def _can_split(stat, nrows, nd, newton, n_out, min_split, min_leaf, min_child_weight):
    ok = nrows[nd] >= min_split and nrows[nd] >= 2 * min_leaf
    if newton:
        return ok and stat[nd, 1] >= 2.0 * min_child_weight
    distinct = 0
    for c in range(n_out):
        if stat[nd, c] > 0.0:
            distinct += 1
    return ok and distinct > 1


@njit(cache=True, inline="always")
def _midpoint(a, b):
    # a < b; fall back to a when the midpoint rounds onto b
    mid = 0.5 * (a + b)
    if mid >= b or mid < a:
        mid = a
    return mid


@njit(cache=True, nogil=True, error_model="numpy")
def build_tree(
    X, srow0, sval0, buf_row, buf_val, weight, y, n_classes, grad, hess, newton,
    max_depth, min_leaf, min_split, min_child_weight, reg_lambda, learning_rate,
    mtry, random_split, seed,
):
    n, p = X.shape
    n_out = 2 if newton else n_classes
    if mtry > p:
        mtry = p
    all_feats = mtry == p

    active = np.empty(n, dtype=np.int64)
    n_act = 0
    for r in range(n):
        if weight[r] > 0.0:
            active[n_act] = r
            n_act += 1

    cap = 2 * n_act + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    nrows = np.zeros(cap, dtype=np.int64)
    stat = np.zeros((cap, n_out))
    gain = np.zeros(cap)
    keys = np.zeros(cap, dtype=np.uint64)
    row_node = np.full(n, -1, dtype=np.int64)
    row_k = np.full(n, -1, dtype=np.int64)
    row_leaf = np.full(n, -1, dtype=np.int64)
    # per-row statistics: class index + weight, or gradient + hessian
    rs0 = np.zeros(n)
    rs1 = np.zeros(n)
    ycls = np.zeros(n, dtype=np.int64)
    for r in range(n):
        if newton:
            rs0[r] = grad[r]
            rs1[r] = hess[r]
        else:
            ycls[r] = y[r]
            rs0[r] = weight[r]

    keys[0] = mix64(np.uint64(seed) ^ GOLDEN)
    for t in range(n_act):
        r = active[t]
        row_node[r] = 0
        nrows[0] += 1
        if newton:
            stat[0, 0] += rs0[r]
            stat[0, 1] += rs1[r]
        else:
            stat[0, ycls[r]] += rs0[r]
    n_nodes = 1

    # presorted lists restricted to active rows, written into caller-owned
    # double buffers (reused across trees to avoid fresh page faults)
    srow = buf_row[0]
    sval = buf_val[0]
    srow2 = buf_row[1]
    sval2 = buf_val[1]
    if not random_split:
        for f in range(p):
            m = 0
            for t in range(srow0.shape[1]):
                r = srow0[f, t]
                if weight[r] > 0.0:
                    srow[f, m] = r
                    sval[f, m] = sval0[f, t]
                    m += 1
    seg_lo = np.zeros(cap, dtype=np.int64)
    is_open = np.zeros(cap, dtype=np.bool_)

    front = np.zeros(1, dtype=np.int64)
    perm = np.empty(p, dtype=np.int64)
    state = np.zeros(1, dtype=np.uint64)
    cum = np.zeros(n_out)

    while front.shape[0] > 0:
        nf = front.shape[0]
        # which frontier nodes may split
        fk = np.full(nf, -1, dtype=np.int64)
        nk = 0
        for i in range(nf):
            nd = front[i]
            ok = _can_split(stat, nrows, nd, newton, n_out, min_split, min_leaf, min_child_weight)
            if ok and max_depth >= 0 and depth[nd] >= max_depth:
                ok = False
            if ok:
                fk[i] = nk
                nk += 1
        splittable = np.empty(nk, dtype=np.int64)
        node_to_k_base = front[0]
        # frontier node ids are contiguous, so node -> k is a table lookup
        k_of = np.full(nf, -1, dtype=np.int64)
        for i in range(nf):
            if fk[i] >= 0:
                splittable[fk[i]] = front[i]
                k_of[front[i] - node_to_k_base] = fk[i]
        for t in range(n_act):
            r = active[t]
            row_k[r] = k_of[row_node[r] - node_to_k_base]

        # candidate features per node, ascending
        cand = np.empty((nk, mtry), dtype=np.int64)
        for k in range(nk):
            state[0] = keys[splittable[k]]
            for f in range(p):
                perm[f] = f
            if not all_feats:
                for j in range(mtry):
                    s = j + _below(state, p - j)
                    tmp = perm[j]
                    perm[j] = perm[s]
                    perm[s] = tmp
            sel = np.sort(perm[:mtry])
            for j in range(mtry):
                cand[k, j] = sel[j]

        tot = np.zeros((nk, n_out))
        for k in range(nk):
            for c in range(n_out):
                tot[k, c] = stat[splittable[k], c]
        parent = np.zeros(nk)
        for k in range(nk):
            parent[k] = _node_score(tot, k, newton, n_out, reg_lambda)
        best = np.full(nk, -np.inf)
        best_f = np.full(nk, -1, dtype=np.int64)
        best_t = np.zeros(nk)
        lbuf = np.zeros((1, n_out))
        rbuf = np.zeros((1, n_out))

        if random_split:
            lo = np.full((nk, mtry), np.inf)
            hi = np.full((nk, mtry), -np.inf)
            for t in range(n_act):
                r = active[t]
                k = row_k[r]
                if k < 0:
                    continue
                for j in range(mtry):
                    v = X[r, cand[k, j]]
                    if v < lo[k, j]:
                        lo[k, j] = v
                    if v > hi[k, j]:
                        hi[k, j] = v
            thr = np.zeros((nk, mtry))
            for k in range(nk):
                state[0] = keys[splittable[k]] ^ GOLDEN
                for j in range(mtry):
                    a = lo[k, j]
                    b = hi[k, j]
                    t_ = a + _uniform_open(state) * (b - a)
                    if not (t_ < b) or t_ < a:
                        t_ = a + 0.5 * (b - a)
                        if not (t_ < b):
                            t_ = a
                    thr[k, j] = t_
            acc = np.zeros((nk, mtry, n_out))
            accn = np.zeros((nk, mtry), dtype=np.int64)
            for t in range(n_act):
                r = active[t]
                k = row_k[r]
                if k < 0:
                    continue
                for j in range(mtry):
                    if X[r, cand[k, j]] <= thr[k, j]:
                        accn[k, j] += 1
                        if newton:
                            acc[k, j, 0] += rs0[r]
                            acc[k, j, 1] += rs1[r]
                        else:
                            acc[k, j, ycls[r]] += rs0[r]
            for k in range(nk):
                nd = splittable[k]
                for j in range(mtry):
                    if not (hi[k, j] > lo[k, j]):
                        continue
                    nl = accn[k, j]
                    if nl < min_leaf or nrows[nd] - nl < min_leaf:
                        continue
                    for c in range(n_out):
                        lbuf[0, c] = acc[k, j, c]
                        rbuf[0, c] = tot[k, c] - acc[k, j, c]
                    if newton and (lbuf[0, 1] < min_child_weight or rbuf[0, 1] < min_child_weight):
                        continue
                    sc = _node_score(lbuf, 0, newton, n_out, reg_lambda) + _node_score(rbuf, 0, newton, n_out, reg_lambda)
                    if sc > best[k]:
                        best[k] = sc
                        best_f[k] = cand[k, j]
                        best_t[k] = thr[k, j]
        else:
            for k in range(nk):
                nd = splittable[k]
                s0 = seg_lo[nd]
                s1 = seg_lo[nd] + nrows[nd]
                ntot = nrows[nd]
                bk = -np.inf
                bf = -1
                bt = 0.0
                for j in range(mtry):
                    f = cand[k, j]
                    nl = 0
                    last = -np.inf
                    if newton:
                        G = tot[k, 0]
                        H = tot[k, 1]
                        gl = 0.0
                        hl = 0.0
                        for t in range(s0, s1):
                            v = sval[f, t]
                            if v > last and nl >= min_leaf and ntot - nl >= min_leaf:
                                hr = H - hl
                                if hl >= min_child_weight and hr >= min_child_weight:
                                    gr = G - gl
                                    sc = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda)
                                    if sc > bk:
                                        bk = sc
                                        bf = f
                                        bt = _midpoint(last, v)
                            r = srow[f, t]
                            gl += rs0[r]
                            hl += rs1[r]
                            nl += 1
                            last = v
                    else:
                        W = 0.0
                        for c in range(n_out):
                            cum[c] = 0.0
                            W += tot[k, c]
                        wl = 0.0
                        for t in range(s0, s1):
                            v = sval[f, t]
                            if v > last and nl >= min_leaf and ntot - nl >= min_leaf:
                                sl = 0.0
                                sr = 0.0
                                for c in range(n_out):
                                    a = cum[c]
                                    b = tot[k, c] - a
                                    sl += a * a
                                    sr += b * b
                                sc = sl / wl + sr / (W - wl)
                                if sc > bk:
                                    bk = sc
                                    bf = f
                                    bt = _midpoint(last, v)
                            r = srow[f, t]
                            cum[ycls[r]] += rs0[r]
                            wl += rs0[r]
                            nl += 1
                            last = v
                best[k] = bk
                best_f[k] = bf
                best_t[k] = bt

        # accept splits, allocate children
        child_l = np.full(nk, -1, dtype=np.int64)
        n_children = 0
        for k in range(nk):
            if best_f[k] < 0:
                continue
            nd = splittable[k]
            if newton and not (best[k] - parent[k] > 1e-12):
                continue
            feature[nd] = best_f[k]
            threshold[nd] = best_t[k]
            left[nd] = n_nodes
            right[nd] = n_nodes + 1
            child_l[k] = n_nodes
            for side in range(2):
                c_ = n_nodes + side
                depth[c_] = depth[nd] + 1
                keys[c_] = child_key(keys[nd], side)
            n_nodes += 2
            n_children += 2

        # route rows
        for t in range(n_act):
            r = active[t]
            nd = row_node[r]
            k = row_k[r]
            if k < 0 or child_l[k] < 0:
                row_leaf[r] = nd
                row_node[r] = -1
                continue
            if X[r, feature[nd]] <= threshold[nd]:
                c_ = left[nd]
            else:
                c_ = right[nd]
            row_node[r] = c_
            nrows[c_] += 1
            if newton:
                stat[c_, 0] += rs0[r]
                stat[c_, 1] += rs1[r]
            else:
                stat[c_, ycls[r]] += rs0[r]

        # children that cannot split settle now, so their rows leave the lists a level early
        first = n_nodes - n_children
        for c_ in range(first, n_nodes):
            is_open[c_] = _can_split(stat, nrows, c_, newton, n_out, min_split, min_leaf, min_child_weight)
            if max_depth >= 0 and depth[c_] >= max_depth:
                is_open[c_] = False
        for t in range(n_act):
            r = active[t]
            c_ = row_node[r]
            if c_ >= 0 and not is_open[c_]:
                row_leaf[r] = c_
                row_node[r] = -1

        # impurity decrease (or Newton gain) for importances
        for k in range(nk):
            if child_l[k] < 0:
                continue
            nd = splittable[k]
            a = left[nd]
            b = right[nd]
            if newton:
                g = (stat[a, 0] * stat[a, 0] / (stat[a, 1] + reg_lambda)
                     + stat[b, 0] * stat[b, 0] / (stat[b, 1] + reg_lambda)
                     - stat[nd, 0] * stat[nd, 0] / (stat[nd, 1] + reg_lambda))
                gain[nd] = 0.5 * g
            else:
                W = 0.0
                Wa = 0.0
                Wb = 0.0
                sq = 0.0
                sqa = 0.0
                sqb = 0.0
                for c in range(n_out):
                    W += stat[nd, c]
                    Wa += stat[a, c]
                    Wb += stat[b, c]
                    sq += stat[nd, c] * stat[nd, c]
                    sqa += stat[a, c] * stat[a, c]
                    sqb += stat[b, c] * stat[b, c]
                # W * gini = W - sum(w_c^2) / W
                dec = (W - sq / W) - (Wa - sqa / Wa) - (Wb - sqb / Wb)
                gain[nd] = dec if dec > 0.0 else 0.0

        # compact active rows; stable-partition presorted lists into child segments
        m = 0
        for t in range(n_act):
            r = active[t]
            if row_node[r] >= 0:
                active[m] = r
                m += 1
        if not random_split and m > 0:
            pos = 0
            for c_ in range(first, n_nodes):
                if is_open[c_]:
                    seg_lo[c_] = pos
                    pos += nrows[c_]
            wptr = np.empty(n_children, dtype=np.int64)
            for f in range(p):
                for c_ in range(n_children):
                    wptr[c_] = seg_lo[first + c_]
                for t in range(n_act):
                    r = srow[f, t]
                    c_ = row_node[r]
                    if c_ >= 0:
                        q = wptr[c_ - first]
                        srow2[f, q] = r
                        sval2[f, q] = sval[f, t]
                        wptr[c_ - first] = q + 1
            srow, srow2 = srow2, srow
            sval, sval2 = sval2, sval
        n_act = m

        new_front = np.empty(n_children, dtype=np.int64)
        j = 0
        for k in range(nk):
            if child_l[k] >= 0:
                new_front[j] = child_l[k]
                new_front[j + 1] = child_l[k] + 1
                j += 2
        front = new_front

    value = np.zeros((n_nodes, n_classes if not newton else 1))
    node_weight = np.zeros(n_nodes)
    for nd in range(n_nodes):
        if newton:
            value[nd, 0] = -learning_rate * stat[nd, 0] / (stat[nd, 1] + reg_lambda)
            node_weight[nd] = stat[nd, 1]
        else:
            W = 0.0
            for c in range(n_out):
                W += stat[nd, c]
            node_weight[nd] = W
            if W > 0.0:
                for c in range(n_out):
                    value[nd, c] = stat[nd, c] / W
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), depth[:n_nodes].copy(), value, node_weight,
            nrows[:n_nodes].copy(), gain[:n_nodes].copy(), row_leaf)


@njit(cache=True, nogil=True)
def apply_trees(offsets, feature, threshold, left, right, X, depth_limit):
    """Node index (global, into the concatenated arrays) reached by each row in each tree."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            nd = 0
            d = 0
            while left[base + nd] >= 0 and (depth_limit < 0 or d < depth_limit):
                if X[i, feature[base + nd]] <= threshold[base + nd]:
                    nd = left[base + nd]
                else:
                    nd = right[base + nd]
                d += 1
            out[t, i] = base + nd
    return out
