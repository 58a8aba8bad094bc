"""Independent oracles shared by the unit and acceptance tests.

Everything here is deliberately naive: exhaustive enumeration and
textbook iteration, never the code paths under test.
"""

import itertools

import numpy as np


def brute_force_chain_paths(emissions, log_self, log_next):
    """All monotone chain paths: (best score, path count).

    A path starts in position 0, ends in position N-1, and advances by at
    most one per frame.  Score = sum of T emissions + T-1 transitions.
    """
    T, N = emissions.shape
    best = -np.inf
    count = 0
    # a path is fixed by its N-1 strictly increasing advance times in 1..T-1
    for advances in itertools.combinations(range(1, T), N - 1):
        count += 1
        pos = 0
        nxt = 0
        score = emissions[0, 0]
        for t in range(1, T):
            if nxt < len(advances) and t == advances[nxt]:
                score += log_next[pos]
                pos += 1
                nxt += 1
            else:
                score += log_self[pos]
            score += emissions[t, pos]
        if score > best:
            best = score
    return best, count


def brute_force_loop_decode(emissions, log_self, log_next, log_bigram,
                            log_start, log_end, lm_scale, penalty):
    """Exhaustive best path through a 3-state-per-phone loop graph.

    emissions: T x n_phones x 3.  Returns (best score, path count).
    """
    T, n_phones, _ = emissions.shape
    best = [-np.inf]
    count = [0]

    def step(t, p, s, score):
        if t == T - 1:
            if s == 2:
                count[0] += 1
                total = score + lm_scale * log_end[p]
                if total > best[0]:
                    best[0] = total
            elif s < 2:
                # path cannot finish outside a final state; still count nothing
                pass
            return
        # stay
        step(t + 1, p, s, score + log_self[p, s] + emissions[t + 1, p, s])
        # advance within the phone
        if s < 2:
            step(t + 1, p, s + 1, score + log_next[p, s] + emissions[t + 1, p, s + 1])
        else:
            for q in range(n_phones):
                step(t + 1, q, 0,
                     score + log_next[p, 2] + lm_scale * log_bigram[p, q]
                     + penalty + emissions[t + 1, q, 0])

    for p in range(n_phones):
        step(0, p, 0, lm_scale * log_start[p] + penalty + emissions[0, p, 0])
    return best[0], count[0]


def count_loop_paths(T, n_phones):
    """Path count of the loop graph without scoring (for sizing instances)."""
    emis = np.zeros((T, n_phones, 3))
    zeros = np.zeros((n_phones, 3))
    zl = np.zeros((n_phones, n_phones))
    zv = np.zeros(n_phones)
    _, count = brute_force_loop_decode(emis, zeros, zeros, zl, zv, zv, 0.0, 0.0)
    return count


def enumerate_edit_scripts(ref, hyp):
    """All monotone edit scripts as op strings: 'm' match, 's' sub, 'd' del, 'i' ins."""
    ref = tuple(ref)
    hyp = tuple(hyp)

    def walk(i, j):
        if i == len(ref) and j == len(hyp):
            yield ()
            return
        if i < len(ref) and j < len(hyp):
            op = "m" if ref[i] == hyp[j] else "s"
            for rest in walk(i + 1, j + 1):
                yield (op,) + rest
        if i < len(ref):
            for rest in walk(i + 1, j):
                yield ("d",) + rest
        if j < len(hyp):
            for rest in walk(i, j + 1):
                yield ("i",) + rest

    return list(walk(0, 0))


_OP_COST = {"m": 0, "s": 1, "d": 1, "i": 1}
# backtrace preference: diagonal (match or substitution) over deletion over
# insertion; encoded as ranks compared over the reversed script
_OP_RANK = {"m": 0, "s": 0, "d": 1, "i": 2}


def exhaustive_edit_ops(ref, hyp):
    """(matches, S, D, I) of the minimum-cost script, ties resolved exactly as
    a greedy end-to-start backtrace preferring substitution, deletion,
    insertion in that order."""
    scripts = enumerate_edit_scripts(ref, hyp)
    best = min(
        scripts,
        key=lambda ops: (sum(_OP_COST[o] for o in ops),
                         tuple(_OP_RANK[o] for o in reversed(ops))),
    )
    return (best.count("m"), best.count("s"), best.count("d"), best.count("i"))


def vectorized_edit_ops(refs, hyps):
    """(matches, S, D, I) arrays for P pairs of equal-length sequences.

    refs: (P, n) int array, hyps: (P, m).  Independent array-based
    implementation of minimum edit distance with the same documented
    tie rule (diagonal over deletion over insertion, applied walking
    back from the end); validated against raw script enumeration on
    short sequences and used to scale the oracle to large pair sets.
    """
    refs = np.asarray(refs, dtype=np.int8)
    hyps = np.asarray(hyps, dtype=np.int8)
    P, n = refs.shape
    m = hyps.shape[1]
    zeros = np.zeros(P, dtype=np.int64)
    if n == 0 or m == 0:
        # degenerate: everything is deletions or insertions
        return zeros, zeros.copy(), zeros + n, zeros + m
    F = np.empty((n + 1, m + 1, P), dtype=np.int8)
    F[0, :, :] = np.arange(m + 1, dtype=np.int8)[:, None]
    F[:, 0, :] = np.arange(n + 1, dtype=np.int8)[:, None]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = F[i - 1, j - 1] + (refs[:, i - 1] != hyps[:, j - 1])
            dele = F[i - 1, j] + 1
            ins = F[i, j - 1] + 1
            F[i, j] = np.minimum(sub, np.minimum(dele, ins))
    idx = np.arange(P)
    i = np.full(P, n, dtype=np.int64)
    j = np.full(P, m, dtype=np.int64)
    matches = np.zeros(P, dtype=np.int64)
    subs = np.zeros(P, dtype=np.int64)
    dels = np.zeros(P, dtype=np.int64)
    inss = np.zeros(P, dtype=np.int64)
    for _ in range(n + m):
        active = (i > 0) | (j > 0)
        if not np.any(active):
            break
        ci = np.maximum(i - 1, 0)
        cj = np.maximum(j - 1, 0)
        here = F[i, j, idx]
        eq = refs[idx, ci] == hyps[idx, cj]
        diag_ok = (i > 0) & (j > 0) & (F[ci, cj, idx] + (~eq) == here)
        del_ok = (i > 0) & (F[ci, j, idx] + 1 == here) & ~diag_ok
        ins_ok = (j > 0) & ~diag_ok & ~del_ok
        matches += active & diag_ok & eq
        subs += active & diag_ok & ~eq
        dels += active & del_ok
        inss += active & ins_ok
        step_i = active & (diag_ok | del_ok)
        step_j = active & (diag_ok | ins_ok)
        i = i - step_i
        j = j - step_j
    return matches, subs, dels, inss


def power_iteration_eigs(matrix, k, iters=500, seed=0):
    """Top-k eigenpairs of a symmetric PSD matrix by power iteration + deflation."""
    rng = np.random.default_rng(seed)
    A = np.asarray(matrix, dtype=np.float64).copy()
    n = A.shape[0]
    values = []
    vectors = []
    for _ in range(k):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = A @ v
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            v = w / norm
        lam = float(v @ A @ v)
        values.append(lam)
        vectors.append(v.copy())
        A = A - lam * np.outer(v, v)
    return np.array(values), np.stack(vectors, axis=1)


def frame_truth_labels(spans, n_frames, shift=160, frame_len=400):
    """Ground-truth phone per frame: the span containing the frame center."""
    labels = []
    for t in range(n_frames):
        center = t * shift + frame_len // 2
        hit = spans[-1][0]
        for phone, a, b in spans:
            if a <= center < b:
                hit = phone
                break
        labels.append(hit)
    return labels
