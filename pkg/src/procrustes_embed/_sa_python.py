"""Pure-Python Metropolis sweep, used when the compiled kernel is unavailable."""
import math

import numpy as np


def sa_sweep(frames, ptr, idx, weight, picks, props, uniforms, T):
    """Apply ``len(picks)`` Metropolis moves to ``frames`` in place.

    Move ``t`` proposes ``A_i -> A_i @ props[t]`` for ``i = picks[t]`` and
    accepts it when the change ``delta`` of the alignment objective is
    negative or ``uniforms[t] < exp(-delta / T)``. The objective change only
    involves the weighted neighbors ``idx[ptr[i]:ptr[i+1]]``:

        delta = W_i (|N|^2 - |A_i|^2) - 2 <N - A_i, sum_j w_ij A_j>

    Returns ``(accepted, summed delta of accepted moves)``.
    """
    accepted = 0
    acc_delta = 0.0
    for t in range(picks.shape[0]):
        i = picks[t]
        lo, hi = ptr[i], ptr[i + 1]
        w = weight[lo:hi]
        S = np.tensordot(w, frames[idx[lo:hi]], axes=1)
        Ai = frames[i]
        N = Ai @ props[t]
        delta = w.sum() * ((N * N).sum() - (Ai * Ai).sum()) - 2.0 * ((N - Ai) * S).sum()
        if delta < 0.0 or uniforms[t] < math.exp(-delta / T):
            frames[i] = N
            accepted += 1
            acc_delta += delta
    return accepted, acc_delta


def wolff_sweep(frames, ptr, idx, weight, movable, seeds, axes, uniforms, T):
    """Apply ``len(seeds)`` Wolff cluster reflections to ``frames`` in place.

    Cluster ``t`` grows from ``seeds[t]``. Every frame in it is reflected on
    the right by ``R = I - 2 u u'`` with ``u = axes[t]``, which leaves bonds
    inside the cluster unchanged. A bond to a movable neighbor ``j`` with

        dE = 4 w_ij (A_i u) . (A_j u) > 0

    joins ``j`` when the next uniform falls below ``1 - exp(-dE / T)``.
    Frozen neighbors (``movable[j] == 0``) never join; their bonds enter
    a final Metropolis test ``exp(-sum dE / T)``, drawn from the last
    uniform of row ``t``. Row ``t`` of ``uniforms`` needs ``nnz + 1`` entries.

    Returns ``(accepted clusters, total size of accepted clusters)``.
    """
    n = frames.shape[0]
    in_cluster = np.zeros(n, dtype=bool)
    accepted = 0
    size = 0
    last = uniforms.shape[1] - 1
    for t in range(seeds.shape[0]):
        u = axes[t]
        i0 = seeds[t]
        cluster = [i0]
        in_cluster[i0] = True
        stack = [i0]
        pos = 0
        frozen_dE = 0.0
        while stack:
            i = stack.pop()
            ai = frames[i] @ u
            for e in range(ptr[i], ptr[i + 1]):
                j = idx[e]
                if in_cluster[j]:
                    continue
                dE = 4.0 * weight[e] * float(ai @ (frames[j] @ u))
                if not movable[j]:
                    frozen_dE += dE
                    continue
                if dE > 0.0:
                    r = uniforms[t, pos]
                    pos += 1
                    if r < 1.0 - math.exp(-dE / T):
                        in_cluster[j] = True
                        cluster.append(j)
                        stack.append(j)
        ok = frozen_dE <= 0.0 or uniforms[t, last] < math.exp(-frozen_dE / T)
        if ok:
            members = np.array(cluster)
            F = frames[members]
            frames[members] = F - 2.0 * (F @ u)[:, :, None] * u[None, None, :]
            accepted += 1
            size += len(cluster)
        in_cluster[cluster] = False
    return accepted, size
