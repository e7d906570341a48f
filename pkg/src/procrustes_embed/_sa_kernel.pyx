# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Metropolis sweep over a frame field.

Mirrors ``_sa_python.sa_sweep`` exactly; see that module for the contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport malloc, free

cnp.import_array()


def sa_sweep(double[:, :, ::1] frames,
             const cnp.intp_t[::1] ptr,
             const cnp.intp_t[::1] idx,
             const double[::1] weight,
             const cnp.intp_t[::1] picks,
             const double[:, :, ::1] props,
             const double[::1] uniforms,
             double T):
    cdef Py_ssize_t q = frames.shape[1]
    cdef Py_ssize_t d = frames.shape[2]
    cdef Py_ssize_t m = picks.shape[0]
    cdef Py_ssize_t t, i, j, e, a, b, c
    cdef double wsum, w, delta, acc_delta = 0.0, old2, new2, cross, v
    cdef long accepted = 0
    cdef double *S = <double *> malloc(q * d * sizeof(double))
    cdef double *N = <double *> malloc(q * d * sizeof(double))
    if S == NULL or N == NULL:
        free(S)
        free(N)
        raise MemoryError()
    try:
        for t in range(m):
            i = picks[t]
            # S = sum_j w_ij A_j
            for a in range(q * d):
                S[a] = 0.0
            wsum = 0.0
            for e in range(ptr[i], ptr[i + 1]):
                j = idx[e]
                w = weight[e]
                wsum += w
                for a in range(q):
                    for b in range(d):
                        S[a * d + b] += w * frames[j, a, b]
            # N = A_i O
            old2 = 0.0
            new2 = 0.0
            cross = 0.0
            for a in range(q):
                for b in range(d):
                    v = 0.0
                    for c in range(d):
                        v += frames[i, a, c] * props[t, c, b]
                    N[a * d + b] = v
                    new2 += v * v
                    old2 += frames[i, a, b] * frames[i, a, b]
                    cross += (v - frames[i, a, b]) * S[a * d + b]
            delta = wsum * (new2 - old2) - 2.0 * cross
            if delta < 0.0 or uniforms[t] < exp(-delta / T):
                for a in range(q):
                    for b in range(d):
                        frames[i, a, b] = N[a * d + b]
                accepted += 1
                acc_delta += delta
    finally:
        free(S)
        free(N)
    return accepted, acc_delta



def wolff_sweep(double[:, :, ::1] frames,
                const cnp.intp_t[::1] ptr,
                const cnp.intp_t[::1] idx,
                const double[::1] weight,
                const unsigned char[::1] movable,
                const cnp.intp_t[::1] seeds,
                const double[:, ::1] axes,
                const double[:, ::1] uniforms,
                double T):
    cdef Py_ssize_t n = frames.shape[0]
    cdef Py_ssize_t q = frames.shape[1]
    cdef Py_ssize_t d = frames.shape[2]
    cdef Py_ssize_t m = seeds.shape[0]
    cdef Py_ssize_t last = uniforms.shape[1] - 1
    cdef Py_ssize_t t, i, j, e, a, b, top, csize, pos, c
    cdef double dE, frozen_dE, dot, s
    cdef long accepted = 0, size = 0
    cdef unsigned char *in_cluster = <unsigned char *> malloc(n * sizeof(unsigned char))
    cdef Py_ssize_t *cluster = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t *stack = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    cdef double *ai = <double *> malloc(q * sizeof(double))
    if in_cluster == NULL or cluster == NULL or stack == NULL or ai == NULL:
        free(in_cluster)
        free(cluster)
        free(stack)
        free(ai)
        raise MemoryError()
    try:
        for i in range(n):
            in_cluster[i] = 0
        for t in range(m):
            cluster[0] = seeds[t]
            stack[0] = seeds[t]
            in_cluster[seeds[t]] = 1
            csize = 1
            top = 1
            pos = 0
            frozen_dE = 0.0
            while top > 0:
                top -= 1
                i = stack[top]
                for a in range(q):
                    s = 0.0
                    for b in range(d):
                        s += frames[i, a, b] * axes[t, b]
                    ai[a] = s
                for e in range(ptr[i], ptr[i + 1]):
                    j = idx[e]
                    if in_cluster[j]:
                        continue
                    dot = 0.0
                    for a in range(q):
                        s = 0.0
                        for b in range(d):
                            s += frames[j, a, b] * axes[t, b]
                        dot += ai[a] * s
                    dE = 4.0 * weight[e] * dot
                    if not movable[j]:
                        frozen_dE += dE
                        continue
                    if dE > 0.0:
                        if uniforms[t, pos] < 1.0 - exp(-dE / T):
                            in_cluster[j] = 1
                            cluster[csize] = j
                            csize += 1
                            stack[top] = j
                            top += 1
                        pos += 1
            if frozen_dE <= 0.0 or uniforms[t, last] < exp(-frozen_dE / T):
                for c in range(csize):
                    i = cluster[c]
                    for a in range(q):
                        s = 0.0
                        for b in range(d):
                            s += frames[i, a, b] * axes[t, b]
                        for b in range(d):
                            frames[i, a, b] -= 2.0 * s * axes[t, b]
                accepted += 1
                size += csize
            for c in range(csize):
                in_cluster[cluster[c]] = 0
    finally:
        free(in_cluster)
        free(cluster)
        free(stack)
        free(ai)
    return accepted, size
