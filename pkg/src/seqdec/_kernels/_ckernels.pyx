# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring ``_pykernels`` operation for operation."""
from libc.math cimport INFINITY, isinf, fabs

cdef int OPTIMAL = 0
cdef int UNBOUNDED = 1
cdef int ITERATION_LIMIT = 2


def simplex_iterate(double[:, ::1] T, double[::1] d, double[::1] beta, long[::1] basis,
                    long[::1] pos, signed char[::1] at_upper, double[::1] upper, int bland,
                    long max_iter, long stall_limit, double pivot_tol, double opt_tol):
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1]
    cdef Py_ssize_t i, k, j, r, leaving
    cdef long it = 0, since = 0
    cdef double score, best, sigma, a, lim, tmin, t, delta, enter_val, piv, f, ub, besta
    cdef double tie
    cdef double[::1] lims
    cdef signed char[::1] toup
    import numpy as np
    lims_arr = np.empty(m, dtype=np.float64)
    toup_arr = np.zeros(m, dtype=np.int8)
    lims = lims_arr
    toup = toup_arr

    while it < max_iter:
        # pricing
        j = -1
        best = 0.0
        for k in range(n):
            if pos[k] >= 0 or upper[k] == 0.0:
                continue
            score = d[k] if at_upper[k] else -d[k]
            if score > opt_tol:
                if bland:
                    j = k
                    break
                if j < 0 or score > best:
                    best = score
                    j = k
        if j < 0:
            return OPTIMAL, it, bland

        sigma = -1.0 if at_upper[j] else 1.0
        tmin = INFINITY
        for i in range(m):
            a = sigma * T[i, j]
            toup[i] = 0
            if a > pivot_tol:
                lim = beta[i] / a
            elif a < -pivot_tol and not isinf(upper[basis[i]]):
                lim = (upper[basis[i]] - beta[i]) / (-a)
                toup[i] = 1
            else:
                lim = INFINITY
            if lim < 0.0:
                lim = 0.0
            lims[i] = lim
            if lim < tmin:
                tmin = lim

        if upper[j] <= tmin:
            if isinf(upper[j]):
                return UNBOUNDED, it, bland
            t = upper[j]
            for i in range(m):
                beta[i] -= (sigma * t) * T[i, j]
            at_upper[j] = 0 if at_upper[j] else 1
            delta = sigma * t * d[j]
        else:
            tie = tmin + 1e-12 * (1.0 + tmin)
            r = -1
            besta = 0.0
            for i in range(m):
                if lims[i] <= tie:
                    if bland:
                        if r < 0 or basis[i] < basis[r]:
                            r = i
                    else:
                        a = fabs(sigma * T[i, j])
                        if r < 0 or a > besta:
                            besta = a
                            r = i
            t = lims[r]
            delta = sigma * t * d[j]
            enter_val = (upper[j] if at_upper[j] else 0.0) + sigma * t
            for i in range(m):
                beta[i] -= (sigma * t) * T[i, j]
            leaving = basis[r]
            piv = T[r, j]
            for k in range(n):
                T[r, k] = T[r, k] / piv
            for i in range(m):
                if i == r:
                    continue
                f = T[i, j]
                if f != 0.0:
                    for k in range(n):
                        T[i, k] -= f * T[r, k]
            f = d[j]
            if f != 0.0:
                for k in range(n):
                    d[k] -= f * T[r, k]
            for i in range(m):
                T[i, j] = 0.0
            T[r, j] = 1.0
            d[j] = 0.0
            beta[r] = enter_val
            at_upper[leaving] = toup[r]
            pos[leaving] = -1
            basis[r] = j
            pos[j] = r
            at_upper[j] = 0
        it += 1
        if -delta > 1e-12:
            since = 0
        else:
            since += 1
            if since >= stall_limit:
                bland = 1
    return ITERATION_LIMIT, it, bland


def q_learning_loop(double[:, :, ::1] cdf, long[:, ::1] last_support, double[:, ::1] R, double gamma,
                    double[::1] alpha, double[::1] eps, double[:, ::1] u, long[::1] restarts,
                    long episode_length, long s0, double[:, ::1] Q, long[:, ::1] N):
    cdef Py_ssize_t S = R.shape[0], A = R.shape[1]
    cdef Py_ssize_t n_steps = eps.shape[0]
    cdef Py_ssize_t k, a, b, sp, nxt
    cdef long s = s0
    cdef double best, m, step
    for k in range(n_steps):
        if episode_length > 0 and k > 0 and k % episode_length == 0:
            s = restarts[k]
        if u[k, 0] < eps[k]:
            a = <Py_ssize_t>(u[k, 1] * A)
            if a >= A:
                a = A - 1
        else:
            a = 0
            best = Q[s, 0]
            for b in range(1, A):
                if Q[s, b] > best:
                    best = Q[s, b]
                    a = b
        nxt = last_support[s, a]
        for sp in range(S - 1):
            if u[k, 2] < cdf[s, a, sp]:
                nxt = sp
                break
        m = Q[nxt, 0]
        for b in range(1, A):
            if Q[nxt, b] > m:
                m = Q[nxt, b]
        N[s, a] += 1
        step = alpha[N[s, a]]
        Q[s, a] = (1.0 - step) * Q[s, a] + step * (R[s, a] + gamma * m)
        s = nxt
    return s
