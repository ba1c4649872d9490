# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled transport kernels; contracts match ``otgcl._kernels._ref``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


def sinkhorn_log(cost, logu, logv, double eps, int max_iter, double tol,
                 bint track_dual=False):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[:, ::1] c = cost
    cdef int n = c.shape[0]
    cdef int m = c.shape[1]
    cdef double[::1] lu = np.ascontiguousarray(logu, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(logv, dtype=np.float64)

    u_arr = np.exp(np.asarray(lu))
    v_arr = np.exp(np.asarray(lv))
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr

    f_arr = np.zeros(n)
    g_arr = np.zeros(m)
    plan_arr = np.empty((n, m))
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double[:, ::1] plan = plan_arr

    dual_history = []
    cdef double violation = INFINITY
    cdef double row_violation, amax, acc, s, entry, dual
    cdef int it = 0, p, q, done = 0

    while it < max_iter and not done:
        it += 1
        with nogil:
            # f-update: exact row marginals afterwards
            for p in range(n):
                amax = -INFINITY
                for q in range(m):
                    s = (-c[p, q] + g[q]) / eps
                    if s > amax:
                        amax = s
                acc = 0.0
                for q in range(m):
                    acc += exp((-c[p, q] + g[q]) / eps - amax)
                f[p] = eps * (lu[p] - (amax + log(acc)))
            # g-update: exact column marginals afterwards
            for q in range(m):
                amax = -INFINITY
                for p in range(n):
                    s = (-c[p, q] + f[p]) / eps
                    if s > amax:
                        amax = s
                acc = 0.0
                for p in range(n):
                    acc += exp((-c[p, q] + f[p]) / eps - amax)
                g[q] = eps * (lv[q] - (amax + log(acc)))
            # plan and both marginal violations
            for p in range(n):
                for q in range(m):
                    plan[p, q] = exp((-c[p, q] + f[p] + g[q]) / eps)
            violation = 0.0
            for q in range(m):
                acc = 0.0
                for p in range(n):
                    acc += plan[p, q]
                s = fabs(acc - v[q])
                if s > violation:
                    violation = s
            for p in range(n):
                acc = 0.0
                for q in range(m):
                    acc += plan[p, q]
                s = fabs(acc - u[p])
                if s > violation:
                    violation = s
            if violation < tol:
                done = 1
        if track_dual:
            dual = 0.0
            for p in range(n):
                dual += f[p] * u[p]
            for q in range(m):
                dual += g[q] * v[q]
            acc = 0.0
            for p in range(n):
                for q in range(m):
                    acc += plan[p, q]
            dual -= eps * acc
            dual_history.append(dual)

    return plan_arr, it, violation, dual_history


def gw_lin_cost(da, db, plan):
    da = np.ascontiguousarray(da, dtype=np.float64)
    db = np.ascontiguousarray(db, dtype=np.float64)
    plan = np.ascontiguousarray(plan, dtype=np.float64)
    cdef double[:, ::1] a = da
    cdef double[:, ::1] b = db
    cdef double[:, ::1] t = plan
    cdef int n = a.shape[0]
    cdef int m = b.shape[0]
    out_arr = np.zeros((n, m))
    cdef double[:, ::1] out = out_arr
    cdef int p, pp, q, qq
    cdef double acc, dv
    with nogil:
        for p in range(n):
            for q in range(m):
                acc = 0.0
                for pp in range(n):
                    dv = a[p, pp]
                    for qq in range(m):
                        acc += fabs(dv - b[q, qq]) * t[pp, qq]
                out[p, q] = acc
    return out_arr


def gw_value(da, db, plan):
    cost = gw_lin_cost(da, db, plan)
    return float((cost * np.asarray(plan)).sum())


def gw_grad(da, db, plan):
    da = np.ascontiguousarray(da, dtype=np.float64)
    db = np.ascontiguousarray(db, dtype=np.float64)
    plan = np.ascontiguousarray(plan, dtype=np.float64)
    cdef double[:, ::1] a = da
    cdef double[:, ::1] b = db
    cdef double[:, ::1] t = plan
    cdef int n = a.shape[0]
    cdef int m = b.shape[0]
    ga_arr = np.zeros((n, n))
    gb_arr = np.zeros((m, m))
    cdef double[:, ::1] ga = ga_arr
    cdef double[:, ::1] gb = gb_arr
    cdef int p, pp, q, qq
    cdef double s, w, diff
    with nogil:
        for p in range(n):
            for pp in range(n):
                s = 0.0
                for q in range(m):
                    w = t[p, q]
                    if w == 0.0:
                        continue
                    for qq in range(m):
                        diff = a[p, pp] - b[q, qq]
                        if diff > 0.0:
                            s += w * t[pp, qq]
                        elif diff < 0.0:
                            s -= w * t[pp, qq]
                ga[p, pp] = s
        for q in range(m):
            for qq in range(m):
                s = 0.0
                for p in range(n):
                    w = t[p, q]
                    if w == 0.0:
                        continue
                    for pp in range(n):
                        diff = a[p, pp] - b[q, qq]
                        if diff > 0.0:
                            s -= w * t[pp, qq]
                        elif diff < 0.0:
                            s += w * t[pp, qq]
                gb[q, qq] = s
    return ga_arr, gb_arr
