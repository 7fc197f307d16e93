# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled straight-line program runner.

Mirrors ``_kernels_py`` exactly: same opcodes, same domain checks, same
cutoff arithmetic.  Returns the index of the first failing row or -1.
"""
from libc.math cimport sin, cos, exp, log, tanh, pow, fabs, isfinite
from libc.stdlib cimport malloc, free

cdef enum:
    ADD = 0
    MUL = 1
    NEG = 2
    DIV = 3
    POWI = 4
    POWQ = 5
    SIN = 6
    COS = 7
    EXP = 8
    LOG = 9
    TANH = 10
    BUMP = 11

DEF MAXN = 24
DEF UCUT = 700.0


cdef inline int _exp_series(double* v, double* y, int n) nogil:
    cdef int m, j
    cdef double acc
    y[0] = exp(v[0])
    for m in range(1, n + 1):
        acc = 0.0
        for j in range(1, m + 1):
            acc += j * v[j] * y[m - j]
        y[m] = acc / m
    return 0


cdef double bump_derivative(double t, double a, double b, int n) nogil:
    cdef double width = b - a
    cdef double s = (t - a) / width
    cdef double u0, e, sp, qp, sj, qj, acc, fact
    cdef double u[MAXN + 1]
    cdef double num[MAXN + 1]
    cdef double p[MAXN + 1]
    cdef double h[MAXN + 1]
    cdef int j, m
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0 if n == 0 else 0.0
    u0 = 1.0 / (1.0 - s) - 1.0 / s
    if n == 0:
        if u0 <= 0.0:
            e = exp(u0)
            return e / (1.0 + e)
        return 1.0 / (1.0 + exp(-u0))
    if fabs(u0) > UCUT:
        return 0.0
    sp = 1.0 / s
    qp = 1.0 / (1.0 - s)
    sj = sp
    qj = qp
    for j in range(n + 1):
        if j % 2 == 0:
            u[j] = qj - sj
        else:
            u[j] = qj + sj
        sj *= sp
        qj *= qp
    if u0 <= 0.0:
        _exp_series(u, p, n)
        for j in range(n + 1):
            num[j] = p[j]
    else:
        for j in range(n + 1):
            u[j] = -u[j]
            num[j] = 0.0
        num[0] = 1.0
        _exp_series(u, p, n)
    p[0] = 1.0 + p[0]
    for m in range(n + 1):
        acc = num[m]
        for j in range(1, m + 1):
            acc -= p[j] * h[m - j]
        h[m] = acc / p[0]
    fact = 1.0
    for j in range(2, n + 1):
        fact *= j
    return fact * h[n] / pow(width, n)


def bump_value(double t, double a, double b, int n=0):
    return bump_derivative(t, a, b, n)


def run(const int[::1] op, const int[::1] a1, const int[::1] a2,
        const double[:, ::1] par, const double[::1] consts, int nin,
        const int[::1] outs, const double[:, ::1] X, double[:, ::1] Y):
    cdef Py_ssize_t npts = X.shape[0]
    cdef Py_ssize_t nops = op.shape[0]
    cdef Py_ssize_t nc = consts.shape[0]
    cdef Py_ssize_t nout = outs.shape[0]
    cdef Py_ssize_t nslots = nin + nc + nops
    cdef Py_ssize_t r, k, base = nin + nc
    cdef double x, y, q, mag
    cdef long num, den
    cdef int bad = -1
    cdef int c
    cdef double* v = <double*> malloc((nslots + 1) * sizeof(double))
    if v == NULL:
        raise MemoryError()
    try:
        with nogil:
            for k in range(nc):
                v[nin + k] = consts[k]
            for r in range(npts):
                for k in range(nin):
                    v[k] = X[r, k]
                for k in range(nops):
                    x = v[a1[k]]
                    c = op[k]
                    if c == ADD:
                        y = x + v[a2[k]]
                    elif c == MUL:
                        y = x * v[a2[k]]
                    elif c == NEG:
                        y = -x
                    elif c == DIV:
                        q = v[a2[k]]
                        if q == 0.0:
                            bad = r
                            break
                        y = x / q
                    elif c == POWI:
                        if x == 0.0 and par[k, 0] < 0:
                            bad = r
                            break
                        y = pow(x, par[k, 0])
                    elif c == POWQ:
                        num = <long> par[k, 0]
                        den = <long> par[k, 1]
                        if x < 0.0:
                            if den % 2 == 0:
                                bad = r
                                break
                            mag = pow(-x, par[k, 0] / par[k, 1])
                            y = -mag if (num % 2 != 0) else mag
                        else:
                            if x == 0.0 and num < 0:
                                bad = r
                                break
                            y = pow(x, par[k, 0] / par[k, 1])
                    elif c == SIN:
                        y = sin(x)
                    elif c == COS:
                        y = cos(x)
                    elif c == EXP:
                        y = exp(x)
                    elif c == LOG:
                        if x <= 0.0:
                            bad = r
                            break
                        y = log(x)
                    elif c == TANH:
                        y = tanh(x)
                    else:
                        y = bump_derivative(x, par[k, 0], par[k, 1], <int> par[k, 2])
                    if not isfinite(y):
                        bad = r
                        break
                    v[base + k] = y
                if bad >= 0:
                    break
                for k in range(nout):
                    Y[r, k] = v[outs[k]]
    finally:
        free(v)
    return bad
