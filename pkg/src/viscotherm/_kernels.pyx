# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled node kernels for the built-in function families.

Each quadrature node is independent, so the parallel loop has no reductions
and the result does not depend on the thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport log1p, fabs, nextafter, INFINITY, isfinite

cnp.import_array()

cdef enum:
    MAX_ITER = 200
    MAX_DOUBLINGS = 2100

# status codes
cdef enum:
    OK = 0
    NO_CONVERGENCE = 1
    BELOW_FLOOR = 2
    NOT_FINITE = 3
    NO_BRACKET = 4


cdef struct Model:
    int k0
    double cV, cA, thc
    int k1
    double g0, g1, sc
    int reg
    double eps, half, sigma
    double c0, c1, c2, c3, c4, c5


cdef inline double e0_of(const Model* m, double t) noexcept nogil:
    if m.k0 == 0:
        return m.cV * t
    return (m.cV + m.cA) * t - m.cA * m.thc * log1p(t / m.thc)


cdef inline double cap0_of(const Model* m, double t) noexcept nogil:
    if m.k0 == 0:
        return m.cV
    return m.cV + m.cA * t / (t + m.thc)


cdef inline void psi1_of(const Model* m, double s, double* e1, double* de1) noexcept nogil:
    """e1 = f - s f' and its derivative -s f'' of the (regularized) modulus."""
    cdef double q, t, h, v, d1, d2
    if m.reg and s <= m.half:
        e1[0] = 0.0
        de1[0] = 0.0
        return
    if m.reg and s < m.eps:
        h = m.half
        t = s / h - 1.0
        v = m.c0 + t * (m.c1 + t * (m.c2 + t * (m.c3 + t * (m.c4 + t * m.c5))))
        d1 = (m.c1 + t * (2 * m.c2 + t * (3 * m.c3 + t * (4 * m.c4 + t * 5 * m.c5)))) / h
        d2 = (2 * m.c2 + t * (6 * m.c3 + t * (12 * m.c4 + t * 20 * m.c5))) / (h * h)
        e1[0] = v - s * d1
        de1[0] = -s * d2
        return
    if m.k1 == 0:
        e1[0] = m.g0
        de1[0] = 0.0
        return
    q = s / (s + m.sc)
    e1[0] = m.g0 + m.g1 * q * q
    de1[0] = 2.0 * m.g1 * m.sc * s / ((s + m.sc) * (s + m.sc) * (s + m.sc))


cdef inline double energy_of(const Model* m, double t, double p2) noexcept nogil:
    cdef double a, b
    psi1_of(m, t, &a, &b)
    return e0_of(m, t) + a * p2


cdef inline int solve_node(const Model* m, double e, double p2,
                           double* theta, double* cv, double* e1) noexcept nogil:
    cdef double lo, hi, elo, ehi, th, tn, val, a, b, d, step
    cdef int it
    if not (isfinite(e) and isfinite(p2)):
        return NOT_FINITE
    if m.reg:
        if e <= 0.0:
            theta[0] = e
            cv[0] = 1.0
            e1[0] = 0.0
            return OK
        elo = 0.0
    else:
        psi1_of(m, 0.0, &a, &b)
        elo = a * p2
        if e <= elo:
            return BELOW_FLOOR
    hi = fabs(e)
    if hi < 1.0:
        hi = 1.0
    it = 0
    while not (energy_of(m, hi, p2) - e > 0.0):
        hi *= 2.0
        it += 1
        if it > MAX_DOUBLINGS:
            return NO_BRACKET
    lo = 0.0
    ehi = energy_of(m, hi, p2)
    th = hi * (e - elo) / (ehi - elo)
    if not (th > lo and th < hi):
        th = 0.5 * hi
    for it in range(MAX_ITER):
        val = energy_of(m, th, p2) - e
        if val == 0.0:
            break
        if val < 0.0:
            lo = th
        else:
            hi = th
        psi1_of(m, th, &a, &b)
        d = cap0_of(m, th) + b * p2
        tn = th - val / d
        if not (tn > lo and tn < hi):
            tn = 0.5 * (lo + hi)
        step = fabs(tn - th)
        th = tn
        if step <= 4.0 * (nextafter(fabs(tn), INFINITY) - fabs(tn)):
            break
    else:
        return NO_CONVERGENCE
    val = fabs(energy_of(m, th, p2) - e)
    if val > 1e-12 * (fabs(e) if fabs(e) > 1.0 else 1.0):
        return NO_CONVERGENCE
    psi1_of(m, th, &a, &b)
    theta[0] = th
    cv[0] = cap0_of(m, th) + b * p2
    e1[0] = a
    return OK


cdef Model pack(int k0, double[::1] p0, int k1, double[::1] p1, double[::1] rg):
    cdef Model m
    m.k0 = k0
    m.cV = p0[0]
    m.cA = p0[1]
    m.thc = p0[2]
    m.k1 = k1
    m.g0 = p1[0]
    m.g1 = p1[1]
    m.sc = p1[2]
    m.reg = 1 if rg[0] > 0 else 0
    m.eps = rg[0]
    m.half = 0.5 * rg[0]
    m.sigma = rg[1]
    m.c0 = rg[2]
    m.c1 = rg[3]
    m.c2 = rg[4]
    m.c3 = rg[5]
    m.c4 = rg[6]
    m.c5 = rg[7]
    return m


def invert(int k0, double[::1] p0, int k1, double[::1] p1, double[::1] rg,
           double[::1] e, double[::1] p2, int nthreads=1):
    """Return (theta, cv, e1, status) arrays for flat inputs."""
    cdef Py_ssize_t n = e.shape[0], i
    cdef Model m = pack(k0, p0, k1, p1, rg)
    theta = np.empty(n)
    cv = np.empty(n)
    e1 = np.empty(n)
    status = np.zeros(n, dtype=np.intc)
    cdef double[::1] th_v = theta, cv_v = cv, e1_v = e1
    cdef int[::1] st = status
    if nthreads < 1:
        nthreads = 1
    with nogil:
        for i in prange(n, schedule="static", num_threads=nthreads):
            st[i] = solve_node(&m, e[i], p2[i], &th_v[i], &cv_v[i], &e1_v[i])
    return theta, cv, e1, status


def energy(int k0, double[::1] p0, int k1, double[::1] p1, double[::1] rg,
           double[::1] theta, double[::1] p2):
    cdef Py_ssize_t n = theta.shape[0], i
    cdef Model m = pack(k0, p0, k1, p1, rg)
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = energy_of(&m, theta[i], p2[i])
    return out
