# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backward label-setting search with the client cost functions inlined.

Arithmetic mirrors ``lnpathlab.weights`` and ``lnpathlab.probability``
operation for operation, so both backends pick the same routes.  Build with
floating-point contraction disabled (see setup.py).
"""

from libc.math cimport exp, log, log1p, expm1, log10, pow, isnan, INFINITY
from libc.stdlib cimport malloc, free
from libc.string cimport memset

ctypedef long long i64

cdef enum:
    K_LND = 0
    K_CLN = 1
    K_LDK = 2
    K_ECLAIR = 3

# fparams / iparams slots, kept in sync with routing.py
cdef enum:
    F_RISK = 0
    F_PAPRIORI = 1
    F_CO = 2
    F_SO = 3
    F_HALFLIFE = 4
    F_LND_S_ABS = 5
    F_LND_S_FRAC = 6
    F_CLN_RISK = 7
    F_PB = 8
    F_BM = 9
    F_AP = 10
    F_LM = 11
    F_LAM = 12
    F_HM = 13
    F_HAM = 14
    F_LFR = 15

cdef enum:
    I_MODEL = 0
    I_BPY = 1
    I_FAIL_BASE = 2
    I_FAIL_RATE = 3
    I_HOP_BASE = 4
    I_HOP_RATE = 5

cdef double LDK_SCALE = 68719476736.0  # 64 * 1024**3


cdef inline i64 proportional(i64 amt, i64 rate) nogil:
    cdef i64 q = amt // 1000000
    cdef i64 r = amt % 1000000
    return q * rate + (r * rate) // 1000000


cdef inline double lnd_bimodal(i64 amt, i64 cap, double s, i64 sa, i64 fa) nogil:
    cdef double tail, num1, num2, den1, den2, p
    if amt <= sa:
        return 1.0
    if amt >= fa:
        return 0.0
    if sa <= cap - fa:
        tail = exp(<double>(-(cap - fa - sa)) / s)
        num2 = exp(<double>(-(amt - sa)) / s) + tail
        den2 = 1.0 + tail
    else:
        num2 = exp(<double>(-(amt - (cap - fa))) / s) + 1.0
        den2 = exp(<double>(-(sa - (cap - fa))) / s) + 1.0
    num1 = -expm1(<double>(-(fa - amt)) / s)
    den1 = -expm1(<double>(-(fa - sa)) / s)
    p = (num1 * num2) / (den1 * den2)
    return p if p < 1.0 else 1.0


cdef inline double lnd_node_prob(i64 amt, i64 cap, const double[::1] f) nogil:
    cdef double z = (f[F_CO] * <double>cap - <double>amt) / (f[F_SO] * <double>cap)
    cdef double ez, sig
    if z >= 0:
        ez = exp(-z)
        sig = ez / (1.0 + ez)
    else:
        sig = 1.0 / (1.0 + exp(z))
    return f[F_PAPRIORI] * (1.0 - 0.5 * sig)


cdef inline double cube_diff(i64 hi, i64 lo, i64 cap) nogil:
    cdef double u = <double>hi / <double>cap - 0.5
    cdef double a = <double>lo / <double>cap - 0.5
    return (<double>(hi - lo) / <double>cap) * (u * u + u * a + a * a)


cdef inline double ldk_ratio(i64 amt, i64 cap, i64 lb, i64 ub) nogil:
    cdef double num = cube_diff(ub, amt, cap) * LDK_SCALE + 1.0
    cdef double den = cube_diff(ub, lb, cap) * LDK_SCALE + 1.0
    cdef double r = num / den
    return r if r < 1.0 else 1.0


cdef inline double ldk_prob(i64 model, i64 amt, i64 cap, i64 lb, i64 ub) nogil:
    if model == 0:
        if amt <= lb:
            return 1.0
        if amt >= ub:
            return 0.0
        return <double>(ub - amt) / <double>(ub - lb)
    if amt <= lb:
        return 1.0
    if amt > ub:
        return 0.0
    return ldk_ratio(amt, cap, lb, ub)


cdef struct Cost:
    double add
    double mult
    double prob
    i64 fee


cdef inline int edge_cost(
    int code, const double[::1] f, const i64[::1] ip, Py_ssize_t e, i64 amt, bint first,
    const i64[::1] base, const i64[::1] ppm, const i64[::1] cltv,
    const i64[::1] hmin, const i64[::1] hmax, const i64[::1] capa,
    const i64[::1] lb, const i64[::1] ub, const i64[::1] hlb, const i64[::1] hub,
    const i64[::1] sa, const i64[::1] fa, const double[::1] tsf, const double[::1] factor,
    Cost* out,
) nogil:
    cdef i64 cap = capa[e]
    cdef i64 hi = hmax[e] if hmax[e] < cap else cap
    cdef i64 fee, hop, failure
    cdef double p, hp, s, t, bias, risk, liq, hist, pen, phm, fee_d
    if amt < hmin[e] or amt > hi:
        return 0
    fee = 0 if first else base[e] + proportional(amt, ppm[e])
    out.fee = fee
    out.mult = 1.0
    if code == K_LND:
        if ip[I_MODEL] == 2:
            p = <double>(cap - amt) / <double>cap
        elif ip[I_MODEL] == 1:
            if isnan(f[F_LND_S_ABS]):
                s = f[F_LND_S_FRAC] * <double>cap
            else:
                s = f[F_LND_S_ABS]
            p = lnd_bimodal(amt, cap, s, sa[e], fa[e])
        else:
            p = lnd_node_prob(amt, cap, f)
            t = tsf[e]
            if not isnan(t):
                p = p * (1.0 - pow(2.0, -t / f[F_HALFLIFE]))
        if p <= 0.0:
            return 0
        out.add = <double>fee + <double>(amt * cltv[e]) * f[F_RISK]
        out.mult = 1.0 / p
        out.prob = p
        return 1
    if code == K_CLN:
        if 2 * amt <= cap + 1:
            bias = -log1p(-(<double>amt / <double>(cap + 1)))
        else:
            bias = -log(<double>(cap + 1 - amt) / <double>(cap + 1))
        risk = <double>(amt * cltv[e]) * f[F_CLN_RISK] / <double>(ip[I_BPY] * 100)
        out.add = (<double>fee + risk + 1.0) * (bias + 1.0)
        out.prob = <double>(cap - amt) / <double>cap
        return 1
    if code == K_LDK:
        p = ldk_prob(ip[I_MODEL], amt, cap, lb[e], ub[e])
        hp = ldk_prob(ip[I_MODEL], amt, cap, hlb[e], hub[e])
        if p <= 0.0 or hp <= 0.0:
            return 0
        liq = -log10(p) * (f[F_LM] + f[F_LAM] * <double>amt / 1048576.0)
        hist = -log10(hp) * (f[F_HM] + f[F_HAM] * <double>amt / 1048576.0)
        pen = f[F_PB] + f[F_BM] * <double>amt / 1073741824.0
        pen = pen + (f[F_AP] if 2 * hmax[e] >= cap else 0.0)
        pen = pen + liq
        pen = pen + hist
        phm = <double>hmin[e] * (1.0 + <double>ppm[e] / 1000000.0) + <double>base[e]
        fee_d = <double>fee
        out.add = (fee_d if fee_d >= phm else phm) + pen
        out.prob = p
        return 1
    # Eclair
    p = 1.0 - <double>amt / <double>cap
    hop = ip[I_HOP_BASE] + proportional(amt, ip[I_HOP_RATE])
    out.prob = p
    if ip[I_MODEL] == 0:
        out.add = <double>(fee + hop) * factor[e]
        return 1
    if p <= 0.0:
        return 0
    risk = <double>(amt * cltv[e]) * f[F_LFR]
    failure = ip[I_FAIL_BASE] + proportional(amt, ip[I_FAIL_RATE])
    if ip[I_MODEL] == 1:
        out.add = (<double>(fee + hop) + risk) + <double>failure / p
    else:
        out.add = (<double>(fee + hop) + risk) - <double>failure * log(p)
    return 1


# heap of (key, node), ordered lexicographically
cdef inline bint less(double k1, i64 n1, double k2, i64 n2) nogil:
    return k1 < k2 or (k1 == k2 and n1 < n2)


cdef void heap_push(double* hk, i64* hn, Py_ssize_t* size, double k, i64 n) nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if less(k, n, hk[parent], hn[parent]):
            hk[i] = hk[parent]
            hn[i] = hn[parent]
            i = parent
        else:
            break
    hk[i] = k
    hn[i] = n


cdef void heap_pop(double* hk, i64* hn, Py_ssize_t* size, double* k, i64* n) nogil:
    cdef Py_ssize_t last, i, child
    cdef double lk
    cdef i64 ln
    k[0] = hk[0]
    n[0] = hn[0]
    size[0] -= 1
    last = size[0]
    if last == 0:
        return
    lk = hk[last]
    ln = hn[last]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= last:
            break
        if child + 1 < last and less(hk[child + 1], hn[child + 1], hk[child], hn[child]):
            child += 1
        if less(hk[child], hn[child], lk, ln):
            hk[i] = hk[child]
            hn[i] = hn[child]
            i = child
        else:
            break
    hk[i] = lk
    hn[i] = ln


def search(
    const i64[::1] in_ptr, const i64[::1] in_edges, const i64[::1] edge_src, const i64[::1] edge_dst,
    const i64[::1] base, const i64[::1] ppm, const i64[::1] cltv,
    const i64[::1] hmin, const i64[::1] hmax, const i64[::1] capa,
    int code, const double[::1] f, const i64[::1] ip,
    const i64[::1] lb, const i64[::1] ub, const i64[::1] hlb, const i64[::1] hub,
    const i64[::1] sa, const i64[::1] fa, const double[::1] tsf, const double[::1] factor,
    const unsigned char[::1] eligible, const unsigned char[::1] banned_nodes,
    const unsigned char[::1] banned_edges, const double[::1] bounds,
    i64 start, i64 goal, double init_ca, double init_cm, i64 init_amt, bint mixed,
    i64[::1] counters,
):
    """Backward search from ``start`` to ``goal``; returns the forward edge
    list or None.  ``counters`` receives (unusable, constraint, banned,
    ineligible) tallies."""
    cdef Py_ssize_t n = in_ptr.shape[0] - 1
    cdef Py_ssize_t m = capa.shape[0]
    cdef double* key = <double*>malloc(n * sizeof(double))
    cdef double* ca = <double*>malloc(n * sizeof(double))
    cdef double* cm = <double*>malloc(n * sizeof(double))
    cdef double* xs = <double*>malloc(4 * n * sizeof(double))
    cdef i64* amt = <i64*>malloc(n * sizeof(i64))
    cdef i64* prev = <i64*>malloc(n * sizeof(i64))
    cdef unsigned char* settled = <unsigned char*>malloc(n)
    cdef double* hk = <double*>malloc((m + 2) * sizeof(double))
    cdef i64* hn = <i64*>malloc((m + 2) * sizeof(i64))
    cdef Py_ssize_t hsize = 0
    cdef Py_ssize_t i, j, c
    cdef i64 v, u, e, a_v, a_u
    cdef double k, da, dm, dk, xv, ca_v, cm_v
    cdef double xn[4]
    cdef bint first, active[4], any_active, reject
    cdef Cost w
    cdef list path
    cdef bint found
    if key == NULL or ca == NULL or cm == NULL or xs == NULL or amt == NULL or prev == NULL \
            or settled == NULL or hk == NULL or hn == NULL:
        free(key); free(ca); free(cm); free(xs); free(amt); free(prev); free(settled); free(hk); free(hn)
        raise MemoryError()
    any_active = False
    for c in range(4):
        active[c] = bounds[c] != INFINITY
        any_active = any_active or active[c]
    with nogil:
        for i in range(n):
            key[i] = INFINITY
            ca[i] = INFINITY
            cm[i] = 0.0
            amt[i] = 0
            prev[i] = -1
            settled[i] = banned_nodes[i]
            for c in range(4):
                xs[4 * i + c] = 0.0
        ca[start] = init_ca
        cm[start] = init_cm
        amt[start] = init_amt
        key[start] = init_ca + init_cm if mixed else init_ca
        heap_push(hk, hn, &hsize, key[start], start)
        while hsize > 0:
            heap_pop(hk, hn, &hsize, &k, &v)
            if settled[v] or k != key[v]:
                continue
            settled[v] = 1
            if v == goal:
                break
            a_v = amt[v]
            ca_v = ca[v]
            cm_v = cm[v]
            for j in range(in_ptr[v], in_ptr[v + 1]):
                e = in_edges[j]
                u = edge_src[e]
                if settled[u]:
                    continue
                if banned_edges[e]:
                    counters[2] += 1
                    continue
                if not eligible[e]:
                    counters[3] += 1
                    continue
                first = u == goal
                if not edge_cost(code, f, ip, e, a_v, first, base, ppm, cltv, hmin, hmax, capa,
                                 lb, ub, hlb, hub, sa, fa, tsf, factor, &w):
                    counters[0] += 1
                    continue
                da = ca_v + w.add
                if mixed:
                    dm = cm_v * w.mult
                    dk = da + dm
                else:
                    dm = 0.0
                    dk = da
                if not dk < key[u]:
                    continue
                if any_active:
                    reject = False
                    xn[0] = xs[4 * v + 0] + <double>cltv[e]
                    xn[1] = xs[4 * v + 1] + (-log(w.prob) if w.prob > 0 else INFINITY)
                    xn[2] = xs[4 * v + 2] + <double>w.fee
                    xn[3] = xs[4 * v + 3] + 1.0
                    for c in range(4):
                        if active[c] and xn[c] > bounds[c]:
                            reject = True
                    if reject:
                        counters[1] += 1
                        continue
                    for c in range(4):
                        xs[4 * u + c] = xn[c]
                key[u] = dk
                ca[u] = da
                cm[u] = dm
                if first:
                    amt[u] = a_v
                else:
                    amt[u] = a_v + base[e] + proportional(a_v, ppm[e])
                prev[u] = e
                heap_push(hk, hn, &hsize, dk, u)
    found = settled[goal] and key[goal] != INFINITY
    path = None
    if found:
        path = []
        v = goal
        while v != start:
            e = prev[v]
            path.append(e)
            v = edge_dst[e]
    free(key); free(ca); free(cm); free(xs); free(amt); free(prev); free(settled); free(hk); free(hn)
    return path
