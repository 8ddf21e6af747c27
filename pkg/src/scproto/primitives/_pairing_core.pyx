# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_pairing_py``: same functions, same value conventions.

Field elements fit in 60 bits, so sums never overflow a uint64 and products
go through a 128-bit intermediate.
"""

cdef extern from *:
    """
    typedef unsigned long long u64;
    static inline u64 sc_mulmod(u64 a, u64 b, u64 m) {
        return (u64)(((unsigned __int128)a * b) % m);
    }
    """
    ctypedef unsigned long long u64
    u64 sc_mulmod(u64 a, u64 b, u64 m) nogil

P_MOD = 1152921504606846223
Q_ORDER = 72057594037927889
COFACTOR = 16

IMPLEMENTATION = "cython"

cdef u64 P = 1152921504606846223ULL
cdef u64 Q = 72057594037927889ULL
cdef u64 SQRT_EXP = (1152921504606846223ULL + 1) // 4

ctypedef struct Point:
    u64 x
    u64 y
    int inf

ctypedef struct Fp2:
    u64 a
    u64 b


cdef inline u64 addm(u64 a, u64 b) nogil:
    cdef u64 s = a + b
    if s >= P:
        s -= P
    return s


cdef inline u64 subm(u64 a, u64 b) nogil:
    if a >= b:
        return a - b
    return a + P - b


cdef inline u64 mulm(u64 a, u64 b) nogil:
    return sc_mulmod(a, b, P)


cdef u64 powm(u64 a, u64 e) nogil:
    cdef u64 acc = 1
    while e:
        if e & 1:
            acc = mulm(acc, a)
        a = mulm(a, a)
        e >>= 1
    return acc


cdef inline u64 invm(u64 a) nogil:
    return powm(a, P - 2)


cdef Point pt_add(Point a, Point b) nogil:
    cdef Point r
    cdef u64 lam, x3
    if a.inf:
        return b
    if b.inf:
        return a
    if a.x == b.x:
        if addm(a.y, b.y) == 0:
            r.x = 0
            r.y = 0
            r.inf = 1
            return r
        lam = mulm(addm(mulm(3, mulm(a.x, a.x)), 1), invm(addm(a.y, a.y)))
    else:
        lam = mulm(subm(b.y, a.y), invm(subm(b.x, a.x)))
    x3 = subm(subm(mulm(lam, lam), a.x), b.x)
    r.y = subm(mulm(lam, subm(a.x, x3)), a.y)
    r.x = x3
    r.inf = 0
    return r


cdef Point pt_mul(u64 k, Point pt) nogil:
    cdef Point acc
    acc.x = 0
    acc.y = 0
    acc.inf = 1
    while k:
        if k & 1:
            acc = pt_add(acc, pt)
        pt = pt_add(pt, pt)
        k >>= 1
    return acc


cdef inline Fp2 fp2_mul(Fp2 x, Fp2 y) nogil:
    cdef Fp2 r
    r.a = subm(mulm(x.a, y.a), mulm(x.b, y.b))
    r.b = addm(mulm(x.a, y.b), mulm(x.b, y.a))
    return r


cdef Fp2 fp2_inv(Fp2 x) nogil:
    cdef Fp2 r
    cdef u64 n = invm(addm(mulm(x.a, x.a), mulm(x.b, x.b)))
    r.a = mulm(x.a, n)
    r.b = subm(0, mulm(x.b, n))
    return r


cdef Fp2 fp2_pow(Fp2 x, u64 e) nogil:
    cdef Fp2 acc
    acc.a = 1
    acc.b = 0
    while e:
        if e & 1:
            acc = fp2_mul(acc, x)
        x = fp2_mul(x, x)
        e >>= 1
    return acc


cdef Fp2 miller(Point a, Point b) nogil:
    cdef u64 qx = subm(0, b.x)
    cdef u64 qy = b.y
    cdef u64 tx = a.x
    cdef u64 ty = a.y
    cdef u64 lam, x3
    cdef Fp2 f, line
    cdef int i
    f.a = 1
    f.b = 0
    line.b = qy
    i = 63
    while not ((Q >> i) & 1):
        i -= 1
    i -= 1
    while i >= 0:
        lam = mulm(addm(mulm(3, mulm(tx, tx)), 1), invm(addm(ty, ty)))
        line.a = subm(0, addm(ty, mulm(lam, subm(qx, tx))))
        f = fp2_mul(fp2_mul(f, f), line)
        x3 = subm(mulm(lam, lam), addm(tx, tx))
        ty = subm(mulm(lam, subm(tx, x3)), ty)
        tx = x3
        if (Q >> i) & 1:
            if tx == a.x:
                break
            lam = mulm(subm(a.y, ty), invm(subm(a.x, tx)))
            line.a = subm(0, addm(ty, mulm(lam, subm(qx, tx))))
            f = fp2_mul(f, line)
            x3 = subm(subm(mulm(lam, lam), tx), a.x)
            ty = subm(mulm(lam, subm(tx, x3)), ty)
            tx = x3
        i -= 1
    return f


cdef Fp2 final_exp(Fp2 f) nogil:
    cdef Fp2 c
    c.a = f.a
    c.b = subm(0, f.b)
    return fp2_pow(fp2_mul(c, fp2_inv(f)), 16)


cdef Point to_point(object pt) except *:
    cdef Point r
    if pt is None:
        r.x = 0
        r.y = 0
        r.inf = 1
    else:
        r.x = pt[0]
        r.y = pt[1]
        r.inf = 0
    return r


cdef object from_point(Point r):
    if r.inf:
        return None
    return (r.x, r.y)


cdef Fp2 to_fp2(object v) except *:
    cdef Fp2 r
    r.a = v[0]
    r.b = v[1]
    return r


def on_curve(pt):
    if pt is None:
        return True
    cdef Point a = to_point(pt)
    return subm(mulm(a.y, a.y), addm(mulm(a.x, mulm(a.x, a.x)), a.x)) == 0


def g1_neg(pt):
    if pt is None:
        return None
    return (pt[0], (-pt[1]) % P_MOD)


def g1_add(a, b):
    return from_point(pt_add(to_point(a), to_point(b)))


def g1_mul(k, pt):
    k = int(k)
    if k < 0:
        k = -k
        pt = g1_neg(pt)
    return from_point(pt_mul(k, to_point(pt)))


def lift_x(x):
    cdef u64 xx = x % P_MOD
    cdef u64 rhs = addm(mulm(xx, mulm(xx, xx)), xx)
    cdef u64 y = powm(rhs, SQRT_EXP)
    if mulm(y, y) != rhs:
        return None
    return (xx, min(y, P - y))


def gt_mul(a, b):
    cdef Fp2 r = fp2_mul(to_fp2(a), to_fp2(b))
    return (r.a, r.b)


def gt_inv(a):
    cdef Fp2 r = fp2_inv(to_fp2(a))
    return (r.a, r.b)


def gt_pow(a, e):
    e = int(e)
    if e < 0:
        a = gt_inv(a)
        e = -e
    cdef Fp2 r = fp2_pow(to_fp2(a), e)
    return (r.a, r.b)


def pair(a, b):
    if a is None or b is None:
        return (1, 0)
    cdef Point pa = to_point(a)
    cdef Point pb = to_point(b)
    cdef Fp2 r
    with nogil:
        r = final_exp(miller(pa, pb))
    return (r.a, r.b)
