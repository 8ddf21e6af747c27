"""Pure-Python arithmetic for the supersingular curve y^2 = x^3 + x over F_p.

This is the fallback twin of ``_pairing_core.pyx``; both expose the same
functions with the same value conventions:

* G1 points are ``(x, y)`` tuples of ints, the point at infinity is ``None``.
* F_p2 elements are ``(a, b)`` meaning ``a + b*i`` with ``i^2 = -1``.

The pairing is the reduced Tate pairing composed with the distortion map
``(x, y) -> (-x, i*y)``, which makes it symmetric on the order-``Q`` subgroup.
"""

P_MOD = 1152921504606846223
Q_ORDER = 72057594037927889
COFACTOR = 16
SQRT_EXP = (P_MOD + 1) // 4

IMPLEMENTATION = "python"


def _inv(a):
    return pow(a, P_MOD - 2, P_MOD)


def on_curve(pt):
    if pt is None:
        return True
    x, y = pt
    return (y * y - x * x * x - x) % P_MOD == 0


def g1_neg(pt):
    if pt is None:
        return None
    return (pt[0], (-pt[1]) % P_MOD)


def g1_add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    p = P_MOD
    x1, y1 = a
    x2, y2 = b
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return None
        lam = (3 * x1 * x1 + 1) * _inv(2 * y1) % p
    else:
        lam = (y2 - y1) * _inv(x2 - x1) % p
    x3 = (lam * lam - x1 - x2) % p
    return (x3, (lam * (x1 - x3) - y1) % p)


def g1_mul(k, pt):
    k = int(k)
    if k < 0:
        k = -k
        pt = g1_neg(pt)
    acc = None
    while k:
        if k & 1:
            acc = g1_add(acc, pt)
        pt = g1_add(pt, pt)
        k >>= 1
    return acc


def lift_x(x):
    """Return a curve point with abscissa ``x`` or ``None`` if there is none."""
    p = P_MOD
    x %= p
    rhs = (x * x * x + x) % p
    y = pow(rhs, SQRT_EXP, p)
    if y * y % p != rhs:
        return None
    return (x, min(y, p - y))


# -- F_p2 ------------------------------------------------------------------


def fp2_mul(a, b):
    p = P_MOD
    return ((a[0] * b[0] - a[1] * b[1]) % p, (a[0] * b[1] + a[1] * b[0]) % p)


def fp2_inv(a):
    p = P_MOD
    n = _inv((a[0] * a[0] + a[1] * a[1]) % p)
    return (a[0] * n % p, (-a[1]) * n % p)


def gt_mul(a, b):
    return fp2_mul(a, b)


def gt_inv(a):
    return fp2_inv(a)


def gt_pow(a, e):
    e = int(e)
    if e < 0:
        a = fp2_inv(a)
        e = -e
    acc = (1, 0)
    while e:
        if e & 1:
            acc = fp2_mul(acc, a)
        a = fp2_mul(a, a)
        e >>= 1
    return acc


def _final_exp(f):
    # f^(p-1) = conj(f) / f, then the cofactor (p+1)/q
    p = P_MOD
    f = fp2_mul((f[0], (-f[1]) % p), fp2_inv(f))
    return gt_pow(f, COFACTOR)


def pair(a, b):
    """Reduced Tate pairing of G1 points ``a`` and ``b``."""
    if a is None or b is None:
        return (1, 0)
    p = P_MOD
    # image of b under the distortion map: (-xb, i*yb)
    qx = (-b[0]) % p
    qy = b[1]
    xa, ya = a
    tx, ty = xa, ya
    f = (1, 0)
    for bit in bin(Q_ORDER)[3:]:
        lam = (3 * tx * tx + 1) * _inv(2 * ty) % p
        line = ((-ty - lam * (qx - tx)) % p, qy)
        f = fp2_mul(fp2_mul(f, f), line)
        x3 = (lam * lam - 2 * tx) % p
        ty = (lam * (tx - x3) - ty) % p
        tx = x3
        if bit == "1":
            if tx == xa:
                # vertical line: value in F_p, removed by the final exponent
                tx = ty = None
                break
            lam = (ya - ty) * _inv(xa - tx) % p
            line = ((-ty - lam * (qx - tx)) % p, qy)
            f = fp2_mul(f, line)
            x3 = (lam * lam - tx - xa) % p
            ty = (lam * (tx - x3) - ty) % p
            tx = x3
    return _final_exp(f)
