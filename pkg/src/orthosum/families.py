"""Orthogonal polynomial families and their partial sums.

A family is defined by recurrence coefficients (a_n, b_n, c_n) in

    x p_n(x) = a_n p_{n+1}(x) + b_n p_n(x) + c_n p_{n-1}(x),
    p_{-1} = 0,  p_0 = 1,

and a normalisation sequence alpha_n (alpha_0 = 1) entering the partial
sums q_m(x;t) = sum_{n<=m} t^n alpha_n p_n(x).  Built-ins: hermite,
charlier(a), lommel(nu); custom families take coefficient callables or
tabulated arrays.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._dd import DD_EPS, qdq_terms, ratio_dd
from .errors import (
    DegenerateParameterError,
    DivergentParametersError,
    InvalidParameterError,
)

__all__ = [
    "RecurrenceFamily",
    "PolynomialCoeffs",
    "make_family",
    "validate_family",
    "eval_p",
    "eval_p_assoc",
    "partial_sum_direct",
    "partial_sum_with_dx",
    "partial_sum_recurrence",
    "partial_sum_sequence",
    "coeffs_p",
    "coeffs_q",
    "coeffs_p_exact",
    "genfun_residual",
    "family_to_json",
    "family_from_json",
]


@dataclass(frozen=True, eq=False)
class RecurrenceFamily:
    """Immutable family description; all operations are pure functions."""

    name: str
    a: Callable[[int], float]
    b: Callable[[int], float]
    c: Callable[[int], float]
    alpha_ratio: Callable[[int], tuple]  # n -> (num, den): alpha_{n+1}/alpha_n
    support_hull: Optional[tuple] = None
    params: dict = field(default_factory=dict)
    orthogonal: bool = True  # Favard condition expected to hold
    # exact-rational views for identity checking (built-ins only)
    exact_a: Optional[Callable[[int], Fraction]] = None
    exact_b: Optional[Callable[[int], Fraction]] = None
    exact_c: Optional[Callable[[int], Fraction]] = None
    exact_alpha_ratio: Optional[Callable[[int], Fraction]] = None

    def alpha(self, n: int) -> float:
        """alpha_n, computed from the ratio chain (alpha_0 = 1)."""
        v = 1.0
        for k in range(n):
            num, den = self.alpha_ratio(k)
            v *= num / den
        return v

    def __repr__(self):
        ps = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"RecurrenceFamily({self.name}{', ' + ps if ps else ''})"


@dataclass(frozen=True)
class PolynomialCoeffs:
    """Dense real coefficients, ascending degree."""

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(float(v) for v in self.coeffs)
        object.__setattr__(self, "coeffs", cs)
        if len(cs) > 1 and cs[-1] == 0.0:
            raise InvalidParameterError("leading coefficient must be nonzero")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        acc = 0.0
        for cv in reversed(self.coeffs):
            acc = acc * x + cv
        return acc

    def derivative(self) -> "PolynomialCoeffs":
        if self.degree == 0:
            return PolynomialCoeffs((0.0,))
        return PolynomialCoeffs(
            tuple(k * v for k, v in enumerate(self.coeffs) if k > 0)
        )


def make_family(name: str, **params) -> RecurrenceFamily:
    """Construct a built-in family (hermite, charlier, lommel) or a custom one.

    charlier requires a > 0; lommel requires nu > 0.  A custom family takes
    callables a, b, c, alpha (or alpha_ratio) plus optional support_hull.
    """
    name = name.lower()
    if name == "hermite":
        _reject_unknown(params, set())
        return RecurrenceFamily(
            name="hermite",
            a=lambda n: 0.5,
            b=lambda n: 0.0,
            c=lambda n: float(n),
            alpha_ratio=lambda n: (1.0, float(n + 1)),
            support_hull=(-math.inf, math.inf),
            params={},
            exact_a=lambda n: Fraction(1, 2),
            exact_b=lambda n: Fraction(0),
            exact_c=lambda n: Fraction(n),
            exact_alpha_ratio=lambda n: Fraction(1, n + 1),
        )
    if name == "charlier":
        _reject_unknown(params, {"a"})
        a = float(params.get("a", math.nan))
        if not (a > 0):
            raise InvalidParameterError(f"charlier requires a > 0, got a={a!r}")
        fa = Fraction(a)
        return RecurrenceFamily(
            name="charlier",
            a=lambda n: -a,
            b=lambda n: n + a,
            c=lambda n: -float(n),
            alpha_ratio=lambda n: (1.0, float(n + 1)),
            support_hull=(0.0, math.inf),
            params={"a": a},
            exact_a=lambda n: -fa,
            exact_b=lambda n: n + fa,
            exact_c=lambda n: Fraction(-n),
            exact_alpha_ratio=lambda n: Fraction(1, n + 1),
        )
    if name == "lommel":
        _reject_unknown(params, {"nu"})
        nu = float(params.get("nu", math.nan))
        if not (nu > 0):
            raise InvalidParameterError(f"lommel requires nu > 0, got nu={nu!r}")
        fnu = Fraction(nu)
        return RecurrenceFamily(
            name="lommel",
            a=lambda n: 0.5 / (n + nu),
            b=lambda n: 0.0,
            c=lambda n: 0.5 / (n + nu),
            alpha_ratio=lambda n: (1.0, 1.0),
            support_hull=None,
            params={"nu": nu},
            exact_a=lambda n: 1 / (2 * (n + fnu)),
            exact_b=lambda n: Fraction(0),
            exact_c=lambda n: 1 / (2 * (n + fnu)),
            exact_alpha_ratio=lambda n: Fraction(1),
        )
    if name == "custom":
        a = params.pop("a", None)
        b = params.pop("b", None)
        c = params.pop("c", None)
        alpha = params.pop("alpha", None)
        alpha_ratio = params.pop("alpha_ratio", None)
        hull = params.pop("support_hull", None)
        if not all(callable(f) for f in (a, b, c)):
            raise InvalidParameterError("custom family needs callables a, b, c")
        if alpha_ratio is None:
            if alpha is None:
                raise InvalidParameterError("custom family needs alpha or alpha_ratio")
            alpha_ratio = lambda n: (alpha(n + 1), alpha(n))
        fam = RecurrenceFamily(
            name="custom", a=a, b=b, c=c, alpha_ratio=alpha_ratio,
            support_hull=hull, params=dict(params),
        )
        validate_family(fam, 4)
        return fam
    raise InvalidParameterError(f"unknown family {name!r}")


def _reject_unknown(params, allowed):
    extra = set(params) - allowed
    if extra:
        raise InvalidParameterError(f"unexpected parameters {sorted(extra)}")


def validate_family(fam: RecurrenceFamily, upto: int) -> None:
    """Check the family invariants lazily for indices <= upto."""
    for n in range(upto + 1):
        if fam.a(n) == 0.0:
            raise InvalidParameterError(f"a_{n} = 0")
        num, den = fam.alpha_ratio(n)
        if num == 0.0 or den == 0.0:
            raise InvalidParameterError(f"alpha ratio at {n} is zero or undefined")
    if fam.orthogonal:
        for n in range(1, upto + 1):
            if not fam.a(n - 1) * fam.c(n) > 0.0:
                raise InvalidParameterError(
                    f"Favard condition a_{n-1}*c_{n} > 0 fails "
                    f"({fam.a(n-1)} * {fam.c(n)})"
                )


@lru_cache(maxsize=128)
def _fam_arrays(fam: RecurrenceFamily, m: int):
    """Coefficient arrays for the double-double kernel (a, b, c, ratio dd)."""
    ca = np.empty(m)
    cb = np.empty(m)
    cc = np.empty(m)
    rh = np.empty(m)
    rl = np.empty(m)
    for n in range(m):
        ca[n] = fam.a(n)
        cb[n] = fam.b(n)
        cc[n] = fam.c(n) if n >= 1 else 0.0
        num, den = fam.alpha_ratio(n)
        rh[n], rl[n] = ratio_dd(float(num), float(den))
    return ca, cb, cc, rh, rl


# ---------------------------------------------------------------------------
# evaluation


def eval_p(fam: RecurrenceFamily, n: int, x) -> float:
    """p_n(x) by the forward recurrence (internally exponent-scaled).

    Overflow is reported through a non-finite return value.
    """
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    pm, p = 0.0 * x, 1.0 + 0.0 * x
    ex = 0
    for k in range(n):
        pm, p = p, ((x - fam.b(k)) * p - (fam.c(k) * pm if k >= 1 else 0.0)) / fam.a(k)
        mag = abs(p)
        if mag > 2.0**500 or (0.0 < mag < 2.0**-500):
            e = math.frexp(mag)[1]
            sc = math.ldexp(1.0, -e)
            p *= sc
            pm *= sc
            ex += e
    if ex == 0:
        return p
    sc = math.ldexp(1.0, ex) if -1020 < ex < 1020 else (math.inf if ex > 0 else 0.0)
    return p * sc


def eval_p_assoc(fam: RecurrenceFamily, k: int, n: int, x) -> float:
    """k-th associated polynomial p_n^{(k)}(x): indices shifted by k."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    pm, p = 0.0 * x, 1.0 + 0.0 * x
    for j in range(n):
        pm, p = p, ((x - fam.b(j + k)) * p - (fam.c(j + k) * pm if j >= 1 else 0.0)) / fam.a(j + k)
    return p


def _qdq(fam, m, x, t):
    """dd-backed q, dq, term scale at points x (complex array)."""
    ca, cb, cc, rh, rl = _fam_arrays(fam, m)
    q, dq, ts, ox = qdq_terms(ca, cb, cc, rh, rl, x, t)
    if np.any(ox):
        sc = np.exp2(np.clip(ox, -1070, 1070).astype(float))
        q = q * sc
        dq = dq * sc
        ts = ts * sc
    return q, dq, ts


def partial_sum_direct(fam: RecurrenceFamily, m: int, x, t: float):
    """q_m(x;t) as the compensated term-by-term sum.

    x may be scalar (real or complex) or an ndarray.  Internally the sum is
    accumulated in double-double arithmetic with exponent scaling, so the
    result is accurate to ~1e-31 relative to the largest term; overflow
    surfaces as a non-finite value.
    """
    if m < 0:
        raise InvalidParameterError("m must be >= 0")
    xs = np.atleast_1d(np.asarray(x, dtype=complex))
    q, _, _ = _qdq(fam, m, xs, float(t))
    return _shape_like(q, x)


def partial_sum_with_dx(fam: RecurrenceFamily, m: int, x, t: float):
    """(q_m(x;t), d/dx q_m(x;t)), same accuracy contract as the direct sum."""
    if m < 0:
        raise InvalidParameterError("m must be >= 0")
    xs = np.atleast_1d(np.asarray(x, dtype=complex))
    q, dq, _ = _qdq(fam, m, xs, float(t))
    return _shape_like(q, x), _shape_like(dq, x)


def _shape_like(values, x):
    arr = np.asarray(x)
    real_in = not np.iscomplexobj(arr)
    out = values.real if real_in else values
    if arr.ndim == 0:
        v = out[0]
        return float(v) if real_in else complex(v)
    return out.reshape(arr.shape)


# scalar double-double helpers for the four-term route (pure python)
def _ts(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _tp(a, b):
    p = a * b
    ca = 134217729.0 * a
    ah = ca - (ca - a)
    al = a - ah
    cb = 134217729.0 * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dadd(ah, al, bh, bl):
    s, e = _ts(ah, bh)
    e += al + bl
    h = s + e
    return h, e - (h - s)


def _dmul(ah, al, bh, bl):
    p, e = _tp(ah, bh)
    e += ah * bl + al * bh
    h = p + e
    return h, e - (h - p)


def _ddiv_d(ah, al, b):
    q0 = ah / b
    p, e = _tp(q0, b)
    r = ((ah - p) - e + al) / b
    h = q0 + r
    return h, r - (h - q0)


def _cadd(a, b):
    rh, rl = _dadd(a[0], a[1], b[0], b[1])
    ih, il = _dadd(a[2], a[3], b[2], b[3])
    return (rh, rl, ih, il)


def _cmul(a, b):
    # (a.re*b.re - a.im*b.im, a.re*b.im + a.im*b.re), all double-double
    t1 = _dmul(a[0], a[1], b[0], b[1])
    t2 = _dmul(a[2], a[3], b[2], b[3])
    rh, rl = _dadd(t1[0], t1[1], -t2[0], -t2[1])
    t3 = _dmul(a[0], a[1], b[2], b[3])
    t4 = _dmul(a[2], a[3], b[0], b[1])
    ih, il = _dadd(t3[0], t3[1], t4[0], t4[1])
    return (rh, rl, ih, il)


def _partial_sum_recurrence_point(fam, m, x, t):
    xr, xi = float(np.real(x)), float(np.imag(x))
    q2 = (0.0, 0.0, 0.0, 0.0)
    q1 = (0.0, 0.0, 0.0, 0.0)
    q0 = (1.0, 0.0, 0.0, 0.0)
    rprev = (1.0, 0.0)
    for k in range(m):
        ak, bk = fam.a(k), fam.b(k)
        num, den = fam.alpha_ratio(k)
        rk = _ddiv_d(*_tp(float(num), 1.0), float(den))
        # trk = t * rho_k / a_k  (real dd)
        trk = _ddiv_d(*_dmul(rk[0], rk[1], *_tp(t, 1.0)), ak)
        # bmx = b_k - x (complex dd)
        bh, bl = _ts(bk, -xr)
        bmx = (bh, bl, -xi, 0.0)
        # coef_q = 1 - trk * bmx
        cq = _cmul((trk[0], trk[1], 0.0, 0.0), bmx)
        cq = (1.0 - cq[0], -cq[1], -cq[2], -cq[3])
        cq = _cadd((1.0, 0.0, 0.0, 0.0), _cmul((-trk[0], -trk[1], 0.0, 0.0), bmx))
        if k >= 1:
            ck = fam.c(k)
            # inner = t*c_k*rho_{k-1} - (b_k - x)   (complex dd)
            tcr = _dmul(*_dmul(rprev[0], rprev[1], *_tp(t, 1.0)), ck, 0.0)
            inner = _cadd((tcr[0], tcr[1], 0.0, 0.0),
                          (-bmx[0], -bmx[1], -bmx[2], -bmx[3]))
            cq1 = _cmul((-trk[0], -trk[1], 0.0, 0.0), inner)
            # coef_q2 = t^2 c_k rho_k rho_{k-1} / a_k = trk * t * c_k * rho_{k-1}
            cq2 = _dmul(*_dmul(*_dmul(trk[0], trk[1], t, 0.0), ck, 0.0),
                        rprev[0], rprev[1])
            nxt = _cadd(_cadd(_cmul(cq, q0), _cmul(cq1, q1)),
                        _cmul((cq2[0], cq2[1], 0.0, 0.0), q2))
        else:
            nxt = _cmul(cq, q0)
        q2, q1, q0 = q1, q0, nxt
        rprev = rk
    val = complex(q0[0] + q0[1], q0[2] + q0[3])
    if np.imag(x) == 0 and not isinstance(x, complex):
        return val.real
    return val


def partial_sum_recurrence(fam: RecurrenceFamily, m: int, x, t: float):
    """q_m(x;t) through the four-term recursion in m (requires t != 0).

    Runs in double-double arithmetic so that the route-equivalence contract
    against the direct sum holds even where the sum cancels heavily.
    """
    if m < 0:
        raise InvalidParameterError("m must be >= 0")
    if t == 0:
        raise DegenerateParameterError("four-term recursion assumes t != 0")
    arr = np.asarray(x)
    if arr.ndim == 0:
        return _partial_sum_recurrence_point(fam, m, arr[()], float(t))
    out = np.array([_partial_sum_recurrence_point(fam, m, v, float(t))
                    for v in arr.ravel()])
    return out.reshape(arr.shape)


def partial_sum_sequence(fam: RecurrenceFamily, m_max: int, x, t: float):
    """[q_0(x;t), ..., q_{m_max}(x;t)] in one compensated pass."""
    pm, p = 0.0 * x, 1.0 + 0.0 * x
    w = 1.0
    acc = p * w
    comp = 0.0 * x
    out = [acc]
    for n in range(m_max):
        pm, p = p, ((x - fam.b(n)) * p - (fam.c(n) * pm if n >= 1 else 0.0)) / fam.a(n)
        num, den = fam.alpha_ratio(n)
        w *= t * num / den
        y = w * p - comp
        s = acc + y
        comp = (s - acc) - y
        acc = s
        out.append(acc)
    return out


# ---------------------------------------------------------------------------
# coefficient space


def coeffs_p(fam: RecurrenceFamily, n: int) -> PolynomialCoeffs:
    """Coefficients of p_n; leading coefficient is prod(a_k^-1, k < n)."""
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    pm = np.zeros(1)
    p = np.ones(1)
    for k in range(n):
        new = np.zeros(k + 2)
        new[1:] += p
        new[: k + 1] -= fam.b(k) * p
        if k >= 1:
            new[:k] -= fam.c(k) * pm
        new /= fam.a(k)
        pm, p = p, new
    return PolynomialCoeffs(tuple(p))


def coeffs_p_exact(fam: RecurrenceFamily, n: int):
    """Exact-rational coefficients of p_n (built-in families only)."""
    if fam.exact_a is None:
        raise InvalidParameterError(f"{fam.name} has no exact coefficient view")
    pm = [Fraction(0)]
    p = [Fraction(1)]
    for k in range(n):
        new = [Fraction(0)] * (k + 2)
        for i, v in enumerate(p):
            new[i + 1] += v
            new[i] -= fam.exact_b(k) * v
        if k >= 1:
            for i, v in enumerate(pm):
                new[i] -= fam.exact_c(k) * v
        ak = fam.exact_a(k)
        new = [v / ak for v in new]
        pm, p = p, new
    return p


def coeffs_q_scaled(fam: RecurrenceFamily, m: int, t: float):
    """Coefficients of x -> q_m(x;t) as (mantissa, exp2) arrays.

    c_k = mant[k] * 2^exp2[k]; exact up to double rounding per entry even
    when the dynamic range exceeds what float64 can hold.
    """
    if m < 0:
        raise InvalidParameterError("m must be >= 0")
    pm = np.zeros(1)
    p = np.ones(1)
    E = 0
    w, F = 1.0, 0
    mant = np.zeros(m + 1)
    ex = np.zeros(m + 1, dtype=np.int64)
    mant[0] = 1.0
    for n in range(m):
        new = np.zeros(n + 2)
        new[1:] += p
        new[: n + 1] -= fam.b(n) * p
        if n >= 1:
            new[:n] -= fam.c(n) * pm
        new /= fam.a(n)
        pm, p = p, new
        num, den = fam.alpha_ratio(n)
        w *= t * num / den
        mx = np.max(np.abs(p))
        if mx > 2.0**500 or (0.0 < mx < 2.0**-500):
            e = math.frexp(mx)[1]
            p = np.ldexp(p, -e)
            pm = np.ldexp(pm, -e)
            E += e
        aw = abs(w)
        if aw > 2.0**500 or (0.0 < aw < 2.0**-500):
            f = math.frexp(aw)[1]
            w = math.ldexp(w, -f)
            F += f
        for k in range(n + 2):
            v = p[k] * w
            if v != 0.0:
                vm, ve = math.frexp(v)
                mant[k], ex[k] = _scaled_add(mant[k], int(ex[k]), vm, ve + E + F)
    for k in range(m + 1):
        if mant[k] != 0.0:
            vm, ve = math.frexp(mant[k])
            mant[k], ex[k] = vm, ex[k] + ve
    return mant, ex


def _scaled_add(mk, ek, v, e):
    if v == 0.0:
        return mk, ek
    if mk == 0.0:
        return v, e
    if e >= ek:
        d = ek - e
        return (v + (mk * math.ldexp(1.0, d) if d > -1074 else 0.0)), e
    d = e - ek
    return (mk + (v * math.ldexp(1.0, d) if d > -1074 else 0.0)), ek


def coeffs_q(fam: RecurrenceFamily, m: int, t: float) -> PolynomialCoeffs:
    """Coefficients of x -> q_m(x;t); overflow appears as non-finite entries."""
    mant, ex = coeffs_q_scaled(fam, m, t)
    out = np.empty(m + 1)
    for k in range(m + 1):
        e = int(ex[k])
        if -1070 < e < 1070:
            out[k] = math.ldexp(mant[k], e)
        else:
            out[k] = 0.0 if e <= -1070 or mant[k] == 0.0 else math.copysign(math.inf, mant[k])
    return PolynomialCoeffs(tuple(out))


# ---------------------------------------------------------------------------
# generating function


def genfun_residual(fam: RecurrenceFamily, closed_form, x, t: float, y: float,
                    M: int, radius: float = math.inf) -> float:
    """|sum_{m<=M} q_m(x;t) y^m  -  f(x; t*y)/(1-y)|.

    closed_form is f(x, s) with s the generating variable; radius is the
    declared convergence radius of f in s.
    """
    if abs(y) >= 1.0:
        raise DivergentParametersError(f"|y| = {abs(y)} >= 1")
    if abs(t * y) >= radius:
        raise DivergentParametersError(f"|t*y| = {abs(t * y)} outside radius {radius}")
    qs = partial_sum_sequence(fam, M, x, t)
    acc = 0.0
    comp = 0.0
    ym = 1.0
    for q in qs:
        v = q * ym - comp
        s = acc + v
        comp = (s - acc) - v
        acc = s
        ym *= y
    return abs(acc - closed_form(x, t * y) / (1.0 - y))


# ---------------------------------------------------------------------------
# serialization


def family_to_json(fam: RecurrenceFamily, max_validated_index: int = 0) -> str:
    doc = {"name": fam.name, "params": fam.params,
           "max_validated_index": max_validated_index}
    return json.dumps(doc, sort_keys=True)


def family_from_json(text: str) -> RecurrenceFamily:
    doc = json.loads(text)
    name = doc.get("name", "")
    if name == "custom":
        co = doc.get("coeffs", {})
        try:
            a = [float(v) for v in co["a"]]
            b = [float(v) for v in co["b"]]
            c = [float(v) for v in co["c"]]
            al = [float(v) for v in co["alpha"]]
        except KeyError as k:
            raise InvalidParameterError(f"custom family document missing {k}")
        def _at(arr, n):
            if n >= len(arr):
                raise InvalidParameterError(
                    f"tabulated coefficient index {n} beyond table length {len(arr)}")
            return arr[n]
        return make_family(
            "custom",
            a=lambda n: _at(a, n),
            b=lambda n: _at(b, n),
            c=lambda n: _at(c, n),
            alpha=lambda n: _at(al, n),
            **doc.get("params", {}),
        )
    return make_family(name, **doc.get("params", {}))
