"""Matrix forms attached to the partial sums.

L_N(t) and M_N encode the four-term recursion as a generalized eigenvalue
equation L(t) q = x t M q; the almost-tridiagonal P_N(t) = t^-1 L_N M_N^-1
carries the zeros of q_{N+1}(.;t) as its spectrum.  B_N(x;t) is the partial
inverse of the shifted Jacobi part, and r/s are the double-zero criterion
quantities.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor

from .errors import (
    DegenerateParameterError,
    IllConditionedFitError,
    InvalidParameterError,
)
from .families import RecurrenceFamily, eval_p, eval_p_assoc, partial_sum_direct

__all__ = [
    "BandedLowerHessenberg",
    "LowerBidiagonal",
    "HessenbergPlusRow",
    "build_L",
    "build_M",
    "build_P",
    "build_B",
    "det_identity_residual",
    "r_value",
    "s_value",
    "rs_with_scale",
    "double_zero_criterion",
    "extract_pn_from_det",
    "geneig_row_residuals",
    "det_scaled",
]


@dataclass(frozen=True)
class BandedLowerHessenberg:
    """(N+1)x(N+1) matrix with nonzero offsets +1, 0, -1, -2 only: L_N(t)."""

    dim: int
    sup: tuple    # offset +1, length N
    diag: tuple   # offset 0, length N+1
    sub1: tuple   # offset -1, length N
    sub2: tuple   # offset -2, length N-1

    def to_dense(self) -> np.ndarray:
        A = np.diag(np.asarray(self.diag))
        if self.dim > 1:
            A += np.diag(np.asarray(self.sup), 1) + np.diag(np.asarray(self.sub1), -1)
        if self.dim > 2:
            A += np.diag(np.asarray(self.sub2), -2)
        return A

    def to_debug_json(self) -> dict:
        return {"dim": self.dim, "offsets": [1, 0, -1, -2],
                "diagonals": [list(self.sup), list(self.diag),
                              list(self.sub1), list(self.sub2)],
                "last_row": None}


@dataclass(frozen=True)
class LowerBidiagonal:
    """M_N: diagonal 1/alpha_m, subdiagonal -1/alpha_m."""

    dim: int
    diag: tuple
    sub: tuple

    def to_dense(self) -> np.ndarray:
        A = np.diag(np.asarray(self.diag))
        if self.dim > 1:
            A += np.diag(np.asarray(self.sub), -1)
        return A

    def det(self) -> float:
        out = 1.0
        for v in self.diag:
            out *= v
        return out

    def to_debug_json(self) -> dict:
        return {"dim": self.dim, "offsets": [0, -1],
                "diagonals": [list(self.diag), list(self.sub)],
                "last_row": None}


@dataclass(frozen=True)
class HessenbergPlusRow:
    """P_N(t): tridiagonal (rows < N) plus a dense last row."""

    dim: int
    sup: tuple       # a_i/t, i < N
    diag: tuple      # b_i, i < N
    sub: tuple       # t c_i, 1 <= i < N
    last_row: tuple  # length N+1

    def __post_init__(self):
        if any(v == 0.0 for v in self.sup):
            raise InvalidParameterError("superdiagonal entries must be nonzero")

    def to_dense(self) -> np.ndarray:
        N = self.dim - 1
        A = np.zeros((self.dim, self.dim))
        for i in range(N):
            A[i, i] = self.diag[i]
            A[i, i + 1] = self.sup[i]
            if i >= 1:
                A[i, i - 1] = self.sub[i - 1]
        A[N, :] = self.last_row
        return A

    def to_debug_json(self) -> dict:
        return {"dim": self.dim, "offsets": [1, 0, -1],
                "diagonals": [list(self.sup), list(self.diag), list(self.sub)],
                "last_row": list(self.last_row)}


def _alpha_fracs(fam: RecurrenceFamily, upto: int):
    """alpha_0..alpha_upto as floats (for moderate indices)."""
    out = [1.0]
    for n in range(upto):
        num, den = fam.alpha_ratio(n)
        out.append(out[-1] * num / den)
    return out


def build_L(fam: RecurrenceFamily, N: int, t: float) -> BandedLowerHessenberg:
    """Truncation L_N(t) of the four-term recursion matrix."""
    if N < 0:
        raise InvalidParameterError("N must be >= 0")
    if t == 0:
        raise DegenerateParameterError("L_N(t) requires t != 0")
    al = _alpha_fracs(fam, N + 1)
    sup = tuple(fam.a(mm) / al[mm + 1] for mm in range(N))
    diag = tuple(
        (t * al[mm + 1] * fam.b(mm) - fam.a(mm) * al[mm]) / (al[mm] * al[mm + 1])
        for mm in range(N + 1)
    )
    sub1 = tuple(
        t * (t * fam.c(mm) * al[mm] - al[mm - 1] * fam.b(mm)) / (al[mm - 1] * al[mm])
        for mm in range(1, N + 1)
    )
    sub2 = tuple(-t * t * fam.c(mm) / al[mm - 1] for mm in range(2, N + 1))
    return BandedLowerHessenberg(N + 1, sup, diag, sub1, sub2)


def build_M(fam: RecurrenceFamily, N: int) -> LowerBidiagonal:
    """Truncation M_N: diag 1/alpha_m, subdiag -1/alpha_m."""
    if N < 0:
        raise InvalidParameterError("N must be >= 0")
    al = _alpha_fracs(fam, N)
    diag = tuple(1.0 / al[mm] for mm in range(N + 1))
    sub = tuple(-1.0 / al[mm] for mm in range(1, N + 1))
    return LowerBidiagonal(N + 1, diag, sub)


def build_P(fam: RecurrenceFamily, N: int, t: float) -> HessenbergPlusRow:
    """P_N(t) = t^-1 L_N(t) M_N^-1 from its explicit entry formulas."""
    if N < 0:
        raise InvalidParameterError("N must be >= 0")
    if t == 0:
        raise DegenerateParameterError("P_N(t) requires t != 0")
    al = _alpha_fracs(fam, N + 1)
    sup = tuple(fam.a(i) / t for i in range(N))
    diag = tuple(fam.b(i) for i in range(N))
    sub = tuple(t * fam.c(i) for i in range(1, N))
    aN = fam.a(N)
    row = [-al[j] * aN / (t * al[N + 1]) for j in range(N + 1)]
    if N >= 1:
        row[N - 1] += t * fam.c(N)
    row[N] += fam.b(N)
    return HessenbergPlusRow(N + 1, sup, diag, sub, tuple(row))


def build_B(fam: RecurrenceFamily, N: int, x: float, t: float) -> np.ndarray:
    """Strictly lower triangular B_N(x;t): B_ij = t^(i-j)/a_j * p^(j+1)_{i-j-1}(x)."""
    if N < 0:
        raise InvalidParameterError("N must be >= 0")
    if t == 0:
        raise DegenerateParameterError("B_N(x;t) requires t != 0")
    B = np.zeros((N + 1, N + 1))
    for j in range(N + 1):
        # column j: forward recurrence for the (j+1)-associated polynomials
        aj = fam.a(j)
        pm, p = 0.0, 1.0
        tp = t
        for i in range(j + 1, N + 1):
            B[i, j] = tp * p / aj
            deg = i - j  # next degree
            sh = j + 1
            pm, p = p, ((x - fam.b(deg - 1 + sh)) * p
                        - (fam.c(deg - 1 + sh) * pm if deg >= 2 else 0.0)) / fam.a(deg - 1 + sh)
            tp *= t
    return B


def det_scaled(A: np.ndarray):
    """(mantissa, exp2) of det(A) via LU with partial pivoting."""
    lu, piv = lu_factor(A, check_finite=True)
    d = np.diag(lu)
    sign = 1.0
    for i, p in enumerate(piv):
        if p != i:
            sign = -sign
    mant = sign
    ex = 0
    for v in d:
        if v == 0.0:
            return 0.0, 0
        mant *= v
        am = abs(mant)
        if am > 2.0**500 or am < 2.0**-500:
            e = math.frexp(am)[1]
            mant = math.ldexp(mant, -e)
            ex += e
    return mant, ex


def _ldexp_clamped(mant: float, ex: int) -> float:
    if mant == 0.0:
        return 0.0
    if ex > 1070:
        return math.copysign(math.inf, mant)
    if ex < -1070:
        return 0.0
    return math.ldexp(mant, ex)


def det_identity_residual(fam: RecurrenceFamily, N: int, x: float, t: float) -> float:
    """Residual of both determinant identities for q_{N+1}(x;t).

    Checks q_{N+1} = (-1)^(N+1) prod(alpha_{k+1}/a_k) det(L_N - x t M_N) and
    the P_N form with the prod(a_k^-1) leading-coefficient product; returns
    the larger absolute deviation.  Determinants via scaled LU with partial
    pivoting.
    """
    if t == 0:
        raise DegenerateParameterError("determinant identity requires t != 0")
    q = partial_sum_direct(fam, N + 1, x, t)
    al = _alpha_fracs(fam, N + 1)

    L = build_L(fam, N, t).to_dense()
    M = build_M(fam, N).to_dense()
    mant, ex = det_scaled(L - x * t * M)
    pre = 1.0 if (N + 1) % 2 == 0 else -1.0
    for k in range(N + 1):
        pre *= al[k + 1] / fam.a(k)
        ap = abs(pre)
        if ap > 2.0**500 or ap < 2.0**-500:
            e = math.frexp(ap)[1]
            pre = math.ldexp(pre, -e)
            ex += e
    r1 = abs(q - _ldexp_clamped(pre * mant, ex))

    P = build_P(fam, N, t).to_dense()
    mant, ex = det_scaled(P - x * np.eye(N + 1))
    pre = al[N + 1]
    for k in range(N + 1):
        pre *= -t / fam.a(k)
        ap = abs(pre)
        if ap > 2.0**500 or ap < 2.0**-500:
            e = math.frexp(ap)[1]
            pre = math.ldexp(pre, -e)
            ex += e
    r2 = abs(q - _ldexp_clamped(pre * mant, ex))
    return max(r1, r2)


def geneig_row_residuals(fam: RecurrenceFamily, N: int, x: float, t: float):
    """Row residuals of L_N q + (a_N/alpha_{N+1}) q_{N+1} e_N = x t M_N q.

    Returns (residuals, row_scales): per-row absolute residual and the
    largest term magnitude entering that row.
    """
    from .families import partial_sum_sequence

    qs = np.array(partial_sum_sequence(fam, N + 1, x, t))
    L = build_L(fam, N, t).to_dense()
    M = build_M(fam, N).to_dense()
    qvec = qs[: N + 1]
    lhs = L @ qvec
    al = _alpha_fracs(fam, N + 1)
    lhs[N] += fam.a(N) / al[N + 1] * qs[N + 1]
    rhs = x * t * (M @ qvec)
    res = np.abs(lhs - rhs)
    scales = np.maximum(
        np.max(np.abs(L) * np.abs(qvec)[None, :], axis=1),
        np.abs(rhs),
    )
    scales[N] = max(scales[N], abs(fam.a(N) / al[N + 1] * qs[N + 1]))
    return res, np.maximum(scales, 1e-300)


def r_value(fam: RecurrenceFamily, Nplus1: int, x: float, t: float) -> float:
    """r_{N+1}(x;t) = -t^N sum_j (a_N/a_j) p^(j+1)_{N-j}(x) p_j(x)."""
    if Nplus1 < 1:
        raise InvalidParameterError("Nplus1 must be >= 1")
    N = Nplus1 - 1
    aN = fam.a(N)
    acc = 0.0
    for j in range(N + 1):
        acc += (aN / fam.a(j)) * eval_p_assoc(fam, j + 1, N - j, x) * eval_p(fam, j, x)
    return -(t ** N) * acc


def rs_with_scale(fam: RecurrenceFamily, Nplus1: int, x: float, t: float):
    """(r, s, scale): the double-zero quantities and their largest term."""
    if Nplus1 < 1:
        raise InvalidParameterError("Nplus1 must be >= 1")
    N = Nplus1 - 1
    aN = fam.a(N)
    al = _alpha_fracs(fam, N + 1)
    # associated-polynomial table: assoc[j][i] = p_i^{(j+1)}(x), i <= N-j-? used
    pj = [eval_p(fam, j, x) for j in range(N + 1)]
    scale = 0.0
    r = 0.0
    for j in range(N + 1):
        term = -(t ** N) * (aN / fam.a(j)) * eval_p_assoc(fam, j + 1, N - j, x) * pj[j]
        r += term
        scale = max(scale, abs(term))
    s = 0.0
    for k in range(1, N + 1):
        inner = 0.0
        for j in range(k):
            v = eval_p_assoc(fam, j + 1, k - 1 - j, x) * pj[j] / fam.a(j)
            inner += v
        term = -(aN / al[N + 1]) * al[k] * (t ** (k - 1)) * inner
        s += term
        scale = max(scale, abs(term))
    return r, s, max(scale, 1e-300)


def s_value(fam: RecurrenceFamily, Nplus1: int, x: float, t: float) -> float:
    """s_{N+1}(x;t): the last-row correction sum of the double-zero criterion.

    Empty sum (zero) when N = 0.
    """
    return rs_with_scale(fam, Nplus1, x, t)[1]


def double_zero_criterion(fam: RecurrenceFamily, m: int, x: float, t: float) -> float:
    """r_m(x;t) + s_m(x;t): vanishes iff a zero of q_m at x has multiplicity > 1.

    Only meaningful when q_m(x;t) itself is (near) zero; the caller asserts
    that separately.
    """
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    r, s, _ = rs_with_scale(fam, m, x, t)
    return r + s


def extract_pn_from_det(fam: RecurrenceFamily, n: int, x: float,
                        fit_tol: float = 1e-6) -> float:
    """Recover p_n(x) from the n-th t-derivative of det(L_{n-1}(t) - x t M_{n-1}).

    Samples the determinant at n+1 Chebyshev-spaced values of t, fits the
    degree-n polynomial in t (in the unit-interval variable u = t/R for
    conditioning), and reads off the t^n coefficient.  The sampling radius R
    is chosen from the balance of the t-coefficients alpha_k p_k(x) (floor
    1/n): at a fixed radius 1/n the top coefficient drops below machine
    noise for factorially normalised families already around n = 10.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    N = n - 1
    al = _alpha_fracs(fam, n)
    tc = [al[k] * eval_p(fam, k, x) for k in range(n + 1)]
    R = 1.0 / n
    if tc[n] != 0.0:
        for k in range(n):
            if tc[k] != 0.0:
                R = max(R, abs(tc[k] / tc[n]) ** (1.0 / (n - k)))
    # large radii push the LU determinant into its own cancellation regime
    R = min(R, 4.0)
    M = build_M(fam, N).to_dense()
    kk = np.arange(n + 1)
    u = np.cos(np.pi * (2 * kk + 1) / (2 * (n + 1)))  # Chebyshev points in [-1, 1]
    tvals = u * R
    dets = np.empty(n + 1)
    for i, tv in enumerate(tvals):
        L = build_L(fam, N, tv).to_dense()
        mant, ex = det_scaled(L - x * tv * M)
        dets[i] = _ldexp_clamped(mant, ex)
    scale = np.max(np.abs(dets))
    V = np.vander(u, n + 1, increasing=True)
    coef_u = np.linalg.solve(V, dets / scale)
    resid = np.linalg.norm(V @ coef_u - dets / scale) / max(1.0, np.linalg.norm(dets / scale))
    if resid > fit_tol:
        raise IllConditionedFitError(f"Vandermonde fit residual {resid:.3g} > {fit_tol}")
    coef_tn = coef_u[n] * scale / R ** n  # back to the t variable
    pre = 1.0 if n % 2 == 0 else -1.0
    alpha_n = al[n]
    for k in range(n):
        pre *= al[k + 1] / fam.a(k)
    # p_n(x) = pre / alpha_n * [t^n] det  (the n! from the derivative cancels
    # the 1/n! in the corollary's prefactor)
    return pre / alpha_n * coef_tn


def b_product_residuals(fam: RecurrenceFamily, N: int, x: float, t: float):
    """Residuals of the (J_N(t)-x) B_N(x;t) product identity.

    Returns (residuals, scales): per-entry absolute deviation from the
    identity's stated value and the magnitude of the largest term entering
    that entry's dot product.
    """
    B = build_B(fam, N, x, t)
    J = np.zeros((N + 1, N + 1))
    for i in range(N + 1):
        J[i, i] = fam.b(i) - x
        if i < N:
            J[i, i + 1] = fam.a(i) / t
        if i >= 1:
            J[i, i - 1] = fam.c(i) * t
    prod = J @ B
    want = np.zeros((N + 1, N + 1))
    for i in range(N + 1):
        for j in range(N + 1):
            if i < N:
                want[i, j] = 1.0 if i == j else 0.0
            elif j < N:
                want[N, j] = -(t ** (N - j) * fam.a(N) / fam.a(j)) * eval_p_assoc(
                    fam, j + 1, N - j, x)
    res = np.abs(prod - want)
    scales = np.abs(J) @ np.abs(B) + np.abs(want)
    return res, np.maximum(scales, 1.0)
