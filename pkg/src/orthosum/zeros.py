"""Zero sets of the partial sums, by two independent methods.

The primary route takes the zeros of x -> q_m(x;t) as the eigenvalues of the
almost-tridiagonal matrix P_{m-1}(t) (computed on a diagonally rescaled
similarity, then polished by Newton steps on the double-double evaluator).
The cross-check route runs a simultaneous Aberth-Ehrlich iteration whose
function values come from the same recurrence evaluator but whose
localization starts from the Newton polygon of the coefficient vector.

Both routes finish through a shared accuracy audit: per-zero error estimates
from the evaluation noise model trigger a collective refinement pass in the
deep-cancellation regime (small t, m above ~65).
"""

import io
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.optimize import linear_sum_assignment

from ._dd import DD_EPS
from .errors import (
    ClassificationError,
    DegenerateParameterError,
    InvalidParameterError,
    LengthMismatchError,
    NoHullError,
    QRConvergenceError,
)
from .families import RecurrenceFamily, _fam_arrays, _qdq, validate_family

__all__ = [
    "ZeroSet",
    "zeros_eig",
    "zeros_aberth",
    "classify_real",
    "check_interlacing",
    "hull_check",
    "zeros_p",
    "match_distance",
    "zeroset_to_csv",
    "zeroset_to_json",
    "zeroset_from_json",
]

_TOL_IM_DEFAULT = 1e-9


@dataclass(frozen=True)
class ZeroSet:
    """Zeros of x -> q_m(x;t) with provenance and per-zero diagnostics."""

    m: int
    t: float
    zeros: tuple          # complex, sorted by (re, im)
    real_count: int
    method: str           # "eigen" | "aberth"
    residuals: tuple      # |q/q'| / (1 + |z|) per zero
    is_real: tuple        # bool per zero
    converged: bool = True
    tol_im: float = _TOL_IM_DEFAULT

    def real_zeros(self) -> np.ndarray:
        return np.array([z.real for z, r in zip(self.zeros, self.is_real) if r])

    def complex_pairs(self) -> int:
        return (self.m - self.real_count) // 2


def _sort_key(zs):
    return np.lexsort((np.imag(zs), np.real(zs)))


# ---------------------------------------------------------------------------
# eigenvalue route


def _eig_matrix(fam: RecurrenceFamily, N: int, t: float):
    """Similarity-rescaled P_N(t) suited to eigensolving: (matrix, x_scale).

    For |t| >= 1 under the Favard condition, conjugation by
    d_{i+1}/d_i = t sqrt(c_{i+1}/a_i) symmetrizes the tridiagonal part and
    shrinks the dense last row (used when that row stays bounded).  The
    fallback works in y = t*x, where the rescaled family (ta, tb, tc) makes
    P companion-like with moderate entries; eigenvalues are y = t*x.
    """
    a_, b_, c_ = fam.a, fam.b, fam.c

    def rho(n):
        num, den = fam.alpha_ratio(n)
        return num / den

    if abs(t) >= 1.0 and fam.orthogonal:
        A = np.zeros((N + 1, N + 1))
        ok = True
        for i in range(N):
            A[i, i] = b_(i)
            g = a_(i) * c_(i + 1)
            if not g > 0.0:
                ok = False
                break
            sg = math.sqrt(g)
            A[i, i + 1] = sg if a_(i) > 0 else -sg
            A[i + 1, i] = g / A[i, i + 1]
        if ok:
            A[N, N] = b_(N)
            row = np.zeros(N + 1)
            f = a_(N) / (t * rho(N))
            for j in range(N, -1, -1):
                row[j] = -f
                if j > 0:
                    f = f / (rho(j - 1) * t) * math.sqrt(a_(j - 1) / c_(j))
                    if not math.isfinite(f) or abs(f) > 1e40:
                        ok = False
                        break
            if ok:
                A[N, :] += row
                return A, 1.0
    A = np.zeros((N + 1, N + 1))
    for i in range(N):
        A[i, i] = t * b_(i)
        A[i, i + 1] = a_(i) / rho(i)
        if i >= 1:
            A[i, i - 1] = t * t * c_(i) * rho(i - 1)
    g = a_(N) / rho(N)
    A[N, :] = -g
    if N >= 1:
        A[N, N - 1] += t * t * c_(N) * rho(N - 1)
    A[N, N] += t * b_(N)
    return A, t


def _newton_polish(fam, m, z, t, max_steps=3, tol=1e-14):
    z = np.array(z, dtype=complex)
    for _ in range(max_steps):
        q, dq, _ = _qdq(fam, m, z, t)
        dq = np.where(dq == 0, 1.0, dq)
        step = np.where(q == 0, 0.0, q / dq)
        z = z - step
        if np.all(np.abs(step) <= tol * (1 + np.abs(z))):
            break
    return z


def _audit(fam, m, z, t):
    """Per-zero diagnostics: (scaled residual, error estimate, local gap)."""
    q, dq, ts = _qdq(fam, m, z, t)
    adq = np.maximum(np.abs(dq), 1e-300)
    resid = np.abs(q) / adq / (1 + np.abs(z))
    err = DD_EPS * ts / adq
    if m == 1:
        gap = np.full(1, np.inf)
    else:
        D = np.abs(z[:, None] - z[None, :])
        np.fill_diagonal(D, np.inf)
        gap = D.min(axis=1)
    return resid, err, gap


def _aberth_refine(fam, m, z, t, tol=1e-13, max_iter=500):
    """Aberth-Ehrlich sweep on the double-double evaluator."""
    z = np.array(z, dtype=complex)
    conv = False
    it = 0
    for it in range(max_iter):
        pv, dv, ts = _qdq(fam, m, z, t)
        bad = ~np.isfinite(pv) | ~np.isfinite(dv)
        if np.any(bad):
            # nudge escaped points back toward the cloud
            center = np.median(z[~bad]) if np.any(~bad) else 0.0
            z = np.where(bad, 0.5 * (z + center), z)
            continue
        dv = np.where(dv == 0, 1.0, dv)
        w = np.where(pv == 0, 0.0, pv / dv)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        diff = np.where(diff == 0, 1e-300, diff)
        S = np.sum(1.0 / diff, axis=1) - 1.0
        den = 1.0 - w * S
        den = np.where(np.abs(den) < 1e-290, 1.0, den)
        step = np.where(pv == 0, 0.0, w / den)
        z = z - step
        floor = 4.0 * DD_EPS * ts / np.maximum(np.abs(dv), 1e-300)
        if np.all(np.abs(step) <= np.maximum(tol * (1 + np.abs(z)), floor)):
            conv = True
            break
    return z, conv, it + 1


def _finalize(fam, m, z, t, method, tol_im, converged=True):
    resid, err, gap = _audit(fam, m, z, t)
    order = _sort_key(z)
    z = z[order]
    resid = resid[order]
    zs = tuple(complex(v) for v in z)
    is_real, real_count = _classify(zs, tol_im)
    return ZeroSet(m=m, t=t, zeros=zs, real_count=real_count, method=method,
                   residuals=tuple(float(r) for r in resid),
                   is_real=is_real, converged=converged, tol_im=tol_im)


def zeros_eig(fam: RecurrenceFamily, m: int, t: float,
              tol_im: float = _TOL_IM_DEFAULT) -> ZeroSet:
    """Zeros of q_m(.;t) as eigenvalues of P_{m-1}(t), Newton-polished.

    Francis-QR (LAPACK) runs on the transposed, diagonally rescaled matrix in
    real arithmetic; 2x2 blocks deliver conjugate pairs.  Each zero is then
    polished by up to 3 Newton steps on the double-double evaluator, and an
    accuracy audit triggers a collective Aberth refinement wherever the
    eigenvalue error estimate is not safely below the local zero gap.
    """
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    if t == 0:
        raise DegenerateParameterError("zeros are defined for t != 0")
    A, xs = _eig_matrix(fam, m - 1, t)
    try:
        z = np.linalg.eigvals(A.T) / xs
    except np.linalg.LinAlgError as e:
        raise QRConvergenceError(f"QR iteration failed for m={m}, t={t}: {e}")
    z = _newton_polish(fam, m, z, t)
    resid, err, gap = _audit(fam, m, z, t)
    need = (err > 1e-9 * (1 + np.abs(z))) | (err > 0.125 * gap) | (resid > 1e-10)
    converged = True
    if np.any(need):
        z, converged, _ = _aberth_refine(fam, m, z, t)
        z = _newton_polish(fam, m, z, t, max_steps=2)
    return _finalize(fam, m, z, t, "eigen", tol_im, converged)


# ---------------------------------------------------------------------------
# Aberth route


def _newton_polygon_init(mant, ex, seed=0):
    """Starting points on circles from the Newton polygon of the coefficients."""
    lg = np.where(mant != 0.0,
                  np.log2(np.abs(np.where(mant != 0.0, mant, 1.0))) + ex,
                  -np.inf)
    fin = np.isfinite(lg)
    ks = np.nonzero(fin)[0]
    hull = [int(ks[0])]
    for k in ks[1:]:
        k = int(k)
        while len(hull) >= 2:
            k1, k2 = hull[-2], hull[-1]
            if (lg[k2] - lg[k1]) * (k - k2) <= (lg[k] - lg[k2]) * (k2 - k1):
                hull.pop()
            else:
                break
        hull.append(k)
    rng = np.random.default_rng(seed)
    pts = []
    for k1, k2 in zip(hull[:-1], hull[1:]):
        cnt = k2 - k1
        r = np.exp2(float(np.clip((lg[k1] - lg[k2]) / cnt, -500, 500)))
        ang = 2 * np.pi * (np.arange(cnt) + 0.25 + 0.1 * rng.random(cnt)) / cnt + 0.5 * k1
        pts.append(r * np.exp(1j * ang))
    z = np.concatenate(pts) if pts else np.empty(0, dtype=complex)
    if ks[0] > 0:
        ang = 2 * np.pi * (np.arange(ks[0]) + 0.3) / ks[0]
        z = np.concatenate([1e-8 * np.exp(1j * ang), z])
    return z


def _init_radius(mant, ex):
    """Cauchy-style radius 0.8*(1+max|c_k/c_m|), capped by the Fujiwara bound."""
    lg = np.where(mant != 0.0,
                  np.log2(np.abs(np.where(mant != 0.0, mant, 1.0))) + ex,
                  -np.inf)
    mdeg = len(mant) - 1
    ratios = lg[:-1] - lg[-1]
    k = np.arange(mdeg)
    fuji = 2.0 * float(np.max(np.exp2(np.clip(ratios / (mdeg - k), -500, 500))))
    mx = float(np.max(ratios))
    cauchy = 0.8 * (1.0 + 2.0 ** mx) if mx < 900 else math.inf
    return min(cauchy, fuji)


def zeros_aberth(fam: RecurrenceFamily, m: int, t: float, seed: int = 0,
                 tol_im: float = _TOL_IM_DEFAULT, max_iter: int = 500) -> ZeroSet:
    """Zeros of q_m(.;t) by simultaneous Aberth-Ehrlich iteration.

    Starting points come from the coefficient vector of q_m (Newton-polygon
    circles inside the Cauchy/Fujiwara root bound, equi-angular with a seeded
    perturbation); iteration values come from the recurrence evaluator, which
    stays accurate where the monomial form of q_m is hopeless.  Convergence:
    per-point update below 1e-13*(1+|z|) or the evaluation noise floor.
    Hitting max_iter flags the result non-converged rather than raising.
    """
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    if t == 0:
        raise DegenerateParameterError("zeros are defined for t != 0")
    if m == 1:
        num, den = fam.alpha_ratio(0)
        z0 = fam.b(0) - fam.a(0) / ((num / den) * t)
        return _finalize(fam, 1, np.array([z0 + 0j]), t, "aberth", tol_im)
    from .families import coeffs_q_scaled

    mant, ex = coeffs_q_scaled(fam, m, t)
    z = _newton_polygon_init(mant, ex, seed)
    rmax = _init_radius(mant, ex)
    z = np.where(np.abs(z) > rmax, z * (rmax / np.abs(z)), z)
    z, conv, _ = _aberth_refine(fam, m, z, t, max_iter=max_iter)
    return _finalize(fam, m, z, t, "aberth", tol_im, converged=conv)


# ---------------------------------------------------------------------------
# classification and structure checks


def _classify(zs, tol_im):
    """Greedy conjugate pairing; raises when a non-real zero stays unpaired."""
    n = len(zs)
    is_real = [False] * n
    for i, z in enumerate(zs):
        if abs(z.imag) <= tol_im * max(1.0, abs(z.real)):
            is_real[i] = True
    upper = [i for i in range(n) if not is_real[i] and zs[i].imag > 0]
    lower = [i for i in range(n) if not is_real[i] and zs[i].imag < 0]
    used = set()
    for i in upper:
        best, bestd = None, math.inf
        for j in lower:
            if j in used:
                continue
            d = abs(zs[i] - zs[j].conjugate())
            if d < bestd:
                best, bestd = j, d
        # loose limit: genuine distinct pairs sit ~|z|/m apart, far above the
        # evaluation noise floor that sets residual pair asymmetry
        lim = 1e-4 * max(1.0, abs(zs[i]))
        if best is None or bestd > lim:
            raise ClassificationError(
                f"unpaired non-real zero {zs[i]} (best conjugate distance {bestd:.3g})")
        used.add(best)
    if len(used) != len(lower):
        raise ClassificationError("conjugate pairing left lower-half zeros unmatched")
    return tuple(is_real), sum(is_real)


def classify_real(zs: ZeroSet, tol_im: float = _TOL_IM_DEFAULT) -> ZeroSet:
    """Re-classify a zero set with a new imaginary-part tolerance."""
    if not tol_im > 0:
        raise InvalidParameterError("tol_im must be > 0")
    is_real, real_count = _classify(zs.zeros, tol_im)
    return replace(zs, is_real=is_real, real_count=real_count, tol_im=tol_im)


def check_interlacing(inner, outer) -> bool:
    """Strict interlacing outer_1 < inner_1 < outer_2 < ... < outer_{n+1}."""
    inner = list(inner)
    outer = list(outer)
    if len(outer) != len(inner) + 1:
        raise LengthMismatchError(
            f"need |outer| == |inner|+1, got {len(outer)} vs {len(inner)}")
    if any(b <= a for a, b in zip(inner, inner[1:])):
        raise InvalidParameterError("inner list must be strictly increasing")
    if any(b <= a for a, b in zip(outer, outer[1:])):
        raise InvalidParameterError("outer list must be strictly increasing")
    for i, v in enumerate(inner):
        if not (outer[i] < v < outer[i + 1]):
            return False
    return True


def hull_check(fam: RecurrenceFamily, zs: ZeroSet, slack: float = 1e-9) -> bool:
    """All real zeros inside the declared support hull (with slack)."""
    if fam.support_hull is None:
        raise NoHullError(f"{fam.name} declares no support hull")
    lo, hi = fam.support_hull
    return all(lo - slack <= z <= hi + slack for z in zs.real_zeros())


def zeros_p(fam: RecurrenceFamily, n: int) -> np.ndarray:
    """Zeros of p_n as eigenvalues of the symmetrized Jacobi matrix."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    validate_family(fam, n)
    diag = np.array([fam.b(k) for k in range(n)])
    off = np.array([math.sqrt(fam.a(k) * fam.c(k + 1)) for k in range(n - 1)])
    if n == 1:
        return diag
    return eigvalsh_tridiagonal(diag, off)


def match_distance(za, zb, greedy_above: int = 200) -> float:
    """Largest pairwise distance under optimal multiset matching."""
    za = np.asarray(za, dtype=complex)
    zb = np.asarray(zb, dtype=complex)
    if len(za) != len(zb):
        raise LengthMismatchError(f"multiset sizes differ: {len(za)} vs {len(zb)}")
    if len(za) == 0:
        return 0.0
    C = np.abs(za[:, None] - zb[None, :])
    if len(za) <= greedy_above:
        r, c = linear_sum_assignment(C)
        return float(C[r, c].max())
    # greedy fallback for very large sets
    order_a = np.lexsort((za.imag, za.real))
    order_b = np.lexsort((zb.imag, zb.real))
    return float(np.max(np.abs(za[order_a] - zb[order_b])))


# ---------------------------------------------------------------------------
# serialization (17 significant digits; bit-exact round trip)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def zeroset_to_csv(zs: ZeroSet) -> str:
    out = io.StringIO()
    out.write("m,t,index,re,im,is_real,residual\n")
    for i, (z, r, res) in enumerate(zip(zs.zeros, zs.is_real, zs.residuals)):
        out.write(f"{zs.m},{_fmt(zs.t)},{i},{_fmt(z.real)},{_fmt(z.imag)},"
                  f"{int(r)},{_fmt(res)}\n")
    return out.getvalue()


def zeroset_to_json(zs: ZeroSet) -> str:
    doc = {
        "m": zs.m,
        "t": zs.t,
        "method": zs.method,
        "real_count": zs.real_count,
        "converged": zs.converged,
        "tol_im": zs.tol_im,
        "zeros": [{"re": z.real, "im": z.imag, "is_real": bool(r), "residual": res}
                  for z, r, res in zip(zs.zeros, zs.is_real, zs.residuals)],
    }
    return json.dumps(doc, sort_keys=True)


def zeroset_from_json(text: str) -> ZeroSet:
    doc = json.loads(text)
    zs = tuple(complex(e["re"], e["im"]) for e in doc["zeros"])
    return ZeroSet(
        m=int(doc["m"]), t=float(doc["t"]), zeros=zs,
        real_count=int(doc["real_count"]), method=doc["method"],
        residuals=tuple(float(e["residual"]) for e in doc["zeros"]),
        is_real=tuple(bool(e["is_real"]) for e in doc["zeros"]),
        converged=bool(doc["converged"]), tol_im=float(doc["tol_im"]),
    )
