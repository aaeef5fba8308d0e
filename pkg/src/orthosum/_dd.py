"""Double-double (~31 significant digits) evaluation kernels.

Partial sums q_m(x;t) mix terms whose magnitudes dwarf the sum itself once
the zeros move deep into the complex plane: in the scaled Szego regime the
cancellation costs roughly 0.24*m decimal digits, which exceeds plain double
precision near m = 65.  The kernels here run the three-term recurrence and
the term accumulation in Dekker/Knuth double-double arithmetic with a
separate power-of-two exponent to dodge overflow, so evaluations stay
accurate to ~1e-31 relative to the largest term for any m this package
targets (m <= ~250).

Coefficient values enter as exact doubles; the normalisation ratios
alpha_{n+1}/alpha_n enter as double-double pairs so that e.g. 1/n! is
carried to full working precision rather than through a rounded 1/(n+1).

Entry point: :func:`qdq_terms` - values of q_m, dq_m/dx and the largest
term magnitude at a batch of complex points.
"""

import math

import numpy as np
from numba import njit

_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitter

# machine epsilon of the double-double format
DD_EPS = 2.0 ** -104


@njit(cache=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True)
def _two_prod(a, b):
    p = a * b
    ca = _SPLIT * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLIT * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True)
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e += al + bl
    h = s + e
    return h, e - (h - s)


@njit(cache=True)
def _dd_mul_d(ah, al, b):
    p, e = _two_prod(ah, b)
    e += al * b
    h = p + e
    return h, e - (h - p)


@njit(cache=True)
def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    h = p + e
    return h, e - (h - p)


@njit(cache=True)
def _dd_div_d(ah, al, b):
    q0 = ah / b
    p, e = _two_prod(q0, b)
    r = ((ah - p) - e + al) / b
    h = q0 + r
    return h, r - (h - q0)


def ratio_dd(num, den):
    """Double-double representation of num/den from exact doubles."""
    rh = num / den
    p, e = _two_prod.py_func(rh, den)
    rl = ((num - p) - e) / den
    return rh, rl


@njit(cache=True)
def _qdq_kernel(ca, cb, cc, rr_h, rr_l, zre, zim, t):
    """q_m(z;t), dq/dz and term scale at each z, double-double internally.

    ca, cb, cc hold a_n, b_n, c_n; (rr_h, rr_l) the double-double ratios
    alpha_{n+1}/alpha_n, all for n < m.  Returns q (re, im), dq (re, im),
    the largest term magnitude, and a leftover base-2 exponent (nonzero
    only when a value escapes double range: true value = output * 2^exp).
    """
    m = ca.shape[0]
    npts = zre.shape[0]
    qre = np.empty(npts)
    qim = np.empty(npts)
    dre = np.empty(npts)
    dim = np.empty(npts)
    tsc = np.empty(npts)
    oex = np.zeros(npts, dtype=np.int64)
    for ip in range(npts):
        zr = zre[ip]
        zi = zim[ip]
        # p_{n-1}, p_n, dp_{n-1}, dp_n as complex double-double, scaled by 2^E
        pmr_h = 0.0; pmr_l = 0.0; pmi_h = 0.0; pmi_l = 0.0
        pr_h = 1.0; pr_l = 0.0; pi_h = 0.0; pi_l = 0.0
        dmr_h = 0.0; dmr_l = 0.0; dmi_h = 0.0; dmi_l = 0.0
        dr_h = 0.0; dr_l = 0.0; di_h = 0.0; di_l = 0.0
        E = 0
        # w = t^n alpha_n, real double-double scaled by 2^F
        w_h = 1.0; w_l = 0.0
        F = 0
        # accumulators q, sum-of-dterms, scaled by 2^G
        qr_h = 1.0; qr_l = 0.0; qi_h = 0.0; qi_l = 0.0
        sr_h = 0.0; sr_l = 0.0; si_h = 0.0; si_l = 0.0
        G = 0
        ts = 1.0
        for n in range(m):
            an = ca[n]; bn = cb[n]; cn = cc[n]
            u_h, u_l = _two_sum(zr, -bn)
            ui = zi
            # u*p (u = real dd + i*ui), p complex dd
            ar_h, ar_l = _dd_mul(pr_h, pr_l, u_h, u_l)
            br_h, br_l = _dd_mul_d(pi_h, pi_l, ui)
            ai_h, ai_l = _dd_mul(pi_h, pi_l, u_h, u_l)
            bi_h, bi_l = _dd_mul_d(pr_h, pr_l, ui)
            upr_h, upr_l = _dd_add(ar_h, ar_l, -br_h, -br_l)
            upi_h, upi_l = _dd_add(ai_h, ai_l, bi_h, bi_l)
            # - cn*pm
            cr_h, cr_l = _dd_mul_d(pmr_h, pmr_l, cn)
            ci_h, ci_l = _dd_mul_d(pmi_h, pmi_l, cn)
            nr_h, nr_l = _dd_add(upr_h, upr_l, -cr_h, -cr_l)
            ni_h, ni_l = _dd_add(upi_h, upi_l, -ci_h, -ci_l)
            # / an
            nr_h, nr_l = _dd_div_d(nr_h, nr_l, an)
            ni_h, ni_l = _dd_div_d(ni_h, ni_l, an)
            # dp step: (u*dp + p - cn*dpm)/an
            ar_h, ar_l = _dd_mul(dr_h, dr_l, u_h, u_l)
            br_h, br_l = _dd_mul_d(di_h, di_l, ui)
            ai_h, ai_l = _dd_mul(di_h, di_l, u_h, u_l)
            bi_h, bi_l = _dd_mul_d(dr_h, dr_l, ui)
            udr_h, udr_l = _dd_add(ar_h, ar_l, -br_h, -br_l)
            udi_h, udi_l = _dd_add(ai_h, ai_l, bi_h, bi_l)
            udr_h, udr_l = _dd_add(udr_h, udr_l, pr_h, pr_l)
            udi_h, udi_l = _dd_add(udi_h, udi_l, pi_h, pi_l)
            cr_h, cr_l = _dd_mul_d(dmr_h, dmr_l, cn)
            ci_h, ci_l = _dd_mul_d(dmi_h, dmi_l, cn)
            ndr_h, ndr_l = _dd_add(udr_h, udr_l, -cr_h, -cr_l)
            ndi_h, ndi_l = _dd_add(udi_h, udi_l, -ci_h, -ci_l)
            ndr_h, ndr_l = _dd_div_d(ndr_h, ndr_l, an)
            ndi_h, ndi_l = _dd_div_d(ndi_h, ndi_l, an)
            # shift
            pmr_h = pr_h; pmr_l = pr_l; pmi_h = pi_h; pmi_l = pi_l
            pr_h = nr_h; pr_l = nr_l; pi_h = ni_h; pi_l = ni_l
            dmr_h = dr_h; dmr_l = dr_l; dmi_h = di_h; dmi_l = di_l
            dr_h = ndr_h; dr_l = ndr_l; di_h = ndi_h; di_l = ndi_l
            # w *= t * (alpha ratio)
            w_h, w_l = _dd_mul_d(w_h, w_l, t)
            w_h, w_l = _dd_mul(w_h, w_l, rr_h[n], rr_l[n])
            # renormalize the scaled representations
            if (n & 7) == 7:
                mag = abs(pr_h)
                if abs(pmr_h) > mag: mag = abs(pmr_h)
                if abs(pi_h) > mag: mag = abs(pi_h)
                if abs(pmi_h) > mag: mag = abs(pmi_h)
                if mag > 0.0:
                    ee = int(math.floor(math.log2(mag)))
                    if ee > 256 or ee < -256:
                        sc = math.ldexp(1.0, -ee)
                        pr_h *= sc; pr_l *= sc; pi_h *= sc; pi_l *= sc
                        pmr_h *= sc; pmr_l *= sc; pmi_h *= sc; pmi_l *= sc
                        dr_h *= sc; dr_l *= sc; di_h *= sc; di_l *= sc
                        dmr_h *= sc; dmr_l *= sc; dmi_h *= sc; dmi_l *= sc
                        E += ee
                if w_h != 0.0:
                    fe = int(math.floor(math.log2(abs(w_h))))
                    if fe > 256 or fe < -256:
                        sc = math.ldexp(1.0, -fe)
                        w_h *= sc; w_l *= sc
                        F += fe
            # term = w * p * 2^(E+F); accumulate at exponent G
            sh = E + F - G
            if sh > 600:
                sc = math.ldexp(1.0, -sh)
                qr_h *= sc; qr_l *= sc; qi_h *= sc; qi_l *= sc
                sr_h *= sc; sr_l *= sc; si_h *= sc; si_l *= sc
                ts *= sc
                G += sh
                sh = 0
            if sh >= -1000:
                sca = math.ldexp(1.0, sh)
                tr_h, tr_l = _dd_mul(pr_h, pr_l, w_h, w_l)
                ti_h, ti_l = _dd_mul(pi_h, pi_l, w_h, w_l)
                tr_h *= sca; tr_l *= sca; ti_h *= sca; ti_l *= sca
                at = abs(tr_h) + abs(ti_h)
                if at > ts:
                    ts = at
                qr_h, qr_l = _dd_add(qr_h, qr_l, tr_h, tr_l)
                qi_h, qi_l = _dd_add(qi_h, qi_l, ti_h, ti_l)
                tr_h, tr_l = _dd_mul(dr_h, dr_l, w_h, w_l)
                ti_h, ti_l = _dd_mul(di_h, di_l, w_h, w_l)
                sr_h, sr_l = _dd_add(sr_h, sr_l, tr_h * sca, tr_l * sca)
                si_h, si_l = _dd_add(si_h, si_l, ti_h * sca, ti_l * sca)
        # collapse to doubles; keep leftover exponent if out of range
        ex = G
        rem = 0
        if ex > 900 or ex < -900:
            rem = ex
            ex = 0
        sc = math.ldexp(1.0, ex)
        qre[ip] = (qr_h + qr_l) * sc
        qim[ip] = (qi_h + qi_l) * sc
        dre[ip] = (sr_h + sr_l) * sc
        dim[ip] = (si_h + si_l) * sc
        tsc[ip] = ts * sc
        oex[ip] = rem
    return qre, qim, dre, dim, tsc, oex


def qdq_terms(ca, cb, cc, rr_h, rr_l, z, t):
    """Evaluate q_m and its x-derivative at complex points z.

    Returns (q, dq, term_scale, exp2): true values are q * 2^exp2 etc.;
    exp2 is nonzero only when magnitudes escape the double range.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    qre, qim, dre, dim, tsc, oex = _qdq_kernel(
        np.ascontiguousarray(ca, dtype=np.float64),
        np.ascontiguousarray(cb, dtype=np.float64),
        np.ascontiguousarray(cc, dtype=np.float64),
        np.ascontiguousarray(rr_h, dtype=np.float64),
        np.ascontiguousarray(rr_l, dtype=np.float64),
        np.ascontiguousarray(z.real),
        np.ascontiguousarray(z.imag),
        float(t),
    )
    return qre + 1j * qim, dre + 1j * dim, tsc, oex
