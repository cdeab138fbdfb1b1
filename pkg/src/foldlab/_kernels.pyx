# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Hot loops for oscillatory kernel assembly and matrix-free application.

The kernel value for a node pair (x_i, y_j) is

    K_ij = A_ij * exp(i * lam * Phi(x_i, y_j))

where the phase Phi and amplitude A are driven by lookup tables in
r^2 = |x - y|^2 (linear interpolation), a signed odd table for one-sided
curve phases, an optional symplectic twist mu * 2 x^t J y, an optional
quadratic form -mu * (x-y)^t B (x-y) with diagonal B, and an optional
angular cone table in cos(angle((x - y), direction)).

Three entry points:
    count_pairs  - number of (i, j) pairs inside the radial cutoff
    build_csr    - materialize the kernel in CSR form (complex64 values)
    apply_fly    - apply the operator (or its adjoint) without storage
    csr_apply    - apply a cached CSR kernel
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport rint, sqrt

cdef inline void fast_sincos(double x, double* s, double* c) nogil:
    # range-reduce to [-pi/4, pi/4] and evaluate degree-11/10 Taylor
    # polynomials; absolute error ~1e-10, much faster than libm sincos
    cdef double k = rint(x*0.15915494309189535)
    x = x - k*6.283185307179586
    cdef double q = rint(x*0.6366197723675814)
    cdef double r = x - q*1.5707963267948966
    cdef double r2 = r*r
    cdef double sr = r*(1.0 + r2*(-1.0/6 + r2*(1.0/120 + r2*(-1.0/5040 + r2*(1.0/362880 + r2*(-1.0/39916800))))))
    cdef double cr = 1.0 + r2*(-0.5 + r2*(1.0/24 + r2*(-1.0/720 + r2*(1.0/40320 + r2*(-1.0/3628800)))))
    cdef int iq = (<int>q) & 3
    if iq == 0:
        s[0] = sr; c[0] = cr
    elif iq == 1:
        s[0] = cr; c[0] = -sr
    elif iq == 2:
        s[0] = -sr; c[0] = -cr
    else:
        s[0] = -cr; c[0] = sr


cdef struct KSpec:
    int d
    int n                 # d == 2n when the twist is active, else 0
    int phase_id          # 0 bilinear, 1 radial-table, 4 signed curve table
    double lam
    double mu
    double r2lo
    double r2hi
    double inv_dr2
    int ntab
    int use_cone
    double ulo            # cone table covers cos(angle) in [ulo, 1]
    double inv_du
    int ncone


cdef inline double pair_phase(KSpec* ks, double* xv, double* yv,
                              double* tabA, double* tabB, double* bdup) nogil:
    cdef int l, nn = ks.n
    cdef double r2 = 0.0, ph = 0.0, z, tw, fi
    cdef int idx
    cdef double frac
    if ks.phase_id == 0:
        for l in range(ks.d):
            ph += xv[l]*yv[l]
        return ph
    for l in range(ks.d):
        z = xv[l]-yv[l]
        r2 += z*z
    fi = (r2 - ks.r2lo)*ks.inv_dr2
    idx = <int>fi
    if idx < 0: idx = 0
    if idx > ks.ntab-2: idx = ks.ntab-2
    frac = fi - idx
    ph = tabA[idx]*(1.0-frac) + tabA[idx+1]*frac
    if ks.phase_id == 4:
        # odd-in-(x-y) radial term, sign of the 1-d difference
        if xv[0] < yv[0]:
            ph -= tabB[idx]*(1.0-frac) + tabB[idx+1]*frac
        else:
            ph += tabB[idx]*(1.0-frac) + tabB[idx+1]*frac
    if ks.mu != 0.0 and nn > 0:
        tw = 0.0
        for l in range(nn):
            tw += xv[l]*yv[nn+l] - xv[nn+l]*yv[l]
        ph += ks.mu*2.0*tw
        for l in range(ks.d):
            z = xv[l]-yv[l]
            ph -= ks.mu*bdup[l]*z*z
    return ph


cdef inline double pair_amp(KSpec* ks, double* xv, double* yv, double wxi, double wyj,
                            double* tabAmp, double* tabCone, double* conedir) nogil:
    cdef int l, idx
    cdef double r2 = 0.0, z, fi, frac, a, dot, u
    if ks.phase_id == 0:
        return wxi*wyj
    for l in range(ks.d):
        z = xv[l]-yv[l]
        r2 += z*z
    fi = (r2 - ks.r2lo)*ks.inv_dr2
    idx = <int>fi
    if idx < 0: idx = 0
    if idx > ks.ntab-2: idx = ks.ntab-2
    frac = fi - idx
    a = wxi*wyj*(tabAmp[idx]*(1.0-frac) + tabAmp[idx+1]*frac)
    if ks.use_cone and a != 0.0:
        dot = 0.0
        for l in range(ks.d):
            dot += (xv[l]-yv[l])*conedir[l]
        u = dot/sqrt(r2)
        if u <= ks.ulo:
            return 0.0
        fi = (u - ks.ulo)*ks.inv_du
        idx = <int>fi
        if idx < 0: idx = 0
        if idx > ks.ncone-2: idx = ks.ncone-2
        frac = fi - idx
        a *= tabCone[idx]*(1.0-frac) + tabCone[idx+1]*frac
    return a


cdef inline void fill_kspec(KSpec* ks, int d, int n, int phase_id, double lam, double mu,
                            double r2lo, double r2hi, int ntab,
                            int use_cone, double ulo, int ncone) nogil:
    ks.d = d; ks.n = n; ks.phase_id = phase_id; ks.lam = lam; ks.mu = mu
    ks.r2lo = r2lo; ks.r2hi = r2hi; ks.ntab = ntab
    ks.inv_dr2 = (ntab-1)/(r2hi-r2lo) if r2hi > r2lo else 0.0
    ks.use_cone = use_cone; ks.ulo = ulo; ks.ncone = ncone
    ks.inv_du = (ncone-1)/(1.0-ulo) if (use_cone and ulo < 1.0) else 0.0


def count_pairs(double[:,::1] xs, double[:,::1] ys, double r2lo, double r2hi):
    cdef Py_ssize_t Mx = xs.shape[0], My = ys.shape[0], i, j
    cdef int d = xs.shape[1], l
    cdef long total = 0
    cdef double r2, z
    with nogil:
        for i in range(Mx):
            for j in range(My):
                r2 = 0.0
                for l in range(d):
                    z = xs[i,l]-ys[j,l]
                    r2 += z*z
                if r2lo <= r2 <= r2hi:
                    total += 1
    return total


def build_csr(double[:,::1] xs, double[:,::1] ys,
              double[::1] wx, double[::1] wy,
              double[::1] tabA, double[::1] tabB, double[::1] tabAmp, double[::1] bdup,
              double[::1] tabCone, double[::1] conedir, int use_cone, double ulo,
              int phase_id, int n, double lam, double mu,
              double r2lo, double r2hi, int use_rcut,
              float complex[::1] vals, int[::1] cols, long[::1] rowptr):
    cdef KSpec ks
    fill_kspec(&ks, xs.shape[1], n, phase_id, lam, mu, r2lo, r2hi, tabA.shape[0],
               use_cone, ulo, tabCone.shape[0])
    cdef Py_ssize_t Mx = xs.shape[0], My = ys.shape[0], i, j
    cdef long p = 0
    cdef int l
    cdef double r2, z, ph, a, sn, cs
    with nogil:
        rowptr[0] = 0
        for i in range(Mx):
            for j in range(My):
                if use_rcut:
                    r2 = 0.0
                    for l in range(ks.d):
                        z = xs[i,l]-ys[j,l]
                        r2 += z*z
                    if r2 < r2lo or r2 > r2hi:
                        continue
                a = pair_amp(&ks, &xs[i,0], &ys[j,0], wx[i], wy[j],
                             &tabAmp[0], &tabCone[0], &conedir[0])
                if a == 0.0:
                    continue
                ph = pair_phase(&ks, &xs[i,0], &ys[j,0], &tabA[0], &tabB[0], &bdup[0])
                fast_sincos(lam*ph, &sn, &cs)
                vals[p] = <float complex>(a*cs + 1j*a*sn)
                cols[p] = <int>j
                p += 1
            rowptr[i+1] = p
    return p


def csr_apply(float complex[::1] vals, int[::1] cols, long[::1] rowptr,
              double complex[::1] f, double complex[::1] out, int adjoint):
    cdef Py_ssize_t Mx = rowptr.shape[0]-1, i
    cdef long p
    cdef double complex acc
    cdef float complex v
    if adjoint:
        out[:] = 0
        with nogil:
            for i in range(Mx):
                acc = f[i]
                for p in range(rowptr[i], rowptr[i+1]):
                    v = vals[p]
                    out[cols[p]] += (v.real - 1j*v.imag) * acc
    else:
        with nogil:
            for i in range(Mx):
                acc = 0
                for p in range(rowptr[i], rowptr[i+1]):
                    acc += vals[p]*f[cols[p]]
                out[i] = acc
    return None


def apply_fly(double[:,::1] xs, double[:,::1] ys,
              double[::1] wx, double[::1] wy,
              double[::1] tabA, double[::1] tabB, double[::1] tabAmp, double[::1] bdup,
              double[::1] tabCone, double[::1] conedir, int use_cone, double ulo,
              int phase_id, int n, double lam, double mu,
              double r2lo, double r2hi, int use_rcut,
              double complex[::1] f, double complex[::1] out, int adjoint):
    cdef KSpec ks
    fill_kspec(&ks, xs.shape[1], n, phase_id, lam, mu, r2lo, r2hi, tabA.shape[0],
               use_cone, ulo, tabCone.shape[0])
    cdef Py_ssize_t Mx = xs.shape[0], My = ys.shape[0], i, j
    cdef int l
    cdef double r2, z, ph, a, sn, cs
    cdef double complex acc, g
    if adjoint:
        out[:] = 0
    with nogil:
        for i in range(Mx):
            acc = 0
            g = f[i] if adjoint else 0
            for j in range(My):
                if use_rcut:
                    r2 = 0.0
                    for l in range(ks.d):
                        z = xs[i,l]-ys[j,l]
                        r2 += z*z
                    if r2 < r2lo or r2 > r2hi:
                        continue
                a = pair_amp(&ks, &xs[i,0], &ys[j,0], wx[i], wy[j],
                             &tabAmp[0], &tabCone[0], &conedir[0])
                if a == 0.0:
                    continue
                ph = pair_phase(&ks, &xs[i,0], &ys[j,0], &tabA[0], &tabB[0], &bdup[0])
                fast_sincos(lam*ph, &sn, &cs)
                if adjoint:
                    out[j] += (a*cs - 1j*a*sn)*g
                else:
                    acc += (a*cs + 1j*a*sn)*f[j]
            if not adjoint:
                out[i] = acc
    return None
