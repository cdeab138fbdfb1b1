"""Pure-numpy fallback for the compiled kernel module.

Implements the same entry points as the compiled extension
(count_pairs, build_csr, csr_apply, apply_fly) with vectorized numpy,
processing output rows in blocks to bound temporary memory.  Phase and
amplitude values agree with the compiled path to ~1e-10 (the compiled
path uses a polynomial sin/cos).
"""

from __future__ import annotations

import numpy as np

_BLOCK = 64  # x-rows per vectorized block


def _lerp(tab, fi):
    idx = np.clip(fi.astype(np.int64), 0, len(tab) - 2)
    frac = fi - idx
    return tab[idx] * (1.0 - frac) + tab[idx + 1] * frac


def _block_kernel(xs, ys, wx, wy, tabA, tabB, tabAmp, bdup,
                  tabCone, conedir, use_cone, ulo,
                  phase_id, n, lam, mu, r2lo, r2hi, use_rcut):
    """Amplitude and phase arrays for one block of x rows against all y."""
    diff = xs[:, None, :] - ys[None, :, :]          # (bx, My, d)
    if phase_id == 0:
        ph = xs @ ys.T
        amp = wx[:, None] * wy[None, :]
        keep = np.ones(ph.shape, dtype=bool)
        return amp, ph, keep
    r2 = np.einsum("ijl,ijl->ij", diff, diff)
    keep = (r2 >= r2lo) & (r2 <= r2hi) if use_rcut else np.ones(r2.shape, dtype=bool)
    ntab = len(tabA)
    inv_dr2 = (ntab - 1) / (r2hi - r2lo) if r2hi > r2lo else 0.0
    fi = (r2 - r2lo) * inv_dr2
    ph = _lerp(tabA, fi)
    if phase_id == 4:
        sgn = np.where(diff[:, :, 0] >= 0.0, 1.0, -1.0)
        ph = ph + sgn * _lerp(tabB, fi)
    if mu != 0.0 and n > 0:
        tw = np.einsum("il,jl->ij", xs[:, :n], ys[:, n:]) \
            - np.einsum("il,jl->ij", xs[:, n:], ys[:, :n])
        ph = ph + mu * 2.0 * tw
        ph = ph - mu * np.einsum("ijl,l,ijl->ij", diff, bdup, diff)
    amp = wx[:, None] * wy[None, :] * _lerp(tabAmp, fi)
    if use_cone:
        r = np.sqrt(np.where(r2 > 0.0, r2, 1.0))
        u = (diff @ conedir) / r
        inside = u > ulo
        ncone = len(tabCone)
        inv_du = (ncone - 1) / (1.0 - ulo) if ulo < 1.0 else 0.0
        cval = np.where(inside, _lerp(tabCone, (u - ulo) * inv_du), 0.0)
        amp = amp * cval
    keep &= amp != 0.0
    return amp, ph, keep


def count_pairs(xs, ys, r2lo, r2hi):
    total = 0
    for i0 in range(0, len(xs), _BLOCK):
        xb = xs[i0:i0 + _BLOCK]
        diff = xb[:, None, :] - ys[None, :, :]
        r2 = np.einsum("ijl,ijl->ij", diff, diff)
        total += int(np.count_nonzero((r2 >= r2lo) & (r2 <= r2hi)))
    return total


def build_csr(xs, ys, wx, wy, tabA, tabB, tabAmp, bdup,
              tabCone, conedir, use_cone, ulo,
              phase_id, n, lam, mu, r2lo, r2hi, use_rcut,
              vals, cols, rowptr):
    p = 0
    rowptr[0] = 0
    for i0 in range(0, len(xs), _BLOCK):
        xb = xs[i0:i0 + _BLOCK]
        amp, ph, keep = _block_kernel(xb, ys, wx[i0:i0 + _BLOCK], wy,
                                      tabA, tabB, tabAmp, bdup,
                                      tabCone, conedir, use_cone, ulo,
                                      phase_id, n, lam, mu, r2lo, r2hi, use_rcut)
        for bi in range(len(xb)):
            m = keep[bi]
            k = int(np.count_nonzero(m))
            vals[p:p + k] = (amp[bi, m] * np.exp(1j * lam * ph[bi, m])).astype(np.complex64)
            cols[p:p + k] = np.flatnonzero(m).astype(np.int32)
            p += k
            rowptr[i0 + bi + 1] = p
    return p


def csr_apply(vals, cols, rowptr, f, out, adjoint):
    Mx = len(rowptr) - 1
    if adjoint:
        out[:] = 0
        for i in range(Mx):
            sl = slice(rowptr[i], rowptr[i + 1])
            np.add.at(out, cols[sl], np.conj(vals[sl]) * f[i])
    else:
        for i in range(Mx):
            sl = slice(rowptr[i], rowptr[i + 1])
            out[i] = np.dot(vals[sl], f[cols[sl]])
    return None


def apply_fly(xs, ys, wx, wy, tabA, tabB, tabAmp, bdup,
              tabCone, conedir, use_cone, ulo,
              phase_id, n, lam, mu, r2lo, r2hi, use_rcut,
              f, out, adjoint):
    if adjoint:
        out[:] = 0
    for i0 in range(0, len(xs), _BLOCK):
        xb = xs[i0:i0 + _BLOCK]
        amp, ph, keep = _block_kernel(xb, ys, wx[i0:i0 + _BLOCK], wy,
                                      tabA, tabB, tabAmp, bdup,
                                      tabCone, conedir, use_cone, ulo,
                                      phase_id, n, lam, mu, r2lo, r2hi, use_rcut)
        K = np.where(keep, amp * np.exp(1j * lam * ph), 0.0)
        if adjoint:
            out += np.conj(K).T @ f[i0:i0 + len(xb)]
        else:
            out[i0:i0 + len(xb)] = K @ f
    return None
