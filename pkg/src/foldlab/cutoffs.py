"""Smooth cutoff families: dyadic bumps and partitions of unity.

All bumps are built from the standard C-infinity transition
    T(t) = s(t) / (s(t) + s(1-t)),   s(t) = exp(-1/t) for t > 0,
which rises smoothly from 0 to 1 on [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _s(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0.0
    out[m] = np.exp(-1.0 / t[m])
    return out


def transition(t):
    """Smooth 0 -> 1 on [0, 1]; exactly 0 for t <= 0 and 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _s(t)
    b = _s(1.0 - t)
    return a / (a + b)


def bump(t, k0: float, k1: float, k2: float, k3: float):
    """C-infinity bump: 0 off [k0, k3], 1 on [k1, k2], monotone in between."""
    t = np.asarray(t, dtype=float)
    if not (k0 < k1 <= k2 < k3):
        raise ValueError(f"knots must satisfy k0 < k1 <= k2 < k3, got {(k0, k1, k2, k3)}")
    return transition((t - k0) / (k1 - k0)) * (1.0 - transition((t - k2) / (k3 - k2)))


def zeta(t):
    """Smooth bump on R_+: 1 for t <= 1/2, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    return 1.0 - transition(2.0 * t - 1.0)


def theta(t):
    """The dyadic ring bump zeta(t) - zeta(2t); supported in [1/4, 1]."""
    return zeta(t) - zeta(2.0 * np.asarray(t, dtype=float))


def theta_partition_sum(t, jmax: int = 60):
    """sum_{j >= 0} theta(2^j t); equals 1 for 0 < t <= 1/2.

    The telescoping sum collapses to zeta(t) - zeta(2^{jmax+1} t), so jmax
    only needs 2^{jmax} t > 1 for the tail to vanish.
    """
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for j in range(jmax + 1):
        total += theta(2.0**j * t)
    return total


@dataclass(frozen=True)
class CutoffFamily:
    """A smooth partition of unity of the annulus radii [1/4, 1].

    Patch h is supported near the center a_h; consecutive patches share a
    transition edge with complementary profiles, so the sum telescopes to a
    single master bump equal to 1 on [1/4, 1] and supported in
    [1/4 - 2*width, 1 + 2*width].

    centers     the patch centers a_h, spacing in (2*delta, 3*delta]
    edges       rising-edge positions e_0 < ... < e_m (patch h lives
                between e_h and e_{h+1})
    width       length of each transition region (< edge spacing)
    """

    delta: float
    centers: tuple
    edges: tuple
    width: float

    def _rise(self, h: int, t):
        return transition((t - self.edges[h]) / self.width)

    def chi(self, h: int, t):
        """The h-th patch (0-based); chi_h = R_h - R_{h+1} as rising edges."""
        t = np.asarray(t, dtype=float)
        return self._rise(h, t) - self._rise(h + 1, t)

    @property
    def npatches(self) -> int:
        return len(self.edges) - 1

    def chi_sum(self, t):
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for h in range(self.npatches):
            total += self.chi(h, t)
        return total

    def chi_cone(self, direction, aperture: float | None = None):
        """Angular cutoff of aperture ~delta around a unit direction.

        Homogeneous of degree 0 in (x - y): a bump in the angle between
        x - y and the given direction.
        """
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        ap = self.delta if aperture is None else aperture

        def cone(x, y):
            z = np.asarray(x, float) - np.asarray(y, float)
            r = np.linalg.norm(z, axis=-1) if z.ndim > 1 else np.linalg.norm(z)
            cosang = (z @ direction) / np.where(r > 0, r, 1.0)
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            return bump(ang, -2 * ap, -ap, ap, 2 * ap)

        return cone


def build_cutoffs(delta: float = 0.125) -> CutoffFamily:
    """Partition of unity of [1/4, 1] by plateau bumps at spacing <= 3*delta.

    Requires 0 < delta <= 1/8.  Centers a_h are spaced evenly across
    [1/4, 1] with gap in (2*delta, 3*delta]; edges sit at the midpoints,
    extended one transition width past each endpoint so the total sum is
    exactly 1 on all of [1/4, 1].
    """
    if not 0 < delta <= 0.125:
        raise ValueError(f"delta must lie in (0, 1/8], got {delta}")
    span = 0.75
    gaps = int(np.ceil(span / (3.0 * delta)))
    gap = span / gaps
    if not gap > 2.0 * delta:
        # even spacing rounded the gap below 2*delta; coarsen by one patch
        gaps -= 1
        gap = span / gaps
    centers = tuple(0.25 + gap * i for i in range(gaps + 1))
    width = gap / 3.0
    inner = [0.5 * (centers[i] + centers[i + 1]) - 0.5 * width for i in range(gaps)]
    edges = tuple([0.25 - 2.0 * width] + inner + [1.0 + width])
    return CutoffFamily(delta=delta, centers=centers, edges=edges, width=width)
