"""Closed-form kernels of the plane Biot-Savart law and their mollified variants.

All functions operate on arrays whose trailing axis holds (x1, x2)
coordinates and broadcast over any leading axes.  The singular kernel

    K(x) = x_perp / (2 pi |x|^2),      x_perp = (-x2, x1),

is tangential (x . K(x) = 0) and divergence-free away from the origin.
`regularized_kernel` replaces K inside a ball of radius eps by a bounded
C^1 blend used to guard point-vortex/marker interactions;
`blob_kernel` is the algebraically smoothed kernel used for the marker
cloud itself.  `cutoff` is the radial ramp that vanishes near the origin
(its gradient is radial, hence exactly orthogonal to K), and
`al_modulus` is the almost-Lipschitz modulus z (1 - ln z) that controls
velocity increments of bounded, integrable vorticity.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]

TWO_PI = 2.0 * np.pi


def perp(x: FloatArray) -> FloatArray:
    """Rotate vectors by +90 degrees: (x1, x2) -> (-x2, x1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    out[..., 0] = -x[..., 1]
    out[..., 1] = x[..., 0]
    return out


def _check_points(x) -> FloatArray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] != 2:
        raise ValueError(f"expected trailing axis of length 2, got shape {x.shape}")
    return x


def biot_savart(x: FloatArray) -> FloatArray:
    """Singular kernel K(x) = x_perp / (2 pi |x|^2).

    Raises ValueError on any zero vector; the origin is outside the domain.
    """
    x = _check_points(x)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    if np.any(r2 == 0.0):
        raise ValueError("biot_savart is undefined at the origin")
    return perp(x) / (TWO_PI * r2)[..., None]


def blob_kernel(x: FloatArray, delta: float) -> FloatArray:
    """Smoothed kernel x_perp / (2 pi (|x|^2 + delta^2)), defined everywhere.

    Vanishes at the origin, stays below 1 / (4 pi delta) in magnitude and
    agrees with K up to O(delta^2 / |x|^2) in the far field.
    """
    x = _check_points(x)
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    return perp(x) / (TWO_PI * (r2 + delta * delta))[..., None]


def regularized_kernel(x: FloatArray, eps: float) -> FloatArray:
    """Bounded C^1 kernel equal to K outside the ball of radius eps.

    Inside, K is replaced by x_perp (2 - (|x|/eps)^2) / (2 pi eps^2), which
    matches K and its radial derivative at |x| = eps, vanishes at the origin
    and is bounded by 1 / (pi eps).  The outside branch evaluates the exact
    same code path as `biot_savart`, so the two agree bitwise there.
    """
    x = _check_points(x)
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    inside = r2 < eps * eps
    out = np.empty_like(x)
    if np.any(~inside):
        out[~inside] = biot_savart(x[~inside])
    if np.any(inside):
        xi = x[inside]
        factor = (2.0 - r2[inside] / (eps * eps)) / (TWO_PI * eps * eps)
        out[inside] = perp(xi) * factor[..., None]
    return out


def cutoff(x: FloatArray, delta: float) -> tuple[FloatArray, FloatArray]:
    """Radial ramp chi_delta and its gradient.

    chi_delta is 0 on |x| <= delta/2, 1 on |x| >= delta, and a quintic
    smoothstep in 2|x|/delta - 1 in between (C^2 across the seams).  The
    gradient is purely radial, so K(x) . grad chi_delta(x) == 0 holds
    exactly, and its L1 norm over the plane is (3/2) pi delta.
    Returns (values, gradients).
    """
    x = _check_points(x)
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    r = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
    s = np.clip(2.0 * r / delta - 1.0, 0.0, 1.0)
    chi = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    dchi_ds = 30.0 * s * s * (1.0 - s) ** 2
    # radial derivative; r == 0 lies in the flat region where dchi_ds == 0
    safe_r = np.where(r == 0.0, 1.0, r)
    dchi_dr = dchi_ds * (2.0 / delta)
    grad = x * (dchi_dr / safe_r)[..., None]
    return chi, grad


def al_modulus(z: FloatArray) -> FloatArray:
    """Almost-Lipschitz modulus: z (1 - ln z) for 0 <= z < 1, else 1.

    Continuous, concave and increasing on [0, inf) with value 0 at 0; for
    every p >= 1 it satisfies al_modulus(t) <= p t^(1 - 1/p).
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr < 0.0):
        raise ValueError("al_modulus is defined for nonnegative arguments")
    flat = np.atleast_1d(z_arr)
    out = np.ones_like(flat)
    small = flat < 1.0
    zs = flat[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = zs * (1.0 - np.log(zs))
    out[small] = np.where(zs == 0.0, 0.0, vals)
    if z_arr.ndim == 0:
        return float(out[0])
    return out
