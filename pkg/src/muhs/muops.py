"""The mu-Helmholtz operator (mean minus second derivative) and its inverse.

The operator is diagonal in Fourier space: it fixes the mean and multiplies
mode k by (2 pi k)^2.  Its inverse therefore has a one-line spectral form,
but it also has a closed integral form built from nested antiderivatives and
the fixed polynomial x^2/2 - x/2 + 13/12.  Both are implemented here: the
spectral route is the production path, the quadrature route exists so the two
can cross-check each other.  The constant 13/12 is exactly the kind of thing
that gets mistranscribed, and the cross-check pins it.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .field import (
    PeriodicField,
    derivative,
    grid,
    irfft_samples,
    mean,
    rfft_coeffs,
    rfft_wavenumbers,
)


def helmholtz_symbol(n: int) -> np.ndarray:
    """Fourier multiplier of the operator: 1 at k=0, (2 pi k)^2 otherwise."""
    sym = (2 * np.pi * rfft_wavenumbers(n)).astype(float) ** 2
    sym[0] = 1.0
    return sym


def grad_inverse_symbol(n: int) -> np.ndarray:
    """Fourier multiplier of d/dx composed with the inverse: i/(2 pi k)."""
    sym = np.zeros(n // 2 + 1, dtype=complex)
    k = rfft_wavenumbers(n)
    sym[1:] = 1j / (2 * np.pi * k[1:])
    return sym


def apply_helmholtz(w: PeriodicField) -> PeriodicField:
    """mean(w) - w_xx."""
    c = rfft_coeffs(w.samples) * helmholtz_symbol(w.n)
    return PeriodicField(irfft_samples(c, w.n))


def helmholtz_solve_spectral(w: PeriodicField) -> PeriodicField:
    """Invert the operator mode by mode (production path)."""
    c = rfft_coeffs(w.samples) / helmholtz_symbol(w.n)
    return PeriodicField(irfft_samples(c, w.n))


def _cumulative(samples: np.ndarray, h: float) -> np.ndarray:
    """Cumulative trapezoid over the closed grid x_0..x_n (n+1 values)."""
    closed = np.concatenate([samples, samples[:1]])
    return cumulative_trapezoid(closed, dx=h, initial=0.0)


def helmholtz_solve_quadrature(w: PeriodicField) -> PeriodicField:
    """Invert the operator through its closed integral form.

    v(x) = (x^2/2 - x/2 + 13/12) mean(w) + (x - 1/2) I2(1) - I2(x) + I3(1)

    with I1(y) the antiderivative of w, I2 the antiderivative of I1 and
    I3(1) the full-period integral of I2, all computed by nested cumulative
    trapezoid sums on the sample grid.  Accuracy is O(n^-2); this is an
    oracle for the spectral inverse, not a production path.
    """
    n = w.n
    h = 1.0 / n
    i1 = _cumulative(w.samples, h)
    i2 = cumulative_trapezoid(i1, dx=h, initial=0.0)
    i3_full = cumulative_trapezoid(i2, dx=h, initial=0.0)[-1]
    x = np.arange(n + 1) / n
    mu = mean(w)
    v = (0.5 * x**2 - 0.5 * x + 13.0 / 12.0) * mu + (x - 0.5) * i2[-1] - i2 + i3_full
    return PeriodicField(v[:n])


def dx_helmholtz_inverse(w: PeriodicField) -> PeriodicField:
    """d/dx of the inverse, computed spectrally (mode k maps by i/(2 pi k))."""
    c = rfft_coeffs(w.samples) * grad_inverse_symbol(w.n)
    return PeriodicField(irfft_samples(c, w.n))


def dx_helmholtz_inverse_quadrature(w: PeriodicField) -> PeriodicField:
    """d/dx of the inverse through its closed integral form (oracle).

    d/dx A^{-1} w = (x - 1/2) mean(w) - I1(x) + I2(1), same trapezoid
    convention as :func:`helmholtz_solve_quadrature`.
    """
    n = w.n
    h = 1.0 / n
    i1 = _cumulative(w.samples, h)
    i2_full = cumulative_trapezoid(i1, dx=h, initial=0.0)[-1]
    x = np.arange(n + 1) / n
    v = (x - 0.5) * mean(w) - i1 + i2_full
    return PeriodicField(v[:n])


def inverse_second_derivative_residual(w: PeriodicField) -> float:
    """Max-norm residual of: inverse applied to w_xx equals mean(w) - w.

    Contract: at most 1e-10 for band-limited fields.
    """
    lhs = helmholtz_solve_spectral(derivative(w, 2))
    rhs = mean(w) - w.samples
    return float(np.max(np.abs(lhs.samples - rhs)))
