"""Periodic real fields on the unit circle, with spectral calculus.

Everything in this package lives on the torus R/Z sampled at the uniform
points x_j = j/n.  The Fourier convention is

    w(x) = sum_k  w_hat_k  exp(2 pi i k x),

so mode k differentiates to a factor (2 pi i k) and the trapezoid rule over
one period reduces to the plain sample average.  Grid sizes are powers of two
so the transforms stay cheap inside the time-stepping kernel.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

#: refinement factor used whenever an extremum of a field is needed: the
#: trigonometric interpolant is resampled on a grid this many times finer,
#: which removes most of the sampling bias near sharp extrema.
REFINE_FACTOR = 4

_SQRT_EPS = 1e-10


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def grid(n: int) -> np.ndarray:
    """Sample points x_j = j/n of the uniform grid on [0, 1)."""
    return np.arange(n) / float(n)


# ---------------------------------------------------------------------------
# raw spectral helpers (operate on half-spectra in numpy rfft layout,
# normalized so that coef[k] is the coefficient of exp(2 pi i k x))
# ---------------------------------------------------------------------------

def rfft_coeffs(samples: np.ndarray) -> np.ndarray:
    """Normalized half-spectrum of a real sample vector (k = 0 .. n/2)."""
    return np.fft.rfft(samples) / samples.size


def irfft_samples(coef: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`rfft_coeffs`."""
    return np.fft.irfft(coef * n, n)


def rfft_wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers of the rfft layout: 0, 1, ..., n/2."""
    return np.arange(n // 2 + 1)


def derivative_symbol(n: int, order: int) -> np.ndarray:
    """Fourier multiplier of d^order/dx^order on the n-point grid.

    The Nyquist mode is zeroed for odd orders: it carries a pure cosine on
    the real grid, whose derivative is not representable there.
    """
    sym = (2j * np.pi * rfft_wavenumbers(n).astype(complex)) ** order
    if order % 2 == 1:
        sym[-1] = 0.0
    return sym


def dealias_mask(n: int) -> np.ndarray:
    """Boolean mask keeping modes |k| <= n//3 (the 2/3 rule)."""
    return rfft_wavenumbers(n) <= n // 3


def mode_energy(coef: np.ndarray, n: int) -> np.ndarray:
    """Per-wavenumber contribution to the L2 norm squared (mean of w^2)."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w * np.abs(coef) ** 2


def embed_coeffs(coef: np.ndarray, n: int, m: int) -> np.ndarray:
    """Embed an n-grid half-spectrum into an m-grid one (m = refinement of n).

    The coarse Nyquist coefficient stores the full cosine amplitude; once that
    mode becomes interior on the finer grid it must be split between +-n/2.
    """
    if m % n != 0 or m < n:
        raise ValueError("refinement grid must be a multiple of the source grid")
    out = np.zeros(m // 2 + 1, dtype=complex)
    out[: n // 2 + 1] = coef
    if m > n:
        out[n // 2] = 0.5 * coef[n // 2].real
    return out


def evaluate_coeffs(coefs: Sequence[np.ndarray], n: int, xs: np.ndarray) -> list[np.ndarray]:
    """Evaluate trigonometric interpolants at arbitrary points.

    All coefficient vectors share one evaluation matrix, so sampling a field
    together with its derivative costs a single complex exponential sweep.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    kpos = np.arange(1, n // 2)
    basis = np.exp((2j * np.pi) * xs[:, None] * kpos[None, :])
    nyq = np.cos(np.pi * n * xs)
    out = []
    for c in coefs:
        vals = c[0].real + 2.0 * (basis @ c[1 : n // 2]).real + c[n // 2].real * nyq
        out.append(vals)
    return out


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real function on R/Z sampled at x_j = j/n, n a power of two >= 8."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        if arr.ndim != 1:
            raise ValueError("field samples must form a 1-d array")
        n = arr.size
        if n < 8 or not _is_pow2(n):
            raise ValueError(f"grid size must be a power of two >= 8, got {n}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def x(self) -> np.ndarray:
        return grid(self.n)

    @classmethod
    def zeros(cls, n: int) -> "PeriodicField":
        return cls(np.zeros(n))

    @classmethod
    def constant(cls, value: float, n: int) -> "PeriodicField":
        return cls(np.full(n, float(value)))

    @classmethod
    def from_function(cls, fn, n: int) -> "PeriodicField":
        return cls(np.asarray(fn(grid(n)), dtype=float))

    @classmethod
    def from_modes(cls, mean: float, modes: Iterable[tuple[int, float, float]],
                   n: int) -> "PeriodicField":
        """Synthesize mean + sum_k (cos_k cos(2 pi k x) + sin_k sin(2 pi k x))."""
        x = grid(n)
        u = np.full(n, float(mean))
        for k, ck, sk in modes:
            k = int(k)
            if not 1 <= k <= n // 2:
                raise ValueError(f"mode k={k} not representable on an n={n} grid")
            u = u + ck * np.cos(2 * np.pi * k * x) + sk * np.sin(2 * np.pi * k * x)
        return cls(u)

    def spectrum(self) -> "Spectrum":
        return Spectrum(np.fft.fft(self.samples) / self.n)

    def __add__(self, other: "PeriodicField") -> "PeriodicField":
        return PeriodicField(self.samples + other.samples)

    def __sub__(self, other: "PeriodicField") -> "PeriodicField":
        return PeriodicField(self.samples - other.samples)

    def __mul__(self, scalar: float) -> "PeriodicField":
        return PeriodicField(self.samples * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Full complex spectrum in numpy fft layout (k = 0..n/2-1, -n/2..-1).

    Coefficients are normalized: ``coefficient(0)`` equals the field mean.
    """

    coef: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coef, dtype=complex)
        if arr.ndim != 1 or not _is_pow2(arr.size) or arr.size < 8:
            raise ValueError("spectrum length must be a power of two >= 8")
        object.__setattr__(self, "coef", arr)

    @property
    def n(self) -> int:
        return self.coef.size

    def coefficient(self, k: int) -> complex:
        if not -self.n // 2 <= k < self.n // 2:
            raise ValueError(f"wavenumber {k} outside -n/2 .. n/2-1")
        return complex(self.coef[k % self.n])

    def to_field(self) -> PeriodicField:
        return PeriodicField(np.fft.ifft(self.coef * self.n).real)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def mean(f: PeriodicField) -> float:
    """Average over one period (exact trapezoid rule on the uniform grid)."""
    return float(f.samples.mean())


def derivative(f: PeriodicField, order: int) -> PeriodicField:
    """Spectral derivative of the stated order (1, 2 or 3 only)."""
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    c = rfft_coeffs(f.samples) * derivative_symbol(f.n, order)
    return PeriodicField(irfft_samples(c, f.n))


def seminorm_sq(f: PeriodicField, order: int) -> float:
    """Squared L2 norm of the order-th derivative, via the Parseval sum."""
    c = rfft_coeffs(f.samples)
    w = (2 * np.pi * rfft_wavenumbers(f.n)) ** (2 * order)
    return float(np.sum(w * mode_energy(c, f.n)))


def h1_seminorm_sq(f: PeriodicField) -> float:
    """Integral of f_x^2 over one period."""
    return seminorm_sq(f, 1)


def refined_samples(f: PeriodicField, factor: int = REFINE_FACTOR) -> np.ndarray:
    """Samples of the trigonometric interpolant on a factor-times finer grid."""
    c = rfft_coeffs(f.samples)
    m = factor * f.n
    return irfft_samples(embed_coeffs(c, f.n, m), m)


@dataclass(frozen=True)
class SharpInequalityCheck:
    """Peak of f^2 against one twelfth of the slope energy, for mean-zero f."""

    lhs: float
    rhs: float
    holds: bool


def check_sharp_inequality(f: PeriodicField) -> SharpInequalityCheck:
    """Check max f^2 <= (1/12) * integral of f_x^2 for a mean-zero field.

    The maximum is taken on the refined interpolant grid.  Fields with a
    non-negligible mean are rejected: the inequality only holds for mean-zero
    data and calling it otherwise is a bug at the call site.
    """
    mu = mean(f)
    if abs(mu) > _SQRT_EPS:
        raise ValueError(f"sharp inequality requires a mean-zero field, got mean {mu:g}")
    lhs = float(np.max(refined_samples(f) ** 2))
    rhs = h1_seminorm_sq(f) / 12.0
    return SharpInequalityCheck(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + 1e-12))


def random_band_limited(n: int, rng: np.random.Generator, max_mode: int = 8,
                        sup_norm: float = 0.25, mean_value: float = 0.0) -> PeriodicField:
    """Random smooth field with modes 1..max_mode, rescaled to a target sup norm.

    Amplitudes fall off like 1/k^2 so the field looks like typical smooth data
    rather than noise.  The rescaling pins the sup norm, which keeps the
    trapezoid-oracle error of the quadrature inverse predictable.
    """
    if max_mode > n // 3:
        raise ValueError("max_mode must stay inside the dealiased band")
    modes = []
    for k in range(1, max_mode + 1):
        ck, sk = rng.standard_normal(2) / k**2
        modes.append((k, ck, sk))
    f = PeriodicField.from_modes(0.0, modes, n)
    peak = float(np.max(np.abs(refined_samples(f))))
    if peak > 0:
        f = f * (sup_norm / peak)
    return PeriodicField(f.samples + mean_value)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def field_to_csv_text(f: PeriodicField) -> str:
    out = io.StringIO()
    out.write("x,value\n")
    for xj, vj in zip(f.x, f.samples):
        out.write(f"{_fmt(xj)},{_fmt(vj)}\n")
    return out.getvalue()


def field_from_csv_text(text: str) -> PeriodicField:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["x", "value"]:
        raise ValueError("field CSV must have header 'x,value'")
    xs, vals = [], []
    for row in reader:
        xs.append(float(row["x"]))
        vals.append(float(row["value"]))
    f = PeriodicField(np.asarray(vals))
    if not np.allclose(xs, f.x, atol=1e-12, rtol=0.0):
        raise ValueError("field CSV x column is not the uniform grid j/n")
    return f


def field_to_mode_list(f: PeriodicField, tol: float = 1e-14) -> dict:
    """Mode-list form {mean, modes: [{k, cos, sin}]} of a field.

    Modes below ``tol`` relative to the largest amplitude are dropped.
    """
    c = rfft_coeffs(f.samples)
    entries = []
    amps = []
    for k in range(1, f.n // 2 + 1):
        if k < f.n // 2:
            ck, sk = 2.0 * c[k].real, -2.0 * c[k].imag
        else:
            ck, sk = c[k].real, 0.0
        entries.append((k, ck, sk))
        amps.append(max(abs(ck), abs(sk)))
    scale = max(amps, default=0.0)
    modes = [
        {"k": k, "cos": ck, "sin": sk}
        for (k, ck, sk), a in zip(entries, amps)
        if scale > 0 and a > tol * scale
    ]
    return {"mean": mean(f), "modes": modes}


def field_from_mode_list(obj: dict, n: int) -> PeriodicField:
    if not isinstance(obj, dict) or "mean" not in obj:
        raise ValueError("mode list must be an object with 'mean' and 'modes'")
    raw = obj.get("modes", [])
    modes = []
    for entry in raw:
        try:
            modes.append((int(entry["k"]),
                          float(entry.get("cos", 0.0)),
                          float(entry.get("sin", 0.0))))
        except (TypeError, KeyError, ValueError) as exc:
            raise ValueError(f"malformed mode entry {entry!r}") from exc
    return PeriodicField.from_modes(float(obj["mean"]), modes, n)
