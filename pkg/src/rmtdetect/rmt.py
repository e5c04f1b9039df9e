"""Spectral statistics of data windows.

The detection statistic is built in stages:

1. Standardize each channel (row) of a window to zero mean, unit population
   variance.
2. Replace the rectangular ``N x T`` window by a square ``N x N`` matrix with
   the same singular values, ``P @ W`` where ``P = (X X^H)^{1/2}`` and ``W``
   is a seeded Haar unitary.
3. Multiply ``L`` such matrices and rescale every column to variance ``1/N``.
4. Solve for the complex eigenvalues; under the null they fill the annulus
   ``(1-c)^{L/2} <= |z| <= 1`` and their mean modulus is the MSR.

Alongside, the eigenvalues of the sample covariance ``S = X X^T / T`` are
compared with the Marchenko-Pastur law through a Kolmogorov-Smirnov distance.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from rmtdetect.errors import ConfigError, DimensionError, NumericalError
from rmtdetect.ingest import DataWindow
from rmtdetect.rng import Xoshiro256

DEGENERATE_ROW_LIMIT = 0.2
NEG_EIG_TOL = 1e-10
EIG_BACKWARD_TOL = 1e-8
BANDWIDTH_FLOOR = 1e-6

# Gauss-Legendre nodes on [0, 1] for panel quadrature of the MP CDF.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_CDF_PANELS = 2048


# -- standardization -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StandardizedWindow:
    """Row-standardized window.

    Attributes:
        matrix: ``(N, T)`` array; nondegenerate rows have mean 0 and population
            variance 1, degenerate (constant) rows are all zero.
        mean: Original per-row means.
        std: Original per-row population standard deviations.
        degenerate: Boolean mask of constant rows.
        unreliable: True when more than 20% of rows were constant. Those rows
            are then removed from ``matrix``, so ``N`` (and ``c``) count only
            informative channels.
        source: The window this came from, if any.
    """

    matrix: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray
    unreliable: bool = False
    source: DataWindow | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def T(self) -> int:  # noqa: N802
        return self.matrix.shape[1]

    @property
    def c(self) -> float:
        return self.n / self.T


def row_standardize(w: DataWindow | np.ndarray) -> StandardizedWindow:
    """Center and scale each row with its population (1/T) statistics.

    A row whose spread is zero, or below float resolution of its level, is
    replaced by zeros and flagged. If more than 20% of rows are flagged the
    window is marked unreliable and the flagged rows are dropped (unless that
    would leave none).
    """
    source = w if isinstance(w, DataWindow) else None
    x = np.asarray(w.matrix if isinstance(w, DataWindow) else w, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DimensionError(f"need an N x T matrix with T >= 2, got shape {x.shape}")
    mu = x.mean(axis=1)
    centered = x - mu[:, None]
    sd = np.sqrt(np.mean(centered * centered, axis=1))
    degen = (sd == 0.0) | (sd <= 1e-13 * np.abs(mu))
    safe = np.where(degen, 1.0, sd)
    z = centered / safe[:, None]
    z[degen] = 0.0
    unreliable = bool(degen.mean() > DEGENERATE_ROW_LIMIT)
    if unreliable and not degen.all():
        z = z[~degen]
    return StandardizedWindow(matrix=z, mean=mu, std=sd, degenerate=degen, unreliable=unreliable, source=source)


def _svd(sw: StandardizedWindow) -> tuple[np.ndarray, np.ndarray]:
    u, s, _ = np.linalg.svd(sw.matrix, full_matrices=False)
    return u, s


def covariance_eigs(sw: StandardizedWindow) -> np.ndarray:
    """Eigenvalues of ``S = X X^T / T`` in descending order.

    Computed from the singular values of ``X`` (``lambda = s^2 / T``), so they
    are nonnegative by construction; the symmetric solver is used only as a
    cross-check of tiny negative round-off in tests.
    """
    _, s = _svd(sw)
    ev = (s * s) / sw.T
    return np.sort(ev)[::-1]


# -- Marchenko-Pastur law -----------------------------------------------------------


@dataclass(frozen=True)
class MpModel:
    """Marchenko-Pastur law for ratio ``c = N/T`` and entry variance ``sigma2``."""

    c: float
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.c <= 1.0):
            raise ConfigError(f"MP ratio c must lie in (0, 1], got {self.c}")
        if not self.sigma2 > 0.0:
            raise ConfigError(f"MP variance must be positive, got {self.sigma2}")

    @property
    def a(self) -> float:
        return self.sigma2 * (1.0 - math.sqrt(self.c)) ** 2

    @property
    def b(self) -> float:
        return self.sigma2 * (1.0 + math.sqrt(self.c)) ** 2

    @classmethod
    def for_window(cls, sw: StandardizedWindow) -> MpModel:
        return cls(c=sw.c, sigma2=1.0)


def mp_pdf(m: MpModel, x: float | np.ndarray) -> float | np.ndarray:
    """MP density; zero outside ``[a, b]`` and exactly zero at both edges."""
    xa = np.asarray(x, dtype=np.float64)
    a, b = m.a, m.b
    inside = (xa > a) & (xa < b)
    xs = np.where(inside, xa, 1.0)
    val = np.sqrt(np.maximum((b - xs) * (xs - a), 0.0)) / (2.0 * math.pi * xs * m.c * m.sigma2)
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def _mp_theta_integrand(c: float, sigma2: float, theta: np.ndarray) -> np.ndarray:
    # x = mid - half*cos(theta) maps [0, pi] onto [a, b]; the square root
    # becomes half*sin(theta) and dx = half*sin(theta) dtheta.
    a = sigma2 * (1.0 - math.sqrt(c)) ** 2
    b = sigma2 * (1.0 + math.sqrt(c)) ** 2
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    st = np.sin(theta)
    if a == 0.0:
        # x = half*(1 - cos): sin^2/(1 - cos) = 1 + cos, finite at theta = 0
        return half * (1.0 + np.cos(theta)) / (2.0 * math.pi * c * sigma2)
    x = mid - half * np.cos(theta)
    return half * half * st * st / (2.0 * math.pi * c * sigma2 * x)


@lru_cache(maxsize=64)
def _mp_cdf_table(c: float, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, math.pi, _CDF_PANELS + 1)
    width = edges[1] - edges[0]
    nodes = edges[:-1, None] + width * _GL_X[None, :]
    panel = width * (_mp_theta_integrand(c, sigma2, nodes) @ _GL_W)
    cum = np.concatenate(([0.0], np.cumsum(panel)))
    return edges, cum


def mp_cdf(m: MpModel, x: float | np.ndarray) -> float | np.ndarray:
    """MP distribution function by numerical integration of :func:`mp_pdf`.

    The integral is taken in the angle variable ``x = mid - half*cos(theta)``,
    which removes the square-root edge singularities (and the ``1/x`` one when
    ``c = 1``). Panel sums are cached per model; a query adds a Gauss-Legendre
    integral over its partial panel.
    """
    xa = np.asarray(x, dtype=np.float64)
    a, b = m.a, m.b
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    edges, cum = _mp_cdf_table(float(m.c), float(m.sigma2))
    theta = np.arccos(np.clip((mid - xa) / half, -1.0, 1.0))
    width = edges[1] - edges[0]
    j = np.minimum((theta / width).astype(np.int64), _CDF_PANELS - 1)
    lo = edges[j]
    span = theta - lo
    nodes = lo[..., None] + span[..., None] * _GL_X
    part = span * (_mp_theta_integrand(m.c, m.sigma2, nodes) @ _GL_W)
    out = np.clip(cum[j] + part, 0.0, 1.0)
    out = np.where(xa <= a, 0.0, np.where(xa >= b, 1.0, out))
    return float(out) if out.ndim == 0 else out


def ks_distance(sample: np.ndarray, cdf_values_sorted: np.ndarray) -> float:
    """Two-sided KS distance given a sorted sample's model CDF values."""
    n = cdf_values_sorted.shape[0]
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf_values_sorted)
    d_minus = np.max(cdf_values_sorted - (i - 1) / n)
    return float(min(max(d_plus, d_minus, 0.0), 1.0))


def mp_fit_statistic(eigs: Sequence[float] | np.ndarray, m: MpModel) -> float:
    """KS distance between the eigenvalue ECDF and the MP CDF (0 = perfect fit)."""
    e = np.sort(np.asarray(eigs, dtype=np.float64))
    if e.size == 0:
        raise ConfigError("mp_fit_statistic needs at least one eigenvalue")
    return ks_distance(e, np.asarray(mp_cdf(m, e)))


# -- kernel density ----------------------------------------------------------------------

KERNELS = ("gaussian", "epanechnikov")


@dataclass(frozen=True, eq=False)
class KdeEstimate:
    eigenvalues: np.ndarray
    bandwidth: float
    kernel: str = "gaussian"

    def __post_init__(self) -> None:
        ev = np.asarray(self.eigenvalues, dtype=np.float64).ravel()
        if ev.size < 1:
            raise ConfigError("KDE needs at least one point")
        if not self.bandwidth > 0.0:
            raise ConfigError(f"KDE bandwidth must be positive, got {self.bandwidth}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        object.__setattr__(self, "eigenvalues", ev)

    @classmethod
    def silverman(cls, eigs: Sequence[float] | np.ndarray, kernel: str = "gaussian") -> KdeEstimate:
        return cls(np.asarray(eigs, dtype=np.float64), silverman_bandwidth(eigs), kernel)


def kde_pdf(k: KdeEstimate, x: float | np.ndarray) -> float | np.ndarray:
    """``(1/(n h)) sum K((x - lambda_i)/h)``, vectorized over ``x``."""
    xa = np.asarray(x, dtype=np.float64)
    u = (xa[..., None] - k.eigenvalues) / k.bandwidth
    if k.kernel == "gaussian":
        kern = np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    else:
        kern = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    out = kern.sum(axis=-1) / (k.eigenvalues.size * k.bandwidth)
    return float(out) if out.ndim == 0 else out


def _hinges(x: np.ndarray) -> tuple[float, float]:
    # Tukey hinges: medians of the lower and upper halves (odd n drops the median).
    s = np.sort(x)
    h = s.size // 2
    return float(np.median(s[:h])), float(np.median(s[s.size - h :]))


def silverman_bandwidth(eigs: Sequence[float] | np.ndarray) -> float:
    """Silverman's rule ``0.9 min(sd, IQR/1.34) n^(-1/5)``, floored at 1e-6.

    ``sd`` is the sample (n-1) standard deviation and the IQR is the distance
    between Tukey's hinges.
    """
    x = np.asarray(eigs, dtype=np.float64).ravel()
    if x.size < 2:
        raise ConfigError("Silverman bandwidth needs at least two points")
    sd = float(np.std(x, ddof=1))
    q1, q3 = _hinges(x)
    spread = min(sd, (q3 - q1) / 1.34)
    if spread <= 0.0:
        # all-equal data, or a zero IQR with nonzero sd: fall back to sd
        spread = sd
    return max(0.9 * spread * x.size ** (-0.2), BANDWIDTH_FLOOR)


# -- ring law pipeline ----------------------------------------------------------------------


def haar_unitary(n: int, seed: int) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary from a seeded complex Ginibre draw.

    QR of the Ginibre matrix, with each column of ``Q`` multiplied by the phase
    of the matching diagonal entry of ``R`` so the result is exactly Haar.
    """
    g = Xoshiro256(seed).complex_normal((n, n))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * ph[None, :]


def singular_value_equivalent(sw: StandardizedWindow, seed: int) -> np.ndarray:
    """Square ``N x N`` matrix ``P W`` with the singular values of ``sw.matrix``.

    ``P = U diag(s) U^H`` is the PSD square root of ``X X^H`` and ``W`` a Haar
    unitary drawn from ``seed``.
    """
    if sw.n > sw.T:
        raise DimensionError(f"singular value equivalent needs N <= T, got N={sw.n}, T={sw.T}")
    u, s = _svd(sw)
    p = (u * s) @ u.conj().T
    return p @ haar_unitary(sw.n, seed)


def ring_rescale(zt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each column to population variance ``1/N``.

    The variance is ``mean |z - mean(z)|^2`` over the column; columns are not
    recentered. Columns with zero spread are returned unchanged and flagged.

    Returns:
        ``(Z, degenerate_columns)``.
    """
    zt = np.asarray(zt)
    n = zt.shape[0]
    dev = zt - zt.mean(axis=0, keepdims=True)
    sd = np.sqrt(np.mean((dev * dev.conj()).real, axis=0))
    degen = sd == 0.0
    scale = np.where(degen, 1.0, 1.0 / (math.sqrt(n) * np.where(degen, 1.0, sd)))
    return zt * scale[None, :], degen


@dataclass(frozen=True, eq=False)
class ProductChain:
    """Product of ``L`` square factors and its column-rescaled form."""

    L: int  # noqa: N815
    ztilde: np.ndarray
    z: np.ndarray
    degenerate_columns: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]


def product_chain(sves: Sequence[np.ndarray]) -> ProductChain:
    """Left-to-right product of the factors, then :func:`ring_rescale`."""
    if len(sves) < 1:
        raise ConfigError("product chain needs at least one factor")
    first = np.asarray(sves[0])
    if first.ndim != 2 or first.shape[0] != first.shape[1]:
        raise DimensionError(f"factor 0 must be square, got shape {first.shape}")
    zt = first.astype(np.complex128, copy=True)
    for i, f in enumerate(sves[1:], start=1):
        f = np.asarray(f)
        if f.shape != first.shape:
            raise DimensionError(f"factor {i} has shape {f.shape}, expected {first.shape}")
        zt = zt @ f
    z, degen = ring_rescale(zt)
    return ProductChain(L=len(sves), ztilde=zt, z=z, degenerate_columns=degen)


def inner_radius(c: float, L: int = 1) -> float:  # noqa: N803
    return (1.0 - c) ** (L / 2.0)


@dataclass(frozen=True, eq=False)
class RingSpectrum:
    eigenvalues: np.ndarray
    c: float
    L: int  # noqa: N815
    r_in: float
    r_out: float = 1.0

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def _eig_checked(z: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(z)):
        raise NumericalError("matrix has non-finite entries; cannot solve for eigenvalues")
    try:
        w, v = np.linalg.eig(z)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge ({exc}); condition number {np.linalg.cond(z):.3e}") from exc
    norm = np.linalg.norm(z, 2)
    if norm == 0.0:
        return w
    resid = np.linalg.norm(z @ v - v * w[None, :], axis=0) / np.maximum(np.linalg.norm(v, axis=0), 1e-300)
    worst = float(resid.max())
    if worst > EIG_BACKWARD_TOL * norm:
        raise NumericalError(
            f"eigenpair backward error {worst:.3e} exceeds {EIG_BACKWARD_TOL:g} * ||Z|| = {EIG_BACKWARD_TOL * norm:.3e}; "
            f"condition number {np.linalg.cond(z):.3e}"
        )
    return w


def ring_spectrum(pc: ProductChain, c: float) -> RingSpectrum:
    """Complex eigenvalues of ``pc.z`` with the annulus radii for ``(c, L)``.

    Raises:
        NumericalError: Eigensolver failure or excessive backward error.
    """
    ev = _eig_checked(pc.z)
    return RingSpectrum(eigenvalues=ev, c=c, L=pc.L, r_in=inner_radius(c, pc.L))


def ring_pdf(c: float, L: int, r: float | np.ndarray) -> float | np.ndarray:  # noqa: N803
    """Radial-modulus density of the ring law, ``r^(2/L - 2) / (pi c L)``.

    This is a density on the complex plane, so its mass is
    ``integral of ring_pdf * 2 pi r dr`` over ``[(1-c)^(L/2), 1]``, which is 1.
    """
    if not (0.0 < c <= 1.0):
        raise ConfigError(f"ring ratio c must lie in (0, 1], got {c}")
    if L < 1:
        raise ConfigError(f"product length L must be >= 1, got {L}")
    ra = np.asarray(r, dtype=np.float64)
    lo = inner_radius(c, L)
    inside = (ra >= lo) & (ra <= 1.0)
    expo = 2.0 / L - 2.0
    with np.errstate(divide="ignore"):
        val = np.where(ra > 0, np.power(np.where(ra > 0, ra, 1.0), expo), np.inf if expo < 0 else 1.0)
    out = np.where(inside, val / (math.pi * c * L), 0.0)
    return float(out) if out.ndim == 0 else out


def ring_mean_radius(c: float, L: int = 1) -> float:  # noqa: N803
    """Mean eigenvalue modulus under the ring law: ``2(1 - (1-c)^((L+2)/2)) / (c (L+2))``."""
    return 2.0 * (1.0 - (1.0 - c) ** ((L + 2) / 2.0)) / (c * (L + 2))


def msr(rs: RingSpectrum | np.ndarray) -> float:
    """Mean spectral radius: the mean modulus of the eigenvalues."""
    ev = rs.eigenvalues if isinstance(rs, RingSpectrum) else np.asarray(rs)
    if ev.size == 0:
        raise ConfigError("msr needs at least one eigenvalue")
    return float(np.mean(np.abs(ev)))
