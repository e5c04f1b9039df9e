"""Windowed detectors: MSR time series, robust event flagging, PCA baseline."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from rmtdetect import _kernels
from rmtdetect.errors import ConfigError, DimensionError
from rmtdetect.ingest import DataWindow, SampleFrame, build_windows, frames_to_matrix, select_channels
from rmtdetect.rmt import (
    MpModel,
    covariance_eigs,
    inner_radius,
    mp_fit_statistic,
    msr,
    product_chain,
    ring_spectrum,
    row_standardize,
    singular_value_equivalent,
)

# Scales the MAD to a standard-deviation estimate under normal noise, so the
# threshold k reads in robust z units.
MAD_TO_SIGMA = 1.482602218505602
SPREAD_FLOOR = 1e-6


@dataclass(frozen=True)
class MsrPoint:
    """Detector output for one window.

    ``t`` is the sample index of the window's last frame and ``t_first`` of its
    first; ``index`` is the window number.
    """

    index: int
    t: int
    t_first: int
    msr: float
    r_in: float
    fit: float
    degenerate: bool
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EventFlag:
    """A run of consecutive anomalous windows (inclusive window indices)."""

    start: int
    end: int
    t_start: int
    t_end: int
    peak_deviation: float
    direction: str

    def to_dict(self) -> dict:
        return asdict(self)


def _restrict(w: DataWindow, keep: Sequence[str]) -> DataWindow:
    if tuple(keep) == w.channels:
        return w
    pos = [w.channels.index(c) for c in keep]
    return DataWindow(
        matrix=w.matrix[pos],
        channels=tuple(keep),
        start=w.start,
        index=w.index,
        t_first=w.t_first,
        t_last=w.t_last,
        dropped=w.dropped,
    )


def window_point(chain: Sequence[DataWindow], seed: int) -> MsrPoint:
    """Run the full spectral pipeline on a chain of windows ending at ``chain[-1]``.

    With more than one window the channels are restricted to those present in
    every window. Factor ``i`` uses Haar seed ``seed ^ chain[i].index``.
    """
    last = chain[-1]
    common = [c for c in last.channels if all(c in w.channels for w in chain)]
    if not common:
        return MsrPoint(last.index, last.t_last, last.t_first, 0.0, 0.0, 1.0, True, 0)
    chain = [_restrict(w, common) for w in chain]
    sws = [row_standardize(w) for w in chain]
    sw_last = sws[-1]
    c = sw_last.c
    eigs = covariance_eigs(sw_last)
    fit = mp_fit_statistic(eigs, MpModel(c=c))
    sves = [singular_value_equivalent(sw, seed ^ w.index) for sw, w in zip(sws, chain)]
    if len({s.shape for s in sves}) > 1:
        # unreliable windows drop constant rows, which can break the shared N
        return MsrPoint(last.index, last.t_last, last.t_first, 0.0, inner_radius(c, len(chain)), fit, True, sw_last.n)
    pc = product_chain(sves)
    rs = ring_spectrum(pc, c)
    degenerate = any(sw.unreliable for sw in sws) or bool(pc.degenerate_columns.any())
    return MsrPoint(
        index=last.index,
        t=last.t_last,
        t_first=last.t_first,
        msr=msr(rs),
        r_in=rs.r_in,
        fit=fit,
        degenerate=degenerate,
        n=sw_last.n,
    )


def msr_series_from_windows(
    windows: Sequence[DataWindow], L: int = 1, seed: int = 0, workers: int = 1  # noqa: N803
) -> list[MsrPoint]:
    """MSR points for each window (for ``L > 1``, each run of ``L`` windows).

    The first ``L - 1`` windows only serve as factors, so the series has
    ``len(windows) - L + 1`` points.
    """
    if L < 1:
        raise ConfigError(f"product length L must be >= 1, got {L}")
    chains = [windows[i - L + 1 : i + 1] for i in range(L - 1, len(windows))]
    if workers > 1 and len(chains) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda ch: window_point(ch, seed), chains))
    return [window_point(ch, seed) for ch in chains]


def msr_series(
    frames: Sequence[SampleFrame],
    T: int = 10,  # noqa: N803
    stride: int = 1,
    channels: str | Iterable[str] | None = None,
    L: int = 1,  # noqa: N803
    seed: int = 0,
    workers: int = 1,
) -> list[MsrPoint]:
    """Slide over ``frames`` and compute one :class:`MsrPoint` per window.

    Raises:
        DimensionError: More selected channels than ``T``.
    """
    windows = build_windows(frames, channels, T, stride)
    if not windows:
        raise ConfigError(f"need at least T={T} frames for one window, got {len(frames)}")
    return msr_series_from_windows(windows, L=L, seed=seed, workers=workers)


def robust_flags(
    values: np.ndarray,
    usable: np.ndarray | None = None,
    k: float = 5.0,
    B: int = 60,  # noqa: N803
    mad_scale: float = MAD_TO_SIGMA,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trailing median/MAD outlier mask (see :func:`flag_events`).

    Returns:
        ``(flags, center, spread)``; ``center``/``spread`` are NaN for points
        that were not tested.
    """
    x = np.ascontiguousarray(values, dtype=np.float64)
    n = x.shape[0]
    use = np.ones(n, dtype=np.uint8) if usable is None else np.ascontiguousarray(usable, dtype=np.uint8)
    flags = np.zeros(n, dtype=np.uint8)
    center = np.empty(n)
    spread = np.empty(n)
    _kernels.impl.robust_flags(x, use, float(k), int(B), float(mad_scale), SPREAD_FLOOR, flags, center, spread)
    return flags.astype(bool), center, spread


def flag_events(
    series: Sequence[MsrPoint],
    k: float = 5.0,
    B: int = 60,  # noqa: N803
    mad_scale: float = MAD_TO_SIGMA,
) -> list[EventFlag]:
    """Flag MSR excursions with a trailing robust z-score.

    For each point after a warm-up of ``B`` usable points, the baseline is the
    median of the last ``B`` usable, unflagged points and the spread is their
    MAD times ``mad_scale`` (floored at 1e-6). The point is anomalous when
    ``|msr - median| > k * spread``; anomalous points never enter later
    baselines. Degenerate points are skipped entirely. Runs of consecutive
    anomalous points become one :class:`EventFlag`.

    Raises:
        ConfigError: ``B < 10`` or a series shorter than ``B``.
    """
    if B < 10:
        raise ConfigError(f"baseline length B must be >= 10, got {B}")
    if len(series) < B:
        raise ConfigError(f"series has {len(series)} points, fewer than baseline length B={B}")
    if not k > 0:
        raise ConfigError(f"threshold k must be positive, got {k}")
    vals = np.array([p.msr for p in series], dtype=np.float64)
    usable = np.array([not p.degenerate for p in series])
    flags, center, spread = robust_flags(vals, usable, k, B, mad_scale)
    z = np.where(flags, (vals - center) / spread, 0.0)
    events: list[EventFlag] = []
    i = 0
    n = len(series)
    while i < n:
        if not flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and flags[j + 1]:
            j += 1
        seg = z[i : j + 1]
        peak = int(np.argmax(np.abs(seg)))
        events.append(
            EventFlag(
                start=series[i].index,
                end=series[j].index,
                t_start=series[i].t_first,
                t_end=series[j].t,
                peak_deviation=float(abs(seg[peak])),
                direction="drop" if seg[peak] < 0 else "rise",
            )
        )
        i = j + 1
    return events


# -- PCA baseline -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Principal subspace of ``C_Y = Y Y^T`` for one ``p x T`` window.

    Attributes:
        eigenvalues: All ``p`` eigenvalues of ``C_Y``, descending.
        components: ``(p, m)`` orthonormal principal components.
        m: Number of retained components.
        window: The window matrix the model was fit on.
    """

    eigenvalues: np.ndarray
    components: np.ndarray
    m: int
    window: np.ndarray

    @property
    def p(self) -> int:
        return self.components.shape[0]


def choose_m(eigenvalues: np.ndarray, energy: float = 0.95) -> int:
    """Smallest ``m`` whose top eigenvalues hold at least ``energy`` of the total."""
    ev = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total = ev.sum()
    if total <= 0:
        return 1
    frac = np.cumsum(ev) / total
    return int(np.searchsorted(frac, energy - 1e-12) + 1)


def pca_fit(Y: DataWindow | np.ndarray, m: int | str = "auto") -> PcaModel:  # noqa: N803
    """Eigendecompose ``Y Y^T`` and keep the top ``m`` eigenvectors.

    ``Y`` is not centered. ``m="auto"`` picks the smallest ``m`` capturing 95%
    of the eigenvalue mass.

    Raises:
        ConfigError: ``m`` outside ``[1, min(p, T)]``.
    """
    y = np.asarray(Y.matrix if isinstance(Y, DataWindow) else Y, dtype=np.float64)
    if y.ndim != 2:
        raise DimensionError(f"PCA window must be 2-D, got shape {y.shape}")
    p, t = y.shape
    cy = y @ y.T
    w, v = np.linalg.eigh(cy)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    if m == "auto":
        mm = min(choose_m(w), min(p, t))
    else:
        try:
            mm = int(m)
        except (TypeError, ValueError):
            raise ConfigError(f"m must be an integer or 'auto', got {m!r}") from None
        if not 1 <= mm <= min(p, t):
            raise ConfigError(f"m={mm} outside [1, min(p, T)] = [1, {min(p, t)}]")
    return PcaModel(eigenvalues=w, components=v[:, :mm].copy(), m=mm, window=y)


def pca_score(model: PcaModel, y_next: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Projection length ``||P^T y||`` and residual length ``||y - P P^T y||``."""
    y = np.asarray(y_next, dtype=np.float64).ravel()
    if y.shape[0] != model.p:
        raise DimensionError(f"vector has length {y.shape[0]}, model expects p={model.p}")
    coef = model.components.T @ y
    resid = y - model.components @ coef
    return float(np.linalg.norm(coef)), float(np.linalg.norm(resid))


@dataclass(frozen=True)
class PcaPoint:
    """PCA score of frame ``t`` against the window of the ``T`` frames before it."""

    index: int
    t: int
    projection: float
    residual: float
    m: int

    def to_dict(self) -> dict:
        return asdict(self)


def pca_series(
    frames: Sequence[SampleFrame],
    T: int = 10,  # noqa: N803
    stride: int = 1,
    m: int | str = "auto",
    channels: str | Iterable[str] | None = None,
) -> list[PcaPoint]:
    """Fit on frames ``[i, i+T)`` and score frame ``i+T``, for ``i = 0, stride, ...``.

    Channels with a missing value in the window or the scored frame are left
    out of that step.
    """
    if T < 1 or stride < 1:
        raise ConfigError("T and stride must be >= 1")
    if not frames:
        return []
    rows = select_channels(frames[0].channels, channels)
    data = frames_to_matrix(frames)[rows]
    f = data.shape[1]
    out: list[PcaPoint] = []
    for k, i in enumerate(range(0, f - T, stride)):
        block = data[:, i : i + T + 1]
        ok = ~np.isnan(block).any(axis=1)
        if not ok.any():
            out.append(PcaPoint(k, frames[i + T].t, math.nan, math.nan, 0))
            continue
        if ok.all():
            model = pca_fit(block[:, :T], m)
            y = block[:, T]
        else:
            sub = block[ok]
            mm = m if m == "auto" else min(int(m), sub.shape[0], T)
            model = pca_fit(sub[:, :T], mm)
            y = sub[:, T]
        proj, res = pca_score(model, y)
        out.append(PcaPoint(k, frames[i + T].t, proj, res, model.m))
    return out


def pca_peak(points: Sequence[PcaPoint]) -> PcaPoint:
    """Point with the largest residual (first on ties)."""
    res = np.array([p.residual for p in points], dtype=np.float64)
    return points[int(np.nanargmax(res))]
