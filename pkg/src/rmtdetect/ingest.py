"""Frame parsing, serialization and sliding-window construction.

Two text formats are understood:

* CSV with a header ``t,<ch1>,<ch2>,...`` and one integer-indexed row per
  sample.
* JSONL whose first line is ``{"channels": [...]}`` followed by one
  ``{"t": int, "ts": str (optional), "values": [...]}`` object per line.

Missing cells (the ``na_token``, or ``null`` in JSONL) are filled from the
nearest valid sample of the same channel when the gap is at most
``gap_limit`` samples long; longer gaps stay NaN and the channel is dropped
from any window that touches them.
"""

from __future__ import annotations

import csv
import fnmatch
import io
import json
import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from rmtdetect.errors import CellError, ConfigError, DimensionError, OrderingError, ParseError

DEFAULT_NA_TOKEN = "NA"
DEFAULT_GAP_LIMIT = 5
FORMATS = ("csv", "jsonl")


class MissingDataWarning(UserWarning):
    """Raised (as a warning) when a gap is too long to fill."""


@dataclass(frozen=True)
class SampleFrame:
    """One timestamped vector of channel measurements."""

    t: int
    values: tuple[float, ...]
    channels: tuple[str, ...]
    ts: str | None = None

    def __post_init__(self) -> None:
        if len(self.values) != len(self.channels):
            raise ParseError(
                f"frame t={self.t} has {len(self.values)} values for {len(self.channels)} channels"
            )


@dataclass(frozen=True, eq=False)
class DataWindow:
    """An N x T block of consecutive frames (rows are channels).

    Attributes:
        matrix: Read-only ``(N, T)`` float array.
        channels: Channel ids for the rows.
        start: Position of the first frame in the source frame list.
        index: Window number in the sliding sequence.
        t_first: Sample index ``t`` of the first column.
        t_last: Sample index ``t`` of the last column.
        dropped: Channels removed from this window because of unfilled gaps.
    """

    matrix: np.ndarray
    channels: tuple[str, ...]
    start: int
    index: int = 0
    t_first: int = 0
    t_last: int = 0
    dropped: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError(f"window matrix must be 2-D, got shape {m.shape}")
        n, t = m.shape
        if len(self.channels) != n:
            raise DimensionError(f"{len(self.channels)} channel ids for {n} rows")
        if n < 1:
            raise DimensionError("window has no channels")
        if n > t:
            raise DimensionError(
                f"window has N={n} channels but only T={t} samples; the ratio c=N/T must not exceed 1"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def T(self) -> int:  # noqa: N802
        return self.matrix.shape[1]

    @property
    def c(self) -> float:
        return self.n / self.T


# -- parsing -----------------------------------------------------------------


def _to_float(cell: object, na_token: str, line: int, column: str) -> float:
    if cell is None:
        return math.nan
    if isinstance(cell, str):
        s = cell.strip()
        if s == na_token:
            return math.nan
        try:
            v = float(s)
        except ValueError:
            raise CellError(f"non-numeric cell {cell!r} in column {column!r}", line) from None
    elif isinstance(cell, bool):
        raise CellError(f"non-numeric cell {cell!r} in column {column!r}", line)
    elif isinstance(cell, (int, float)):
        v = float(cell)
    else:
        raise CellError(f"non-numeric cell {cell!r} in column {column!r}", line)
    if math.isnan(v):
        raise CellError(f"NaN literal in column {column!r}; use the missing-value token", line)
    return v


def _to_index(cell: object, line: int) -> int:
    if isinstance(cell, bool):
        raise CellError(f"sample index must be an integer, got {cell!r}", line)
    if isinstance(cell, int):
        return cell
    try:
        return int(str(cell).strip())
    except ValueError:
        raise CellError(f"sample index must be an integer, got {cell!r}", line) from None


def _check_order(ts: Sequence[int], lines: Sequence[int]) -> None:
    if len(ts) < 2:
        return
    step = ts[1] - ts[0]
    for i in range(1, len(ts)):
        d = ts[i] - ts[i - 1]
        if d <= 0:
            raise OrderingError(f"sample index t={ts[i]} does not increase (previous t={ts[i - 1]})", lines[i])
        if d != step:
            raise OrderingError(f"sample stride changes from {step} to {d} at t={ts[i]}", lines[i])


def fill_gaps(values: np.ndarray, gap_limit: int = DEFAULT_GAP_LIMIT, channels: Sequence[str] | None = None) -> np.ndarray:
    """Impute NaN runs of length <= ``gap_limit`` from the nearest valid sample.

    ``values`` is ``(F, N)``: frames by channels. Each missing cell takes the
    value of the closest non-missing sample in time within its own channel;
    equidistant neighbors resolve to the earlier one. Runs longer than the
    limit are left as NaN and reported with a :class:`MissingDataWarning`.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    f, n = out.shape
    for j in range(n):
        col = out[:, j]
        miss = np.isnan(col)
        if not miss.any():
            continue
        i = 0
        while i < f:
            if not miss[i]:
                i += 1
                continue
            s = i
            while i < f and miss[i]:
                i += 1
            e = i - 1
            name = channels[j] if channels is not None else str(j)
            if e - s + 1 > gap_limit:
                warnings.warn(
                    f"channel {name!r}: gap of {e - s + 1} samples at frames {s}..{e} exceeds "
                    f"gap limit {gap_limit}; channel dropped from affected windows",
                    MissingDataWarning,
                    stacklevel=2,
                )
                continue
            prev = s - 1 if s > 0 else None
            nxt = e + 1 if e + 1 < f else None
            if prev is None and nxt is None:
                continue
            for k in range(s, e + 1):
                if nxt is None or (prev is not None and k - prev <= nxt - k):
                    col[k] = col[prev]
                else:
                    col[k] = col[nxt]
    return out


def _frames_from_rows(
    ts: list[int],
    rows: list[list[float]],
    channels: tuple[str, ...],
    stamps: list[str | None],
    lines: list[int],
    gap_limit: int,
) -> list[SampleFrame]:
    _check_order(ts, lines)
    if rows:
        arr = fill_gaps(np.array(rows, dtype=np.float64).reshape(len(rows), len(channels)), gap_limit, channels)
    else:
        arr = np.empty((0, len(channels)))
    return [
        SampleFrame(t=t, values=tuple(float(v) for v in arr[i]), channels=channels, ts=stamps[i])
        for i, t in enumerate(ts)
    ]


def _parse_csv(text: str, na_token: str, gap_limit: int) -> list[SampleFrame]:
    reader = csv.reader(io.StringIO(text))
    header: list[str] | None = None
    ts: list[int] = []
    rows: list[list[float]] = []
    lines: list[int] = []
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if not header or header[0] != "t":
                raise ParseError("CSV header must start with 't'", lineno)
            if len(header) < 2:
                raise ParseError("CSV header names no channels", lineno)
            if len(set(header[1:])) != len(header) - 1:
                raise ParseError("duplicate channel id in CSV header", lineno)
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        ts.append(_to_index(row[0], lineno))
        rows.append([_to_float(c, na_token, lineno, header[k + 1]) for k, c in enumerate(row[1:])])
        lines.append(lineno)
    if header is None:
        raise ParseError("empty CSV input (no header)", 1)
    return _frames_from_rows(ts, rows, tuple(header[1:]), [None] * len(ts), lines, gap_limit)


def _parse_jsonl(text: str, na_token: str, gap_limit: int) -> list[SampleFrame]:
    channels: tuple[str, ...] | None = None
    ts: list[int] = []
    rows: list[list[float]] = []
    stamps: list[str | None] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("each JSONL line must be an object", lineno)
        if channels is None:
            ch = obj.get("channels")
            if not isinstance(ch, list) or not ch or not all(isinstance(c, str) for c in ch):
                raise ParseError('first JSONL line must be {"channels": [<id>, ...]}', lineno)
            if len(set(ch)) != len(ch):
                raise ParseError("duplicate channel id in JSONL metadata", lineno)
            channels = tuple(ch)
            continue
        if "t" not in obj or "values" not in obj:
            raise ParseError("record needs fields 't' and 'values'", lineno)
        vals = obj["values"]
        if not isinstance(vals, list) or len(vals) != len(channels):
            got = len(vals) if isinstance(vals, list) else type(vals).__name__
            raise ParseError(f"expected {len(channels)} values, got {got}", lineno)
        ts.append(_to_index(obj["t"], lineno))
        rows.append([_to_float(v, na_token, lineno, channels[k]) for k, v in enumerate(vals)])
        stamp = obj.get("ts")
        stamps.append(None if stamp is None else str(stamp))
        lines.append(lineno)
    if channels is None:
        raise ParseError("empty JSONL input (no channel metadata line)", 1)
    return _frames_from_rows(ts, rows, channels, stamps, lines, gap_limit)


def parse_frames(
    text: str,
    format: str = "csv",  # noqa: A002
    na_token: str = DEFAULT_NA_TOKEN,
    gap_limit: int = DEFAULT_GAP_LIMIT,
) -> list[SampleFrame]:
    """Parse CSV or JSONL text into frames in ascending ``t``.

    Raises:
        ParseError: Ragged rows or malformed records (message names the line).
        OrderingError: ``t`` not strictly increasing with a constant stride.
        CellError: A non-numeric cell that is not ``na_token``.
    """
    if gap_limit < 0:
        raise ConfigError("gap_limit must be >= 0")
    if format == "csv":
        return _parse_csv(text, na_token, gap_limit)
    if format == "jsonl":
        return _parse_jsonl(text, na_token, gap_limit)
    raise ConfigError(f"unknown format {format!r}; expected one of {FORMATS}")


def _fmt(v: float, na_token: str) -> str:
    return na_token if math.isnan(v) else repr(float(v))


def frames_to_csv(frames: Sequence[SampleFrame], na_token: str = DEFAULT_NA_TOKEN) -> str:
    """Serialize frames as CSV (shortest round-trip float repr, LF endings)."""
    if not frames:
        raise ConfigError("cannot serialize an empty frame list")
    buf = io.StringIO()
    buf.write(",".join(("t",) + frames[0].channels) + "\n")
    for fr in frames:
        buf.write(",".join([str(fr.t)] + [_fmt(v, na_token) for v in fr.values]) + "\n")
    return buf.getvalue()


def frames_to_jsonl(frames: Sequence[SampleFrame]) -> str:
    """Serialize frames as JSONL with a leading channel-metadata line."""
    if not frames:
        raise ConfigError("cannot serialize an empty frame list")
    out = [json.dumps({"channels": list(frames[0].channels)})]
    for fr in frames:
        rec: dict[str, object] = {"t": fr.t}
        if fr.ts is not None:
            rec["ts"] = fr.ts
        rec["values"] = [None if math.isnan(v) else v for v in fr.values]
        out.append(json.dumps(rec))
    return "\n".join(out) + "\n"


# -- windows -------------------------------------------------------------------


def select_channels(channels: Sequence[str], selector: str | Iterable[str] | None = None) -> list[int]:
    """Resolve a channel selector to row positions, in stream order.

    ``selector`` is ``None`` (all channels), an iterable of ids, or a
    comma-separated string whose items are ids or shell-style globs such as
    ``gen*``.
    """
    if selector is None:
        return list(range(len(channels)))
    if isinstance(selector, str):
        items = [s.strip() for s in selector.split(",") if s.strip()]
        if not items:
            return list(range(len(channels)))
    else:
        items = list(selector)
    picked: set[int] = set()
    for item in items:
        if any(ch in item for ch in "*?["):
            hits = [i for i, c in enumerate(channels) if fnmatch.fnmatchcase(c, item)]
            if not hits:
                raise ConfigError(f"channel pattern {item!r} matches no channel")
        else:
            if item not in channels:
                raise ConfigError(f"unknown channel {item!r}")
            hits = [list(channels).index(item)]
        picked.update(hits)
    return sorted(picked)


def frames_to_matrix(frames: Sequence[SampleFrame]) -> np.ndarray:
    """Stack frame values into an ``(N, F)`` channel-by-time array."""
    if not frames:
        return np.empty((0, 0))
    return np.array([fr.values for fr in frames], dtype=np.float64).T


def window_count(n_frames: int, T: int, stride: int) -> int:  # noqa: N803
    return 0 if n_frames < T else (n_frames - T) // stride + 1


def build_windows(
    frames: Sequence[SampleFrame],
    channels: str | Iterable[str] | None = None,
    T: int = 10,  # noqa: N803
    stride: int = 1,
) -> list[DataWindow]:
    """Cut frames into sliding ``N x T`` windows.

    Window ``k`` covers frames ``[k*stride, k*stride + T)``. Fewer than ``T``
    frames gives an empty list. Channels with unfilled gaps inside a window
    are dropped from that window only; a window left with no channels is
    skipped with a warning.

    Raises:
        DimensionError: More selected channels than samples per window.
    """
    if T < 2:
        raise ConfigError(f"window length T must be >= 2, got {T}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if not frames:
        return []
    ids = frames[0].channels
    rows = select_channels(ids, channels)
    n = len(rows)
    if n > T:
        raise DimensionError(
            f"{n} channels selected but window length is T={T}; c = N/T must be <= 1 (choose N <= T)"
        )
    data = frames_to_matrix(frames)[rows]
    names = tuple(ids[r] for r in rows)
    nan_rows = np.isnan(data)
    has_gaps = bool(nan_rows.any())
    out: list[DataWindow] = []
    for k in range(window_count(len(frames), T, stride)):
        s = k * stride
        block = data[:, s : s + T]
        keep_names = names
        dropped: tuple[str, ...] = ()
        if has_gaps:
            bad = nan_rows[:, s : s + T].any(axis=1)
            if bad.any():
                dropped = tuple(nm for nm, b in zip(names, bad) if b)
                if bad.all():
                    warnings.warn(f"window {k} has no complete channel; skipped", MissingDataWarning, stacklevel=2)
                    continue
                block = block[~bad]
                keep_names = tuple(nm for nm, b in zip(names, bad) if not b)
        out.append(
            DataWindow(
                matrix=block,
                channels=keep_names,
                start=s,
                index=k,
                t_first=frames[s].t,
                t_last=frames[s + T - 1].t,
                dropped=dropped,
            )
        )
    return out
