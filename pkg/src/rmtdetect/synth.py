"""Seeded synthetic generator-output scenarios with injected events.

Each channel is ``base + noise + event deltas``. Noise is drawn from a single
:class:`~rmtdetect.rng.Xoshiro256` stream in frame-major order (all channels of
frame 0, then frame 1, ...), so a seed fixes the output bit for bit.

Event kinds, for an affected channel with base level ``B`` and magnitude ``m``
active on frames ``[t0, t0 + duration)``:

* ``step-drop``: delta ``-m B``
* ``step-rise``: delta ``+m B``
* ``ramp``: delta ``-m B (t - t0 + 1) / duration``, a linear slide to the
  step-drop level (negative ``m`` ramps upward)

Compensating channels receive ``share * (-sum of affected deltas)`` at every
active frame, so shares summing to 1 conserve the channel total.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rmtdetect.errors import ConfigError
from rmtdetect.ingest import SampleFrame
from rmtdetect.rng import NOISE_DISTRIBUTIONS, Xoshiro256

EVENT_KINDS = ("step-drop", "step-rise", "ramp")


@dataclass(frozen=True)
class ChannelSpec:
    id: str
    base: float
    noise_std: float


@dataclass(frozen=True)
class EventSpec:
    t0: int
    duration: int
    channels: tuple[str, ...]
    kind: str = "step-drop"
    magnitude: float = 1.0
    compensation: tuple[tuple[str, float], ...] = ()
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or f"{self.kind}@{self.t0}"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    frames: int
    channels: tuple[ChannelSpec, ...]
    noise: str = "gaussian"
    events: tuple[EventSpec, ...] = field(default=())

    def __post_init__(self) -> None:
        validate_scenario(self)

    @property
    def channel_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = [asdict(c) for c in self.channels]
        d["events"] = [
            {**asdict(e), "channels": list(e.channels), "compensation": [list(p) for p in e.compensation]}
            for e in self.events
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        try:
            chans = d["channels"]
            if isinstance(chans, dict):
                # compact form: {"ids": [...], "base": [...], "noise_std": [...]}
                ids = list(chans["ids"])
                base = _broadcast(chans["base"], len(ids), "base")
                std = _broadcast(chans["noise_std"], len(ids), "noise_std")
                channels = tuple(ChannelSpec(i, float(b), float(s)) for i, b, s in zip(ids, base, std))
            else:
                channels = tuple(ChannelSpec(str(c["id"]), float(c["base"]), float(c["noise_std"])) for c in chans)
            events = tuple(
                EventSpec(
                    t0=int(e["t0"]),
                    duration=int(e["duration"]),
                    channels=tuple(str(c) for c in e["channels"]),
                    kind=str(e.get("kind", "step-drop")),
                    magnitude=float(e.get("magnitude", 1.0)),
                    compensation=tuple((str(c), float(s)) for c, s in e.get("compensation", ())),
                    name=e.get("name"),
                )
                for e in d.get("events", ())
            )
            return cls(
                seed=int(d["seed"]),
                frames=int(d["frames"]),
                channels=channels,
                noise=str(d.get("noise", "gaussian")),
                events=events,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid scenario: {exc!r}") from exc


def _broadcast(v: object, n: int, name: str) -> list[float]:
    if isinstance(v, (int, float)):
        return [float(v)] * n
    vals = list(v)  # type: ignore[call-overload]
    if len(vals) != n:
        raise ConfigError(f"scenario channels.{name} has {len(vals)} entries for {n} ids")
    return [float(x) for x in vals]


def validate_scenario(cfg: ScenarioConfig) -> None:
    if cfg.frames < 1:
        raise ConfigError(f"scenario needs at least one frame, got {cfg.frames}")
    if not cfg.channels:
        raise ConfigError("scenario has no channels")
    ids = [c.id for c in cfg.channels]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate channel id in scenario")
    for c in cfg.channels:
        if not c.noise_std > 0:
            raise ConfigError(f"channel {c.id!r}: noise standard deviation must be > 0, got {c.noise_std}")
    if cfg.noise not in NOISE_DISTRIBUTIONS:
        raise ConfigError(f"unknown noise distribution {cfg.noise!r}; expected one of {NOISE_DISTRIBUTIONS}")
    known = set(ids)
    for e in cfg.events:
        lab = e.label
        if e.kind not in EVENT_KINDS:
            raise ConfigError(f"event {lab}: unknown kind {e.kind!r}; expected one of {EVENT_KINDS}")
        if not 0 <= e.t0 < cfg.frames:
            raise ConfigError(f"event {lab}: t0={e.t0} outside [0, {cfg.frames})")
        if e.duration < 1:
            raise ConfigError(f"event {lab}: duration must be >= 1, got {e.duration}")
        if not e.channels:
            raise ConfigError(f"event {lab}: no affected channels")
        for ch in list(e.channels) + [c for c, _ in e.compensation]:
            if ch not in known:
                raise ConfigError(f"event {lab}: unknown channel id {ch!r}")
        shares = [s for _, s in e.compensation]
        if any(s < 0 for s in shares):
            raise ConfigError(f"event {lab}: compensation shares must be nonnegative")
        if sum(shares) > 1.0 + 1e-12:
            raise ConfigError(f"event {lab}: compensation shares sum to {sum(shares):.6g} > 1")


def event_deltas(cfg: ScenarioConfig) -> np.ndarray:
    """Deterministic ``(F, N)`` array of event contributions (no noise)."""
    ids = {c: i for i, c in enumerate(cfg.channel_ids)}
    base = np.array([c.base for c in cfg.channels])
    out = np.zeros((cfg.frames, len(cfg.channels)))
    for e in cfg.events:
        stop = min(e.t0 + e.duration, cfg.frames)
        t = np.arange(e.t0, stop)
        if e.kind == "step-drop":
            profile = np.full(t.size, -1.0)
        elif e.kind == "step-rise":
            profile = np.full(t.size, 1.0)
        else:
            profile = -(t - e.t0 + 1) / e.duration
        lost = np.zeros(t.size)
        for ch in e.channels:
            d = e.magnitude * base[ids[ch]] * profile
            out[e.t0 : stop, ids[ch]] += d
            lost -= d
        for ch, share in e.compensation:
            out[e.t0 : stop, ids[ch]] += share * lost
    return out


def generate_matrix(cfg: ScenarioConfig) -> np.ndarray:
    """Scenario values as an ``(F, N)`` array."""
    base = np.array([c.base for c in cfg.channels])
    std = np.array([c.noise_std for c in cfg.channels])
    rng = Xoshiro256(cfg.seed)
    noise = rng.noise((cfg.frames, len(cfg.channels)), cfg.noise)
    return base[None, :] + std[None, :] * noise + event_deltas(cfg)


def generate_scenario(cfg: ScenarioConfig) -> list[SampleFrame]:
    """Render a scenario as frames ``t = 0 .. F-1``."""
    values = generate_matrix(cfg)
    ids = cfg.channel_ids
    return [SampleFrame(t=i, values=tuple(float(v) for v in row), channels=ids) for i, row in enumerate(values)]


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"scenario file {path} must hold a JSON object")
    return ScenarioConfig.from_dict(d)


# Generator fleet used by the default scenarios: 8 units, noise at 1% of output.
DEFAULT_BASES = (100.0, 80.0, 120.0, 90.0, 110.0, 70.0, 95.0, 105.0)
DEFAULT_FRAMES = 4320
DEFAULT_FAULT_T0 = 2005


def default_channels(bases: Sequence[float] = DEFAULT_BASES, rel_noise: float = 0.01) -> tuple[ChannelSpec, ...]:
    return tuple(ChannelSpec(f"g{i + 1}", float(b), rel_noise * float(b)) for i, b in enumerate(bases))


def default_scenario(seed: int = 0, with_event: bool = True, frames: int = DEFAULT_FRAMES) -> ScenarioConfig:
    """Eight generators over three days of one-per-minute samples.

    With ``with_event`` the first unit trips at frame 2005 and stays offline;
    the remaining units pick up its output in proportion to their own base
    levels.
    """
    chans = default_channels()
    events: tuple[EventSpec, ...] = ()
    if with_event:
        others = chans[1:]
        total = sum(c.base for c in others)
        comp = tuple((c.id, c.base / total) for c in others)
        t0 = min(DEFAULT_FAULT_T0, frames - 1)
        events = (
            EventSpec(
                t0=t0,
                duration=frames - t0,
                channels=(chans[0].id,),
                kind="step-drop",
                magnitude=1.0,
                compensation=comp,
                name="g1-trip",
            ),
        )
    return ScenarioConfig(seed=seed, frames=frames, channels=chans, noise="gaussian", events=events)
