"""Command-line interface: ``analyze``, ``simulate`` and ``mp-check``.

Exit codes: 0 success, 2 configuration/validation error, 3 I/O or data error.
Every output file is written to a temporary name and renamed into place, so a
file is either complete or absent.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from collections.abc import Sequence
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from rmtdetect import __version__, _kernels
from rmtdetect.detect import flag_events, msr_series, pca_series
from rmtdetect.errors import ConfigError, DataError, NumericalError
from rmtdetect.ingest import (
    DEFAULT_GAP_LIMIT,
    DEFAULT_NA_TOKEN,
    FORMATS,
    frames_to_csv,
    frames_to_jsonl,
    parse_frames,
)
from rmtdetect.rmt import (
    KdeEstimate,
    MpModel,
    covariance_eigs,
    kde_pdf,
    mp_cdf,
    mp_fit_statistic,
    mp_pdf,
    row_standardize,
)
from rmtdetect.rng import NOISE_DISTRIBUTIONS, Xoshiro256
from rmtdetect.synth import ScenarioConfig, default_scenario, generate_scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

MP_BOUND = 0.05


@dataclass
class RunConfig:
    """Every knob of a CLI run; serializable to and from JSON."""

    command: str = "analyze"
    input: str | None = None
    format: str | None = None
    channels: str | None = None
    window: int = 10
    stride: int = 1
    product_length: int = 1
    seed: int = 0
    threshold_k: float = 5.0
    baseline: int = 60
    pca_m: str = "auto"
    out: str = "out"
    scenario: str | None = None
    preset: str = "fault"
    na_token: str = DEFAULT_NA_TOKEN
    gap_limit: int = DEFAULT_GAP_LIMIT
    rows: int = 200
    trials: int = 20
    distribution: str = "gaussian"
    workers: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        return cfg

    def resolved_format(self) -> str:
        if self.format is not None:
            return self.format
        if self.input and self.input.endswith(".jsonl"):
            return "jsonl"
        return "csv"

    def validate(self) -> None:
        if self.format is not None and self.format not in FORMATS:
            raise ConfigError(f"--format must be one of {FORMATS}, got {self.format!r}")
        if self.window < 2:
            raise ConfigError(f"--window must be >= 2, got {self.window}")
        if self.stride < 1:
            raise ConfigError(f"--stride must be >= 1, got {self.stride}")
        if self.product_length < 1:
            raise ConfigError(f"--product-length must be >= 1, got {self.product_length}")
        if not self.threshold_k > 0:
            raise ConfigError(f"--threshold-k must be > 0, got {self.threshold_k}")
        if self.baseline < 10:
            raise ConfigError(f"--baseline must be >= 10, got {self.baseline}")
        if self.pca_m != "auto":
            try:
                m = int(self.pca_m)
            except ValueError:
                raise ConfigError(f"--pca-m must be 'auto' or an integer, got {self.pca_m!r}") from None
            if m < 1:
                raise ConfigError(f"--pca-m must be >= 1, got {m}")
        if self.gap_limit < 0:
            raise ConfigError(f"--gap-limit must be >= 0, got {self.gap_limit}")
        if self.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {self.workers}")


# -- output helpers ------------------------------------------------------------------


def _atomic_write_all(outdir: Path, files: dict[str, str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=outdir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, outdir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(_finite(r)) + "\n" for r in records)


def _finite(obj):
    # JSON has no NaN; encode as null.
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2) + "\n"


# -- commands ---------------------------------------------------------------------------------


def cmd_analyze(cfg: RunConfig) -> int:
    cfg.validate()
    if not cfg.input:
        raise ConfigError("analyze needs --input")
    started = time.perf_counter()
    path = Path(cfg.input)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read input {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"input {path} is not UTF-8: {exc}") from exc
    frames = parse_frames(text, cfg.resolved_format(), na_token=cfg.na_token, gap_limit=cfg.gap_limit)
    series = msr_series(
        frames,
        T=cfg.window,
        stride=cfg.stride,
        channels=cfg.channels,
        L=cfg.product_length,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    events = flag_events(series, k=cfg.threshold_k, B=cfg.baseline)
    pca_m: int | str = cfg.pca_m if cfg.pca_m == "auto" else int(cfg.pca_m)
    pca = pca_series(frames, T=cfg.window, stride=cfg.stride, m=pca_m, channels=cfg.channels)
    summary = {
        "command": "analyze",
        "version": __version__,
        "config": cfg.to_dict(),
        "counts": {
            "frames": len(frames),
            "channels": len(frames[0].channels) if frames else 0,
            "msr_points": len(series),
            "degenerate_points": sum(p.degenerate for p in series),
            "events": len(events),
            "pca_points": len(pca),
        },
        "kernel_backend": _kernels.BACKEND,
        "runtime_seconds": round(time.perf_counter() - started, 6),
    }
    _atomic_write_all(
        Path(cfg.out),
        {
            "msr.jsonl": _jsonl([p.to_dict() for p in series]),
            "events.json": _dumps([e.to_dict() for e in events]),
            "pca.jsonl": _jsonl([p.to_dict() for p in pca]),
            "summary.json": _dumps(summary),
        },
    )
    print(
        f"analyzed {len(frames)} frames: {len(series)} windows, {len(events)} event(s) -> {cfg.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _scenario_for(cfg: RunConfig, seed_given: bool) -> ScenarioConfig:
    if cfg.scenario:
        sc = load_scenario(cfg.scenario)
        if seed_given:
            sc = dataclasses.replace(sc, seed=cfg.seed)
        return sc
    if cfg.preset not in ("fault", "quiet"):
        raise ConfigError(f"--preset must be 'fault' or 'quiet', got {cfg.preset!r}")
    return default_scenario(seed=cfg.seed, with_event=cfg.preset == "fault")


def cmd_simulate(cfg: RunConfig, seed_given: bool = True) -> int:
    cfg.validate()
    sc = _scenario_for(cfg, seed_given)
    frames = generate_scenario(sc)
    fmt = cfg.format or "csv"
    data = frames_to_csv(frames, cfg.na_token) if fmt == "csv" else frames_to_jsonl(frames)
    _atomic_write_all(Path(cfg.out), {f"frames.{fmt}": data, "scenario.json": _dumps(sc.to_dict())})
    print(f"wrote {len(frames)} frames x {len(sc.channels)} channels -> {cfg.out}", file=sys.stderr)
    return EXIT_OK


def iid_window(n: int, t: int, distribution: str, seed: int) -> np.ndarray:
    """``n x t`` matrix of i.i.d. zero-mean unit-variance entries."""
    return Xoshiro256(seed).noise((n, t), distribution)


def cmd_mp_check(cfg: RunConfig) -> int:
    cfg.validate()
    n, t = cfg.rows, cfg.window
    if n < 1:
        raise ConfigError(f"--rows must be >= 1, got {n}")
    if n > t:
        raise ConfigError(f"--rows N={n} exceeds --window T={t}; c = N/T must be <= 1")
    if cfg.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {cfg.trials}")
    if cfg.distribution not in NOISE_DISTRIBUTIONS:
        raise ConfigError(f"--distribution must be one of {NOISE_DISTRIBUTIONS}, got {cfg.distribution!r}")
    model = MpModel(c=n / t)
    stats = []
    first_eigs = None
    for trial in range(cfg.trials):
        sw = row_standardize(iid_window(n, t, cfg.distribution, cfg.seed ^ trial))
        eigs = covariance_eigs(sw)
        if first_eigs is None:
            first_eigs = eigs
        stats.append(mp_fit_statistic(eigs, MpModel(c=sw.c)))
    passed = sum(s < MP_BOUND for s in stats)
    assert first_eigs is not None
    hi = max(model.b, float(first_eigs.max())) * 1.1
    grid = np.linspace(0.0, hi, 401)
    if n >= 2:
        kde = kde_pdf(KdeEstimate.silverman(first_eigs), grid)
    else:
        kde = kde_pdf(KdeEstimate(first_eigs, 0.1), grid)
    mp = mp_pdf(model, grid)
    esd = "x,kde,mp\n" + "".join(f"{x!r},{k!r},{m!r}\n" for x, k, m in zip(grid, kde, mp))
    eig_csv = "eigenvalue\n" + "".join(f"{e!r}\n" for e in first_eigs)
    report = {
        "command": "mp-check",
        "config": cfg.to_dict(),
        "c": model.c,
        "support": [model.a, model.b],
        "mp_mass": float(mp_cdf(model, model.b)) - float(mp_cdf(model, model.a)),
        "bound": MP_BOUND,
        "statistics": stats,
        "passed": passed,
        "pass_rate": passed / cfg.trials,
    }
    _atomic_write_all(
        Path(cfg.out), {"report.json": _dumps(report), "esd.csv": esd, "eigenvalues.csv": eig_csv}
    )
    print(f"mp-check c={model.c:.4g}: {passed}/{cfg.trials} trials below {MP_BOUND} -> {cfg.out}", file=sys.stderr)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS  # noqa: N806
    p.add_argument("--config", default=S, help="JSON RunConfig; explicit flags override it")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--format", choices=FORMATS, default=S)
    p.add_argument("--na-token", dest="na_token", default=S, help="missing-value token (default NA)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS  # noqa: N806
    parser = argparse.ArgumentParser(prog="rmtdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="MSR + PCA detection on a CSV/JSONL dataset")
    _add_common(a)
    a.add_argument("--input", default=S)
    a.add_argument("--channels", default=S, help="comma-separated ids or globs (default: all)")
    a.add_argument("--window", type=int, default=S, metavar="T")
    a.add_argument("--stride", type=int, default=S)
    a.add_argument("--product-length", dest="product_length", type=int, default=S, metavar="L")
    a.add_argument("--threshold-k", dest="threshold_k", type=float, default=S)
    a.add_argument("--baseline", type=int, default=S, metavar="B")
    a.add_argument("--pca-m", dest="pca_m", default=S, help="'auto' or an integer")
    a.add_argument("--gap-limit", dest="gap_limit", type=int, default=S)
    a.add_argument("--workers", type=int, default=S)

    s = sub.add_parser("simulate", help="write a synthetic scenario dataset")
    _add_common(s)
    s.add_argument("--scenario", default=S, help="scenario JSON (default: built-in)")
    s.add_argument("--preset", choices=("fault", "quiet"), default=S, help="built-in scenario variant")

    m = sub.add_parser("mp-check", help="Marchenko-Pastur fit on i.i.d. windows")
    _add_common(m)
    m.add_argument("--rows", type=int, default=S, metavar="N")
    m.add_argument("--window", type=int, default=S, metavar="T")
    m.add_argument("--trials", type=int, default=S)
    m.add_argument("--distribution", choices=NOISE_DISTRIBUTIONS, default=S)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    given = vars(ns).copy()
    command = given.pop("command")
    base: dict = {}
    cfg_path = given.pop("config", None)
    if cfg_path is not None:
        try:
            base = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {cfg_path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(base, dict):
            raise ConfigError(f"config {cfg_path} must hold a JSON object")
    if command == "mp-check" and "window" not in given and "window" not in base:
        given["window"] = 800
    base.update(given)
    base["command"] = command
    return RunConfig.from_dict(base)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        seed_given = "seed" in vars(ns)
        cfg = config_from_args(ns)
        if cfg.command == "analyze":
            return cmd_analyze(cfg)
        if cfg.command == "simulate":
            return cmd_simulate(cfg, seed_given=seed_given)
        return cmd_mp_check(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
