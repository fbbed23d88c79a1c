"""Command-line front end: ``loadid {identify,sweep,synth}``.

Settings come from three layers, later ones winning: built-in defaults
(plus a scenario preset for ``synth``), a flat ``key = value`` config file,
then command-line flags. Every JSON output embeds the resolved config.

Exit status is 0 on success, 2 for configuration errors, 3 for data errors
and 4 for numerical failures. Failures print a JSON error document to stdout
and, when possible, write it to ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .conditioning import DEFAULT_SWEEP_CUTOFFS_HZ, DEFAULT_SWEEP_ORDERS, LowpassSpec, filter_sweep, sweep_grid
from .errors import ConfigError, LoadIdError
from .estimators import Topology
from .fir_diff import DEFAULT_TAPS
from .oracle import (
    CorruptionSpec,
    HarmonicExcitation,
    ParameterSchedule,
    excitation_to_list,
    scenario_record,
)
from .pipeline import identify
from .signals import ensure_dir, load_csv, save_csv

# Synthetic scenarios selectable with ``scenario = <name>``.
PRESETS = {
    "rl-resistance-steps": {
        "topology": "SeriesRL",
        "schedule": "0:R=1.54,L=0.005;0.25:R=5.5,L=0.005;0.5:R=11,L=0.005;0.75:R=19.2,L=0.005",
        "duration_s": 1.0,
    },
    "rl-step": {
        "topology": "SeriesRL",
        "schedule": "0:R=5.5,L=0.01;0.5:R=19.2,L=0.01",
        "duration_s": 1.0,
    },
    "rl-fixed": {"topology": "SeriesRL", "params": "R=1.836,L=0.01", "duration_s": 1.0},
    "hybrid": {
        "topology": "ParallelR_SeriesRL",
        "params": "G_p=1.299,R_ser=0.148,L_ser=0.005",
        "duration_s": 1.0,
    },
    "parallel-rc": {
        "topology": "ParallelRC",
        "params": "G=0.1818,C=0.00025",
        "harmonics": "50:100:0,150:20:0,250:10:0,350:5:0,450:3:0",
        "duration_s": 1.0,
    },
}


@dataclass
class RunConfig:
    command: str = "identify"
    input: str | None = None
    output_dir: str = "out"
    topology: str | None = None
    sample_rate_hz: float | None = None
    filter_order: int | None = 4
    filter_cutoff_hz: float | None = 100.0
    diff_taps: int = DEFAULT_TAPS
    smooth_window: int = 500
    epsilon: float = 1e-6
    nominal: dict | None = None
    plot: bool = False
    seed: int = 0
    # sweep
    sweep_orders: list = field(default_factory=lambda: list(DEFAULT_SWEEP_ORDERS))
    sweep_cutoffs_hz: list = field(default_factory=lambda: list(DEFAULT_SWEEP_CUTOFFS_HZ))
    # synth
    scenario: str | None = None
    params: dict | None = None
    schedule: list | None = None
    harmonics: list | None = None
    duration_s: float = 1.0
    snr_db: float | None = None
    adc_lsb: float | None = None
    adc_channels: list = field(default_factory=lambda: ["v", "i"])
    oversample: int = 10

    @property
    def lowpass(self) -> LowpassSpec | None:
        if self.filter_order is None or self.filter_cutoff_hz is None:
            return None
        return LowpassSpec(self.filter_order, self.filter_cutoff_hz)

    def to_dict(self) -> dict:
        return asdict(self)


# -- value parsers -------------------------------------------------------------


def _none_or(conv):
    def parse(text):
        if isinstance(text, str) and text.strip().lower() in ("none", ""):
            return None
        return conv(text)

    return parse


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_assignments(text: str) -> dict:
    """``"R=1.5, L=0.01"`` -> ``{"R": 1.5, "L": 0.01}``."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected name=value, got {item!r}")
        out[key.strip()] = float(value)
    return out


def parse_schedule(text: str) -> list:
    """``"0:R=5.5,L=0.01; 0.5:R=19.2,L=0.01"`` -> list of segment dicts."""
    segs = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        start, sep, rest = item.partition(":")
        if not sep:
            raise ValueError(f"expected start:name=value,..., got {item!r}")
        segs.append({"start_time_s": float(start), "params": parse_assignments(rest)})
    return segs


def parse_harmonics(text: str) -> list:
    """``"50:100:0, 150:20"`` -> frequency/amplitude/phase dicts (phase defaults to 0)."""
    comps = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = [float(p) for p in item.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError(f"expected freq:amp[:phase], got {item!r}")
        f, a, *ph = parts
        comps.append({"frequency_hz": f, "amplitude_v": a, "phase_rad": ph[0] if ph else 0.0})
    return comps


def _list_of(conv):
    return lambda text: [conv(s) for s in str(text).replace(" ", "").split(",") if s]


PARSERS = {
    "command": str,
    "input": _none_or(str),
    "output_dir": str,
    "topology": _none_or(str),
    "sample_rate_hz": _none_or(float),
    "filter_order": _none_or(int),
    "filter_cutoff_hz": _none_or(float),
    "diff_taps": int,
    "smooth_window": int,
    "epsilon": float,
    "nominal": _none_or(parse_assignments),
    "plot": _bool,
    "seed": int,
    "sweep_orders": _list_of(int),
    "sweep_cutoffs_hz": _list_of(float),
    "scenario": _none_or(str),
    "params": _none_or(parse_assignments),
    "schedule": _none_or(parse_schedule),
    "harmonics": _none_or(parse_harmonics),
    "duration_s": float,
    "snr_db": _none_or(float),
    "adc_lsb": _none_or(float),
    "adc_channels": _list_of(str),
    "oversample": int,
}
assert set(PARSERS) == {f.name for f in fields(RunConfig)}


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply(cfg: RunConfig, raw: dict, origin: str) -> None:
    for key, value in raw.items():
        if key not in PARSERS:
            raise ConfigError(f"{origin}: unknown setting {key!r}")
        try:
            setattr(cfg, key, PARSERS[key](value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: bad value for {key}: {exc}") from exc


def resolve_config(command: str, file_values: dict, cli_values: dict) -> RunConfig:
    cfg = RunConfig(command=command)
    scenario = cli_values.get("scenario", file_values.get("scenario"))
    if command == "synth" and scenario not in (None, "none"):
        if scenario not in PRESETS:
            raise ConfigError(f"unknown scenario {scenario!r}; choose from {sorted(PRESETS)}")
        _apply(cfg, PRESETS[scenario], f"scenario {scenario}")
    _apply(cfg, file_values, "config file")
    _apply(cfg, cli_values, "command line")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.topology is None:
        raise ConfigError(f"{cfg.command} needs a topology")
    try:
        topo = Topology.parse(cfg.topology)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.topology = topo.value
    if cfg.command in ("identify", "sweep") and not cfg.input:
        raise ConfigError(f"{cfg.command} needs an input CSV")
    if cfg.command == "sweep" and not cfg.nominal:
        raise ConfigError("sweep needs nominal parameters")
    if cfg.nominal is not None:
        unknown = set(cfg.nominal) - set(topo.param_names)
        if unknown:
            raise ConfigError(f"nominal names {sorted(unknown)} not in {topo.param_names}")
    if cfg.filter_order is None or cfg.filter_cutoff_hz is None:
        # either one set to none disables filtering
        cfg.filter_order = cfg.filter_cutoff_hz = None
    cfg.lowpass  # raises InvalidCutoff on bad order/cutoff
    if cfg.smooth_window < 1:
        raise ConfigError("smooth_window must be >= 1")
    if not cfg.epsilon >= 0:
        raise ConfigError("epsilon must be >= 0")
    if cfg.sample_rate_hz is not None and not cfg.sample_rate_hz > 0:
        raise ConfigError("sample_rate_hz must be positive")
    if cfg.command == "synth" and cfg.params is None and cfg.schedule is None:
        raise ConfigError("synth needs params or a schedule")


# -- commands ------------------------------------------------------------------


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _load_input(cfg: RunConfig):
    frame = load_csv(cfg.input)
    if cfg.sample_rate_hz is not None and not math.isclose(
        frame.sample_rate_hz, cfg.sample_rate_hz, rel_tol=1e-6
    ):
        raise ConfigError(
            f"configured sample rate {cfg.sample_rate_hz:g} Hz disagrees with the file's "
            f"{frame.sample_rate_hz:g} Hz"
        )
    return frame


def run_identify(cfg: RunConfig) -> int:
    frame = _load_input(cfg)
    out = ensure_dir(cfg.output_dir)
    result = identify(
        frame,
        cfg.topology,
        lowpass=cfg.lowpass,
        taps=cfg.diff_taps,
        smooth_window=cfg.smooth_window,
        epsilon=cfg.epsilon,
        nominal=cfg.nominal,
        strict=False,
    )
    result.smoothed.to_csv(out / "trace.csv")
    result.raw.to_csv(out / "trace_raw.csv")
    extra = {"config": cfg.to_dict()}
    if result.lowpass is not None:
        extra["filter"] = {
            "edge_trim_samples": result.lowpass.edge_trim,
            "group_delay_samples": result.lowpass.group_delay_samples(),
        }
    result.summary.to_json(out / "summary.json", extra=extra)
    if cfg.plot:
        from .plotting import plot_identification

        plot_identification(result, out / "identify.svg", nominal=cfg.nominal)
    return 0


def run_sweep(cfg: RunConfig) -> int:
    frame = _load_input(cfg)
    out = ensure_dir(cfg.output_dir)
    grid = sweep_grid(cfg.sweep_orders, cfg.sweep_cutoffs_hz)
    report = filter_sweep(
        frame,
        cfg.topology,
        cfg.nominal,
        grid=grid,
        taps=cfg.diff_taps,
        smooth_window=cfg.smooth_window,
        epsilon=cfg.epsilon,
    )
    doc = report.to_dict()
    doc["config"] = cfg.to_dict()
    _write_json(out / "sweep.json", doc)
    if cfg.plot:
        from .plotting import plot_histograms

        hist_dir = ensure_dir(out / "histograms")
        for e in report.entries:
            if e.ok:
                name = f"order{e.spec.order}_cutoff{e.spec.cutoff_hz:g}.svg"
                title = f"order {e.spec.order}, cutoff {e.spec.cutoff_hz:g} Hz"
                plot_histograms(e.trace, e.summary, hist_dir / name, title=title)
    if report.chosen is None:
        failures = [
            {"order": e.spec.order, "cutoff_hz": e.spec.cutoff_hz, "error": e.error}
            for e in report.entries
        ]
        doc = {
            "status": "error",
            "error": {"code": "AllEntriesFailed", "message": "no sweep configuration succeeded",
                      "failures": failures},
            "exit_status": 4,
        }
        print(json.dumps(doc))
        _write_json(out / "error.json", doc)
        return 4
    return 0


def _synth_inputs(cfg: RunConfig):
    topo = Topology.parse(cfg.topology)
    if cfg.schedule is not None:
        schedule = ParameterSchedule(tuple((s["start_time_s"], s["params"]) for s in cfg.schedule))
    else:
        schedule = ParameterSchedule.constant(cfg.params)
    if cfg.harmonics is not None:
        excitation = HarmonicExcitation(
            tuple((h["frequency_hz"], h["amplitude_v"], h["phase_rad"]) for h in cfg.harmonics)
        )
    else:
        excitation = HarmonicExcitation.distorted()
    corruption = None
    if cfg.snr_db is not None or cfg.adc_lsb is not None:
        corruption = CorruptionSpec(cfg.snr_db, cfg.adc_lsb, cfg.seed, tuple(cfg.adc_channels))
    return topo, schedule, excitation, corruption


def run_synth(cfg: RunConfig) -> int:
    topo, schedule, excitation, corruption = _synth_inputs(cfg)
    rate = cfg.sample_rate_hz or 10_000.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        frame = scenario_record(
            topo, schedule, excitation, cfg.duration_s, rate, corruption, cfg.oversample
        )
    out = ensure_dir(cfg.output_dir)
    save_csv(frame, out / "frame.csv")
    truth = {
        "topology": topo.value,
        "sample_rate_hz": rate,
        "duration_s": cfg.duration_s,
        "samples": len(frame),
        "schedule": schedule.to_list(),
        "excitation": excitation_to_list(excitation),
        "corruption": None if corruption is None else {
            "snr_db": corruption.snr_db,
            "adc_lsb": corruption.adc_lsb,
            "seed": corruption.seed,
            "adc_channels": list(corruption.adc_channels),
        },
        "warnings": [str(w.message) for w in caught],
        "config": cfg.to_dict(),
    }
    _write_json(out / "frame.truth.json", truth)
    return 0


RUNNERS = {"identify": run_identify, "sweep": run_sweep, "synth": run_synth}


# -- argument handling ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadid", description="Identify equivalent-circuit load parameters from v/i records."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", default=S, help="flat key = value config file")
        p.add_argument("--output-dir", default=S)
        p.add_argument("--topology", default=S, help=", ".join(t.value for t in Topology))
        p.add_argument("--sample-rate-hz", default=S)
        p.add_argument("--seed", default=S)
        p.add_argument("--plot", action="store_const", const="true", default=S)

    def pipeline(p):
        p.add_argument("--input", default=S, help="CSV with time_s,v_volts,i_amps")
        p.add_argument("--filter-order", default=S, help="2, 4, 6, 8, 10 or none")
        p.add_argument("--filter-cutoff-hz", default=S, help="100..2000 or none")
        p.add_argument("--diff-taps", default=S)
        p.add_argument("--smooth-window", default=S)
        p.add_argument("--epsilon", default=S, help="relative determinant threshold")
        p.add_argument("--nominal", default=S, help="e.g. R=1.5,L=0.01")

    p_id = sub.add_parser("identify", help="estimate a parameter trace from a CSV record")
    common(p_id)
    pipeline(p_id)
    p_sw = sub.add_parser("sweep", help="run the identification over a filter grid")
    common(p_sw)
    pipeline(p_sw)
    p_sw.add_argument("--sweep-orders", default=S, help="e.g. 2,4,6")
    p_sw.add_argument("--sweep-cutoffs-hz", default=S, help="e.g. 100,300,500")
    p_sy = sub.add_parser("synth", help="write a synthetic record with ground truth")
    common(p_sy)
    p_sy.add_argument("--scenario", default=S, help=", ".join(sorted(PRESETS)))
    p_sy.add_argument("--params", default=S, help="e.g. R=1.836,L=0.01")
    p_sy.add_argument("--schedule", default=S, help="e.g. 0:R=5.5,L=0.01;0.5:R=19.2,L=0.01")
    p_sy.add_argument("--harmonics", default=S, help="freq:amp[:phase],...")
    p_sy.add_argument("--duration-s", default=S)
    p_sy.add_argument("--snr-db", default=S)
    p_sy.add_argument("--adc-lsb", default=S)
    p_sy.add_argument("--adc-channels", default=S, help="v,i")
    p_sy.add_argument("--oversample", default=S)
    return parser


def _error_doc(exc: LoadIdError) -> dict:
    return {
        "status": "error",
        "error": {"code": exc.code, "message": str(exc)},
        "exit_status": exc.exit_status,
    }


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    output_dir = args.get("output_dir")
    try:
        file_values = read_config_file(config_path) if config_path else {}
        output_dir = args.get("output_dir", file_values.get("output_dir"))
        cfg = resolve_config(command, file_values, args)
        output_dir = cfg.output_dir
        return RUNNERS[command](cfg)
    except LoadIdError as exc:
        doc = _error_doc(exc)
        print(json.dumps(doc))
        if output_dir:
            try:
                _write_json(ensure_dir(output_dir) / "error.json", doc)
            except (OSError, LoadIdError):
                pass
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
