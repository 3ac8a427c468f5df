"""Command-line surface: dataset synthesis and validation, feature
extraction, parameter sweeps, cross-validated evaluation, feature
selection, the result studies, the timing benchmark and the monitoring
verdict.

Contract: exit 0 with the declared artifacts written, exit 2 on a
validation or usage problem, exit 3 on a runtime or solver failure.
Every artifact gets a ``<stem>.meta.json`` sidecar naming the command,
seed, engine version and the full run configuration, so any file on
disk can be traced back to the invocation that produced it.  With a
fixed seed, artifacts are byte-identical across runs (timing
measurements excepted).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, features, ingest, studies, svc
from .entropy import METHODS, EntropyConfig, EntropyError, default_config, default_grid
from .wavelet import WaveletError

COMMANDS = (
    "synth",
    "validate",
    "extract",
    "sweep",
    "cv",
    "select",
    "study",
    "bench",
    "monitor",
    "entropy",
)

STUDY_AXES = ("variant", "channel", "feature", "histogram", "length")


class UsageError(ValueError):
    """The invocation itself is wrong: missing, conflicting or bad flags."""


@dataclass(frozen=True)
class RunConfig:
    """One fully-resolved invocation; every field mirrors a CLI flag."""

    command: str
    manifest: str | None = None
    out: str | None = None
    seed: int = 42
    k: int = 10
    n_stage1: int = 10
    n_stage2: int = 30
    grouping: str = "segment"
    method: str = "FuzzyEn"
    params: str = ""
    axis: str | None = None
    budget: int = 15
    lengths: tuple[int, ...] = (150, 300, 500, 800, 1000)
    subjects: int = 20
    samples: int = 5120
    class_effect: float = 1.0
    noise_floor: float = 2.0
    length: int = 1000
    segments: int = 5
    features: str = "full"
    top_n: int = 15
    n_bins: int = 20
    key: str | None = None
    selected_keys: str | None = None
    window: int = 5
    eps: float | None = None
    controls: str | None = None
    history: str | None = None
    repetitions: int = 5
    feature_counts: tuple[int, ...] = (11, 126)
    compare_backends: bool = False
    dump_variants: str | None = None
    in_path: str | None = None

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["lengths"] = list(self.lengths)
        out["feature_counts"] = list(self.feature_counts)
        return out


_TUPLE_FIELDS = ("lengths", "feature_counts")
_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc
    if not values:
        raise UsageError(f"expected at least one integer in {text!r}")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegentropy",
        description=__doc__.splitlines()[0],
    )
    sub = parser.add_subparsers(dest="command")
    flag_help = {
        "manifest": "dataset manifest JSON",
        "out": "output directory (created if missing)",
        "seed": "seed for every random draw (default 42)",
        "k": "folds per repeat",
        "n_stage1": "tuning-stage repeats",
        "n_stage2": "evaluation-stage repeats",
        "grouping": "fold grouping: segment or subject",
        "method": "entropy method name",
        "params": 'entropy parameters, e.g. "m=1,r=0.15,r2=5"',
        "axis": f"study axis: {', '.join(STUDY_AXES)}",
        "budget": "greedy selection budget",
        "lengths": "comma-separated segment lengths",
        "subjects": "subjects per class",
        "samples": "samples per synthesized record",
        "class_effect": "surrogate class-effect strength",
        "noise_floor": "surrogate broadband noise level",
        "length": "segment length in samples",
        "segments": "segments per record",
        "features": 'feature source: "full" or a feature CSV path',
        "top_n": "rows kept in ranked outputs",
        "n_bins": "histogram bin count",
        "key": 'feature key, e.g. "T8|cA3"',
        "selected_keys": "JSON file naming the selected feature keys",
        "window": "trailing window for the trend verdict",
        "eps": "dead-band around zero slope",
        "controls": "file of control values to derive the dead-band",
        "history": "file of time-ordered entropy values",
        "repetitions": "timed repetitions after warm-up",
        "feature_counts": "comma-separated feature counts to time",
        "compare_backends": "also benchmark both compute backends",
        "dump_variants": "directory for a debug dump of variant series",
        "in_path": "input CSV of samples",
    }
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="JSON file of defaults")
        for f in fields(RunConfig):
            if f.name == "command":
                continue
            flag = "--in" if f.name == "in_path" else "--" + f.name.replace("_", "-")
            if f.name == "compare_backends":
                p.add_argument(flag, dest=f.name, action="store_true", default=None)
            else:
                p.add_argument(
                    flag, dest=f.name, default=None, help=flag_help[f.name]
                )
    return parser


def _coerce(name: str, value):
    """Bring a flag or config-file value to the field's declared type."""
    if value is None:
        return None
    if name in _TUPLE_FIELDS:
        if isinstance(value, (list, tuple)):
            return tuple(int(v) for v in value)
        return _int_list(value)
    default = RunConfig.__dataclass_fields__[name].default
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise UsageError(f"{name} expects true/false, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{name} expects an integer, got {value!r}") from exc
    if isinstance(default, float) or name == "eps":
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{name} expects a number, got {value!r}") from exc
    return str(value)


def parse_config(argv) -> RunConfig:
    """Resolve argv plus an optional JSON config file into a RunConfig.

    Precedence: command-line flags beat config-file values beat
    defaults.  Unknown flags and unknown config keys are rejected.
    """
    argv = list(argv)
    if not argv:
        raise UsageError(
            "no command given; expected one of " + ", ".join(COMMANDS)
        )
    parser = _build_parser()
    try:
        namespace = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:  # --help path
            raise
        # argparse already printed its one-line diagnostic
        raise UsageError("invalid arguments") from exc
    if namespace.command is None:
        raise UsageError(
            "no command given; expected one of " + ", ".join(COMMANDS)
        )
    merged: dict = {"command": namespace.command}
    if namespace.config is not None:
        cfg_path = Path(namespace.config)
        if not cfg_path.is_file():
            raise UsageError(f"config file not found: {cfg_path}")
        try:
            file_values = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a JSON object")
        for name, value in file_values.items():
            if name not in _FIELD_TYPES:
                raise UsageError(f"unknown config key {name!r}")
            if name == "command":
                if value != namespace.command:
                    raise UsageError(
                        f"config file says command {value!r}, "
                        f"invocation says {namespace.command!r}"
                    )
                continue
            merged[name] = _coerce(name, value)
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        flag_value = getattr(namespace, f.name)
        if flag_value is not None:
            merged[f.name] = _coerce(f.name, flag_value)
    config = RunConfig(**merged)
    _validate_config(config)
    return config


def _require(config: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(config, name) is None:
            flag = "--in" if name == "in_path" else "--" + name.replace("_", "-")
            raise UsageError(f"{config.command} requires {flag}")


def _validate_config(config: RunConfig) -> None:
    if config.command not in COMMANDS:
        raise UsageError(f"unknown command {config.command!r}")
    if config.grouping not in ("segment", "subject"):
        raise UsageError(f"grouping must be segment or subject, got {config.grouping!r}")
    if config.method not in METHODS:
        raise UsageError(
            f"unknown method {config.method!r}; expected one of {', '.join(METHODS)}"
        )
    for name in ("k", "n_stage1", "n_stage2", "subjects", "samples", "segments",
                 "budget", "top_n", "n_bins", "window", "repetitions", "length"):
        if int(getattr(config, name)) < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
    cmd = config.command
    if cmd == "validate":
        _require(config, "manifest")
    elif cmd == "extract":
        _require(config, "manifest")
    elif cmd == "sweep":
        _require(config, "manifest")
    elif cmd == "cv":
        if config.features == "full":
            _require(config, "manifest")
    elif cmd == "select":
        _require(config, "manifest")
    elif cmd == "study":
        _require(config, "manifest", "axis")
        if config.axis not in STUDY_AXES:
            raise UsageError(
                f"--axis must be one of {', '.join(STUDY_AXES)}, got {config.axis!r}"
            )
        if config.axis == "histogram":
            _require(config, "key")
        if config.axis == "length":
            _require(config, "selected_keys")
    elif cmd == "monitor":
        _require(config, "history")
        if config.eps is None and config.controls is None:
            raise UsageError("monitor requires --eps or --controls")
    elif cmd == "entropy":
        _require(config, "in_path")


# ---------------------------------------------------------------------------
# artifact plumbing


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out) if config.out is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_meta(artifact: Path, config: RunConfig, protocol: dict | None = None) -> None:
    meta = {
        "command": config.command,
        "seed": config.seed,
        "engine_version": __version__,
        "config": config.to_json_dict(),
    }
    if protocol is not None:
        meta["protocol"] = protocol
    _write_json(artifact.with_suffix(".meta.json"), meta)


def _write_frame(frame, path: Path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")


def _protocol_dict(config: RunConfig) -> dict:
    return {
        "k": config.k,
        "n_stage1": config.n_stage1,
        "n_stage2": config.n_stage2,
        "grouping": config.grouping,
        "seed": config.seed,
    }


def _plan(config: RunConfig) -> svc.EvalPlan:
    return svc.EvalPlan(
        k=config.k,
        n_tune=config.n_stage1,
        n_eval=config.n_stage2,
        seed=config.seed,
        grouping=config.grouping,
    )


def _entropy_config(config: RunConfig) -> EntropyConfig:
    if not config.params:
        return default_config(config.method)
    return EntropyConfig.parse(f"{config.method}({config.params})")


def _load_segments(config: RunConfig):
    records = ingest.load_dataset(config.manifest)
    kept, dropped = ingest.preprocess(
        records, ingest.FilterSpec(), config.length, config.segments
    )
    if not kept:
        raise ingest.ValidationError("no segment survived artifact screening")
    return kept, dropped


def _read_values(path) -> np.ndarray:
    """One column of numbers from a CSV (header optional) or a JSON array."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    text = p.read_text(encoding="utf-8").strip()
    if not text:
        raise UsageError(f"{p} is empty")
    if p.suffix == ".json":
        data = json.loads(text)
        if not isinstance(data, list):
            raise UsageError(f"{p} must hold a JSON array of numbers")
        return np.asarray(data, dtype=np.float64)
    lines = text.splitlines()
    try:
        float(lines[0].split(",")[0])
        start = 0
    except ValueError:
        start = 1
    try:
        return np.asarray(
            [float(line.split(",")[0]) for line in lines[start:] if line.strip()],
            dtype=np.float64,
        )
    except ValueError as exc:
        raise UsageError(f"{p} is not a single-column numeric CSV") from exc


def _read_key_labels(path) -> list[str]:
    """Key labels from a JSON array or an object with a "chosen" array."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    data = json.loads(p.read_text(encoding="utf-8"))
    if isinstance(data, dict) and "chosen" in data:
        data = data["chosen"]
    if not isinstance(data, list) or not all(isinstance(s, str) for s in data):
        raise UsageError(f"{p} must hold a JSON array of key labels")
    if not data:
        raise UsageError(f"{p} names no keys")
    return data


def _parse_feature_key(text: str, config: EntropyConfig) -> features.FeatureKey:
    """Accept "CH|VARIANT" (entropy from flags) or a full 3-part label."""
    parts = text.split("|")
    if len(parts) == 2:
        return features.FeatureKey(parts[0], parts[1], config)
    return features.FeatureKey.parse(text)


# ---------------------------------------------------------------------------
# commands


def _cmd_synth(config: RunConfig) -> int:
    spec = ingest.SurrogateSpec(
        n_subjects_per_class=config.subjects,
        seed=config.seed,
        n_samples=config.samples,
        class_effect=config.class_effect,
        noise_floor=config.noise_floor,
    )
    records = ingest.generate_surrogate(spec)
    manifest = ingest.write_dataset(records, _out_dir(config))
    _write_meta(manifest, config)
    print(f"wrote {len(records)} records to {manifest}")
    return 0


def _cmd_validate(config: RunConfig) -> int:
    records = ingest.load_dataset(config.manifest)
    for rec in records:
        rec.validate()
    print(f"ok: {len(records)} records")
    return 0


def _cmd_extract(config: RunConfig) -> int:
    kept, dropped = _load_segments(config)
    entropy_config = _entropy_config(config)
    fm = features.build_feature_matrix(kept, features.full_grid(entropy_config))
    out = _out_dir(config)
    path = out / "features.csv"
    fm.to_csv(path)
    _write_meta(path, config)
    screening = out / "screening.json"
    _write_json(
        screening,
        [
            {
                "subject_id": seg.subject_id,
                "segment_index": seg.segment_index,
                "channel": verdict.channel,
                "sample_index": verdict.sample_index,
                "value_uv": verdict.value,
            }
            for seg, verdict in dropped
        ],
    )
    _write_meta(screening, config)
    if config.dump_variants is not None:
        _dump_variants(kept[0], Path(config.dump_variants), config)
    print(f"wrote {fm.n_rows}x{len(fm.keys)} feature matrix to {path}")
    return 0


def _dump_variants(segment, dump_dir: Path, config: RunConfig) -> None:
    """Debug dump: the nine variant series of the first kept segment's
    first montage channel, one single-column CSV per variant."""
    from .wavelet import make_variants

    dump_dir.mkdir(parents=True, exist_ok=True)
    series = segment.channel(ingest.CHANNELS[0])
    for tag, values in make_variants(series).items():
        path = dump_dir / f"{tag}.csv"
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(tag + "\n")
            for v in values:
                fh.write(repr(float(v)) + "\n")
        _write_meta(path, config)


def _cmd_sweep(config: RunConfig) -> int:
    kept, _ = _load_segments(config)
    report = features.sweep_hyperparameters(
        kept, config.method, default_grid(config.method), _plan(config)
    )
    out = _out_dir(config)
    stem = f"fig3_{config.method.lower()}"
    frame_path = out / f"{stem}.csv"
    rows = {
        "label": [p.config.label() for p in report.points],
        "a_rkf": [p.a_rkf for p in report.points],
        "stddev": [p.std for p in report.points],
    }
    _write_frame(pd.DataFrame(rows), frame_path)
    _write_json(out / f"{stem}.json", report.to_json_list())
    _write_meta(frame_path, config, _protocol_dict(config))
    best = report.best
    print(f"best {best.config.label()}: a_rkf={best.a_rkf:.4f}")
    return 0


def _features_for_cv(config: RunConfig) -> features.FeatureMatrix:
    if config.features == "full":
        kept, _ = _load_segments(config)
        return features.build_feature_matrix(
            kept, features.full_grid(_entropy_config(config))
        )
    return features.read_feature_csv(config.features)


def _cmd_cv(config: RunConfig) -> int:
    fm = _features_for_cv(config)
    stage1, report = svc.evaluate_two_stage(fm, _plan(config))
    out = _out_dir(config)
    report_path = out / "cv_report.json"
    _write_json(report_path, report.to_json_dict())
    _write_meta(report_path, config, _protocol_dict(config))
    stage1_path = out / "stage1.json"
    _write_json(
        stage1_path,
        {
            "best": {"c": stage1.best.c, "gamma": stage1.best.gamma},
            "accuracy": stage1.accuracy,
            "table": [
                {
                    "c": p.c,
                    "gamma": p.gamma,
                    "a_rkf": None if math.isnan(a) else a,
                }
                for p, a in stage1.table
            ],
            "failures": list(stage1.failures),
        },
    )
    _write_meta(stage1_path, config, _protocol_dict(config))
    print(f"a_rkf={report.a_rkf:.4f} e_rkf={report.e_rkf:.4f} std={report.std:.4f}")
    return 0


def _cmd_select(config: RunConfig) -> int:
    kept, _ = _load_segments(config)
    fm = features.build_feature_matrix(
        kept, features.full_grid(_entropy_config(config))
    )
    trace = studies.greedy_forward_select(fm, _plan(config), config.budget)
    out = _out_dir(config)
    frame = pd.DataFrame(
        {
            "axis": [
                f"{step + 1}:{key.label()}" for step, key in enumerate(trace.chosen)
            ],
            "a_rkf": list(trace.a_rkf),
            "e_rkf": [1.0 - a for a in trace.a_rkf],
            "std": list(trace.std),
            "n_folds": [trace.n_folds] * len(trace.chosen),
            "seed": [trace.seed] * len(trace.chosen),
        }
    )
    csv_path = out / "fig8.csv"
    _write_frame(frame, csv_path)
    _write_json(
        out / "fig8.json",
        {
            "chosen": [key.label() for key in trace.chosen],
            "a_rkf": list(trace.a_rkf),
            "best_so_far": list(trace.best_so_far),
            "stopping_reason": trace.stopping_reason,
            "params": {"c": trace.params.c, "gamma": trace.params.gamma},
            "seed": trace.seed,
        },
    )
    _write_meta(csv_path, config, _protocol_dict(config))
    print(
        f"selected {len(trace.chosen)} features "
        f"(stop: {trace.stopping_reason}), final a_rkf={trace.a_rkf[-1]:.4f}"
    )
    return 0


def _cmd_study(config: RunConfig) -> int:
    kept, _ = _load_segments(config)
    entropy_config = _entropy_config(config)
    plan = _plan(config)
    out = _out_dir(config)
    protocol = _protocol_dict(config)
    if config.axis == "variant":
        table = studies.per_variant_study(kept, entropy_config, plan)
        path = out / "fig4.csv"
        _write_frame(table.to_frame(), path)
        _write_meta(path, config, protocol)
    elif config.axis == "channel":
        table = studies.per_channel_study(kept, entropy_config, plan)
        path = out / "fig5.csv"
        _write_frame(table.to_frame(), path)
        _write_meta(path, config, protocol)
    elif config.axis == "feature":
        table = studies.per_feature_study(kept, entropy_config, plan, top_n=126)
        path = out / "fig6.csv"
        _write_frame(table.to_frame(), path)
        _write_meta(path, config, protocol)
        table2 = out / "table2.csv"
        _write_frame(table.to_frame().head(config.top_n), table2)
        _write_meta(table2, config, protocol)
        print(f"wrote {path}")
        path = table2
    elif config.axis == "histogram":
        key = _parse_feature_key(config.key, entropy_config)
        hist = studies.entropy_histogram(kept, key, config.n_bins)
        path = out / "fig7.csv"
        _write_frame(hist.to_frame(), path)
        _write_meta(path, config, protocol)
    else:  # length
        labels = _read_key_labels(config.selected_keys)
        selected = [features.FeatureKey.parse(lbl) for lbl in labels]
        records = ingest.load_dataset(config.manifest)
        table = studies.segment_length_study(
            records,
            config.lengths,
            entropy_config,
            selected,
            plan,
            n_segments=config.segments,
        )
        path = out / "fig9.csv"
        _write_frame(table.to_frame(), path)
        _write_meta(path, config, protocol)
    print(f"wrote {path}")
    return 0


def _cmd_bench(config: RunConfig) -> int:
    report = studies.timing_benchmark(
        config.lengths,
        config.feature_counts,
        repetitions=config.repetitions,
        entropy_config=_entropy_config(config),
        seed=config.seed,
    )
    out = _out_dir(config)
    path = out / "fig10.csv"
    _write_frame(report.to_frame(), path)
    _write_meta(path, config)
    if config.compare_backends:
        backend_path = out / "backend_bench.csv"
        _write_frame(studies.backend_benchmark(config.repetitions), backend_path)
        _write_meta(backend_path, config)
    print(f"wrote {path}")
    return 0


def _cmd_monitor(config: RunConfig) -> int:
    history = _read_values(config.history)
    if config.eps is not None:
        eps = config.eps
    else:
        eps = studies.default_deadband(_read_values(config.controls))
    verdict = studies.monitor_trend(history, config.window, eps)
    print(verdict)
    if config.out is not None:
        out = _out_dir(config)
        path = out / "monitor.json"
        _write_json(
            path,
            {"verdict": verdict, "window": config.window, "eps": eps},
        )
        _write_meta(path, config)
    return 0


def _cmd_entropy(config: RunConfig) -> int:
    values = _read_values(config.in_path)
    result = _entropy_config(config).compute(values)
    print(repr(float(result)))
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "extract": _cmd_extract,
    "sweep": _cmd_sweep,
    "cv": _cmd_cv,
    "select": _cmd_select,
    "study": _cmd_study,
    "bench": _cmd_bench,
    "monitor": _cmd_monitor,
    "entropy": _cmd_entropy,
}

# Errors that mean the inputs were bad (exit 2) versus a failure while
# computing on valid inputs (exit 3).
_VALIDATION_ERRORS = (
    UsageError,
    ingest.ValidationError,
    ingest.FilterDesignError,
    features.FeatureBuildError,
    studies.StudyError,
    WaveletError,
    svc.SvcError,
)


def run(config: RunConfig) -> int:
    """Execute one parsed invocation; returns the process exit code."""
    return _HANDLERS[config.command](config)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EntropyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except svc.ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
