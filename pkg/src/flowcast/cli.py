"""Command-line harness: synth, pca, predict, segment, control, loocv.

Every run writes a ``manifest.json`` capturing inputs, seed, and resolved
configuration; its SHA-256 hash is embedded in every artifact (JSON field
``manifest_hash``; leading ``# manifest_hash=...`` comment in CSVs) so
outputs are traceable and reruns byte-identical.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .flowdata import (
    FlowDataset,
    SplitSpec,
    ValidationError,
    center,
    load_csv,
    load_dataset,
    mean_profile,
    save_dataset,
    split_at,
    vector_to_grid,
    _aggregate,
    _parse_rows,
)
from .lowrank import explained_variance, fit_pca, pca_to_json
from .pls import fit_pls_kernel, loocv, predict
from .segmentation import (
    FitConfig,
    optimal_segmentation,
    plan_from_json,
    plan_to_json,
)
from .controller import (
    ControllerConfig,
    ControllerMode,
    PlsModelBank,
    build_model_bank,
    predictive_plan_to_json,
    run_controller,
)
from .delay import (
    SCENARIOS,
    DelayReport,
    IntersectionConfig,
    lower_bound_delay,
    simulate_day,
)
from .synth import SynthConfig, generate


@dataclass(frozen=True)
class RunManifest:
    """What a run saw: command, inputs, seed, resolved configs, destination."""

    command: str
    inputs: dict
    seed: int | None
    configs: dict
    out_dir: str
    tool_version: str = __version__

    def canonical_json(self) -> str:
        doc = {
            "command": self.command,
            "inputs": self.inputs,
            "seed": self.seed,
            "configs": self.configs,
            "out_dir": self.out_dir,
            "tool_version": self.tool_version,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def write(self, out_dir: Path) -> str:
        doc = json.loads(self.canonical_json())
        doc["manifest_hash"] = self.hash
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return self.hash


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation failures (exit 1)
        raise ValidationError(message)


def _write_json(path: Path, doc: dict, manifest_hash: str) -> None:
    doc = dict(doc)
    doc["manifest_hash"] = manifest_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows, manifest_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest_hash={manifest_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    return doc


def _meta_path(csv_path: Path) -> Path:
    return csv_path.parent / (csv_path.stem + ".meta.json")


def _load_input(args) -> FlowDataset:
    if not args.input:
        raise ValidationError("--input is required for this command")
    csv_path = Path(args.input)
    meta = _meta_path(csv_path)
    if meta.exists():
        return load_dataset(csv_path, meta)
    return load_csv(csv_path, args.interval_minutes)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(value: float, places: int = 6) -> str:
    return format(float(value), f".{places}f")


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    config = _load_config(args.config)
    synth_cfg = dict(config.get("synth", {}))
    if args.seed is not None:
        synth_cfg["seed"] = args.seed
    if "anomaly_days" in synth_cfg:
        synth_cfg["anomaly_days"] = tuple(
            (int(d), tuple(m)) for d, m in synth_cfg["anomaly_days"]
        )
    cfg = SynthConfig(**synth_cfg)
    out = _out_dir(args)
    manifest = RunManifest(
        command="synth",
        inputs={},
        seed=cfg.seed,
        configs={"synth": _synth_cfg_dict(cfg)},
        out_dir=str(out),
    )
    mhash = manifest.write(out)
    ds, truth = generate(cfg)
    save_dataset(ds, out / "flows.csv", out / "flows.meta.json", manifest_hash=mhash)
    _write_json(out / "ground_truth.json", truth.to_json_dict(), mhash)
    print(f"wrote {ds.n_days} days x {ds.flows.shape[1]} columns to {out / 'flows.csv'}")
    return 0


def _synth_cfg_dict(cfg: SynthConfig) -> dict:
    return {
        "seed": cfg.seed,
        "n_days": cfg.n_days,
        "intervals_per_day": cfg.intervals_per_day,
        "n_movements": cfg.n_movements,
        "n_components": cfg.n_components,
        "noise_sigma": cfg.noise_sigma,
        "anomaly_days": [[d, list(m)] for d, m in cfg.anomaly_days],
        "mean_profile_shape": cfg.mean_profile_shape,
        "start_date": cfg.start_date,
    }


# ---------------------------------------------------------------- pca

def cmd_pca(args) -> int:
    ds = _load_input(args)
    out = _out_dir(args)
    manifest = RunManifest(
        command="pca",
        inputs={"input": str(args.input)},
        seed=args.seed,
        configs={"pca": {"n_components": args.n_components,
                         "component_scale": args.component_scale}},
        out_dir=str(out),
    )
    mhash = manifest.write(out)
    model = fit_pca(center(ds), args.n_components, component_scale=args.component_scale)
    pca_to_json(model, out / "pca_model.json", manifest_hash=mhash)
    fractions = explained_variance(model)
    _write_csv(
        out / "explained_variance.csv",
        ["component", "fraction"],
        [[i + 1, _fmt(f, 9)] for i, f in enumerate(fractions)],
        mhash,
    )
    header = ["date"] + [f"w{i + 1}" for i in range(model.n_components)]
    rows = [
        [rec.date] + [_fmt(w) for w in model.weights[i]]
        for i, rec in enumerate(ds.days)
    ]
    _write_csv(out / "weights.csv", header, rows, mhash)
    print(f"fit {model.n_components} components; "
          f"top fraction {fractions[0]:.4f}" if len(fractions) else "fit model")
    return 0


# ---------------------------------------------------------------- predict

def _split_spec_from_args(args, ds: FlowDataset) -> SplitSpec:
    t = ds.intervals_per_day
    cutoff = args.cutoff if args.cutoff is not None else max(1, (t * 10) // 24)
    predict_from = args.predict_from if args.predict_from is not None else cutoff + 1
    predict_to = args.predict_to if args.predict_to is not None else t
    return SplitSpec(
        cutoff_index=cutoff,
        predict_from=predict_from,
        predict_to=predict_to,
        predictor_stride=args.predictor_stride,
        predicted_stride=args.predicted_stride,
    )


def _read_sample(path: Path, ds: FlowDataset, spec: SplitSpec) -> tuple[str, np.ndarray]:
    """Read one day's predictor window from an external long-format CSV."""
    cells, observed = _parse_rows(path, ds.intervals_per_day)
    if len(cells) != 1:
        raise ValidationError(f"sample file must hold exactly one date, got {len(cells)}")
    date_label, day = next(iter(cells.items()))
    missing = set(ds.movements) - observed
    if missing:
        raise ValidationError(f"sample is missing movements: {sorted(missing)}")
    grid = np.empty((1, ds.n_movements, spec.cutoff_index))
    for m, movement in enumerate(ds.movements):
        for t in range(1, spec.cutoff_index + 1):
            if (movement, t) not in day:
                raise ValidationError(
                    f"sample is missing ({movement}, interval {t})"
                )
            grid[0, m, t - 1] = day[(movement, t)]
    z = _aggregate(grid, spec.predictor_stride).reshape(-1)
    return date_label, z


def cmd_predict(args) -> int:
    ds = _load_input(args)
    spec = _split_spec_from_args(args, ds)
    spec.validate_for(ds.intervals_per_day)
    if not args.date and not args.sample:
        raise ValidationError("predict needs --date (holdout) or --sample (external file)")
    out = _out_dir(args)
    manifest = RunManifest(
        command="predict",
        inputs={"input": str(args.input), "sample": args.sample or "",
                "date": args.date or ""},
        seed=args.seed,
        configs={"split": _spec_dict(spec), "pls": {"n_components": args.n_components}},
        out_dir=str(out),
    )
    mhash = manifest.write(out)

    z_all, y_all = split_at(ds, spec)
    if args.date:
        idx = ds.day_index(args.date)
        z_train = np.delete(z_all, idx, axis=0)
        y_train = np.delete(y_all, idx, axis=0)
        label, z_sample, actual = args.date, z_all[idx], y_all[idx]
    else:
        label, z_sample = _read_sample(Path(args.sample), ds, spec)
        z_train, y_train, actual = z_all, y_all, None
    model = fit_pls_kernel(z_train, y_train, args.n_components, split=spec)
    y_hat = predict(model, z_sample)
    y_mean = y_train.mean(axis=0)

    width = spec.predicted_width
    rows = []
    for m, movement in enumerate(ds.movements):
        for k in range(width):
            interval = spec.predict_from + k * spec.predicted_stride
            col = m * width + k
            rows.append([
                movement,
                interval,
                "" if actual is None else _fmt(actual[col]),
                _fmt(y_hat[col]),
                _fmt(y_mean[col]),
            ])
    _write_csv(out / "prediction.csv",
               ["movement", "interval", "actual", "predicted", "mean"], rows, mhash)
    print(f"predicted {label}: {len(rows)} rows -> {out / 'prediction.csv'}")
    return 0


def _spec_dict(spec: SplitSpec) -> dict:
    return {
        "cutoff_index": spec.cutoff_index,
        "predict_from": spec.predict_from,
        "predict_to": spec.predict_to,
        "predictor_stride": spec.predictor_stride,
        "predicted_stride": spec.predicted_stride,
    }


# ---------------------------------------------------------------- segment

def cmd_segment(args) -> int:
    ds = _load_input(args)
    out = _out_dir(args)
    fit_cfg = FitConfig(overflow_penalty=args.overflow_penalty)
    manifest = RunManifest(
        command="segment",
        inputs={"input": str(args.input), "date": args.date or ""},
        seed=args.seed,
        configs={"segmentation": {"segments": args.segments,
                                  "overflow_penalty": args.overflow_penalty}},
        out_dir=str(out),
    )
    mhash = manifest.write(out)
    if args.date:
        profile = ds.day_grid(ds.day_index(args.date))
    else:
        profile = vector_to_grid(mean_profile(ds), ds.intervals_per_day, ds.n_movements)
    plan = optimal_segmentation(profile, args.segments, fit_cfg,
                                interval_minutes=ds.interval_minutes)
    plan_to_json(plan, out / "plan.json", manifest_hash=mhash,
                 movements=list(ds.movements))
    times = ", ".join(str(t) for t in plan.switch_times)
    print(f"optimal {plan.n_periods}-period plan, switches at [{times}], "
          f"cost {plan.total_cost:.3f}")
    return 0


# ---------------------------------------------------------------- loocv

def cmd_loocv(args) -> int:
    ds = _load_input(args)
    spec = _split_spec_from_args(args, ds)
    spec.validate_for(ds.intervals_per_day)
    out = _out_dir(args)
    manifest = RunManifest(
        command="loocv",
        inputs={"input": str(args.input)},
        seed=args.seed,
        configs={"split": _spec_dict(spec), "pls": {"n_components": args.n_components}},
        out_dir=str(out),
    )
    mhash = manifest.write(out)
    records = loocv(ds, spec, args.n_components)
    _write_csv(
        out / "loocv.csv",
        ["date", "E_pred", "E_base", "decrease"],
        [[r.date, _fmt(r.e_pred), _fmt(r.e_base), _fmt(r.decrease, 9)] for r in records],
        mhash,
    )
    positive = sum(1 for r in records if r.decrease > 0)
    summary = {
        "n_days": len(records),
        "n_positive_decrease": positive,
        "fraction_positive_decrease": positive / len(records),
        "mean_decrease": float(np.mean([r.decrease for r in records])),
    }
    _write_json(out / "loocv_summary.json", summary, mhash)
    print(f"{positive}/{len(records)} days improved over the mean baseline")
    return 0


# ---------------------------------------------------------------- control

def _intersection_from_config(ds: FlowDataset, block: dict) -> IntersectionConfig:
    kwargs = dict(block)
    kwargs.setdefault("analysis_period_hours", ds.interval_minutes / 60.0)
    if "phases" in kwargs:
        phases = tuple(tuple(int(m) for m in p) for p in kwargs.pop("phases"))
        return IntersectionConfig(phases=phases, n_movements=ds.n_movements, **kwargs)
    return IntersectionConfig.default_for(ds.movements, **kwargs)


def _dataset_hash(ds: FlowDataset) -> str:
    h = hashlib.sha256()
    h.update(ds.flows.tobytes())
    h.update(repr([r.date for r in ds.days]).encode())
    h.update(repr(list(ds.movements)).encode())
    h.update(str(ds.interval_minutes).encode())
    return h.hexdigest()


def _bank_for(ds: FlowDataset, plan, ctrl_cfg: ControllerConfig, n_components: int,
              cache_dir: Path) -> PlsModelBank:
    key_material = json.dumps({
        "dataset": _dataset_hash(ds),
        "plan": plan_to_json(plan),
        "window_halfwidth": ctrl_cfg.window_halfwidth,
        "n_components": n_components,
    }, sort_keys=True)
    key = hashlib.sha256(key_material.encode("utf-8")).hexdigest()[:16]
    cache_file = cache_dir / f"bank_{key}.json"
    if cache_file.exists():
        return PlsModelBank.from_json(cache_file)
    bank = build_model_bank(ds, plan, ctrl_cfg, n_components)
    cache_dir.mkdir(parents=True, exist_ok=True)
    bank.to_json(cache_file)
    return bank


def cmd_control(args) -> int:
    ds = _load_input(args)
    config = _load_config(args.config)
    out = _out_dir(args)
    fit_cfg = FitConfig(overflow_penalty=args.overflow_penalty)
    ctrl_block = dict(config.get("controller", {}))
    ctrl_cfg = ControllerConfig(
        window_halfwidth=args.window,
        clamp_predictions=bool(ctrl_block.get("clamp_predictions", True)),
    )
    ic = _intersection_from_config(ds, config.get("intersection", {}))

    if args.plan:
        plan = plan_from_json(args.plan)
    else:
        profile = vector_to_grid(mean_profile(ds), ds.intervals_per_day, ds.n_movements)
        plan = optimal_segmentation(profile, args.segments, fit_cfg,
                                    interval_minutes=ds.interval_minutes)

    manifest = RunManifest(
        command="control",
        inputs={"input": str(args.input), "plan": args.plan or "", "date": args.date},
        seed=args.seed,
        configs={
            "segmentation": {"segments": plan.n_periods,
                             "overflow_penalty": args.overflow_penalty},
            "controller": {"window_halfwidth": ctrl_cfg.window_halfwidth,
                           "clamp_predictions": ctrl_cfg.clamp_predictions},
            "pls": {"n_components": args.n_components},
            "intersection": config.get("intersection", {}),
        },
        out_dir=str(out),
    )
    mhash = manifest.write(out)
    if not args.plan:
        plan_to_json(plan, out / "plan.json", manifest_hash=mhash,
                     movements=list(ds.movements))

    bank = _bank_for(ds, plan, ctrl_cfg, args.n_components, out / "cache")

    if args.date == "all":
        indices = list(range(ds.n_days))
    else:
        indices = [ds.day_index(args.date)]

    per_day = []
    for idx in indices:
        date = ds.days[idx].date
        day = ds.day_grid(idx)
        seg_cfg = ControllerConfig(window_halfwidth=ctrl_cfg.window_halfwidth,
                                   mode=ControllerMode.SEGMENTATION_ONLY,
                                   clamp_predictions=ctrl_cfg.clamp_predictions)
        both_cfg = ControllerConfig(window_halfwidth=ctrl_cfg.window_halfwidth,
                                    mode=ControllerMode.SEGMENTATION_AND_PARAMS,
                                    clamp_predictions=ctrl_cfg.clamp_predictions)
        plan_seg = run_controller(plan, day, bank, seg_cfg, fit_cfg)
        plan_both = run_controller(plan, day, bank, both_cfg, fit_cfg)
        report = DelayReport(date=date, traces={
            "nominal": simulate_day(day, plan, ic),
            "predictive_seg": simulate_day(day, plan_seg, ic),
            "predictive_seg_params": simulate_day(day, plan_both, ic),
            "lower_bound": lower_bound_delay(day, ic),
        })
        per_day.append(report)
        if args.date != "all":
            rows = [
                [t + 1] + [_fmt(report.traces[s].rates[t]) for s in SCENARIOS]
                for t in range(ds.intervals_per_day)
            ]
            _write_csv(out / f"delay_{date}.csv", ["interval", *SCENARIOS], rows, mhash)
            predictive_plan_to_json(plan_seg, out / f"predictive_plan_{date}_seg.json",
                                    manifest_hash=mhash, date=date)
            predictive_plan_to_json(plan_both, out / f"predictive_plan_{date}_seg_params.json",
                                    manifest_hash=mhash, date=date)

    table = [r.to_table() for r in per_day]
    mean_row = {"date": "mean"}
    for keyset in (SCENARIOS, ("improvement_seg", "improvement_seg_params")):
        for k in keyset:
            mean_row[k] = float(np.mean([row[k] for row in table]))
    _write_json(out / "delay_report.json", {"days": table, "mean": mean_row}, mhash)
    print(f"evaluated {len(per_day)} day(s); mean nominal delay "
          f"{mean_row['nominal']:.1f} veh.h, seg+params improvement "
          f"{mean_row['improvement_seg_params']:.1f} veh.h")
    return 0


# ---------------------------------------------------------------- wiring

def _build_parser() -> _Parser:
    parser = _Parser(prog="flowcast", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flowcast {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input flows CSV (sidecar auto-detected)")
    common.add_argument("--out-dir", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="JSON config file with per-command blocks")
    common.add_argument("--interval-minutes", type=int, default=15,
                        help="interval length when no sidecar is present")

    split_flags = argparse.ArgumentParser(add_help=False)
    split_flags.add_argument("--cutoff", type=int, default=None,
                             help="last observed interval (default: 10:00)")
    split_flags.add_argument("--predict-from", type=int, default=None)
    split_flags.add_argument("--predict-to", type=int, default=None)
    split_flags.add_argument("--predictor-stride", type=int, default=1)
    split_flags.add_argument("--predicted-stride", type=int, default=1)
    split_flags.add_argument("--n-components", type=int, default=4)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pca", parents=[common], help="fit the low-rank day model")
    p.add_argument("--n-components", type=int, default=4)
    p.add_argument("--component-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("predict", parents=[common, split_flags],
                       help="predict the rest of one day from its morning")
    p.add_argument("--date", help="holdout date from the dataset")
    p.add_argument("--sample", help="external one-day CSV with the predictor window")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("segment", parents=[common],
                       help="optimal time-of-day periods for the mean (or one) day")
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--overflow-penalty", type=float, default=2.0)
    p.add_argument("--date", help="segment this day instead of the mean profile")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("control", parents=[common],
                       help="run the predictive controller and report delay")
    p.add_argument("--plan", help="nominal plan JSON (default: segment the mean)")
    p.add_argument("--segments", type=int, default=7)
    p.add_argument("--overflow-penalty", type=float, default=2.0)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--n-components", type=int, default=4)
    p.add_argument("--date", default="all", help='a date, or "all"')
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("loocv", parents=[common, split_flags],
                       help="leave-one-out prediction errors per day")
    p.set_defaults(func=cmd_loocv)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
