"""Command-line driver for the full pipeline.

Subcommands: synth, train, eval, infer, export, parity, bench. Every
command is reproducible given the same flags and seeds (timing values
excepted); errors exit nonzero with a single machine-parsable line on
stderr. A key=value config file supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import baselines, dataset, edge, gbdt, metrics, model_format, report
from .errors import InputDimensionError, PvBoostError

DEFAULT_SPLIT_SEED = 42
DEFAULT_TRAIN_FRACTION = 0.8


def _load_config(path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {line_no}: expected key=value")
            key, value = line.split("=", 1)
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


class _Resolver:
    """CLI flag > config file > built-in default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self.args = args
        self.config = config

    def get(self, name: str, default, cast):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            raw = self.config[name]
            if cast is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default


def _hyperparams(r: _Resolver) -> gbdt.Hyperparams:
    return gbdt.Hyperparams(
        num_trees=r.get("num_trees", 100, int),
        max_depth=r.get("max_depth", 6, int),
        learning_rate=r.get("learning_rate", 0.3, float),
        reg_lambda=r.get("reg_lambda", 1.0, float),
        gamma=r.get("gamma", 0.0, float),
        min_child_weight=r.get("min_child_weight", 1.0, float),
        seed=r.get("seed", 0, int),
    )


def _print_kv(kind: str, pairs: list[tuple[str, object]]) -> None:
    print(kind + " " + " ".join(f"{k}={v}" for k, v in pairs))


def cmd_synth(r: _Resolver) -> int:
    days = r.get("days", 30, int)
    if days < 1:
        raise ValueError("--days must be >= 1")
    capacity = r.get("capacity", 10.0, float)
    seed = r.get("seed", 0, int)
    out = r.get("out", None, str)
    if out is None:
        raise ValueError("--out is required")
    ds = dataset.synth_generate(days, capacity, seed,
                                inverter_id=r.get("inverter_id", 1, int))
    n = dataset.save_csv(ds, out)
    _print_kv("SYNTH", [("rows", n), ("path", out), ("seed", seed),
                        ("capacity", capacity)])
    return 0


def _load_clean(path, capacity, inverter_id=1):
    return dataset.clean(dataset.load_csv(path, capacity, inverter_id))


def _metadata(ds: dataset.InverterDataset, target: str, seed: int) -> dict:
    # created_at pinned to the last sample so identical inputs give
    # identical artifact bytes.
    return {
        "inverter_id": ds.inverter_id,
        "target": target,
        "capacity": float(ds.capacity),
        "training_seed": seed,
        "created_at": ds.records[-1].timestamp.isoformat(),
    }


def cmd_train(r: _Resolver) -> int:
    csv_path = r.get("csv", None, str)
    model_out = r.get("model_out", None, str)
    if csv_path is None or model_out is None:
        raise ValueError("--csv and --model-out are required")
    capacity = r.get("capacity", 10.0, float)
    target = r.get("target", "active", str)
    split_seed = r.get("split_seed", DEFAULT_SPLIT_SEED, int)
    fraction = r.get("train_fraction", DEFAULT_TRAIN_FRACTION, float)
    params = _hyperparams(r)
    use_literal = r.get("mape_literal", False, bool)
    baseline = r.get("baseline", None, str)
    report_dir = r.get("report_dir", None, str)
    inverter_id = r.get("inverter_id", 1, int)

    ds = _load_clean(csv_path, capacity, inverter_id)
    sp = dataset.split(ds, fraction, split_seed)
    ensemble = gbdt.train(sp, target, params)

    X_test = np.array([rec.features for rec in sp.test])
    y_test = np.array([getattr(rec, f"{target}_power") for rec in sp.test])
    preds = {"gbdt": gbdt.predict_batch(ensemble, X_test)}
    if baseline == "ols":
        X_train = np.array([rec.features for rec in sp.train])
        y_train = np.array([getattr(rec, f"{target}_power") for rec in sp.train])
        lr = baselines.fit_ols(X_train, y_train)
        preds["ols"] = baselines.predict_linear_batch(lr, X_test)
    elif baseline is not None:
        raise ValueError(f"unknown baseline {baseline!r}")

    model_format.save_model(ensemble, model_out,
                            _metadata(ds, target, split_seed))
    print(f"wrote model to {model_out} (split_seed={split_seed}, "
          f"train={len(sp.train)}, test={len(sp.test)})")

    rows = []
    for name, yhat in preds.items():
        rep = metrics.report(y_test, yhat, capacity)
        mape = metrics.mape_literal(y_test, yhat, capacity) if use_literal \
            else rep.mape_pct
        rows.append([name, f"{rep.r_squared:.6f}", f"{mape:.4f}",
                     f"{rep.rmse:.6f}", rep.n])
        _print_kv("METRICS", [("model", name), ("target", target),
                              ("r2", repr(rep.r_squared)),
                              ("mape_pct", repr(mape)),
                              ("rmse", repr(rep.rmse)), ("n", rep.n),
                              ("split_seed", split_seed)])
    header = ["model", "r2", "mape_pct", "rmse", "n"]
    print(report.format_table(header, rows))

    if report_dir:
        report.ensure_dir(report_dir)
        report.write_tsv(f"{report_dir}/metrics.tsv", header, rows)
        order = np.argsort([rec.timestamp for rec in sp.test])
        report.prediction_figure(
            f"{report_dir}/predictions_{target}.png",
            y_test[order],
            {name: yhat[order] for name, yhat in preds.items()},
            f"{target} power, held-out set (inverter {inverter_id})",
            "kW" if target == "active" else "kvar",
        )
        report.scatter_figure(
            f"{report_dir}/scatter_{target}.png", y_test,
            preds["gbdt"], f"{target} power: measured vs predicted",
        )
    return 0


def cmd_eval(r: _Resolver) -> int:
    model_path = r.get("model", None, str)
    csv_path = r.get("csv", None, str)
    if model_path is None or csv_path is None:
        raise ValueError("--model and --csv are required")
    ensemble, meta = model_format.import_model(model_path)
    capacity = r.get("capacity", float(meta.get("capacity", 10.0)), float)
    target = meta.get("target", "active")
    ds = _load_clean(csv_path, capacity, int(meta.get("inverter_id", 1)))
    X = ds.feature_matrix()
    y = ds.labels(target)
    yhat = gbdt.predict_batch(ensemble, X)
    rep = metrics.report(y, yhat, capacity)
    mape = metrics.mape_literal(y, yhat, capacity) \
        if r.get("mape_literal", False, bool) else rep.mape_pct
    header = ["model", "r2", "mape_pct", "rmse", "n"]
    rows = [["gbdt", f"{rep.r_squared:.6f}", f"{mape:.4f}",
             f"{rep.rmse:.6f}", rep.n]]
    _print_kv("METRICS", [("model", "gbdt"), ("target", target),
                          ("r2", repr(rep.r_squared)), ("mape_pct", repr(mape)),
                          ("rmse", repr(rep.rmse)), ("n", rep.n)])
    print(report.format_table(header, rows))
    report_dir = r.get("report_dir", None, str)
    if report_dir:
        report.ensure_dir(report_dir)
        report.write_tsv(f"{report_dir}/metrics.tsv", header, rows)
        report.prediction_figure(
            f"{report_dir}/predictions_{target}.png", y, {"gbdt": yhat},
            f"{target} power", "kW" if target == "active" else "kvar")
        report.scatter_figure(f"{report_dir}/scatter_{target}.png", y, yhat,
                              f"{target} power: measured vs predicted")
    return 0


def _read_input_rows(r: _Resolver) -> list[list[float]]:
    inline = r.get("input", None, str)
    path = r.get("inputs_csv", None, str)
    if (inline is None) == (path is None):
        raise ValueError("provide exactly one of --input or --inputs-csv")
    if inline is not None:
        return [[float(v) for v in inline.split(",")]]
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"no input rows in {path}")
    return rows


def cmd_infer(r: _Resolver) -> int:
    model_path = r.get("model", None, str)
    if model_path is None:
        raise ValueError("--model is required")
    precision = r.get("precision", "f64", str)
    if precision not in ("f64", "f32"):
        raise ValueError("--precision must be f64 or f32")
    rows = _read_input_rows(r)

    if precision == "f64":
        ensemble, _ = model_format.import_model(model_path)
        for row in rows:
            if len(row) != ensemble.feature_count:
                raise InputDimensionError(
                    f"input data must contain exactly "
                    f"{ensemble.feature_count} elements"
                )
            print(repr(gbdt.predict(ensemble, row)))
    else:
        model = edge.lower_to_f32(model_format.load_artifact(model_path))
        for row in rows:
            print(repr(edge.infer_f32(model, row)))
    return 0


def cmd_export(r: _Resolver) -> int:
    model_path = r.get("model", None, str)
    out = r.get("out", None, str)
    if model_path is None or out is None:
        raise ValueError("--model and --out are required")
    artifact = model_format.load_artifact(model_path)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(model_format.to_canonical_text(artifact))
    _print_kv("EXPORT", [("path", out), ("trees", len(set(artifact.nodes_treeids)))])
    return 0


def _model_label(path: str, meta: dict) -> str:
    inv = meta.get("inverter_id")
    tgt = meta.get("target")
    if inv is not None and tgt is not None:
        return f"inverter-{inv}/{tgt}"
    return path


def cmd_parity(r: _Resolver) -> int:
    model_paths = r.get("model", None, lambda raw: raw.split(","))
    csv_path = r.get("csv", None, str)
    if not model_paths or csv_path is None:
        raise ValueError("--model (at least one) and --csv are required")
    eps = r.get("eps", 1e-6, float)
    report_dir = r.get("report_dir", None, str)

    header = ["model", "mape_pct", "rmse", "max_abs_diff", "n"]
    rows = []
    for i, path in enumerate(model_paths):
        artifact = model_format.load_artifact(path)
        ensemble = model_format.artifact_to_ensemble(artifact)
        meta = artifact.metadata
        ds = _load_clean(csv_path, float(meta.get("capacity", 10.0)))
        X = ds.feature_matrix()
        full = gbdt.predict_batch(ensemble, X)
        f32m = edge.lower_to_f32(artifact)
        lowered = np.array(edge.infer_f32_batch(f32m, X.tolist()))
        rep = edge.parity_report(full, lowered, eps=eps)
        label = _model_label(path, meta)
        rows.append([label, f"{rep.mape_pct:.4f}%", f"{rep.rmse:.15f}",
                     f"{rep.max_abs_diff:.15f}", rep.n])
        _print_kv("PARITY", [("model", label), ("mape_pct", repr(rep.mape_pct)),
                             ("rmse", repr(rep.rmse)),
                             ("max_abs_diff", repr(rep.max_abs_diff)),
                             ("n", rep.n)])
        if report_dir:
            report.ensure_dir(report_dir)
            report.parity_figure(f"{report_dir}/parity_{i}.png",
                                 full - lowered, f"f64 vs f32: {label}")
    print(report.format_table(header, rows))
    if report_dir:
        report.write_tsv(f"{report_dir}/parity.tsv", header, rows)
    return 0


def cmd_bench(r: _Resolver) -> int:
    model_paths = r.get("model", None, lambda raw: raw.split(","))
    csv_path = r.get("csv", None, str)
    if not model_paths or csv_path is None:
        raise ValueError("--model (at least one) and --csv are required")
    reps = r.get("reps", 3, int)
    if reps < 1:
        raise ValueError("--reps must be >= 1")
    report_dir = r.get("report_dir", None, str)

    header = ["model", "mean_ms", "median_ms", "p99_ms", "min_ms", "max_ms"]
    rows = []
    for i, path in enumerate(model_paths):
        artifact = model_format.load_artifact(path)
        ds = _load_clean(csv_path, float(artifact.metadata.get("capacity", 10.0)))
        X = ds.feature_matrix().tolist()
        f32m = edge.lower_to_f32(artifact)
        samples = edge.measure_latencies(f32m, X, reps)
        stats = edge.latency_stats(samples, len(X), reps)
        label = _model_label(path, artifact.metadata)
        rows.append([label] + [f"{v / 1000.0:.4g}" for v in
                               (stats.mean_us, stats.median_us, stats.p99_us,
                                stats.min_us, stats.max_us)])
        _print_kv("LATENCY", [("model", label),
                              ("mean_us", f"{stats.mean_us:.3f}"),
                              ("median_us", f"{stats.median_us:.3f}"),
                              ("p99_us", f"{stats.p99_us:.3f}"),
                              ("min_us", f"{stats.min_us:.3f}"),
                              ("max_us", f"{stats.max_us:.3f}"),
                              ("n_inputs", stats.n_inputs),
                              ("repetitions", stats.repetitions)])
        if report_dir:
            report.ensure_dir(report_dir)
            report.latency_figure(f"{report_dir}/latency_{i}.png", samples,
                                  f"single-sample latency: {label}")
    print(report.format_table(header, rows))
    if report_dir:
        report.write_tsv(f"{report_dir}/latency.tsv", header, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvboost",
        description="Train, ship, and benchmark PV inverter setpoint models.",
    )
    parser.add_argument("--config", help="key=value defaults file")
    parser.add_argument("--seed", type=int, help="global RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic telemetry CSV")
    p.add_argument("--days", type=int)
    p.add_argument("--capacity", type=float)
    p.add_argument("--inverter-id", type=int, dest="inverter_id")
    p.add_argument("--out")

    p = sub.add_parser("train", help="train on a CSV and write a model artifact")
    p.add_argument("--csv")
    p.add_argument("--capacity", type=float)
    p.add_argument("--target", choices=["active", "reactive"])
    p.add_argument("--model-out", dest="model_out")
    p.add_argument("--num-trees", type=int, dest="num_trees")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--lambda", type=float, dest="reg_lambda")
    p.add_argument("--gamma", type=float)
    p.add_argument("--min-child-weight", type=float, dest="min_child_weight")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--baseline", choices=["ols"])
    p.add_argument("--mape-literal", action="store_const", const=True,
                   dest="mape_literal")
    p.add_argument("--inverter-id", type=int, dest="inverter_id")
    p.add_argument("--report-dir", dest="report_dir")

    p = sub.add_parser("eval", help="evaluate a model artifact on a CSV")
    p.add_argument("--model")
    p.add_argument("--csv")
    p.add_argument("--capacity", type=float)
    p.add_argument("--mape-literal", action="store_const", const=True,
                   dest="mape_literal")
    p.add_argument("--report-dir", dest="report_dir")

    p = sub.add_parser("infer", help="predict for raw 12-feature inputs")
    p.add_argument("--model")
    p.add_argument("--input", help="comma-separated 12 values")
    p.add_argument("--inputs-csv", dest="inputs_csv",
                   help="headerless CSV of 12-value rows")
    p.add_argument("--precision", choices=["f64", "f32"])

    p = sub.add_parser("export", help="validate and re-emit canonical bytes")
    p.add_argument("--model")
    p.add_argument("--out")

    p = sub.add_parser("parity", help="compare f64 and f32 prediction paths")
    p.add_argument("--model", action="append")
    p.add_argument("--csv")
    p.add_argument("--eps", type=float)
    p.add_argument("--report-dir", dest="report_dir")

    p = sub.add_parser("bench", help="single-sample f32 latency benchmark")
    p.add_argument("--model", action="append")
    p.add_argument("--csv")
    p.add_argument("--reps", type=int)
    p.add_argument("--report-dir", dest="report_dir")

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "export": cmd_export,
    "parity": cmd_parity,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config) if args.config else {}
        resolver = _Resolver(args, config)
        return _COMMANDS[args.command](resolver)
    except (PvBoostError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
