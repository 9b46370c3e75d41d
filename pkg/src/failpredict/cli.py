"""``failpredict`` command line.

Exit codes: 0 success, 1 validation error (bad input, config or
artifact mismatch), 2 runtime or numeric error.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import classifier, logparse, prioritize, schema, synth
from .experiment import ExperimentConfig, run_experiment, run_sweep, write_loss_traces

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def failure_name(index: int, f_max: int) -> str:
    if index == classifier.INVALID:
        return "INVALID"
    if index == f_max:
        return "F*"
    return f"F_{index + 1}"


def _emit(args, doc: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(doc, indent=1))
    else:
        print("\n".join(lines))


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seeds=(args.seed,))
    return cfg


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def _bits(text: str) -> np.ndarray:
    text = text.strip()
    parts = text.split(",") if "," in text else list(text.replace(" ", ""))
    return schema.as_event_vector([int(p) for p in parts])


def _floats(text: str) -> np.ndarray:
    return np.array([float(p) for p in text.replace(",", " ").split()])


def cmd_gen_catalog(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    cat = schema.random_catalog(cfg.schema, cfg.f_max, cfg.alpha_low, cfg.alpha_high, seed)
    out = _out(args, "catalog.json")
    schema.save_catalog(cat, out)
    hist = schema.popcount_histogram(cat)
    _emit(args, {"path": str(out), "f_max": cat.f_max, "e_max": cat.schema.e_max,
                 "popcount_histogram": {str(k): v for k, v in hist.items()}},
          [f"wrote {out}: f_max={cat.f_max} e_max={cat.schema.e_max}",
           "popcounts: " + " ".join(f"{k}:{v}" for k, v in hist.items())])
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    cat = schema.load_catalog(args.catalog)
    table = synth.MappingTable.preset(cfg.mapping, cat.schema.e_max)
    ds = synth.build_dataset(cat, cfg.s_input, cfg.test_fraction, table, cfg.seeds[0])
    out = _out(args, "dataset.npz")
    ds.save(out)
    n_invalid = int((ds.labels == cat.invalid_index).sum())
    _emit(args, {"path": str(out), "s_train": ds.s_train, "s_test": ds.s_test,
                 "n_invalid": n_invalid, "seed": ds.seed},
          [f"wrote {out}: s_train={ds.s_train} s_test={ds.s_test} invalid rows={n_invalid}"])
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = synth.Dataset.load(args.dataset)
    arch = classifier.MLPArchitecture(ds.e_max, ds.n_classes, cfg.hidden_layers)
    model = classifier.train(ds, arch, cfg.train_config(cfg.seeds[0]))
    out = _out(args, "model.npz")
    model.save(out)
    trace_path = out.with_suffix(".loss.dat")
    model.save_loss_trace(trace_path)
    _emit(args, {"path": str(out), "loss_trace": model.loss_trace, "loss_trace_path": str(trace_path)},
          [f"wrote {out} ({arch.hidden_layers} hidden layers, {len(model.loss_trace)} epochs)",
           f"loss: first={model.loss_trace[0]:.4f} last={model.loss_trace[-1]:.4f}"])
    return EXIT_OK


def cmd_eval(args) -> int:
    model = classifier.TrainedModel.load(args.model)
    ds = synth.Dataset.load(args.dataset)
    d_thres = args.d_thres if args.d_thres is not None else _config(args).d_thres
    X, y = (ds.X_train, ds.y_train) if args.split == "train" else (ds.X_test, ds.y_test)
    p_error = classifier.evaluate(model, X, y, d_thres)
    _emit(args, {"p_error": p_error, "split": args.split, "n": int(len(y)), "d_thres": d_thres},
          [f"P_error on {args.split} split ({len(y)} rows, D_thres={d_thres}): {p_error:.2f}%"])
    return EXIT_OK


def _input_bits(args, e_max: int) -> tuple[np.ndarray, list]:
    if args.bits is not None:
        return schema.as_event_vector(_bits(args.bits), e_max), []
    if not (args.log and args.event_map and args.catalog):
        raise ValueError("give either --bits or --log with --event-map and --catalog")
    cat = schema.load_catalog(args.catalog)
    emap = logparse.TextEventMap.load(args.event_map)
    emap.check_schema(cat)
    records = logparse.load_log(args.log, args.time_format, args.separator)
    tuples = logparse.parse_stream(records, emap, logparse.WindowConfig(args.window_span, args.step))
    bits = logparse.assemble_input(tuples, cat)
    if bits.shape[0] != e_max:
        raise ValueError(f"catalog has {bits.shape[0]} features, model expects {e_max}")
    return bits, tuples


def cmd_predict(args) -> int:
    cfg = _config(args)
    model = classifier.TrainedModel.load(args.model)
    bits, _ = _input_bits(args, model.n_features)
    table = (synth.MappingTable.from_dict(model.mapping) if model.mapping
             else synth.MappingTable.linear(model.n_features))
    x = synth.minmax_normalize(synth.map_midpoint(bits, table))
    d_thres = args.d_thres if args.d_thres is not None else cfg.d_thres
    pred = classifier.predict(model, x, d_thres)
    f_max = model.n_classes - 1
    doc = {
        "bits": bits.tolist(),
        "probabilities": pred.probabilities.tolist(),
        "decided": "INVALID" if pred.decided_class == classifier.INVALID else pred.decided_class,
        "decided_name": failure_name(pred.decided_class, f_max),
        "argmax": pred.argmax_class,
        "one_hot": pred.one_hot().tolist(),
    }
    lines = [f"decided: {doc['decided_name']} (argmax {failure_name(pred.argmax_class, f_max)}, "
             f"p={pred.probabilities[pred.argmax_class]:.6g})"]
    if args.pairwise:
        c = prioritize.load_pairwise(args.pairwise)
        if c.shape[0] != f_max:
            raise ValueError(f"pairwise matrix covers {c.shape[0]} failures, model has {f_max}")
        weights = prioritize.principal_eigenvector(c)
        idx, combined = prioritize.prioritized_argmax(pred.probabilities, weights, cfg.delta_p, cfg.delta_w)
        doc.update(prioritized=idx, prioritized_name=failure_name(idx, f_max),
                   weights=weights.tolist(), combined=combined.tolist())
        lines.append(f"prioritized: {failure_name(idx, f_max)}")
    _emit(args, doc, lines)
    return EXIT_OK


def cmd_prioritize(args) -> int:
    cfg = _config(args)
    probs = _floats(Path(args.probs_file).read_text() if args.probs_file else args.probs)
    c = prioritize.load_pairwise(args.pairwise)
    weights = prioritize.principal_eigenvector(c)
    delta_p = args.delta_p if args.delta_p is not None else cfg.delta_p
    delta_w = args.delta_w if args.delta_w is not None else cfg.delta_w
    idx, combined = prioritize.prioritized_argmax(probs, weights, delta_p, delta_w)
    f_max = len(weights)
    valid = probs[:f_max]
    raw = int(np.argmax(valid))
    doc = {
        "weights": weights.tolist(),
        "filtered_weights": prioritize.shape_filter(weights, delta_w).tolist(),
        "filtered_probabilities": prioritize.shape_filter(valid, delta_p).tolist(),
        "combined": combined.tolist(),
        "raw_argmax": raw,
        "prioritized": idx,
        "prioritized_name": failure_name(idx, f_max),
    }
    _emit(args, doc, [f"raw prediction: {failure_name(raw, f_max)}",
                      f"prioritized: {failure_name(idx, f_max)}"])
    return EXIT_OK


def _iso(ms: float) -> str:
    return datetime.fromtimestamp(ms / 1000.0, timezone.utc).isoformat(timespec="milliseconds")


def cmd_parse(args) -> int:
    if not args.catalog:
        raise ValueError("parse needs --catalog to lay out the input vector")
    cat = schema.load_catalog(args.catalog)
    emap = logparse.TextEventMap.load(args.event_map)
    emap.check_schema(cat)
    records = logparse.load_log(args.log, args.time_format, args.separator)
    tuples = logparse.parse_stream(records, emap, logparse.WindowConfig(args.window_span, args.step))
    bits = logparse.assemble_input(tuples, cat)
    doc = {"tuples": [[t.event_index, t.time] for t in tuples], "bits": bits.tolist()}
    _emit(args, doc, [f"E_{t.event_index + 1} @ {_iso(t.time)}" for t in tuples]
          + ["bits: " + "".join(str(b) for b in bits)])
    return EXIT_OK


def _pct(value) -> str:
    return "n/a" if value is None else f"{value:.2f}%"


def cmd_run_experiment(args) -> int:
    cfg = _config(args)
    if args.sweep:
        key, _, raw = args.sweep.partition("=")
        if key not in ExperimentConfig.__dataclass_fields__ or not raw:
            raise ValueError(f"bad --sweep {args.sweep!r}, expected key=v1,v2,...")
        values = [json.loads(v) for v in raw.split(",")]
        report = run_sweep(cfg, key, values)
        lines = [f"{key}={p['value']}: mean P_error={_pct(p['aggregate']['mean_p_error'])}"
                 for p in report["points"]]
    else:
        report = run_experiment(cfg)
        agg = report["aggregate"]
        lines = [f"seed {r['seed']}: " + (f"P_error={r['p_error']:.2f}% train {r['train_time_s']:.2f}s"
                                          if "error" not in r else f"FAILED {r['error']}")
                 for r in report["runs"]]
        lines.append(f"mean P_error={_pct(agg['mean_p_error'])} over {agg['n_ok']} seeds")
    out = _out(args, "report.json")
    out.write_text(json.dumps(report, indent=1) + "\n")
    if "runs" in report:
        write_loss_traces(report, out.with_suffix("").as_posix() + "_loss")
    lines.append(f"wrote {out}")
    _emit(args, report, lines)
    if "runs" in report and report["aggregate"]["n_ok"] == 0:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    table = synth.MappingTable.from_dict(json.loads(Path(args.mapping).read_text())) if args.mapping else None
    serve(args.model, args.host, args.port, args.d_thres if args.d_thres is not None else 0.5, table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="print machine-readable JSON instead of text")

    parser = argparse.ArgumentParser(prog="failpredict", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def log_args(p):
        p.add_argument("--log")
        p.add_argument("--event-map")
        p.add_argument("--catalog")
        p.add_argument("--window-span", type=float, help="window length in ms")
        p.add_argument("--step", type=float, help="window step in ms")
        p.add_argument("--time-format", choices=["iso", "epoch_ms"], default="iso")
        p.add_argument("--separator", default=None, help="column separator (default: whitespace)")

    add("gen-catalog", cmd_gen_catalog, "draw a random failure catalog")
    p = add("synth", cmd_synth, "generate an artificial data set")
    p.add_argument("--catalog", required=True)
    p = add("train", cmd_train, "train the classifier")
    p.add_argument("--dataset", required=True)
    p = add("eval", cmd_eval, "compute P_error")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=["test", "train"], default="test")
    p.add_argument("--d-thres", type=float)
    p = add("predict", cmd_predict, "classify one bit vector or log")
    p.add_argument("--model", required=True)
    p.add_argument("--bits")
    p.add_argument("--pairwise", help="pairwise importance matrix for prioritization")
    p.add_argument("--d-thres", type=float)
    log_args(p)
    p = add("prioritize", cmd_prioritize, "re-rank probabilities with AHP weights")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--probs")
    g.add_argument("--probs-file")
    p.add_argument("--pairwise", required=True)
    p.add_argument("--delta-p", type=float)
    p.add_argument("--delta-w", type=float)
    p = add("parse", cmd_parse, "turn a log into event tuples and a bit vector")
    log_args(p)
    p = add("run-experiment", cmd_run_experiment, "seed-averaged synth/train/eval")
    p.add_argument("--sweep", help="key=v1,v2,... to vary one config value")
    p = add("serve", cmd_serve, "run the classification HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--mapping", help="mapping table JSON (default: the one stored in the model)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--d-thres", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", None), ("json", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.command in ("parse", "predict") and args.log and (args.window_span is None or args.step is None):
        print("error: --window-span and --step are required with --log", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
