"""Command-line front door for the whole pipeline.

Subcommands: ``convert`` (.cwa to CSV), ``synth`` (generate a herd),
``featurize`` (windows to feature CSV), ``train`` (either model, evaluated
under the grouped protocol), ``evaluate`` (re-score a saved model on the
held-out calves), ``predict`` (recording to timeline CSV), ``report``
(timeline to metrics JSON) and ``serve`` (start the HTTP service).

Exit codes: 0 success, 1 usage error, 2 data error.  Primary data goes to
stdout or ``--out``; logs go to stderr.  Given the same ``--seed`` and
inputs, outputs are byte-identical (fixed JSON key order, floats at 9
significant digits).
"""

import argparse
import configparser
import sys
from pathlib import Path


from . import behaviour, jsonutil, model_io, pipeline, synth
from .cwa import parse_csv, parse_cwa, regularize, write_csv, write_cwa
from .errors import CalfWatchError
from .evaluation import make_split, report_from_predictions
from .features import FEATURE_NAMES
from .forest import ForestModel, predict_rf
from .ridge import DEFAULT_ALPHAS, RidgeModel, predict_ridge
from .rocket import sample_kernels, transform
from .signals import (
    ACTIVITY,
    BEHAVIOURS,
    align_labels,
    derive_channels,
    parse_ethogram_csv,
    segment,
    stack_windows,
    write_ethogram_csv,
)
from .timeutil import format_iso, parse_iso

DEFAULT_KERNELS = 10_000


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _log(msg):
    print(msg, file=sys.stderr)


# --- config file -----------------------------------------------------------

def _load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        read = cp.read(path)
        if not read:
            raise CalfWatchError(f"config file {path} not found")
    return cp


def _cfg(cp, section, key, fallback):
    return cp.get(section, key, fallback=fallback) if cp.has_section(section) else fallback


def _parse_int_list(text):
    return [None if t.strip().lower() in ("none", "unbounded") else int(t)
            for t in text.split(",") if t.strip()]


def _profiles_from_config(cp) -> tuple:
    """Default profiles with per-section overrides from ``[profiles.NAME]``."""
    by_name = {p.name: p for p in synth.DEFAULT_PROFILES}
    for section in cp.sections():
        if not section.startswith("profiles."):
            continue
        name = section.split(".", 1)[1]
        base = by_name.get(name) or synth.BehaviourProfile(
            name, (0, 0, 1), 1.0, 0.1, 0.02, 30.0)
        orientation = tuple(float(v) for v in cp.get(section, "orientation").split(",")) \
            if cp.has_option(section, "orientation") else base.orientation
        by_name[name] = synth.BehaviourProfile(
            name=name,
            orientation=orientation,
            osc_freq_hz=cp.getfloat(section, "freq", fallback=base.osc_freq_hz),
            osc_amp_g=cp.getfloat(section, "amp", fallback=base.osc_amp_g),
            noise_sd_g=cp.getfloat(section, "noise", fallback=base.noise_sd_g),
            dwell_mean_s=cp.getfloat(section, "dwell_mean", fallback=base.dwell_mean_s),
            dwell_min_s=cp.getfloat(section, "dwell_min", fallback=base.dwell_min_s),
            activity=cp.get(section, "activity", fallback=base.activity),
            wander=cp.getboolean(section, "wander", fallback=base.wander),
        )
    return tuple(by_name.values())


def _rf_grid_from_config(cp, args):
    trees = _parse_int_list(getattr(args, "trees", None)
                            or _cfg(cp, "model1", "trees", "100,300,500"))
    depths = _parse_int_list(getattr(args, "depths", None)
                             or _cfg(cp, "model1", "depths", "none,10,20"))
    leaves = _parse_int_list(getattr(args, "min_leaf", None)
                             or _cfg(cp, "model1", "min_leaf", "1,5,10"))
    import itertools
    return [
        {"n_trees": t, "max_depth": d, "min_samples_leaf": m}
        for t, d, m in itertools.product(trees, depths, leaves)
    ]


def _alphas_from_config(cp, args):
    text = getattr(args, "alphas", None) or _cfg(cp, "model2", "alphas", "")
    if text:
        return [float(a) for a in text.split(",") if a.strip()]
    return list(DEFAULT_ALPHAS)


# --- dataset directory -----------------------------------------------------

def _write_dataset(out_dir: Path, herd: synth.HerdDataset, fmt: str):
    rec_dir = out_dir / "recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)
    for calf in herd.calves:
        if fmt == "cwa":
            (rec_dir / f"{calf.calf_id}.cwa").write_bytes(
                write_cwa(calf.recording, "packed"))
        else:
            (rec_dir / f"{calf.calf_id}.csv").write_text(
                write_csv(calf.recording))
    (out_dir / "ethogram.csv").write_text(
        write_ethogram_csv(c.ethogram for c in herd.calves))
    manifest = {
        "calves": [c.calf_id for c in herd.calves],
        "seed": herd.seed,
        "format": fmt,
        "duration_s": float((herd.calves[0].recording.t[-1]
                             - herd.calves[0].recording.t[0] + 40) / 1000.0),
    }
    (out_dir / "herd.json").write_text(jsonutil.dumps(manifest, indent=2) + "\n")


def _load_recording(path: Path):
    if path.suffix == ".cwa":
        return parse_cwa(path.read_bytes())
    return parse_csv(path.read_text())


def _load_dataset(data_dir: str):
    """Yield (calf_id, Recording, Ethogram) from a dataset directory."""
    root = Path(data_dir)
    eth_path = root / "ethogram.csv"
    if not eth_path.exists():
        raise CalfWatchError(f"{eth_path} not found")
    ethograms = parse_ethogram_csv(eth_path.read_text())
    rec_dir = root / "recordings"
    triples = []
    for path in sorted(rec_dir.iterdir()):
        if path.suffix not in (".csv", ".cwa"):
            continue
        calf_id = path.stem
        if calf_id not in ethograms:
            raise CalfWatchError(f"no ethogram rows for {calf_id}")
        triples.append((calf_id, _load_recording(path), ethograms[calf_id]))
    if not triples:
        raise CalfWatchError(f"no recordings under {rec_dir}")
    return triples


# --- subcommands -----------------------------------------------------------

def _cmd_convert(args, cp):
    rec = _load_recording(Path(args.input))
    text = write_csv(rec)
    if args.out:
        Path(args.out).write_text(text)
        _log(f"wrote {len(rec)} samples to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_synth(args, cp):
    calves = args.calves or int(_cfg(cp, "synth", "calves", "30"))
    duration = args.duration or float(_cfg(cp, "synth", "duration", "3600"))
    profiles = _profiles_from_config(cp)
    herd = synth.generate_herd(calves, duration, args.seed, profiles=profiles)
    out_dir = Path(args.out)
    _write_dataset(out_dir, herd, args.format)
    _log(f"wrote {calves} calves x {duration:.0f} s to {out_dir}")
    return 0


def _kernelset_for(args, cp, seed):
    k = args.kernels or int(_cfg(cp, "rocket", "kernels", str(DEFAULT_KERNELS)))
    return sample_kernels(seed=seed, num_kernels=k)


def _cmd_featurize(args, cp):
    triples = _load_dataset(args.data)
    rows = []
    header = None
    if args.features == "handcrafted":
        header = ["calf_id", "start_t", *FEATURE_NAMES]
    else:
        ks = _kernelset_for(args, cp, args.seed)
        names = [f"k{i:05d}_{f}" for i in range(len(ks)) for f in ("ppv", "max")]
        header = ["calf_id", "start_t", *names]
    from .features import handcrafted_many

    for calf_id, rec, eth in triples:
        ds = derive_channels(regularize(rec))
        ds.calf_id = calf_id
        labeled = align_labels(segment(ds, args.purpose), eth)
        windows = [lw.window for lw in labeled]
        if not windows:
            continue
        if args.features == "handcrafted":
            X = handcrafted_many(windows)
        else:
            X = transform(stack_windows(windows), ks)
        for w, row in zip(windows, X):
            rows.append(f"{calf_id},{format_iso(w.start_t)},"
                        + ",".join(f"{v:.9g}" for v in row))
    text = ",".join(header) + "\n" + "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        _log(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_train(args, cp):
    triples = _load_dataset(args.data)
    plan = make_split([t[0] for t in triples], seed=args.seed)
    _log(f"split: {len(plan.test_calves)} test / {len(plan.train_calves)} train calves")

    kernelset = _kernelset_for(args, cp, args.seed) if args.model == "model2" else None
    table = pipeline.build_window_table(triples, kernelset, purpose="training")
    _log(f"{len(table)} labeled training windows")

    if args.model == "model1":
        model, subset, report = pipeline.train_model1(
            table, plan, seed=args.seed, rf_grid=_rf_grid_from_config(cp, args))
        _log(f"selected features: {', '.join(subset.names)}")
    else:
        model, report = pipeline.train_model2(
            table, plan, kernelset, seed=args.seed,
            alphas=_alphas_from_config(cp, args))

    Path(args.out).write_bytes(model_io.save_model(model))
    report_json = report.to_json()
    if args.report:
        Path(args.report).write_text(report_json)
    if args.json:
        sys.stdout.write(report_json)
    else:
        print(f"balanced accuracy on held-out calves: "
              f"{report.balanced_accuracy:.9g}")
        print(f"chosen: {report.chosen_params}")
    _log(f"wrote model to {args.out}")
    return 0


def _cmd_evaluate(args, cp):
    model = model_io.load_model(Path(args.model).read_bytes())
    triples = _load_dataset(args.data)
    plan = make_split([t[0] for t in triples], seed=args.seed)
    test = [t for t in triples if t[0] in set(plan.test_calves)]
    if isinstance(model, RidgeModel):
        table = pipeline.build_window_table(test, model.kernelset, "training")
        pred, _ = predict_ridge(model, table.rocket)
        report = report_from_predictions(table.behaviour, pred, BEHAVIOURS,
                                         {"alpha": model.alpha}, [])
    else:
        table = pipeline.build_window_table(test, None, "training")
        X = pipeline.subset_columns(model, table.handcrafted)
        pred, _ = predict_rf(model, X)
        report = report_from_predictions(
            table.activity, pred, ACTIVITY,
            {"n_trees": model.params.n_trees, "max_depth": model.params.max_depth,
             "min_samples_leaf": model.params.min_samples_leaf}, [])
    if args.json:
        sys.stdout.write(report.to_json())
    else:
        print(f"balanced accuracy on held-out calves: "
              f"{report.balanced_accuracy:.9g}")
    return 0


def _cmd_predict(args, cp):
    model1 = model_io.load_model(Path(args.model1).read_bytes())
    model2 = model_io.load_model(Path(args.model2).read_bytes())
    if not isinstance(model1, ForestModel) or not isinstance(model2, RidgeModel):
        raise CalfWatchError("--model1 must be a forest artifact and --model2 a ridge artifact")
    rec = _load_recording(Path(args.recording))
    tl = pipeline.predict_recording(rec, model1, model2,
                                    calf_id=args.calf_id or Path(args.recording).stem)
    text = behaviour.write_timeline_csv(tl)
    if args.out:
        Path(args.out).write_text(text)
        _log(f"wrote {len(tl)} windows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args, cp):
    tl = behaviour.parse_timeline_csv(Path(args.timeline).read_text())
    from_ms = parse_iso(args.range_from) if args.range_from else int(tl.start.min())
    to_ms = parse_iso(args.range_to) if args.range_to else int(tl.start.max()) + 3000
    out = behaviour.metrics_json(tl, from_ms, to_ms, args.granularity, tz=args.tz)
    sys.stdout.write(jsonutil.dumps(out, indent=2) + "\n")
    return 0


def _cmd_serve(args, cp):
    import uvicorn

    from .service import create_app

    app = create_app(args.store, tz=args.tz, workers=args.workers,
                     frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser ----------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="calfwatch",
                     description="calf behaviour monitoring pipeline")
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help=".cwa (or CSV) to interchange CSV")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic herd dataset")
    p.add_argument("--calves", type=int)
    p.add_argument("--duration", type=float, help="seconds per calf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "cwa"), default="csv")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("featurize", help="labeled windows to a feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--features", choices=("handcrafted", "rocket"),
                   default="handcrafted")
    p.add_argument("--purpose", choices=("training", "inference"),
                   default="training")
    p.add_argument("--kernels", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_featurize)

    p = sub.add_parser("train", help="train + evaluate one model")
    p.add_argument("model", choices=("model1", "model2"))
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model artifact path")
    p.add_argument("--report", help="write the EvalReport JSON here")
    p.add_argument("--kernels", type=int)
    p.add_argument("--trees", help="comma list, model1 grid")
    p.add_argument("--depths", help="comma list (none for unbounded)")
    p.add_argument("--min-leaf", dest="min_leaf", help="comma list")
    p.add_argument("--alphas", help="comma list, model2 grid")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on held-out calves")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0, help="split plan seed")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("predict", help="recording + models to timeline CSV")
    p.add_argument("--recording", required=True)
    p.add_argument("--model1", required=True)
    p.add_argument("--model2", required=True)
    p.add_argument("--calf-id", dest="calf_id")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("report", help="timeline CSV to metrics JSON")
    p.add_argument("--timeline", required=True)
    p.add_argument("--from", dest="range_from")
    p.add_argument("--to", dest="range_to")
    p.add_argument("--granularity", choices=("hour", "summary", "day_night"),
                   default="hour")
    p.add_argument("--tz", default="UTC")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=None,
                   help="background job workers (default: CPU count)")
    p.add_argument("--tz", default="UTC")
    p.add_argument("--frontend", help="static dashboard bundle directory")
    p.set_defaults(fn=_cmd_serve)

    return parser


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        cp = _load_config(args.config)
        return args.fn(args, cp)
    except CalfWatchError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
