"""Command-line front end.

Every command writes ``manifest.json`` next to its outputs; the manifest's
``config`` block is itself a valid ``--config`` file, so a run can be
repeated with ``specal <command> --config <dir>/manifest.json``.

Exit codes: 0 success, 1 usage/parameter error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, cv, features, kernels, mlp, plots, synth, tuning
from . import pipeline as pl
from . import preprocess as pp
from .errors import DataError, NumericalError, ParameterError, SpecalError
from .spectra import SpectraSet, SplitPlan, format_float, load_csv, save_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _default_seed() -> int:
    env = os.environ.get("SPECAL_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ParameterError(f"SPECAL_SEED must be an integer, got {env!r}") from None


# --- manifest -------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, command: str, config: dict, seed, inputs, started: str) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "tool": "specal",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "kernel_backend": kernels.BACKEND,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return path


# --- shared option groups -------------------------------------------------


def _add_common(p, seed=True, jobs=False):
    p.add_argument("--config", help="JSON file with option values (flags given on the command line win)")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="master seed (default: $SPECAL_SEED or 0)")
    if jobs:
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: available cores)")


def _add_plan(p):
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--reps", type=int, default=None, help="repetitions (default 5, or 50 with --full)")
    p.add_argument("--val-fraction", type=float, default=2 / 9)
    p.add_argument("--full", action="store_true", help="full-scale repetitions, grids and training budget")


def _add_train(p):
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="initial learning rate")
    p.add_argument("--decay", type=float, default=None, help="per-epoch learning-rate decay")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--l2", type=float, default=None)


def _add_model(p, required=False):
    p.add_argument("--model", choices=("pls", "mlp"), default=None)
    p.add_argument("--lv", type=int, default=10, help="PLS latent variables")
    p.add_argument("--arch", default=None, help="MLP hidden sizes, e.g. 10 or 180,10")


def _train_cfg(a) -> mlp.TrainConfig:
    base = mlp.TrainConfig() if a.full else mlp.DESK_TRAIN
    kw = {k: v for k, v in (("max_epochs", a.max_epochs), ("learning_rate", a.lr), ("decay", a.decay),
                            ("patience", a.patience), ("l2", a.l2)) if v is not None}
    return replace(base, **kw)


def _plan(a, seed) -> SplitPlan:
    reps = a.reps if a.reps is not None else (50 if a.full else 5)
    return SplitPlan(a.folds, reps, a.val_fraction, seed)


def _model_spec(a, default_kind="mlp") -> pl.ModelSpec:
    kind = a.model or ("mlp" if a.arch else default_kind)
    if kind == "pls":
        return pl.ModelSpec.pls(a.lv)
    arch = mlp.MlpArchitecture.parse(a.arch) if a.arch else mlp.MlpArchitecture((10,))
    return pl.ModelSpec.mlp(arch, _train_cfg(a))


def _load_input(path) -> SpectraSet:
    if not path:
        raise ParameterError("--input is required")
    return load_csv(path)


def _progress(done, total, label):
    print(f"[{done}/{total}] {label}", file=sys.stderr, flush=True)


# --- commands -------------------------------------------------------------


def cmd_synth(a, seed):
    cfg = synth.SynthConfig(
        n_eggs=a.n_eggs, n_days=a.n_days, noise_sd=a.noise_sd, informative_fraction=a.informative_fraction,
        scatter=not a.no_scatter, seed=seed,
    )
    data, truth = synth.generate(cfg)
    csv_path, truth_path = synth.save_fixture(data, truth, a.out)
    print(f"wrote {csv_path} ({data.n_samples} x {data.n_wavelengths}) and {truth_path}")
    return a.out, []


def cmd_preprocess(a, seed):
    data = _load_input(a.input)
    cfg = pp.PreprocessConfig.parse(a.prep)
    calib = load_csv(a.reference_from) if a.reference_from else data
    ref = pp.fit_context(cfg, calib)
    out = pp.apply(cfg, data, ref)
    out_path = Path(a.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out, out_path, comment=f"preprocessing: {cfg.label()}\ntarget: storage days")
    print(f"wrote {out_path} ({out.n_samples} x {out.n_wavelengths})")
    return out_path.parent, [a.input, a.reference_from]


def cmd_select(a, seed):
    data = _load_input(a.input)
    cfg = pp.PreprocessConfig.parse(a.prep)
    X = pp.apply(cfg, data, pp.fit_context(cfg, data))
    ranking = features.rank_by_correlation(X.samples, X.targets)
    sel = features.select_threshold(ranking, a.threshold)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    features.save_ranking_csv(ranking, X.axis, out / "ranking.csv")
    doc = {"preprocessing": cfg.to_dict(), "threshold": a.threshold, "n_retained": int(sel.retained.size),
           "retained_indices": sel.retained.tolist(), "retained_nm": X.axis.values[sel.retained].tolist()}
    (out / "selection.json").write_text(json.dumps(doc, indent=1), encoding="utf-8")
    print(f"retained {sel.retained.size} of {ranking.n_features} wavelengths")
    return out, [a.input]


def cmd_cv(a, seed):
    data = _load_input(a.input)
    spec = pl.PipelineSpec(pp.PreprocessConfig.parse(a.prep), a.threshold, _model_spec(a))
    plan = _plan(a, seed)
    report = cv.run_repeated_cv(data, plan, spec, a.jobs)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "cv_report.csv")
    report.to_json(out / "cv_report.json")
    agg = report.aggregate()
    for s in cv.SUBSETS:
        r = agg[s]["r_squared"]
        print(f"{s:<10} R2 {r['mean']:.4f} ± {r['std']:.4f}  RMSE {agg[s]['rmse']['mean']:.4f}")
    if report.n_failed:
        print(f"{report.n_failed} fold(s) failed; see cv_report.json", file=sys.stderr)
    return out, [a.input]


def _read_winner(directory, name) -> dict:
    path = Path(directory) / f"{name}_winner.json"
    if not path.exists():
        raise DataError(f"{path} not found (run the earlier phase first)")
    return json.loads(path.read_text(encoding="utf-8"))


def _grid(a, seed) -> tuning.GridSpec:
    g = tuning.GridSpec.full(seed) if a.full else tuning.GridSpec.desk(seed)
    return replace(g, train=_train_cfg(a), plan=_plan(a, seed))


def cmd_tune(a, seed):
    data = _load_input(a.input)
    grid = _grid(a, seed)
    grid = _narrow_grid(grid, a)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    ev = tuning.Evaluator(data, grid.plan, a.jobs, out / "journal", _progress)
    prev = a.previous or a.out

    if a.phase == "all":
        run = tuning.run_all(data, grid, out, a.jobs, _progress)
        print(f"final: {run.final.pipeline.spec.label()}")
        print(run.final.summary_text())
        return out, [a.input]
    if a.phase == "phase1":
        res = tuning.phase1(data, grid, evaluator=ev)
    elif a.phase == "savgol":
        model = _model_spec(a) if (a.model or a.arch) else None
        if model is None and (Path(prev) / "phase1_winner.json").exists():
            w = pl.PipelineSpec.from_dict(_read_winner(prev, "phase1")["pipeline"])
            model = w.model if w.model.kind == "mlp" else None
        res = tuning.savgol_search(data, grid, model or grid.mlp_spec(), evaluator=ev)
        (out / "savgol_table.txt").write_text(tuning.savgol_table_text(res), encoding="utf-8")
        print(tuning.savgol_table_text(res))
    elif a.phase == "phase2":
        prep = _resolve_prep(a, prev)
        res = tuning.phase2(data, grid, prep, evaluator=ev)
    else:
        base = _resolve_base(a, prev)
        res = tuning.phase3(data, grid, base, evaluator=ev)
    res.write(out, a.phase)
    print(f"{a.phase} winner: {res.winner.label()}  mean R2 {res.winner.mean:.4f} ± {res.winner.std:.4f}")
    return out, [a.input]


def _floats(text) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from None


def _narrow_grid(grid: tuning.GridSpec, a) -> tuning.GridSpec:
    kw = {}
    if a.thresholds:
        kw["phase3_thresholds"] = _floats(a.thresholds)
    if a.phase1_thresholds:
        kw["phase1_thresholds"] = _floats(a.phase1_thresholds)
    if a.techniques:
        kw["techniques"] = tuple(pp.PreprocessConfig.parse(t.strip()).technique for t in a.techniques.split(","))
    if a.widths:
        kw["savgol_widths"] = tuple(int(w) for w in _floats(a.widths))
    if a.architectures:
        kw["architectures"] = tuple(mlp.MlpArchitecture.parse(h.strip()) for h in a.architectures.split(";"))
    return replace(grid, **kw) if kw else grid


def _resolve_prep(a, prev) -> pp.PreprocessConfig:
    if a.prep:
        return pp.PreprocessConfig.parse(a.prep)
    w1 = pl.PipelineSpec.from_dict(_read_winner(prev, "phase1")["pipeline"])
    if w1.prep.technique is pp.Technique.SAVGOL and (Path(prev) / "savgol_winner.json").exists():
        return pl.PipelineSpec.from_dict(_read_winner(prev, "savgol")["pipeline"]).prep
    return w1.prep


def _resolve_base(a, prev) -> pl.PipelineSpec:
    if a.prep and (a.arch or a.model):
        return pl.PipelineSpec(pp.PreprocessConfig.parse(a.prep), 100.0, _model_spec(a))
    w2 = pl.PipelineSpec.from_dict(_read_winner(prev, "phase2")["pipeline"])
    prep = pp.PreprocessConfig.parse(a.prep) if a.prep else w2.prep
    model = w2.model
    if (Path(prev) / "phase1_winner.json").exists():
        w1 = pl.PipelineSpec.from_dict(_read_winner(prev, "phase1")["pipeline"])
        if w1.model.kind == "pls":  # the architecture sweep only applies when an MLP won phase 1
            model = w1.model
    if a.arch or a.model:
        model = _model_spec(a)
    return pl.PipelineSpec(prep, 100.0, model)


def cmd_finalize(a, seed):
    data = _load_input(a.input)
    if a.previous:
        spec = pl.PipelineSpec.from_dict(_read_winner(a.previous, "phase3")["pipeline"])
        if a.prep or a.arch or a.model or a.threshold is not None:
            spec = pl.PipelineSpec(
                pp.PreprocessConfig.parse(a.prep) if a.prep else spec.prep,
                a.threshold if a.threshold is not None else spec.threshold,
                _model_spec(a) if (a.arch or a.model) else spec.model,
            )
    else:
        if not a.prep:
            raise ParameterError("finalize needs --prep (or --from a tuning directory)")
        spec = pl.PipelineSpec(pp.PreprocessConfig.parse(a.prep), a.threshold if a.threshold is not None else 100.0,
                               _model_spec(a))
    res = tuning.finalize(data, spec, _plan(a, seed), a.jobs)
    res.write(a.out)
    print(f"pipeline: {spec.label()}")
    print(res.summary_text())
    return a.out, [a.input]


def cmd_predict(a, seed):
    fitted = pl.FittedPipeline.load(a.model_file)
    data = _load_input(a.input)
    yhat = fitted.predict(data)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        fh.write("sample_id,target,predicted\n")
        for sid, t, p in zip(data.sample_ids, data.targets, yhat):
            fh.write(f"{sid},{format_float(t)},{format_float(p)}\n")
    print(f"wrote {out} ({yhat.size} predictions)")
    return out.parent, [a.model_file, a.input]


def cmd_plot(a, seed):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = []
    made = []
    if a.spectra:
        data = load_csv(a.spectra)
        inputs.append(a.spectra)
        cfg = pp.PreprocessConfig.parse(a.prep) if a.prep else pp.PreprocessConfig()
        X = pp.apply(cfg, data, pp.fit_context(cfg, data))
        plots.write(plots.spectra_overlay(X.axis.values, X.samples, f"Spectra ({cfg.label()})"), out / "spectra.svg")
        made.append("spectra.svg")
    if a.results:
        inputs.append(a.results)
        series = _threshold_series(a.results)
        plots.write(plots.r2_vs_threshold(series), out / "r2_vs_threshold.svg")
        made.append("r2_vs_threshold.svg")
    if a.model_file:
        if not a.input:
            raise ParameterError("--model-file needs --input spectra to predict")
        fitted = pl.FittedPipeline.load(a.model_file)
        data = load_csv(a.input)
        inputs += [a.model_file, a.input]
        yhat = fitted.predict(data)
        plots.write(plots.actual_vs_predicted(data.targets, yhat), out / "actual_vs_predicted.svg")
        plots.write(plots.error_histogram(data.targets - yhat), out / "abs_error_hist.svg")
        made += ["actual_vs_predicted.svg", "abs_error_hist.svg"]
    if not made:
        raise ParameterError("nothing to plot: give --spectra, --results or --model-file")
    print("wrote " + ", ".join(made))
    return out, inputs


def _threshold_series(path) -> dict:
    import csv

    series: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["mean"] in ("", "nan"):
                continue
            key = f"{row['model']} / technique {row['technique']}" + (f" {row['savgol']}" if row["savgol"] else "")
            xs, ys = series.setdefault(key, ([], []))
            xs.append(float(row["threshold"]))
            ys.append(float(row["mean"]))
    series = {k: v for k, v in series.items() if len(v[0]) > 1}
    if not series:
        raise DataError(f"{path} has no threshold sweep to plot")
    return series


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specal", description="NIR spectral calibration: preprocessing, selection, PLS/MLP, repeated CV, grid tuning")
    p.add_argument("--version", action="version", version=f"specal {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic fixture (spectra.csv + truth.json)")
    _add_common(s)
    s.add_argument("--out", default="fixture")
    s.add_argument("--n-eggs", type=int, default=30)
    s.add_argument("--n-days", type=int, default=22)
    s.add_argument("--noise-sd", type=float, default=0.004)
    s.add_argument("--informative-fraction", type=float, default=0.2)
    s.add_argument("--no-scatter", action="store_true")

    s = sub.add_parser("preprocess", help="apply one preprocessing technique to a spectra CSV")
    _add_common(s, seed=False)
    s.add_argument("--input")
    s.add_argument("--prep", default="raw", help="raw | savgol:W,P,D | bl | snv | msc | fsd | ssd | 1..7")
    s.add_argument("--reference-from", help="calibration CSV for the MSC reference (default: the input)")
    s.add_argument("--out", default="preprocessed.csv")

    s = sub.add_parser("select", help="rank wavelengths by |r| and apply a threshold")
    _add_common(s, seed=False)
    s.add_argument("--input")
    s.add_argument("--prep", default="raw")
    s.add_argument("--threshold", type=float, default=100.0)
    s.add_argument("--out", default="selection")

    s = sub.add_parser("cv", help="repeated k-fold cross-validation of one pipeline")
    _add_common(s, jobs=True)
    s.add_argument("--input")
    s.add_argument("--prep", default="raw")
    s.add_argument("--threshold", type=float, default=100.0)
    _add_model(s)
    _add_plan(s)
    _add_train(s)
    s.add_argument("--out", default="cv_out")

    s = sub.add_parser("tune", help="grid-search phases")
    _add_common(s, jobs=True)
    s.add_argument("phase", choices=("phase1", "savgol", "phase2", "phase3", "all"))
    s.add_argument("--input")
    s.add_argument("--out", default="tune_out")
    s.add_argument("--from", dest="previous", default=None, help="directory holding earlier phase winners (default: --out)")
    s.add_argument("--prep", default=None)
    s.add_argument("--thresholds", default=None, help="comma-separated phase-3 threshold axis")
    s.add_argument("--phase1-thresholds", default=None, help="comma-separated phase-1 threshold axis")
    s.add_argument("--techniques", default=None, help="comma-separated technique codes or names for phase 1")
    s.add_argument("--widths", default=None, help="comma-separated Savitzky-Golay widths")
    s.add_argument("--architectures", default=None, help="semicolon-separated hidden layouts, e.g. '10;20,10'")
    _add_model(s)
    _add_plan(s)
    _add_train(s)

    s = sub.add_parser("finalize", help="final repeated CV, train/validation/test report and persisted model")
    _add_common(s, jobs=True)
    s.add_argument("--input")
    s.add_argument("--from", dest="previous", default=None, help="tuning directory with phase3_winner.json")
    s.add_argument("--prep", default=None)
    s.add_argument("--threshold", type=float, default=None)
    _add_model(s)
    _add_plan(s)
    _add_train(s)
    s.add_argument("--out", default="final_out")

    s = sub.add_parser("predict", help="predict targets with a persisted pipeline")
    _add_common(s, seed=False)
    s.add_argument("--model-file", required=False)
    s.add_argument("--input")
    s.add_argument("--out", default="predictions.csv")

    s = sub.add_parser("plot", help="SVG charts: spectra, R2 vs threshold, fit and error histogram")
    _add_common(s, seed=False)
    s.add_argument("--spectra", help="spectra CSV to overlay")
    s.add_argument("--prep", default=None, help="preprocessing applied before the overlay")
    s.add_argument("--results", help="phase results CSV with a threshold axis")
    s.add_argument("--model-file", help="persisted pipeline JSON")
    s.add_argument("--input", help="spectra CSV for the fit plots")
    s.add_argument("--out", default="plots")
    return p


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "select": cmd_select, "cv": cmd_cv, "tune": cmd_tune,
    "finalize": cmd_finalize, "predict": cmd_predict, "plot": cmd_plot,
}


def _apply_config(parser, argv):
    """Parse, then re-parse with defaults taken from ``--config`` when given."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config {args.config} is not valid JSON: {exc}") from None
    if "config" in doc and isinstance(doc["config"], dict):  # a manifest
        doc = doc["config"]
    known = set(vars(args))
    unknown = sorted(set(doc) - known - {"command"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**{k: v for k, v in doc.items() if k not in ("command", "config")})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        args = _apply_config(parser, argv)
        seed = args.seed if getattr(args, "seed", None) is not None else _default_seed()
        if hasattr(args, "seed"):
            args.seed = seed
        outdir, inputs = COMMANDS[args.command](args, seed)
        config = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
        write_manifest(outdir, args.command, config, seed, inputs, started)
        return EXIT_OK
    except UsageError as exc:
        print(f"specal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"specal: parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"specal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"specal: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpecalError as exc:  # pragma: no cover - every subclass is handled above
        print(f"specal: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
