"""Command line entry point: ``tempest <command> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import models, synth
from .config import ConfigError, RunConfig
from .dataset import DatasetError, attach_target, joined_text, join_cities, parse_joined, split_by_date
from .evaluation import charts
from .evaluation.experiments import (
    ExperimentError,
    residual_reports,
    run_adding_cities,
    run_model_comparison,
    run_test_size_curve,
    run_weeks_curve,
)
from .evaluation.metrics import EvalReport, rmse
from .ingest import (
    FixtureClient,
    HttpClient,
    IngestError,
    canonical_text,
    fetch_grid,
    fixture_document,
    read_canonical,
)
from .preprocess import FeatureSchema, PreprocessError, apply_scaler, build_schema, encode_rows, fit_scaler

log = logging.getLogger("tempest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PAPER_NOTES = {
    "cities": "k=1 ~4.5; k=3 slightly worse than k=2; k=10 lowest, ~35% below k=1",
    "weeks": "k=1 ~3.3; k=5 ~3.03; minimum at k=8",
    "models": "ridge >4.0 for both; svr gap ~1; rfr and etr ten-city ~3.0, the lowest",
    "testsize": "size 20: ten-city ~50% below one-city; both degrade beyond 60",
}
EXPERIMENTS = ("cities", "weeks", "models", "testsize")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    cfg.echo()
    return cfg.out


def _observations(cfg: RunConfig, path: str | None):
    source = path or cfg.data["paths"]["observations"]
    if source:
        return read_canonical(source)
    return synth.generate(cfg.synth_config())


# -- commands --------------------------------------------------------------


def cmd_fetch(cfg: RunConfig, args) -> int:
    f = cfg.data["fetch"]
    if args.live:
        if not f["base_url"]:
            raise ConfigError("--live needs fetch.base_url in the config")
        client = HttpClient(f["base_url"], f["retries"], f["backoff"], rate_per_second=f["rate_per_second"])
    else:
        root = args.fixtures or f["fixture_dir"]
        try:
            client = FixtureClient(root)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    start = date.fromisoformat(f["start"]) if f["start"] else cfg.train_range[0]
    end = date.fromisoformat(f["end"]) if f["end"] else cfg.test_range[1] + timedelta(days=1)
    days = [start + timedelta(days=i) for i in range((end - start).days)]
    result = fetch_grid(client, cfg.cities, days, f["parallelism"])
    out = _out(cfg)
    path = out / "observations.csv"
    path.write_text(canonical_text(result.observations))
    print(f"wrote {path} ({len(result.observations)} observations)")
    gaps = result.missing + [(c, d) for c, d, _ in result.failed]
    if gaps:
        for city, day in sorted(gaps):
            print(f"missing: {city} {day.isoformat()}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    scfg = cfg.synth_config()
    obs = synth.generate(scfg)
    out = _out(cfg)
    path = out / "observations.csv"
    path.write_text(canonical_text(obs))
    last = scfg.start + timedelta(days=scfg.days - 1)
    print(f"wrote {path}: {len(obs)} observations, {scfg.start} .. {last} ({scfg.days} days)")
    if args.fixtures:
        root = out / "fixtures"
        by_key: dict = {}
        for o in obs:
            by_key.setdefault((o.city, o.timestamp.date()), []).append(o)
        for (city, day), group in sorted(by_key.items()):
            (root / city).mkdir(parents=True, exist_ok=True)
            doc = fixture_document(city, day, 0, group)
            (root / city / f"{day.isoformat()}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote fixtures under {root}")
    print(f"sha256 {_sha(path)}")
    return EXIT_OK


def cmd_build(cfg: RunConfig, args) -> int:
    obs = _observations(cfg, args.observations)
    order = list(cfg.city_order)
    rows = attach_target(join_cities(obs, order), order[0])
    split = split_by_date(rows, cfg.train_range, cfg.test_range, order[0])
    schema = build_schema(split.train + split.test, cfg.data["scaler_scope"])
    basis = split.train if schema.scaler_scope == "train" else split.train + split.test
    schema = fit_scaler(encode_rows(basis, schema), schema)
    out = _out(cfg)
    (out / "train.csv").write_text(joined_text(split.train))
    (out / "test.csv").write_text(joined_text(split.test))
    schema.save(out / "schema.json")
    print(f"train rows {len(split.train)}, test rows {len(split.test)}, columns {schema.width}")
    print(f"schema {schema.digest()}")
    return EXIT_OK


def _encoded(path: Path, schema: FeatureSchema):
    rows = parse_joined(path.read_text(), schema.cities)
    return apply_scaler(encode_rows(rows, schema), schema)


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    schema = FeatureSchema.load(args.schema or out / "schema.json")
    data = _encoded(Path(args.data or out / "train.csv"), schema)
    mcfg = cfg.model
    model = models.train(mcfg, data)
    if model.info.get("converged") is False and cfg.data["experiments"]["svr_nonconvergence_fatal"]:
        raise models.NonConvergence(f"SVR did not converge in {model.info['iterations']} iterations")
    path = Path(args.model_file or out / f"model-{mcfg.variant}.tmz")
    digest = models.save_model(model, path)
    print(f"wrote {path} sha256 {digest}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    schema = FeatureSchema.load(args.schema or out / "schema.json")
    model = models.load_model(args.model_file or out / f"model-{cfg.model.variant}.tmz")
    try:
        models.check_schema(model, schema.digest())
    except models.SchemaHashMismatch as exc:
        print(f"refusing to predict: model schema {exc.expected} != data schema {exc.got}", file=sys.stderr)
        return EXIT_DATA
    data = _encoded(Path(args.data or out / "test.csv"), schema)
    pred = models.predict(model, data.matrix)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp_utc", "predicted", "actual"])
    for ts, p, a in zip(data.timestamps, pred, data.targets):
        writer.writerow([ts.strftime("%Y-%m-%dT%H:00Z"), f"{p:.6f}", "" if np.isnan(a) else f"{a:.1f}"])
    path = out / "predictions.csv"
    path.write_text(buf.getvalue())
    print(f"wrote {path} ({len(pred)} rows)")
    if len(pred) and not np.isnan(data.targets).any():
        print(f"rmse {rmse(pred, data.targets):.6f}")
    return EXIT_OK


def read_predictions(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["predicted"]) for r in rows]), np.array([float(r["actual"]) for r in rows])


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    pred, actual = read_predictions(Path(args.predictions or out / "predictions.csv"))
    report = EvalReport.from_predictions(pred, actual)
    (out / "report.json").write_text(report.to_json())
    print(f"rmse {report.rmse:.6f} n {report.n}")
    print("histogram " + " ".join(str(c) for c in report.histogram))
    return EXIT_OK


def _write_curve(out: Path, name: str, points) -> None:
    lines = [
        f"# experiment: {name}",
        f"# paper (original data, not reproducible): {PAPER_NOTES[name]}",
        "x,rmse,fingerprint",
    ]
    lines += [f"{p.x},{p.rmse:.6f},{p.fingerprint}" for p in points]
    (out / f"curve_{name}.csv").write_text("\n".join(lines) + "\n")
    if name in ("cities", "weeks"):
        svg = charts.line_chart(f"RMSE vs {name}", {"rfr": ([p.x for p in points], [p.rmse for p in points])})
    else:
        groups = sorted({p.x.split("@")[0] for p in points}, key=[p.x.split("@")[0] for p in points].index)
        series = {}
        for p in points:
            g, k = p.x.split("@")
            series.setdefault(f"{k} cities", []).append(p.rmse)
        if name == "models":
            svg = charts.bar_chart("RMSE by model", groups, series)
        else:
            svg = charts.line_chart("RMSE vs test size", {s: (groups, v) for s, v in series.items()})
    (out / f"curve_{name}.svg").write_text(svg)


def cmd_experiment(cfg: RunConfig, args) -> int:
    obs = _observations(cfg, args.observations)
    setup = cfg.setup()
    e = cfg.data["experiments"]
    which = EXPERIMENTS if args.which == "all" else (args.which,)
    out = _out(cfg)
    cache: dict = {}
    for name in which:
        if name == "cities":
            points = run_adding_cities(obs, setup, cache=cache)
        elif name == "weeks":
            points = run_weeks_curve(obs, setup, e["weeks_max"])
        elif name == "models":
            hp = dict(e["hyperparameters"])
            hp.setdefault(setup.model.variant, setup.model.hyperparameters)
            points = run_model_comparison(obs, setup, e["variants"], hp, cache=cache)
        else:
            points = run_test_size_curve(obs, setup, e["test_sizes"], cache=cache)
        _write_curve(out, name, points)
        for p in points:
            print(f"{name} {p.x} rmse={p.rmse:.4f}")
    if args.which == "all":
        reports = residual_reports(obs, setup, cache)
        ten = reports[str(len(setup.cities))]
        (out / "report.json").write_text(ten.to_json())
        groups = [f"({k - 6},{k - 5}]" for k in range(12)]
        series = {f"{k} cities": list(r.histogram) for k, r in reports.items()}
        (out / "residuals.svg").write_text(charts.bar_chart("Residual distribution", groups, series, "count"))
    return EXIT_OK


COMMANDS = {
    "fetch": cmd_fetch,
    "synth": cmd_synth,
    "build": cmd_build,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--scaler-scope", choices=("train", "union"), help="scaler statistics from train or train+test")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="tempest", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch", parents=[common], help="download or read history documents")
    p.add_argument("--live", action="store_true", help="use the HTTP client")
    p.add_argument("--fixtures", help="fixture root (TEMPEST_FIXTURE_DIR wins)")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--days", type=int, help="days of history before the test window")
    p.add_argument("--cities", type=int, help="use the first N configured cities")
    p.add_argument("--fixtures", action="store_true", help="also write fixture JSON files")

    p = sub.add_parser("build", parents=[common], help="join, split and write the feature schema")
    p.add_argument("--observations", help="canonical CSV (default: synthesize)")

    for name in ("train", "predict"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a model")
        p.add_argument("--model", choices=models.VARIANTS, help="override the configured variant")
        p.add_argument("--model-file")
        p.add_argument("--data", help="joined CSV")
        p.add_argument("--schema")

    p = sub.add_parser("evaluate", parents=[common], help="score a predictions file")
    p.add_argument("--predictions")

    p = sub.add_parser("experiment", parents=[common], help="regenerate result curves")
    p.add_argument("which", choices=EXPERIMENTS + ("all",))
    p.add_argument("--test-sizes", help="comma-separated test-set sizes, e.g. 20,40,60")
    p.add_argument("--observations", help="canonical CSV (default: synthesize)")
    return parser


def _load(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["paths.out"] = args.out
    if args.scaler_scope is not None:
        overrides["scaler_scope"] = args.scaler_scope
    if getattr(args, "test_sizes", None):
        try:
            overrides["experiments.test_sizes"] = [int(x) for x in args.test_sizes.split(",")]
        except ValueError:
            raise ConfigError(f"--test-sizes must be comma-separated integers, got {args.test_sizes!r}") from None
    if getattr(args, "days", None) is not None:
        overrides["synth.days"] = args.days
    if getattr(args, "model", None) is not None:
        overrides["model.variant"] = args.model
        overrides["model.hyperparameters"] = {}
    cfg = RunConfig.load(args.config, overrides)
    if getattr(args, "cities", None) is not None:
        n = args.cities
        if not 1 <= n <= len(cfg.cities):
            raise ConfigError(f"--cities must be between 1 and {len(cfg.cities)}")
        keep = set(cfg.city_order[:n])
        data = cfg.as_dict()
        data["cities"] = [c for c in data["cities"] if c["name"] in keep]
        cfg = RunConfig(data)
    return cfg


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (models.Divergence, models.SingularSystem, models.NonConvergence) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (models.Divergence, models.SingularSystem, models.NonConvergence)):
            return EXIT_NUMERIC
        return EXIT_DATA
    except (IngestError, DatasetError, PreprocessError, models.ModelError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
