"""Command-line interface: a thin client over the service handlers.

Every subcommand builds the same request models the HTTP endpoints take and
calls the shared handler in-process, so batch runs need no server; `serve`
starts the FastAPI app for multi-client use.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure in every run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .configio import ConfigError, deep_merge, load_config_file
from .dataset import DataError, load_yearly_csv
from .metrics import MetricShapeError, UndefinedMetricError
from .service import handlers, schemas

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _series_section(args, cfg: dict) -> dict:
    section = dict(cfg.get("series") or {})
    if getattr(args, "data", None):
        section = {"csv": args.data}
    if getattr(args, "synth_seed", None) is not None or getattr(args, "synth_months", None) is not None:
        section = {
            "synthetic": {
                "seed": args.synth_seed or 0,
                "n_months": args.synth_months or 176,
            }
        }
    if not section:
        raise ConfigError("no input series: pass --data/--synth-seed or a config with [series]")
    return section


def _model_overrides(args) -> dict:
    out = {}
    for key, attr in (
        ("preset", "preset"),
        ("scheme", "scheme"),
        ("algorithm", "algorithm"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if getattr(args, "hidden", None):
        out["hidden_sizes"] = [int(h) for h in args.hidden.split(",")]
    if getattr(args, "code_dims", None):
        out["code_dims"] = [int(k) for k in args.code_dims.split(",")]
    if getattr(args, "no_fine_tune", False):
        out["fine_tune"] = False
    return out


def _plan_overrides(args) -> dict:
    out = {}
    if getattr(args, "windows", None):
        out["window_lengths"] = args.windows
    for key in ("horizon", "runs_per_window", "base_seed", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _train_overrides(args) -> dict:
    out = {}
    for key in ("max_epochs", "lr", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _merged_config(args) -> dict:
    cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {
        "model": _model_overrides(args),
        "plan": _plan_overrides(args),
        "train": _train_overrides(args),
    }
    return deep_merge(cfg, {k: v for k, v in overrides.items() if v})


def _payloads(cfg: dict):
    return (
        schemas.ModelSpecPayload(**(cfg.get("model") or {})),
        schemas.PlanPayload(**(cfg.get("plan") or {})),
        schemas.TrainConfigPayload(**(cfg.get("train") or {})),
        schemas.TrainConfigPayload(**(cfg.get("ae_train") or {})),
    )


def _source_payload(section: dict) -> schemas.SeriesSource:
    synth = section.get("synthetic")
    return schemas.SeriesSource(
        csv=None,
        csv_text=_read_text(section["csv"]) if section.get("csv") else section.get("csv_text"),
        synthetic=schemas.SynthRequest(**synth) if synth else None,
    )


# --- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    resp = handlers.synth(
        schemas.SynthRequest(seed=args.seed, n_months=args.months, start_month=args.start)
    )
    _write_text(args.output, resp.csv)
    print(f"wrote {resp.series.length} months ({resp.series.start}..{resp.series.end}) "
          f"to {args.output}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    yearly = {}
    for column, path in (
        ("gdp", args.yearly_gdp),
        ("population", args.yearly_population),
        ("co2", args.yearly_co2),
    ):
        if path:
            yearly[column] = load_yearly_csv(path)
    resp = handlers.ingest(
        schemas.IngestRequest(
            csv=_read_text(args.csv), yearly=yearly or None, yearly_mode=args.yearly_mode
        )
    )
    if args.output:
        _write_text(args.output, resp.csv)
    print(f"valid series: {resp.series.length} months "
          f"({resp.series.start}..{resp.series.end}), digest {resp.series.digest[:12]}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _merged_config(args)
    model, _, train_cfg, ae_cfg = _payloads(cfg)
    req = schemas.TrainRequest(
        series=_source_payload(_series_section(args, cfg)),
        model=model,
        train=train_cfg,
        ae_train=ae_cfg,
        window=args.window,
    )
    resp = handlers.train_model(req)
    _write_text(args.output, json.dumps(resp.bundle, indent=1) + "\n")
    if args.report_csv:
        with open(args.report_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(resp.report.loss_trace):
                writer.writerow([epoch, repr(loss)])
    print(f"trained {resp.bundle['model_spec']['name']}: "
          f"final loss {resp.report.final_loss:.6g} after {resp.report.epochs_run} epochs "
          f"({resp.report.stop_reason}); bundle -> {args.output}")
    if resp.bundle["failed"]:
        print("training hit a numerical failure", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _merged_config(args)
    model, plan, train_cfg, ae_cfg = _payloads(cfg)
    req = schemas.EvalRequest(
        series=_source_payload(_series_section(args, cfg)),
        model=model,
        plan=plan,
        train=train_cfg,
        ae_train=ae_cfg,
    )
    resp = handlers.run_eval(req)
    if args.output:
        _write_text(args.output, json.dumps(resp.result, indent=1) + "\n")
    if args.report_dir:
        files = handlers.render_report(
            schemas.ReportRequest(results=[resp.result], formats=["csv", "json"])
        ).files
        import os

        os.makedirs(args.report_dir, exist_ok=True)
        for name, content in files.items():
            _write_text(os.path.join(args.report_dir, name), content)
    row = resp.overall
    print(f"{row.model}: mape={_fmt(row.mape)} rmse_norm={_fmt(row.rmse_norm)} "
          f"mae_norm={_fmt(row.mae_norm)} failed_runs={row.failed_runs}/{row.total_runs}")
    if row.failed_runs == row.total_runs:
        print("every run hit a numerical failure", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _write_sweep(args, resp: schemas.SweepResponse) -> None:
    rows = resp.rows
    if args.output:
        if args.output.endswith(".json"):
            _write_text(args.output, json.dumps({"kind": resp.kind, "rows": rows}, indent=1) + "\n")
        else:
            with open(args.output, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    for row in rows[: args.top]:
        print(f"#{row['rank']:>2} {row['label']:>14} mape={_fmt(row['mape'])} "
              f"rmse_norm={_fmt(row['rmse_norm'])} failed={row['failed_runs']}")


def cmd_sweep_arch(args) -> int:
    cfg = _merged_config(args)
    _, plan, train_cfg, _ = _payloads(cfg)
    req = schemas.SweepArchRequest(
        series=_source_payload(_series_section(args, cfg)),
        scheme=args.scheme or "MLP",
        depth=args.depth,
        neurons=args.neurons,
        algorithm=args.algorithm or "LM",
        plan=plan,
        train=train_cfg,
    )
    resp = handlers.run_sweep_arch(req)
    _write_sweep(args, resp)
    return EXIT_OK


def cmd_sweep_opt(args) -> int:
    cfg = _merged_config(args)
    _, plan, train_cfg, _ = _payloads(cfg)
    req = schemas.SweepOptRequest(
        series=_source_payload(_series_section(args, cfg)),
        scheme=args.scheme or "MLP",
        hidden_sizes=[int(h) for h in (args.hidden or "4").split(",")],
        plan=plan,
        train=train_cfg,
    )
    resp = handlers.run_sweep_opt(req)
    _write_sweep(args, resp)
    return EXIT_OK


def cmd_report(args) -> int:
    results = [json.loads(_read_text(path)) for path in args.result]
    resp = handlers.render_report(
        schemas.ReportRequest(results=results, formats=args.formats.split(","))
    )
    import os

    os.makedirs(args.outdir, exist_ok=True)
    for name, content in resp.files.items():
        path = os.path.join(args.outdir, name)
        _write_text(path, content)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_series_flags(p):
    p.add_argument("--data", help="monthly CSV file")
    p.add_argument("--synth-seed", type=int, help="use a synthetic series with this seed")
    p.add_argument("--synth-months", type=int, help="synthetic series length (default 176)")


def _add_model_flags(p):
    p.add_argument("--preset", help="named model preset (see `demandcast presets` endpoint)")
    p.add_argument("--scheme", choices=("MLP", "CFMLP"))
    p.add_argument("--hidden", help="hidden sizes, e.g. 4 or 5,2")
    p.add_argument("--code-dims", help="autoencoder code sizes, e.g. 10 or 5,3")
    p.add_argument("--algorithm", help="training algorithm (LM, LMbr, GD, ...)")
    p.add_argument("--no-fine-tune", action="store_true",
                   help="deep models: stop after pre-training")


def _add_plan_flags(p):
    p.add_argument("--windows", help="window lengths, e.g. 120:132 or 120,126,132")
    p.add_argument("--horizon", type=int)
    p.add_argument("--runs", dest="runs_per_window", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--workers", type=int)


def _add_train_flags(p):
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="demandcast", description=__doc__)
    parser.add_argument("--config", help="YAML config file; flags override its keys")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic monthly series")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--months", type=int, default=176)
    p.add_argument("--start", default="1999-01")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="validate a CSV, expanding yearly drivers")
    p.add_argument("--csv", required=True)
    p.add_argument("--yearly-gdp")
    p.add_argument("--yearly-population")
    p.add_argument("--yearly-co2")
    p.add_argument("--yearly-mode", choices=("hold", "interpolate"), default="hold",
                   help="step-hold yearly values (default) or interpolate mid-year anchors")
    p.add_argument("-o", "--output", help="write the canonical CSV here")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train", help="train one model, emit a bundle checkpoint")
    _add_series_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--window", type=int, help="train on months 1..window (default: all)")
    p.add_argument("-o", "--output", required=True, help="bundle JSON path")
    p.add_argument("--report-csv", help="write the (epoch, loss) trace here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="run the expanding-window experiment")
    _add_series_flags(p)
    _add_model_flags(p)
    _add_plan_flags(p)
    _add_train_flags(p)
    p.add_argument("-o", "--output", help="result JSON path")
    p.add_argument("--report-dir", help="also write report files here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="architecture or optimizer sweeps")
    sweep_sub = p.add_subparsers(dest="sweep_kind", required=True)

    pa = sweep_sub.add_parser("arch", help="sweep hidden-layer sizes")
    _add_series_flags(pa)
    _add_plan_flags(pa)
    _add_train_flags(pa)
    pa.add_argument("--scheme", choices=("MLP", "CFMLP"))
    pa.add_argument("--depth", type=int, choices=(1, 2), default=1)
    pa.add_argument("--neurons", default="1:15")
    pa.add_argument("--algorithm")
    pa.add_argument("-o", "--output", help=".csv or .json table path")
    pa.add_argument("--top", type=int, default=5, help="print the best N rows")
    pa.set_defaults(fn=cmd_sweep_arch)

    po = sweep_sub.add_parser("opt", help="sweep all 13 training algorithms")
    _add_series_flags(po)
    _add_plan_flags(po)
    _add_train_flags(po)
    po.add_argument("--scheme", choices=("MLP", "CFMLP"))
    po.add_argument("--hidden", help="fixed hidden sizes, e.g. 4 or 5,2")
    po.add_argument("-o", "--output", help=".csv or .json table path")
    po.add_argument("--top", type=int, default=13)
    po.set_defaults(fn=cmd_sweep_opt)

    p = sub.add_parser("report", help="render report files from result JSON")
    p.add_argument("--result", action="append", required=True,
                   help="result JSON from `eval` (repeatable)")
    p.add_argument("--outdir", required=True)
    p.add_argument("--formats", default="csv,json")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.fn(args)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MetricShapeError, UndefinedMetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
