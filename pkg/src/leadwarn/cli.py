"""``leadwarn`` command line: one subcommand per pipeline stage.

Exit status is 0 on success, 1 on validation errors (bad config, bad input,
unknown subcommand) and 2 on runtime failures. Errors are reported as one
JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import LeadWarnError, ValidationError

log = logging.getLogger("leadwarn")

SUBCOMMANDS = ("synth", "ingest", "features", "pv-search", "wh-search", "train",
               "evaluate", "ablate", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def worker_count() -> int:
    """``LEADWARN_THREADS`` caps job-matrix parallelism; 0 or unset means auto."""
    raw = os.environ.get("LEADWARN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"LEADWARN_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("LEADWARN_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


# -------------------------------------------------------------- data loading

def load_log(cfg: RunConfig, input_path=None):
    from .ingest import parse_transactions
    from .synth import generate_stream
    path = input_path or cfg["ingest"]["path"]
    if path is None:
        return generate_stream(cfg.synth_config())
    return parse_transactions(path, cfg["ingest"]["schema"])


def load_table(cfg: RunConfig, input_path=None):
    from .features import engineer_features
    code_maps = None
    if cfg["features"]["code_maps"]:
        code_maps = json.loads(Path(cfg["features"]["code_maps"]).read_text(encoding="utf-8"))
    return engineer_features(load_log(cfg, input_path), code_maps)


def load_data(cfg: RunConfig, input_path=None):
    from .train_eval import prepare_data
    m, t = cfg["model"], cfg["train"]
    return prepare_data(load_table(cfg, input_path), m["L"], m["h"], tuple(t["fractions"]))


def search_pv(cfg: RunConfig, data, out: Path):
    from .pv_sampling import write_search_log
    from .train_eval import select_pv_config
    best, score, rows = select_pv_config(data, cfg.pv_grid(), neg_ratio=cfg["pv_grid"]["neg_ratio"])
    write_search_log(rows, out / "pv_search.csv")
    _write_json(out / "pv_selected.json", {"n": best.n, "z_th": best.z_th, "k_max": best.k_max,
                                           "neg_ratio": best.neg_ratio, "f1": score})
    return best


def resolve_pv(cfg: RunConfig, data, out: Path):
    """The configured fixed PV setting, else the grid-search winner."""
    fixed = cfg.fixed_pv()
    return fixed if fixed is not None else search_pv(cfg, data, out)


# --------------------------------------------------------------- subcommands

def cmd_synth(cfg, args, out):
    from .ingest import write_transactions
    from .synth import degree_tail_check, generate_stream
    tx = generate_stream(cfg.synth_config())
    write_transactions(tx, out / "transactions.csv", cfg["ingest"]["schema"])
    labels = tx.column("label")
    summary = {"rows": len(tx), "prevalence": float(labels.mean())}
    if len(tx) >= 1000:
        summary["degree_tail_slope"] = degree_tail_check(tx)
    _write_json(out / "synth_summary.json", summary)


def cmd_ingest(cfg, args, out):
    from .ingest import write_transactions
    tx = load_log(cfg, args.input)
    write_transactions(tx, out / "transactions.clean.csv", cfg["ingest"]["schema"])
    if tx.summary is not None:
        (out / "load_summary.json").write_text(tx.summary.to_json() + "\n", encoding="utf-8")


def cmd_features(cfg, args, out):
    table = load_table(cfg, args.input)
    table.to_csv(out / "features.csv")
    table.save_code_maps(out / "code_maps.json")


def cmd_pv_search(cfg, args, out):
    search_pv(cfg, load_data(cfg, args.input), out)


def cmd_wh_search(cfg, args, out):
    from .windowing import search_window_horizon, write_grid_csv
    table = load_table(cfg, args.input)
    g = cfg["window_grid"]
    spec, rows = search_window_horizon(table, g["w"], g["h"])
    write_grid_csv(rows, out / "window_horizon_grid.csv")
    _write_json(out / "window_horizon_selected.json",
                {"window": spec.w_minutes, "horizon": spec.h_minutes,
                 "rows_per_window": spec.rows_per_window, "horizon_frames": spec.horizon_frames,
                 "seconds_per_row": spec.seconds_per_row})


def cmd_train(cfg, args, out):
    from .train_eval import evaluate, train, write_scores
    data = load_data(cfg, args.input)
    variant = args.variant or cfg["model"]["variant"]
    seed = args.seed if args.seed is not None else cfg["train"]["seeds"][0]
    mcfg = cfg.model_config(seed, variant)
    if mcfg.variant.use_pv:
        mcfg.pv = resolve_pv(cfg, data, out)
    result = train(mcfg, data, cfg["train"]["patience"], cfg["train"]["max_epochs"])
    ckpt = result.checkpoint()
    ckpt["pv"] = None if mcfg.pv is None else mcfg.pv.__dict__.copy()
    _write_json(out / f"checkpoint_{variant}_seed{seed}.json", ckpt)
    _write_json(out / f"train_log_{variant}_seed{seed}.json", result.log)
    val = evaluate(result.model, data, "val")
    _write_json(out / f"val_metrics_{variant}_seed{seed}.json", val["metrics"])
    write_scores(val, out / f"val_scores_{variant}_seed{seed}.csv")


def cmd_evaluate(cfg, args, out):
    from .model import LeadModel, ModelConfig, VariantSpec
    from .pv_sampling import PVConfig
    from .train_eval import evaluate, write_curves, write_scores
    if not args.checkpoint:
        raise ValidationError("evaluate needs --checkpoint PATH")
    ckpt = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
    c = dict(ckpt["config"])
    c["variant"] = VariantSpec(**c["variant"])
    c["pv"] = None if c["pv"] is None else PVConfig(**c["pv"])
    c["gcn_sizes"], c["mlp_sizes"] = tuple(c["gcn_sizes"]), tuple(c["mlp_sizes"])
    mcfg = ModelConfig(**c)
    if mcfg.hash() != ckpt["config_hash"]:
        raise ValidationError("checkpoint config hash mismatch")
    model = LeadModel(mcfg, ckpt["input_dim"]).load_state(ckpt)
    data = load_data(cfg, args.input)
    rep = evaluate(model, data, args.split)
    name = f"{mcfg.variant.name}_seed{mcfg.seed}_{args.split}"
    _write_json(out / f"metrics_{name}.json", rep["metrics"])
    write_scores(rep, out / f"scores_{name}.csv")
    y = np.asarray(rep["target"])
    if 0 < y.sum() < len(y):
        write_curves(rep["score"], y, out / f"pr_curve_{name}.csv", out / f"roc_curve_{name}.csv")


def cmd_ablate(cfg, args, out):
    from .train_eval import run_ablation, write_table_ii, write_table_iii
    data = load_data(cfg, args.input)
    t = cfg["train"]
    seeds = args.seeds if args.seeds else t["seeds"]
    base = cfg.model_config(0, "full", pv=resolve_pv(cfg, data, out))

    def progress(r):
        log.info("variant=%s seed=%d pr_auc=%s", r["variant"], r["seed"], r["metrics"]["pr_auc"])

    res = run_ablation(data, seeds, t["variants"], base, t["patience"], t["max_epochs"],
                       progress=progress, workers=worker_count())
    (out / "results.json").write_text(res.to_json() + "\n", encoding="utf-8")
    write_table_ii(res.table, out / "table_ii.csv")
    write_table_iii(res.table, out / "table_iii.csv")
    (out / "ablation.md").write_text(markdown_table_iii(res.table), encoding="utf-8")


def markdown_table_iii(rows) -> str:
    lines = ["| Model Setting | PR-AUC | Δ vs Full |", "|---|---|---|"]
    for r in rows:
        d = r["delta_vs_full"]
        lines.append(f"| {r['label']} | {r['pr_auc_mean']:.4f} ± {r['pr_auc_std']:.4f} | "
                     f"{'' if d is None else f'{d:+.4f}'} |")
    return "\n".join(lines) + "\n"


def markdown_table_ii(rows) -> str:
    keys = ("accuracy", "precision", "recall", "f1", "roc_auc", "pr_auc")
    lines = ["| Model | Accuracy | Precision | Recall | F1 | ROC-AUC | PR-AUC |",
             "|---|---|---|---|---|---|---|"]
    for r in rows:
        cells = ["" if r[f"{k}_mean"] is None else f"{r[f'{k}_mean']:.4f} ± {r[f'{k}_std']:.4f}"
                 for k in keys]
        lines.append(f"| {r['label']} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def markdown_grid(csv_path: Path) -> str:
    import csv
    with csv_path.open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lines = ["| Window (min) | Horizon (min) | Accuracy | Recall | Precision | F1 | ROC-AUC | PR-AUC |",
             "|---|---|---|---|---|---|---|---|"]
    for r in rows:
        vals = [f"{float(r[k]):.4f}" for k in ("accuracy", "recall", "precision", "f1", "roc_auc", "pr_auc")]
        lines.append(f"| {r['window']} | {r['horizon']} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(cfg, args, out):
    src = Path(args.results) if args.results else out / "results.json"
    if not src.exists():
        raise ValidationError(f"no results JSON at {src}")
    res = json.loads(src.read_text(encoding="utf-8"))
    parts = ["# Results\n"]
    grid = src.parent / "window_horizon_grid.csv"
    if grid.exists():
        parts += ["## Window and horizon grid\n", markdown_grid(grid)]
    parts += ["## Model comparison\n", markdown_table_ii(res["aggregate"]),
              "## Ablation\n", markdown_table_iii(res["aggregate"])]
    (out / "report.md").write_text("\n".join(parts), encoding="utf-8")


HANDLERS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "features": cmd_features,
    "pv-search": cmd_pv_search, "wh-search": cmd_wh_search, "train": cmd_train,
    "evaluate": cmd_evaluate, "ablate": cmd_ablate, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="leadwarn", description="Early-warning anomaly detection on transaction streams.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="run-config JSON (defaults apply when omitted)")
        sp.add_argument("--output-dir", help="overrides output_dir from the config")
        sp.add_argument("--input", help="transaction CSV; overrides ingest.path")
        if name in ("train", "evaluate"):
            sp.add_argument("--variant")
            sp.add_argument("--seed", type=int)
        if name == "evaluate":
            sp.add_argument("--checkpoint")
            sp.add_argument("--split", choices=("val", "test"), default="test")
        if name == "ablate":
            sp.add_argument("--seeds", type=int, nargs="+")
        if name == "report":
            sp.add_argument("--results")
    return p


def _fail(status: int, exc: BaseException) -> int:
    msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    print(json.dumps({"status": status, "error": type(exc).__name__, "message": msg}), file=sys.stderr)
    if isinstance(exc, UsageError):
        print(str(exc).split("\n", 1)[-1], file=sys.stderr, end="")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"a subcommand is required\n{parser.format_usage()}")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig.load(args.config)
        if args.output_dir:
            cfg.data["output_dir"] = args.output_dir
        out = cfg.write_resolved()
        HANDLERS[args.command](cfg, args, out)
    except UsageError as exc:
        return _fail(1, exc)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(1, exc)
    except (LeadWarnError, Exception) as exc:  # noqa: BLE001 - exit-code contract
        return _fail(2, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
