"""Command-line entry point.

Stages talk only through files in the output directory. Every artifact
carries the config hash, and each stage refuses inputs written under a
different configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import backtest as bt
from . import config as cfgmod
from . import corpus, features, plotting, sentiment, synthetic, walkforward
from .bars import parse_bars, write_bars
from .errors import PipelineError, ValidationError
from .gbdt import TrainParams

logger = logging.getLogger("sentitrade")

BARS_OUT = "bars.tsv"
TWEETS_OUT = "tweets_clean.jsonl"
INGEST_OUT = "ingest.json"
MATRIX_OUT = "matrix.csv"
MANIFEST_OUT = "manifest.json"
EXPLORE_JSON = "exploratory.json"
EXPLORE_TXT = "exploratory.txt"
POLARITY_SVG = "polarity.svg"
LEDGER_OUT = "ledger.csv"
METRICS_OUT = "metrics.json"
HISTORY_OUT = "history.csv"
FOLDS_OUT = "folds.csv"
MODELS_DIR = "models"
BACKTEST_OUT = "backtest.json"
TRADES_OUT = "trades.csv"
EQUITY_CSV = "equity.csv"
EQUITY_SVG = "equity.svg"
REPORT_OUT = "report.txt"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n")


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise ValidationError(f"missing artifact {path}; run the earlier stage first")
    return json.loads(path.read_text())


def _check_hash(found: str, cfg: cfgmod.RunConfig, artifact: Path) -> None:
    expected = cfg.config_hash()
    if found != expected:
        raise ValidationError(
            f"{artifact} was produced under config hash {found or '(none)'}, current config is {expected}; "
            "rerun the earlier stages"
        )


def _out(cfg: cfgmod.RunConfig) -> Path:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_bars(cfg: cfgmod.RunConfig):
    path = _out(cfg) / BARS_OUT
    if not path.is_file():
        raise ValidationError(f"missing artifact {path}; run ingest first")
    _check_hash(_read_json(_out(cfg) / INGEST_OUT).get("config_hash", ""), cfg, path)
    with open(path, "rb") as fh:
        return parse_bars(fh, cfg.bar_format, str(path))


# --- stages --------------------------------------------------------------


def cmd_ingest(cfg: cfgmod.RunConfig) -> dict:
    cfg.validate_paths()
    out = _out(cfg)
    bars_path, tweets_path = cfg.resolve(cfg.paths.bars), cfg.resolve(cfg.paths.tweets)
    with open(bars_path, "rb") as fh:
        bars = parse_bars(fh, cfg.bar_format, str(bars_path))
    with open(tweets_path, "rb") as fh:
        raw = corpus.parse_tweets(fh, cfg.tweet_format, str(tweets_path))
    clean = corpus.prepare_corpus(raw, cfg.cleaning, corpus.get_hook(cfg.hook))
    with open(out / BARS_OUT, "w", newline="") as fh:
        write_bars(bars, fh, cfg.bar_format)
    with open(out / TWEETS_OUT, "w") as fh:
        corpus.write_clean(clean, fh)
    summary = {
        "config_hash": cfg.config_hash(),
        "bars": len(bars),
        "trading_days": len(bars.days()),
        "tweets_read": len(raw),
        "tweets_kept": len(clean),
    }
    _write_json(out / INGEST_OUT, summary)
    logger.info("ingest: %d bars over %d days, %d of %d tweets kept",
                summary["bars"], summary["trading_days"], len(clean), len(raw))
    return summary


def cmd_featurize(cfg: cfgmod.RunConfig) -> features.FeatureMatrix:
    out = _out(cfg)
    bars = _load_bars(cfg)
    with open(out / TWEETS_OUT) as fh:
        tweets = corpus.read_clean(fh)
    registry = sentiment.build_registry(cfg.scorers, cfg.resolve(cfg.paths.lexicon_dir))
    vectors = features.score_corpus(tweets, registry)
    matrix = features.assemble(tweets, bars, registry, cfg.features, vectors)
    h = cfg.config_hash()
    with open(out / MATRIX_OUT, "w", newline="") as fh:
        features.write_matrix(matrix, fh, h)
    _write_json(out / MANIFEST_OUT, features.manifest(matrix, h))
    report = features.exploratory_report(matrix, vectors, registry.ids)
    report["config_hash"] = h
    _write_json(out / EXPLORE_JSON, report)
    (out / EXPLORE_TXT).write_text(features.render_report_text(report))
    if registry.ids:
        plotting.save_svg(plotting.polarity_figure(report["polarity_distribution"]),
                          out / POLARITY_SVG, f"config_hash={h}")
    logger.info("featurize: %d rows x %d columns", len(matrix), len(matrix.columns))
    return matrix


def _load_matrix(cfg: cfgmod.RunConfig) -> features.FeatureMatrix:
    path = _out(cfg) / MATRIX_OUT
    if not path.is_file():
        raise ValidationError(f"missing artifact {path}; run featurize first")
    with open(path) as fh:
        matrix, h = features.read_matrix(fh)
    _check_hash(h, cfg, path)
    return matrix


def cmd_train(cfg: cfgmod.RunConfig) -> walkforward.MetricsReport:
    out = _out(cfg)
    matrix = _load_matrix(cfg)
    fc = cfg.folds
    folds = walkforward.make_folds(matrix.trading_days(), fc.train_n, fc.val_n, fc.test_n)
    logger.info("train: %d folds", len(folds))
    ledger, results = walkforward.run_all(matrix, cfg.train, folds, fc.select_by, fc.threshold, fc.workers)
    h = cfg.config_hash()
    with open(out / LEDGER_OUT, "w", newline="") as fh:
        walkforward.write_ledger(ledger, fh, h)
    with open(out / HISTORY_OUT, "w", newline="") as fh:
        walkforward.write_history(results, fh, h)
    with open(out / FOLDS_OUT, "w", newline="") as fh:
        walkforward.write_folds(results, fh, h)
    if fc.save_models:
        walkforward.save_models(results, out / MODELS_DIR)
    metrics = walkforward.compute_metrics(ledger)
    _write_json(out / METRICS_OUT, {**metrics.to_dict(), "config_hash": h,
                                    "folds": len(folds), "folds_skipped": sum(1 for r in results if r.skipped)})
    logger.info("train: %d predictions, auc=%s", metrics.n, metrics.auc)
    return metrics


def cmd_backtest(cfg: cfgmod.RunConfig) -> bt.BacktestReport:
    out = _out(cfg)
    path = out / LEDGER_OUT
    if not path.is_file():
        raise ValidationError(f"missing artifact {path}; run train first")
    with open(path) as fh:
        ledger, h = walkforward.read_ledger(fh)
    _check_hash(h, cfg, path)
    bars = _load_bars(cfg)
    b = cfg.backtest
    report = bt.run_backtest(ledger, bars, b.lot, b.frequency, bt.RandomEnsembleConfig(b.n_models, b.base_seed))
    with open(out / TRADES_OUT, "w", newline="") as fh:
        bt.write_trades(report.trades, fh, h)
    bt.equity_export(report, out / EQUITY_CSV, out / EQUITY_SVG, h)
    _write_json(out / BACKTEST_OUT, {**report.to_dict(), "config_hash": h, "frequency": b.frequency, "lot": b.lot})
    return report


def cmd_report(cfg: cfgmod.RunConfig) -> str:
    out = _out(cfg)
    h = cfg.config_hash()
    lines = [f"config_hash: {h}"]
    explore = out / EXPLORE_TXT
    if explore.is_file():
        _check_hash(_read_json(out / EXPLORE_JSON).get("config_hash", ""), cfg, explore)
        lines += ["", "[exploratory]", explore.read_text().rstrip()]
    if (out / METRICS_OUT).is_file():
        m = _read_json(out / METRICS_OUT)
        _check_hash(m.get("config_hash", ""), cfg, out / METRICS_OUT)
        auc = "undefined" if m["auc"] is None else f"{m['auc']:.4f}"
        lines += ["", "[classification]",
                  f"predictions: {m['n']} over {m['folds'] - m['folds_skipped']} folds",
                  f"precision: {m['precision']:.4f}", f"recall: {m['recall']:.4f}", f"f1: {m['f1']:.4f}",
                  f"auc: {auc}", f"logloss: {m['logloss']:.4f}"]
    if (out / BACKTEST_OUT).is_file():
        r = _read_json(out / BACKTEST_OUT)
        _check_hash(r.get("config_hash", ""), cfg, out / BACKTEST_OUT)
        lines += ["", "[backtest]",
                  f"trades: {r['n_trades']} ({r['frequency']}, lot {r['lot']})",
                  f"model total: {r['model_total']}",
                  f"baseline mean total: {r['baseline_mean_total']}",
                  f"excess: {r['excess']}",
                  f"days won/lost/tied: {r['days_won']}/{r['days_lost']}/{r['days_tied']}",
                  f"baselines beaten: {r['baselines_beaten']} of {r['baseline_models']}"]
    if len(lines) == 1:
        raise ValidationError(f"no artifacts to report in {out}")
    text = "\n".join(lines) + "\n"
    (out / REPORT_OUT).write_text(text)
    return text


def cmd_run(cfg: cfgmod.RunConfig) -> str:
    cmd_ingest(cfg)
    cmd_featurize(cfg)
    cmd_train(cfg)
    cmd_backtest(cfg)
    return cmd_report(cfg)


def planted_config(directory: Path) -> cfgmod.RunConfig:
    """Run configuration for the planted-signal fixture written by ``synth``."""
    return cfgmod.RunConfig(
        paths=cfgmod.Paths(bars="bars.tsv", tweets="tweets.jsonl", output="out"),
        scorers=tuple(s for s in sentiment.DEFAULT_SCORERS if s["id"] == "afinn"),
        features=features.FeatureConfig(tweet_attrs=(), scorer_outputs=("score",), lags=features.LagSpec((1,))),
        train=TrainParams(scale_pos_weight=1.0),
        folds=cfgmod.FoldConfig(train_n=20),
        base_dir=directory,
    )


def cmd_synth(directory: Path, seed: int | None = None) -> Path:
    scfg = synthetic.SyntheticConfig() if seed is None else synthetic.SyntheticConfig(seed=seed)
    synthetic.write_fixture(directory, scfg)
    path = directory / "config.json"
    path.write_text(cfgmod.dumps(planted_config(directory)))
    logger.info("synth: fixture and config written to %s", directory)
    return path


# --- argument handling ---------------------------------------------------

COMMANDS = {
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "report": cmd_report,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--output", type=Path, help="output directory, overrides paths.output")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="sentitrade", description="Tweet-sentiment intraday direction pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "parse bars and tweets, clean and filter the corpus",
        "featurize": "score tweets and build the per-window feature matrix",
        "train": "walk-forward training; writes the prediction ledger and metrics",
        "backtest": "simulate trades and compare against random baselines",
        "report": "summarize the artifacts in the output directory",
        "run": "ingest, featurize, train, backtest and report in one go",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    p = sub.add_parser("synth", parents=[common], help="write the planted-signal fixture and its config")
    p.add_argument("directory", type=Path)
    p.add_argument("--seed", type=int)
    return parser


def load_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    if args.output is not None:
        cfg = replace(cfg, paths=replace(cfg.paths, output=str(args.output.resolve())))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            cmd_synth(args.directory, args.seed)
            return 0
        result = COMMANDS[args.command](load_config(args))
        if isinstance(result, str):
            sys.stdout.write(result)
    except PipelineError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return 4
    except Exception:
        logger.exception("unexpected failure")
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
