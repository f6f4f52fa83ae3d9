"""Command-line pipeline driver.

Every subcommand resolves its options as CLI flag > config file (flat
key=value lines) > built-in default, writes its artifacts into --out, and
records them in a manifest with content hashes. Identical resolved configs
reproduce byte-identical artifacts. Exit codes: 0 ok, 2 usage, 3 data error,
4 numeric failure; failures also emit one JSON error line on stderr.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import cds, cutmix as cutmix_mod, data, datagen, evaluation, forecaster, sofa, symbolize
from .errors import DataError, NumericError
from .seeding import derive_seed

_EXIT_OK = 0
_EXIT_USAGE = 2
_EXIT_DATA = 3
_EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# option plumbing

class _Opts:
    """Records per-option converters so config-file values parse like flags."""

    def __init__(self, parser):
        self.parser = parser
        self.specs = {}  # dest -> (convert, default, is_list)

    def add(self, name, *, convert=str, default=None, action=None, help=None):
        dest = name.lstrip("-").replace("-", "_")
        kwargs = {"help": help, "default": None}
        if action == "append":
            kwargs["action"] = "append"
            kwargs["type"] = convert
        elif convert is bool:
            kwargs["action"] = "store_true"
            kwargs["default"] = None
        else:
            kwargs["type"] = convert
        self.parser.add_argument(name, **kwargs)
        self.specs[dest] = (convert, default, action == "append")
        return self


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _load_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}: line {i + 1} is not key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args, opts: _Opts) -> dict:
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
    resolved = {}
    for dest, (convert, default, is_list) in opts.specs.items():
        value = getattr(args, dest, None)
        if value is None and dest in file_cfg:
            raw = file_cfg[dest]
            if convert is bool:
                value = _parse_bool(raw)
            elif is_list:
                value = [convert(v) for v in raw.split(",")]
            else:
                value = convert(raw)
        if value is None:
            value = default
        resolved[dest] = value
    return resolved


def _config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# artifacts and manifest

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(cfg) -> str:
    out = cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _record(out_dir: str, command: str, config_hash: str, artifacts: list):
    path = os.path.join(out_dir, "manifest.json")
    manifest = {"artifacts": {}, "runs": {}}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    for name in artifacts:
        manifest["artifacts"][name] = _sha256(os.path.join(out_dir, name))
    manifest["runs"][command] = {"config_hash": config_hash}
    manifest["artifacts"] = dict(sorted(manifest["artifacts"].items()))
    manifest["runs"] = dict(sorted(manifest["runs"].items()))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(obj, out_dir, name):
    with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_budget(text, corpus_size: int) -> int:
    text = str(text)
    if text.endswith("x"):
        return int(round(float(text[:-1]) * corpus_size))
    return int(text)


def _parse_seeds(cfg, n_corpora: int | None = None):
    """'0,1,2' lists seeds; 'NxM' means N train seeds and M corpora."""
    text = str(cfg["seeds"])
    if "x" in text:
        n_train, n_corp = (int(v) for v in text.split("x", 1))
        if n_corpora is not None and n_corpora != n_corp:
            raise DataError(
                f"seeds {text} expects {n_corp} synthetic corpora, got {n_corpora}"
            )
        return [int(cfg["seed"]) + i for i in range(n_train)]
    return [int(v) for v in text.split(",")]


def _load_corpus(path) -> list:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    return data.read_series_ndjson(path)


def _embedder_for(space, cfg):
    if space.mode != "embd":
        return None
    if not cfg.get("model"):
        raise DataError("embd-mode symbol space requires --model")
    model = forecaster.ForecastModel.load(cfg["model"])
    return forecaster.embedder_from(model)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_gen(cfg) -> int:
    out = _out_dir(cfg)
    if cfg["preset"] != "fig1":
        raise DataError(f"unknown preset {cfg['preset']!r}")
    model = datagen.fig1_model(noise_scale=cfg["noise"], obs_prob=cfg["obs_prob"],
                               delta=cfg["delta"])
    corpus = datagen.sample_corpus(model, cfg["n"], cfg["t"], cfg["seed"],
                                   stay_prefix=cfg["prefix"])
    data.write_series_ndjson(corpus.series, os.path.join(out, "series.ndjson"))
    datagen.write_latent_ndjson(corpus, os.path.join(out, "latent.ndjson"))
    _write_json(model.to_jsonable(), out, "generator.json")
    _record(out, "gen", cfg["hash"], ["series.ndjson", "latent.ndjson", "generator.json"])
    print(f"generated {len(corpus.series)} stays -> {out}")
    return _EXIT_OK


def _cmd_ingest(cfg) -> int:
    out = _out_dir(cfg)
    records = list(data.read_quadruplet_csv(cfg["input"]))
    if cfg.get("catalog"):
        with open(cfg["catalog"], encoding="utf-8") as fh:
            catalog = data.FeatureCatalog.from_jsonable(json.load(fh))
    else:
        catalog = data.fit_catalog(records)
    series, stats = data.densify(records, catalog, cfg["t"])
    if not series:
        raise DataError("no stay passed the coverage filter")
    report = data.sparsity(series)
    data.write_series_ndjson(series, os.path.join(out, "series.ndjson"))
    _write_json(catalog.to_jsonable(), out, "catalog.json")
    _write_json({
        "overall": report.overall,
        "per_feature": report.per_feature,
        "stays_kept": stats.stays_kept,
        "stays_dropped": stats.stays_dropped,
        "unknown_feature_records": stats.unknown_feature_records,
    }, out, "sparsity.json")
    _record(out, "ingest", cfg["hash"], ["series.ndjson", "catalog.json", "sparsity.json"])
    print(f"ingested {stats.stays_kept} stays ({stats.stays_dropped} dropped) -> {out}")
    return _EXIT_OK


def _cmd_symbolize(cfg) -> int:
    out = _out_dir(cfg)
    corpus = [data.truncate_to_blocks(s, cfg["delta"]) for s in _load_corpus(cfg["series"])]
    artifacts = []
    if cfg.get("space"):  # apply an existing space instead of fitting one
        space = symbolize.SymbolSpace.load(cfg["space"])
        embedder = _embedder_for(space, cfg)
    elif cfg["mode"] == "embd":
        if cfg.get("model"):
            model = forecaster.ForecastModel.load(cfg["model"])
        else:
            ctx, hor = (3, 3) if cfg["embed_task"] == "3to3" else (24, 24)
            train_cfg = forecaster.TrainConfig(
                learning_rate=cfg["lr"], batch_size=cfg["batch"],
                epochs=cfg["epochs"], patience=cfg["patience"],
                seed=derive_seed(cfg["seed"], "embedder"),
            )
            model = forecaster.train(corpus, train_cfg, context=ctx, horizon=hor,
                                     hidden=cfg["hidden"])
            model.save(os.path.join(out, "embedder.json"))
            artifacts.append("embedder.json")
        embedder = forecaster.embedder_from(model)
        blocks = [b for s in corpus for b in symbolize.segment(s, cfg["delta"])]
        vectors = np.stack([embedder(b) for b in blocks])
        space = symbolize.kmeans(vectors, cfg["k"], cfg["seed"],
                                 max_iter=cfg["max_iter"], tol=cfg["tol"])
    elif cfg["mode"] == "input":
        blocks = [b for s in corpus for b in symbolize.segment(s, cfg["delta"])]
        space = symbolize.random_centroids(blocks, cfg["k"], cfg["seed"])
    else:
        raise DataError(f"unknown mode {cfg['mode']!r}")
    space.save(os.path.join(out, "space.json"))
    seqs = symbolize.symbolize_corpus(corpus, space, cfg["delta"], embedder)
    symbolize.write_symbols_ndjson(seqs, os.path.join(out, "symbols.ndjson"))
    artifacts += ["space.json", "symbols.ndjson"]
    _record(out, "symbolize", cfg["hash"], artifacts)
    print(f"symbolized {len(seqs)} stays with k={space.k} ({space.mode}) -> {out}")
    return _EXIT_OK


def _cmd_synthesize(cfg) -> int:
    out = _out_dir(cfg)
    corpus = [data.truncate_to_blocks(s, cfg["delta"]) for s in _load_corpus(cfg["series"])]
    space = symbolize.SymbolSpace.load(cfg["space"])
    embedder = _embedder_for(space, cfg)
    seqs = symbolize.symbolize_corpus(corpus, space, cfg["delta"], embedder)
    index = cds.build_index(seqs, window=cfg["w"], max_spans=cfg["max_spans"],
                            max_span_len=cfg["max_span_len"])
    budget = _parse_budget(cfg["budget"], len(corpus))

    lengths = {len(s) for s in seqs}
    if cfg["fixed_length"] == "auto":
        fixed_length = lengths.pop() if len(lengths) == 1 else None
    elif cfg["fixed_length"] in ("none", ""):
        fixed_length = None
    else:
        fixed_length = int(cfg["fixed_length"])
    exclude = {tuple(s.symbols) for s in seqs} if cfg["exclude_corpus"] else None
    cap = cfg["max_per_fragment"] if cfg["max_per_fragment"] > 0 else None

    store = symbolize.build_block_store(corpus, cfg["delta"])
    stream = cds.synthesize_symbols(index, cfg["seed"], budget,
                                    fixed_length=fixed_length,
                                    max_per_fragment=cap, exclude=exclude)
    items = []
    for i, (symbols, lineage) in enumerate(stream):
        items.append(cds.desymbolize(symbols, lineage, store, out_id=f"syn-{i:06d}",
                                     features=corpus[0].features))
    cds.write_synthetic_ndjson(items, os.path.join(out, "synthetic.ndjson"))
    syn_seqs = [
        symbolize.SymbolSequence(it.series.stay_id, list(it.symbols), cfg["delta"],
                                 [(it.series.stay_id, i) for i in range(len(it.symbols))])
        for it in items
    ]
    symbolize.write_symbols_ndjson(syn_seqs, os.path.join(out, "synthetic_symbols.ndjson"))
    _write_json({
        "requested": budget,
        "produced": len(items),
        "exhausted_early": len(items) < budget,
        "index_entries": index.n_entries,
    }, out, "synthesis_stats.json")
    _record(out, "synthesize", cfg["hash"],
            ["synthetic.ndjson", "synthetic_symbols.ndjson", "synthesis_stats.json"])
    print(f"synthesized {len(items)}/{budget} series -> {out}")
    return _EXIT_OK


def _cmd_cutmix(cfg) -> int:
    out = _out_dir(cfg)
    corpus = _load_corpus(cfg["series"])
    budget = _parse_budget(cfg["budget"], len(corpus))
    mix_cfg = cutmix_mod.CutMixConfig(window_len=cfg["window"], seed=cfg["seed"],
                                      budget=budget, block_len=cfg["delta"])
    items = list(cutmix_mod.cutmix_dataset(corpus, mix_cfg))
    cutmix_mod.write_cutmix_ndjson(items, os.path.join(out, "synthetic.ndjson"))
    _record(out, "cutmix", cfg["hash"], ["synthetic.ndjson"])
    print(f"cutmixed {len(items)} series -> {out}")
    return _EXIT_OK


def _train_cfg_from(cfg, seed) -> forecaster.TrainConfig:
    return forecaster.TrainConfig(
        learning_rate=cfg["lr"], batch_size=cfg["batch"], epochs=cfg["epochs"],
        patience=cfg["patience"], seed=seed,
    )


def _cmd_train(cfg) -> int:
    out = _out_dir(cfg)
    corpus = _load_corpus(cfg["series"])
    model = forecaster.train(corpus, _train_cfg_from(cfg, cfg["seed"]),
                             context=cfg["context"], horizon=cfg["horizon"],
                             hidden=cfg["hidden"])
    model.save(os.path.join(out, "model.json"))
    report = {"n_train": len(corpus), "config_hash": cfg["hash"]}
    if cfg.get("test"):
        est = forecaster.evaluate(model, _load_corpus(cfg["test"]))
        report["test_mse"] = est.mse
        report["n_test"] = est.n_test
    _write_json(report, out, "train_report.json")
    _record(out, "train", cfg["hash"], ["model.json", "train_report.json"])
    print(f"trained model -> {out}" + (
        f" (test mse {report['test_mse']:.4f})" if "test_mse" in report else ""))
    return _EXIT_OK


def _cmd_eval_test1(cfg) -> int:
    out = _out_dir(cfg)
    train_original = _load_corpus(cfg["train_original"])
    synthetic = [_load_corpus(p) for p in cfg["train_synthetic"]]
    test_original = _load_corpus(cfg["test"])
    seeds = _parse_seeds(cfg, n_corpora=len(synthetic))
    result = evaluation.risk_difference_test(
        train_original, synthetic, test_original, seeds,
        train_cfg=_train_cfg_from(cfg, 0),
        context=cfg["context"], horizon=cfg["horizon"], hidden=cfg["hidden"],
    )
    report = evaluation.report_jsonable(
        "1", cfg["hash"], epsilon_hat=result.epsilon_hat, se=result.se,
        per_run=result.per_run(), extra={"n_test": result.n_test},
    )
    evaluation.write_report(report, os.path.join(out, "test1.json"))
    _record(out, "eval-test1", cfg["hash"], ["test1.json"])
    print(f"test1 epsilon_hat={result.epsilon_hat:.4f} se={result.se:.4f} -> {out}")
    return _EXIT_OK


def _cmd_eval_test2(cfg) -> int:
    out = _out_dir(cfg)
    test_original = _load_corpus(cfg["test_original"])
    test_synthetic = _load_corpus(cfg["test_synthetic"])
    if cfg.get("model"):
        model = forecaster.ForecastModel.load(cfg["model"])
        best_info = {"model": cfg["model"]}
        per_run = []
    else:
        if not cfg.get("train_original"):
            raise DataError("eval-test2 needs --model or --train-original")
        train_original = _load_corpus(cfg["train_original"])
        seeds = _parse_seeds(cfg)
        runs, model, best_info = evaluation.train_reference_models(
            train_original, test_original, seeds,
            train_cfg=_train_cfg_from(cfg, 0),
            context=cfg["context"], horizon=cfg["horizon"], hidden=cfg["hidden"],
        )
        per_run = [{"train_seed": s, "mse": m} for s, _, m in runs]
    result = evaluation.risk_ratio_test(model, test_original, test_synthetic,
                                        model_id=str(best_info))
    report = evaluation.report_jsonable(
        "2", cfg["hash"], ratio=result.ratio, per_run=per_run,
        extra={"mse_on_original": result.mse_on_original,
               "mse_on_synthetic": result.mse_on_synthetic,
               "h_star": best_info},
    )
    evaluation.write_report(report, os.path.join(out, "test2.json"))
    _record(out, "eval-test2", cfg["hash"], ["test2.json"])
    print(f"test2 ratio={result.ratio:.4f} -> {out}")
    return _EXIT_OK


def _cmd_metrics_hellinger(cfg) -> int:
    out = _out_dir(cfg)
    table = evaluation.ngram_profile(
        symbolize.read_symbols_ndjson(cfg["train_symbols"]),
        symbolize.read_symbols_ndjson(cfg["test_symbols"]),
        symbolize.read_symbols_ndjson(cfg["synth_symbols"]),
        orders=tuple(int(v) for v in str(cfg["orders"]).split(",")),
    )
    report = {"orders": {str(k): v for k, v in table.items()}, "config_hash": cfg["hash"]}
    _write_json(report, out, "hellinger.json")
    _record(out, "metrics-hellinger", cfg["hash"], ["hellinger.json"])
    for order, cells in table.items():
        print(f"order {order}: " + " ".join(f"{k}={v:.4f}" for k, v in cells.items()))
    return _EXIT_OK


def _cmd_metrics_discriminative(cfg) -> int:
    out = _out_dir(cfg)
    mean, sd = evaluation.discriminative_score(
        _load_corpus(cfg["original"]), _load_corpus(cfg["synthetic"]),
        runs=cfg["runs"], seed=cfg["seed"], sample_size=cfg.get("sample_size"),
    )
    _write_json({"score": mean, "sd": sd, "runs": cfg["runs"],
                 "config_hash": cfg["hash"]}, out, "discriminative.json")
    _record(out, "metrics-discriminative", cfg["hash"], ["discriminative.json"])
    print(f"discriminative score {mean:.4f} (sd {sd:.4f}) -> {out}")
    return _EXIT_OK


def _cmd_sofa(cfg) -> int:
    out = _out_dir(cfg)
    n = sofa.score_ndjson_to_csv(cfg["input"], os.path.join(out, "sofa.csv"))
    _record(out, "sofa", cfg["hash"], ["sofa.csv"])
    print(f"scored {n} records -> {out}/sofa.csv")
    return _EXIT_OK


def _cmd_pca(cfg) -> int:
    out = _out_dir(cfg)
    inputs = cfg["input"]
    labels = cfg["label"] or [os.path.basename(p) for p in inputs]
    if len(labels) != len(inputs):
        raise DataError("--label count must match --input count")
    series, label_col = [], []
    for path, lab in zip(inputs, labels):
        corpus = _load_corpus(path)
        series.extend(corpus)
        label_col.extend([lab] * len(corpus))
    parts = tuple(str(cfg["parts"]).split(","))
    rows = evaluation.pca_export(series, parts=parts, labels=label_col)
    with open(os.path.join(out, "pca.csv"), "w", encoding="utf-8") as fh:
        fh.write("id,pc1,pc2,label\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]:.10g},{row[2]:.10g},{row[3]}\n")
    _record(out, "pca", cfg["hash"], ["pca.csv"])
    print(f"projected {len(rows)} series -> {out}/pca.csv")
    return _EXIT_OK


def _cmd_report(cfg) -> int:
    out = cfg["dir"]
    manifest_path = os.path.join(out, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"no manifest in {out}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    combined = {"manifest": manifest, "results": {}}
    for name in ("test1.json", "test2.json", "hellinger.json",
                 "discriminative.json", "sparsity.json", "synthesis_stats.json",
                 "train_report.json"):
        path = os.path.join(out, name)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                combined["results"][name] = json.load(fh)
    _write_json(combined, out, "report.json")
    print(json.dumps(combined["results"], indent=2, sort_keys=True))
    return _EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_common(opts: _Opts):
    opts.add("--out", convert=str, default=".")
    opts.add("--seed", convert=int, default=0)
    opts.parser.add_argument("--config", type=str, default=None,
                             help="flat key=value config file; flags win")


def _add_train_opts(opts: _Opts):
    opts.add("--context", convert=int, default=24)
    opts.add("--horizon", convert=int, default=24)
    opts.add("--hidden", convert=int, default=50)
    opts.add("--lr", convert=float, default=0.01)
    opts.add("--batch", convert=int, default=64)
    opts.add("--epochs", convert=int, default=60)
    opts.add("--patience", convert=int, default=6)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctsforge",
        description="Symbolize sparse multivariate time series, synthesize "
                    "compositional variants, and test distribution closeness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    registry = {}

    def command(name, fn):
        p = sub.add_parser(name)
        opts = _Opts(p)
        _add_common(opts)
        registry[name] = (fn, opts)
        return opts

    o = command("gen", _cmd_gen)
    o.add("--preset", default="fig1")
    o.add("--n", convert=int, default=2000)
    o.add("--t", convert=int, default=48)
    o.add("--delta", convert=int, default=3)
    o.add("--noise", convert=float, default=0.3)
    o.add("--obs-prob", convert=float, default=0.9)
    o.add("--prefix", default="gen")

    o = command("ingest", _cmd_ingest)
    o.add("--input")
    o.add("--t", convert=int, default=48)
    o.add("--catalog")

    o = command("symbolize", _cmd_symbolize)
    o.add("--series")
    o.add("--mode", default="input")
    o.add("--k", convert=int, default=160)
    o.add("--delta", convert=int, default=3)
    o.add("--space")
    o.add("--model")
    o.add("--embed-task", default="3to3")
    o.add("--max-iter", convert=int, default=100)
    o.add("--tol", convert=float, default=1e-6)
    _add_train_opts(o)

    o = command("synthesize", _cmd_synthesize)
    o.add("--series")
    o.add("--space")
    o.add("--model")
    o.add("--delta", convert=int, default=3)
    o.add("--w", convert=int, default=1)
    o.add("--max-spans", convert=int, default=2)
    o.add("--max-span-len", convert=int, default=2)
    o.add("--budget", default="1x")
    o.add("--fixed-length", default="auto")
    o.add("--max-per-fragment", convert=int, default=1)
    o.add("--exclude-corpus", convert=bool, default=False)

    o = command("cutmix", _cmd_cutmix)
    o.add("--series")
    o.add("--budget", default="1x")
    o.add("--window", convert=int, default=None)
    o.add("--delta", convert=int, default=3)

    o = command("train", _cmd_train)
    o.add("--series")
    o.add("--test")
    _add_train_opts(o)

    o = command("eval-test1", _cmd_eval_test1)
    o.add("--train-original")
    o.add("--train-synthetic", action="append")
    o.add("--test")
    o.add("--seeds", default="3x1")
    _add_train_opts(o)

    o = command("eval-test2", _cmd_eval_test2)
    o.add("--train-original")
    o.add("--model")
    o.add("--test-original")
    o.add("--test-synthetic")
    o.add("--seeds", default="0,1,2")
    _add_train_opts(o)

    o = command("metrics-hellinger", _cmd_metrics_hellinger)
    o.add("--train-symbols")
    o.add("--test-symbols")
    o.add("--synth-symbols")
    o.add("--orders", default="1,2,3")

    o = command("metrics-discriminative", _cmd_metrics_discriminative)
    o.add("--original")
    o.add("--synthetic")
    o.add("--runs", convert=int, default=10)
    o.add("--sample-size", convert=int, default=None)

    o = command("sofa", _cmd_sofa)
    o.add("--input")

    o = command("pca", _cmd_pca)
    o.add("--input", action="append")
    o.add("--label", action="append")
    o.add("--parts", default="values")

    o = command("report", _cmd_report)
    o.add("--dir", default=".")

    return parser, registry


_REQUIRED = {
    "ingest": ["input"],
    "symbolize": ["series"],
    "synthesize": ["series", "space"],
    "cutmix": ["series"],
    "train": ["series"],
    "eval-test1": ["train_original", "train_synthetic", "test"],
    "eval-test2": ["test_original", "test_synthetic"],
    "metrics-hellinger": ["train_symbols", "test_symbols", "synth_symbols"],
    "metrics-discriminative": ["original", "synthetic"],
    "sofa": ["input"],
    "pca": ["input"],
}


def main(argv=None) -> int:
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _EXIT_OK if exc.code in (0, None) else _EXIT_USAGE
    fn, opts = registry[args.command]
    try:
        cfg = _resolve(args, opts)
        for key in _REQUIRED.get(args.command, []):
            if not cfg.get(key):
                raise DataError(f"{args.command}: missing required option --{key.replace('_', '-')}")
        cfg["hash"] = _config_hash(args.command, cfg)
        return fn(cfg)
    except (DataError, FileNotFoundError) as exc:
        print(json.dumps({"error": str(exc), "exit_code": _EXIT_DATA}), file=sys.stderr)
        return _EXIT_DATA
    except NumericError as exc:
        print(json.dumps({"error": str(exc), "exit_code": _EXIT_NUMERIC}), file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
