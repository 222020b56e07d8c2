"""``mcsnet`` command line: gen-data, label, train, eval, retrieve, explain, verify.

Failures print one line ``error<TAB>ErrorClass<TAB>message`` on stderr and exit
with the code of that class.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .align import hungarian_round, matched_edges, write_alignment
from .checks import SUITES, run_suite
from .encoder import GraphBatch
from .evalkit import CorpusIndex, evaluate, rank_corpus, write_ranking, write_scores
from .graph import GraphFormatError, PaddingError, load_dataset, load_labels, save_dataset, save_labels
from .oracle import BudgetError, ValidationError, label_pairs
from .sampler import (DESK_PROFILE, FULL_PROFILE, GenerationError, GenerationReport, SamplerConfig,
                      SamplingError, generate_dataset, synthetic_sources)
from .scorers import MODEL_KINDS, ConfigError, ModelConfig, build_model
from .trainer import (LAMBDA_GRID, TARGETS, PairData, TrainConfig, TrainingError, default_lambda, label_matrix,
                      predict, split_queries, train, tune_lambda, write_history)

log = logging.getLogger("mcsnet")

DATA_ENV = "MCSNET_DATA"


class CliError(Exception):
    code = 1


class UsageError(CliError):
    code = 2


class MissingFileError(CliError):
    code = 3


class SchemaError(CliError):
    code = 4


class BudgetExceeded(CliError):
    code = 5


class TrainFailed(CliError):
    code = 6


class VerifyFailed(CliError):
    code = 7


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    python: str = platform.python_version()
    numpy: str = np.__version__
    timings: dict[str, float] = field(default_factory=dict)

    def phase(self, name: str, start: float):
        self.timings[name] = round(time.perf_counter() - start, 6)

    def write(self, path: Path):
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---- helpers ------------------------------------------------------------------

def _data_dir(args) -> Path:
    return Path(args.data or os.environ.get(DATA_ENV, "data"))


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"{what} not found: {p}")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_graphs(path: Path, what: str):
    return load_dataset(_existing(path, what))


def _load_pair_data(args) -> tuple[PairData, Path]:
    d = _data_dir(args)
    corpus = _load_graphs(d / "corpus.txt", "corpus file")
    queries = _load_graphs(d / "queries.txt", "query file")
    labels_path = Path(args.labels) if getattr(args, "labels", None) else d / "labels.txt"
    records = load_labels(_existing(labels_path, "label file"))
    return PairData.from_records(queries, corpus, records), labels_path


def _sampler_config(args) -> SamplerConfig:
    base = FULL_PROFILE if args.profile == "full" else DESK_PROFILE
    d = base.to_dict()
    for key in ("min_nodes", "max_nodes", "corpus_count", "query_count"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    d["seed"] = args.seed
    return SamplerConfig(**d)


def _load_model(path: Path):
    state, meta = ad.load_checkpoint(_existing(path, "checkpoint"))
    if "model" not in meta:
        raise SchemaError(f"checkpoint {path} carries no model config")
    model = build_model(ModelConfig.from_dict(meta["model"]), seed=meta.get("seed", 0),
                        dtype=np.dtype(meta.get("dtype", "float64")))
    model.store.load_state_dict(state)
    return model, meta


# ---- commands ---------------------------------------------------------------------

def cmd_gen_data(args, man: RunManifest):
    t = time.perf_counter()
    cfg = _sampler_config(args)
    if args.sources:
        sources = _load_graphs(Path(args.sources), "source file")
        man.inputs["sources"] = str(args.sources)
    else:
        sources = synthetic_sources(args.num_sources, seed=args.seed)
        man.config["synthetic_sources"] = args.num_sources
    man.config["sampler"] = cfg.to_dict()
    report = GenerationReport()
    corpus, queries = generate_dataset(sources, cfg, report)
    out = _out_dir(args.out)
    save_dataset(corpus, out / "corpus.txt")
    save_dataset(queries, out / "queries.txt")
    save_dataset(report.seed_queries, out / "seed_queries.txt")
    man.outputs.update(corpus=str(out / "corpus.txt"), queries=str(out / "queries.txt"),
                       seed_queries=str(out / "seed_queries.txt"))
    man.config["acceptance_rate"] = report.acceptance_rate
    man.phase("generate", t)
    print(f"corpus\t{len(corpus)}\nqueries\t{len(queries)}\nacceptance_rate\t{report.acceptance_rate:.4f}")
    return out


def cmd_label(args, man: RunManifest):
    t = time.perf_counter()
    d = _data_dir(args)
    qpath = Path(args.queries) if args.queries else d / "queries.txt"
    cpath = Path(args.corpus) if args.corpus else d / "corpus.txt"
    queries, corpus = _load_graphs(qpath, "query file"), _load_graphs(cpath, "corpus file")
    man.inputs.update(queries=str(qpath), corpus=str(cpath))
    try:
        records = label_pairs(queries, corpus, args.combo_a, args.budget, args.workers)
    except BudgetError as e:
        raise BudgetExceeded(str(e)) from e
    out = Path(args.out) if args.out else d / "labels.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_labels(records, out)
    man.outputs["labels"] = str(out)
    man.phase("label", t)
    print(f"pairs\t{len(records)}")
    return out.parent


def _train_config(args, **over) -> TrainConfig:
    return TrainConfig(model=args.model, target=args.target, batch_size=args.batch_size, lr=args.lr,
                       weight_decay=args.weight_decay, patience=args.patience, max_epochs=args.epochs,
                       fractions=tuple(args.fractions), seed=args.seed, lam=args.lam,
                       lam_grid=tuple(args.lam_grid) if args.lam_grid else LAMBDA_GRID, **over)


def cmd_train(args, man: RunManifest):
    t = time.perf_counter()
    data, labels_path = _load_pair_data(args)
    man.inputs.update(data=str(_data_dir(args)), labels=str(labels_path))
    if args.lam is None:
        args.lam = default_lambda(args.tag) or 1.0
    cfg = _train_config(args)
    train_q, val_q, test_q = split_queries(data.queries, cfg.fractions, cfg.seed)
    man.phase("load", t)
    out = _out_dir(args.out)
    t = time.perf_counter()
    overrides = {"gossip_steps": args.gossip_steps}
    dtype = np.dtype(args.dtype)
    try:
        if cfg.model == "lmccs" and args.tune_lambda:
            best, results = tune_lambda(data, train_q, val_q, cfg, dtype=dtype, model_overrides=overrides)
            man.config["lambda_search"] = {repr(k): v.best_val for k, v in results.items()}
            cfg = TrainConfig(**{**cfg.to_dict(), "lam": best})
            result = results[best]
            model = build_model(cfg.model_config(**overrides), seed=cfg.seed, dtype=dtype)
            model.store.load_state_dict(result.state)
            write_history(result.history, out / "history.tsv")
        else:
            model = build_model(cfg.model_config(**overrides), seed=cfg.seed, dtype=dtype)
            result = train(model, data, train_q, val_q, cfg, out / "history.tsv")
    except TrainingError as e:
        raise TrainFailed(str(e)) from e
    mcfg = model.config
    man.phase("train", t)
    meta = {"model": mcfg.to_dict(), "train": cfg.to_dict(), "seed": cfg.seed, "N": data.N, "dtype": dtype.name,
            "best_epoch": result.best_epoch, "best_val_mse": result.best_val,
            "split": {"train": [g.id for g in train_q], "val": [g.id for g in val_q],
                      "test": [g.id for g in test_q]}}
    ad.save_checkpoint(model.store, out / "checkpoint.json", meta)
    man.config["train"] = cfg.to_dict()
    man.config["model"] = mcfg.to_dict()
    man.outputs.update(checkpoint=str(out / "checkpoint.json"), history=str(out / "history.tsv"))
    print(f"epochs\t{len(result.history)}\nbest_epoch\t{result.best_epoch}\nbest_val_mse\t{result.best_val!r}")
    return out


def _split_queries_from(meta: dict, data: PairData, split: str):
    ids = meta.get("split", {}).get(split)
    if ids is None:
        raise SchemaError(f"checkpoint has no {split!r} split")
    by_id = {g.id: g for g in data.queries}
    missing = [q for q in ids if q not in by_id]
    if missing:
        raise SchemaError(f"split queries missing from data: {missing[:3]}")
    return [by_id[q] for q in ids]


def cmd_eval(args, man: RunManifest):
    t = time.perf_counter()
    data, labels_path = _load_pair_data(args)
    man.inputs.update(data=str(_data_dir(args)), labels=str(labels_path))
    if args.checkpoint:
        model, meta = _load_model(Path(args.checkpoint))
        man.inputs["checkpoint"] = str(args.checkpoint)
        queries = data.queries if args.split == "all" else _split_queries_from(meta, data, args.split)
        target = args.target or meta["train"]["target"]
        kind = model.config.kind
        S = predict(model, queries, data.corpus, max(data.N, meta.get("N", 0)))
    else:
        # oracle as model: the exact labels of the requested target are the scores
        if not args.target:
            raise UsageError("eval without --checkpoint needs --target (oracle scores)")
        fr = tuple(args.fractions)
        splits = dict(zip(("train", "val", "test"), split_queries(data.queries, fr, args.seed)))
        queries = data.queries if args.split == "all" else splits[args.split]
        target, kind = args.target, "oracle"
        S = label_matrix(data, queries, target)
    Y = label_matrix(data, queries, target)
    report = evaluate(S, Y, [q.id for q in queries], args.tau)
    out = _out_dir(args.out)
    report.write(out / "report.tsv")
    write_scores(out / "scores.tsv", [q.id for q in queries], [c.id for c in data.corpus], kind, S)
    man.config.update(split=args.split, target=target, model=kind)
    man.outputs.update(report=str(out / "report.tsv"), scores=str(out / "scores.tsv"))
    man.phase("eval", t)
    for name, (m, se) in report.summary().items():
        print(f"{name}\t{m:.6g}\t{se:.6g}")
    if report.undefined:
        print(f"undefined_queries\t{','.join(report.undefined)}")
    return out


def _find(graphs, gid: str, what: str):
    for g in graphs:
        if g.id == gid:
            return g
    raise SchemaError(f"unknown {what} id {gid!r}")


def cmd_retrieve(args, man: RunManifest):
    t = time.perf_counter()
    d = _data_dir(args)
    corpus = _load_graphs(d / "corpus.txt", "corpus file")
    queries = _load_graphs(d / "queries.txt", "query file")
    model, meta = _load_model(Path(args.checkpoint))
    query = _find(queries, args.query_id, "query")
    N = max(meta.get("N", 0), max(g.num_nodes for g in corpus + [query]))
    index = CorpusIndex(model, corpus, N)
    man.phase("index", t)
    t = time.perf_counter()
    ranking = rank_corpus(query, index, args.k)
    out = _out_dir(args.out)
    path = out / f"ranking_{query.id}.tsv"
    write_ranking(path, query.id, ranking)
    man.inputs.update(data=str(d), checkpoint=str(args.checkpoint))
    man.outputs["ranking"] = str(path)
    man.phase("rank", t)
    for r, (cid, s) in enumerate(ranking, start=1):
        print(f"{query.id}\t{r}\t{cid}\t{s:.6g}")
    return out


def cmd_explain(args, man: RunManifest):
    t = time.perf_counter()
    d = _data_dir(args)
    corpus = _load_graphs(d / "corpus.txt", "corpus file")
    queries = _load_graphs(d / "queries.txt", "query file")
    model, meta = _load_model(Path(args.checkpoint))
    q, c = _find(queries, args.query_id, "query"), _find(corpus, args.corpus_id, "corpus")
    N = max(meta.get("N", 0), q.num_nodes, c.num_nodes)
    qb, cb = GraphBatch([q], N), GraphBatch([c], N)
    kind = model.config.kind
    with ad.no_grad():
        if kind == "baseline":
            raise UsageError("the embed-min baseline produces no node alignment")
        if kind == "xmcs":
            _, _, P, _ = model.run(qb, cb)
        else:
            eq, ec = model.embed(qb), model.embed(cb)
            P = model.gs(eq.layers[-1], ec.layers[-1])
    perm = hungarian_round(P.value[0])
    edges = matched_edges(qb.A[0], cb.A[0], perm)
    out = _out_dir(args.out)
    path = out / f"alignment_{q.id}_{c.id}.tsv"
    write_alignment(path, q.id, c.id, perm, q.num_nodes, c.num_nodes, edges)
    man.inputs.update(data=str(d), checkpoint=str(args.checkpoint))
    man.outputs["alignment"] = str(path)
    man.phase("explain", t)
    print(path.read_text(encoding="utf-8"), end="")
    return out


def cmd_verify(args, man: RunManifest):
    suites = SUITES if args.suite == "all" else (args.suite,)
    failed = 0
    lines = []
    for suite in suites:
        t = time.perf_counter()
        for res in run_suite(suite, seed=args.seed, quick=args.quick):
            lines.append(res.line())
            print(res.line(), flush=True)
            failed += not res.ok
        man.phase(suite, t)
    man.config["failed_checks"] = failed
    out = None
    if args.out:
        out = _out_dir(args.out)
        (out / "verify.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        man.outputs["report"] = str(out / "verify.tsv")
    if failed:
        if out is not None:
            man.write(out / "manifest.json")
        raise VerifyFailed(f"{failed} check(s) failed")
    return out


# ---- parser ---------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--data", help=f"data directory (default ${DATA_ENV} or ./data)")
    p.add_argument("--log-level", default="WARNING")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcsnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="sample corpus and query graphs")
    _add_common(p)
    p.add_argument("--sources", help="source graphs file; synthetic molecule-like graphs if omitted")
    p.add_argument("--num-sources", type=int, default=40)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    p.add_argument("--corpus-count", type=int)
    p.add_argument("--query-count", type=int)
    p.add_argument("--min-nodes", type=int)
    p.add_argument("--max-nodes", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("label", help="exact MCES/MCCS labels for every pair")
    _add_common(p)
    p.add_argument("--queries")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--combo-a", type=float)
    p.add_argument("--budget", type=int, help="search-node budget per pair and measure")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train a scoring model")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_KINDS, default="lmces")
    p.add_argument("--target", choices=TARGETS, default="mces")
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--fractions", type=float, nargs=3, default=(0.6, 0.2, 0.2))
    p.add_argument("--lam", type=float, help="LMCCS temperature")
    p.add_argument("--lam-grid", type=float, nargs="+")
    p.add_argument("--tune-lambda", action="store_true")
    p.add_argument("--tag", help="dataset tag for the default temperature (MM, MR, FM, FR, DD, COX2, MSRC)")
    p.add_argument("--gossip-steps", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32",
                   help="training precision (float64 gives bitwise-reproducible test runs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics on a query split")
    _add_common(p)
    p.add_argument("--checkpoint", help="omit to score with the exact labels")
    p.add_argument("--labels")
    p.add_argument("--target", choices=TARGETS)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--fractions", type=float, nargs=3, default=(0.6, 0.2, 0.2))
    p.add_argument("--tau", choices=("a", "b"), default="b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="rank the corpus for one query")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("explain", help="hard node alignment and matched edges for one pair")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--corpus-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("verify", help="randomized property checks")
    _add_common(p)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--quick", action="store_true", help="a quarter of the trials")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys use flag spelling."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with the ``--config`` file entries as subcommand defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    if not known.config or command not in subs:
        return parser.parse_args(argv)
    cfg = read_config(_existing(known.config, "config file"))
    sub = subs[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions or k in ("config", "help"):
            raise SchemaError(f"config key {k!r} is not an option of {command}")
        a = actions[k]
        try:
            if a.nargs in ("+", "*") or isinstance(a.nargs, int):
                conv = [a.type(x) if a.type else x for x in v.split()]
            elif isinstance(a, argparse._StoreTrueAction):
                conv = v.lower() in ("1", "true", "yes", "on")
            else:
                conv = a.type(v) if a.type else v
        except ValueError as e:
            raise SchemaError(f"config key {k!r}: {e}") from e
        if a.choices is not None and conv not in a.choices:
            raise SchemaError(f"config key {k!r}: {conv!r} not in {list(a.choices)}")
        defaults[k] = conv
        a.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        np.random.seed(args.seed)
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        man = RunManifest(command=args.command, config=resolved, seed=args.seed)
        t = time.perf_counter()
        out = args.func(args, man)
        man.phase("total", t)
        if out is not None:
            man.write(Path(out) / f"manifest_{args.command}.json")
        return 0
    except CliError as e:
        err, code = e, e.code
    except (GraphFormatError, PaddingError, ConfigError, ValidationError, ValueError, KeyError) as e:
        err, code = SchemaError(str(e)), SchemaError.code
    except (SamplingError, GenerationError) as e:
        err, code = e, 8
    except FileNotFoundError as e:
        err, code = MissingFileError(str(e)), MissingFileError.code
    msg = str(err).replace("\n", " ").replace("\t", " ")
    print(f"error\t{type(err).__name__}\t{msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
