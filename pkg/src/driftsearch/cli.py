"""Command-line entry points: simulation runs, plot pivots, corpus tools,
and the interactive service."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .corpus import CorpusIndex, load_newsgroups
from .model import PRESETS, Hyperparameters
from .simharness import (
    Scenario,
    SimConfig,
    SimModel,
    pivot_plotdata,
    run_experiment,
    write_failures_summary,
    write_results_csv,
)


def _load_corpus(args) -> CorpusIndex:
    cache = Path(args.corpus_cache) if args.corpus_cache else None
    if cache and cache.exists():
        return CorpusIndex.load_cache(cache)
    docs = load_newsgroups(args.dataset_path, per_group=args.per_group, groups=args.groups)
    index = CorpusIndex(docs, max_df=args.max_df, min_df=args.min_df)
    if cache:
        index.save_cache(cache)
    return index


def _hyper(args) -> Hyperparameters:
    if args.hyper_config:
        return Hyperparameters.from_config_text(Path(args.hyper_config).read_text())
    return PRESETS[args.preset]


def cmd_simulate(args) -> int:
    corpus = _load_corpus(args)
    models = list(SimModel) if args.model == "all" else [SimModel(args.model)]
    scenarios = list(Scenario) if args.scenario == "all" else [Scenario(args.scenario)]
    config = SimConfig(
        list_size=args.list_size,
        steps=args.steps,
        sessions=args.sessions,
        group_size=args.per_group,
        rng_seed=args.seed,
        hyper=_hyper(args),
    )
    t0 = time.time()
    cells = run_experiment(config, corpus, models, scenarios)
    write_results_csv(cells, args.out)
    write_failures_summary(cells, str(args.out) + ".failures.json")
    print(f"wrote {args.out} ({len(cells)} cells, {time.time() - t0:.0f}s)")
    for cell in cells:
        print(
            f"  {cell.model.value:>6} {cell.scenario.value}: final mean F1 "
            f"{cell.final_f1:.3f} over {cell.n_sessions} sessions"
            + (f" ({cell.n_failures} failed)" if cell.n_failures else "")
        )
    return 0


def cmd_plotdata(args) -> int:
    pivot_plotdata(args.infile, args.out, value=args.value)
    print(f"wrote {args.out}")
    return 0


def cmd_make_corpus(args) -> int:
    from .synthetic import generate_synthetic_newsgroups

    root = generate_synthetic_newsgroups(
        args.out, groups=args.groups, per_group=args.per_group, seed=args.seed
    )
    print(f"wrote synthetic corpus under {root}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings.from_env()
    if args.dataset_path:
        settings.corpus_path = args.dataset_path
    if args.corpus_cache:
        settings.corpus_cache = args.corpus_cache
    if args.data_dir:
        settings.data_dir = args.data_dir
    if args.static_dir:
        settings.static_dir = args.static_dir
    settings.preset = args.preset
    settings.slice_k = args.slice_k
    settings.groups = args.groups
    settings.per_group = args.per_group
    app = create_app(settings)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _add_corpus_args(parser, require_dataset=True):
    parser.add_argument("--dataset-path", required=require_dataset,
                        help="newsgroups-layout dataset directory")
    parser.add_argument("--corpus-cache", help="read/write a cached index (.npz)")
    parser.add_argument("--groups", type=int, default=20)
    parser.add_argument("--per-group", type=int, default=100)
    parser.add_argument("--max-df", type=float, default=0.2)
    parser.add_argument("--min-df", type=float, default=0.04)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftsearch")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the simulated-user experiment")
    _add_corpus_args(sim)
    sim.add_argument("--scenario", choices=["A", "B", "C", "D", "all"], default="all")
    sim.add_argument("--model", choices=["ard", "lg", "oracle", "all"], default="all")
    sim.add_argument("--sessions", type=int, default=200)
    sim.add_argument("--steps", type=int, default=100)
    sim.add_argument("--list-size", type=int, default=50)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="results.csv")
    sim.add_argument("--preset", choices=sorted(PRESETS), default="simulation")
    sim.add_argument("--hyper-config", help="flat key=value hyperparameter file")
    sim.add_argument("--runtime-serial", action="store_true",
                     help="kept for compatibility; runs are always serial per session")
    sim.set_defaults(func=cmd_simulate)

    plot = sub.add_parser("plotdata", help="pivot results CSV into per-curve series")
    plot.add_argument("--in", dest="infile", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--value", default="mean_f1",
                      choices=["mean_f1", "stderr_f1", "mean_step_seconds"])
    plot.set_defaults(func=cmd_plotdata)

    make = sub.add_parser("make-corpus", help="write a synthetic newsgroups-layout corpus")
    make.add_argument("--out", required=True)
    make.add_argument("--groups", type=int, default=20)
    make.add_argument("--per-group", type=int, default=100)
    make.add_argument("--seed", type=int, default=0)
    make.set_defaults(func=cmd_make_corpus)

    serve = sub.add_parser("serve", help="run the interactive HTTP service")
    _add_corpus_args(serve, require_dataset=False)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir", help="session persistence directory")
    serve.add_argument("--static-dir", help="frontend assets to serve at /")
    serve.add_argument("--preset", choices=sorted(PRESETS), default="interactive")
    serve.add_argument("--slice-k", type=int, default=400)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
