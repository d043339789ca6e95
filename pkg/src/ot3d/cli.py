"""Command-line entry points: dataset tooling, the open-ended protocol
runner, store-backed teach/correct/classify, and the HTTP service."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import memory
from .cloud import load_cloud, save_ot3d, save_pcd
from .codebook import load_dictionary, save_dictionary
from .datasets import (FileDataset, SyntheticDataset, load_dataset,
                       write_synthetic_dataset)
from .learner import GenericModel, LearningAgent, bootstrap_generic_model
from .params import Params, load_config, save_config
from .protocol import (ProtocolConfig, compute_metrics, load_trace, pair_accuracy,
                       plot_accuracy_curves, run_protocol, save_trace,
                       write_summary_csv)
from .spin import describe_object_matrix
from .synthetic import FAMILIES
from .topics import load_model, save_model

MODEL_FILE = "model.otlm"
DICT_FILE = "generic.otdc"
PARAMS_FILE = "params.cfg"


def _params_from(args) -> Params:
    return load_config(args.config) if args.config else Params()


def _save_bundle(generic: GenericModel, params: Params, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_model(generic.topics, out / MODEL_FILE)
    save_dictionary(generic.dictionary, out / DICT_FILE)
    save_config(params, out / PARAMS_FILE)


def _load_bundle(path: Path) -> tuple[GenericModel, Params]:
    model = load_model(path / MODEL_FILE)
    dictionary = load_dictionary(path / DICT_FILE)
    if model.topics is None:
        model.synthesize_topics(dictionary)
    return GenericModel(dictionary, model), load_config(path / PARAMS_FILE)


def _load_agent(args) -> tuple[LearningAgent, Params]:
    generic, params = _load_bundle(Path(args.model))
    agent = LearningAgent(generic, params)
    store_dir = Path(args.store)
    if (store_dir / "manifest.json").exists():
        agent.store, _ = memory.load_store(store_dir)
    return agent, params


def cmd_synth(args) -> int:
    index = write_synthetic_dataset(
        args.out, families=args.families.split(","),
        views_per_category=args.per_category, points=args.points,
        noise_sigma=args.noise, scale_jitter=args.jitter, seed=args.seed,
        fmt=args.format)
    print(f"wrote {index.total_views()} views in {len(index.categories)} "
          f"categories under {args.out}")
    return 0


def cmd_convert(args) -> int:
    def convert_one(src: Path, dst: Path) -> None:
        cloud = load_cloud(src)
        dst.parent.mkdir(parents=True, exist_ok=True)
        (save_ot3d if args.to == "ot3d" else save_pcd)(cloud, dst)

    if args.in_root:
        in_root, out_root = Path(args.in_root), Path(args.out_root)
        index = load_dataset(in_root, layout=args.layout)
        n = 0
        for name, paths in index.categories.items():
            for p in paths:
                convert_one(p, out_root / name / f"{p.stem}.{args.to}")
                n += 1
        print(f"converted {n} files into {out_root}")
        return 0
    convert_one(Path(args.src), Path(args.dst))
    print(f"converted {args.src} -> {args.dst}")
    return 0


def cmd_build_model(args) -> int:
    params = _params_from(args)
    index = load_dataset(args.dataset_root, layout=args.layout)
    provider = FileDataset(index, params)
    feature_sets = [provider.features(v) for v in provider.all_view_ids()]
    generic = bootstrap_generic_model(feature_sets, params)
    _save_bundle(generic, params, Path(args.out))
    print(f"model bundle written to {args.out} "
          f"(V={generic.dictionary.size}, K={generic.topics.k})")
    return 0


def _view_features(path: str, params: Params) -> np.ndarray:
    return describe_object_matrix(load_cloud(path), params)


def cmd_teach(args) -> int:
    agent, params = _load_agent(args)
    views = [_view_features(f, params) for f in args.files]
    agent.teach(args.name, views)
    memory.save_store(agent.store, args.store, params.config_hash())
    print(f"taught {args.name!r} with {len(views)} view(s); "
          f"{len(agent.store)} categories known")
    return 0


def cmd_correct(args) -> int:
    agent, params = _load_agent(args)
    agent.correct(args.name, _view_features(args.file, params))
    memory.save_store(agent.store, args.store, params.config_hash())
    print(f"corrected {args.name!r}; now "
          f"{agent.store.instance_counts()[args.name]} instances")
    return 0


def cmd_classify(args) -> int:
    agent, params = _load_agent(args)
    threshold = math.inf if args.closed_set else params.unknown_threshold
    result = agent.classify(_view_features(args.file, params), threshold)
    label = result.label if result.label is not None else "Unknown"
    print(f"label: {label}")
    for name, dist in result.ranked:
        print(f"  {name}: {dist:.6f}")
    return 0


def cmd_run_protocol(args) -> int:
    params = _params_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    traces = []
    for i in range(args.seeds):
        seed = args.base_seed + i
        if args.dataset_root:
            index = load_dataset(args.dataset_root, layout=args.layout)
            provider = FileDataset(index, params.replace(seed=seed))
        else:
            provider = SyntheticDataset(
                params.replace(seed=seed), views_per_category=args.per_category,
                seed=args.dataset_seed)
        config = ProtocolConfig(dataset=provider, params=params,
                                tau=args.tau, stall_window=args.stall_window,
                                seed=seed)
        trace, agent = run_protocol(config, representation=args.representation)
        metrics = compute_metrics(trace, agent.store)
        save_trace(trace, out / f"trace_seed{seed:03d}.jsonl")
        rows.append({"seed": seed, "status": trace.status, **metrics.to_dict()})
        traces.append(trace)
        pair = pair_accuracy(trace, ("cylinder", "mug"))
        extra = f" pair={pair:.3f}" if pair is not None else ""
        print(f"seed {seed}: {trace.status} "
              f"QCI={metrics.qci} ALC={metrics.alc} AIC={metrics.aic:.2f} "
              f"GCA={metrics.gca:.3f} APA={metrics.apa:.3f}{extra}")
    write_summary_csv(rows, out / "summary.csv")
    plot_accuracy_curves(traces, out / "accuracy_curves.svg")
    print(f"summary and curves written to {out}")
    return 0


def cmd_plot(args) -> int:
    traces = [load_trace(p) for p in sorted(Path(args.runs).glob("trace_*.jsonl"))]
    if not traces:
        print(f"no trace_*.jsonl files under {args.runs}", file=sys.stderr)
        return 1
    plot_accuracy_curves(traces, args.out)
    print(f"plot written to {args.out}")
    return 0


def cmd_crossval(args) -> int:
    params = _params_from(args)
    index = load_dataset(args.dataset_root, layout=args.layout)
    provider = FileDataset(index, params)
    rng = np.random.default_rng(params.seed)

    folds: dict[str, list[list[str]]] = {}
    for cat in provider.categories():
        views = provider.views(cat)
        order = rng.permutation(len(views))
        folds[cat] = [[views[i] for i in order[f::args.folds]]
                      for f in range(args.folds)]

    accuracies = []
    for f in range(args.folds):
        train = {c: [v for g, part in enumerate(parts) if g != f for v in part]
                 for c, parts in folds.items()}
        test = {c: parts[f] for c, parts in folds.items()}
        train_sets = [provider.features(v) for vs in train.values() for v in vs]
        generic = bootstrap_generic_model(train_sets, params)
        agent = LearningAgent(generic, params)
        for cat, vids in train.items():
            if vids:
                agent.teach(cat, [provider.features(v) for v in vids])
        total = hits = 0
        for cat, vids in test.items():
            for v in vids:
                total += 1
                hits += agent.predict(provider.features(v)) == cat
        acc = hits / total if total else 0.0
        accuracies.append(acc)
        print(f"fold {f}: accuracy {acc:.4f} ({hits}/{total})")
    print(f"mean accuracy over {args.folds} folds: {float(np.mean(accuracies)):.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ot3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--families", default=",".join(FAMILIES))
    p.add_argument("--per-category", type=int, default=20)
    p.add_argument("--points", type=int, default=1200)
    p.add_argument("--noise", type=float, default=0.0015)
    p.add_argument("--jitter", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("pcd", "ot3d"), default="pcd")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert cloud files between formats")
    p.add_argument("src", nargs="?")
    p.add_argument("dst", nargs="?")
    p.add_argument("--to", choices=("pcd", "ot3d"), default="ot3d")
    p.add_argument("--in-root")
    p.add_argument("--out-root")
    p.add_argument("--layout", choices=("flat", "nested"), default="flat")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("build-model", help="bootstrap the generic model from a dataset")
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--layout", choices=("flat", "nested"), default="flat")
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("teach", help="create a category from cloud files")
    p.add_argument("name")
    p.add_argument("files", nargs="+")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("correct", help="add a view to an existing category")
    p.add_argument("name")
    p.add_argument("file")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("classify", help="classify a cloud file against the store")
    p.add_argument("file")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--closed-set", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("run-protocol", help="run simulated-teacher experiments")
    p.add_argument("--config")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-root")
    p.add_argument("--layout", choices=("flat", "nested"), default="flat")
    p.add_argument("--per-category", type=int, default=20)
    p.add_argument("--dataset-seed", type=int, default=42)
    p.add_argument("--tau", type=float, default=0.67)
    p.add_argument("--stall-window", type=int, default=100)
    p.add_argument("--representation", choices=("full", "generic"), default="full")
    p.set_defaults(func=cmd_run_protocol)

    p = sub.add_parser("plot", help="render accuracy-vs-categories curves to SVG")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("crossval", help="k-fold cross-validation on a dataset")
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--config")
    p.add_argument("--layout", choices=("flat", "nested"), default="flat")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("serve", help="run the interactive teaching service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
