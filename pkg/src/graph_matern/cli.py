"""Command line interface.

Subcommands:

    eigen            eigendecompose a graph Laplacian (with on-disk cache)
    fit-regression   GP regression on node targets
    fit-classify     variational multi-class classification on node labels
    predict          evaluate a saved model snapshot on all nodes
    compare-kernels  repeated-split comparison across kernel families

All commands write into the ``--out`` directory: a JSON summary/metrics file
with a ``timestamp`` field plus CSV outputs that are byte-identical across
reruns with the same inputs. Seeds: repeat k of compare-kernels uses
``seed + k``; within one run the same seed value drives the split and the
fit (separate generators). The eigenpair cache directory comes from
``--cache-dir`` or the GRAPH_MATERN_CACHE_DIR environment variable.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classification import (
    VariationalClassifier,
    fit_classifier,
    load_classifier,
    predict_classes,
    read_labels_csv,
    save_classifier,
)
from .graphs import build_laplacian, read_edge_list
from .kernels import KernelSpec
from .optim import AdamConfig, metrics, random_split
from .regression import (
    GPRegressionModel,
    fit,
    load_model,
    read_targets_csv,
    save_model,
    woodbury_posterior,
)
from .spectral import cached_eigendecomposition

_SCHEMA_VERSION = 1

_COMPARE_ROWS = (
    ("matern", "unnormalized"),
    ("matern", "sym_normalized"),
    ("diffusion", "unnormalized"),
    ("diffusion", "sym_normalized"),
    ("random_walk", "sym_normalized"),
    ("inverse_cosine", "sym_normalized"),
)


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def _load_kernel_spec(text, default: KernelSpec) -> KernelSpec:
    if text is None:
        return default
    if os.path.exists(text):
        with open(text, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    else:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            raise ValueError(
                f"--kernel is neither an existing file nor valid JSON: {text!r}"
            ) from None
    return KernelSpec.from_dict(obj)


def _basis_for(graph, kind, eigenpairs, cache_dir):
    operator = build_laplacian(graph, kind)
    basis, hit, path = cached_eigendecomposition(
        operator, min(eigenpairs, graph.node_count), cache_dir=cache_dir
    )
    return operator, basis, hit, path


def _default_regression_spec(kind="unnormalized") -> KernelSpec:
    return KernelSpec(family="matern", nu=1.5, kappa=3.0, sigma2=1.0,
                      laplacian_kind=kind, normalize_variance=True)


def _default_classify_spec(kind="sym_normalized") -> KernelSpec:
    return KernelSpec(family="matern", nu=3.0, kappa=5.0, sigma2=1.0,
                      laplacian_kind=kind, normalize_variance=True)


def _compare_spec(family, kind, task, rw_p) -> KernelSpec:
    if family == "matern":
        base = _default_regression_spec(kind) if task == "regression" else _default_classify_spec(kind)
        return base
    if family == "diffusion":
        kappa = 3.0 if task == "regression" else 5.0
        return KernelSpec(family="diffusion", kappa=kappa, laplacian_kind=kind)
    if family == "random_walk":
        return KernelSpec(family="random_walk", alpha=0.5, p=rw_p, laplacian_kind=kind)
    return KernelSpec(family="inverse_cosine", laplacian_kind=kind)


def cmd_eigen(args) -> int:
    graph = read_edge_list(args.graph)
    _, basis, hit, path = _basis_for(
        graph, args.laplacian, args.eigenpairs, args.cache_dir
    )
    out = _out_dir(args)
    summary = {
        "schema_version": _SCHEMA_VERSION,
        "timestamp": _timestamp(),
        "nodes": graph.node_count,
        "edges": graph.edge_count,
        "laplacian": args.laplacian,
        "eigenpairs": basis.n_retained,
        "lambda_min": float(basis.eigenvalues[0]),
        "lambda_max": float(basis.eigenvalues[-1]),
        "cache_file": str(path) if path is not None else None,
        "cache_hit": hit,
    }
    _write_json(out / "summary.json", summary)
    print(
        f"eigen: n={graph.node_count} pairs={basis.n_retained} "
        f"lambda_min={_fmt(basis.eigenvalues[0])} "
        f"lambda_max={_fmt(basis.eigenvalues[-1])} cache_hit={hit}"
    )
    return 0


def _fit_one_regression(basis, spec, nodes, values, noise2, config):
    model = GPRegressionModel(
        spec=spec, basis=basis, train_nodes=nodes, targets=values, noise2=noise2
    )
    return fit(model, config)


def cmd_fit_regression(args) -> int:
    graph = read_edge_list(args.graph)
    spec = _load_kernel_spec(args.kernel, _default_regression_spec())
    nodes, values = read_targets_csv(args.targets)
    if nodes.size == 0:
        raise ValueError("targets file is empty")
    _, basis, _, _ = _basis_for(
        graph, spec.laplacian_kind, args.eigenpairs, args.cache_dir
    )

    if args.train_size is None:
        train_idx = np.arange(nodes.size)
        test_idx = np.zeros(0, dtype=np.int64)
    else:
        train_idx, test_idx = random_split(
            np.arange(nodes.size), args.train_size, args.seed
        )
    config = AdamConfig(iterations=args.iterations, learning_rate=args.lr)
    model, trace = _fit_one_regression(
        basis, spec, nodes[train_idx], values[train_idx], args.noise2, config
    )

    summary = woodbury_posterior(model, query=None, diag=True)
    out = _out_dir(args)
    with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
        fh.write("node_index,mean,std\n")
        for i in range(basis.total_dim):
            fh.write(f"{i},{_fmt(summary.mean[i])},{_fmt(summary.stddev[i])}\n")
    save_model(model, out / "model.json")

    train_mse = metrics(summary.mean[nodes[train_idx]], values[train_idx], "regression")
    payload = {
        "schema_version": _SCHEMA_VERSION,
        "timestamp": _timestamp(),
        "task": "regression",
        "kernel": model.spec.to_dict(),
        "noise2": model.noise2,
        "iterations": args.iterations,
        "final_loss": float(trace[-1]),
        "best_loss": float(np.min(trace)),
        "train_count": int(train_idx.size),
        "test_count": int(test_idx.size),
        "train_mse": train_mse,
    }
    line = f"fit-regression: train_mse={_fmt(train_mse)}"
    if test_idx.size:
        test_mse = metrics(summary.mean[nodes[test_idx]], values[test_idx], "regression")
        payload["test_mse"] = test_mse
        line += f" test_mse={_fmt(test_mse)}"
    _write_json(out / "metrics.json", payload)
    print(line)
    return 0


def cmd_fit_classify(args) -> int:
    graph = read_edge_list(args.graph)
    spec = _load_kernel_spec(args.kernel, _default_classify_spec())
    nodes, labels = read_labels_csv(args.labels)
    if nodes.size == 0:
        raise ValueError("labels file is empty")
    n_classes = args.classes if args.classes is not None else int(labels.max()) + 1
    if labels.max() >= n_classes:
        raise ValueError(
            f"label {int(labels.max())} out of range for {n_classes} declared classes"
        )
    _, basis, _, _ = _basis_for(
        graph, spec.laplacian_kind, args.eigenpairs, args.cache_dir
    )

    if args.train_size is None:
        train_idx = np.arange(nodes.size)
        test_idx = np.zeros(0, dtype=np.int64)
    else:
        train_idx, test_idx = random_split(
            np.arange(nodes.size), args.train_size, args.seed
        )
    if args.test_size is not None and test_idx.size > args.test_size:
        pick = np.random.default_rng(args.seed + 1).choice(
            test_idx.size, size=args.test_size, replace=False
        )
        test_idx = np.sort(test_idx[pick])

    model = VariationalClassifier.create(
        spec=spec,
        basis=basis,
        n_classes=n_classes,
        inducing_nodes=nodes[train_idx],
    )
    config = AdamConfig(iterations=args.iterations, learning_rate=args.lr)
    model, trace = fit_classifier(
        model,
        nodes[train_idx],
        labels[train_idx],
        config,
        seed=args.seed,
        mc_samples=args.mc_samples,
    )

    probs, pred = predict_classes(
        model, query=None, mc_samples=args.predict_samples, seed=args.seed
    )
    out = _out_dir(args)
    with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
        header = ",".join(f"p{c}" for c in range(n_classes))
        fh.write(f"node_index,label,{header}\n")
        for i in range(basis.total_dim):
            row = ",".join(_fmt(p) for p in probs[i])
            fh.write(f"{i},{int(pred[i])},{row}\n")
    save_classifier(model, out / "model.json")

    train_acc = metrics(pred[nodes[train_idx]], labels[train_idx], "classification")
    payload = {
        "schema_version": _SCHEMA_VERSION,
        "timestamp": _timestamp(),
        "task": "classification",
        "kernel": model.spec.to_dict(),
        "classes": n_classes,
        "iterations": args.iterations,
        "final_elbo": float(trace[-1]) if trace.size else None,
        "train_count": int(train_idx.size),
        "test_count": int(test_idx.size),
        "train_accuracy": train_acc,
    }
    line = f"fit-classify: train_accuracy={_fmt(train_acc)}"
    if test_idx.size:
        test_acc = metrics(pred[nodes[test_idx]], labels[test_idx], "classification")
        payload["test_accuracy"] = test_acc
        line += f" test_accuracy={_fmt(test_acc)}"
    _write_json(out / "metrics.json", payload)
    print(line)
    return 0


def cmd_predict(args) -> int:
    graph = read_edge_list(args.graph)
    with open(args.model, "r", encoding="utf-8") as fh:
        snapshot = json.load(fh)
    kind = snapshot.get("kind")
    kernel = snapshot.get("kernel", {})
    lap = kernel.get("laplacian", "unnormalized")
    eigenpairs = snapshot.get("eigenpairs", graph.node_count)
    _, basis, _, _ = _basis_for(graph, lap, eigenpairs, args.cache_dir)
    out = _out_dir(args)
    if kind == "regression":
        model = load_model(args.model, basis)
        summary = woodbury_posterior(model, query=None, diag=True)
        with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
            fh.write("node_index,mean,std\n")
            for i in range(basis.total_dim):
                fh.write(f"{i},{_fmt(summary.mean[i])},{_fmt(summary.stddev[i])}\n")
        print(f"predict: wrote {basis.total_dim} regression rows")
        return 0
    if kind == "classifier":
        model = load_classifier(args.model, basis)
        probs, pred = predict_classes(
            model, query=None, mc_samples=args.predict_samples, seed=args.seed
        )
        with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
            header = ",".join(f"p{c}" for c in range(model.n_classes))
            fh.write(f"node_index,label,{header}\n")
            for i in range(basis.total_dim):
                row = ",".join(_fmt(p) for p in probs[i])
                fh.write(f"{i},{int(pred[i])},{row}\n")
        print(f"predict: wrote {basis.total_dim} classification rows")
        return 0
    raise ValueError(f"unknown snapshot kind {kind!r} in {args.model}")


def cmd_compare_kernels(args) -> int:
    graph = read_edge_list(args.graph)
    if args.task == "regression":
        if args.targets is None:
            raise ValueError("--targets is required for the regression task")
        nodes, values = read_targets_csv(args.targets)
        metric_name = "test_mse"
    else:
        if args.labels is None:
            raise ValueError("--labels is required for the classification task")
        nodes, labels = read_labels_csv(args.labels)
        n_classes = args.classes if args.classes is not None else int(labels.max()) + 1
        metric_name = "test_accuracy"
    if nodes.size == 0:
        raise ValueError("no labeled/targeted nodes")
    train_size = args.train_size
    if train_size is None:
        raise ValueError("--train-size is required for compare-kernels")

    bases = {}
    for kind in ("unnormalized", "sym_normalized"):
        _, basis, _, _ = _basis_for(graph, kind, args.eigenpairs, args.cache_dir)
        bases[kind] = basis

    config = AdamConfig(iterations=args.iterations, learning_rate=args.lr)
    rows = []
    for family, kind in _COMPARE_ROWS:
        spec = _compare_spec(family, kind, args.task, args.rw_p)
        scores = []
        for k in range(args.repeats):
            seed = args.seed + k
            train_idx, test_idx = random_split(np.arange(nodes.size), train_size, seed)
            if args.test_size is not None and test_idx.size > args.test_size:
                pick = np.random.default_rng(seed + 1).choice(
                    test_idx.size, size=args.test_size, replace=False
                )
                test_idx = np.sort(test_idx[pick])
            if test_idx.size == 0:
                raise ValueError("empty test split; lower --train-size")
            basis = bases[kind]
            if args.task == "regression":
                model, _ = _fit_one_regression(
                    basis, spec, nodes[train_idx], values[train_idx],
                    args.noise2, config,
                )
                summary = woodbury_posterior(model, query=nodes[test_idx], diag=True)
                scores.append(metrics(summary.mean, values[test_idx], "regression"))
            else:
                model = VariationalClassifier.create(
                    spec=spec, basis=basis, n_classes=n_classes,
                    inducing_nodes=nodes[train_idx],
                )
                model, _ = fit_classifier(
                    model, nodes[train_idx], labels[train_idx], config,
                    seed=seed, mc_samples=args.mc_samples,
                )
                _, pred = predict_classes(
                    model, query=nodes[test_idx],
                    mc_samples=args.predict_samples, seed=seed,
                )
                scores.append(metrics(pred, labels[test_idx], "classification"))
        scores = np.asarray(scores)
        rows.append({
            "kernel": family,
            "laplacian": kind,
            "mean": float(np.mean(scores)),
            "std": float(np.std(scores)),
            "runs": [float(s) for s in scores],
        })
        print(
            f"compare-kernels: {family}/{kind} {metric_name} "
            f"{np.mean(scores):.4f} ({np.std(scores):.4f})"
        )

    out = _out_dir(args)
    with open(out / "results.csv", "w", encoding="utf-8") as fh:
        fh.write(f"kernel,laplacian,{metric_name}_mean,{metric_name}_std,repeats\n")
        for row in rows:
            fh.write(
                f"{row['kernel']},{row['laplacian']},{_fmt(row['mean'])},"
                f"{_fmt(row['std'])},{args.repeats}\n"
            )
    _write_json(out / "results.json", {
        "schema_version": _SCHEMA_VERSION,
        "timestamp": _timestamp(),
        "task": args.task,
        "metric": metric_name,
        "repeats": args.repeats,
        "train_size": train_size,
        "test_size": args.test_size,
        "iterations": args.iterations,
        "rows": rows,
    })
    return 0


def _add_common(p, kernel=True):
    p.add_argument("--graph", required=True, help="edge list file")
    p.add_argument("--eigenpairs", type=int, default=500,
                   help="spectral modes to retain (clamped to n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--cache-dir", default=None,
                   help="eigenpair cache directory (default $GRAPH_MATERN_CACHE_DIR)")
    if kernel:
        p.add_argument("--kernel", default=None,
                       help="kernel spec as inline JSON or a path to a JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graph-matern",
        description="Matern-family Gaussian processes on weighted graphs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="eigendecompose a graph Laplacian")
    _add_common(p, kernel=False)
    p.add_argument("--laplacian", choices=("unnormalized", "sym_normalized"),
                   default="unnormalized")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("fit-regression", help="GP regression on node targets")
    _add_common(p)
    p.add_argument("--targets", required=True, help="node_index,value CSV")
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--noise2", type=float, default=0.01,
                   help="initial observation noise variance")
    p.set_defaults(func=cmd_fit_regression)

    p = sub.add_parser("fit-classify", help="variational classification on labels")
    _add_common(p)
    p.add_argument("--labels", required=True, help="node_index,class_index CSV")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--test-size", type=int, default=None)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--mc-samples", type=int, default=20)
    p.add_argument("--predict-samples", type=int, default=200)
    p.set_defaults(func=cmd_fit_classify)

    p = sub.add_parser("predict", help="evaluate a saved model snapshot")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", required=True, help="model.json snapshot")
    p.add_argument("--out", default=".")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predict-samples", type=int, default=200)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare-kernels", help="repeated-split kernel comparison")
    _add_common(p, kernel=False)
    p.add_argument("--task", choices=("regression", "classification"), required=True)
    p.add_argument("--targets", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--test-size", type=int, default=None)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--noise2", type=float, default=0.01)
    p.add_argument("--mc-samples", type=int, default=20)
    p.add_argument("--predict-samples", type=int, default=200)
    p.add_argument("--rw-p", type=int, default=3,
                   help="fixed power for the random walk kernel row")
    p.set_defaults(func=cmd_compare_kernels)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
