"""Command-line driver.

Subcommands: ``train``, ``eval``, ``fk-verify``, ``surface``, ``bench``.
Configuration is a flat ``key = value`` text file plus ``--set key=value``
overrides; every key has a default and unknown keys are rejected.  All
output files are deterministic functions of (config, seed): wall-clock time
goes to the console only, and numerical kernels are pinned to one thread
while a command runs.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path as FsPath

import numpy as np
from threadpoolctl import threadpool_limits

from . import datasets, landscape, network, objectives
from .network import DomainError, MlpModel, ShapeError
from .objectives import EllipticConfig, EndpointSampler, MixupConfig
from .rng import RngStream
from .sde import data_box


class UsageError(Exception):
    pass


# substream tags for the per-run master stream
_TAG_DATA = 1
_TAG_INIT = 2
_TAG_SHUFFLE = 3
_TAG_OBJECTIVE = 4
_TAG_FK = 5

DEFAULTS: dict[str, object] = {
    "dataset": "two_moons",
    "data.n": 1000,
    "data.noise": 0.1,
    "data.test_n": 2000,
    "data.test_noise": -1.0,  # -1 means: same as data.noise
    "data.csv": "",
    "data.targets": "",
    "data.normalize": True,
    "data.mean_pad": False,
    "data.split": "",
    "model.hidden": "4",
    "model.activation": "relu",
    "model.slope": 0.1,
    "model.head": "auto",
    "loss": "auto",
    "objective": "erm",
    "elliptic.n_bridges": 20,
    "elliptic.n_time": 5,
    "elliptic.sigma": 0.05,
    "elliptic.grad_weight": 1.0,
    "elliptic.variant": "path_average",
    "elliptic.endpoints": "inverse_distance",
    "elliptic.simplex_project": "auto",
    "elliptic.t_end": 1.0,
    "mixup.alpha": 1.0,
    "optim": "adam",
    "optim.lr": 0.01,
    "optim.momentum": 0.0,
    "optim.weight_decay": 0.0,
    "optim.beta1": 0.9,
    "optim.beta2": 0.999,
    "optim.epsilon": 1e-8,
    "epochs": 100,
    "batch_size": 16,
    "seed": 0,
    "out": "runs/latest",
    "checkpoint": "",
    "fk.eps": 0.2,
    "fk.sigma": 0.5,
    "fk.n_paths": 500,
    "fk.dt": 1e-3,
    "fk.t_max": 20.0,
    "fk.grid": 6,
    "fk.queries": "",
    "fk.slack": 0.05,
    "fk.dynkin": True,
    "surface.grid": 32,
    "bench.objectives": "erm,elliptic",
    "bench.seeds": 10,
    "bench.n": "",
}

OBJECTIVES = ("erm", "mixup", "elliptic", "elliptic_iw")


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool) or (key == "elliptic.simplex_project" and raw in ("true", "false")):
        if raw not in ("true", "false"):
            if key == "elliptic.simplex_project" and raw == "auto":
                return raw
            raise UsageError(f"key {key!r} expects true/false, got {raw!r}")
        return raw == "true"
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"key {key!r} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise UsageError(f"key {key!r} expects a number, got {raw!r}") from None
    return raw


def parse_config(path: str | None, overrides: list[str] | None) -> dict:
    cfg = dict(DEFAULTS)
    pairs: list[tuple[str, str]] = []
    if path:
        try:
            text = FsPath(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected 'key = value'")
            key, val = line.split("=", 1)
            pairs.append((key.strip(), val))
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        pairs.append((key.strip(), val))
    for key, val in pairs:
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, val)
    return cfg


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def config_echo(cfg: dict) -> str:
    return " ".join(f"{k}={format_value(cfg[k])}" for k in sorted(cfg))


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"{what} expects comma-separated numbers, got {text!r}") from None


def build_datasets(cfg: dict, master: RngStream):
    """Returns (train, test) datasets for the configured source."""
    kind = cfg["dataset"]
    stream = master.child(_TAG_DATA)
    if kind == "two_moons":
        test_noise = cfg["data.test_noise"]
        if test_noise < 0:
            test_noise = cfg["data.noise"]
        train = datasets.two_moons(cfg["data.n"], cfg["data.noise"], stream.child(0))
        test = datasets.two_moons(cfg["data.test_n"], test_noise, stream.child(1))
        return train, test
    if kind == "sine":
        test_noise = cfg["data.test_noise"]
        if test_noise < 0:
            test_noise = cfg["data.noise"]
        train = datasets.synthetic_sine(cfg["data.n"], cfg["data.noise"], stream.child(0))
        test = datasets.synthetic_sine(cfg["data.test_n"], test_noise, stream.child(1))
        return train, test
    if kind == "csv":
        if not cfg["data.csv"]:
            raise UsageError("dataset=csv requires data.csv")
        if not cfg["data.targets"]:
            raise UsageError("dataset=csv requires data.targets")
        ds = datasets.load_csv(
            cfg["data.csv"],
            [t.strip() for t in cfg["data.targets"].split(",")],
            normalize=cfg["data.normalize"],
            mean_pad=cfg["data.mean_pad"],
        )
        fractions = _parse_floats(cfg["data.split"] or "0.7,0.1,0.2", "data.split")
        parts = datasets.split(ds, fractions, stream.child(2))
        return parts[0], parts[-1]
    raise UsageError(f"unknown dataset {cfg['dataset']!r}")


def resolve_task(cfg: dict, ds: datasets.Dataset) -> tuple[str, str, bool]:
    """(loss kind, output head, simplex projection) for the dataset's task."""
    classification = ds.task == "classification"
    head = cfg["model.head"]
    if head == "auto":
        head = "softmax" if classification else "linear"
    kind = cfg["loss"]
    if kind == "auto":
        kind = "cross_entropy" if classification else "mse"
    project = cfg["elliptic.simplex_project"]
    if project == "auto":
        project = classification
    if head not in network.OUTPUT_HEADS:
        raise UsageError(f"unknown model.head {head!r}")
    if kind not in network.LOSS_KINDS:
        raise UsageError(f"unknown loss {kind!r}")
    return kind, head, bool(project)


def build_model(cfg: dict, ds: datasets.Dataset, head: str, master: RngStream) -> MlpModel:
    hidden = [int(h) for h in cfg["model.hidden"].split(",") if h.strip() != ""]
    sizes = [ds.d] + hidden + [ds.k]
    return network.init_mlp(
        sizes,
        master.child(_TAG_INIT),
        activation=cfg["model.activation"],
        slope=cfg["model.slope"],
        head=head,
    )


def elliptic_config(cfg: dict, project: bool) -> EllipticConfig:
    return EllipticConfig(
        n_bridges=cfg["elliptic.n_bridges"],
        n_time=cfg["elliptic.n_time"],
        sigma=cfg["elliptic.sigma"],
        grad_weight=cfg["elliptic.grad_weight"],
        variant=cfg["elliptic.variant"],
        endpoint_mode=cfg["elliptic.endpoints"],
        simplex_project=project,
        t_end=cfg["elliptic.t_end"],
    )


def _batch_objective(cfg, objective, model, kind, ecfg, x, y, stream):
    if objective == "erm":
        return objectives.erm_objective(model, x, y, kind)
    if objective == "mixup":
        return objectives.mixup_objective(
            model, x, y, kind, MixupConfig(cfg["mixup.alpha"]), stream
        )
    if ecfg.endpoint_mode == "inverse_distance":
        sampler = EndpointSampler.inverse_distance(np.hstack([x, y]))
    else:
        sampler = EndpointSampler.uniform(x.shape[0])
    if objective == "elliptic":
        return objectives.bridge_objective(model, x, y, kind, ecfg, sampler, stream)
    return objectives.importance_weighted_objective(model, x, y, kind, ecfg, sampler, stream)


def evaluate_metrics(model: MlpModel, ds: datasets.Dataset, kind: str) -> dict:
    pred = network.forward(model, ds.features)
    out: dict[str, float] = {}
    if ds.task == "classification":
        want = np.argmax(ds.targets, axis=1)
        got = np.argmax(pred, axis=1)
        out["accuracy"] = float(np.mean(want == got))
        per_class = [
            float(np.mean(got[want == c] == c)) for c in range(ds.num_classes)
            if np.any(want == c)
        ]
        out["worst_class_accuracy"] = float(min(per_class))
    else:
        out["rmse"] = float(np.sqrt(np.mean((pred - ds.targets) ** 2)))
    out["mean_loss"] = float(np.mean(network.per_sample_losses(kind, model, ds.features, ds.targets)))
    return out


def train_model(cfg: dict):
    """Full training loop; returns (model, per-epoch objectives, metrics, datasets)."""
    objective = cfg["objective"]
    if objective not in OBJECTIVES:
        raise UsageError(f"unknown objective {cfg['objective']!r}")
    master = RngStream(cfg["seed"])
    train, test = build_datasets(cfg, master)
    kind, head, project = resolve_task(cfg, train)
    model = build_model(cfg, train, head, master)
    ecfg = elliptic_config(cfg, project)

    if cfg["optim"] == "sgd":
        state = network.sgd_state(model, cfg["optim.momentum"], cfg["optim.weight_decay"])
    elif cfg["optim"] == "adam":
        state = network.adam_state(
            model, cfg["optim.beta1"], cfg["optim.beta2"], cfg["optim.epsilon"]
        )
    else:
        raise UsageError(f"unknown optimizer {cfg['optim']!r}")

    batch = max(2, cfg["batch_size"])
    epoch_objectives: list[float] = []
    for epoch in range(cfg["epochs"]):
        order = master.child(_TAG_SHUFFLE, epoch).generator().permutation(train.n)
        starts = list(range(0, train.n, batch))
        # fold a trailing singleton into the previous batch
        if len(starts) > 1 and train.n - starts[-1] < 2:
            starts.pop()
        total = 0.0
        for b, start in enumerate(starts):
            stop = train.n if b == len(starts) - 1 else start + batch
            idx = order[start:stop]
            value, grads = _batch_objective(
                cfg, objective, model, kind, ecfg,
                train.features[idx], train.targets[idx],
                master.child(_TAG_OBJECTIVE, epoch, b),
            )
            network.optimizer_step(state, model, grads, cfg["optim.lr"])
            total += value * len(idx)
        epoch_objectives.append(total / train.n)
    metrics = evaluate_metrics(model, test, kind)
    return model, epoch_objectives, metrics, (train, test), kind


def write_metrics(path, cfg: dict, epoch_objectives, metrics: dict) -> None:
    lines = [f"config {config_echo(cfg)}"]
    for i, v in enumerate(epoch_objectives, start=1):
        lines.append(f"epoch {i} objective {v:.17g}")
    final = " ".join(f"{k} {format_value(v)}" for k, v in sorted(metrics.items()))
    lines.append(f"final seed {cfg['seed']} {final}")
    FsPath(path).write_text("\n".join(lines) + "\n")


def cmd_train(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = FsPath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model, epoch_objectives, metrics, _, _ = train_model(cfg)
    network.save_checkpoint(model, out / "model.ckpt")
    write_metrics(out / "metrics.txt", cfg, epoch_objectives, metrics)
    wall = time.perf_counter() - t0
    summary = " ".join(f"{k}={format_value(v)}" for k, v in sorted(metrics.items()))
    print(f"train objective={cfg['objective']} seed={cfg['seed']} {summary} wall={wall:.2f}s")
    print(f"wrote {out / 'metrics.txt'} and {out / 'model.ckpt'}")
    return 0


def _load_checkpoint_arg(cfg: dict) -> MlpModel:
    if not cfg["checkpoint"]:
        raise UsageError("this command requires checkpoint=PATH")
    path = FsPath(cfg["checkpoint"])
    if not path.exists():
        raise DomainError(f"checkpoint {path} does not exist")
    return network.load_checkpoint(path)


def cmd_eval(cfg: dict) -> int:
    model = _load_checkpoint_arg(cfg)
    master = RngStream(cfg["seed"])
    train, test = build_datasets(cfg, master)
    kind, _, _ = resolve_task(cfg, train)
    metrics = evaluate_metrics(model, test, kind)
    out = FsPath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"config {config_echo(cfg)}"]
    lines.append("eval " + " ".join(f"{k} {format_value(v)}" for k, v in sorted(metrics.items())))
    (out / "eval.txt").write_text("\n".join(lines) + "\n")
    print(lines[-1])
    return 0


def _fk_queries(cfg: dict, model: MlpModel, train: datasets.Dataset, box):
    """Interior query points in the joint space: a grid or a user file."""
    if cfg["fk.queries"]:
        rows = []
        text = FsPath(cfg["fk.queries"]).read_text()
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(t) for t in line.replace(",", " ").split()])
        queries = np.asarray(rows, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != train.d + train.k:
            raise DomainError("fk.queries rows must live in the joint (feature, target) space")
        return queries
    if train.d != 2:
        raise UsageError("grid queries need 2-D features; supply fk.queries instead")
    g = cfg["fk.grid"]
    xs = np.linspace(box.lo[0], box.hi[0], g)
    ys = np.linspace(box.lo[1], box.hi[1], g)
    grid = np.array([[a, b] for a in xs for b in ys])
    pred = network.forward(model, grid)
    if train.task == "classification":
        ypart = datasets.one_hot(np.argmax(pred, axis=1), train.k)
    else:
        ypart = pred
    joint = np.hstack([grid, ypart])
    return np.clip(joint, box.lo, box.hi)


def cmd_fk_verify(cfg: dict) -> int:
    model = _load_checkpoint_arg(cfg)
    master = RngStream(cfg["seed"])
    train, _ = build_datasets(cfg, master)
    kind, _, _ = resolve_task(cfg, train)
    box = data_box(train.joint(), 0.1)
    queries = _fk_queries(cfg, model, train, box)
    estimates = landscape.estimate_landscape(
        model, train, queries,
        kind=kind, eps=cfg["fk.eps"], sigma=cfg["fk.sigma"], n_paths=cfg["fk.n_paths"],
        dt=cfg["fk.dt"], t_max=cfg["fk.t_max"], rng=master.child(_TAG_FK), box=box,
    )
    boundary = network.per_sample_losses(kind, model, train.features, train.targets)
    lines = [f"config {config_echo(cfg)}"]
    for i, (q, est) in enumerate(zip(queries, estimates)):
        coords = ",".join(f"{v:.17g}" for v in q)
        lines.append(
            f"query {i} point {coords} mean {format_value(est.mean)} "
            f"stderr {format_value(est.stderr)} n_hit {est.n_hit} "
            f"n_timeout {est.n_timeout} n_boundary {est.n_boundary} "
            f"valid {format_value(est.valid)}"
        )
    report = landscape.max_principle_report(boundary, estimates, cfg["fk.slack"])
    lines.append(
        "max_principle "
        f"min_boundary {format_value(report.min_boundary)} "
        f"max_boundary {format_value(report.max_boundary)} "
        f"min_interior {format_value(report.min_interior)} "
        f"max_interior {format_value(report.max_interior)} "
        f"slack {format_value(report.slack)} satisfied {format_value(report.satisfied)}"
    )
    if cfg["fk.dynkin"]:
        m = train.d + train.k
        center = 0.5 * (box.lo + box.hi)
        res, se = landscape.dynkin_residual(
            lambda s: np.sum(s * s, axis=1),
            lambda s: np.full(len(s), 2.0 * m),
            center, cfg["fk.sigma"], 1.0, cfg["fk.n_paths"], cfg["fk.dt"],
            master.child(_TAG_FK, 999),
        )
        lines.append(f"dynkin residual {format_value(res)} stderr {format_value(se)}")
    out = FsPath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "fk_report.txt").write_text("\n".join(lines) + "\n")
    print(lines[-2] if cfg["fk.dynkin"] else lines[-1])
    print(f"wrote {out / 'fk_report.txt'}")
    return 0


def cmd_surface(cfg: dict) -> int:
    model = _load_checkpoint_arg(cfg)
    master = RngStream(cfg["seed"])
    train, _ = build_datasets(cfg, master)
    if train.d != 2:
        raise UsageError("surface export needs 2-D features")
    kind, _, _ = resolve_task(cfg, train)
    box_x = data_box(train.features, 0.1)
    box = data_box(train.joint(), 0.1)
    g = cfg["surface.grid"]
    xs = np.linspace(box_x.lo[0], box_x.hi[0], g)
    ys = np.linspace(box_x.lo[1], box_x.hi[1], g)
    grid = np.array([[a, b] for a in xs for b in ys])
    pred = network.forward(model, grid)
    if train.task == "classification":
        ypart = datasets.one_hot(np.argmax(pred, axis=1), train.k)
    else:
        ypart = pred
    losses = network.per_sample_losses(kind, model, grid, ypart)
    queries = np.clip(np.hstack([grid, ypart]), box.lo, box.hi)
    estimates = landscape.estimate_landscape(
        model, train, queries,
        kind=kind, eps=cfg["fk.eps"], sigma=cfg["fk.sigma"], n_paths=cfg["fk.n_paths"],
        dt=cfg["fk.dt"], t_max=cfg["fk.t_max"], rng=master.child(_TAG_FK), box=box,
    )
    out = FsPath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    lines = ["x0,x1,loss,fk_mean,fk_stderr"]
    for point, loss, est in zip(grid, losses, estimates):
        lines.append(
            f"{point[0]:.17g},{point[1]:.17g},{loss:.17g},"
            f"{format_value(est.mean)},{format_value(est.stderr)}"
        )
    (out / "surface.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'surface.csv'} ({g}x{g} grid)")
    return 0


def aggregate(values) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1; zero for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def cmd_bench(cfg: dict) -> int:
    names = [t.strip() for t in cfg["bench.objectives"].split(",") if t.strip()]
    for name in names:
        if name not in OBJECTIVES:
            raise UsageError(f"unknown objective {name!r} in bench.objectives")
    n_override: dict[str, int] = {}
    if cfg["bench.n"]:
        for tok in cfg["bench.n"].split(","):
            if "=" not in tok:
                raise UsageError("bench.n expects obj=count pairs")
            k, v = tok.split("=", 1)
            if k.strip() not in OBJECTIVES:
                raise UsageError(f"unknown objective {k.strip()!r} in bench.n")
            n_override[k.strip()] = int(v)
    seeds = [cfg["seed"] + i for i in range(cfg["bench.seeds"])]
    lines = [f"config {config_echo(cfg)}"]
    table = []
    for name in names:
        per_seed: dict[str, list[float]] = {}
        for seed in seeds:
            run_cfg = dict(cfg)
            run_cfg["objective"] = name
            run_cfg["seed"] = seed
            if name in n_override:
                run_cfg["data.n"] = n_override[name]
            _, _, metrics, _, _ = train_model(run_cfg)
            rec = " ".join(f"{k} {format_value(v)}" for k, v in sorted(metrics.items()))
            lines.append(f"record objective {name} seed {seed} {rec}")
            for k, v in metrics.items():
                per_seed.setdefault(k, []).append(v)
        for metric, vals in sorted(per_seed.items()):
            mean, std = aggregate(vals)
            lines.append(
                f"aggregate objective {name} metric {metric} "
                f"mean {mean:.17g} std {std:.17g} runs {len(vals)}"
            )
            table.append((name, metric, mean, std))
    out = FsPath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.txt").write_text("\n".join(lines) + "\n")
    for name, metric, mean, std in table:
        print(f"{name:12s} {metric:22s} {mean:10.4f} +- {std:.4f}")
    print(f"wrote {out / 'bench.txt'}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def make_parser() -> _Parser:
    parser = _Parser(prog="elliptic-landscape", add_help=True)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "fk-verify", "surface", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key")
    return parser


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "fk-verify": cmd_fk_verify,
    "surface": cmd_surface,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        cfg = parse_config(args.config, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        # single-threaded kernels keep outputs bit-identical across machines
        # with different BLAS thread counts
        with threadpool_limits(limits=1):
            return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
