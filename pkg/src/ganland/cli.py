"""Command-line front end and experiment harness.

Subcommands cover the full pipeline: train a generator on a mixture,
sample from either side, truncate by Jacobian norm, score sample sets,
plot marginal-precision curves, sweep (M, D) grids into heatmaps,
evaluate the closed-form bounds, and run the support-overlap convergence
study.  Every number printed here comes from the same library calls the
tests use; commands only move arrays in and out of files.

Config files are TOML (JSON also accepted, keyed identically).  All
defaults match the synthetic-model hyperparameter table.  Exit codes:
0 success, 1 configuration, 2 numeric divergence, 3 I/O.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import bounds as bnd
from . import svg
from .data import (
    GaussianMixtureSpec,
    LatentSpec,
    SampleSet,
    read_samples_csv,
    sample_latent,
    sample_mixture,
    write_samples_csv,
)
from .jfn import JbtConfig, jbt_filter, jbt_values
from .metrics import (
    UniformOverlapPair,
    default_k_rule,
    frechet_gaussian,
    hausdorff,
    improved_pr,
    marginal_precision_curve,
    pr_convergence_experiment,
)
from .rng import derive_seed
from .train import TrainConfig, TrainingDiverged, train, write_trace_csv

__version__ = "0.1.0"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass
class ExperimentConfig:
    mixture: GaussianMixtureSpec
    train: TrainConfig
    jbt: JbtConfig
    metrics_k: int = 3
    n_eval: int = 2500
    output_dir: str = "."
    seed: int = 42

    def __post_init__(self) -> None:
        if self.n_eval < self.metrics_k + 1:
            raise ConfigError("n_eval must be at least metrics k + 1")


def _default_config(seed: int = 42) -> ExperimentConfig:
    return ExperimentConfig(
        mixture=GaussianMixtureSpec(M=9, D=9.0),
        train=TrainConfig(seed=seed),
        jbt=JbtConfig(keep_ratio=0.7),
        seed=seed,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            if path.endswith(".json"):
                raw = json.load(fh)
            else:
                try:
                    import tomllib  # Python >= 3.11
                except ModuleNotFoundError:
                    import tomli as tomllib
                raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except ValueError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    try:
        seed = int(raw.get("seed", 42))
        mix = raw.get("mixture", {})
        mixture = GaussianMixtureSpec(
            M=int(mix.get("M", 9)),
            D=float(mix.get("D", 9.0)),
            component_std=mix.get("component_std"),
        )
        tr = dict(raw.get("train", {}))
        tr.setdefault("seed", seed)
        for key in ("gen_hidden", "disc_hidden"):
            if key in tr:
                tr[key] = tuple(tr[key])
        train_cfg = TrainConfig(**tr)
        jbt_cfg = JbtConfig(**raw.get("jbt", {}))
        met = raw.get("metrics", {})
        return ExperimentConfig(
            mixture=mixture,
            train=train_cfg,
            jbt=jbt_cfg,
            metrics_k=int(met.get("k", 3)),
            n_eval=int(met.get("n_eval", 2500)),
            output_dir=raw.get("output_dir", "."),
            seed=seed,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid config {path}: {err}") from None


def _config_snapshot(cfg: ExperimentConfig) -> dict:
    snap = asdict(cfg)
    snap["mixture"]["sigma"] = cfg.mixture.sigma
    return snap


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path: str, config: dict, artifacts: list[str], clocks: dict) -> None:
    manifest = {
        "config": config,
        "artifacts": {os.path.basename(a): _sha256(a) for a in artifacts},
        "tool_version": __version__,
        "wall_clock_seconds": {k: round(v, 3) for k, v in clocks.items()},
    }
    ad._atomic_write(path, json.dumps(manifest, indent=1) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else _default_config(args.seed)
    if args.config and args.seed != 42:
        cfg = replace(
            cfg, seed=args.seed, train=replace(cfg.train, seed=args.seed)
        )
    if args.steps is not None:
        cfg = replace(cfg, train=replace(cfg.train, steps=args.steps))
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    result = train(cfg.mixture, cfg.train)
    t_train = time.perf_counter() - t0
    model_path = os.path.join(out_dir, "model.json")
    trace_path = os.path.join(out_dir, "trace.csv")
    ad.save_checkpoint(
        result.generator,
        model_path,
        seed=cfg.train.seed,
        meta={
            "lipschitz_upper": result.lipschitz,
            "mixture": {"M": cfg.mixture.M, "D": cfg.mixture.D,
                        "sigma": cfg.mixture.sigma},
            "steps": cfg.train.steps,
        },
    )
    write_trace_csv(result.trace, trace_path)
    write_manifest(
        os.path.join(out_dir, "manifest.json"),
        _config_snapshot(cfg),
        [model_path, trace_path],
        {"train": t_train},
    )
    final = result.trace[-1]
    print(
        f"trained {cfg.train.steps} steps: precision={final.precision:.4f} "
        f"recall={final.recall:.4f} lipschitz={result.lipschitz:.3f}"
    )
    return EXIT_OK


def _load_model(path: str) -> ad.Mlp:
    try:
        net, _ = ad.load_checkpoint(path)
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}") from None
    except (KeyError, ValueError) as err:
        raise ConfigError(f"invalid model file {path}: {err}") from None
    return net


def cmd_sample(args) -> int:
    if (args.model is None) == (args.mixture_m is None):
        raise ConfigError("pass exactly one of --model or --mixture-m/--mixture-d")
    if args.model:
        net = _load_model(args.model)
        latents = sample_latent(LatentSpec(net.layer_dims[0]), args.n, args.seed)
        samples = SampleSet(ad.forward(net, latents.points), "generated", args.seed)
    else:
        if args.mixture_d is None:
            raise ConfigError("--mixture-d is required with --mixture-m")
        spec = GaussianMixtureSpec(
            M=args.mixture_m, D=args.mixture_d, component_std=args.mixture_std
        )
        samples = sample_mixture(spec, args.n, args.seed)
    write_samples_csv(samples, args.out)
    print(f"wrote {samples.n} points to {args.out}")
    return EXIT_OK


def cmd_jbt(args) -> int:
    net = _load_model(args.model)
    cfg = JbtConfig(
        keep_ratio=args.keep_ratio,
        sigma=args.sigma,
        probes=args.probes,
        method=args.method,
    )
    latents = sample_latent(LatentSpec(net.layer_dims[0]), args.n, args.seed)
    kept, _, values = jbt_filter(net, latents, cfg, probe_seed=args.seed)
    outputs = ad.forward(net, latents.points)
    n_keep = kept.n
    order = np.argsort(values, kind="stable")
    kept_mask = np.zeros(latents.n, dtype=int)
    kept_mask[np.sort(order[:n_keep])] = 1
    dim = outputs.shape[1]
    lines = [",".join([f"x{i}" for i in range(dim)] + ["jfn", "kept"])]
    for row, v, flag in zip(outputs, values, kept_mask):
        coords = ",".join(f"{c:.17g}" for c in row)
        lines.append(f"{coords},{v:.17g},{flag}")
    ad._atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"kept {n_keep}/{latents.n} points (keep_ratio={args.keep_ratio})")
    return EXIT_OK


def cmd_metrics(args) -> int:
    real = read_samples_csv(args.real, origin="real")
    fake = read_samples_csv(args.fake, origin="generated")
    report = improved_pr(fake, real, args.k)
    payload = report.to_json_dict()
    payload["hausdorff"] = hausdorff(fake, real)
    payload["frechet_gaussian"] = frechet_gaussian(fake, real)
    text = json.dumps(payload, indent=1)
    if args.out:
        ad._atomic_write(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_marginal(args) -> int:
    net = _load_model(args.model)
    real = read_samples_csv(args.real, origin="real")
    latents = sample_latent(LatentSpec(net.layer_dims[0]), args.n, args.seed)
    ratios = np.arange(1, args.buckets + 1) / args.buckets
    curve = marginal_precision_curve(net, real, latents, ratios, args.k)
    lines = ["ratio,marginal_precision,cumulative_precision,merged"]
    for r, m, c, flag in curve.rows():
        lines.append(f"{r:.17g},{m:.17g},{c:.17g},{flag}")
    ad._atomic_write(args.out_csv, "\n".join(lines) + "\n")
    if args.out_svg:
        svg.line_plot(
            [
                ("marginal", curve.kept_ratios, curve.marginal_precision),
                ("cumulative", curve.kept_ratios, curve.cumulative_precision),
            ],
            args.out_svg,
            title="Precision vs kept ratio",
            xlabel="kept ratio (by ascending Jacobian norm)",
            ylabel="precision",
        )
    print(f"wrote {len(curve.kept_ratios)} buckets to {args.out_csv}")
    return EXIT_OK


def _heatmap_cell(job: tuple) -> dict:
    m, d, seed_index, base_seed, steps, n_eval, k = job
    cell_seed = derive_seed(
        base_seed, "heatmap-cell", m, int(np.float64(d).view(np.uint64)), seed_index
    )
    spec = GaussianMixtureSpec(M=m, D=d)
    cfg = TrainConfig(steps=steps, seed=cell_seed, eval_n=n_eval, eval_k=k)
    try:
        result = train(spec, cfg)
    except TrainingDiverged:
        return {"M": m, "D": d, "seed_index": seed_index, "precision": float("nan"),
                "recall": float("nan"), "lipschitz": float("nan"),
                "bound": float("nan")}
    final = result.trace[-1]
    if final.recall * m > 2.0:
        bound = bnd.thm3_bound(
            bnd.BoundInputs(D=d, L=result.lipschitz, M=m, beta_bar=final.recall)
        ).clamped
    else:
        bound = float("nan")
    return {
        "M": m, "D": d, "seed_index": seed_index,
        "precision": final.precision, "recall": final.recall,
        "lipschitz": result.lipschitz, "bound": bound,
    }


def _max_workers(n_jobs: int) -> int:
    cap = os.environ.get("GANLAND_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def cmd_heatmap(args) -> int:
    m_list = [int(v) for v in args.m_list.split(",")]
    d_list = [float(v) for v in args.d_list.split(",")]
    if not m_list or not d_list:
        raise ConfigError("M and D grids must be nonempty")
    base = load_config(args.config) if args.config else _default_config(args.seed)
    steps = args.steps if args.steps is not None else base.train.steps
    os.makedirs(args.out_dir, exist_ok=True)
    jobs = [
        (m, d, s, args.seed, steps, base.n_eval, base.metrics_k)
        for m in m_list
        for d in d_list
        for s in range(args.seeds)
    ]
    t0 = time.perf_counter()
    workers = _max_workers(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_heatmap_cell, jobs))
    else:
        rows = [_heatmap_cell(job) for job in jobs]
    rows.sort(key=lambda r: (r["M"], r["D"], r["seed_index"]))
    csv_path = os.path.join(args.out_dir, "heatmap.csv")
    lines = ["M,D,seed_index,precision,recall,lipschitz,bound"]
    for r in rows:
        lines.append(
            f'{r["M"]},{r["D"]:.17g},{r["seed_index"]},{r["precision"]:.17g},'
            f'{r["recall"]:.17g},{r["lipschitz"]:.17g},{r["bound"]:.17g}'
        )
    ad._atomic_write(csv_path, "\n".join(lines) + "\n")

    grid = []
    for m in m_list:
        row = []
        for d in d_list:
            vals = [
                r["precision"] for r in rows if r["M"] == m and r["D"] == d
            ]
            finite = [v for v in vals if np.isfinite(v)]
            row.append(float(np.mean(finite)) if finite else float("nan"))
        grid.append(row)
    svg.heatmap(
        grid,
        m_list,
        d_list,
        os.path.join(args.out_dir, "heatmap.svg"),
        title="Measured precision (seed mean)",
        row_axis="M",
        col_axis="D (mode distance)",
    )
    write_manifest(
        os.path.join(args.out_dir, "manifest.json"),
        {"m_list": m_list, "d_list": d_list, "seeds": args.seeds, "steps": steps,
         "seed": args.seed},
        [csv_path],
        {"heatmap": time.perf_counter() - t0},
    )
    print(f"wrote {len(rows)} cells to {csv_path}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.heatmap:
        if not (args.m_list and args.d_list and args.out):
            raise ConfigError("--heatmap needs --m-list, --d-list and --out")
        m_list = [int(v) for v in args.m_list.split(",")]
        d_list = [float(v) for v in args.d_list.split(",")]
        rows = bnd.heatmap_grid(m_list, d_list, args.l, args.beta)
        lines = ["M,D,bound"] + [f"{m},{d:.17g},{v:.17g}" for m, d, v in rows]
        ad._atomic_write(args.out, "\n".join(lines) + "\n")
        print(f"wrote {len(rows)} rows to {args.out}")
        return EXIT_OK
    inputs: dict = {"D": args.d, "L": args.l, "epsilon": args.d / (2 * args.l)}
    if args.form == "two-mode":
        raw = bnd.thm2_bound(args.d, args.l)
    elif args.form == "two-mode-lambert":
        raw = bnd.thm2_bound_lambert(args.d, args.l)
    else:
        inputs.update({"M": args.m, "beta_bar": args.beta})
        bi = bnd.BoundInputs(D=args.d, L=args.l, M=args.m, beta_bar=args.beta)
        raw = (
            bnd.thm3_bound(bi).raw
            if args.form == "m-mode"
            else bnd.thm3_asymptotic(bi).raw
        )
    value = bnd.BoundValue(raw)
    print(json.dumps({"form": args.form, "inputs": inputs,
                      "raw": value.raw, "clamped": value.clamped}, indent=1))
    return EXIT_OK


def cmd_pr_convergence(args) -> int:
    n_grid = [int(v) for v in args.n_grid.split(",")]
    offsets = [float(v) for v in args.offsets.split(",")]
    families = [UniformOverlapPair(off, name=f"offset={off:g}") for off in offsets]
    rows = pr_convergence_experiment(
        families, n_grid, default_k_rule, seeds=args.seeds, base_seed=args.seed
    )
    lines = ["family,n,k,alpha,alpha_true,abs_err"]
    for r in rows:
        lines.append(
            f"{r.name},{r.n},{r.k},{r.alpha:.17g},{r.alpha_true:.17g},{r.abs_err:.17g}"
        )
    text = "\n".join(lines)
    if args.out:
        ad._atomic_write(args.out, text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors are config errors (exit 1)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ganland", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=42, help="root seed (default 42)")

    p = sub.add_parser("train", help="train a generator on a Gaussian mixture")
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--steps", type=int, help="override training steps")
    add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample a trained model or the mixture")
    p.add_argument("--model", help="model.json checkpoint")
    p.add_argument("--mixture-m", type=int, help="mixture component count")
    p.add_argument("--mixture-d", type=float, help="mixture mode distance")
    p.add_argument("--mixture-std", type=float, help="component std (default 0.05 D)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("jbt", help="sample and truncate by Jacobian norm")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--keep-ratio", type=float, default=0.7)
    p.add_argument("--sigma", type=float, default=1e-3)
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--method", choices=("exact", "stochastic"), default="exact")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_jbt)

    p = sub.add_parser("metrics", help="precision/recall and distances for two CSVs")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", help="also write the JSON report here")
    add_seed(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("marginal", help="marginal precision curve for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--real", required=True, help="real samples CSV")
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--buckets", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-svg")
    add_seed(p)
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("heatmap", help="train over an (M, D) grid")
    p.add_argument("--m-list", required=True, help="comma-separated M values")
    p.add_argument("--d-list", required=True, help="comma-separated D values")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--steps", type=int, help="steps per cell (default: config)")
    p.add_argument("--config", help="base experiment config")
    p.add_argument("--out-dir", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("bounds", help="closed-form precision bounds")
    p.add_argument("--form", choices=("two-mode", "two-mode-lambert", "m-mode",
                                      "m-mode-asymptotic"), default="m-mode")
    p.add_argument("--d", type=float, required=True, help="mode distance D")
    p.add_argument("--l", type=float, required=True, help="Lipschitz bound L")
    p.add_argument("--m", type=int, default=9)
    p.add_argument("--beta", type=float, default=1.0, help="recall beta")
    p.add_argument("--heatmap", action="store_true", help="emit M,D,bound CSV")
    p.add_argument("--m-list")
    p.add_argument("--d-list")
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("pr-convergence", help="support-overlap convergence study")
    p.add_argument("--n-grid", default="1000,10000")
    p.add_argument("--offsets", default="0,0.5,1.5")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=cmd_pr_convergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, bnd.DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, FloatingPointError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
