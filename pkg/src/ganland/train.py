"""WGAN-GP training loop for the 2-D mixture setting.

Both players are small dense nets optimized with Adam.  The
discriminator loss is mean(D(fake)) - mean(D(real)) plus the gradient
penalty gp_weight * mean((||grad_x D(x_hat)|| - 1)^2) at per-sample
interpolates x_hat = u * real + (1 - u) * fake; the generator minimizes
-mean(D(G(z))).  Defaults follow the synthetic-model table: 20-20 relu
hidden layers, batch 32, penalty weight 10, Adam(2e-4, 0.5, 0.5).

Every random draw comes from a stream derived from (seed, purpose,
step), so a full run is a pure function of (mixture spec, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Mlp, MlpGraph, Tape, forward, init_mlp
from .data import GaussianMixtureSpec, LatentSpec, SampleSet, sample_latent, sample_mixture
from .jfn import lipschitz_upper
from .metrics import improved_pr
from .rng import derive_seed, normals, uniforms


@dataclass(frozen=True)
class TrainConfig:
    gen_hidden: tuple[int, ...] = (20, 20)
    disc_hidden: tuple[int, ...] = (20, 20)
    activation: str = "relu"
    leaky_slope: float = 0.2
    batch_size: int = 32
    gp_weight: float = 10.0
    lr: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.5
    adam_eps: float = 1e-8
    steps: int = 100_000
    disc_steps_per_gen_step: int = 1
    latent_dim: int = 2
    seed: int = 42
    eval_interval: int = 5000
    eval_n: int = 2500
    eval_k: int = 3

    def __post_init__(self) -> None:
        numeric = (
            self.batch_size, self.lr, self.adam_beta1, self.adam_beta2,
            self.adam_eps, self.disc_steps_per_gen_step, self.latent_dim,
            self.eval_interval, self.eval_n, self.eval_k,
        )
        if any(v <= 0 for v in numeric):
            raise ValueError("config values must be positive")
        if self.gp_weight < 0 or self.steps < 0:
            raise ValueError("gp_weight and steps must be >= 0")
        if self.activation not in ad.HIDDEN_ACTIVATIONS:
            raise ValueError(f"activation must be one of {ad.HIDDEN_ACTIVATIONS}")


@dataclass
class AdamState:
    """First/second moment buffers mirroring a net's (weight, bias) pairs."""

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int = 0

    @classmethod
    def for_net(cls, net: Mlp) -> "AdamState":
        zeros = lambda: [
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(net.weights, net.biases)
        ]
        return cls(m=zeros(), v=zeros())


def adam_update(
    net: Mlp,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One Adam step with bias correction; writes fresh parameter arrays."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for i, (gw, gb) in enumerate(grads):
        for j, g in enumerate((gw, gb)):
            m = state.m[i][j]
            v = state.v[i][j]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            if j == 0:
                net.weights[i] = net.weights[i] - step
            else:
                net.biases[i] = net.biases[i] - step


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite; carries diagnostics."""

    def __init__(self, step: int, what: str, last_good: "TrainResult | None" = None):
        super().__init__(f"training diverged at step {step}: {what}")
        self.step = step
        self.what = what
        self.last_good = last_good


def _check_grads(grads, step: int, what: str) -> None:
    for gw, gb in grads:
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            norms = [float(np.sqrt((g * g).sum())) for g, _ in grads]
            raise TrainingDiverged(step, f"{what} grads non-finite, norms={norms}")


def disc_step(
    gen: Mlp,
    disc: Mlp,
    real_batch: np.ndarray,
    adam: AdamState,
    cfg: TrainConfig,
    step: int,
) -> float:
    """One discriminator update; returns the scalar loss before the step."""
    n = real_batch.shape[0]
    z = normals(derive_seed(cfg.seed, "disc-z", step), n * cfg.latent_dim)
    fake = forward(gen, z.reshape(n, cfg.latent_dim))
    u = uniforms(derive_seed(cfg.seed, "gp-u", step), n)[:, None]
    x_hat = u * real_batch + (1.0 - u) * fake

    tape = Tape()
    params = [(tape.leaf(w), tape.leaf(b)) for w, b in zip(disc.weights, disc.biases)]
    out_real = ad.trace_forward(disc, real_batch, tape, params).output_id
    out_fake = ad.trace_forward(disc, fake, tape, params).output_id
    x_id = tape.leaf(x_hat)
    penalty = ad.emit_gradient_penalty(tape, disc, x_id, params)
    wasserstein = tape.sub(
        tape.affine(tape.reduce_sum(out_fake, None), 1.0 / n, 0.0),
        tape.affine(tape.reduce_sum(out_real, None), 1.0 / n, 0.0),
    )
    loss = tape.add(wasserstein, tape.affine(penalty, cfg.gp_weight, 0.0))
    value = float(tape.value(loss))
    if not np.isfinite(value):
        raise TrainingDiverged(step, f"disc loss {value}")
    grads = ad.param_grads(MlpGraph(tape, x_id, loss, params), loss)
    _check_grads(grads, step, "disc")
    adam_update(disc, grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return value


def gen_step(
    gen: Mlp, disc: Mlp, adam: AdamState, cfg: TrainConfig, step: int
) -> float:
    """One generator update; returns the scalar loss before the step."""
    n = cfg.batch_size
    z = normals(derive_seed(cfg.seed, "gen-z", step), n * cfg.latent_dim)
    tape = Tape()
    gen_graph = ad.trace_forward(gen, z.reshape(n, cfg.latent_dim), tape)
    disc_out = ad.trace_forward(disc, gen_graph.output_id, tape).output_id
    loss = tape.affine(tape.reduce_sum(disc_out, None), -1.0 / n, 0.0)
    value = float(tape.value(loss))
    if not np.isfinite(value):
        raise TrainingDiverged(step, f"gen loss {value}")
    grads = ad.param_grads(
        MlpGraph(tape, gen_graph.input_id, loss, gen_graph.param_ids), loss
    )
    _check_grads(grads, step, "gen")
    adam_update(gen, grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return value


@dataclass
class TraceRow:
    step: int
    disc_loss: float
    gen_loss: float
    precision: float
    recall: float


@dataclass
class TrainResult:
    generator: Mlp
    discriminator: Mlp
    trace: list[TraceRow] = field(default_factory=list)
    lipschitz: float = 0.0
    config: TrainConfig | None = None


def _evaluate(
    gen: Mlp,
    real_eval: SampleSet,
    eval_latents: np.ndarray,
    cfg: TrainConfig,
) -> tuple[float, float]:
    fake = forward(gen, eval_latents)
    report = improved_pr(
        SampleSet(fake, "generated"), real_eval, cfg.eval_k
    )
    return report.precision, report.recall


def train(spec: GaussianMixtureSpec, cfg: TrainConfig) -> TrainResult:
    """Full training run; deterministic per (spec, cfg)."""
    gen = init_mlp(
        [cfg.latent_dim, *cfg.gen_hidden, 2],
        derive_seed(cfg.seed, "gen-init"),
        hidden_activation=cfg.activation,
        leaky_slope=cfg.leaky_slope,
        output_activation="identity",
    )
    disc = init_mlp(
        [2, *cfg.disc_hidden, 1],
        derive_seed(cfg.seed, "disc-init"),
        hidden_activation=cfg.activation,
        leaky_slope=cfg.leaky_slope,
        output_activation="identity",
    )
    adam_g = AdamState.for_net(gen)
    adam_d = AdamState.for_net(disc)

    real_eval = sample_mixture(spec, cfg.eval_n, derive_seed(cfg.seed, "eval-real"))
    eval_latents = sample_latent(
        LatentSpec(cfg.latent_dim), cfg.eval_n, derive_seed(cfg.seed, "eval-fake")
    ).points

    result = TrainResult(gen, disc, config=cfg)
    disc_loss = gen_loss = 0.0
    for step in range(cfg.steps):
        try:
            for sub in range(cfg.disc_steps_per_gen_step):
                real = sample_mixture(
                    spec, cfg.batch_size, derive_seed(cfg.seed, "real", step, sub)
                ).points
                disc_loss = disc_step(gen, disc, real, adam_d, cfg, step * cfg.disc_steps_per_gen_step + sub)
            gen_loss = gen_step(gen, disc, adam_g, cfg, step)
        except TrainingDiverged as err:
            raise TrainingDiverged(err.step, err.what, last_good=result) from None
        if (step + 1) % cfg.eval_interval == 0 or step + 1 == cfg.steps:
            precision, recall = _evaluate(gen, real_eval, eval_latents, cfg)
            result.trace.append(
                TraceRow(step + 1, disc_loss, gen_loss, precision, recall)
            )
    if cfg.steps == 0:
        precision, recall = _evaluate(gen, real_eval, eval_latents, cfg)
        result.trace.append(TraceRow(0, 0.0, 0.0, precision, recall))
    result.lipschitz = lipschitz_upper(gen)
    return result


def write_trace_csv(trace: list[TraceRow], path: str) -> None:
    lines = ["step,disc_loss,gen_loss,precision,recall"]
    for row in trace:
        lines.append(
            f"{row.step},{row.disc_loss:.17g},{row.gen_loss:.17g},"
            f"{row.precision:.17g},{row.recall:.17g}"
        )
    ad._atomic_write(path, "\n".join(lines) + "\n")
