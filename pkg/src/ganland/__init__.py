"""Desk-scale laboratory for GANs on disconnected 2-D manifolds:
WGAN-GP training on Gaussian mixtures, Jacobian-based truncation,
k-NN precision/recall, and closed-form precision bounds."""

__version__ = "0.1.0"

from .autodiff import (
    Mlp,
    Tape,
    forward,
    grad_penalty_grads,
    init_mlp,
    input_grad,
    load_checkpoint,
    param_grads,
    save_checkpoint,
    trace_forward,
)
from .bounds import (
    BoundInputs,
    PartitionWeights,
    lambert_w0,
    partition_boundary_lower,
    phi,
    phi_inv,
    phi_inv_lower_crudeman,
    thm2_bound,
    thm2_bound_lambert,
    thm3_asymptotic,
    thm3_bound,
    thm3_bound_general,
)
from .data import (
    GaussianMixtureSpec,
    LatentSpec,
    SampleSet,
    sample_latent,
    sample_mixture,
)
from .jfn import JbtConfig, jbt_filter, jfn_exact, jfn_stochastic, lipschitz_upper
from .metrics import (
    MarginalCurve,
    PrReport,
    frechet_gaussian,
    hausdorff,
    improved_pr,
    marginal_precision_curve,
    pr_convergence_experiment,
)
from . import train
from .train import AdamState, TrainConfig, TrainResult, disc_step, gen_step
