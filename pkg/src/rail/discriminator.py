"""Adversarial critic: separates expert segments from learner segments and
doubles as the learner's reward function.

The training loss is

    BCE(expert -> 1) + BCE(learner -> 0)
    + grad_penalty_coeff * mean ||d logit / d input||^2   (at interpolated inputs)
    - entropy_coeff * mean Bernoulli entropy of D

computed from raw logits throughout for numerical stability. The gradient
penalty needs gradients of an input-gradient norm w.r.t. the parameters;
because the network family is a fixed tanh MLP, that double-backward pass is
written out explicitly in `gradient_penalty` rather than through a general
autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    AdamState,
    ContractError,
    MlpGrads,
    MlpParams,
    adam_step,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_input_grads,
)
from .segments import AffineParams, affine_apply

DISC_HIDDEN = (128, 128)
REWARD_MAPPINGS = ("softplus", "logit")


@dataclass
class DiscConfig:
    learning_rate: float = 3e-4
    entropy_coeff: float = 0.0
    grad_penalty_coeff: float = 0.01
    batch_size: int = 128
    update_every: int = 100
    warmup_steps: int = 500
    updates_per_round: int = 1
    reward_mapping: str = "softplus"  # softplus(logit) = -log(1 - D); or raw logit
    reward_clip: float = 10.0

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.update_every < 1:
            raise ValueError("bad discriminator config")
        if self.entropy_coeff < 0 or self.grad_penalty_coeff < 0 or self.warmup_steps < 0:
            raise ValueError("coefficients must be non-negative")
        if self.reward_mapping not in REWARD_MAPPINGS:
            raise ValueError(f"reward_mapping must be one of {REWARD_MAPPINGS}")


@dataclass
class LossReport:
    total: float = 0.0
    bce_expert: float = 0.0
    bce_learner: float = 0.0
    grad_penalty: float = 0.0
    gp_term: float = 0.0
    entropy: float = 0.0
    entropy_term: float = 0.0
    mean_d_expert: float = 0.5
    mean_d_learner: float = 0.5
    accuracy: float = 0.5
    skipped: bool = False

    def as_dict(self) -> dict:
        return {
            "loss": self.total,
            "bce_expert": self.bce_expert,
            "bce_learner": self.bce_learner,
            "grad_penalty": self.grad_penalty,
            "entropy": self.entropy,
            "d_expert": self.mean_d_expert,
            "d_learner": self.mean_d_learner,
            "accuracy": self.accuracy,
        }


@dataclass
class DiscState:
    params: MlpParams          # segment_dim -> 1 logit, hidden 128x128 tanh
    adam: AdamState
    updates_done: int = 0
    skipped_updates: int = 0
    affine: AffineParams | None = None  # optional input transform (identity by default)


def init_discriminator(
    seg_dim: int,
    cfg: DiscConfig,
    rng: np.random.Generator,
    affine: AffineParams | None = None,
    hidden: tuple[int, int] = DISC_HIDDEN,
) -> DiscState:
    cfg.validate()
    params = init_mlp((seg_dim, *hidden, 1), rng, output_activation="identity")
    return DiscState(params, AdamState.for_params(params, cfg.learning_rate), affine=affine)


def _as_batch(segments: np.ndarray) -> np.ndarray:
    x = np.asarray(segments, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def disc_logit(state: DiscState, segments: np.ndarray) -> np.ndarray | float:
    """Raw logit(s); D(o) = sigmoid(logit). Accepts one segment or a batch."""
    x = _as_batch(segments)
    if state.affine is not None:
        x = affine_apply(state.affine, x)
    out, _ = mlp_forward(state.params, x)
    logits = out[:, 0]
    return float(logits[0]) if np.asarray(segments).ndim == 1 else logits


def sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500))),
                    np.exp(np.clip(x, -500, 500)) / (1.0 + np.exp(np.clip(x, -500, 500))))


def softplus(x):
    return np.logaddexp(0.0, x)


def imitation_reward(state: DiscState, segments: np.ndarray, cfg: DiscConfig) -> np.ndarray | float:
    """Reward for the RL backbone, computed stably from the logit.

    softplus mapping: r = -log(1 - D) = softplus(logit)
    logit mapping:    r = log D - log(1 - D) = logit
    Both clipped to +-cfg.reward_clip.
    """
    logits = disc_logit(state, segments)
    if cfg.reward_mapping == "softplus":
        r = softplus(logits)
    else:
        r = logits
    return np.clip(r, -cfg.reward_clip, cfg.reward_clip)


def gradient_penalty(state: DiscState, mixed_batch: np.ndarray) -> tuple[float, MlpGrads]:
    """mean ||d logit / d input||^2 over the batch, and its exact parameter
    gradients.

    The penalty is computed at the MLP's own input (post-affine when an
    affine transform is configured). The value is obtained from the explicit
    backward pass; the parameter gradients differentiate that backward pass a
    second time, layer by layer.
    """
    params = state.params
    if params.n_out != 1 or params.output_activation != "identity":
        raise ContractError("gradient penalty requires a scalar identity logit head")
    x = _as_batch(mixed_batch)
    if state.affine is not None:
        x = affine_apply(state.affine, x)
    bsz = x.shape[0]
    _, cache = mlp_forward(params, x)
    n_hidden = params.n_layers - 1  # tanh layers before the linear logit head
    acts = cache.activations[:-1]   # hidden activations a_1..a_H
    derivs = [1.0 - a**2 for a in acts]
    w_out = params.weights[-1][0]   # (n_H,)

    # input-gradient pass: u_H = d_H * w_out; u_{l-1} = d_{l-1} * (u_l @ W_l)
    us: list[np.ndarray] = [None] * (n_hidden + 1)  # type: ignore[list-item]
    if n_hidden == 0:
        grad_inputs = np.broadcast_to(w_out, (bsz, params.n_in))
    else:
        us[n_hidden] = derivs[n_hidden - 1] * w_out
        for l in range(n_hidden - 1, 0, -1):
            us[l] = derivs[l - 1] * (us[l + 1] @ params.weights[l])
        grad_inputs = us[1] @ params.weights[0]

    gp = float(np.mean(np.sum(grad_inputs**2, axis=1)))
    grads = MlpGrads.zeros_like(params)

    if n_hidden == 0:
        grads.weights[0][0] = 2.0 * w_out
        return gp, grads

    # reverse pass through the input-gradient computation
    g_bar = (2.0 / bsz) * grad_inputs            # dGP/d grad_inputs
    grads.weights[0] += us[1].T @ g_bar          # grad_inputs = us[1] @ W_0
    u_bar = g_bar @ params.weights[0].T          # dGP/d us[1]
    d_bars: list[np.ndarray] = [None] * n_hidden  # type: ignore[list-item]
    for l in range(1, n_hidden):
        # us[l] = derivs[l-1] * v,  v = us[l+1] @ W_l
        v = us[l + 1] @ params.weights[l]
        d_bars[l - 1] = v * u_bar
        v_bar = derivs[l - 1] * u_bar
        grads.weights[l] += us[l + 1].T @ v_bar
        u_bar = v_bar @ params.weights[l].T
    # top: us[H] = derivs[H-1] * w_out
    d_bars[n_hidden - 1] = w_out * u_bar
    grads.weights[-1][0] += (derivs[n_hidden - 1] * u_bar).sum(axis=0)

    # reverse pass through the primal forward that produced the derivs
    a_bar = None
    for l in range(n_hidden - 1, -1, -1):
        total_a_bar = -2.0 * acts[l] * d_bars[l]
        if a_bar is not None:
            total_a_bar = total_a_bar + a_bar
        z_bar = total_a_bar * derivs[l]
        a_prev = x if l == 0 else acts[l - 1]
        grads.weights[l] += z_bar.T @ a_prev
        grads.biases[l] += z_bar.sum(axis=0)
        if l > 0:
            a_bar = z_bar @ params.weights[l]
    return gp, grads


def _resample_to(batch: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if len(batch) == n:
        return batch
    return batch[rng.integers(0, len(batch), size=n)]


def disc_loss_and_grads(
    state: DiscState,
    expert: np.ndarray,
    learner: np.ndarray,
    cfg: DiscConfig,
    mixed: np.ndarray | None,
) -> tuple[LossReport, MlpGrads]:
    """Full loss and exact parameter gradients for fixed, equal-size batches.

    ``mixed`` holds the interpolated gradient-penalty anchors; pass None to
    drop the penalty term (equivalent to coefficient zero).
    """
    n = len(expert)
    x_e = affine_apply(state.affine, expert) if state.affine is not None else expert
    x_l = affine_apply(state.affine, learner) if state.affine is not None else learner

    out_e, cache_e = mlp_forward(state.params, x_e)
    out_l, cache_l = mlp_forward(state.params, x_l)
    logit_e, logit_l = out_e[:, 0], out_l[:, 0]

    bce_e = float(np.mean(softplus(-logit_e)))
    bce_l = float(np.mean(softplus(logit_l)))
    p_e, p_l = sigmoid(logit_e), sigmoid(logit_l)

    all_logits = np.concatenate([logit_e, logit_l])
    all_p = np.concatenate([p_e, p_l])
    # Bernoulli entropy from logits: H(p) = softplus(x) - x * sigmoid(x)
    entropy = float(np.mean(softplus(all_logits) - all_logits * all_p))

    # upstream gradients on the logits (loss already averaged per batch)
    g_e = (p_e - 1.0) / n
    g_l = p_l / n
    if cfg.entropy_coeff > 0.0:
        # dH/dlogit = -logit * p * (1-p); loss has -entropy_coeff * H
        g_e = g_e + cfg.entropy_coeff * logit_e * p_e * (1 - p_e) / (2 * n)
        g_l = g_l + cfg.entropy_coeff * logit_l * p_l * (1 - p_l) / (2 * n)

    grads_e, _ = mlp_backward(state.params, cache_e, g_e[:, None])
    grads_l, _ = mlp_backward(state.params, cache_l, g_l[:, None])
    grads = grads_e.add(grads_l)

    gp_value = 0.0
    if mixed is not None and cfg.grad_penalty_coeff > 0.0:
        gp_value, gp_grads = gradient_penalty(state, mixed)
        grads = grads.add(gp_grads.scale(cfg.grad_penalty_coeff))

    total = (
        bce_e
        + bce_l
        + cfg.grad_penalty_coeff * gp_value
        - cfg.entropy_coeff * entropy
    )
    report = LossReport(
        total=total,
        bce_expert=bce_e,
        bce_learner=bce_l,
        grad_penalty=gp_value,
        gp_term=cfg.grad_penalty_coeff * gp_value,
        entropy=entropy,
        entropy_term=-cfg.entropy_coeff * entropy,
        mean_d_expert=float(np.mean(p_e)),
        mean_d_learner=float(np.mean(p_l)),
        accuracy=float(0.5 * (np.mean(p_e > 0.5) + np.mean(p_l < 0.5))),
    )
    return report, grads


def disc_update(
    state: DiscState,
    expert_batch: np.ndarray,
    learner_batch: np.ndarray,
    cfg: DiscConfig,
    rng: np.random.Generator,
) -> tuple[DiscState, LossReport]:
    """One Adam step on the full discriminator loss.

    Unequal batch sizes are evened out by resampling the smaller side with
    replacement. A non-finite loss or gradient skips the update and bumps
    the skip counter instead of raising.
    """
    expert = _as_batch(expert_batch)
    learner = _as_batch(learner_batch)
    if len(expert) == 0 or len(learner) == 0:
        raise ValueError("both batches must be non-empty")
    n = max(len(expert), len(learner))
    expert = _resample_to(expert, n, rng)
    learner = _resample_to(learner, n, rng)

    mixed = None
    if cfg.grad_penalty_coeff > 0.0:
        eps = rng.uniform(size=(n, 1))
        mixed = eps * expert + (1.0 - eps) * learner

    with np.errstate(invalid="ignore", over="ignore"):
        report, grads = disc_loss_and_grads(state, expert, learner, cfg, mixed)

    if not np.isfinite(report.total) or not grads.is_finite():
        report.skipped = True
        new_state = DiscState(
            state.params, state.adam, state.updates_done, state.skipped_updates + 1, state.affine
        )
        return new_state, report

    new_params, new_adam = adam_step(state.params, grads, state.adam)
    new_state = DiscState(
        new_params, new_adam, state.updates_done + 1, state.skipped_updates, state.affine
    )
    return new_state, report


def disc_input_grad_norms(state: DiscState, segments: np.ndarray) -> np.ndarray:
    """Per-sample ||d logit / d input||, mostly for diagnostics/tests."""
    x = _as_batch(segments)
    if state.affine is not None:
        x = affine_apply(state.affine, x)
    _, cache = mlp_forward(state.params, x)
    g = mlp_input_grads(state.params, cache)
    return np.sqrt(np.sum(g**2, axis=1))
