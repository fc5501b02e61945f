"""Meta-reweighted student updates.

One iteration at step k:

* inner: a virtual SGD step on the hard set with weights from the current
  meta learner, ``theta' = theta - lr_inner * mean(w_i * grad l_i)``;
* meta: one SGD step on the meta learner against the unweighted meta-set loss
  evaluated at ``theta'``;
* outer: re-weight the same per-sample losses with the updated meta learner
  and take one optimizer step from ``theta`` (not ``theta'``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import OptimizerState, ParamStore, apply_update
from .errors import NumericError, RangeError
from .model import encoder, sample_losses

META_HIDDEN = 64
META_INIT_SCALE = 0.01


def init_meta(seed, hidden=META_HIDDEN, scale=META_INIT_SCALE):
    rng = np.random.default_rng(seed)
    return ParamStore({
        "W1": rng.normal(0.0, scale, size=(1, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, scale, size=(hidden, 1)),
        "b2": np.zeros(1),
    })


def constant_meta(logit, hidden=META_HIDDEN):
    """Meta learner whose output is ``sigmoid(logit)`` for every input."""
    return ParamStore({
        "W1": np.zeros((1, hidden)), "b1": np.zeros(hidden), "W2": np.zeros((hidden, 1)), "b2": np.full(1, logit),
    })


def weight_var(loss_values, dvars):
    """Tape-recorded sigmoid(MLP(loss)); loss values are constants."""
    x = np.asarray(loss_values, dtype=np.float64).reshape(-1, 1)
    h = ad.relu(ad.add(ad.matmul(ad.lift(x), dvars["W1"]), dvars["b1"]))
    out = ad.add(ad.matmul(h, dvars["W2"]), dvars["b2"])
    return ad.reshape(ad.sigmoid(out), (-1,))


def meta_weight(loss_values, delta):
    loss_values = np.asarray(loss_values, dtype=np.float64)
    if not np.all(np.isfinite(loss_values)):
        raise NumericError("meta learner received a non-finite loss")
    if np.any(loss_values < 0):
        raise RangeError("per-sample losses must be >= 0")
    return weight_var(loss_values, {k: ad.Var(v) for k, v in delta.items()}).value


@dataclass
class BilevelState:
    theta: ParamStore
    delta: ParamStore
    inner_lr: float = 0.01
    meta_lr: float = 0.01
    outer: OptimizerState = field(default_factory=lambda: OptimizerState("adam", 0.01))
    k: int = 0

    def __post_init__(self):
        self.meta_opt = OptimizerState("sgd", self.meta_lr)


@dataclass
class InnerStep:
    """Tape at theta^k on the hard set plus the virtual parameters."""

    leaves: dict
    losses: ad.Var
    weights: np.ndarray
    theta_prime: ParamStore
    inner_loss: float


def forward(state, view):
    leaves = state.theta.as_vars()
    return leaves, encoder(view, leaves)


def inner_step(state, hard, view, fwd=None):
    if len(hard) == 0:
        raise RangeError("hard set is empty")
    leaves, h = forward(state, view) if fwd is None else fwd
    losses = sample_losses(h, hard)
    w = meta_weight(losses.value, state.delta)
    theta_prime, inner_loss = ad.virtual_step(state.theta, losses, leaves, w, state.inner_lr)
    return InnerStep(leaves, losses, w, theta_prime, inner_loss)


def meta_loss_fn(view, meta):
    def fn(pvars):
        return ad.mean(sample_losses(encoder(view, pvars), meta))
    return fn


def meta_update(state, inner, meta, view):
    """Commit one SGD step on the meta learner; returns (delta, meta_loss, grad)."""
    if len(meta) == 0:
        raise RangeError("meta set is empty")
    g_meta = ad.backward_gradients(meta_loss_fn(view, meta), inner.theta_prime)
    cot = ad.weight_cotangent(inner.losses, inner.leaves, g_meta.grads, state.inner_lr)
    dvars = state.delta.as_vars()
    names = list(dvars)
    grads = ad.backward(weight_var(inner.losses.value, dvars), [dvars[k] for k in names], seed=cot)
    bundle = ad.GradientBundle(dict(zip(names, grads)), g_meta.loss)
    ad.check_finite(bundle)
    apply_update(state.delta, bundle, state.meta_opt)
    return state.delta, g_meta.loss, bundle


def weighted_step(params, opt, leaves, losses, weights=None):
    """One optimizer step on mean(weights * losses) (plain mean when weights is None)."""
    obj = ad.mean(losses) if weights is None else ad.mean(ad.mul(losses, weights))
    loss = float(obj.value)
    if not np.isfinite(loss):
        raise NumericError(f"training loss is not finite: {loss}", value=loss)
    names = list(leaves)
    grads = ad.backward(obj, [leaves[k] for k in names])
    bundle = ad.check_finite(ad.GradientBundle(dict(zip(names, grads)), loss))
    apply_update(params, bundle, opt)
    return bundle


def outer_step(state, inner):
    """Re-weight with the committed meta learner and step theta^k -> theta^{k+1}."""
    w = meta_weight(inner.losses.value, state.delta)
    bundle = weighted_step(state.theta, state.outer, inner.leaves, inner.losses, w)
    state.k += 1
    return state.theta, w, bundle


def bilevel_step(state, hard, meta, view, fwd=None):
    """Inner, meta and outer updates in sequence; returns a telemetry record."""
    inner = inner_step(state, hard, view, fwd)
    _, mloss, mgrad = meta_update(state, inner, meta, view)
    _, w, ograd = outer_step(state, inner)
    return {
        "k": state.k,
        "hard_loss": float(inner.losses.value.mean()),
        "mean_weight": float(w.mean()),
        "meta_loss": mloss,
        "meta_grad_norm": mgrad.norm(),
        "grad_norm": ograd.norm(),
    }
