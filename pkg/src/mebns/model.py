"""Two-layer GCN encoder, inner-product decoder and point-wise BCE."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import ParamStore
from .errors import NumericError, RangeError

HIDDEN = 128
OUT = 64
EPS = 1e-12


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_gcn(num_features, seed, hidden=HIDDEN, out=OUT):
    rng = np.random.default_rng(seed)
    return ParamStore({"W1": glorot(rng, num_features, hidden), "W2": glorot(rng, hidden, out)})


def _check(layer, value):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite activations after GCN layer {layer}")


def encoder(view, leaves):
    """Tape-recorded forward pass; returns the embedding Var."""
    adj = view.normalized_adjacency
    x = view.feature_operator
    if x.shape[1] != leaves["W1"].shape[0]:
        raise RangeError(f"feature dim {x.shape[1]} != W1 rows {leaves['W1'].shape[0]}")
    z1 = ad.spmm(adj, ad.spmm(x, leaves["W1"]))
    _check(1, z1.value)
    h1 = ad.relu(z1)
    h2 = ad.spmm(adj, ad.matmul(h1, leaves["W2"]))
    _check(2, h2.value)
    return h2


def encode(view, params):
    """Node embeddings ``A relu(A X W1) W2`` with ``A`` the self-looped normalized adjacency."""
    return encoder(view, {k: ad.Var(v) for k, v in params.items()}).value


def _check_ids(emb_rows, u, v):
    if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= emb_rows):
        raise RangeError("pair references a node outside the embedding table")


def pair_logits(emb, u, v):
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    _check_ids(emb.shape[0], u, v)
    return np.einsum("ij,ij->i", emb[u], emb[v])


def score_pairs(emb, u, v):
    """Edge probabilities ``logistic(h_u . h_v)``."""
    return expit(pair_logits(emb, u, v))


def logits_var(h, u, v):
    _check_ids(h.value.shape[0], np.asarray(u), np.asarray(v))
    return ad.rowdot(ad.take_rows(h, u), ad.take_rows(h, v))


def sample_losses(h, samples):
    """Per-sample BCE Var for a SampleSet on embedding Var ``h``."""
    return ad.bce_with_logits(logits_var(h, samples.u, samples.v), samples.y)


def bce_loss(scores, labels):
    """Clamped point-wise cross entropy on probabilities -> (per-sample, mean)."""
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise RangeError("labels must be 0 or 1")
    s = np.clip(np.asarray(scores, dtype=np.float64), EPS, 1.0 - EPS)
    per = -(labels * np.log(s) + (1 - labels) * np.log1p(-s))
    return per, float(per.mean()) if per.size else float("nan")
