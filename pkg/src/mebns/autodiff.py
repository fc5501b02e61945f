"""Minimal differentiation engine: reverse-mode gradients, forward-mode
tangents, optimizers and the one-step meta hypergradient.

Every primitive records a VJP and a JVP rule. ``backward`` walks the tape in
reverse topological order; ``forward_tangent`` pushes tangents through the
same tape in creation order, so a directional derivative of a vector output
(e.g. per-sample losses) costs one extra sweep instead of one backward pass
per output coordinate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import NumericError, RangeError


class Var:
    __slots__ = ("value", "parents", "vjp", "jvp")

    def __init__(self, value, parents=(), vjp=None, jvp=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.jvp = jvp

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.shape})"


def lift(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _unbroadcast(g, shape):
    if np.shape(g) == tuple(shape):
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _tsum(*terms):
    terms = [t for t in terms if t is not None]
    if not terms:
        return None
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


# -- primitives --------------------------------------------------------------


def add(a, b):
    a, b = lift(a), lift(b)
    sa, sb = a.shape, b.shape
    return Var(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        lambda ta, tb: _tsum(ta, tb),
    )


def sub(a, b):
    a, b = lift(a), lift(b)
    sa, sb = a.shape, b.shape
    return Var(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        lambda ta, tb: _tsum(ta, None if tb is None else -tb),
    )


def mul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    return Var(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))),
        lambda ta, tb: _tsum(None if ta is None else ta * bv, None if tb is None else av * tb),
    )


def matmul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    return Var(
        av @ bv,
        (a, b),
        lambda g: (g @ bv.T, av.T @ g),
        lambda ta, tb: _tsum(None if ta is None else ta @ bv, None if tb is None else av @ tb),
    )


def spmm(S, x):
    """Constant (sparse or dense) matrix times a Var."""
    x = lift(x)
    return Var(
        np.asarray(S @ x.value),
        (x,),
        lambda g: (np.asarray(S.T @ g),),
        lambda t: np.asarray(S @ t),
    )


def relu(x):
    x = lift(x)
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), lambda t: t * mask)


def sigmoid(x):
    x = lift(x)
    s = expit(x.value)
    d = s * (1.0 - s)
    return Var(s, (x,), lambda g: (g * d,), lambda t: t * d)


def take_rows(x, idx):
    x = lift(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Var(x.value[idx], (x,), vjp, lambda t: t[idx])


def sum_(x, axis=None):
    x = lift(x)
    shape = x.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Var(np.sum(x.value, axis=axis), (x,), vjp, lambda t: np.sum(t, axis=axis))


def mean(x):
    x = lift(x)
    n = x.value.size
    return mul(sum_(x), 1.0 / n) if n else Var(np.float64(np.nan))


def reshape(x, shape):
    x = lift(x)
    old = x.shape
    return Var(x.value.reshape(shape), (x,), lambda g: (np.reshape(g, old),), lambda t: np.reshape(t, shape))


def rowdot(a, b):
    """Per-row inner product of two equally shaped matrices."""
    return sum_(mul(a, b), axis=1)


def bce_with_logits(z, y):
    """Element-wise binary cross-entropy on logits; ``y`` is a constant."""
    z = lift(z)
    zv = z.value
    y = np.asarray(y, dtype=np.float64)
    val = np.maximum(zv, 0.0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    d = expit(zv) - y
    return Var(val, (z,), lambda g: (g * d,), lambda t: t * d)


# -- sweeps --------------------------------------------------------------------


def _topo(out):
    order, seen, stack = [], set(), [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out, wrt, seed=None):
    """Cotangents of ``out`` w.r.t. each Var in ``wrt`` (zeros if unreachable)."""
    order = _topo(out)
    grads = {id(out): np.ones_like(out.value, dtype=np.float64) if seed is None else np.asarray(seed, np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
        if g is None or not node.parents:
            continue
        for p, gp in zip(node.parents, node.vjp(g)):
            if gp is None:
                continue
            k = id(p)
            grads[k] = gp if k not in grads else grads[k] + gp
    return [grads.get(id(w), np.zeros_like(w.value, dtype=np.float64)) for w in wrt]


def forward_tangent(out, tangents):
    """Directional derivative of ``out`` given ``{leaf_var: tangent}``."""
    tan = {id(v): np.asarray(t, dtype=np.float64) for v, t in tangents.items()}
    for node in _topo(out):
        if not node.parents:
            continue
        ts = [tan.get(id(p)) for p in node.parents]
        if all(t is None for t in ts):
            continue
        tan[id(node)] = node.jvp(*ts)
    t = tan.get(id(out))
    return np.zeros_like(out.value, dtype=np.float64) if t is None else t


# -- parameters and optimizers -------------------------------------------------


class ParamStore:
    """Ordered name -> float64 array mapping with frozen shapes."""

    def __init__(self, arrays=None):
        self._data = {}
        for name, arr in (arrays or {}).items():
            if name in self._data:
                raise RangeError(f"duplicate parameter {name!r}")
            self._data[name] = np.array(arr, dtype=np.float64)

    def __getitem__(self, name):
        return self._data[name]

    def __setitem__(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if name not in self._data:
            raise KeyError(name)
        if value.shape != self._data[name].shape:
            raise RangeError(f"{name}: shape {value.shape} != {self._data[name].shape}")
        self._data[name] = value.copy()

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __contains__(self, name):
        return name in self._data

    def items(self):
        return self._data.items()

    def names(self):
        return list(self._data)

    @property
    def shapes(self):
        return {k: v.shape for k, v in self._data.items()}

    def clone(self):
        return ParamStore({k: v.copy() for k, v in self._data.items()})

    def assign(self, other):
        for k in self._data:
            self[k] = other[k]

    def as_vars(self):
        return {k: Var(v) for k, v in self._data.items()}

    def flat(self):
        return np.concatenate([v.ravel() for v in self._data.values()]) if self._data else np.zeros(0)

    def allclose(self, other, **kw):
        return self.names() == other.names() and all(np.allclose(self[k], other[k], **kw) for k in self)

    def equal(self, other):
        return self.names() == other.names() and all(np.array_equal(self[k], other[k]) for k in self)

    def to_json(self):
        return {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in self._data.items()}

    @classmethod
    def from_json(cls, data):
        return cls({k: np.array(d["values"], dtype=np.float64).reshape(d["shape"]) for k, d in data.items()})

    def save(self, path, header=None):
        """Write the parameters as JSON; ``header`` fields (config, seed...) sit beside them."""
        body = self.to_json() if header is None else {**header, "params": self.to_json()}
        Path(path).write_text(json.dumps(body, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data.get("params"), dict):
            data = data["params"]
        return cls.from_json(data)


@dataclass
class GradientBundle:
    grads: dict
    loss: float

    def norm(self):
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values())))

    def __getitem__(self, name):
        return self.grads[name]


def check_finite(bundle):
    for name, g in bundle.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return bundle


def backward_gradients(loss_fn, params):
    """Exact gradients of ``loss_fn(vars) -> scalar Var`` at ``params`` (not mutated)."""
    leaves = params.as_vars()
    out = loss_fn(leaves)
    if np.size(out.value) != 1:
        raise RangeError(f"loss must be a scalar, got shape {np.shape(out.value)}")
    loss = float(np.reshape(out.value, ()))
    if not np.isfinite(loss):
        raise NumericError(f"loss is not finite: {loss}", value=loss)
    names = list(leaves)
    grads = backward(out, [leaves[k] for k in names])
    return check_finite(GradientBundle(dict(zip(names, grads)), loss))


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise RangeError(f"unknown optimizer {self.kind!r}")

    def clone(self):
        return OptimizerState(
            self.kind, self.lr, self.beta1, self.beta2, self.eps, self.step,
            {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()},
        )


def apply_update(params, grads, state):
    """In-place SGD or bias-corrected Adam step; returns ``params``."""
    g = grads.grads if isinstance(grads, GradientBundle) else grads
    for name in params:
        if np.shape(g[name]) != params[name].shape:
            raise RangeError(f"{name}: gradient shape {np.shape(g[name])} != {params[name].shape}")
    state.step += 1
    if state.kind == "sgd":
        for name in params:
            params[name] = params[name] - state.lr * g[name]
        return params
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in params:
        gn = g[name]
        m = state.m.get(name, np.zeros_like(gn))
        v = state.v.get(name, np.zeros_like(gn))
        m = state.beta1 * m + (1.0 - state.beta1) * gn
        v = state.beta2 * v + (1.0 - state.beta2) * gn * gn
        state.m[name], state.v[name] = m, v
        params[name] = params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- one-step hypergradient ------------------------------------------------------


def virtual_step(params, losses, leaves, weights, lr):
    """theta' = theta - lr * grad mean(weights * losses); ``weights`` are constants."""
    n = losses.value.size
    if n == 0:
        raise RangeError("cannot take a step on an empty sample set")
    inner = mean(mul(losses, weights))
    names = list(leaves)
    grads = backward(inner, [leaves[k] for k in names])
    return ParamStore({k: params[k] - lr * g for k, g in zip(names, grads)}), float(inner.value)


def weight_cotangent(losses, leaves, meta_grads, lr):
    """d L_meta / d w_i for theta'(w) = theta - lr * mean_i(w_i grad l_i).

    Equals ``-lr/n * (grad_theta' L_meta . grad_theta l_i)``; the dot products
    for every i come from one forward-mode sweep of the loss vector along
    ``grad_theta' L_meta``.
    """
    dots = forward_tangent(losses, {leaves[k]: meta_grads[k] for k in leaves})
    return -lr * dots / losses.value.size


def hypergradient(theta, delta, sample_losses, meta_loss, weight_fn, inner_lr):
    """Gradient of ``meta_loss(theta'(delta))`` w.r.t. ``delta``.

    ``sample_losses(vars) -> Var`` gives per-sample losses on the hard set,
    ``meta_loss(vars) -> Var`` the scalar meta objective, and
    ``weight_fn(loss_values, delta_vars) -> Var`` the sample weights. The loss
    values enter the weight function as constants.
    """
    leaves = theta.as_vars()
    losses = sample_losses(leaves)
    if losses.value.size == 0:
        raise RangeError("hypergradient undefined: empty hard set")
    w = weight_fn(losses.value, delta.as_vars()).value
    theta_prime, _ = virtual_step(theta, losses, leaves, w, inner_lr)
    meta = backward_gradients(meta_loss, theta_prime)
    cot = weight_cotangent(losses, leaves, meta.grads, inner_lr)
    dvars = delta.as_vars()
    wv = weight_fn(losses.value, dvars)
    names = list(dvars)
    grads = backward(wv, [dvars[k] for k in names], seed=cot)
    return check_finite(GradientBundle(dict(zip(names, grads)), meta.loss))
