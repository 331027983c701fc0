"""Finite-difference oracles shared by the unit and acceptance tests."""

import numpy as np

from terragrain import encoder
from terragrain.rng import SplitMix64
from terragrain.sampling import AnchorPatch, augment, sample_batch
from terragrain.featurizer import featurize_crops
from terragrain.trainer import batch_loss


def rel_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def central_difference(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        fp = f(theta)
        theta[i] = old - h
        fm = f(theta)
        theta[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def random_case(seed, background=True, hidden=64, dim=32):
    """Random params (non-zero biases) and a featurised training batch from a noise image."""
    rng = SplitMix64(seed)
    params = encoder.init_params(seed, (156 if background else 78, hidden, dim))
    params.b1 += 0.1 * (2 * rng.uniform_array(params.b1.shape) - 1)
    params.b2 += 0.1 * (2 * rng.uniform_array(params.b2.shape) - 1)
    img = (rng.uniform_array((120, 160, 3)) * 255).astype(np.uint8)
    anchors = [AnchorPatch(0, 20 + 10 * i, 30 + 5 * i, 16, i % 3) for i in range(12)]
    batch = sample_batch(anchors, anchors[0], img, rng, 16, 48 if background else None, 10)
    crops = [augment(c, rng) for c in (batch.query, batch.positive, *batch.negatives)]
    return params, featurize_crops(crops)


LD = np.longdouble


def _ld_loss(y, tau):
    """InfoNCE of rows [query, positive, negatives...] from pre-norm outputs ``y[..., B, D]``."""
    z = y / (np.sqrt((y * y).sum(axis=-1, keepdims=True)) + LD(1e-12))
    logits = (z[..., 1:, :] * z[..., :1, :]).sum(axis=-1) / LD(tau)
    m = logits.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=-1))
    return lse - logits[..., 0]


def extended_central_difference(params, x, tau, h=1e-5):
    """Central differences of the loss w.r.t. every parameter, evaluated in extended precision.

    Independent re-implementation of the forward pass.  Each perturbation
    only touches one hidden pre-activation column or one output column, so
    all of them are evaluated together.  Float64 evaluation noise (~1e-16
    relative, divided by 2h) would swamp gradients near 1e-7.
    """
    x = np.asarray(x, dtype=LD)
    w1, b1, w2, b2 = (np.asarray(t, dtype=LD) for t in params.tensors())
    hh = LD(h)
    a = x @ w1.T + b1  # (B, H)
    act = np.tanh(a)
    y = act @ w2.T + b2  # (B, D)
    n_h, n_in = w1.shape
    n_d = w2.shape[0]

    def through_hidden(unit, shift):
        # pre-activation column ``unit[p]`` shifted by ``shift[p]`` (P, B); returns (P, B, D)
        d_act = np.tanh(a[:, unit].T + shift) - act[:, unit].T
        return y[None] + d_act[..., None] * w2.T[unit][:, None, :]

    def fd(make):
        return (_ld_loss(make(hh), tau) - _ld_loss(make(-hh), tau)) / (2 * hh)

    units_w1 = np.repeat(np.arange(n_h), n_in)  # row-major over (i, j)
    cols_w1 = np.tile(np.arange(n_in), n_h)

    def w1_pert(s):
        return through_hidden(units_w1, s * x[:, cols_w1].T)

    def b1_pert(s):
        return through_hidden(np.arange(n_h), np.full((n_h, x.shape[0]), s, dtype=LD))

    def w2_pert(s):
        # (d, i) adds s * act[:, i] to output column d
        delta = np.zeros((n_d, n_h, x.shape[0], n_d), dtype=LD)
        idx = np.arange(n_d)
        delta[idx, :, :, idx] = s * act.T[None]
        return y[None] + delta.reshape(n_d * n_h, x.shape[0], n_d)

    def b2_pert(s):
        delta = np.zeros((n_d, x.shape[0], n_d), dtype=LD)
        delta[np.arange(n_d), :, np.arange(n_d)] = s
        return y[None] + delta

    parts = [fd(w1_pert), fd(b1_pert), fd(w2_pert), fd(b2_pert)]
    return np.concatenate([p.astype(np.float64) for p in parts])


def loss_gradient_check(params, x, tau=0.1, h=1e-5):
    """Max relative error between analytic and central-difference parameter gradients."""
    _, grads = batch_loss(params, x, tau)
    numeric = extended_central_difference(params, x, tau, h)
    return float(rel_error(grads.vector(), numeric).max())
