"""Point-cloud observation pipeline.

Boundary clouds are sampled at sorted uniform-random perimeter positions
(the sorted order is the canonical point order the decoder reconstructs),
optionally perturbed with isotropic Gaussian noise, then passed through a
shared per-point MLP. Channel-wise max pooling produces the global
feature, which is exactly permutation invariant; a single-query
scaled-dot-product attention with residual fuses per-point features into
the embedding used for reconstruction. Only the pooled global feature is
exported to policy conditioning.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .numkit import (Mlp, Tensor, add, attn_apply, attn_scores, init_mlp,
                     matmul, mul, reshape, softmax, take_rows, tmax, tsum)
from .sim.shapes import rot_matrix
from .sim.world import ObjectState


def sample_cloud(obj: ObjectState, m_points: int, rng: np.random.Generator):
    """M boundary points in the world frame, ordered by boundary parameter."""
    if m_points < 1:
        raise ContractError("m_points must be >= 1")
    per = obj.shape.perimeter()
    if not per > 0.0:
        raise ContractError("degenerate shape: zero perimeter")
    s = np.sort(rng.uniform(0.0, per, size=m_points))
    local = obj.shape.boundary_points(s)
    return obj.position + local @ rot_matrix(obj.theta).T


def perturb(cloud, sigma, rng: np.random.Generator):
    """cloud + N(0, sigma^2 I), i.i.d. per coordinate."""
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    cloud = np.asarray(cloud, dtype=np.float64)
    if sigma == 0.0:
        return cloud.copy()
    return cloud + sigma * rng.standard_normal(cloud.shape)


class PerceptParams:
    """Encoder / attention / decoder parameter bundle."""

    def __init__(self, encoder: Mlp, wq: Tensor, wk: Tensor, wv: Tensor,
                 decoder: Mlp, sigma: float, m_points: int, d: int):
        self.encoder = encoder
        self.wq, self.wk, self.wv = wq, wk, wv
        self.decoder = decoder
        self.sigma = float(sigma)
        self.m_points = int(m_points)
        self.d = int(d)

    @property
    def d_f(self):
        return self.encoder.out_dim

    def params(self):
        return (self.encoder.params() + [self.wq, self.wk, self.wv]
                + self.decoder.params())

    def encoder_params(self):
        return self.encoder.params()

    def state_dict(self, prefix="percept/"):
        out = self.encoder.state_dict(prefix + "enc/")
        out[prefix + "wq"] = self.wq.data
        out[prefix + "wk"] = self.wk.data
        out[prefix + "wv"] = self.wv.data
        out.update(self.decoder.state_dict(prefix + "dec/"))
        return out

    def load_state(self, arrays, prefix="percept/"):
        self.encoder.load_state(arrays, prefix + "enc/")
        self.wq.data = np.asarray(arrays[prefix + "wq"]).reshape(self.wq.shape)
        self.wk.data = np.asarray(arrays[prefix + "wk"]).reshape(self.wk.shape)
        self.wv.data = np.asarray(arrays[prefix + "wv"]).reshape(self.wv.shape)
        self.decoder.load_state(arrays, prefix + "dec/")

    def meta(self):
        return {"sigma": self.sigma, "m_points": self.m_points, "d": self.d,
                "d_f": self.d_f,
                "enc_sizes": [self.encoder.in_dim]
                             + [w.shape[0] for w in self.encoder.weights],
                "dec_sizes": [self.decoder.in_dim]
                             + [w.shape[0] for w in self.decoder.weights]}


def init_percept(rng, d=2, d_f=64, m_points=256, enc_hidden=(48,),
                 dec_hidden=(96,), sigma=0.01):
    encoder = init_mlp([d, *enc_hidden, d_f], rng)
    scale = 1.0 / np.sqrt(d_f)
    wq = Tensor(rng.uniform(-scale, scale, size=(d_f, d_f)), requires_grad=True)
    wk = Tensor(rng.uniform(-scale, scale, size=(d_f, d_f)), requires_grad=True)
    wv = Tensor(rng.uniform(-scale, scale, size=(d_f, d_f)), requires_grad=True)
    decoder = init_mlp([d_f, *dec_hidden, m_points * d], rng)
    return PerceptParams(encoder, wq, wk, wv, decoder, sigma, m_points, d)


def percept_from_meta(meta):
    rng = np.random.default_rng(0)
    p = init_percept(rng, d=meta["d"], d_f=meta["d_f"], m_points=meta["m_points"],
                     enc_hidden=tuple(meta["enc_sizes"][1:-1]),
                     dec_hidden=tuple(meta["dec_sizes"][1:-1]),
                     sigma=meta["sigma"])
    return p


def _as_batch(clouds):
    arr = np.asarray(clouds, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None, :, :], True
    if arr.ndim == 3:
        return arr, False
    raise ContractError(f"clouds must be (M, d) or (B, M, d), got {arr.shape}")


def encode(clouds, params: PerceptParams):
    """Per-point features and the max-pooled global feature.

    Accepts one cloud (M, d) or a batch (B, M, d); returns Tensors of
    shape (B, M, d_f) and (B, d_f).
    """
    batch, _ = _as_batch(clouds)
    b, m, d = batch.shape
    if d != params.d:
        raise ContractError(f"cloud coordinate dim {d} != encoder dim {params.d}")
    flat = Tensor(batch.reshape(b * m, d))
    feats = reshape(params.encoder.forward(flat), (b, m, params.d_f))
    fg = tmax(feats, axis=1)
    return feats, fg


def encode_np(clouds, params: PerceptParams):
    """Inference-only global feature; returns (B, d_f) ndarray."""
    batch, single = _as_batch(clouds)
    b, m, d = batch.shape
    feats = params.encoder.forward_np(batch.reshape(b * m, d)).reshape(b, m, -1)
    fg = feats.max(axis=1)
    return fg[0] if single else fg


def attend(per_point, fg, params: PerceptParams):
    """Single-query attention with residual: returns (z, weights)."""
    b, m, d_f = per_point.shape
    q = matmul(fg, params.wq)
    keys = reshape(matmul(reshape(per_point, (b * m, d_f)), params.wk), (b, m, d_f))
    values = reshape(matmul(reshape(per_point, (b * m, d_f)), params.wv), (b, m, d_f))
    scores = mul(attn_scores(keys, q), 1.0 / np.sqrt(d_f))
    weights = softmax(scores, axis=-1)
    z = add(fg, attn_apply(weights, values))
    return z, weights


def reconstruct(z, params: PerceptParams):
    """Decode embeddings to clouds in canonical order; returns (B, M, d)."""
    flat = params.decoder.forward(z)
    return reshape(flat, (flat.shape[0], params.m_points, params.d))


def recon_loss(p, p_hat):
    """Index-matched mean squared point distance, (1/M) sum_i |p_i - q_i|^2,
    averaged over the batch."""
    batch, _ = _as_batch(p)
    if isinstance(p_hat, Tensor):
        if p_hat.shape[-2] != batch.shape[-2]:
            raise ContractError(
                f"point counts differ: {batch.shape[-2]} vs {p_hat.shape[-2]}")
        diff = add(Tensor(batch.reshape(p_hat.shape)), mul(p_hat, -1.0))
    else:
        q, _ = _as_batch(p_hat)
        if q.shape[1] != batch.shape[1]:
            raise ContractError(f"point counts differ: {batch.shape[1]} vs {q.shape[1]}")
        diff = Tensor(batch - q)
    b, m = diff.shape[0], diff.shape[1]
    return mul(tsum(mul(diff, diff)), 1.0 / (b * m))


def chamfer_loss(p, p_hat):
    """Symmetric nearest-neighbor squared distance (set metric).

    Off by default; the canonical reconstruction objective is the
    index-matched `recon_loss`. Correspondences come from the current
    values; gradients flow through the matched prediction rows.
    """
    batch, _ = _as_batch(p)
    hat_is_tensor = isinstance(p_hat, Tensor)
    hat_t = p_hat if hat_is_tensor else Tensor(_as_batch(p_hat)[0])
    if hat_t.shape[0] != batch.shape[0]:
        raise ContractError("batch sizes differ")
    hat = hat_t.data

    d2 = ((batch[:, :, None, :] - hat[:, None, :, :]) ** 2).sum(axis=3)
    nn_fwd = d2.argmin(axis=2)   # for each true point, nearest prediction
    nn_bwd = d2.argmin(axis=1)   # for each prediction, nearest true point

    b, m = batch.shape[0], batch.shape[1]
    m_hat = hat.shape[1]
    fwd = add(Tensor(batch), mul(take_rows(hat_t, nn_fwd), -1.0))
    rows = np.arange(b)[:, None]
    bwd = add(Tensor(batch[rows, nn_bwd]), mul(hat_t, -1.0))
    return add(mul(tsum(mul(fwd, fwd)), 0.5 / (b * m)),
               mul(tsum(mul(bwd, bwd)), 0.5 / (b * m_hat)))


def encoded_cloud_features(state_obj, params, rng, m_points=None):
    """Live pipeline: sample -> perturb -> global feature (numpy path)."""
    m = m_points or params.m_points
    cloud = sample_cloud(state_obj, m, rng)
    noisy = perturb(cloud, params.sigma, rng)
    return cloud, encode_np(noisy, params)
