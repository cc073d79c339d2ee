"""Transformer-encoder generator and discriminator.

Both networks share the same trunk: an embedding stage that lifts the input
(noise or channel vector, concatenated with the distance condition) to a
15x4 MPC sequence, a per-row dense projection to the model width, a learned
positional matrix, a stack of post-norm encoder layers, and a dense output
head. The generator head widens to 240 then 60; the discriminator head
collapses to a single score through two one-neuron dense layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    add_const,
    concat,
    layer_norm_rows,
    leaky_relu,
    matmul,
    permute,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    transpose,
)

PE_INIT_STD = 0.02
GENERATOR_HIDDEN = 240

OUTPUT_ACTIVATIONS = ("sigmoid", "linear_clamped")


@dataclass(frozen=True)
class EncoderConfig:
    """Dimensions of the shared encoder trunk."""

    num_layers: int = 6
    num_heads: int = 4
    model_dim: int = 128
    key_dim: int = 32
    value_dim: int = 32
    seq_len: int = 15
    mpc_dim: int = 4
    ffn_dim: int = 128
    noise_dim: int = 32
    output_activation: str = "sigmoid"

    def __post_init__(self):
        for name in ("num_layers", "num_heads", "model_dim", "key_dim", "value_dim",
                     "seq_len", "mpc_dim", "ffn_dim", "noise_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def vector_width(self) -> int:
        return self.seq_len * self.mpc_dim

    @property
    def flat_width(self) -> int:
        return self.seq_len * self.model_dim


def _dense_init(rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _trunk_params(cfg: EncoderConfig, rng, in_width: int) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    p["embed_in.w"] = _dense_init(rng, in_width, cfg.vector_width)
    p["embed_in.b"] = np.zeros(cfg.vector_width)
    p["embed_seq.w"] = _dense_init(rng, cfg.mpc_dim, cfg.model_dim)
    p["embed_seq.b"] = np.zeros(cfg.model_dim)
    p["pe"] = rng.normal(0.0, PE_INIT_STD, size=(cfg.seq_len, cfg.model_dim))
    for i in range(cfg.num_layers):
        for j in range(cfg.num_heads):
            p[f"layers.{i}.heads.{j}.wq"] = _dense_init(rng, cfg.model_dim, cfg.key_dim)
            p[f"layers.{i}.heads.{j}.wk"] = _dense_init(rng, cfg.model_dim, cfg.key_dim)
            p[f"layers.{i}.heads.{j}.wv"] = _dense_init(rng, cfg.model_dim, cfg.value_dim)
        p[f"layers.{i}.attn_out.w"] = _dense_init(
            rng, cfg.num_heads * cfg.value_dim, cfg.model_dim
        )
        p[f"layers.{i}.ffn1.w"] = _dense_init(rng, cfg.model_dim, cfg.ffn_dim)
        p[f"layers.{i}.ffn1.b"] = np.zeros(cfg.ffn_dim)
        p[f"layers.{i}.ffn2.w"] = _dense_init(rng, cfg.ffn_dim, cfg.model_dim)
        p[f"layers.{i}.ffn2.b"] = np.zeros(cfg.model_dim)
        p[f"layers.{i}.norm1.gain"] = np.ones(cfg.model_dim)
        p[f"layers.{i}.norm1.bias"] = np.zeros(cfg.model_dim)
        p[f"layers.{i}.norm2.gain"] = np.ones(cfg.model_dim)
        p[f"layers.{i}.norm2.bias"] = np.zeros(cfg.model_dim)
    return p


def init_generator_params(cfg: EncoderConfig, rng) -> dict[str, Tensor]:
    p = _trunk_params(cfg, rng, cfg.noise_dim + 1)
    p["head1.w"] = _dense_init(rng, cfg.flat_width, GENERATOR_HIDDEN)
    p["head1.b"] = np.zeros(GENERATOR_HIDDEN)
    p["head2.w"] = _dense_init(rng, GENERATOR_HIDDEN, cfg.vector_width)
    p["head2.b"] = np.zeros(cfg.vector_width)
    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


def init_discriminator_params(cfg: EncoderConfig, rng) -> dict[str, Tensor]:
    p = _trunk_params(cfg, rng, cfg.vector_width + 1)
    p["head1.w"] = _dense_init(rng, cfg.flat_width, 1)
    p["head1.b"] = np.zeros(1)
    p["head2.w"] = _dense_init(rng, 1, 1)
    p["head2.b"] = np.zeros(1)
    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


def param_count(cfg: EncoderConfig, network: str) -> int:
    """Closed-form parameter count; guards against topology drift."""
    if network == "generator":
        in_width = cfg.noise_dim + 1
        head = cfg.flat_width * GENERATOR_HIDDEN + GENERATOR_HIDDEN \
            + GENERATOR_HIDDEN * cfg.vector_width + cfg.vector_width
    elif network == "discriminator":
        in_width = cfg.vector_width + 1
        head = cfg.flat_width * 1 + 1 + 1 * 1 + 1
    else:
        raise ValueError(f"unknown network {network!r}")
    embed = in_width * cfg.vector_width + cfg.vector_width \
        + cfg.mpc_dim * cfg.model_dim + cfg.model_dim \
        + cfg.seq_len * cfg.model_dim
    per_layer = (
        cfg.num_heads * cfg.model_dim * (2 * cfg.key_dim + cfg.value_dim)
        + cfg.num_heads * cfg.value_dim * cfg.model_dim
        + cfg.model_dim * cfg.ffn_dim + cfg.ffn_dim
        + cfg.ffn_dim * cfg.model_dim + cfg.model_dim
        + 4 * cfg.model_dim
    )
    return embed + cfg.num_layers * per_layer + head


def attention(q: Tensor, k: Tensor, v: Tensor, key_dim: int) -> Tensor:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V."""
    logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(key_dim))
    return matmul(softmax_rows(logits), v)


def _split_heads(t: Tensor, heads: int, width: int) -> Tensor:
    """(..., L, h*width) -> (batch*h, L, width), heads folded into the batch."""
    if t.ndim == 2:
        length = t.shape[0]
        t = reshape(t, (length, heads, width))
        return permute(t, (1, 0, 2))
    batch, length = t.shape[0], t.shape[1]
    t = reshape(t, (batch, length, heads, width))
    t = permute(t, (0, 2, 1, 3))
    return reshape(t, (batch * heads, length, width))


def _join_heads(t: Tensor, batch: int | None, heads: int, width: int) -> Tensor:
    length = t.shape[1]
    if batch is None:
        return reshape(permute(t, (1, 0, 2)), (length, heads * width))
    t = reshape(t, (batch, heads, length, width))
    t = permute(t, (0, 2, 1, 3))
    return reshape(t, (batch, length, heads * width))


def multi_head(x: Tensor, params: dict[str, Tensor], prefix: str, cfg: EncoderConfig) -> Tensor:
    """All heads evaluated in one fused projection per Q/K/V.

    Equivalent to running each head separately: the per-head weight matrices
    are concatenated column-wise, and head outputs are re-split before W^o.
    """
    h = cfg.num_heads
    wq = concat([params[f"{prefix}.heads.{j}.wq"] for j in range(h)], axis=1)
    wk = concat([params[f"{prefix}.heads.{j}.wk"] for j in range(h)], axis=1)
    wv = concat([params[f"{prefix}.heads.{j}.wv"] for j in range(h)], axis=1)
    batch = x.shape[0] if x.ndim == 3 else None
    q = _split_heads(matmul(x, wq), h, cfg.key_dim)
    k = _split_heads(matmul(x, wk), h, cfg.key_dim)
    v = _split_heads(matmul(x, wv), h, cfg.value_dim)
    out = attention(q, k, v, cfg.key_dim)
    return matmul(_join_heads(out, batch, h, cfg.value_dim), params[f"{prefix}.attn_out.w"])


def feed_forward(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    hidden = relu(add(matmul(x, params[f"{prefix}.ffn1.w"]), params[f"{prefix}.ffn1.b"]))
    return add(matmul(hidden, params[f"{prefix}.ffn2.w"]), params[f"{prefix}.ffn2.b"])


def encoder_layer(x: Tensor, params: dict[str, Tensor], prefix: str, cfg: EncoderConfig) -> Tensor:
    """Post-norm layer: LayerNorm(x + MultiHead(x)), then LayerNorm(. + FFN(.))."""
    attended = layer_norm_rows(
        add(x, multi_head(x, params, prefix, cfg)),
        params[f"{prefix}.norm1.gain"], params[f"{prefix}.norm1.bias"],
    )
    return layer_norm_rows(
        add(attended, feed_forward(attended, params, prefix)),
        params[f"{prefix}.norm2.gain"], params[f"{prefix}.norm2.bias"],
    )


def encoder_stack(x: Tensor, params: dict[str, Tensor], cfg: EncoderConfig) -> Tensor:
    for i in range(cfg.num_layers):
        x = encoder_layer(x, params, f"layers.{i}", cfg)
    return x


def _trunk(flat_in: Tensor, params: dict[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """Embedding + positional matrix + encoder stack + flatten, batched (B, .)."""
    batch = flat_in.shape[0]
    h = leaky_relu(add(matmul(flat_in, params["embed_in.w"]), params["embed_in.b"]))
    h = reshape(h, (batch, cfg.seq_len, cfg.mpc_dim))
    h = add(matmul(h, params["embed_seq.w"]), params["embed_seq.b"])
    h = add(h, params["pe"])
    h = encoder_stack(h, params, cfg)
    return reshape(h, (batch, cfg.flat_width))


def _clamp01(x: Tensor) -> Tensor:
    # relu(x) - relu(x - 1) == min(max(x, 0), 1), differentiable a.e.
    return sub(relu(x), relu(add_const(x, -1.0)))


def _as_batch(t: Tensor, width: int, name: str) -> tuple[Tensor, bool]:
    if t.ndim == 1:
        if t.shape[0] != width:
            raise ShapeError(f"{name} must have {width} entries, got {t.shape[0]}")
        return reshape(t, (1, width)), True
    if t.ndim == 2 and t.shape[1] == width:
        return t, False
    raise ShapeError(f"{name} must be ({width},) or (batch, {width}), got {t.shape}")


def generator_forward(z: Tensor, c: Tensor, params: dict[str, Tensor],
                      cfg: EncoderConfig) -> Tensor:
    """Map noise plus condition to a 60-wide channel vector in [0, 1]."""
    z, squeeze = _as_batch(z, cfg.noise_dim, "z")
    c, _ = _as_batch(c, 1, "c")
    h = _trunk(concat([z, c], axis=1), params, cfg)
    h = leaky_relu(add(matmul(h, params["head1.w"]), params["head1.b"]))
    out = add(matmul(h, params["head2.w"]), params["head2.b"])
    if cfg.output_activation == "sigmoid":
        out = sigmoid(out)
    else:
        out = _clamp01(out)
    return reshape(out, (cfg.vector_width,)) if squeeze else out


def discriminator_forward(x: Tensor, c: Tensor, params: dict[str, Tensor],
                          cfg: EncoderConfig, sigmoid_output: bool = True) -> Tensor:
    """Score a (possibly generated) channel vector under its condition.

    With ``sigmoid_output`` the score lies in (0, 1); without it the raw
    linear score is returned (canonical Wasserstein critic mode).
    """
    x, squeeze = _as_batch(x, cfg.vector_width, "x")
    c, _ = _as_batch(c, 1, "c")
    h = _trunk(concat([x, c], axis=1), params, cfg)
    out = add(matmul(h, params["head1.w"]), params["head1.b"])
    out = add(matmul(out, params["head2.w"]), params["head2.b"])
    if sigmoid_output:
        out = sigmoid(out)
    return reshape(out, (1,)) if squeeze else out


def params_to_arrays(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def arrays_to_params(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
