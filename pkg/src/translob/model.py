"""The TransLOB network.

Pipeline for one ``[N, 40]`` window::

    causal dilated convs + ReLU  -> [N, F]
    layer norm                   -> [N, F]
    concat temporal ramp         -> [N, d]      d = F + 1
    transformer block x B        -> [N, d]
    flatten (time-major)         -> [N*d]
    dense + ReLU (L2 penalised)  -> [dense_dim]
    dropout (training only)
    affine + softmax             -> [classes]

A transformer block is ``Z = LN(MHA(X) + X)`` followed by
``LN(MLP(Z) + Z)``. With ``weights_shared`` every block application uses
the same parameters.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .nn import ops
from .nn.init import glorot_uniform
from .nn.tensor import Param, Tensor

SCALE_MODES = ("model_dim", "head_dim")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    window: int = 100
    n_features: int = 40
    conv_filters: int = 14
    kernel_size: int = 2
    dilations: tuple = (1, 2, 4, 8, 16)
    d_model: int = 15
    num_heads: int = 3
    num_blocks: int = 2
    weights_shared: bool = True
    mlp_dim: int = 60
    dense_dim: int = 64
    num_classes: int = 3
    dropout: float = 0.1
    l2: float = 1e-4
    scale_mode: str = "model_dim"
    ln_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        self.validate()

    def validate(self) -> None:
        if self.d_model != self.conv_filters + 1:
            raise ConfigError(
                f"d_model ({self.d_model}) must equal conv_filters + 1 ({self.conv_filters + 1})"
            )
        if self.num_heads < 1 or self.d_model % self.num_heads:
            raise ConfigError(f"num_heads ({self.num_heads}) must divide d_model ({self.d_model})")
        if self.mlp_dim != 4 * self.d_model:
            raise ConfigError(f"mlp_dim ({self.mlp_dim}) must be 4 * d_model ({4 * self.d_model})")
        if not self.dilations or min(self.dilations) < 1:
            raise ConfigError("dilations must be a non-empty list of positive integers")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"scale_mode must be one of {SCALE_MODES}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        for name in ("window", "n_features", "conv_filters", "kernel_size", "num_blocks", "dense_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def attention_scale(self) -> float:
        width = self.d_model if self.scale_mode == "model_dim" else self.head_dim
        return 1.0 / np.sqrt(width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def temporal_encoding(n: int) -> np.ndarray:
    """``[n, 1]`` linear ramp ``i / (n - 1)`` from 0 to 1 (a single 0 when ``n == 1``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.zeros((1, 1))
    return (np.arange(n, dtype=np.float64) / (n - 1)).reshape(n, 1)


def receptive_field(cfg: ModelConfig) -> int:
    return 1 + sum(d * (cfg.kernel_size - 1) for d in cfg.dilations)


class TransLOB:
    def __init__(self, cfg: ModelConfig, params: dict[str, Param]):
        self.cfg = cfg
        self.params = params
        self._ramp = temporal_encoding(cfg.window)

    # parameter access -----------------------------------------------------

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def block_prefix(self, b: int) -> str:
        return "block" if self.cfg.weights_shared else f"block{b}"

    def l2_params(self) -> list[Param]:
        return [self.params["dense.w"]]

    # forward ----------------------------------------------------------------

    def _block(self, x: Tensor, prefix: str):
        p = self.params
        h = self.cfg.num_heads
        att, maps = ops.multi_head_attention(
            x,
            [p[f"{prefix}.wq{a}"] for a in range(h)],
            [p[f"{prefix}.wk{a}"] for a in range(h)],
            [p[f"{prefix}.wv{a}"] for a in range(h)],
            p[f"{prefix}.wo"],
            self.cfg.attention_scale,
        )
        eps = self.cfg.ln_eps
        z = ops.layer_norm(ops.add(att, x), p[f"{prefix}.norm1.gain"], p[f"{prefix}.norm1.bias"], eps)
        m = ops.relu(ops.affine(z, p[f"{prefix}.mlp1.w"], p[f"{prefix}.mlp1.b"]))
        m = ops.affine(m, p[f"{prefix}.mlp2.w"], p[f"{prefix}.mlp2.b"])
        return ops.layer_norm(ops.add(m, z), p[f"{prefix}.norm2.gain"], p[f"{prefix}.norm2.bias"], eps), maps

    def _check_input(self, x: Tensor) -> None:
        cfg = self.cfg
        if x.shape[-2:] != (cfg.window, cfg.n_features):
            raise ValueError(f"expected input [..., {cfg.window}, {cfg.n_features}], got {x.shape}")

    def conv_stack(self, x) -> Tensor:
        """Output of the dilated convolutions ``[..., N, F]`` before the layer norm."""
        x = ops.as_tensor(x)
        self._check_input(x)
        h = x
        for i, dil in enumerate(self.cfg.dilations):
            h = ops.relu(ops.conv1d_causal_dilated(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], dil))
        return h

    def encode(self, x) -> tuple[Tensor, list]:
        """Run up to the transformer output ``[..., N, d]``; also returns per-block head maps."""
        cfg, p = self.cfg, self.params
        x = ops.as_tensor(x)
        h = ops.layer_norm(self.conv_stack(x), p["conv_norm.gain"], p["conv_norm.bias"], cfg.ln_eps)
        ramp = np.broadcast_to(self._ramp, x.shape[:-1] + (1,))
        h = ops.concat([h, Tensor(ramp)], axis=-1)
        maps = []
        for b in range(cfg.num_blocks):
            h, m = self._block(h, self.block_prefix(b))
            maps.append(m)
        return h, maps

    def forward(self, x, training: bool = False, rng: Optional[np.random.Generator] = None, with_maps: bool = True):
        """Class probabilities ``[..., classes]`` and attention maps.

        ``x`` is one ``[N, 40]`` window or a batch ``[B, N, 40]``. Maps are an
        array ``[..., blocks, heads, N, N]``.
        """
        cfg, p = self.cfg, self.params
        x = ops.as_tensor(x)
        h, maps = self.encode(x)
        lead = x.shape[:-2]
        h = ops.reshape(h, lead + (cfg.window * cfg.d_model,))
        h = ops.relu(ops.affine(h, p["dense.w"], p["dense.b"]))
        h = ops.dropout(h, cfg.dropout, rng, training=training)
        probs = ops.softmax(ops.affine(h, p["out.w"], p["out.b"]))
        if not with_maps:
            return probs, None
        return probs, np.stack([np.stack(m, axis=-3) for m in maps], axis=-4)

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x, training=False, with_maps=False)[0].data

    def loss(self, x, labels, training: bool = True, rng: Optional[np.random.Generator] = None):
        probs, _ = self.forward(x, training=training, rng=rng, with_maps=False)
        loss = ops.cross_entropy_loss(probs, labels, self.cfg.l2, self.l2_params())
        return loss, probs

    def extract_attention(self, x) -> np.ndarray:
        """Eval-mode attention maps ``[blocks, heads, N, N]`` for one window."""
        return self.forward(x, training=False)[1]


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    cin = cfg.n_features
    for i in range(len(cfg.dilations)):
        shapes[f"conv{i}.w"] = (cfg.kernel_size, cin, cfg.conv_filters)
        shapes[f"conv{i}.b"] = (cfg.conv_filters,)
        cin = cfg.conv_filters
    shapes["conv_norm.gain"] = (cfg.conv_filters,)
    shapes["conv_norm.bias"] = (cfg.conv_filters,)
    d, dh = cfg.d_model, cfg.head_dim
    prefixes = ["block"] if cfg.weights_shared else [f"block{b}" for b in range(cfg.num_blocks)]
    for pre in prefixes:
        for a in range(cfg.num_heads):
            shapes[f"{pre}.wq{a}"] = (d, dh)
            shapes[f"{pre}.wk{a}"] = (d, dh)
            shapes[f"{pre}.wv{a}"] = (d, dh)
        shapes[f"{pre}.wo"] = (d, d)
        shapes[f"{pre}.norm1.gain"] = (d,)
        shapes[f"{pre}.norm1.bias"] = (d,)
        shapes[f"{pre}.mlp1.w"] = (d, cfg.mlp_dim)
        shapes[f"{pre}.mlp1.b"] = (cfg.mlp_dim,)
        shapes[f"{pre}.mlp2.w"] = (cfg.mlp_dim, d)
        shapes[f"{pre}.mlp2.b"] = (d,)
        shapes[f"{pre}.norm2.gain"] = (d,)
        shapes[f"{pre}.norm2.bias"] = (d,)
    shapes["dense.w"] = (cfg.window * d, cfg.dense_dim)
    shapes["dense.b"] = (cfg.dense_dim,)
    shapes["out.w"] = (cfg.dense_dim, cfg.num_classes)
    shapes["out.b"] = (cfg.num_classes,)
    return shapes


def build_model(cfg: ModelConfig, seed: Optional[int] = None) -> TransLOB:
    """Allocate and initialize every parameter: Glorot-uniform weights, zero biases, unit gains."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".gain"):
            value = np.ones(shape)
        elif name.endswith((".b", ".bias")):
            value = np.zeros(shape)
        else:
            value = glorot_uniform(rng, shape)
        params[name] = Param(value, name)
    return TransLOB(cfg, params)
