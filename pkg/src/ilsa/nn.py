"""Parameter management, dense/transformer forwards, Adam, checkpoints.

Parameters are named float64 arrays, each tagged with one of four partitions
so fine-tuning can freeze or train structural slices of the model:
state_embed, transformer, intermediate_head, final_head.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, TrainingError

PARTITIONS = ("state_embed", "transformer", "intermediate_head", "final_head")

_LN_EPS = 1e-5


@dataclass
class Param:
    data: np.ndarray
    partition: str


class ParamSet:
    """Ordered name -> (array, partition) store with freeze-aware leaf creation."""

    def __init__(self):
        self.entries: dict[str, Param] = {}

    def add(self, name: str, data: np.ndarray, partition: str) -> None:
        if name in self.entries:
            raise ShapeError(f"duplicate parameter name {name!r}")
        if partition not in PARTITIONS:
            raise ShapeError(f"unknown partition {partition!r} for {name!r}")
        self.entries[name] = Param(np.asarray(data, dtype=np.float64), partition)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name].data

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self, partitions: set[str] | None = None) -> list[str]:
        if partitions is None:
            return list(self.entries)
        return [n for n, p in self.entries.items() if p.partition in partitions]

    def copy(self) -> ParamSet:
        out = ParamSet()
        for n, p in self.entries.items():
            out.add(n, p.data.copy(), p.partition)
        return out

    def load_values(self, other: ParamSet) -> None:
        """Overwrite values in place from another set with identical structure."""
        for n, p in self.entries.items():
            p.data[...] = other.entries[n].data

    def leaves(self, trainable_partitions: set[str] | None) -> dict[str, Tensor]:
        """Graph leaves for one forward/backward pass. Parameters outside the
        trainable partitions are graph constants and receive no gradient entry."""
        out = {}
        for n, p in self.entries.items():
            req = trainable_partitions is not None and p.partition in trainable_partitions
            out[n] = Tensor(p.data, requires_grad=req)
        return out

    def changed_names(self, other: ParamSet) -> list[str]:
        return [
            n
            for n, p in self.entries.items()
            if not np.array_equal(p.data, other.entries[n].data)
        ]


# -- initializers -----------------------------------------------------------

def init_mlp(params: ParamSet, prefix: str, dims: list[int], partition: str,
             rng: np.random.Generator, final_scale: float = 1.0) -> None:
    """He-initialized MLP with `len(dims) - 1` linear layers.

    final_scale shrinks the last layer's init; action heads use a small value
    so tanh outputs start near zero instead of saturating (a saturated tanh
    output has no gradient and can never be trained back).
    """
    n_layers = len(dims) - 1
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = np.sqrt(2.0 / fan_in)
        if i == n_layers - 1:
            scale *= final_scale
        w = rng.normal(0.0, scale, size=(fan_in, fan_out))
        params.add(f"{prefix}.w{i}", w, partition)
        params.add(f"{prefix}.b{i}", np.zeros(fan_out), partition)


def init_transformer(params: ParamSet, prefix: str, n_layers: int, d_model: int,
                     ffn_dim: int, rng: np.random.Generator) -> None:
    for layer in range(n_layers):
        p = f"{prefix}.l{layer}"
        for name in ("wq", "wk", "wv", "wo"):
            params.add(
                f"{p}.{name}",
                rng.normal(0.0, np.sqrt(1.0 / d_model), size=(d_model, d_model)),
                "transformer",
            )
            params.add(f"{p}.{name[1]}b", np.zeros(d_model), "transformer")
        params.add(f"{p}.ln1.g", np.ones(d_model), "transformer")
        params.add(f"{p}.ln1.b", np.zeros(d_model), "transformer")
        params.add(f"{p}.ln2.g", np.ones(d_model), "transformer")
        params.add(f"{p}.ln2.b", np.zeros(d_model), "transformer")
        params.add(
            f"{p}.ffn.w0",
            rng.normal(0.0, np.sqrt(2.0 / d_model), size=(d_model, ffn_dim)),
            "transformer",
        )
        params.add(f"{p}.ffn.b0", np.zeros(ffn_dim), "transformer")
        params.add(
            f"{p}.ffn.w1",
            rng.normal(0.0, np.sqrt(1.0 / ffn_dim), size=(ffn_dim, d_model)),
            "transformer",
        )
        params.add(f"{p}.ffn.b1", np.zeros(d_model), "transformer")
    params.add(f"{prefix}.ln_f.g", np.ones(d_model), "transformer")
    params.add(f"{prefix}.ln_f.b", np.zeros(d_model), "transformer")


# -- forwards ---------------------------------------------------------------

def mlp_forward(leaves: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    """W_n(...relu(W1 x + b1)...) + b_n: ReLU after every layer but the last."""
    i = 0
    h = x
    while f"{prefix}.w{i}" in leaves:
        w = leaves[f"{prefix}.w{i}"]
        if h.shape[-1] != w.shape[0]:
            raise ShapeError(
                f"{prefix}.w{i}: expected input width {w.shape[0]}, got {h.shape[-1]}"
            )
        h = ad.matmul(h, w) + leaves[f"{prefix}.b{i}"]
        i += 1
        if f"{prefix}.w{i}" in leaves:
            h = ad.relu(h)
    if i == 0:
        raise ShapeError(f"no parameters found under prefix {prefix!r}")
    return h


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    return ad.layer_norm_op(x, gain, bias, _LN_EPS)


def transformer_forward(leaves: dict[str, Tensor], prefix: str, x: Tensor,
                        n_layers: int, n_heads: int,
                        dropout: float = 0.0,
                        dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm multi-head self-attention encoder over [batch, tokens, d_model].

    Dropout applies only when a probability and rng are both supplied
    (training); inference is deterministic.
    """
    b, n, d = x.shape
    if d % n_heads != 0:
        raise ShapeError(f"d_model {d} not divisible by head count {n_heads}")
    dh = d // n_heads

    def maybe_dropout(t: Tensor) -> Tensor:
        if dropout > 0.0 and dropout_rng is not None:
            keep = (dropout_rng.random(t.shape) >= dropout) / (1.0 - dropout)
            return t * ad.constant(keep)
        return t

    def split_heads(t: Tensor) -> Tensor:
        return ad.transpose(ad.reshape(t, (b, n, n_heads, dh)), (0, 2, 1, 3))

    for layer in range(n_layers):
        p = f"{prefix}.l{layer}"
        h = layer_norm(x, leaves[f"{p}.ln1.g"], leaves[f"{p}.ln1.b"])
        q = split_heads(ad.matmul(h, leaves[f"{p}.wq"]) + leaves[f"{p}.qb"])
        k = split_heads(ad.matmul(h, leaves[f"{p}.wk"]) + leaves[f"{p}.kb"])
        v = split_heads(ad.matmul(h, leaves[f"{p}.wv"]) + leaves[f"{p}.vb"])
        scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        att = maybe_dropout(ad.softmax(scores, axis=-1))
        ctx = ad.reshape(ad.transpose(ad.matmul(att, v), (0, 2, 1, 3)), (b, n, d))
        x = x + (ad.matmul(ctx, leaves[f"{p}.wo"]) + leaves[f"{p}.ob"])
        h2 = layer_norm(x, leaves[f"{p}.ln2.g"], leaves[f"{p}.ln2.b"])
        f0 = ad.relu(ad.matmul(h2, leaves[f"{p}.ffn.w0"]) + leaves[f"{p}.ffn.b0"])
        x = x + maybe_dropout(ad.matmul(f0, leaves[f"{p}.ffn.w1"]) + leaves[f"{p}.ffn.b1"])
    return layer_norm(x, leaves[f"{prefix}.ln_f.g"], leaves[f"{prefix}.ln_f.b"])


# -- gradients / optimizer ----------------------------------------------------

def collect_gradients(leaves: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients for trainable leaves after a backward pass; frozen parameters
    yield no entry. NaN gradients raise naming the first offending parameter."""
    grads = {}
    for name, t in leaves.items():
        if t.requires_grad and t.grad is not None:
            if not np.all(np.isfinite(t.grad)):
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
            grads[name] = t.grad
    return grads


class Adam:
    """Adam with bias correction. Parameters absent from a gradient dict
    (frozen) are left untouched."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict[str, list] = {}

    def step(self, params: ParamSet, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            m, v, t = self.state.setdefault(
                name, [np.zeros_like(g), np.zeros_like(g), 0]
            )
            t += 1
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.state[name][2] = t
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            params.entries[name].data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- checkpoints --------------------------------------------------------------

_MAGIC = b"ILSA-CKPT"
_VERSION = 1


def save_checkpoint(path, params: ParamSet, config: dict) -> None:
    """Versioned binary container; float64 little-endian payloads round-trip
    bit-exactly."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(params.entries)))
        for name, p in params.entries.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", PARTITIONS.index(p.partition)))
            f.write(struct.pack("<B", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise TrainingError(f"{path}: not a checkpoint file")
        version, blob_len = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise TrainingError(f"{path}: unsupported checkpoint version {version}")
        config = json.loads(f.read(blob_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        params = ParamSet()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (part_idx,) = struct.unpack("<B", f.read(1))
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n_items = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(8 * n_items), dtype="<f8").reshape(shape)
            params.add(name, data.astype(np.float64), PARTITIONS[part_idx])
    return params, config
