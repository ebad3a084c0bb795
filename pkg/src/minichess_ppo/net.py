"""Policy/value network in plain numpy with hand-written backprop.

Layout: four 3x3 conv + batch-norm + ReLU blocks (same padding on the first
two, valid on the last two, so 5x5 -> 5 -> 5 -> 3 -> 1), two fully connected
+ batch-norm + ReLU + dropout blocks, then separate policy and value heads.
Activations are NHWC.  Convolutions and dense layers carry no bias because
each is followed by batch-norm.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .encoding import NUM_ACTIONS

CONV_LAYERS = (("conv1", 1), ("conv2", 1), ("conv3", 0), ("conv4", 0))
FC_LAYERS = ("fc1", "fc2")
BN_LAYERS = tuple(name for name, _ in CONV_LAYERS) + FC_LAYERS

Gradients = dict


def _patch_index(size: int) -> np.ndarray:
    """Flat input positions of every 3x3 patch, ordered (out_row, out_col, kh, kw)."""
    out = size - 2
    idx = [
        (r + i) * size + (c + j)
        for r in range(out) for c in range(out) for i in range(3) for j in range(3)
    ]
    return np.array(idx, dtype=np.intp)


_PATCHES = {size: _patch_index(size) for size in (3, 5, 7)}


class CheckpointError(ValueError):
    pass


@dataclass
class NetConfig:
    channels: int = 64
    hidden: int = 128
    actions: int = NUM_ACTIONS
    dropout: float = 0.3
    dtype: str = "float32"
    compute_dtype: str = "float64"
    bn_momentum: float = 0.99
    bn_eps: float = 1e-6

    def __post_init__(self):
        if min(self.channels, self.hidden, self.actions) < 1:
            raise ValueError("channels, hidden and actions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for dt in (self.dtype, self.compute_dtype):
            if dt not in ("float32", "float64"):
                raise ValueError(f"unsupported dtype {dt}")


def param_shapes(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Learnable tensors in declaration (and serialization) order."""
    C, H, A = cfg.channels, cfg.hidden, cfg.actions
    shapes = []
    cin = 1
    for name, _ in CONV_LAYERS:
        shapes += [(f"{name}.w", (3, 3, cin, C)), (f"{name}.gamma", (C,)), (f"{name}.beta", (C,))]
        cin = C
    fan_in = C
    for name in FC_LAYERS:
        shapes += [(f"{name}.w", (fan_in, H)), (f"{name}.gamma", (H,)), (f"{name}.beta", (H,))]
        fan_in = H
    shapes += [("policy.w", (H, A)), ("policy.b", (A,)), ("value.w", (H, 1)), ("value.b", (1,))]
    return shapes


def buffer_shapes(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for name in BN_LAYERS:
        width = cfg.hidden if name in FC_LAYERS else cfg.channels
        out += [(f"{name}.mean", (width,)), (f"{name}.var", (width,))]
    return out


def parameter_count(channels: int, hidden: int, actions: int) -> int:
    C, H, A = channels, hidden, actions
    conv = 9 * C + 3 * 9 * C * C + 4 * 2 * C
    dense = C * H + H * H + 2 * 2 * H
    heads = H * A + A + H + 1
    return conv + dense + heads


@dataclass
class NetworkParams:
    config: NetConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            NetConfig(**asdict(self.config)),
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def astype(self, dtype: str) -> "NetworkParams":
        cfg = NetConfig(**{**asdict(self.config), "dtype": dtype})
        return NetworkParams(
            cfg,
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
        )


def init_params(cfg: NetConfig, seed: int) -> NetworkParams:
    """He-normal trunk, small policy head so initial play is near uniform."""
    rng = np.random.default_rng(seed)
    dt = np.dtype(cfg.dtype)
    params = {}
    for name, shape in param_shapes(cfg):
        if name.endswith(".gamma"):
            arr = np.ones(shape)
        elif name.endswith((".beta", ".b")):
            arr = np.zeros(shape)
        elif name == "policy.w":
            arr = rng.normal(0.0, 0.01 / np.sqrt(shape[0]), shape)
        elif name == "value.w":
            arr = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            arr = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        params[name] = arr.astype(dt)
    buffers = {}
    for name, shape in buffer_shapes(cfg):
        buffers[name] = (np.ones(shape) if name.endswith(".var") else np.zeros(shape)).astype(dt)
    return NetworkParams(cfg, params, buffers)


@dataclass
class ForwardOut:
    policy_logits: np.ndarray  # (B, A)
    value: np.ndarray  # (B,)
    cache: dict


def _bn_forward(z, net: NetworkParams, p: dict, name: str, train: bool):
    cfg = net.config
    gamma = p[f"{name}.gamma"]
    beta = p[f"{name}.beta"]
    if train:
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        m = cfg.bn_momentum
        rm, rv = net.buffers[f"{name}.mean"], net.buffers[f"{name}.var"]
        rm *= m
        rm += (1.0 - m) * mu
        rv *= m
        rv += (1.0 - m) * var
    else:
        mu = net.buffers[f"{name}.mean"].astype(z.dtype, copy=False)
        var = net.buffers[f"{name}.var"].astype(z.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + cfg.bn_eps)
    xhat = (z - mu) * inv
    return gamma * xhat + beta, (xhat, inv)


def _bn_backward(dy, gamma, bn_cache, train: bool):
    xhat, inv = bn_cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    if not train:
        return dy * (gamma * inv), dgamma, dbeta
    n = dy.shape[0]
    dz = (gamma * inv / n) * (n * dy - dbeta - xhat * dgamma)
    return dz, dgamma, dbeta


def forward(
    net: NetworkParams,
    planes: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> ForwardOut:
    """Run the network on a batch of (B, 5, 5) planes.

    Train mode normalizes with batch statistics, updates the running
    statistics in place and applies dropout (``rng`` required when dropout
    is active).  Eval mode is a pure function of the parameters and input.
    Arithmetic runs in ``compute_dtype`` whatever the storage dtype.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = net.config
    dt = np.dtype(cfg.compute_dtype)
    p = {k: v.astype(dt, copy=False) for k, v in net.params.items()}
    train = mode == "train"
    x = np.asarray(planes, dtype=dt)
    if x.shape[-2:] != (5, 5):
        raise ValueError(f"expected (..., 5, 5) planes, got {x.shape}")
    x = x.reshape(-1, 5, 5, 1)
    batch = x.shape[0]
    cache: dict = {"mode": mode, "batch": batch, "params": p}

    for name, pad in CONV_LAYERS:
        w = p[f"{name}.w"]
        if pad:
            x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        size = x.shape[1] - 2
        flat = x.reshape(batch, -1, x.shape[-1])
        cols = flat[:, _PATCHES[x.shape[1]], :].reshape(batch * size * size, -1)
        z = cols @ w.reshape(-1, w.shape[-1])
        y, bn_cache = _bn_forward(z, net, p, name, train)
        a = np.maximum(y, 0)
        cache[name] = {"cols": cols, "in_shape": x.shape, "pad": pad, "bn": bn_cache, "relu": y > 0}
        x = a.reshape(batch, size, size, -1)

    h = x.reshape(batch, -1)
    for name in FC_LAYERS:
        z = h @ p[f"{name}.w"]
        y, bn_cache = _bn_forward(z, net, p, name, train)
        a = np.maximum(y, 0)
        drop = None
        if train and cfg.dropout > 0:
            if rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            drop = (rng.random(a.shape) >= cfg.dropout).astype(dt) / dt.type(1.0 - cfg.dropout)
            a = a * drop
        cache[name] = {"input": h, "bn": bn_cache, "relu": y > 0, "drop": drop}
        h = a

    cache["features"] = h
    logits = h @ p["policy.w"] + p["policy.b"]
    value = (h @ p["value.w"] + p["value.b"])[:, 0]
    return ForwardOut(logits, value, cache)


def backward(
    net: NetworkParams,
    cache: dict,
    dlogits: Optional[np.ndarray] = None,
    dvalue: Optional[np.ndarray] = None,
) -> Gradients:
    """Gradients of ``sum(dlogits * logits) + sum(dvalue * value)``, in compute dtype.

    ``cache`` must come from :func:`forward` on the same batch.  Either
    output gradient may be omitted (treated as zero).
    """
    p = cache["params"]
    train = cache["mode"] == "train"
    batch = cache["batch"]
    dt = np.dtype(net.config.compute_dtype)
    h = cache["features"]
    if dlogits is None:
        dlogits = np.zeros((batch, net.config.actions), dtype=dt)
    if dvalue is None:
        dvalue = np.zeros(batch, dtype=dt)
    dlogits = np.asarray(dlogits, dtype=dt)
    dvalue = np.asarray(dvalue, dtype=dt).reshape(batch, 1)

    grads: Gradients = {
        "policy.w": h.T @ dlogits,
        "policy.b": dlogits.sum(axis=0),
        "value.w": h.T @ dvalue,
        "value.b": dvalue.sum(axis=0),
    }
    dh = dlogits @ p["policy.w"].T + dvalue @ p["value.w"].T

    for name in reversed(FC_LAYERS):
        c = cache[name]
        if c["drop"] is not None:
            dh = dh * c["drop"]
        dy = dh * c["relu"]
        dz, grads[f"{name}.gamma"], grads[f"{name}.beta"] = _bn_backward(
            dy, p[f"{name}.gamma"], c["bn"], train
        )
        grads[f"{name}.w"] = c["input"].T @ dz
        dh = dz @ p[f"{name}.w"].T

    dx = dh
    for name, pad in reversed(CONV_LAYERS):
        c = cache[name]
        w = p[f"{name}.w"]
        cout = w.shape[-1]
        dy = dx.reshape(-1, cout) * c["relu"]
        dz, grads[f"{name}.gamma"], grads[f"{name}.beta"] = _bn_backward(
            dy, p[f"{name}.gamma"], c["bn"], train
        )
        grads[f"{name}.w"] = (c["cols"].T @ dz).reshape(w.shape)
        if name == CONV_LAYERS[0][0]:
            break
        _, hp, wp, cin = c["in_shape"]
        size = hp - 2
        dcols = (dz @ w.reshape(-1, cout).T).reshape(batch, size, size, 3, 3, cin)
        dpad = np.zeros(c["in_shape"], dtype=dt)
        for i in range(3):
            for j in range(3):
                dpad[:, i:i + size, j:j + size, :] += dcols[:, :, :, i, j, :]
        dx = dpad[:, pad:hp - pad, pad:wp - pad, :] if pad else dpad

    return {k: grads[k] for k in net.params}


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"GMCK"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIII")  # magic, version, A, C, H, metadata length


@dataclass
class Checkpoint:
    net: NetworkParams
    metadata: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write the little-endian checkpoint layout.

    Header ``<4sHIIII`` (magic, version, A, C, H, metadata byte length), UTF-8
    JSON metadata (network config under ``"net"``), then every parameter and
    buffer as raw little-endian arrays in declaration order.
    """
    cfg = ckpt.net.config
    meta = dict(ckpt.metadata)
    meta["net"] = asdict(cfg)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    dt = np.dtype(cfg.dtype).newbyteorder("<")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, cfg.actions, cfg.channels, cfg.hidden, len(blob)))
        fh.write(blob)
        for name, shape in param_shapes(cfg):
            fh.write(np.ascontiguousarray(ckpt.net.params[name], dtype=dt).tobytes())
        for name, shape in buffer_shapes(cfg):
            fh.write(np.ascontiguousarray(ckpt.net.buffers[name], dtype=dt).tobytes())
    return path


def load_checkpoint(path, expected: Optional[NetConfig] = None) -> Checkpoint:
    """Read a checkpoint; ``expected`` pins A, C and H against the running config."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, A, C, H, meta_len = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = _HEADER.size
    try:
        meta = json.loads(data[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata") from exc
    offset += meta_len
    cfg = NetConfig(**meta.pop("net"))
    if (cfg.actions, cfg.channels, cfg.hidden) != (A, C, H):
        raise CheckpointError(f"{path}: header and metadata disagree")
    if expected is not None:
        want = (expected.actions, expected.channels, expected.hidden)
        if want != (A, C, H):
            raise CheckpointError(
                f"{path}: shape constants (A={A}, C={C}, H={H}) do not match "
                f"configuration (A={want[0]}, C={want[1]}, H={want[2]})"
            )
    dt = np.dtype(cfg.dtype).newbyteorder("<")
    arrays = {}
    for name, shape in param_shapes(cfg) + buffer_shapes(cfg):
        count = int(np.prod(shape))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated at {name}")
        arrays[name] = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(shape).astype(cfg.dtype)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    params = {name: arrays[name] for name, _ in param_shapes(cfg)}
    buffers = {name: arrays[name] for name, _ in buffer_shapes(cfg)}
    return Checkpoint(NetworkParams(cfg, params, buffers), meta)
