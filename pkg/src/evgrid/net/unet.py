"""Small encoder-decoder network with skip connections.

Three resolution levels: a stem convolution, two stride-2 downsampling
convolutions, and two transposed-convolution upsampling stages each followed
by a skip concatenation and a 3x3 convolution. All activations are leaky
ReLU except the last layer, which stays linear; dropout follows every
encoder/decoder block. The head is chosen by the output channel count:
3 for the softmax head, 2 for the quadratic evidence head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from evgrid.errors import ConfigError, EvgridError
from evgrid.net import tensor as T
from evgrid.net.tensor import Tensor

_DOWN_FACTOR = 4  # two stride-2 stages


@dataclass(frozen=True)
class UNetSpec:
    in_channels: int = 2
    out_channels: int = 2  # 2 = evidence head, 3 = softmax head
    base_channels: int = 8
    leaky_slope: float = 0.1
    dropout: float = 0.2

    def __post_init__(self) -> None:
        if self.out_channels not in (2, 3):
            raise ConfigError("out_channels must be 2 (evidence) or 3 (softmax)")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout rate must be in [0, 1)")


def _layer_shapes(spec: UNetSpec) -> dict[str, tuple[int, ...]]:
    c0 = spec.base_channels
    c1, c2 = 2 * c0, 4 * c0
    return {
        "stem_w": (c0, spec.in_channels, 3, 3), "stem_b": (c0,),
        "down1_w": (c1, c0, 3, 3), "down1_b": (c1,),
        "down2_w": (c2, c1, 3, 3), "down2_b": (c2,),
        "up1_w": (c2, c1, 2, 2), "up1_b": (c1,),
        "dec1_w": (c1, 2 * c1, 3, 3), "dec1_b": (c1,),
        "up2_w": (c1, c0, 2, 2), "up2_b": (c0,),
        "dec2_w": (spec.out_channels, 2 * c0, 3, 3), "dec2_b": (spec.out_channels,),
    }


def init_params(spec: UNetSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-style initialization; biases start at zero."""
    params = {}
    for name, shape in _layer_shapes(spec).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)
    return params


def forward(params: dict[str, np.ndarray], spec: UNetSpec, x: np.ndarray,
            dropout_rng: np.random.Generator | None = None) -> tuple[Tensor, dict[str, Tensor]]:
    """Run the network, building the tape.

    ``dropout_rng`` draws fresh dropout masks for this call; None disables
    dropout. Returns the pre-head output tensor and the parameter tensors
    (the leaves whose .grad a subsequent backward() fills).
    """
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ConfigError(f"input shape {x.shape} incompatible with {spec.in_channels} channels")
    if x.shape[2] % _DOWN_FACTOR or x.shape[3] % _DOWN_FACTOR:
        raise ConfigError(f"input side must be divisible by {_DOWN_FACTOR}, got {x.shape[2:]}")
    p = {name: Tensor(arr) for name, arr in params.items()}
    slope = spec.leaky_slope

    def drop(t: Tensor) -> Tensor:
        if dropout_rng is None:
            return t
        mask = T.make_dropout_mask(t.shape, spec.dropout, dropout_rng, dtype=t.data.dtype)
        return T.dropout(t, mask)

    xt = Tensor(x)
    h0 = drop(T.leaky_relu(T.conv2d(xt, p["stem_w"], p["stem_b"], stride=1, pad=1), slope))
    h1 = drop(T.leaky_relu(T.conv2d(h0, p["down1_w"], p["down1_b"], stride=2, pad=1), slope))
    h2 = drop(T.leaky_relu(T.conv2d(h1, p["down2_w"], p["down2_b"], stride=2, pad=1), slope))
    u1 = T.leaky_relu(T.conv_transpose2d(h2, p["up1_w"], p["up1_b"], stride=2), slope)
    d1 = drop(T.leaky_relu(T.conv2d(T.concat(u1, h1), p["dec1_w"], p["dec1_b"], stride=1, pad=1), slope))
    u2 = T.leaky_relu(T.conv_transpose2d(d1, p["up2_w"], p["up2_b"], stride=2), slope)
    out = T.conv2d(T.concat(u2, h0), p["dec2_w"], p["dec2_b"], stride=1, pad=1)
    return out, p


# ---------------------------------------------------------------------------
# checkpoint format: JSON header line + little-endian float32 payload
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: dict[str, np.ndarray], spec: UNetSpec,
                    seed: int = 0, epoch: int = 0) -> None:
    header = {
        "arch": {
            "in_channels": spec.in_channels,
            "out_channels": spec.out_channels,
            "base_channels": spec.base_channels,
            "leaky_slope": spec.leaky_slope,
            "dropout": spec.dropout,
        },
        "seed": seed,
        "epoch": epoch,
        "params": [{"name": k, "shape": list(params[k].shape)} for k in sorted(params)],
        "element_type": "f32",
    }
    payload = b"".join(np.ascontiguousarray(params[k], dtype="<f4").tobytes() for k in sorted(params))
    try:
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
            f.write(b"\n")
            f.write(payload)
    except OSError as exc:
        raise EvgridError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], UNetSpec, dict]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise EvgridError(f"cannot read checkpoint {path}: {exc}") from exc
    nl = blob.find(b"\n")
    header = json.loads(blob[:nl].decode())
    spec = UNetSpec(**header["arch"])
    params = {}
    offset = nl + 1
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        params[entry["name"]] = arr.astype(np.float32)
        offset += count * 4
    return params, spec, header
