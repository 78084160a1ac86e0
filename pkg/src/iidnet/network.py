"""Encoder / three-decoder network for intrinsic image decomposition.

One shared encoder feeds three heads: a reflectance decoder (3-channel),
a gray-shading decoder (1-channel), and an illuminant-color decoder that
reduces the deepest features to a single RGB gain vector. The image
decoders mirror the encoder with concatenated skip connections.

Layer inventory per encoder stage i (channel count K_i from the schedule):
two 3x3 conv + BN + ReLU blocks at K_i, then a bare 3x3 stride-2 conv to
K_{i+1}. Decoder stages run in reverse: a bare 4x4 stride-2 transposed conv
down to K_i, concatenation with the encoder stage's pre-downsampling
features, then two 3x3 conv + BN + ReLU blocks at K_i. Each image decoder
ends in a 1x1 conv + ReLU head; the illuminant decoder is two 3x3 conv +
BN + ReLU blocks at a fixed width, global average pooling, and a 1x1 conv +
ReLU down to 3 channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Param, Tensor
from .checkpoint import load_arrays, save_arrays
from .errors import CheckpointError, StructuralError
from .image import ColorVec, GrayMap, LinearImage, apply_color, gray_to_rgb, hadamard


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters.

    `channels` has one entry per resolution level (depth + 1 entries); the
    input spatial size must be divisible by 2**depth.
    """

    input_size: tuple[int, int] = (64, 64)
    depth: int = 3
    channels: tuple[int, ...] = (32, 64, 128, 256)
    illum_channels: int = 64

    def __post_init__(self):
        if self.depth < 1:
            raise StructuralError(f"NetConfig: depth must be >= 1, got {self.depth}")
        if len(self.channels) != self.depth + 1:
            raise StructuralError(
                f"NetConfig: need {self.depth + 1} channel entries for depth {self.depth}, "
                f"got {len(self.channels)}"
            )
        if any(c < 1 for c in self.channels) or self.illum_channels < 1:
            raise StructuralError("NetConfig: channel counts must be positive")
        h, w = self.input_size
        stride_total = 2 ** self.depth
        if h % stride_total or w % stride_total:
            raise StructuralError(
                f"NetConfig: input {h}x{w} not divisible by 2^depth = {stride_total}"
            )
        object.__setattr__(self, "input_size", (int(h), int(w)))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    @classmethod
    def desk(cls) -> "NetConfig":
        """Small preset that trains in minutes on a CPU."""
        return cls()

    @classmethod
    def full(cls) -> "NetConfig":
        """Full-scale preset for 256px patches (GPU-class budgets)."""
        return cls(input_size=(256, 256), depth=4, channels=(64, 128, 256, 512, 1024))

    def to_json(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "depth": self.depth,
            "channels": list(self.channels),
            "illum_channels": self.illum_channels,
        }

    @classmethod
    def from_json(cls, d: dict) -> "NetConfig":
        return cls(
            input_size=tuple(d["input_size"]),
            depth=int(d["depth"]),
            channels=tuple(d["channels"]),
            illum_channels=int(d["illum_channels"]),
        )


@dataclass
class Decomposition:
    """Network outputs for one image: reflectance, gray shading, illuminant."""

    reflectance: LinearImage
    gray_shading: GrayMap
    illuminant: ColorVec


class NetParams:
    """All trainable parameters plus batch-norm running statistics."""

    def __init__(self, config: NetConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Param] = {}
        self.bn: dict[str, BatchNormState] = {}

    def add_conv(self, name: str, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 transposed: bool = False):
        fan_in = c_in * k * k
        shape = (c_in, c_out, k, k) if transposed else (c_out, c_in, k, k)
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(self.dtype)
        self.params[name + ".w"] = Param(w, name + ".w")
        self.params[name + ".b"] = Param(np.zeros(c_out, dtype=self.dtype), name + ".b")

    def add_bn(self, name: str, channels: int):
        self.params[name + ".gamma"] = Param(np.ones(channels, dtype=self.dtype), name + ".gamma")
        self.params[name + ".beta"] = Param(np.zeros(channels, dtype=self.dtype), name + ".beta")
        self.bn[name] = BatchNormState.for_channels(channels, dtype=self.dtype)

    def trainable(self) -> list[Param]:
        return list(self.params.values())

    def total_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


def _decoder_stages(head: str, config: NetConfig):
    for i in reversed(range(config.depth)):
        yield i, f"{head}.up{i}", f"{head}.s{i}a", f"{head}.s{i}b"


def init_params(config: NetConfig, seed: int, dtype=np.float32) -> NetParams:
    """He-initialized parameters: conv weights ~ N(0, 2 / fan_in), zero biases,
    unit BN gains."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    net = NetParams(config, dtype)
    ch = config.channels

    c_in = 3
    for i in range(config.depth + 1):
        net.add_conv(f"enc.s{i}a", c_in, ch[i], 3, rng)
        net.add_bn(f"enc.s{i}a.bn", ch[i])
        net.add_conv(f"enc.s{i}b", ch[i], ch[i], 3, rng)
        net.add_bn(f"enc.s{i}b.bn", ch[i])
        if i < config.depth:
            net.add_conv(f"enc.down{i}", ch[i], ch[i + 1], 3, rng)
            c_in = ch[i + 1]

    for head, out_ch in (("reflect", 3), ("shade", 1)):
        for i, up, a, b_ in _decoder_stages(head, config):
            net.add_conv(up, ch[i + 1], ch[i], 4, rng, transposed=True)
            net.add_conv(a, 2 * ch[i], ch[i], 3, rng)
            net.add_bn(a + ".bn", ch[i])
            net.add_conv(b_, ch[i], ch[i], 3, rng)
            net.add_bn(b_ + ".bn", ch[i])
        net.add_conv(f"{head}.head", ch[0], out_ch, 1, rng)

    ic = config.illum_channels
    net.add_conv("illum.c0", ch[config.depth], ic, 3, rng)
    net.add_bn("illum.c0.bn", ic)
    net.add_conv("illum.c1", ic, ic, 3, rng)
    net.add_bn("illum.c1.bn", ic)
    net.add_conv("illum.head", ic, 3, rng=rng, k=1)
    return net


def _conv_bn_relu(net: NetParams, name: str, x: Tensor, training: bool) -> Tensor:
    x = ad.conv2d(x, net.params[name + ".w"], net.params[name + ".b"], stride=1, padding=1)
    x = ad.batch_norm(x, net.params[name + ".bn.gamma"], net.params[name + ".bn.beta"],
                      net.bn[name + ".bn"], training)
    return ad.relu(x)


def forward(net: NetParams, x: Tensor, training: bool) -> tuple[Tensor, Tensor, Tensor]:
    """Run the network on a (B, 3, H, W) batch.

    Returns (reflectance (B,3,H,W), gray shading (B,1,H,W), illuminant (B,3)),
    all ReLU-terminated and hence nonnegative.
    """
    cfg = net.config
    b, c, h, w = x.data.shape
    if c != 3:
        raise StructuralError(f"forward: expected 3 input channels, got {c}")
    stride_total = 2 ** cfg.depth
    if h % stride_total or w % stride_total:
        raise StructuralError(f"forward: {h}x{w} input not divisible by 2^depth = {stride_total}")

    skips = []
    for i in range(cfg.depth + 1):
        x = _conv_bn_relu(net, f"enc.s{i}a", x, training)
        x = _conv_bn_relu(net, f"enc.s{i}b", x, training)
        if i < cfg.depth:
            skips.append(x)
            x = ad.conv2d(x, net.params[f"enc.down{i}.w"], net.params[f"enc.down{i}.b"],
                          stride=2, padding=1)
    deepest = x

    outputs = {}
    for head in ("reflect", "shade"):
        y = deepest
        for i, up, a, b_ in _decoder_stages(head, cfg):
            y = ad.conv_transpose2d(y, net.params[up + ".w"], net.params[up + ".b"],
                                    stride=2, padding=1)
            y = ad.concat_channels(skips[i], y)
            y = _conv_bn_relu(net, a, y, training)
            y = _conv_bn_relu(net, b_, y, training)
        y = ad.conv2d(y, net.params[f"{head}.head.w"], net.params[f"{head}.head.b"],
                      stride=1, padding=0)
        outputs[head] = ad.relu(y)

    z = _conv_bn_relu(net, "illum.c0", deepest, training)
    z = _conv_bn_relu(net, "illum.c1", z, training)
    z = ad.global_avg_pool(z)
    z = ad.conv2d(z, net.params["illum.head.w"], net.params["illum.head.b"], stride=1, padding=0)
    illum = ad.reshape(ad.relu(z), (b, 3))

    return outputs["reflect"], outputs["shade"], illum


# ---------------------------------------------------------------------------
# image-level API


def images_to_batch(images: list[LinearImage], dtype=np.float32) -> Tensor:
    arr = np.stack([img.data.transpose(2, 0, 1) for img in images]).astype(dtype)
    return Tensor(arr)


def decompose(net: NetParams, images: LinearImage | list[LinearImage]) -> Decomposition | list[Decomposition]:
    """Eval-mode decomposition of one image or a batch of equal-size images."""
    single = isinstance(images, LinearImage)
    batch = [images] if single else list(images)
    x = images_to_batch(batch, dtype=net.dtype)
    r, s, c = forward(net, x, training=False)
    out = []
    for i in range(len(batch)):
        out.append(Decomposition(
            reflectance=LinearImage(r.data[i].transpose(1, 2, 0).astype(np.float64)),
            gray_shading=GrayMap(s.data[i, 0].astype(np.float64)),
            illuminant=ColorVec(*(float(v) for v in c.data[i])),
        ))
    return out[0] if single else out


def reconstruct(d: Decomposition) -> LinearImage:
    """Recompose the input estimate: colored shading times reflectance."""
    shading_rgb = apply_color(gray_to_rgb(d.gray_shading), d.illuminant)
    return hadamard(shading_rgb, d.reflectance)


def reconstruct_tensors(r: Tensor, s: Tensor, c: Tensor) -> Tensor:
    """Tensor form of the recomposition for (B,3,H,W), (B,1,H,W), (B,3)."""
    c4 = ad.reshape(c, (c.data.shape[0], 3, 1, 1))
    return ad.mul(ad.mul(s, c4), r)


# ---------------------------------------------------------------------------
# checkpointing


def save(net: NetParams, path: str, extra: dict[str, np.ndarray] | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    meta = {"config": net.config.to_json(), "dtype": net.dtype.name}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    for name, p in net.params.items():
        arrays["param:" + name] = p.data
    for name, st in net.bn.items():
        arrays["bnstat:" + name + ".mean"] = st.mean
        arrays["bnstat:" + name + ".var"] = st.var
    if extra:
        for name, arr in extra.items():
            arrays["extra:" + name] = arr
    save_arrays(path, arrays)


def load(path: str) -> tuple[NetParams, dict[str, np.ndarray]]:
    """Load a checkpoint; returns the params plus any extra arrays saved with it."""
    arrays = load_arrays(path)
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing metadata entry")
    meta = json.loads(bytes(arrays["meta"]).decode("utf-8"))
    config = NetConfig.from_json(meta["config"])
    net = init_params(config, seed=0, dtype=np.dtype(meta["dtype"]))
    for name, p in net.params.items():
        key = "param:" + name
        if key not in arrays:
            raise CheckpointError(f"{path}: missing parameter {name!r}")
        if arrays[key].shape != p.data.shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {arrays[key].shape}, expected {p.data.shape}"
            )
        p.data = arrays[key].astype(net.dtype, copy=True)
    for name, st in net.bn.items():
        st.mean = arrays["bnstat:" + name + ".mean"].copy()
        st.var = arrays["bnstat:" + name + ".var"].copy()
    extra = {k[len("extra:"):]: v for k, v in arrays.items() if k.startswith("extra:")}
    return net, extra
