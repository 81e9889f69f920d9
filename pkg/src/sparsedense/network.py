"""Translation-equivariant restoration U-Net built from the autodiff layers.

21 convolution-type layers: three downsampling blocks of two 3x3 convolutions
plus one stride-2 convolution, a bottleneck of two convolutions around a
channel-dropout layer, three upsampling blocks of one stride-2 transposed
convolution plus two convolutions (skip features concatenated right after the
upsampling), and a final 1x1 output convolution. Every convolution is followed
by a ReLU except the output layer, and every convolution pads circularly, so
in eval mode the network commutes exactly with translations by multiples of
the overall stride 2*2*2 = 8.
"""

from dataclasses import dataclass

import numpy as np

from . import io as sdio
from .autodiff import (
    ConvSpec,
    Tensor,
    as_tensor,
    channel_dropout,
    concat_channels,
    conv2d_circular,
    conv_transpose2d_circular,
    relu,
)

DEPTH = 3
OVERALL_STRIDE = 2**DEPTH


@dataclass(frozen=True)
class UNetConfig:
    base_channels: int = 32
    kernel: int = 3
    stride: int = 2
    dropout_p: float = 0.5
    in_channels: int = 1
    out_channels: int = 1
    depth: int = DEPTH  # fixed: three resolution levels, overall stride 8

    def __post_init__(self):
        if self.depth != DEPTH:
            raise ValueError(f"depth is fixed at {DEPTH}")
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")

    def widths(self):
        c = self.base_channels
        return [c, 2 * c, 4 * c, 8 * c]


def layer_specs(cfg: UNetConfig) -> dict:
    """Ordered name -> ConvSpec map for all 21 convolution-type layers."""
    c1, c2, c3, c4 = cfg.widths()
    k = cfg.kernel
    specs = {}
    for lvl, width in zip((1, 2, 3), (c1, c2, c3)):
        cin = cfg.in_channels if lvl == 1 else width  # previous down already doubled
        specs[f"enc{lvl}.conv1"] = ConvSpec(cin, width, k)
        specs[f"enc{lvl}.conv2"] = ConvSpec(width, width, k)
        specs[f"enc{lvl}.down"] = ConvSpec(width, 2 * width, k, stride=cfg.stride)
    specs["bottleneck.conv1"] = ConvSpec(c4, c4, k)
    specs["bottleneck.conv2"] = ConvSpec(c4, c4, k)
    for lvl, (cin, cout) in zip((3, 2, 1), ((c4, c3), (c3, c2), (c2, c1))):
        specs[f"dec{lvl}.up"] = ConvSpec(cin, cout, k, stride=cfg.stride, transposed=True)
        specs[f"dec{lvl}.conv1"] = ConvSpec(2 * cout, cout, k)
        specs[f"dec{lvl}.conv2"] = ConvSpec(cout, cout, k)
    specs["out"] = ConvSpec(c1, cfg.out_channels, 1)
    return specs


@dataclass
class Model:
    """Named parameters plus the topology they belong to."""

    cfg: UNetConfig
    params: dict
    specs: dict
    mode: str = "eval"
    dtype: str = "float32"

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def parameters(self):
        return list(self.params.values())

    def state(self) -> dict:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state(self, state) -> None:
        for name, t in self.params.items():
            arr = np.asarray(state[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()

    def topology(self) -> dict:
        return {
            "arch": "restoration-unet",
            "base_channels": self.cfg.base_channels,
            "kernel": self.cfg.kernel,
            "stride": self.cfg.stride,
            "dropout_p": self.cfg.dropout_p,
            "in_channels": self.cfg.in_channels,
            "out_channels": self.cfg.out_channels,
            "depth": self.cfg.depth,
            "layers": [{"name": n, "in": s.in_channels, "out": s.out_channels,
                        "kernel": s.kernel, "stride": s.stride,
                        "transposed": s.transposed} for n, s in self.specs.items()],
        }


def build_unet(cfg: UNetConfig, seed=0, dtype="float32") -> Model:
    """Construct the network with seeded uniform(+-sqrt(1/fan_in)) weights.

    fan_in counts input channels times kernel area; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    np_dtype = np.dtype(dtype)
    specs = layer_specs(cfg)
    params = {}
    for name, spec in specs.items():
        fan_in = spec.in_channels * spec.kernel * spec.kernel
        bound = np.sqrt(1.0 / fan_in)
        w = rng.uniform(-bound, bound, size=spec.weight_shape).astype(np_dtype)
        params[f"{name}.w"] = Tensor(w, requires_grad=True)
        params[f"{name}.b"] = Tensor(np.zeros(spec.out_channels, dtype=np_dtype),
                                     requires_grad=True)
    return Model(cfg=cfg, params=params, specs=specs, dtype=dtype)


def count_parameters(model: Model) -> int:
    return sum(t.data.size for t in model.params.values())


def _layer(model, name, h, training=False, rng=None):
    spec = model.specs[name]
    w = model.params[f"{name}.w"]
    b = model.params[f"{name}.b"]
    if spec.transposed:
        return conv_transpose2d_circular(h, w, b, spec)
    return conv2d_circular(h, w, b, spec)


def forward(model: Model, x, rng=None) -> Tensor:
    """Run the network on a [B, C, H, W] batch; H and W must be divisible by 8.

    In train mode ``rng`` drives the bottleneck channel dropout; eval mode is
    deterministic.
    """
    x = as_tensor(x)
    if x.data.dtype != np.dtype(model.dtype):
        x = Tensor(x.data.astype(model.dtype), requires_grad=x.requires_grad)
    if x.data.ndim != 4:
        raise ValueError(f"expected a [B, C, H, W] batch, got shape {x.data.shape}")
    _, _, height, width = x.data.shape
    if height % OVERALL_STRIDE or width % OVERALL_STRIDE:
        raise ValueError(
            f"spatial dims {height}x{width} must be divisible by {OVERALL_STRIDE} "
            f"(three stride-2 downsampling stages)")
    training = model.mode == "train"

    h = x
    skips = []
    for lvl in (1, 2, 3):
        h = relu(_layer(model, f"enc{lvl}.conv1", h))
        h = relu(_layer(model, f"enc{lvl}.conv2", h))
        skips.append(h)
        h = relu(_layer(model, f"enc{lvl}.down", h))

    h = relu(_layer(model, "bottleneck.conv1", h))
    h = channel_dropout(h, model.cfg.dropout_p, training=training, rng=rng)
    h = relu(_layer(model, "bottleneck.conv2", h))

    for lvl in (3, 2, 1):
        h = relu(_layer(model, f"dec{lvl}.up", h))
        h = concat_channels(h, skips[lvl - 1])
        h = relu(_layer(model, f"dec{lvl}.conv1", h))
        h = relu(_layer(model, f"dec{lvl}.conv2", h))

    return _layer(model, "out", h)  # no ReLU: negative residuals stay representable


def check_equivariance(model: Model, n, shifts, trials=1, seed=0) -> dict:
    """Measure max relative error of forward-vs-shift commutation per shift.

    Returns {shift: max over trials of max |f(Tx) - T(f(x))| / max(1e-8,
    max |f(x)|)}. The contract only promises near-zero error for shifts whose
    components are multiples of 8; other shifts are measured, not judged.
    """
    if model.mode != "eval":
        raise ValueError("equivariance is defined for eval-mode (deterministic) models")
    rng = np.random.default_rng(seed)
    errors = {tuple(s): 0.0 for s in shifts}
    for _ in range(trials):
        x = rng.random((1, model.cfg.in_channels, n, n)).astype(model.dtype)
        base = forward(model, Tensor(x)).data
        scale = max(1e-8, float(np.max(np.abs(base))))
        for a, b in shifts:
            xs = np.roll(x, shift=(-b, -a), axis=(2, 3))
            out = forward(model, Tensor(xs)).data
            err = float(np.max(np.abs(out - np.roll(base, shift=(-b, -a), axis=(2, 3)))))
            errors[(a, b)] = max(errors[(a, b)], err / scale)
    return errors


def save_model(path, model: Model, config_text="") -> None:
    """Write the model as an SDCK checkpoint (parameters stored as float32)."""
    sdio.write_checkpoint(path, {n: t.data for n, t in model.params.items()},
                          model.topology(), config_text)


def load_model(path):
    """Rebuild a model from an SDCK checkpoint; returns (model, config_text)."""
    params, topo, config_text = sdio.read_checkpoint(path)
    cfg = UNetConfig(base_channels=topo["base_channels"], kernel=topo["kernel"],
                     stride=topo["stride"], dropout_p=topo["dropout_p"],
                     in_channels=topo["in_channels"], out_channels=topo["out_channels"])
    model = build_unet(cfg, seed=0, dtype="float32")
    model.load_state(params)
    return model.eval(), config_text
