"""The three-block convolutional multi-label network.

conv(3x3, stride 2, same) -> ReLU -> maxpool(2x2, stride 2, same), three
times, then FC1 with ReLU and FC2 with a sigmoid per label. The default
ArchConfig is the full 3x224x224 network; smaller input sides and widths
give desk-scale variants with the same topology.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import NUM_CLASSES
from . import ops


@dataclass(frozen=True)
class ArchConfig:
    input_side: int = 224
    widths: tuple[int, int, int] = (32, 64, 128)
    fc_units: int = 1024
    kernel: int = 3
    conv_stride: int = 2
    n_classes: int = NUM_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def feature_sides(self) -> list[int]:
        """Spatial side after each conv and pool, in order."""
        sides, s = [], self.input_side
        for _ in self.widths:
            s = ops.same_padding(s, self.kernel, self.conv_stride)[0]
            sides.append(s)
            s = ops.same_padding(s, 2, 2)[0]
            sides.append(s)
        return sides

    @property
    def flat_features(self) -> int:
        return self.widths[-1] * self.feature_sides()[-1] ** 2

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        cin = 3
        for i, f in enumerate(self.widths, 1):
            shapes[f"conv{i}.w"] = (f, cin, self.kernel, self.kernel)
            shapes[f"conv{i}.b"] = (f,)
            cin = f
        shapes["fc1.w"] = (self.flat_features, self.fc_units)
        shapes["fc1.b"] = (self.fc_units,)
        shapes["fc2.w"] = (self.fc_units, self.n_classes)
        shapes["fc2.b"] = (self.n_classes,)
        return shapes

    def to_json(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


# Smallest network used for finite-difference checks.
TINY = ArchConfig(input_side=8, widths=(2, 2, 2), fc_units=8)


class CnnModel:
    def __init__(self, arch: ArchConfig, params: dict[str, np.ndarray]):
        shapes = arch.param_shapes()
        if set(params) != set(shapes):
            raise ValueError(f"parameter names {sorted(params)} do not match architecture")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.arch = arch
        self.params = {name: np.asarray(params[name], dtype=np.float64) for name in shapes}

    @classmethod
    def initialize(cls, arch: ArchConfig, seed: int = 0, fc2_scale: float = 0.1) -> "CnnModel":
        """He-normal weights for ReLU layers, a smaller normal for FC2, zero biases."""
        gen = np.random.default_rng(seed)
        params = {}
        for name, shape in arch.param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
                continue
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            std = np.sqrt(2.0 / fan_in) if name != "fc2.w" else fc2_scale * np.sqrt(1.0 / fan_in)
            params[name] = gen.normal(0.0, std, size=shape)
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch: ArchConfig) -> "CnnModel":
        return cls(arch, {n: np.zeros(s) for n, s in arch.param_shapes().items()})

    def logits(self, x, keep: bool = False):
        x = np.asarray(x, dtype=np.float64)
        a = self.arch
        if x.ndim != 4 or x.shape[1:] != (3, a.input_side, a.input_side):
            raise ValueError(f"expected input (N, 3, {a.input_side}, {a.input_side}), got {x.shape}")
        p = self.params
        caches = []
        h = x
        for i in range(1, len(a.widths) + 1):
            z, cc = ops.conv2d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"], a.conv_stride)
            r = ops.relu(z)
            h, pc = ops.maxpool_forward(r)
            caches.append((cc, z, pc))
        flat = h.reshape(h.shape[0], -1)
        z1 = ops.dense_forward(flat, p["fc1.w"], p["fc1.b"])
        a1 = ops.relu(z1)
        z2 = ops.dense_forward(a1, p["fc2.w"], p["fc2.b"])
        if keep:
            return z2, (caches, h.shape, flat, z1, a1)
        return z2

    def forward(self, x) -> np.ndarray:
        return ops.sigmoid(self.logits(x))

    __call__ = forward

    def feature_shapes(self, x) -> list[tuple[int, ...]]:
        """Per-sample shapes after every layer, for architecture checks."""
        p, a = self.params, self.arch
        shapes = []
        h = np.asarray(x, dtype=np.float64)
        for i in range(1, len(a.widths) + 1):
            h, _ = ops.conv2d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"], a.conv_stride)
            shapes.append(h.shape[1:])
            h, _ = ops.maxpool_forward(ops.relu(h))
            shapes.append(h.shape[1:])
        z1 = ops.dense_forward(h.reshape(h.shape[0], -1), p["fc1.w"], p["fc1.b"])
        shapes.append(z1.shape[1:])
        z2 = ops.dense_forward(ops.relu(z1), p["fc2.w"], p["fc2.b"])
        shapes.append(z2.shape[1:])
        return shapes

    def loss_and_grads(self, x, targets):
        """Mean sigmoid cross-entropy and its exact gradient for every parameter."""
        y = np.asarray(targets, dtype=np.float64)
        z2, (caches, pooled_shape, flat, z1, a1) = self.logits(x, keep=True)
        loss = ops.sigmoid_cross_entropy_with_logits(z2, y)
        p = self.params
        grads = {}
        dz2 = (ops.sigmoid(z2) - y) / z2.shape[0]
        da1, grads["fc2.w"], grads["fc2.b"] = ops.dense_backward(dz2, a1, p["fc2.w"])
        dz1 = ops.relu_backward(da1, z1)
        dflat, grads["fc1.w"], grads["fc1.b"] = ops.dense_backward(dz1, flat, p["fc1.w"])
        dh = dflat.reshape(pooled_shape)
        for i in range(len(self.arch.widths), 0, -1):
            cc, z, pc = caches[i - 1]
            dr = ops.maxpool_backward(dh, pc)
            dz = ops.relu_backward(dr, z)
            dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = ops.conv2d_backward(dz, cc)
        return loss, {name: grads[name] for name in p}

    def copy(self) -> "CnnModel":
        return CnnModel(self.arch, {k: v.copy() for k, v in self.params.items()})


def forward(model: CnnModel, batch) -> np.ndarray:
    return model.forward(batch)


def backward(model: CnnModel, batch, targets) -> dict[str, np.ndarray]:
    return model.loss_and_grads(batch, targets)[1]
