"""Image decoding, resizing and the augmentation transforms.

Images are float64 arrays shaped (3, H, W) with values in [0, 1].
Geometric transforms use bilinear sampling with edge replication outside
the frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

# The thirteen catalog transforms, in catalog order.
CATALOG_KINDS = (
    "hflip", "vflip", "affine", "perspective", "rescale", "crop", "blur",
    "contrast", "intensity", "gaussian_filter", "exposure_filter",
    "translation", "shear",
)
# Additive Gaussian noise is named separately by the augmentation plans.
KINDS = CATALOG_KINDS + ("noise",)

# Default parameter ranges, (lo, hi) sampled uniformly from the transform's seed.
DEFAULT_PARAMS: dict[str, dict[str, tuple[float, float]]] = {
    "hflip": {},
    "vflip": {},
    "affine": {"rotation_deg": (-15.0, 15.0), "scale": (0.9, 1.1)},
    "perspective": {"jitter": (0.0, 0.1)},
    "rescale": {"scale": (0.8, 1.2)},
    "crop": {"area": (0.8, 1.0)},
    "blur": {"size": (2.0, 4.0)},
    "contrast": {"factor": (0.7, 1.3)},
    "intensity": {"delta": (-0.15, 0.15)},
    "gaussian_filter": {"sigma": (0.5, 1.2)},
    "exposure_filter": {"gamma": (0.7, 1.4)},
    "translation": {"dy": (-0.1, 0.1), "dx": (-0.1, 0.1)},
    "shear": {"shear": (-0.2, 0.2)},
    "noise": {"std": (0.02, 0.02)},
}

# Allowed closed intervals for every parameter value.
_VALID = {
    "rotation_deg": (-180.0, 180.0), "scale": (1e-3, math.inf), "jitter": (0.0, 0.49),
    "area": (1e-6, 1.0), "size": (1.0, math.inf), "factor": (0.0, math.inf),
    "delta": (-1.0, 1.0), "sigma": (0.0, math.inf), "gamma": (1e-3, math.inf),
    "dy": (-1.0, 1.0), "dx": (-1.0, 1.0), "shear": (-2.0, 2.0), "std": (0.0, math.inf),
}


class ImageDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        for name, val in self.params.items():
            if name not in merged:
                raise ValueError(f"{self.kind}: unknown parameter {name!r}")
            merged[name] = val
        norm = {}
        for name, val in merged.items():
            lo, hi = (float(val), float(val)) if np.isscalar(val) else (float(val[0]), float(val[1]))
            vlo, vhi = _VALID[name]
            if not (vlo <= lo <= hi <= vhi):
                raise ValueError(f"{self.kind}: parameter {name}={val!r} outside [{vlo}, {vhi}] or reversed")
            norm[name] = (lo, hi)
        object.__setattr__(self, "params", norm)
        object.__setattr__(self, "seed", int(self.seed))

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.seed))

    def sample(self) -> dict[str, float]:
        """Concrete parameter values drawn from the ranges with this spec's seed."""
        gen = np.random.default_rng([self.seed, KINDS.index(self.kind)])
        return {name: float(gen.uniform(lo, hi)) if hi > lo else lo
                for name, (lo, hi) in sorted(self.params.items())}

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": {k: list(v) for k, v in sorted(self.params.items())},
                "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "TransformSpec":
        return cls(d["kind"], {k: tuple(v) for k, v in d.get("params", {}).items()}, d.get("seed", 0))

    def with_seed(self, seed: int) -> "TransformSpec":
        return TransformSpec(self.kind, self.params, seed)


def transform_catalog() -> list[TransformSpec]:
    return [TransformSpec(k) for k in CATALOG_KINDS]


# ------------------------------------------------------------------ decode

def load_and_resize(path, side: int = 224) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.width == 0 or im.height == 0:
                raise ImageDecodeError(f"{path}: zero-dimension image")
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"{path}: cannot decode image ({e})") from e
    if rgb.size != (side, side):
        rgb = rgb.resize((side, side), Image.BILINEAR)
    return from_uint8(np.asarray(rgb))


def from_uint8(hwc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(hwc.transpose(2, 0, 1), dtype=np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(img: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), "RGB").save(path, format="PNG")


def resize(img: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of a (3, H, W) array to side x side."""
    _, h, w = img.shape
    if (h, w) == (side, side):
        return img.copy()
    ys = (np.arange(side) + 0.5) * h / side - 0.5
    xs = (np.arange(side) + 0.5) * w / side - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _sample(img, yy, xx)


# -------------------------------------------------------------- transforms

def _sample(img, yy, xx):
    return np.stack([ndimage.map_coordinates(c, [yy, xx], order=1, mode="nearest") for c in img])


def _warp_linear(img, a: np.ndarray):
    """Resample with output->input map ``p_in = c + a @ (p_out - c)``."""
    _, h, w = img.shape
    c = np.array([(h - 1) / 2, (w - 1) / 2])
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    d = np.stack([yy.ravel() - c[0], xx.ravel() - c[1]])
    src = a @ d + c[:, None]
    return _sample(img, src[0].reshape(h, w), src[1].reshape(h, w))


def _homography(src, dst):
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(rows, dtype=float))
    return vt[-1].reshape(3, 3) / vt[-1, -1]


def _perspective(img, jitter, gen):
    _, h, w = img.shape
    # pixel-edge corners stay distinct even for one-pixel-wide images
    corners = np.array([[-0.5, -0.5], [w - 0.5, -0.5], [w - 0.5, h - 0.5], [-0.5, h - 0.5]])
    moved = corners + gen.uniform(-jitter, jitter, size=(4, 2)) * np.array([w, h])
    hmat = _homography(corners, moved)  # output corner -> input corner
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    pts = hmat @ np.stack([xx.ravel(), yy.ravel(), np.ones(h * w)])
    sx, sy = pts[0] / pts[2], pts[1] / pts[2]
    return _sample(img, sy.reshape(h, w), sx.reshape(h, w))


def _translate(img, dy, dx):
    _, h, w = img.shape
    sy, sx = int(round(dy * h)), int(round(dx * w))
    if sy == 0 and sx == 0:
        return img.copy()
    py, px = abs(sy), abs(sx)
    padded = np.pad(img, ((0, 0), (py, py), (px, px)), mode="edge")
    y0, x0 = py - sy, px - sx
    return padded[:, y0:y0 + h, x0:x0 + w].copy()


def _crop(img, area, gen):
    _, h, w = img.shape
    frac = math.sqrt(area)
    ch, cw = max(1, int(round(frac * h))), max(1, int(round(frac * w)))
    y0 = int(gen.integers(0, h - ch + 1))
    x0 = int(gen.integers(0, w - cw + 1))
    window = img[:, y0:y0 + ch, x0:x0 + cw]
    ys = (np.arange(h) + 0.5) * ch / h - 0.5
    xs = (np.arange(w) + 0.5) * cw / w - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _sample(window, yy, xx)


def apply_transform(img: np.ndarray, t: TransformSpec) -> np.ndarray:
    if img.ndim != 3 or img.shape[0] != 3 or min(img.shape) < 1:
        raise ValueError(f"expected a (3, H, W) image, got shape {img.shape}")
    p = t.sample()
    gen = np.random.default_rng([t.seed, KINDS.index(t.kind), 1])
    k = t.kind
    if k == "hflip":
        out = img[:, :, ::-1].copy()
    elif k == "vflip":
        out = img[:, ::-1, :].copy()
    elif k == "affine":
        th = math.radians(p["rotation_deg"])
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        out = _warp_linear(img, rot / p["scale"])
    elif k == "perspective":
        out = _perspective(img, p["jitter"], gen)
    elif k == "rescale":
        out = _warp_linear(img, np.eye(2) / p["scale"])
    elif k == "crop":
        out = _crop(img, p["area"], gen)
    elif k == "blur":
        size = int(round(p["size"]))
        out = np.stack([ndimage.uniform_filter(c, size=size, mode="nearest") for c in img])
    elif k == "contrast":
        mean = img.mean()
        out = mean + p["factor"] * (img - mean)
    elif k == "intensity":
        out = img + p["delta"]
    elif k == "gaussian_filter":
        out = np.stack([ndimage.gaussian_filter(c, sigma=p["sigma"], mode="nearest") for c in img])
    elif k == "exposure_filter":
        out = np.power(np.clip(img, 0.0, 1.0), p["gamma"])
    elif k == "translation":
        out = _translate(img, p["dy"], p["dx"])
    elif k == "shear":
        out = _warp_linear(img, np.array([[1.0, 0.0], [p["shear"], 1.0]]))
    else:  # noise
        out = img + gen.normal(0.0, p["std"], size=img.shape)
    return np.clip(out, 0.0, 1.0)
