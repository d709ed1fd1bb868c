"""Synthetic CT-like phantoms and additive pixel-domain noise.

Images are (H, W) float32 arrays in HU. Noisy images decompose exactly:
``noisy == clean + noise`` holds bit-for-bit because the stored noise field
is recomputed as ``noisy - clean`` after the float32 rounding of the sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatchError

HU_MIN = -1024.0
HU_MAX = 3071.0
HU_SPAN = HU_MAX - HU_MIN


def as_image(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"image must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf values")
    return arr


def hu_to_unit(image: np.ndarray) -> np.ndarray:
    """Affine map of the fixed HU range onto [0, 1]."""
    return ((image - HU_MIN) / HU_SPAN).astype(np.float32)


def unit_to_hu(image: np.ndarray) -> np.ndarray:
    return (image * HU_SPAN + HU_MIN).astype(np.float32)


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]  # (row, col) as fractions of the canvas
    semi_axes: tuple[float, float]  # (row, col) fractions
    rotation: float = 0.0  # radians
    hu: float = 0.0
    additive: bool = False

    def validate(self, lesion: bool = False) -> None:
        if self.semi_axes[0] <= 0 or self.semi_axes[1] <= 0:
            raise ValueError(f"semi-axes must be positive, got {self.semi_axes}")
        if lesion:
            if abs(self.hu) > 20:
                raise ValueError(
                    f"lesion contrast must satisfy |dHU| <= 20, got {self.hu}"
                )
        elif not (HU_MIN <= self.hu <= HU_MAX):
            raise ValueError(f"ellipse HU {self.hu} outside [{HU_MIN}, {HU_MAX}]")


@dataclass(frozen=True)
class PhantomSpec:
    height: int = 128
    width: int = 128
    background_hu: float = 0.0
    ellipses: tuple[Ellipse, ...] = ()
    lesions: tuple[Ellipse, ...] = ()  # hu field holds the additive contrast
    jitter: float = 0.0  # fractional perturbation of centers/axes per seed

    def validate(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("canvas must be at least 1x1")
        if not (HU_MIN <= self.background_hu <= HU_MAX):
            raise ValueError(
                f"background HU {self.background_hu} outside [{HU_MIN}, {HU_MAX}]"
            )
        if not (0.0 <= self.jitter < 0.5):
            raise ValueError(f"jitter must be in [0, 0.5), got {self.jitter}")
        for e in self.ellipses:
            e.validate()
        for e in self.lesions:
            e.validate(lesion=True)

    def to_dict(self) -> dict:
        def edict(e: Ellipse) -> dict:
            return {
                "center": list(e.center),
                "semi_axes": list(e.semi_axes),
                "rotation": e.rotation,
                "hu": e.hu,
                "additive": e.additive,
            }

        return {
            "height": self.height,
            "width": self.width,
            "background_hu": self.background_hu,
            "ellipses": [edict(e) for e in self.ellipses],
            "lesions": [edict(e) for e in self.lesions],
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        def efrom(ed: dict) -> Ellipse:
            return Ellipse(
                center=tuple(ed["center"]),
                semi_axes=tuple(ed["semi_axes"]),
                rotation=float(ed.get("rotation", 0.0)),
                hu=float(ed.get("hu", 0.0)),
                additive=bool(ed.get("additive", False)),
            )

        spec = cls(
            height=int(d.get("height", 128)),
            width=int(d.get("width", 128)),
            background_hu=float(d.get("background_hu", 0.0)),
            ellipses=tuple(efrom(e) for e in d.get("ellipses", [])),
            lesions=tuple(efrom(e) for e in d.get("lesions", [])),
            jitter=float(d.get("jitter", 0.0)),
        )
        spec.validate()
        return spec


def _paint(canvas: np.ndarray, e: Ellipse, hu: float, additive: bool) -> None:
    h, w = canvas.shape
    rows = (np.arange(h, dtype=np.float64) + 0.5) / h
    cols = (np.arange(w, dtype=np.float64) + 0.5) / w
    dr = rows[:, None] - e.center[0]
    dc = cols[None, :] - e.center[1]
    cos_t, sin_t = math.cos(e.rotation), math.sin(e.rotation)
    u = dr * cos_t + dc * sin_t
    v = -dr * sin_t + dc * cos_t
    inside = (u / e.semi_axes[0]) ** 2 + (v / e.semi_axes[1]) ** 2 <= 1.0
    if additive:
        canvas[inside] += np.float32(hu)
    else:
        canvas[inside] = np.float32(hu)


def generate_phantom(spec: PhantomSpec, seed: int = 0) -> np.ndarray:
    """Rasterize a phantom; pixel membership decided at pixel centers.

    Later ellipses overwrite earlier ones unless marked additive. With a
    nonzero spec.jitter, centers and axes are perturbed deterministically
    per seed so one spec can yield a varied dataset.
    """
    spec.validate()
    canvas = np.full(
        (spec.height, spec.width), spec.background_hu, dtype=np.float32
    )
    rng = np.random.default_rng(seed)
    for e in spec.ellipses:
        e = _jittered(e, spec.jitter, rng)
        _paint(canvas, e, e.hu, e.additive)
    for e in spec.lesions:
        e = _jittered(e, spec.jitter, rng)
        _paint(canvas, e, e.hu, additive=True)
    return canvas


def _jittered(e: Ellipse, jitter: float, rng: np.random.Generator) -> Ellipse:
    if jitter == 0.0:
        return e
    shifts = rng.uniform(-jitter, jitter, size=4)
    return replace(
        e,
        center=(e.center[0] + shifts[0], e.center[1] + shifts[1]),
        semi_axes=(
            max(e.semi_axes[0] * (1 + shifts[2]), 1e-4),
            max(e.semi_axes[1] * (1 + shifts[3]), 1e-4),
        ),
    )


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0
    kernel: np.ndarray | None = None  # normalized to unit L2 on construction

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.kernel is not None:
            k = np.asarray(self.kernel, dtype=np.float64)
            if k.ndim != 2:
                raise ValueError("correlation kernel must be 2-d")
            norm = float(np.sqrt((k * k).sum()))
            if norm == 0:
                raise ValueError("correlation kernel must be nonzero")
            object.__setattr__(self, "kernel", k / norm)


@dataclass
class PairedSample:
    clean: np.ndarray
    noisy: np.ndarray
    noise: np.ndarray
    dose_factor: float = 1.0

    def __post_init__(self):
        if self.dose_factor <= 0:
            raise ValueError(f"dose_factor must be positive, got {self.dose_factor}")
        if not (self.clean.shape == self.noisy.shape == self.noise.shape):
            raise ShapeMismatchError("paired sample images must share a shape")


def _correlate_same(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(field, ((ph, kh - 1 - ph), (pw, kw - 1 - pw)))
    out = np.zeros_like(field)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + field.shape[0], j : j + field.shape[1]]
    return out


def add_noise(clean: np.ndarray, spec: NoiseSpec) -> PairedSample:
    """Seeded Gaussian white noise, optionally smoothed by the unit-L2
    correlation kernel (which preserves the expected variance), scaled to
    sigma and added in the pixel domain."""
    clean = as_image(clean)
    rng = np.random.default_rng(spec.seed)
    eps = rng.standard_normal(clean.shape)
    if spec.kernel is not None:
        eps = _correlate_same(eps, spec.kernel)
    eps = (eps * spec.sigma).astype(np.float32)
    noisy = (clean + eps).astype(np.float32)
    noise = (noisy - clean).astype(np.float32)
    return PairedSample(clean=clean, noisy=noisy, noise=noise, dose_factor=1.0)


def rescale_noise(sample: PairedSample, factor: float) -> PairedSample:
    """Scale the stored noise component; supports the dose-tier ablation
    (factors 0.5 / 2 / 4 relative to the base sample)."""
    if factor <= 0:
        raise ValueError(f"noise scale factor must be positive, got {factor}")
    noisy = (sample.clean + np.float32(factor) * sample.noise).astype(np.float32)
    noise = (noisy - sample.clean).astype(np.float32)
    return PairedSample(
        clean=sample.clean,
        noisy=noisy,
        noise=noise,
        dose_factor=sample.dose_factor * factor,
    )


def window_to_bytes(
    image: np.ndarray, window_low: float, window_high: float
) -> np.ndarray:
    """Linear HU -> 8-bit display map, clamped, round half away from zero."""
    if not window_low < window_high:
        raise ValueError(
            f"degenerate display window [{window_low}, {window_high}]"
        )
    image = as_image(image)
    scaled = (image.astype(np.float64) - window_low) / (
        window_high - window_low
    ) * 255.0
    return np.clip(np.floor(scaled + 0.5), 0.0, 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# canonical desk-scale phantom profile
#
# A body-plate layout with pre-registered ROIs so noise/contrast metrics are
# reproducible: a flat background patch, a high-contrast disk with an edge
# ROI straddling its boundary, and a low-contrast lesion with fg/bg ROIs.


@dataclass(frozen=True)
class PhantomProfile:
    spec: PhantomSpec
    flat_roi: tuple[int, int, int, int]  # (row0, col0, height, width)
    edge_roi: tuple[int, int, int, int]
    lesion_fg_roi: tuple[int, int, int, int]
    lesion_bg_roi: tuple[int, int, int, int]


def default_profile(size: int = 128) -> PhantomProfile:
    s = size / 128.0

    def r(row0, col0, h, w):
        return (
            int(round(row0 * s)),
            int(round(col0 * s)),
            max(int(round(h * s)), 2),
            max(int(round(w * s)), 2),
        )

    spec = PhantomSpec(
        height=size,
        width=size,
        background_hu=0.0,
        ellipses=(
            Ellipse(center=(0.38, 0.32), semi_axes=(0.17, 0.15), hu=90.0),
            Ellipse(center=(0.70, 0.62), semi_axes=(0.12, 0.19), rotation=0.5, hu=55.0),
            Ellipse(center=(0.25, 0.72), semi_axes=(0.07, 0.07), hu=-65.0),
        ),
        lesions=(
            Ellipse(center=(0.70, 0.62), semi_axes=(0.035, 0.035), hu=15.0),
        ),
    )
    return PhantomProfile(
        spec=spec,
        flat_roi=r(100, 8, 20, 24),
        edge_roi=r(20, 34, 15, 14),
        lesion_fg_roi=r(87, 77, 6, 6),
        lesion_bg_roi=r(78, 86, 8, 8),
    )


def dataset_spec(size: int = 128) -> PhantomSpec:
    """Randomizable variant of the default profile for dataset building."""
    return replace(default_profile(size).spec, jitter=0.04)
