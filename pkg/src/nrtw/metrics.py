"""Image-quality measures: RMSE, flat-ROI STD, CNR, and an edge-gradient
resolution proxy. All statistics are population (ddof=0) and computed on
float data in HU, never on display bytes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCnrError, ShapeMismatchError
from .simulate import as_image


@dataclass(frozen=True)
class ROI:
    row0: int
    col0: int
    height: int
    width: int
    label: str = "roi"

    def validate(self, image: np.ndarray) -> None:
        if self.height * self.width < 4:
            raise ValueError(f"ROI {self.label!r} must cover at least 4 pixels")
        if (
            self.row0 < 0
            or self.col0 < 0
            or self.row0 + self.height > image.shape[0]
            or self.col0 + self.width > image.shape[1]
        ):
            raise ValueError(
                f"ROI {self.label!r} {self.as_tuple()} exceeds image bounds "
                f"{image.shape}"
            )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.row0, self.col0, self.height, self.width)

    def pixels(self, image: np.ndarray) -> np.ndarray:
        self.validate(image)
        return image[
            self.row0 : self.row0 + self.height,
            self.col0 : self.col0 + self.width,
        ]

    def overlaps(self, other: "ROI") -> bool:
        return not (
            self.row0 + self.height <= other.row0
            or other.row0 + other.height <= self.row0
            or self.col0 + self.width <= other.col0
            or other.col0 + other.width <= self.col0
        )

    def to_dict(self) -> dict:
        return {
            "row0": self.row0,
            "col0": self.col0,
            "height": self.height,
            "width": self.width,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ROI":
        return cls(
            row0=int(d["row0"]),
            col0=int(d["col0"]),
            height=int(d["height"]),
            width=int(d["width"]),
            label=str(d.get("label", "roi")),
        )


@dataclass
class MetricsRecord:
    rmse: float | None = None
    cnr: float | None = None
    roi_std: dict = field(default_factory=dict)
    resolution_proxy: float | None = None

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "cnr": self.cnr,
            "roi_std": dict(self.roi_std),
            "resolution_proxy": self.resolution_proxy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(
            rmse=d.get("rmse"),
            cnr=d.get("cnr"),
            roi_std=dict(d.get("roi_std", {})),
            resolution_proxy=d.get("resolution_proxy"),
        )


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"rmse operands differ in shape: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt((d * d).mean()))


def roi_std(image: np.ndarray, roi: ROI) -> float:
    values = roi.pixels(as_image(image)).astype(np.float64)
    return float(values.std())


def cnr(image: np.ndarray, foreground: ROI, background: ROI) -> float:
    """2|S - S_b| / (sigma + sigma_b) over disjoint ROIs."""
    image = as_image(image)
    if foreground.overlaps(background):
        raise ValueError(
            f"CNR ROIs {foreground.label!r} and {background.label!r} overlap"
        )
    fg = foreground.pixels(image).astype(np.float64)
    bg = background.pixels(image).astype(np.float64)
    denom = fg.std() + bg.std()
    if denom == 0.0:
        raise DegenerateCnrError(
            "both ROIs are constant; CNR denominator is zero"
        )
    return float(2.0 * abs(fg.mean() - bg.mean()) / denom)


def resolution_proxy(image: np.ndarray, edge_roi: ROI) -> float:
    """Mean central-difference gradient magnitude (HU/pixel) over an ROI
    placed across a known edge. The ROI needs a 1-pixel margin inside the
    image so central differences stay in bounds."""
    image = as_image(image)
    edge_roi.validate(image)
    if (
        edge_roi.row0 < 1
        or edge_roi.col0 < 1
        or edge_roi.row0 + edge_roi.height > image.shape[0] - 1
        or edge_roi.col0 + edge_roi.width > image.shape[1] - 1
    ):
        raise ValueError(
            f"edge ROI {edge_roi.label!r} needs a 1-pixel margin for central "
            "differences"
        )
    img = image.astype(np.float64)
    r0, c0 = edge_roi.row0, edge_roi.col0
    r1, c1 = r0 + edge_roi.height, c0 + edge_roi.width
    gr = (img[r0 + 1 : r1 + 1, c0:c1] - img[r0 - 1 : r1 - 1, c0:c1]) / 2.0
    gc = (img[r0:r1, c0 + 1 : c1 + 1] - img[r0:r1, c0 - 1 : c1 - 1]) / 2.0
    return float(np.sqrt(gr * gr + gc * gc).mean())
