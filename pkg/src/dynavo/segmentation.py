"""Label-mask ingestion and region extraction.

Masks are 8-bit single-channel PNGs whose pixel value is the class id
(PASCAL VOC indexing, person = 15, 0 = background), stored under a masks/
directory with the same filename as the RGB frame they belong to.
"""

from __future__ import annotations

import os
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

PERSON_CLASS_ID = 15

# PASCAL VOC class table (background + 20 classes)
VOC_CLASSES = {
    0: "background",
    1: "aeroplane",
    2: "bicycle",
    3: "bird",
    4: "boat",
    5: "bottle",
    6: "bus",
    7: "car",
    8: "cat",
    9: "chair",
    10: "cow",
    11: "diningtable",
    12: "dog",
    13: "horse",
    14: "motorbike",
    15: "person",
    16: "pottedplant",
    17: "sheep",
    18: "sofa",
    19: "train",
    20: "tvmonitor",
}


class MaskFormatError(ValueError):
    pass


class MaskDimensionError(ValueError):
    """Mask dimensions do not match the frame."""


@dataclass(frozen=True)
class LabelMask:
    labels: np.ndarray  # (H, W) uint8, 0 = background
    class_table: dict = field(default_factory=lambda: dict(VOC_CLASSES))

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise MaskFormatError("mask must be single channel")
        object.__setattr__(self, "labels", arr.astype(np.uint8))

    @property
    def shape(self) -> tuple:
        return self.labels.shape


@dataclass(frozen=True)
class SemanticRegion:
    """One 4-connected component of a single class."""

    class_id: int
    bbox: tuple  # (u_min, v_min, u_max, v_max), inclusive
    patch: np.ndarray  # boolean membership inside bbox
    area: int

    def contains(self, u: float, v: float) -> bool:
        ui, vi = int(round(float(u))), int(round(float(v)))
        u0, v0, u1, v1 = self.bbox
        if not (u0 <= ui <= u1 and v0 <= vi <= v1):
            return False
        return bool(self.patch[vi - v0, ui - u0])

    @property
    def pixels(self) -> set:
        vs, us = np.nonzero(self.patch)
        u0, v0 = self.bbox[0], self.bbox[1]
        return {(int(u + u0), int(v + v0)) for u, v in zip(us, vs)}


def point_in_region(region: SemanticRegion, p) -> bool:
    """True iff the integer-rounded pixel coordinate belongs to the region."""
    return region.contains(p[0], p[1])


_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def extract_regions(mask: LabelMask, min_region_area: int = 100) -> list[SemanticRegion]:
    """4-connected components per nonzero class, ordered by (class_id, area desc)."""
    regions = []
    for class_id in np.unique(mask.labels):
        if class_id == 0:
            continue
        labeled, count = ndimage.label(mask.labels == class_id, structure=_FOUR_CONN)
        slices = ndimage.find_objects(labeled)
        for comp, slc in enumerate(slices, start=1):
            patch = labeled[slc] == comp
            area = int(patch.sum())
            if area < min_region_area:
                continue
            v0, u0 = slc[0].start, slc[1].start
            v1, u1 = slc[0].stop - 1, slc[1].stop - 1
            regions.append(
                SemanticRegion(int(class_id), (u0, v0, u1, v1), patch, area)
            )
    regions.sort(key=lambda r: (r.class_id, -r.area))
    return regions


@dataclass(frozen=True)
class MaskRequest:
    timestamp: float
    frame_name: str  # RGB filename (basename), mask lookup key


@dataclass(frozen=True)
class MaskResult:
    request: MaskRequest
    mask: LabelMask | None

    @property
    def available(self) -> bool:
        return self.mask is not None


def load_mask(path: str, class_table: dict | None = None) -> LabelMask:
    img = Image.open(path)
    if img.mode == "P":
        img = img.convert("L")
    if img.mode != "L":
        raise MaskFormatError(f"{path}: expected 8-bit single-channel, got {img.mode!r}")
    return LabelMask(np.asarray(img), class_table or dict(VOC_CLASSES))


def load_class_table(path: str) -> dict:
    """Parse a class table file: lines "id name"."""
    table = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ident, name = line.split(maxsplit=1)
            table[int(ident)] = name
    return table


class DirectoryMaskProvider:
    """Serves masks from a directory keyed by frame filename.

    Requests run on a worker thread so the motion check can proceed while
    the mask is being fetched; `get` blocks until the result is ready.
    Absence of a mask file is a value (unavailable result), not an error.
    """

    def __init__(self, mask_dir: str, class_table: dict | None = None,
                 expected_shape: tuple | None = None):
        self.mask_dir = mask_dir
        self.class_table = class_table or dict(VOC_CLASSES)
        self.expected_shape = expected_shape
        self._executor = ThreadPoolExecutor(max_workers=1)

    def _load(self, request: MaskRequest) -> MaskResult:
        path = os.path.join(self.mask_dir, request.frame_name)
        if not os.path.exists(path):
            return MaskResult(request, None)
        mask = load_mask(path, self.class_table)
        if self.expected_shape is not None and mask.shape != tuple(self.expected_shape):
            raise MaskDimensionError(
                f"{path}: mask shape {mask.shape} != frame shape {tuple(self.expected_shape)}"
            )
        return MaskResult(request, mask)

    def request(self, request: MaskRequest) -> Future:
        """Issue an asynchronous fetch; resolve with .result()."""
        return self._executor.submit(self._load, request)

    def get(self, request: MaskRequest) -> MaskResult:
        return self.request(request).result()

    def close(self):
        self._executor.shutdown(wait=True)
