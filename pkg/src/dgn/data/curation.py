"""Dataset curation: perceptual hashing, near-duplicate removal, dark-image
filtering and fixed-size patch tiling.

Grayscale is ``(299 R + 587 G + 114 B) / 1000`` on the 0-255 scale, evaluated
with integer weights so constant images produce exact means.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import InvalidArgument
from .io import list_images, read_rgb

HASH_SIDE = 8
DEFAULT_DELTA = 10
DEFAULT_BRIGHTNESS_THRESHOLD = 40.0
DEFAULT_PATCH = (1535, 1151)

KEPT = "kept"
DROPPED_DUPLICATE = "dropped_duplicate"
DROPPED_DARK = "dropped_dark"


@dataclass(frozen=True, order=True)
class HashCode:
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < 2**64:
            raise InvalidArgument(f"hash out of 64-bit range: {self.bits}")

    def __str__(self):
        return f"{self.bits:016x}"

    def __int__(self):
        return self.bits

    @classmethod
    def from_hex(cls, text):
        return cls(int(text, 16))


def _as_array(image):
    if isinstance(image, (str, Path)):
        return read_rgb(image)
    return np.asarray(image)


def grayscale(image) -> np.ndarray:
    arr = _as_array(image).astype(np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        return (299.0 * arr[..., 0] + 587.0 * arr[..., 1] + 114.0 * arr[..., 2]) / 1000.0
    raise InvalidArgument(f"unsupported image shape {arr.shape}")


def mean_brightness(image) -> float:
    g = grayscale(image)
    return math.fsum(g.ravel()) / g.size


def _area_matrix(n, out):
    """Rows average the input samples covering each of ``out`` equal bins."""
    m = np.zeros((out, n))
    width = Fraction(n, out)
    for i in range(out):
        lo, hi = i * width, (i + 1) * width
        for j in range(math.floor(lo), min(n, math.ceil(hi))):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                m[i, j] = float(overlap / width)
    return m


def area_resize(gray, out_h, out_w):
    h, w = gray.shape
    return _area_matrix(h, out_h) @ gray @ _area_matrix(w, out_w).T


def phash(image, normalize_brightness=False) -> HashCode:
    """64-bit average hash of an 8x8 area-averaged grayscale thumbnail.

    Bit ``i`` (row-major, most significant first) is set when thumbnail
    pixel ``i`` strictly exceeds the thumbnail mean.
    """
    g = grayscale(image)
    if g.size == 0:
        raise InvalidArgument("image has zero area")
    if normalize_brightness:
        g = g - g.mean() + 128.0
    # rounding absorbs last-ulp noise from the resize so ties stay ties
    thumb = np.round(area_resize(g, HASH_SIDE, HASH_SIDE), 9)
    mean = math.fsum(thumb.ravel()) / thumb.size
    bits = 0
    for i, v in enumerate(thumb.ravel()):
        if v > mean:
            bits |= 1 << (HASH_SIDE * HASH_SIDE - 1 - i)
    return HashCode(bits)


def hamming(h1, h2) -> int:
    return (int(h1) ^ int(h2)).bit_count()


def brightness_filter(image, threshold=DEFAULT_BRIGHTNESS_THRESHOLD) -> str:
    return DROPPED_DARK if mean_brightness(image) < threshold else KEPT


def image_size(image) -> Tuple[int, int]:
    """``(width, height)`` of an array, PIL image or ``(width, height)`` pair."""
    if isinstance(image, tuple) and len(image) == 2:
        return image
    if hasattr(image, "size") and isinstance(image.size, tuple):
        return image.size
    arr = np.asarray(image)
    return arr.shape[1], arr.shape[0]


def tile(image, patch_w, patch_h) -> List[Tuple[int, int, int, int]]:
    """Row-major non-overlapping ``(x, y, w, h)`` rects anchored at the origin."""
    if patch_w <= 0 or patch_h <= 0:
        raise InvalidArgument("patch dims must be positive")
    width, height = image_size(image)
    return [
        (c * patch_w, r * patch_h, patch_w, patch_h)
        for r in range(height // patch_h)
        for c in range(width // patch_w)
    ]


@dataclass
class ManifestEntry:
    image_id: str
    category: str
    hash: HashCode
    mean_brightness: float
    verdict: str = KEPT
    duplicate_of: Optional[str] = None
    patches: list = field(default_factory=list)
    width: Optional[int] = None
    height: Optional[int] = None

    def to_record(self):
        return {
            "image_id": self.image_id,
            "category": self.category,
            "hash": str(self.hash),
            "mean_brightness": self.mean_brightness,
            "verdict": self.verdict,
            "duplicate_of": self.duplicate_of,
            "patches": [list(p) for p in self.patches],
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            image_id=rec["image_id"],
            category=rec["category"],
            hash=HashCode.from_hex(rec["hash"]),
            mean_brightness=rec["mean_brightness"],
            verdict=rec["verdict"],
            duplicate_of=rec.get("duplicate_of"),
            patches=[tuple(p) for p in rec.get("patches", [])],
            width=rec.get("width"),
            height=rec.get("height"),
        )


@dataclass
class CurationManifest:
    entries: List[ManifestEntry]

    def kept(self):
        return [e for e in self.entries if e.verdict == KEPT]

    def by_id(self):
        return {e.image_id: e for e in self.entries}

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_record()) + "\n")

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls([ManifestEntry.from_record(json.loads(line)) for line in fh if line.strip()])


def dedup(entries, delta=DEFAULT_DELTA) -> CurationManifest:
    """Drop near-duplicates within each category.

    Entries are scanned in ``image_id`` order; an entry within Hamming
    distance ``< delta`` of an already-kept entry of the same category is
    marked as a duplicate of the first such entry. Entries that are not
    currently ``kept`` pass through untouched.
    """
    out = []
    kept_by_cat = {}
    for e in sorted(entries, key=lambda e: e.image_id):
        if e.verdict != KEPT:
            out.append(e)
            continue
        reps = kept_by_cat.setdefault(e.category, [])
        match = next((r for r in reps if hamming(r.hash, e.hash) < delta), None)
        if match is None:
            reps.append(e)
            out.append(e)
        else:
            out.append(replace(e, verdict=DROPPED_DUPLICATE, duplicate_of=match.image_id, patches=[]))
    return CurationManifest(out)


def read_categories(path):
    """Two-column CSV ``image_id,category`` (a header row is skipped if present)."""
    cats = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[:2] == ["image_id", "category"]:
                continue
            cats[row[0].strip()] = row[1].strip()
    return cats


def image_id_for(path, root):
    return Path(path).relative_to(root).with_suffix("").as_posix()


def curate(
    input_dir,
    categories=None,
    delta=DEFAULT_DELTA,
    brightness_threshold=DEFAULT_BRIGHTNESS_THRESHOLD,
    normalize_brightness=False,
    patch_size=DEFAULT_PATCH,
) -> CurationManifest:
    """Hash, filter, deduplicate and tile every image under ``input_dir``.

    Dark images are rejected before deduplication so that every duplicate
    points at an entry that survives both filters. Images without a category
    mapping fall back to their parent directory name.
    """
    root = Path(input_dir)
    categories = categories or {}
    entries = []
    for path in list_images(root):
        arr = read_rgb(path)
        image_id = image_id_for(path, root)
        category = categories.get(image_id, path.parent.name if path.parent != root else "")
        entries.append(
            ManifestEntry(
                image_id=image_id,
                category=category,
                hash=phash(arr, normalize_brightness),
                mean_brightness=mean_brightness(arr),
                verdict=brightness_filter(arr, brightness_threshold),
                width=arr.shape[1],
                height=arr.shape[0],
            )
        )
    manifest = dedup(entries, delta)
    pw, ph = patch_size
    for e in manifest.entries:
        if e.verdict == KEPT:
            e.patches = tile((e.width, e.height), pw, ph)
    return manifest
