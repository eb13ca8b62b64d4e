from .curation import (
    CurationManifest,
    HashCode,
    ManifestEntry,
    brightness_filter,
    curate,
    dedup,
    hamming,
    phash,
    tile,
)
from .degradation import SamplePair, bicubic_resize, bicubic_upsample, degrade, degrade_noise, degrade_sr
from .depth import ingest_depth, normalize_depth, synthetic_field
from .sampling import BatchConfig, sample_batch

__all__ = [
    "BatchConfig",
    "CurationManifest",
    "HashCode",
    "ManifestEntry",
    "SamplePair",
    "bicubic_resize",
    "bicubic_upsample",
    "brightness_filter",
    "curate",
    "dedup",
    "degrade",
    "degrade_noise",
    "degrade_sr",
    "hamming",
    "ingest_depth",
    "normalize_depth",
    "phash",
    "sample_batch",
    "synthetic_field",
    "tile",
]
