"""Energy predictors: the per-feature linear model and two high-level baselines.

The feature-based model estimates the decoding energy of a bitstream as the
sum over all features of count times specific energy (joules per occurrence).
The two baselines estimate energy from high-level stream properties only:

* HL1 from resolution, frame count and file size, with a power-law term in
  bytes per pixel;
* HL2 additionally from the rate of intra frames, as a bilinear form scaled
  by total pixels.

File sizes are in bytes and energies in joules throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .taxonomy import Category, Codec, FeatureSet, FeatureVector, build_feature_set


@dataclass(frozen=True)
class SpecificEnergies:
    """Fitted joules-per-occurrence values, aligned with a feature set."""

    feature_set: FeatureSet
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.shape != (len(self.feature_set),):
            raise ValueError(
                f"expected {len(self.feature_set)} values, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("specific energies must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_dict(cls, feature_set: FeatureSet, mapping, default: float = 0.0):
        values = np.full(len(feature_set), default, dtype=float)
        for name, value in mapping.items():
            values[feature_set.index_of(name)] = float(value)
        return cls(feature_set, values)

    def __getitem__(self, feature) -> float:
        return float(self.values[self.feature_set.index_of(feature)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.feature_set.names, self.values)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpecificEnergies):
            return NotImplemented
        return self.feature_set == other.feature_set and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True)
class HighLevelInfo:
    """High-level properties of one bitstream.

    pixels_per_frame is luma width times height; intra_rate is the number of
    intra frames divided by the total number of frames.
    """

    pixels_per_frame: float
    frames: int
    file_size_bytes: float
    intra_rate: float

    def __post_init__(self):
        if not (self.pixels_per_frame > 0 and self.frames > 0 and self.file_size_bytes > 0):
            raise ValueError("pixels_per_frame, frames and file_size_bytes must be > 0")
        if not 0.0 <= self.intra_rate <= 1.0:
            raise ValueError(f"intra_rate must be in [0, 1], got {self.intra_rate}")


@dataclass(frozen=True)
class HL1Params:
    """Offset/pixel/power-law parameters of the first high-level model.

    Estimated energy: base + S*N*(per_pixel + rate_coeff*(B/(S*N))**rate_power)
    with S pixels per frame, N frames and B bytes.
    """

    base_joules: float
    per_pixel_joules: float
    rate_coeff: float
    rate_power: float

    def __post_init__(self):
        if not self.rate_power > 0:
            raise ValueError("rate_power must be > 0")
        if self.rate_coeff < 0:
            raise ValueError("rate_coeff must be >= 0")


@dataclass(frozen=True)
class HL2Params:
    """Coefficients of the intra-rate/bitrate bilinear high-level model.

    Estimated energy:
    (c_ib*p*B/(S*N) + c_i*p + c_b*B/(S*N) + c_0) * N * S, where p is the
    intra-frame rate; fields in regressor order (c_ib, c_i, c_b, c_0).
    """

    intra_bytes_coeff: float
    intra_coeff: float
    bytes_coeff: float
    base_coeff: float

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.intra_bytes_coeff, self.intra_coeff, self.bytes_coeff, self.base_coeff)


def _require_same_set(energies: SpecificEnergies, vector: FeatureVector) -> None:
    if energies.feature_set != vector.feature_set:
        raise ValueError(
            "feature set mismatch between specific energies "
            f"({energies.feature_set.codec.value}) and vector "
            f"({vector.feature_set.codec.value})"
        )
    if len(vector.counts) != len(energies.values):
        raise ValueError(
            f"vector length {len(vector.counts)} does not match "
            f"feature set size {len(energies.values)}"
        )


def predict_feature_model(energies: SpecificEnergies, vector: FeatureVector) -> float:
    """Estimated decoding energy: sum of count times specific energy.

    Uses exact (compensated) summation; pel counts reach 1e8 while offset
    terms sit near 1e-1, so naive accumulation would lose digits.
    """
    _require_same_set(energies, vector)
    return math.fsum(energies.values * vector.counts)


def category_breakdown(
    energies: SpecificEnergies, vector: FeatureVector
) -> dict[Category, float]:
    """Estimated energy split by feature category.

    All six categories are present in the result (zero when the codec has no
    such features); the values sum to :func:`predict_feature_model`.
    """
    _require_same_set(energies, vector)
    terms: dict[Category, list[float]] = {cat: [] for cat in Category}
    products = energies.values * vector.counts
    for i, fid in enumerate(energies.feature_set):
        terms[fid.category].append(products[i])
    return {cat: math.fsum(parts) for cat, parts in terms.items()}


def predict_hl1(params: HL1Params, info: HighLevelInfo) -> float:
    """First high-level baseline: offset plus per-pixel power law in bytes/pixel."""
    pixels = info.pixels_per_frame * info.frames
    bytes_per_pixel = info.file_size_bytes / pixels
    return params.base_joules + pixels * (
        params.per_pixel_joules
        + params.rate_coeff * bytes_per_pixel ** params.rate_power
    )


def predict_hl2(params: HL2Params, info: HighLevelInfo) -> float:
    """Second high-level baseline: bilinear in intra rate and bytes/pixel."""
    pixels = info.pixels_per_frame * info.frames
    bytes_per_pixel = info.file_size_bytes / pixels
    per_pixel = (
        params.intra_bytes_coeff * info.intra_rate * bytes_per_pixel
        + params.intra_coeff * info.intra_rate
        + params.bytes_coeff * bytes_per_pixel
        + params.base_coeff
    )
    return per_pixel * pixels


# ---------------------------------------------------------------------------
# Parameter files (JSON)

ModelParams = SpecificEnergies | HL1Params | HL2Params


def params_to_json(params, codec: Codec, indent: int | None = 2, extra: dict | None = None) -> str:
    """Serialize fitted parameters of any of the three models."""
    if isinstance(params, SpecificEnergies):
        doc = {
            "model": "feature",
            "codec": codec.value,
            "specific_energies": params.as_dict(),
        }
    elif isinstance(params, HL1Params):
        doc = {
            "model": "hl1",
            "codec": codec.value,
            "base_joules": params.base_joules,
            "per_pixel_joules": params.per_pixel_joules,
            "rate_coeff": params.rate_coeff,
            "rate_power": params.rate_power,
        }
    elif isinstance(params, HL2Params):
        doc = {
            "model": "hl2",
            "codec": codec.value,
            "intra_bytes_coeff": params.intra_bytes_coeff,
            "intra_coeff": params.intra_coeff,
            "bytes_coeff": params.bytes_coeff,
            "base_coeff": params.base_coeff,
        }
    else:
        raise TypeError(f"unsupported parameter object {type(params).__name__}")
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=indent)


def params_from_json(text: str):
    """Parse a parameter file; returns (model_kind, codec, params)."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or "model" not in doc or "codec" not in doc:
        raise ValueError("parameter file must carry 'model' and 'codec' fields")
    kind = doc["model"]
    codec = Codec.from_name(doc["codec"])
    if kind == "feature":
        fs = build_feature_set(codec)
        mapping = doc["specific_energies"]
        missing = set(fs.names) - set(mapping)
        if missing:
            raise ValueError(f"parameter file missing features: {sorted(missing)}")
        return kind, codec, SpecificEnergies.from_dict(fs, mapping)
    if kind == "hl1":
        return kind, codec, HL1Params(
            base_joules=float(doc["base_joules"]),
            per_pixel_joules=float(doc["per_pixel_joules"]),
            rate_coeff=float(doc["rate_coeff"]),
            rate_power=float(doc["rate_power"]),
        )
    if kind == "hl2":
        return kind, codec, HL2Params(
            intra_bytes_coeff=float(doc["intra_bytes_coeff"]),
            intra_coeff=float(doc["intra_coeff"]),
            bytes_coeff=float(doc["bytes_coeff"]),
            base_coeff=float(doc["base_coeff"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_params(params, codec: Codec, path, extra: dict | None = None) -> None:
    Path(path).write_text(params_to_json(params, codec, extra=extra) + "\n", encoding="utf-8")


def load_params(path):
    return params_from_json(Path(path).read_text(encoding="utf-8"))
