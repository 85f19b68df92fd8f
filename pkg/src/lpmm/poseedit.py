"""Semantic parameter arithmetic: blendshapes, interpolation, base pose.

All operations are linear maps on R^k, so order of application never
matters and every edit has an exact inverse.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError
from .model import ParamVector

BLENDSHAPE_FORMAT = "lpmm-blendshape"
BLENDSHAPE_VERSION = 1

_NAME_RE = re.compile(r"^[A-Za-z0-9_\-. ]{1,64}$")


@dataclass(frozen=True, eq=False)
class Blendshape:
    """Named parameter offset applied by weighted vector addition."""

    name: str
    offset: ParamVector
    description: str = ""

    def __post_init__(self):
        if not self.name or not _NAME_RE.match(self.name):
            raise FormatError(f"invalid blendshape name {self.name!r}", code="bad_blendshape_name")


@dataclass
class BlendshapeLibrary:
    """In-memory blendshape collection bound to one model fingerprint.

    All entries share a single degree k (enforced on add).
    """

    model_fingerprint: str
    entries: dict[str, Blendshape] = field(default_factory=dict)

    @property
    def k(self) -> int | None:
        for bs in self.entries.values():
            return bs.offset.k
        return None

    def add(self, blendshape: Blendshape) -> None:
        if blendshape.name in self.entries:
            raise DomainError(f"blendshape {blendshape.name!r} already exists", code="duplicate_blendshape")
        k = self.k
        if k is not None and blendshape.offset.k != k:
            raise DomainError(
                f"blendshape degree {blendshape.offset.k} does not match library degree {k}",
                code="degree_mismatch",
            )
        self.entries[blendshape.name] = blendshape

    def get(self, name: str) -> Blendshape:
        try:
            return self.entries[name]
        except KeyError:
            raise DomainError(f"no blendshape named {name!r}", code="blendshape_not_found") from None

    def delete(self, name: str) -> None:
        if name not in self.entries:
            raise DomainError(f"no blendshape named {name!r}", code="blendshape_not_found")
        del self.entries[name]

    def names(self) -> list[str]:
        return sorted(self.entries)


def apply_blendshapes(base: ParamVector, weighted: list[tuple[Blendshape, float]]) -> ParamVector:
    """base + sum_i weight_i * offset_i, summed in the given order."""
    out = base.values.copy()
    for bs, weight in weighted:
        if bs.offset.k != base.k:
            raise DomainError(
                f"blendshape {bs.name!r} has degree {bs.offset.k}, base has {base.k}",
                code="degree_mismatch",
            )
        out += float(weight) * bs.offset.values
    return ParamVector(out)


def scale_from_base(p: ParamVector, alpha: float) -> ParamVector:
    """Scale the pose away from (or beyond) the base pose: alpha * p."""
    return ParamVector(float(alpha) * p.values)


def interpolate_params(p_from: ParamVector, p_to: ParamVector, alpha: float) -> ParamVector:
    """(1 - alpha) * p_from + alpha * p_to with alpha restricted to [0, 1]."""
    if p_from.k != p_to.k:
        raise DomainError(
            f"degree mismatch: {p_from.k} vs {p_to.k}", code="degree_mismatch"
        )
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1]", code="invalid_alpha")
    return ParamVector((1.0 - alpha) * p_from.values + alpha * p_to.values)


def blendshape_to_json_obj(bs: Blendshape, model_fingerprint: str) -> dict:
    return {
        "format": BLENDSHAPE_FORMAT,
        "version": BLENDSHAPE_VERSION,
        "name": bs.name,
        "k": bs.offset.k,
        "offset": bs.offset.values.tolist(),
        "model_fingerprint": model_fingerprint,
        "description": bs.description,
    }


def serialize_blendshape(bs: Blendshape, model_fingerprint: str) -> bytes:
    return json.dumps(blendshape_to_json_obj(bs, model_fingerprint)).encode("utf-8")


def deserialize_blendshape(data: bytes, expected_fingerprint: str | None = None) -> Blendshape:
    """Parse one blendshape file, optionally checking the model binding."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"blendshape file is not valid JSON: {exc}", code="malformed_blendshape") from exc
    if not isinstance(obj, dict) or obj.get("format") != BLENDSHAPE_FORMAT:
        raise FormatError("not a blendshape file", code="malformed_blendshape")
    if obj.get("version") != BLENDSHAPE_VERSION:
        raise FormatError(
            f"unsupported blendshape version {obj.get('version')!r}", code="version_mismatch"
        )
    try:
        name = str(obj["name"])
        k = int(obj["k"])
        offset = ParamVector(obj["offset"])
        fingerprint = str(obj["model_fingerprint"])
        description = str(obj.get("description", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"blendshape file missing or malformed field: {exc}", code="malformed_blendshape") from exc
    if offset.k != k:
        raise FormatError("offset length does not match declared k", code="malformed_blendshape")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise DomainError(
            "blendshape built for different model", code="fingerprint_mismatch"
        )
    return Blendshape(name=name, offset=offset, description=description)


def save_blendshape(bs: Blendshape, model_fingerprint: str, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_blendshape(bs, model_fingerprint))


def load_blendshape(path, expected_fingerprint: str | None = None) -> Blendshape:
    with open(path, "rb") as f:
        return deserialize_blendshape(f.read(), expected_fingerprint)
