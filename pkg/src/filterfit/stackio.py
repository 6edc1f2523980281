"""Versioned JSON serialization of filter stacks.

Numbers are written with Python's shortest round-trip float repr, so a
stack survives write/read bit-exactly. Constrained geometry entries
(band offsets, semi-axes) are stored in the unconstrained raw
parameterization by default; a "units" flag allows supplying them as
natural positive values instead, in which case they are converted on read.
"""

import json
import math

import numpy as np

from .errors import StackFileError
from .filters import (
    CubicParams,
    EllipticalParams,
    GraduatedParams,
    constrained_inv,
    cubic_coeff_count,
)
from .pipeline import FilterStack

STACK_VERSION = 1

_GRADUATED_FIELDS = (
    "scale_r", "scale_g", "scale_b", "slope", "intercept",
    "offset_top", "offset_bottom", "inversion",
)
_ELLIPTICAL_FIELDS = (
    "scale_r", "scale_g", "scale_b", "center_x", "center_y", "angle",
    "semi_major", "semi_minor",
)
_RAW_ONLY = {"offset_top", "offset_bottom", "semi_major", "semi_minor"}


def stack_to_dict(stack: FilterStack) -> dict:
    return {
        "version": STACK_VERSION,
        "variant": stack.cubic.variant,
        "units": "raw",
        "cubic": {
            "r": list(stack.cubic.coeffs[0]),
            "g": list(stack.cubic.coeffs[1]),
            "b": list(stack.cubic.coeffs[2]),
        },
        "graduated": [
            dict(zip(_GRADUATED_FIELDS, (
                g.scale_r, g.scale_g, g.scale_b, g.slope, g.intercept,
                g.offset_top_raw, g.offset_bottom_raw, g.inv_raw,
            )))
            for g in stack.graduated
        ],
        "elliptical": [
            dict(zip(_ELLIPTICAL_FIELDS, (
                e.scale_r, e.scale_g, e.scale_b, e.center_x, e.center_y,
                e.angle, e.semi_major_raw, e.semi_minor_raw,
            )))
            for e in stack.elliptical
        ],
    }


def write_stack(stack: FilterStack, path) -> None:
    with open(path, "w") as fh:
        json.dump(stack_to_dict(stack), fh, indent=2)
        fh.write("\n")


def _number(doc: dict, key: str, where: str) -> float:
    v = doc.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise StackFileError(f"{where}: field {key!r} must be a finite number")
    return float(v)


def stack_from_dict(doc: dict) -> FilterStack:
    if not isinstance(doc, dict):
        raise StackFileError("stack file must hold a JSON object")
    if doc.get("version") != STACK_VERSION:
        raise StackFileError(f"unknown stack file version {doc.get('version')!r}")
    variant = doc.get("variant")
    try:
        n_coeffs = cubic_coeff_count(variant)
    except (ValueError, TypeError):
        raise StackFileError(f"unknown cubic variant {variant!r}") from None
    units = doc.get("units", "raw")
    if units not in ("raw", "natural"):
        raise StackFileError(f"units must be 'raw' or 'natural', got {units!r}")

    cubic_doc = doc.get("cubic")
    if not isinstance(cubic_doc, dict) or set(cubic_doc) != {"r", "g", "b"}:
        raise StackFileError("cubic section must map channels r, g, b")
    coeffs = np.empty((3, n_coeffs))
    for row, ch in enumerate("rgb"):
        vals = cubic_doc[ch]
        if not isinstance(vals, list) or len(vals) != n_coeffs:
            raise StackFileError(
                f"cubic channel {ch!r}: expected {n_coeffs} coefficients, "
                f"got {len(vals) if isinstance(vals, list) else type(vals).__name__}"
            )
        for k, v in enumerate(vals):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise StackFileError(f"cubic channel {ch!r}[{k}] must be a finite number")
            coeffs[row, k] = float(v)

    def convert(value: float, name: str, where: str) -> float:
        if units == "natural" and name in _RAW_ONLY:
            if value <= 1e-4:
                raise StackFileError(
                    f"{where}: natural {name} must exceed the 1e-4 floor"
                )
            return float(constrained_inv(value))
        return value

    graduated = []
    for idx, entry in enumerate(doc.get("graduated", [])):
        if not isinstance(entry, dict) or set(entry) != set(_GRADUATED_FIELDS):
            raise StackFileError(
                f"graduated[{idx}]: expected fields {sorted(_GRADUATED_FIELDS)}"
            )
        where = f"graduated[{idx}]"
        vals = [convert(_number(entry, k, where), k, where)
                for k in _GRADUATED_FIELDS]
        graduated.append(GraduatedParams(*vals))

    elliptical = []
    for idx, entry in enumerate(doc.get("elliptical", [])):
        if not isinstance(entry, dict) or set(entry) != set(_ELLIPTICAL_FIELDS):
            raise StackFileError(
                f"elliptical[{idx}]: expected fields {sorted(_ELLIPTICAL_FIELDS)}"
            )
        where = f"elliptical[{idx}]"
        vals = [convert(_number(entry, k, where), k, where)
                for k in _ELLIPTICAL_FIELDS]
        elliptical.append(EllipticalParams(*vals))

    return FilterStack(CubicParams(variant, coeffs), graduated, elliptical)


def read_stack(path) -> FilterStack:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StackFileError(f"{path}: invalid JSON ({exc})") from exc
    return stack_from_dict(doc)
