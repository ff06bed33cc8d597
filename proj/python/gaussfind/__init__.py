"""Localization of findings in medical images from vision-language model output.

Thin Python layer over the native ``_core`` module: structured values are
plain dicts, pixel data are numpy arrays.
"""

from __future__ import annotations

import json
import os
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _core

__all__ = [
    "GaussfindError",
    "analyze",
    "build_prompt",
    "build_report",
    "clamp_coordinate",
    "compose_max",
    "encode_png",
    "export_report",
    "load_image",
    "parse_response",
    "pdf",
    "rasterize",
    "render_all",
    "rho_from_theta",
    "validate_analysis",
]


class GaussfindError(Exception):
    """Typed pipeline failure with a machine-readable ``code`` and ``detail``."""

    def __init__(self, code: str, message: str, detail: Any = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.detail = detail


def _call(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _core.Error as e:
        code, message, detail = e.args
        raise GaussfindError(code, message, json.loads(detail)) from None


def clamp_coordinate(raw: float, extent: int) -> float:
    return _call(_core.clamp_coordinate, raw, extent)


def rho_from_theta(theta: float, sigma_x: float, sigma_y: float) -> float:
    return _call(_core.rho_from_theta, theta, sigma_x, sigma_y)


def pdf(x: float, y: float, gaussian: Mapping[str, float]) -> float:
    return _call(_core.pdf, x, y, json.dumps(dict(gaussian)))


def rasterize(gaussian: Mapping[str, float], width: int, height: int) -> np.ndarray:
    """Density sampled at pixel centers, shape (height, width)."""
    return _call(_core.rasterize, json.dumps(dict(gaussian)), width, height)


def compose_max(fields: Iterable[np.ndarray]) -> np.ndarray:
    return _call(_core.compose_max, [np.asarray(f, dtype=np.float64) for f in fields])


def parse_response(raw: str, width: int, height: int) -> dict:
    """Returns ``{"strategy", "response", "warnings"}``."""
    return json.loads(_call(_core.parse_response, raw, width, height))


def validate_analysis(analysis: Mapping[str, Any]) -> dict:
    """Returns ``{"response", "log"}`` with the corrected analysis."""
    return json.loads(_call(_core.validate_analysis, json.dumps(analysis)))


def load_image(data: bytes, name_hint: str = "") -> Tuple[np.ndarray, dict]:
    """Decodes PNG/JPEG/TIFF bytes to an RGB array plus image metadata."""
    pixels, meta = _call(_core.load_image, data, name_hint)
    return pixels, json.loads(meta)


def encode_png(image: np.ndarray) -> bytes:
    return _call(_core.encode_png, np.asarray(image, dtype=np.uint8))


def render_all(image: np.ndarray, analysis: Mapping[str, Any], alpha: float = 0.5,
               threshold: float = 0.05) -> dict:
    """Sketch, overlay, heatmap and composite layers plus the normalized field."""
    return _call(_core.render_all, np.asarray(image, dtype=np.uint8), json.dumps(analysis), alpha, threshold)


def build_report(analysis: Mapping[str, Any], log: Optional[Mapping[str, Any]] = None,
                 spacing: Optional[Sequence[float]] = None) -> dict:
    log_json = json.dumps(log if log is not None else {"entries": []})
    sp = tuple(spacing) if spacing is not None else None
    return json.loads(_call(_core.build_report, json.dumps(analysis), log_json, sp))


def export_report(report: Mapping[str, Any], format: str = "md") -> str:
    return _call(_core.export_report, json.dumps(report), format)


def build_prompt(width: int, height: int, require_gaussian: bool = True, require_contours: bool = True,
                 language: str = "en") -> str:
    return _call(_core.build_prompt, width, height, require_gaussian, require_contours, language)


def analyze(image_path: str | os.PathLike, out_dir: str | os.PathLike, *, backend: str = "replay",
            fixture: Optional[str | os.PathLike] = None, scripted_text: Optional[str] = None,
            options: Optional[Mapping[str, Any]] = None, **backend_options: Any) -> dict:
    """Runs the full pipeline and writes the artifact layout into ``out_dir``.

    For ``backend="replay"`` a ``fixture`` path selects the recorded reply.
    """
    cfg: dict = {"kind": backend, **backend_options}
    if fixture is not None:
        fixture = os.fspath(fixture)
        cfg["fixture_dir"] = os.path.dirname(os.path.abspath(fixture))
        cfg["fixture_name"] = os.path.basename(fixture)
    if scripted_text is not None:
        cfg["scripted_text"] = scripted_text
    result = _call(_core.analyze, os.fspath(image_path), os.fspath(out_dir), json.dumps(cfg),
                   json.dumps(dict(options or {})))
    return json.loads(result)
