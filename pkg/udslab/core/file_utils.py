"""Utility helpers for safe file output (Dateiausgabe): JSON, CSV and PPM."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np

DEFAULT_ENCODING = "utf-8"
CSV_FLOAT_FORMAT = ".17g"


def _atomic_replace(
    target_path: Path,
    payload: bytes,
    logger: Optional[logging.Logger],
) -> bool:
    """Write ``payload`` next to ``target_path`` and move it into place.

    The file is written to a temporary location within the same folder first and
    then moved into place.  This protects against partial writes when the
    process is interrupted.  Returns ``True`` on success.
    """

    target_path.parent.mkdir(parents=True, exist_ok=True)
    temp_name: Optional[str] = None

    try:
        with tempfile.NamedTemporaryFile("wb", dir=str(target_path.parent), delete=False) as handle:
            temp_name = handle.name
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
    except OSError as error:  # pragma: no cover - extremely unlikely edge case
        if logger is not None:
            logger.error("Temporäre Datei konnte nicht geschrieben werden: %s", error)
        if temp_name and Path(temp_name).exists():
            Path(temp_name).unlink(missing_ok=True)
        return False

    try:
        os.replace(temp_name, target_path)
    except OSError as error:
        if logger is not None:
            logger.error("Datei konnte nicht ersetzt werden (%s): %s", target_path, error)
        if temp_name and Path(temp_name).exists():
            Path(temp_name).unlink(missing_ok=True)
        return False

    return True


def atomic_write_text(
    target_path: Path,
    content: str,
    *,
    encoding: str = DEFAULT_ENCODING,
    logger: Optional[logging.Logger] = None,
) -> bool:
    """Write ``content`` atomically; line endings are kept exactly as given."""

    return _atomic_replace(target_path, content.encode(encoding), logger)


def atomic_write_bytes(
    target_path: Path,
    payload: bytes,
    *,
    logger: Optional[logging.Logger] = None,
) -> bool:
    """Write binary ``payload`` atomically to ``target_path``."""

    return _atomic_replace(target_path, payload, logger)


def atomic_write_json(
    target_path: Path,
    payload: Any,
    *,
    encoding: str = DEFAULT_ENCODING,
    logger: Optional[logging.Logger] = None,
) -> bool:
    """Serialise ``payload`` as JSON and write it atomically to ``target_path``."""

    try:
        content = json.dumps(payload, indent=2, ensure_ascii=False)
    except (TypeError, ValueError) as error:
        if logger is not None:
            logger.error("JSON konnte nicht serialisiert werden: %s", error)
        return False

    return atomic_write_text(target_path, content + "\n", encoding=encoding, logger=logger)


def format_csv_value(value: Any) -> str:
    """Render one CSV cell; floats use 17 significant digits (round-trip exact)."""

    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), CSV_FLOAT_FORMAT)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Return comma separated text with a header row and LF line endings."""

    lines: List[str] = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"CSV-Zeile hat {len(row)} statt {len(header)} Spalten")
        lines.append(",".join(format_csv_value(value) for value in row))
    return "\n".join(lines) + "\n"


def write_csv(
    target_path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    logger: Optional[logging.Logger] = None,
) -> bool:
    """Write a CSV table atomically (UTF-8, '.' decimal separator, LF)."""

    return atomic_write_text(target_path, render_csv(header, rows), logger=logger)


def encode_ppm(panels: Sequence[np.ndarray], scale: int = 8, gap: int = 1) -> bytes:
    """Encode square grayscale panels side by side as a binary P6 image.

    Each panel is min-max normalised on its own; a constant panel maps to mid grey.
    """

    if not panels:
        raise ValueError("Mindestens ein Bild wird benötigt")
    if scale < 1:
        raise ValueError("scale muss mindestens 1 sein")
    side = panels[0].shape[0]
    tiles: List[np.ndarray] = []
    for panel in panels:
        image = np.asarray(panel, dtype=np.float64)
        if image.shape != (side, side):
            raise ValueError("Alle Bilder müssen dieselbe quadratische Form haben")
        low, high = float(image.min()), float(image.max())
        if high - low < 1e-300:
            normalised = np.full_like(image, 0.5)
        else:
            normalised = (image - low) / (high - low)
        pixels = np.round(normalised * 255.0).astype(np.uint8)
        tiles.append(np.kron(pixels, np.ones((scale, scale), dtype=np.uint8)))

    height = side * scale
    separator = np.zeros((height, gap), dtype=np.uint8)
    strip_parts: List[np.ndarray] = []
    for index, tile in enumerate(tiles):
        if index:
            strip_parts.append(separator)
        strip_parts.append(tile)
    strip = np.concatenate(strip_parts, axis=1)
    rgb = np.repeat(strip[:, :, None], 3, axis=2)
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii")
    return header + rgb.tobytes()


__all__ = [
    "atomic_write_bytes",
    "atomic_write_json",
    "atomic_write_text",
    "encode_ppm",
    "format_csv_value",
    "render_csv",
    "write_csv",
]
