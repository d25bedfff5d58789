import os
import logging

import numpy as np
from PIL import Image

from core.errors import IoFailure
from core.metrics import to_grayscale

logger = logging.getLogger(__name__)

MONTAGE_MARGIN = 2


def to_pixels(pattern, scale=None):
    """8-bit image of a pattern, shaped (rows, cols)"""
    pixels = to_grayscale(pattern, scale).astype(np.uint8)
    return pixels.reshape(pattern.rows, pattern.cols)


def write_pgm(path, pixels):
    """Write an 8-bit grayscale image as a binary portable graymap (P5)"""
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PPM")
    except OSError as e:
        raise IoFailure(f"cannot write image {path}: {e}") from e
    logger.debug("Wrote %s", path)
    return path


def write_montage(path, tiles, columns=6):
    """Lay equally sized grayscale tiles out left to right, top to bottom"""
    if not tiles:
        return None

    tile_rows, tile_cols = tiles[0].shape
    grid_rows = (len(tiles) + columns - 1) // columns
    grid_cols = min(columns, len(tiles))

    width = grid_cols * tile_cols + (grid_cols + 1) * MONTAGE_MARGIN
    height = grid_rows * tile_rows + (grid_rows + 1) * MONTAGE_MARGIN
    sheet = Image.new("L", (width, height), color=128)

    for index, tile in enumerate(tiles):
        row, col = divmod(index, columns)
        left = MONTAGE_MARGIN + col * (tile_cols + MONTAGE_MARGIN)
        top = MONTAGE_MARGIN + row * (tile_rows + MONTAGE_MARGIN)
        sheet.paste(Image.fromarray(np.asarray(tile, dtype=np.uint8)), (left, top))

    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        sheet.save(path, format="PPM")
    except OSError as e:
        raise IoFailure(f"cannot write montage {path}: {e}") from e
    logger.debug("Wrote montage of %d tiles to %s", len(tiles), path)
    return path
