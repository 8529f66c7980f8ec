"""
Grayscale PNG previews of magnitude images and error maps.
"""

from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from PIL import Image

from src.metrics.quality import to_magnitude


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Magnitude scaled by its own maximum onto 0..255."""
    return np.round(np.clip(to_magnitude(image), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_preview(image: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path)
    return path


def error_map(recon: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """|recon - reference| after bringing both to unit peak magnitude."""
    recon, reference = np.asarray(recon), np.asarray(reference)
    return np.abs(recon / max(np.abs(recon).max(), 1e-12) - reference / max(np.abs(reference).max(), 1e-12))


def save_recon_previews(
    out_dir: Union[str, Path],
    recon: np.ndarray,
    zero_filled: np.ndarray,
    reference: Union[np.ndarray, None] = None,
) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [save_preview(recon, out_dir / "recon.png"), save_preview(zero_filled, out_dir / "zf.png")]
    if reference is not None:
        paths.append(save_preview(reference, out_dir / "reference.png"))
        paths.append(save_preview(error_map(recon, reference), out_dir / "error.png"))
    return paths


def save_attention_maps(maps: Dict[str, np.ndarray], out_dir: Union[str, Path]) -> List[Path]:
    """One PNG per (slot, latent) from (h, h, K) attention maps."""
    out_dir = Path(out_dir)
    paths = []
    for slot, stack in maps.items():
        for k in range(stack.shape[-1]):
            paths.append(save_preview(stack[..., k], out_dir / f"{slot.replace('.', '_')}_k{k:02d}.png"))
    return paths
