"""Export decoder cross-attention maps over the token grid."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

STREAMS = ("human", "object", "interaction")


@torch.no_grad()
def export_attention_maps(model, image, out_dir: str | Path,
                          stream: str = "interaction", layer: int = -1,
                          query: int = 0, candidate_ids=None) -> dict:
    """Write one grayscale PNG per head plus the raw float values.

    The selected stream/layer/query gives a (heads, H, W) stack of
    attention rows; every row is renormalized to sum to one before
    rendering. Raw values are saved alongside as .npy for exact reuse.
    """
    if stream not in STREAMS:
        raise ValueError(f"stream must be one of {STREAMS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(image, np.ndarray):
        image = torch.from_numpy(image)
    model.eval()
    outputs = model(image[None], candidate_ids=candidate_ids, capture_attention=True)
    n_q = model.cfg.num_queries
    if not 0 <= query < n_q:
        raise ValueError(f"query index {query} out of range")
    if stream == "interaction":
        weights = outputs.attention["interaction"][layer][0]  # (heads, N_q, HW)
        row = weights[:, query]
    else:
        weights = outputs.attention["instance"][layer][0]     # (heads, 2*N_q, HW)
        offset = 0 if stream == "human" else n_q
        row = weights[:, offset + query]
    grids = row.reshape(-1, outputs.grid_h, outputs.grid_w).numpy()
    grids = grids / grids.sum(axis=(1, 2), keepdims=True)

    paths = {}
    for head, grid in enumerate(grids):
        stem = f"{stream}_layer{layer}_query{query}_head{head}"
        np.save(out_dir / f"{stem}.npy", grid.astype(np.float32))
        scale = grid.max()
        pixels = np.zeros_like(grid) if scale == 0 else grid / scale
        Image.fromarray((pixels * 255).astype(np.uint8), mode="L").save(
            out_dir / f"{stem}.png")
        paths[head] = out_dir / f"{stem}.npy"
    return {"paths": paths, "values": grids,
            "grid": (outputs.grid_h, outputs.grid_w)}
