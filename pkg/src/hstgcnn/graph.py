"""Per-frame spatial graphs: inverse-squared-distance weights and GCN normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .skeleton import HIGH, LOW, NUM_JOINTS, HighLevelFrame, LowLevelPose

MIN_SQ_DIST = 1e-300

# COCO-17 kinematic tree (16 edges) plus shoulder-shoulder and hip-hip.
SKELETON_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (0, 2), (1, 3), (2, 4),
    (0, 5), (0, 6),
    (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 11), (6, 12),
    (11, 13), (13, 15), (12, 14), (14, 16),
    (5, 6), (11, 12),
)


def skeleton_edge_mask() -> np.ndarray:
    mask = np.zeros((NUM_JOINTS, NUM_JOINTS), dtype=bool)
    for i, j in SKELETON_EDGES:
        mask[i, j] = mask[j, i] = True
    return mask


_SKELETON_MASK = skeleton_edge_mask()
_SKELETON_MASK.setflags(write=False)


@dataclass(frozen=True)
class SpatialGraph:
    positions: np.ndarray  # (V, 2)
    adjacency: np.ndarray  # (V, V) raw weights, zero diagonal
    level: str

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]


def inverse_square_weights(positions: np.ndarray, edges: np.ndarray | None = None,
                           binary: bool = False) -> np.ndarray:
    """1/||p_i - p_j||^2 for every connected pair, 0 for coincident nodes.

    ``positions`` is (..., V, 2); ``edges`` a (V, V) boolean mask (complete
    graph when None). With ``binary`` the connected pairs get weight 1.
    """
    V = positions.shape[-2]
    if edges is not None and edges.shape != (V, V):
        raise ShapeMismatch(f"edge mask {edges.shape} does not fit {V} nodes")
    diff = positions[..., :, None, :] - positions[..., None, :, :]
    d2 = np.einsum("...c,...c->...", diff, diff)
    if binary:
        w = np.ones_like(d2)
    else:
        # pairs closer than this count as coincident, keeping 1/d^2 and degree sums finite
        apart = d2 > MIN_SQ_DIST
        w = np.where(apart, 1.0 / np.where(apart, d2, 1.0), 0.0)
    keep = ~np.eye(V, dtype=bool) if edges is None else edges & ~np.eye(V, dtype=bool)
    return np.where(keep, w, 0.0)


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 over the last two axes."""
    V = adj.shape[-1]
    a_hat = adj + np.eye(V)
    d = a_hat.sum(axis=-1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a_hat * inv_sqrt[..., :, None] * inv_sqrt[..., None, :]


def low_level_graph(pose: LowLevelPose, binary_edges: bool = False) -> SpatialGraph:
    pos = np.asarray(pose.local_coords, dtype=np.float64)
    return SpatialGraph(pos, inverse_square_weights(pos, _SKELETON_MASK, binary_edges), LOW)


def high_level_graph(frame: HighLevelFrame) -> SpatialGraph:
    pos = np.asarray(frame.centers, dtype=np.float64).reshape(-1, 2)
    return SpatialGraph(pos, inverse_square_weights(pos), HIGH)


def symmetric_normalize(g: SpatialGraph) -> np.ndarray:
    return normalize_adjacency(g.adjacency)


def window_adjacency(positions: np.ndarray, level: str, node_mask: np.ndarray | None = None,
                     binary_edges: bool = False) -> np.ndarray:
    """Normalized adjacency for stacked frames ``positions`` (..., T, V, 2).

    ``node_mask`` (..., V) marks real nodes in a padded batch; padded nodes keep
    only their self-loop so they never exchange weight with real ones.
    """
    if level == LOW:
        raw = inverse_square_weights(positions, _SKELETON_MASK, binary_edges)
    else:
        raw = inverse_square_weights(positions)
    if node_mask is not None:
        m = node_mask[..., None, :].astype(np.float64)  # broadcast over T
        raw = raw * m[..., :, None] * m[..., None, :]
    return normalize_adjacency(raw)
