"""Linear baseline over concatenated neighbor feature slots.

Each subgraph flattens into one fixed-length vector: k neighbor slots in
ascending distance from the target (ties by cell_id), each slot the
neighbor's node features followed by the geometry of the target-to-neighbor
edge, zero padded when fewer neighbors exist. Slot geometry uses the edge
directed away from the target, so alpha reads as "how far off the
candidate's boresight does this neighbor sit". Neighbors outside the target
radius carry no target edge and get zero geometry with angles_valid=0.

The fit is ridge-regularized least squares through the normal equations,
with the intercept left unpenalized. Zero columns (padding, one-hot slots
never observed) are eliminated exactly before solving, and a couple of
iterative-refinement solves push the first-order optimality residual down
to machine noise; the padded layout makes the plain system too
ill-conditioned for one solve to manage that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import NodeVocabulary, NormalizationSpec, clip_kpi
from .geometry import geodesic_distance
from .graph_build import PlanningSubgraph, SubgraphSkeleton

TARGET_EDGE_DIM = 5
CHECKPOINT_VERSION = 1
_REFINEMENT_STEPS = 2


class SingularSystem(ValueError):
    """The normal equations have no usable solution (only at lambda=0)."""


@dataclass(frozen=True)
class MlrConfig:
    k: int = 50
    ridge_lambda: float = 1e-6
    include_target_edge_geometry: bool = True
    edge_distance_scale: float = 500.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ridge_lambda < 0.0:
            raise ValueError("ridge_lambda must be >= 0")

    def slot_dim(self, node_dim: int) -> int:
        return node_dim + (TARGET_EDGE_DIM if self.include_target_edge_geometry else 0)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "ridge_lambda": self.ridge_lambda,
            "include_target_edge_geometry": self.include_target_edge_geometry,
            "edge_distance_scale": self.edge_distance_scale,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MlrConfig":
        return cls(
            k=int(data["k"]),
            ridge_lambda=float(data["ridge_lambda"]),
            include_target_edge_geometry=bool(data["include_target_edge_geometry"]),
            edge_distance_scale=float(data["edge_distance_scale"]),
        )


@dataclass
class MlrParameters:
    weights: np.ndarray
    bias: float
    ridge_lambda: float


def _edge_vector(geo, scale: float) -> np.ndarray:
    return np.array(
        [
            geo.d / scale,
            geo.alpha / 180.0,
            geo.theta / 180.0,
            geo.rho / 180.0,
            1.0 if geo.angles_valid else 0.0,
        ]
    )


def _distance_order(target_entry, neighbor_entries) -> list[int]:
    keyed = sorted(
        (geodesic_distance(target_entry.position, e.position), e.cell_id, i)
        for i, e in enumerate(neighbor_entries)
    )
    return [i for _, _, i in keyed]


def assemble_vector(g: PlanningSubgraph, cfg: MlrConfig) -> np.ndarray:
    """Flatten a subgraph into the canonical slot vector of length k*slot_dim."""
    node_dim = g.target.features.shape[0]
    sd = cfg.slot_dim(node_dim)
    out = np.zeros(cfg.k * sd)
    target_edges = {dst: geo for src, dst, geo in g.edges if src == 0}
    order = _distance_order(g.target.entry, [n.entry for n in g.neighbors])
    for slot, i in enumerate(order[: cfg.k]):
        base = slot * sd
        out[base : base + node_dim] = g.neighbors[i].features
        if cfg.include_target_edge_geometry and (i + 1) in target_edges:
            out[base + node_dim : base + sd] = _edge_vector(
                target_edges[i + 1], cfg.edge_distance_scale
            )
    return out


def slot_plan(
    skeleton: SubgraphSkeleton, cell_row: Mapping[str, int], cfg: MlrConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Date-independent slot layout for batched assembly.

    Returns per-slot feature-matrix rows (-1 marks an empty slot) and the
    static geometry block. Gathering rows of a per-date feature matrix
    through this plan reproduces assemble_vector exactly.
    """
    rows = np.full(cfg.k, -1, dtype=np.int64)
    geo = np.zeros((cfg.k, TARGET_EDGE_DIM))
    target_edges = {dst: g for src, dst, g in skeleton.edges if src == 0}
    order = _distance_order(skeleton.candidate, skeleton.neighbors)
    for slot, i in enumerate(order[: cfg.k]):
        rows[slot] = cell_row[skeleton.neighbors[i].cell_id]
        if cfg.include_target_edge_geometry and (i + 1) in target_edges:
            geo[slot] = _edge_vector(target_edges[i + 1], cfg.edge_distance_scale)
    return rows, geo


def assemble_matrix(
    plans: Sequence[tuple[np.ndarray, np.ndarray]],
    node_feats: np.ndarray,
    cfg: MlrConfig,
) -> np.ndarray:
    """Stack slot vectors for many targets against one feature matrix."""
    rows = np.stack([r for r, _ in plans])
    padded = np.vstack([node_feats, np.zeros((1, node_feats.shape[1]))])
    slots = padded[rows]  # (n, k, node_dim); -1 hits the zero sentinel row
    if cfg.include_target_edge_geometry:
        geo = np.stack([g for _, g in plans])
        geo = np.where((rows >= 0)[:, :, None], geo, 0.0)
        slots = np.concatenate([slots, geo], axis=2)
    return slots.reshape(len(plans), -1)


def fit(
    samples: Iterable[tuple[np.ndarray, float]] = (),
    ridge_lambda: float = 1e-6,
    X: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> MlrParameters:
    """Ridge least squares: (X^T X + lambda I) w = X^T y, intercept free.

    Accepts either (vector, label) pairs or prebuilt X/y arrays.
    """
    if X is None:
        pairs = list(samples)
        if not pairs:
            raise ValueError("fit needs at least one sample")
        X = np.vstack([v for v, _ in pairs])
        y = np.asarray([label for _, label in pairs], dtype=np.float64)
    d = X.shape[1]
    live = np.flatnonzero(np.any(X != 0.0, axis=0))
    Xl = X[:, live]
    a = np.hstack([Xl, np.ones((X.shape[0], 1))])
    gram = a.T @ a
    penalty = np.full(len(live) + 1, ridge_lambda)
    penalty[-1] = 0.0  # the intercept stays unpenalized
    gram[np.diag_indices_from(gram)] += penalty
    rhs = a.T @ y
    try:
        sol = np.linalg.solve(gram, rhs)
        for _ in range(_REFINEMENT_STEPS):
            sol += np.linalg.solve(gram, rhs - gram @ sol)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("normal equations produced non-finite coefficients")
    weights = np.zeros(d)
    weights[live] = sol[:-1]
    params = MlrParameters(weights=weights, bias=float(sol[-1]), ridge_lambda=ridge_lambda)
    scale = max(1.0, float(np.abs(rhs).max()))
    if optimality_residual(params, X, y) > 1e-6 * scale:
        raise SingularSystem("solution fails first-order optimality; system is singular")
    return params


def optimality_residual(params: MlrParameters, X: np.ndarray, y: np.ndarray) -> float:
    """Infinity norm of the ridge-objective gradient at the fitted params."""
    r = X @ params.weights + params.bias - y
    grad_w = X.T @ r + params.ridge_lambda * params.weights
    return max(float(np.abs(grad_w).max()), abs(float(r.sum())))


def predict(params: MlrParameters, vec: np.ndarray) -> float:
    return float(params.weights @ vec + params.bias)


def predict_kpi(
    params: MlrParameters,
    cfg: MlrConfig,
    norm: NormalizationSpec,
    g: PlanningSubgraph,
    feature: str,
) -> tuple[float, bool]:
    raw = norm.invert(feature, predict(params, assemble_vector(g, cfg)))
    return clip_kpi(feature, raw)


def save_checkpoint(
    path: Path,
    kpi: str,
    cfg: MlrConfig,
    params: MlrParameters,
    norm: NormalizationSpec,
    vocab: NodeVocabulary,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": "mlr",
        "kpi": kpi,
        "config": cfg.to_dict(),
        "normalization": norm.to_dict(),
        "vocabulary": vocab.to_dict(),
        "weights": params.weights.tolist(),
        "bias": params.bias,
        "ridge_lambda": params.ridge_lambda,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


@dataclass
class MlrCheckpoint:
    kpi: str
    cfg: MlrConfig
    params: MlrParameters
    norm: NormalizationSpec
    vocab: NodeVocabulary


def load_checkpoint(path: Path) -> MlrCheckpoint:
    data = json.loads(Path(path).read_text())
    if data.get("kind") != "mlr":
        raise ValueError(f"checkpoint kind {data.get('kind')!r} is not an mlr model")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    return MlrCheckpoint(
        kpi=data["kpi"],
        cfg=MlrConfig.from_dict(data["config"]),
        params=MlrParameters(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            ridge_lambda=float(data["ridge_lambda"]),
        ),
        norm=NormalizationSpec.from_dict(data["normalization"]),
        vocab=NodeVocabulary.from_dict(data["vocabulary"]),
    )
