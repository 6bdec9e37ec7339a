"""Experiment orchestration: splits, training runs, evaluation and the CLI.

Everything an experiment produces is reproducible byte for byte: reports
carry no timestamps or wall-clock numbers (the bench subcommand is the one
deliberate exception, since timing is its entire point), dictionaries are
serialized with sorted keys, and floats print through repr so they survive
a round trip unchanged.

Training follows a temporal protocol. The dates up to a boundary form the
training period; the last fifth of that period is held out for validation
and early stopping, everything after the boundary is the test window.
Normalization statistics are fit on training dates only and travel with the
checkpoint, which is also what a cross-region evaluation uses: region B is
scored with region A's normalization, never refit.

The linear baseline has no early stopping to feed, so it fits on the whole
training period (train plus validation dates) over the very same subgraphs
the message-passing model consumes.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .data_model import (
    KPI_FEATURES,
    CellInventoryEntry,
    DataError,
    KpiTable,
    Technology,
    clip_kpi,
    encode_node,
    feature_dim,
    fit_normalization,
    fit_vocabulary,
    load_inventory,
    load_kpis,
)
from .geometry import Azimuth, GeoPoint
from . import gnn as gnn_mod
from . import mlr as mlr_mod
from .gnn import AdamState, GnnHyperparams, NonFiniteLoss
from .graph_build import GraphBuildConfig, NoFourGCells, build_index, build_skeleton
from .mlr import MlrConfig
from .synth import (
    InvalidConfig,
    config_from_dict,
    materialize,
    region_a,
    region_b,
    scenario_dates,
)

APE_LABEL_FLOOR = 1e-3
SAMPLE_DUMP_HEADER = ("cell_id", "date", "kpi", "pred", "truth", "ape", "low_confidence")
MODEL_KINDS = ("gnn", "mlr")


class UsageError(ValueError):
    """Bad command line, config file or input data selection."""


class LabelBelowFloor(ValueError):
    """Truth value too small for a percentage error to mean anything."""


def ape(pred: float, truth: float) -> float:
    """Absolute percentage error, guarded by the label floor."""
    if truth < APE_LABEL_FLOOR:
        raise LabelBelowFloor(f"truth {truth} below {APE_LABEL_FLOOR}")
    return 100.0 * abs(pred - truth) / truth


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class SplitSpec:
    train_dates: frozenset[dt.date]
    val_dates: frozenset[dt.date]
    test_dates: frozenset[dt.date]

    def __post_init__(self):
        if not self.train_dates:
            raise ValueError("train_dates must not be empty")
        if (
            self.train_dates & self.val_dates
            or self.train_dates & self.test_dates
            or self.val_dates & self.test_dates
        ):
            raise ValueError("split date sets overlap")

    @property
    def training_period(self) -> frozenset[dt.date]:
        return self.train_dates | self.val_dates


def make_split(
    dates: Iterable[dt.date], train_until: dt.date, val_share: float = 0.2
) -> SplitSpec:
    """Temporal split: period up to the boundary, last share of it for
    validation, the rest of the calendar for testing."""
    if not 0.0 <= val_share < 1.0:
        raise UsageError("val_share must be in [0, 1)")
    ordered = sorted(set(dates))
    period = [d for d in ordered if d <= train_until]
    if not period:
        raise UsageError(f"no dates on or before {train_until.isoformat()}")
    n_val = min(int(round(val_share * len(period))), len(period) - 1)
    val = period[len(period) - n_val :] if n_val else []
    return SplitSpec(
        train_dates=frozenset(period[: len(period) - n_val]),
        val_dates=frozenset(val),
        test_dates=frozenset(d for d in ordered if d > train_until),
    )


def default_train_until(dates: Iterable[dt.date]) -> dt.date:
    """Boundary putting roughly the first third of the dates in training."""
    ordered = sorted(set(dates))
    if not ordered:
        raise UsageError("dataset has no KPI dates")
    idx = max((len(ordered) + 2) // 3 - 1, 0)
    return ordered[idx]


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class PredictionSample:
    cell_id: str
    date: dt.date
    kpi: str
    pred: float
    truth: float
    low_confidence: bool


@dataclass(frozen=True)
class KpiEval:
    mape: float
    p25: float
    p50: float
    p75: float
    p95: float
    n_scored: int
    n_excluded: int
    low_confidence_share: float

    @classmethod
    def from_samples(cls, samples: Sequence[PredictionSample]) -> "KpiEval":
        apes = []
        excluded = 0
        for s in samples:
            try:
                apes.append(ape(s.pred, s.truth))
            except LabelBelowFloor:
                excluded += 1
        if not apes:
            raise ValueError("no scorable samples (all labels below floor)")
        arr = np.asarray(apes)
        q = np.percentile(arr, [25.0, 50.0, 75.0, 95.0])
        low_share = sum(1 for s in samples if s.low_confidence) / len(samples)
        return cls(
            mape=float(arr.mean()),
            p25=float(q[0]),
            p50=float(q[1]),
            p75=float(q[2]),
            p95=float(q[3]),
            n_scored=len(apes),
            n_excluded=excluded,
            low_confidence_share=low_share,
        )

    def to_dict(self) -> dict:
        return {
            "mape": self.mape,
            "p25": self.p25,
            "p50": self.p50,
            "p75": self.p75,
            "p95": self.p95,
            "n_scored": self.n_scored,
            "n_excluded": self.n_excluded,
            "low_confidence_share": self.low_confidence_share,
        }


def write_sample_dump(path: Path, samples: Iterable[PredictionSample]) -> None:
    rows = sorted(samples, key=lambda s: (s.kpi, s.cell_id, s.date))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_DUMP_HEADER)
        for s in rows:
            try:
                ape_repr = repr(ape(s.pred, s.truth))
            except LabelBelowFloor:
                ape_repr = ""
            writer.writerow(
                [
                    s.cell_id,
                    s.date.isoformat(),
                    s.kpi,
                    repr(s.pred),
                    repr(s.truth),
                    ape_repr,
                    "1" if s.low_confidence else "0",
                ]
            )


# ---------------------------------------------------------------------------
# Datasets and shared evaluation context


@dataclass
class ScenarioData:
    inventory: list[CellInventoryEntry]
    kpis: KpiTable
    dataset_id: str


def load_dataset(directory: Path) -> ScenarioData:
    directory = Path(directory)
    inventory = load_inventory(directory / "inventory.csv")
    kpis = load_kpis(directory / "kpi.csv")
    dataset_id = directory.name
    meta = directory / "scenario.json"
    if meta.exists():
        dataset_id = json.loads(meta.read_text()).get("dataset_id", dataset_id)
    return ScenarioData(inventory=inventory, kpis=kpis, dataset_id=dataset_id)


@dataclass
class EvalContext:
    """Date-independent work shared by every model touching one dataset."""

    data: ScenarioData
    gcfg: GraphBuildConfig
    index: object
    targets: list[CellInventoryEntry]
    skeletons: list
    cell_row: dict[str, int]

    @classmethod
    def build(cls, data: ScenarioData, gcfg: GraphBuildConfig) -> "EvalContext":
        index = build_index(data.inventory)
        targets = sorted(
            (c for c in data.inventory if c.technology is Technology.NR5G),
            key=lambda c: c.cell_id,
        )
        if not targets:
            raise UsageError("dataset has no 5G cells to predict")
        skeletons = [build_skeleton(index, t, gcfg) for t in targets]
        cell_row = {c.cell_id: i for i, c in enumerate(data.inventory)}
        return cls(data, gcfg, index, targets, skeletons, cell_row)

    def features_for(self, date: dt.date, norm, vocab) -> np.ndarray:
        return np.vstack(
            [
                encode_node(
                    c,
                    None
                    if c.technology is Technology.NR5G
                    else self.data.kpis.get(c.cell_id, date),
                    norm,
                    vocab,
                )
                for c in self.data.inventory
            ]
        )


# ---------------------------------------------------------------------------
# Trained model bundles


@dataclass
class TrainedGnn:
    kind = "gnn"
    kpi: str
    hp: GnnHyperparams
    params: gnn_mod.GnnParameters
    norm: object
    vocab: object
    history: list[dict]
    best_epoch: int

    def save(self, path: Path) -> None:
        gnn_mod.save_checkpoint(path, self.kpi, self.hp, self.params, self.norm, self.vocab)


@dataclass
class TrainedMlr:
    kind = "mlr"
    kpi: str
    cfg: MlrConfig
    params: mlr_mod.MlrParameters
    norm: object
    vocab: object

    def save(self, path: Path) -> None:
        mlr_mod.save_checkpoint(path, self.kpi, self.cfg, self.params, self.norm, self.vocab)


def load_model(path: Path):
    """Load either checkpoint flavor, dispatching on its kind field."""
    kind = json.loads(Path(path).read_text()).get("kind")
    if kind == "gnn":
        c = gnn_mod.load_checkpoint(path)
        return TrainedGnn(kpi=c.kpi, hp=c.hp, params=c.params, norm=c.norm,
                          vocab=c.vocab, history=[], best_epoch=-1)
    if kind == "mlr":
        c = mlr_mod.load_checkpoint(path)
        return TrainedMlr(kpi=c.kpi, cfg=c.cfg, params=c.params, norm=c.norm, vocab=c.vocab)
    raise UsageError(f"unrecognized checkpoint kind {kind!r} in {path}")


def _silent(_: str) -> None:
    pass


# ---------------------------------------------------------------------------
# Training


def _labels_for(
    ctx: EvalContext, date: dt.date, kpi: str, norm
) -> tuple[np.ndarray, np.ndarray]:
    labels = np.zeros(len(ctx.targets))
    mask = np.zeros(len(ctx.targets))
    for i, t in enumerate(ctx.targets):
        rec = ctx.data.kpis.get(t.cell_id, date)
        if rec is not None:
            labels[i] = norm.apply(kpi, rec.value(kpi))
            mask[i] = 1.0
    return labels, mask


def train_gnn_model(
    ctx: EvalContext,
    split: SplitSpec,
    kpi: str,
    hp: GnnHyperparams,
    seed: int,
    log: Callable[[str], None] = _silent,
) -> TrainedGnn:
    norm = fit_normalization(ctx.data.kpis, set(split.train_dates), ctx.data.dataset_id)
    vocab = fit_vocabulary(ctx.data.inventory)
    n = len(ctx.targets)
    chunk_bounds = list(range(0, n, hp.batch_size))
    chunks = [slice(i, min(i + hp.batch_size, n)) for i in chunk_bounds]
    topos = [
        gnn_mod.build_topology(ctx.skeletons[c], ctx.cell_row, hp) for c in chunks
    ]
    train_dates = sorted(split.train_dates)
    val_dates = sorted(split.val_dates)
    feats = {d: ctx.features_for(d, norm, vocab) for d in (*train_dates, *val_dates)}
    labelled = {
        d: _labels_for(ctx, d, kpi, norm) for d in (*train_dates, *val_dates)
    }

    params = gnn_mod.init_params(hp, feature_dim(vocab), seed)
    state = AdamState.for_arrays(params.arrays())
    shuffle_rng = np.random.default_rng((seed, 0x5D))
    pairs = [(ci, d) for d in train_dates for ci in range(len(chunks))]

    def val_mape() -> Optional[float]:
        if not val_dates:
            return None
        errors = []
        for d in val_dates:
            labels, mask = labelled[d]
            for topo, chunk in zip(topos, chunks):
                y, _ = gnn_mod.forward_packed(params, topo, feats[d], hp)
                for j, yj in enumerate(y):
                    i = chunk.start + j
                    if not mask[i]:
                        continue
                    truth = ctx.data.kpis.get(ctx.targets[i].cell_id, d).value(kpi)
                    pred, _ = clip_kpi(kpi, norm.invert(kpi, float(yj)))
                    try:
                        errors.append(ape(pred, truth))
                    except LabelBelowFloor:
                        continue
        return float(np.mean(errors)) if errors else None

    history: list[dict] = []
    best = {"mape": np.inf, "epoch": 0, "arrays": [a.copy() for a in params.arrays()]}
    for epoch in range(1, hp.max_epochs + 1):
        order = shuffle_rng.permutation(len(pairs))
        losses = []
        for k in order:
            ci, d = pairs[k]
            labels, mask = labelled[d]
            chunk = chunks[ci]
            if not mask[chunk].sum():
                continue
            losses.append(
                gnn_mod.train_step_packed(
                    params, topos[ci], feats[d], labels[chunk], state, hp,
                    weights=mask[chunk],
                )
            )
        epoch_loss = float(np.mean(losses)) if losses else np.nan
        v = val_mape()
        history.append({"epoch": epoch, "train_loss": epoch_loss, "val_mape": v})
        log(
            f"[gnn/{kpi}] epoch {epoch}: loss={epoch_loss:.5f}"
            + (f" val_mape={v:.2f}%" if v is not None else "")
        )
        if v is not None and v < best["mape"]:
            best = {"mape": v, "epoch": epoch,
                    "arrays": [a.copy() for a in params.arrays()]}
        if v is not None and epoch - best["epoch"] >= hp.early_stop_patience:
            log(f"[gnn/{kpi}] early stop at epoch {epoch} (best {best['epoch']})")
            break
    if val_dates:
        for a, b in zip(params.arrays(), best["arrays"]):
            a[...] = b
        best_epoch = best["epoch"]
    else:
        best_epoch = len(history)
    return TrainedGnn(kpi=kpi, hp=hp, params=params, norm=norm, vocab=vocab,
                      history=history, best_epoch=best_epoch)


def train_mlr_model(
    ctx: EvalContext,
    split: SplitSpec,
    kpi: str,
    cfg: MlrConfig,
    log: Callable[[str], None] = _silent,
) -> TrainedMlr:
    norm = fit_normalization(ctx.data.kpis, set(split.train_dates), ctx.data.dataset_id)
    vocab = fit_vocabulary(ctx.data.inventory)
    plans = [mlr_mod.slot_plan(sk, ctx.cell_row, cfg) for sk in ctx.skeletons]
    blocks = []
    targets = []
    for d in sorted(split.training_period):
        feats = ctx.features_for(d, norm, vocab)
        labels, mask = _labels_for(ctx, d, kpi, norm)
        live = np.flatnonzero(mask)
        if not live.size:
            continue
        X = mlr_mod.assemble_matrix([plans[i] for i in live], feats, cfg)
        blocks.append(X)
        targets.append(labels[live])
    if not blocks:
        raise UsageError("no labeled samples in the training period")
    X = np.vstack(blocks)
    y = np.concatenate(targets)
    log(f"[mlr/{kpi}] fitting on {X.shape[0]} samples of dimension {X.shape[1]}")
    params = mlr_mod.fit(X=X, y=y, ridge_lambda=cfg.ridge_lambda)
    return TrainedMlr(kpi=kpi, cfg=cfg, params=params, norm=norm, vocab=vocab)


def train_model(
    ctx: EvalContext,
    split: SplitSpec,
    model_kind: str,
    kpi: str,
    seed: int,
    hp: GnnHyperparams,
    mlr_cfg: MlrConfig,
    log: Callable[[str], None] = _silent,
):
    if model_kind == "gnn":
        return train_gnn_model(ctx, split, kpi, hp, seed, log)
    if model_kind == "mlr":
        return train_mlr_model(ctx, split, kpi, mlr_cfg, log)
    raise UsageError(f"unknown model kind {model_kind!r}")


# ---------------------------------------------------------------------------
# Batched prediction over a context


def predict_samples(
    ctx: EvalContext, model, dates: Iterable[dt.date]
) -> list[PredictionSample]:
    """Physical-unit predictions for every (target, date) pair with a label."""
    dates = sorted(dates)
    out: list[PredictionSample] = []
    if isinstance(model, TrainedGnn):
        hp = model.hp
        n = len(ctx.targets)
        chunks = [slice(i, min(i + hp.batch_size, n)) for i in range(0, n, hp.batch_size)]
        topos = [gnn_mod.build_topology(ctx.skeletons[c], ctx.cell_row, hp) for c in chunks]
        for d in dates:
            feats = ctx.features_for(d, model.norm, model.vocab)
            for topo, chunk in zip(topos, chunks):
                y, _ = gnn_mod.forward_packed(model.params, topo, feats, hp)
                out.extend(
                    _sample(ctx, chunk.start + j, d, model.kpi, model.norm, float(yj))
                    for j, yj in enumerate(y)
                )
    elif isinstance(model, TrainedMlr):
        plans = [mlr_mod.slot_plan(sk, ctx.cell_row, model.cfg) for sk in ctx.skeletons]
        for d in dates:
            feats = ctx.features_for(d, model.norm, model.vocab)
            X = mlr_mod.assemble_matrix(plans, feats, model.cfg)
            y = X @ model.params.weights + model.params.bias
            out.extend(
                _sample(ctx, i, d, model.kpi, model.norm, float(yi))
                for i, yi in enumerate(y)
            )
    else:
        raise UsageError(f"cannot evaluate model of type {type(model).__name__}")
    return [s for s in out if s is not None]


def _sample(ctx, i, date, kpi, norm, normalized_pred) -> Optional[PredictionSample]:
    rec = ctx.data.kpis.get(ctx.targets[i].cell_id, date)
    if rec is None:
        return None
    pred, _ = clip_kpi(kpi, norm.invert(kpi, normalized_pred))
    return PredictionSample(
        cell_id=ctx.targets[i].cell_id,
        date=date,
        kpi=kpi,
        pred=pred,
        truth=rec.value(kpi),
        low_confidence=ctx.skeletons[i].low_confidence,
    )


# ---------------------------------------------------------------------------
# Experiment entry points


def run_training(
    data: ScenarioData,
    model_kind: str,
    kpi: str,
    split: SplitSpec,
    seed: int,
    hp: GnnHyperparams = GnnHyperparams(),
    mlr_cfg: MlrConfig = MlrConfig(),
    gcfg: GraphBuildConfig = GraphBuildConfig(),
    log: Callable[[str], None] = _silent,
):
    """Train one model for one KPI and score it on the test window."""
    ctx = EvalContext.build(data, gcfg)
    trained = train_model(ctx, split, model_kind, kpi, seed, hp, mlr_cfg, log)
    samples = predict_samples(ctx, trained, split.test_dates) if split.test_dates else []
    evaluation = KpiEval.from_samples(samples) if samples else None
    return trained, evaluation, samples


def run_generalization(
    data_a: ScenarioData,
    data_b: ScenarioData,
    model_kind: str,
    kpi: str,
    split: SplitSpec,
    seed: int,
    hp: GnnHyperparams = GnnHyperparams(),
    mlr_cfg: MlrConfig = MlrConfig(),
    gcfg: GraphBuildConfig = GraphBuildConfig(),
    log: Callable[[str], None] = _silent,
):
    """Train on region A, score the A test window and all of region B.

    Region B is evaluated with region A's normalization and vocabulary, the
    same contract a deployed checkpoint would face in a new city.
    """
    ctx_a = EvalContext.build(data_a, gcfg)
    trained = train_model(ctx_a, split, model_kind, kpi, seed, hp, mlr_cfg, log)
    samples_a = predict_samples(ctx_a, trained, split.test_dates)
    ctx_b = EvalContext.build(data_b, gcfg)
    samples_b = predict_samples(ctx_b, trained, sorted(data_b.kpis.dates()))
    eval_a = KpiEval.from_samples(samples_a)
    eval_b = KpiEval.from_samples(samples_b)
    return trained, eval_a, eval_b, samples_a, samples_b


def bench_planning(
    data: ScenarioData,
    model,
    n_candidates: int,
    n_schemes: int,
    seed: int,
    gcfg: GraphBuildConfig = GraphBuildConfig(),
    date: Optional[dt.date] = None,
) -> dict:
    """Single-threaded timing of build-and-predict over random candidates."""
    from .graph_build import build_subgraph

    index = build_index(data.inventory)
    date = date or max(data.kpis.dates())
    nr_cells = [c for c in data.inventory if c.technology is Technology.NR5G]
    profiles = sorted({(c.manufacturer, c.antenna_model) for c in nr_cells}) or [
        ("unknown", "unknown")
    ]
    lats = [c.position.lat for c in data.inventory]
    lons = [c.position.lon for c in data.inventory]
    rng = np.random.default_rng(seed)
    total = n_schemes * n_candidates
    durations = np.empty(total)
    k = 0
    for scheme in range(n_schemes):
        for i in range(n_candidates):
            manufacturer, antenna = profiles[int(rng.integers(len(profiles)))]
            candidate = CellInventoryEntry(
                cell_id=f"CAND-{scheme}-{i}",
                site_id=f"CAND-{scheme}-{i}",
                position=GeoPoint(
                    float(rng.uniform(min(lats), max(lats))),
                    float(rng.uniform(min(lons), max(lons))),
                ),
                azimuth=Azimuth(float(rng.uniform(0.0, 360.0))),
                technology=Technology.NR5G,
                manufacturer=manufacturer,
                antenna_model=antenna,
            )
            t0 = time.perf_counter()
            g = build_subgraph(
                index, candidate, date, data.kpis, model.norm, model.vocab, gcfg
            )
            if isinstance(model, TrainedGnn):
                gnn_mod.predict_kpi(model.params, model.norm, g, model.kpi, model.hp)
            else:
                mlr_mod.predict_kpi(model.params, model.cfg, model.norm, g, model.kpi)
            durations[k] = time.perf_counter() - t0
            k += 1
    ms = durations * 1000.0
    return {
        "model": model.kind,
        "kpi": model.kpi,
        "n_schemes": n_schemes,
        "n_candidates": n_candidates,
        "n_predictions": total,
        "total_s": float(durations.sum()),
        "mean_ms": float(ms.mean()) if total else 0.0,
        "p50_ms": float(np.percentile(ms, 50)) if total else 0.0,
        "p95_ms": float(np.percentile(ms, 95)) if total else 0.0,
        "p99_ms": float(np.percentile(ms, 99)) if total else 0.0,
        "max_ms": float(ms.max()) if total else 0.0,
    }


# ---------------------------------------------------------------------------
# CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(report: dict) -> None:
    print(json.dumps(report, indent=2, sort_keys=True))


def _parse_date(raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError as exc:
        raise UsageError(f"bad date {raw!r}: {exc}") from exc


def _kpi_list(raw: str) -> list[str]:
    if raw == "all":
        return list(KPI_FEATURES)
    if raw not in KPI_FEATURES:
        raise UsageError(f"kpi must be one of {KPI_FEATURES} or 'all'")
    return [raw]


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    return config


def _apply_overrides(base, overrides: dict, what: str):
    for key in overrides:
        if not hasattr(base, key):
            raise UsageError(f"unknown {what} field {key!r}")
    try:
        return replace(base, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad {what}: {exc}") from exc


def _settings(args) -> tuple[int, GnnHyperparams, MlrConfig, GraphBuildConfig, dict]:
    """Merge defaults, the config file and explicit flags, in that order."""
    config = _load_config(getattr(args, "config", None))
    hp = GnnHyperparams()
    raw_hp = dict(config.get("hyperparams", {}))
    raw_hp = {
        k: tuple(v) if isinstance(v, list) else v for k, v in raw_hp.items()
    }
    hp = _apply_overrides(hp, raw_hp, "hyperparams")
    flag_hp = {
        name: getattr(args, flag)
        for name, flag in (
            ("hidden_dim", "hidden_dim"),
            ("T", "t_steps"),
            ("learning_rate", "learning_rate"),
            ("batch_size", "batch_size"),
            ("max_epochs", "max_epochs"),
            ("early_stop_patience", "patience"),
        )
        if getattr(args, flag, None) is not None
    }
    hp = _apply_overrides(hp, flag_hp, "hyperparams")

    mlr_cfg = _apply_overrides(MlrConfig(), config.get("mlr", {}), "mlr config")
    if getattr(args, "ridge_lambda", None) is not None:
        mlr_cfg = replace(mlr_cfg, ridge_lambda=args.ridge_lambda)
    if getattr(args, "kpis_only_baseline", False):
        mlr_cfg = replace(mlr_cfg, include_target_edge_geometry=False)

    gcfg = _apply_overrides(GraphBuildConfig(), config.get("graph", {}), "graph config")
    if getattr(args, "k", None) is not None:
        gcfg = replace(gcfg, k=args.k)
    if getattr(args, "target_radius", None) is not None:
        gcfg = replace(gcfg, target_radius_m=args.target_radius)
    mlr_cfg = replace(mlr_cfg, k=gcfg.k)

    seed = args.seed if getattr(args, "seed", None) is not None else config.get("seed", 0)
    return int(seed), hp, mlr_cfg, gcfg, config


def _split_from(args, config: dict, dates: Iterable[dt.date]) -> SplitSpec:
    section = config.get("split", {})
    train_until = getattr(args, "train_until", None) or section.get("train_until")
    boundary = _parse_date(train_until) if train_until else default_train_until(dates)
    val_share = getattr(args, "val_share", None)
    if val_share is None:
        val_share = section.get("val_share", 0.2)
    return make_split(dates, boundary, float(val_share))


def _split_summary(split: SplitSpec) -> dict:
    return {
        "train_dates": len(split.train_dates),
        "val_dates": len(split.val_dates),
        "test_dates": len(split.test_dates),
        "train_until": max(split.training_period).isoformat(),
    }


def _cmd_generate(args) -> dict:
    if args.preset:
        cfg = {"region-a": region_a, "region-b": region_b}[args.preset]()
    else:
        config = _load_config(args.config)
        section = config.get("scenario", config)
        try:
            cfg = config_from_dict(section)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad scenario config: {exc}") from exc
    inventory, _, kpis = materialize(cfg, Path(args.out))
    return {
        "command": "generate",
        "out": str(args.out),
        "dataset_id": cfg.dataset_id,
        "n_cells_4g": sum(1 for c in inventory if c.technology is Technology.LTE4G),
        "n_cells_5g": sum(1 for c in inventory if c.technology is Technology.NR5G),
        "n_dates": len(scenario_dates(cfg)),
        "n_kpi_records": len(kpis),
    }


def _cmd_train(args) -> dict:
    seed, hp, mlr_cfg, gcfg, config = _settings(args)
    data = load_dataset(Path(args.data))
    split = _split_from(args, config, data.kpis.dates())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_kpis = {}
    training_info = {}
    all_samples = []
    checkpoints = {}
    for kpi in _kpi_list(args.kpi):
        trained, evaluation, samples = run_training(
            data, args.model, kpi, split, seed, hp, mlr_cfg, gcfg, log=_log
        )
        path = out_dir / f"{args.model}-{kpi}.json"
        trained.save(path)
        checkpoints[kpi] = str(path)
        all_samples.extend(samples)
        if evaluation is not None:
            report_kpis[kpi] = evaluation.to_dict()
        if isinstance(trained, TrainedGnn):
            training_info[kpi] = {
                "best_epoch": trained.best_epoch,
                "epochs_run": len(trained.history),
            }
    dump = out_dir / f"samples-{args.model}.csv"
    write_sample_dump(dump, all_samples)
    report = {
        "command": "train",
        "model": args.model,
        "seed": seed,
        "split": _split_summary(split),
        "kpis": report_kpis,
        "artifacts": {"checkpoints": checkpoints, "samples_csv": str(dump)},
    }
    if training_info:
        report["training"] = training_info
    for kpi, block in sorted(report_kpis.items()):
        _log(f"{args.model}/{kpi}: test MAPE {block['mape']:.2f}% "
             f"(p95 {block['p95']:.2f}%, {block['n_scored']} samples)")
    return report


def _cmd_evaluate(args) -> dict:
    _, _, _, gcfg, config = _settings(args)
    data = load_dataset(Path(args.data))
    ctx = EvalContext.build(data, gcfg)
    if args.all_dates:
        dates = sorted(data.kpis.dates())
    else:
        split = _split_from(args, config, data.kpis.dates())
        dates = sorted(split.test_dates)
        if not dates:
            raise UsageError("no test dates after the training boundary")
    report_kpis = {}
    by_kind: dict[str, list[PredictionSample]] = {}
    for path in args.checkpoint:
        model = load_model(Path(path))
        samples = predict_samples(ctx, model, dates)
        by_kind.setdefault(model.kind, []).extend(samples)
        report_kpis[f"{model.kind}/{model.kpi}"] = KpiEval.from_samples(samples).to_dict()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dumps = {}
    for kind, samples in sorted(by_kind.items()):
        dump = out_dir / f"samples-evaluate-{kind}.csv"
        write_sample_dump(dump, samples)
        dumps[kind] = str(dump)
    for key, block in sorted(report_kpis.items()):
        _log(f"{key}: MAPE {block['mape']:.2f}% over {block['n_scored']} samples")
    return {
        "command": "evaluate",
        "dates": [d.isoformat() for d in dates],
        "kpis": report_kpis,
        "artifacts": {"samples_csv": dumps},
    }


def _cmd_generalize(args) -> dict:
    seed, hp, mlr_cfg, gcfg, config = _settings(args)
    data_a = load_dataset(Path(args.data_a))
    data_b = load_dataset(Path(args.data_b))
    split = _split_from(args, config, data_a.kpis.dates())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kpis_report = {}
    all_samples = []
    for kpi in _kpi_list(args.kpi):
        trained, eval_a, eval_b, samples_a, samples_b = run_generalization(
            data_a, data_b, args.model, kpi, split, seed, hp, mlr_cfg, gcfg, log=_log
        )
        trained.save(out_dir / f"{args.model}-{kpi}.json")
        all_samples.extend(samples_b)
        kpis_report[kpi] = {
            "region_a": eval_a.to_dict(),
            "region_b": eval_b.to_dict(),
            "gap_pp": eval_b.mape - eval_a.mape,
        }
        _log(f"{args.model}/{kpi}: A {eval_a.mape:.2f}% -> B {eval_b.mape:.2f}% "
             f"(gap {eval_b.mape - eval_a.mape:+.2f}pp)")
    dump = out_dir / f"samples-{args.model}-transfer.csv"
    write_sample_dump(dump, all_samples)
    return {
        "command": "generalize",
        "model": args.model,
        "seed": seed,
        "split": _split_summary(split),
        "kpis": kpis_report,
        "artifacts": {"samples_csv": str(dump)},
    }


def _cmd_bench(args) -> dict:
    _, _, _, gcfg, _ = _settings(args)
    data = load_dataset(Path(args.data))
    model = load_model(Path(args.checkpoint))
    report = bench_planning(
        data,
        model,
        n_candidates=args.n_candidates,
        n_schemes=args.n_schemes,
        seed=args.seed if args.seed is not None else 0,
        gcfg=gcfg,
        date=_parse_date(args.date) if args.date else None,
    )
    report["command"] = "bench"
    _log(f"{report['n_predictions']} predictions in {report['total_s']:.1f}s "
         f"(mean {report['mean_ms']:.2f} ms, p95 {report['p95_ms']:.2f} ms)")
    return report


def _planner_from_args(args):
    from .service import Planner

    data = load_dataset(Path(args.data))
    models = [load_model(Path(p)) for p in args.checkpoint]
    _, _, _, gcfg, _ = _settings(args)
    try:
        return Planner.build(data, models, gcfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _cmd_predict(args) -> dict:
    planner = _planner_from_args(args)
    request = {
        "lat": args.lat,
        "lon": args.lon,
        "is_omni": bool(args.omni),
        "manufacturer": args.manufacturer,
        "antenna_model": args.antenna_model,
    }
    if args.azimuth is not None:
        request["azimuth_deg"] = args.azimuth
    if args.date:
        request["date"] = args.date
    from .service import ValidationFailure

    try:
        return planner.predict_payload(request)
    except ValidationFailure as exc:
        raise UsageError(f"invalid request: {exc.fields}") from exc
    except NoFourGCells as exc:
        raise UsageError(str(exc)) from exc


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    planner = _planner_from_args(args)
    app = create_app(planner)
    _log(f"serving on {args.host}:{args.port} "
         f"({len(planner.inventory)} cells, models: {', '.join(sorted(planner.models))})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_common_model_flags(p) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="neighbors per subgraph")
    p.add_argument("--target-radius", type=float, default=None,
                   help="target edge radius in meters")


def _add_split_flags(p) -> None:
    p.add_argument("--train-until", default=None,
                   help="last date of the training period (default: first third)")
    p.add_argument("--val-share", type=float, default=None,
                   help="share of the training period held out for validation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radioplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", help="write a synthetic scenario to a directory")
    p.add_argument("--preset", choices=("region-a", "region-b"))
    p.add_argument("--config", help="JSON file with a scenario section")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model and score the test window")
    p.add_argument("--data", required=True, help="directory with inventory.csv/kpi.csv")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--kpi", default="all")
    p.add_argument("--out", required=True, help="directory for checkpoints and dumps")
    _add_common_model_flags(p)
    _add_split_flags(p)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--t-steps", type=int, default=None, help="message passing iterations")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--ridge-lambda", type=float, default=None)
    p.add_argument("--kpis-only-baseline", action="store_true",
                   help="drop target-edge geometry from baseline slots")

    p = sub.add_parser("evaluate", help="score existing checkpoints on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--all-dates", action="store_true",
                   help="score every date instead of the post-boundary window")
    p.add_argument("--out", default=".")
    _add_common_model_flags(p)
    _add_split_flags(p)

    p = sub.add_parser("generalize", help="train on one region, score another")
    p.add_argument("--data-a", required=True)
    p.add_argument("--data-b", required=True)
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--kpi", default="all")
    p.add_argument("--out", required=True)
    _add_common_model_flags(p)
    _add_split_flags(p)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--t-steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--ridge-lambda", type=float, default=None)

    p = sub.add_parser("bench", help="time build-and-predict over random candidates")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-candidates", type=int, default=8000)
    p.add_argument("--n-schemes", type=int, default=10)
    p.add_argument("--date", default=None)
    _add_common_model_flags(p)

    p = sub.add_parser("predict", help="one what-if prediction from checkpoints")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", action="append", required=True,
                   help="repeat for each KPI model")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--azimuth", type=float, default=None)
    p.add_argument("--omni", action="store_true")
    p.add_argument("--manufacturer", default="unknown")
    p.add_argument("--antenna-model", default="unknown")
    p.add_argument("--date", default=None)
    _add_common_model_flags(p)

    p = sub.add_parser("serve", help="run the what-if prediction service")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_common_model_flags(p)

    return parser


_HANDLERS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "generalize": _cmd_generalize,
    "bench": _cmd_bench,
    "predict": _cmd_predict,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        if args.command == "serve":
            return _cmd_serve(args)
        _emit(_HANDLERS[args.command](args))
        return 0
    except (UsageError, DataError, InvalidConfig, NoFourGCells, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, UsageError):
            print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except NonFiniteLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
