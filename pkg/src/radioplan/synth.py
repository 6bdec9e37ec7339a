"""Synthetic cities with a planted, documented KPI ground truth.

Monitoring data from a live network cannot ship with this repository, so
experiments run against generated scenarios instead.  A scenario is a seeded
draw of sites, sectored cells and a smooth latent *demand* field (a sum of
Gaussian bumps over the bounding box).  Every KPI record then follows from a
small closed-form base function of that field plus seeded noise, which keeps
the irreducible error of any predictor computable by Monte Carlo
(:func:`noise_floor`).

The base functions are deliberately simple and are the reference for every
derived quantity in the tests::

    load = demand along boresight * daily multiplier * weekday factor
           * region_kpi_scale
    prb  = 100 * (1 - exp(-0.9 * load / gain))
    dl   = 1.5 + 88 * gain / (1 + 1.3 * load)
    ul   = 0.4 + 21 * gain / (1 + 1.7 * load)

``gain`` is a per-antenna-model constant.  Position enters only through the
demand samples taken along each cell's own boresight; the KPI functions never
see raw coordinates, mirroring what the planning models are given.

Noise is multiplicative: ``value = base * (1 + eps)`` with ``eps`` drawn from
a zero-mean Gaussian of the configured per-KPI scale, clipped at three sigma
so labels stay well away from zero.  Each record draws from its own generator
seeded by (scenario seed, cell_id, date), so generated values do not depend
on iteration order.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import (
    KPI_FEATURES,
    CellInventoryEntry,
    KpiRecord,
    KpiTable,
    Technology,
    write_inventory,
    write_kpis,
)
from .geometry import EARTH_RADIUS_M, Azimuth, GeoPoint


class InvalidConfig(ValueError):
    """Scenario configuration violates a precondition."""


# Demand is sampled at these (distance m, weight) points along the boresight.
BORESIGHT_SAMPLES = ((60.0, 0.45), (220.0, 0.35), (420.0, 0.20))

# KPI base-function constants, documented in the module docstring.
PRB_SHAPE = 0.9
DL_FLOOR, DL_CEILING, DL_LOAD = 1.5, 88.0, 1.3
UL_FLOOR, UL_CEILING, UL_LOAD = 0.4, 21.0, 1.7

NOISE_CLIP_SIGMA = 3.0


@dataclass(frozen=True)
class AntennaSpec:
    """A deployable antenna model with its planted gain and draw weight."""

    model: str
    gain: float
    weight: float


@dataclass(frozen=True)
class DemandConfig:
    """Parameters of the latent demand field."""

    bumps_per_km2: float = 0.35
    amplitude_range: tuple[float, float] = (0.4, 2.6)
    sigma_range_m: tuple[float, float] = (700.0, 1500.0)
    base_level: float = 0.18
    daily_sigma: float = 0.22
    daily_range: tuple[float, float] = (0.55, 1.8)
    weekend_factor: float = 0.72


DEFAULT_MANUFACTURERS = ("aurora", "bellwave", "cobalt")
DEFAULT_ANTENNAS_4G = (
    AntennaSpec("panel-m1", 0.90, 0.4),
    AntennaSpec("panel-m2", 1.00, 0.4),
    AntennaSpec("panel-m3", 1.12, 0.2),
)
DEFAULT_ANTENNAS_5G = (
    AntennaSpec("aas-32t", 1.05, 0.5),
    AntennaSpec("aas-64t", 1.20, 0.5),
)
DEFAULT_NOISE_STD = {"prb_util": 0.06, "ul_throughput": 0.09, "dl_throughput": 0.08}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    region_bbox: tuple[GeoPoint, GeoPoint]
    n_sites: int
    date_range: tuple[dt.date, dt.date]
    cells_per_site_4g: tuple[tuple[int, float], ...] = ((3, 1.0),)
    share_5g_sites: float = 0.15
    noise_std: Mapping[str, float] = dataclass_field(
        default_factory=lambda: dict(DEFAULT_NOISE_STD)
    )
    region_kpi_scale: float = 1.0
    dataset_id: str = "synth"
    manufacturers: tuple[str, ...] = DEFAULT_MANUFACTURERS
    antennas_4g: tuple[AntennaSpec, ...] = DEFAULT_ANTENNAS_4G
    antennas_5g: tuple[AntennaSpec, ...] = DEFAULT_ANTENNAS_5G
    azimuth_jitter_deg: float = 6.0
    demand: DemandConfig = DemandConfig()

    def validate(self) -> None:
        sw, ne = self.region_bbox
        if not (sw.lat < ne.lat and sw.lon < ne.lon):
            raise InvalidConfig("region_bbox must be (south-west, north-east)")
        if self.n_sites < 1:
            raise InvalidConfig("n_sites must be >= 1")
        if not 0.0 <= self.share_5g_sites <= 1.0:
            raise InvalidConfig("share_5g_sites must be within [0, 1]")
        if self.date_range[0] > self.date_range[1]:
            raise InvalidConfig("date_range start is after its end")
        if set(self.noise_std) != set(KPI_FEATURES):
            raise InvalidConfig(f"noise_std must have keys {KPI_FEATURES}")
        if any(v < 0 for v in self.noise_std.values()):
            raise InvalidConfig("noise_std values must be >= 0")
        if not self.cells_per_site_4g:
            raise InvalidConfig("cells_per_site_4g distribution is empty")
        for count, weight in self.cells_per_site_4g:
            if count < 1 or weight <= 0:
                raise InvalidConfig("cells_per_site_4g needs count >= 1, weight > 0")
        if self.region_kpi_scale <= 0:
            raise InvalidConfig("region_kpi_scale must be > 0")
        for specs in (self.antennas_4g, self.antennas_5g):
            if not specs or any(s.weight <= 0 or s.gain <= 0 for s in specs):
                raise InvalidConfig("antenna specs need positive gain and weight")


@dataclass(frozen=True)
class Bump:
    lat: float
    lon: float
    amplitude: float
    sigma_m: float


@dataclass(frozen=True)
class GroundTruthField:
    """Everything needed to evaluate the planted KPI functions.

    Immutable after generation; safe to share across threads.
    """

    seed: int
    bumps: tuple[Bump, ...]
    base_level: float
    gains: Mapping[str, float]
    daily_sigma: float
    daily_range: tuple[float, float]
    weekend_factor: float
    region_kpi_scale: float
    noise_std: Mapping[str, float]


def _stable_seed(*parts: object) -> int:
    """Platform-independent 64-bit seed from the given parts."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def record_rng(field: GroundTruthField, cell_id: str, date: dt.date) -> np.random.Generator:
    """Noise generator for one (cell, date) record.

    Seeding per record makes the emitted table independent of the order in
    which records are produced, which is what the byte-determinism contract
    needs.
    """
    return np.random.default_rng(_stable_seed(field.seed, "kpi", cell_id, date.isoformat()))


def daily_multiplier(field: GroundTruthField, date: dt.date) -> float:
    """City-wide busyness factor for a date, seeded so any date works."""
    rng = np.random.default_rng(_stable_seed(field.seed, "day", date.isoformat()))
    lo, hi = field.daily_range
    return float(np.clip(math.exp(rng.normal(0.0, field.daily_sigma)), lo, hi))


def day_factor(field: GroundTruthField, date: dt.date) -> float:
    return field.weekend_factor if date.weekday() >= 5 else 1.0


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached from origin after travelling distance_m along a bearing."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def demand_at(field: GroundTruthField, point: GeoPoint) -> float:
    """Latent demand, base level plus Gaussian bumps (planar approximation)."""
    total = field.base_level
    cos_lat = math.cos(math.radians(point.lat))
    deg_m = math.radians(1.0) * EARTH_RADIUS_M
    for bump in field.bumps:
        dy = (point.lat - bump.lat) * deg_m
        dx = (point.lon - bump.lon) * deg_m * cos_lat
        total += bump.amplitude * math.exp(-0.5 * (dx * dx + dy * dy) / (bump.sigma_m**2))
    return total


def boresight_demand(field: GroundTruthField, position: GeoPoint, azimuth: Azimuth) -> float:
    """Demand seen by a cell: weighted samples along its boresight.

    Omni cells have no boresight, so they read the field at the site itself.
    """
    if azimuth.is_omni:
        return demand_at(field, position)
    total = 0.0
    for distance, weight in BORESIGHT_SAMPLES:
        total += weight * demand_at(field, destination_point(position, azimuth.value, distance))
    return total


def base_kpis(field: GroundTruthField, cell: CellInventoryEntry, date: dt.date) -> tuple[float, float, float]:
    """Noiseless (prb_util, ul_throughput, dl_throughput) for one cell-day."""
    demand = boresight_demand(field, cell.position, cell.azimuth)
    load = demand * daily_multiplier(field, date) * day_factor(field, date) * field.region_kpi_scale
    gain = field.gains.get(cell.antenna_model, 1.0)
    prb = 100.0 * (1.0 - math.exp(-PRB_SHAPE * load / gain))
    dl = DL_FLOOR + DL_CEILING * gain / (1.0 + DL_LOAD * load)
    ul = UL_FLOOR + UL_CEILING * gain / (1.0 + UL_LOAD * load)
    return prb, ul, dl


def _apply_noise(
    field: GroundTruthField, base: tuple[float, float, float], rng: np.random.Generator
) -> tuple[float, float, float]:
    prb, ul, dl = base
    draws = rng.normal(0.0, 1.0, size=3)
    scales = [field.noise_std[f] for f in KPI_FEATURES]
    eps = [float(np.clip(d * s, -NOISE_CLIP_SIGMA * s, NOISE_CLIP_SIGMA * s)) for d, s in zip(draws, scales)]
    prb = float(np.clip(prb * (1.0 + eps[0]), 0.0, 100.0))
    ul = max(ul * (1.0 + eps[1]), 0.0)
    dl = max(dl * (1.0 + eps[2]), 0.0)
    return prb, ul, dl


def oracle_kpi(
    field: GroundTruthField, cell: CellInventoryEntry, date: dt.date, rng: np.random.Generator
) -> KpiRecord:
    """One noisy KPI record for the cell on the given date."""
    prb, ul, dl = _apply_noise(field, base_kpis(field, cell, date), rng)
    return KpiRecord(cell_id=cell.cell_id, date=date, prb_util=prb, ul_throughput=ul, dl_throughput=dl)


def scenario_dates(cfg: ScenarioConfig) -> list[dt.date]:
    start, end = cfg.date_range
    return [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]


def _bbox_area_km2(bbox: tuple[GeoPoint, GeoPoint]) -> float:
    sw, ne = bbox
    deg_m = math.radians(1.0) * EARTH_RADIUS_M
    height = (ne.lat - sw.lat) * deg_m
    width = (ne.lon - sw.lon) * deg_m * math.cos(math.radians((sw.lat + ne.lat) / 2.0))
    return height * width / 1e6


def generate_scenario(cfg: ScenarioConfig) -> tuple[list[CellInventoryEntry], GroundTruthField]:
    """Draw the city: sites, sectored 4G/5G cells and the demand field.

    Same config in, same scenario out, down to the emitted CSV bytes.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sw, ne = cfg.region_bbox

    n_bumps = max(1, round(cfg.demand.bumps_per_km2 * _bbox_area_km2(cfg.region_bbox)))
    lat_pad = 0.2 * (ne.lat - sw.lat)
    lon_pad = 0.2 * (ne.lon - sw.lon)
    amp_lo, amp_hi = cfg.demand.amplitude_range
    sig_lo, sig_hi = cfg.demand.sigma_range_m
    bumps = tuple(
        Bump(
            lat=float(rng.uniform(sw.lat - lat_pad, ne.lat + lat_pad)),
            lon=float(rng.uniform(sw.lon - lon_pad, ne.lon + lon_pad)),
            amplitude=float(math.exp(rng.uniform(math.log(amp_lo), math.log(amp_hi)))),
            sigma_m=float(rng.uniform(sig_lo, sig_hi)),
        )
        for _ in range(n_bumps)
    )

    lats = rng.uniform(sw.lat, ne.lat, cfg.n_sites)
    lons = rng.uniform(sw.lon, ne.lon, cfg.n_sites)
    vendor_idx = rng.integers(0, len(cfg.manufacturers), cfg.n_sites)
    sector_counts = rng.choice(
        [c for c, _ in cfg.cells_per_site_4g],
        size=cfg.n_sites,
        p=_normalized([w for _, w in cfg.cells_per_site_4g]),
    )
    model_4g = rng.choice(
        [s.model for s in cfg.antennas_4g],
        size=cfg.n_sites,
        p=_normalized([s.weight for s in cfg.antennas_4g]),
    )
    n_5g_sites = round(cfg.share_5g_sites * cfg.n_sites)
    sites_5g = set(rng.choice(cfg.n_sites, size=n_5g_sites, replace=False).tolist())
    model_5g = rng.choice(
        [s.model for s in cfg.antennas_5g],
        size=cfg.n_sites,
        p=_normalized([s.weight for s in cfg.antennas_5g]),
    )

    inventory: list[CellInventoryEntry] = []
    for i in range(cfg.n_sites):
        site_id = f"S{i:04d}"
        position = GeoPoint(float(lats[i]), float(lons[i]))
        manufacturer = cfg.manufacturers[int(vendor_idx[i])]
        n_sec = int(sector_counts[i])
        azimuths = [360.0 * j / n_sec + float(rng.normal(0.0, cfg.azimuth_jitter_deg)) for j in range(n_sec)]
        for j, az in enumerate(azimuths):
            inventory.append(
                CellInventoryEntry(
                    cell_id=f"{site_id}L{j}",
                    site_id=site_id,
                    position=position,
                    azimuth=Azimuth(az),
                    technology=Technology.LTE4G,
                    manufacturer=manufacturer,
                    antenna_model=str(model_4g[i]),
                )
            )
        if i in sites_5g:
            # 5G sectors inherit the 4G orientation pattern with a small offset.
            offsets = rng.normal(0.0, 4.0, size=n_sec)
            for j, az in enumerate(azimuths):
                inventory.append(
                    CellInventoryEntry(
                        cell_id=f"{site_id}N{j}",
                        site_id=site_id,
                        position=position,
                        azimuth=Azimuth(az + float(offsets[j])),
                        technology=Technology.NR5G,
                        manufacturer=manufacturer,
                        antenna_model=str(model_5g[i]),
                    )
                )

    inventory.sort(key=lambda e: e.cell_id)
    gains = {s.model: s.gain for s in cfg.antennas_4g + cfg.antennas_5g}
    field = GroundTruthField(
        seed=cfg.seed,
        bumps=bumps,
        base_level=cfg.demand.base_level,
        gains=gains,
        daily_sigma=cfg.demand.daily_sigma,
        daily_range=cfg.demand.daily_range,
        weekend_factor=cfg.demand.weekend_factor,
        region_kpi_scale=cfg.region_kpi_scale,
        noise_std=dict(cfg.noise_std),
    )
    return inventory, field


def _normalized(weights: Sequence[float]) -> np.ndarray:
    arr = np.asarray(weights, dtype=float)
    return arr / arr.sum()


def synthesize_kpis(
    field: GroundTruthField,
    inventory: Iterable[CellInventoryEntry],
    dates: Iterable[dt.date],
) -> KpiTable:
    """Noisy KPI records for every (cell, date) pair."""
    table = KpiTable()
    dates = list(dates)
    for cell in inventory:
        for date in dates:
            table.add(oracle_kpi(field, cell, date, record_rng(field, cell.cell_id, date)))
    return table


def noise_floor(
    field: GroundTruthField,
    cells: Sequence[CellInventoryEntry],
    dates: Sequence[dt.date],
    n_draws: int = 10_000,
    seed: int = 101,
) -> dict[str, float]:
    """Monte-Carlo MAPE floor: noiseless base scored against noisy labels.

    No predictor can beat this by more than the (small) asymmetry of the
    noise, so it anchors the learnability thresholds.
    """
    rng = np.random.default_rng(seed)
    demand_cache = {
        c.cell_id: boresight_demand(field, c.position, c.azimuth) for c in cells
    }
    cell_idx = rng.integers(0, len(cells), n_draws)
    date_idx = rng.integers(0, len(dates), n_draws)
    ape_sums = {f: 0.0 for f in KPI_FEATURES}
    counts = {f: 0 for f in KPI_FEATURES}
    for ci, di in zip(cell_idx, date_idx):
        cell, date = cells[int(ci)], dates[int(di)]
        demand = demand_cache[cell.cell_id]
        load = demand * daily_multiplier(field, date) * day_factor(field, date) * field.region_kpi_scale
        gain = field.gains.get(cell.antenna_model, 1.0)
        base = (
            100.0 * (1.0 - math.exp(-PRB_SHAPE * load / gain)),
            UL_FLOOR + UL_CEILING * gain / (1.0 + UL_LOAD * load),
            DL_FLOOR + DL_CEILING * gain / (1.0 + DL_LOAD * load),
        )
        noisy = _apply_noise(field, base, rng)
        for feature, b, y in zip(KPI_FEATURES, base, noisy):
            if y < 1e-3:
                continue
            ape_sums[feature] += 100.0 * abs(b - y) / y
            counts[feature] += 1
    return {f: ape_sums[f] / max(counts[f], 1) for f in KPI_FEATURES}


# ---------------------------------------------------------------------------
# Config (de)serialization and on-disk materialization


def config_to_dict(cfg: ScenarioConfig) -> dict:
    sw, ne = cfg.region_bbox
    return {
        "seed": cfg.seed,
        "region_bbox": [[sw.lat, sw.lon], [ne.lat, ne.lon]],
        "n_sites": cfg.n_sites,
        "date_range": [cfg.date_range[0].isoformat(), cfg.date_range[1].isoformat()],
        "cells_per_site_4g": [[c, w] for c, w in cfg.cells_per_site_4g],
        "share_5g_sites": cfg.share_5g_sites,
        "noise_std": dict(cfg.noise_std),
        "region_kpi_scale": cfg.region_kpi_scale,
        "dataset_id": cfg.dataset_id,
        "manufacturers": list(cfg.manufacturers),
        "antennas_4g": [[s.model, s.gain, s.weight] for s in cfg.antennas_4g],
        "antennas_5g": [[s.model, s.gain, s.weight] for s in cfg.antennas_5g],
        "azimuth_jitter_deg": cfg.azimuth_jitter_deg,
        "demand": {
            "bumps_per_km2": cfg.demand.bumps_per_km2,
            "amplitude_range": list(cfg.demand.amplitude_range),
            "sigma_range_m": list(cfg.demand.sigma_range_m),
            "base_level": cfg.demand.base_level,
            "daily_sigma": cfg.demand.daily_sigma,
            "daily_range": list(cfg.demand.daily_range),
            "weekend_factor": cfg.demand.weekend_factor,
        },
    }


def config_from_dict(data: Mapping) -> ScenarioConfig:
    (sw_lat, sw_lon), (ne_lat, ne_lon) = data["region_bbox"]
    demand = data["demand"]
    return ScenarioConfig(
        seed=int(data["seed"]),
        region_bbox=(GeoPoint(sw_lat, sw_lon), GeoPoint(ne_lat, ne_lon)),
        n_sites=int(data["n_sites"]),
        date_range=(
            dt.date.fromisoformat(data["date_range"][0]),
            dt.date.fromisoformat(data["date_range"][1]),
        ),
        cells_per_site_4g=tuple((int(c), float(w)) for c, w in data["cells_per_site_4g"]),
        share_5g_sites=float(data["share_5g_sites"]),
        noise_std={k: float(v) for k, v in data["noise_std"].items()},
        region_kpi_scale=float(data["region_kpi_scale"]),
        dataset_id=str(data["dataset_id"]),
        manufacturers=tuple(data["manufacturers"]),
        antennas_4g=tuple(AntennaSpec(m, float(g), float(w)) for m, g, w in data["antennas_4g"]),
        antennas_5g=tuple(AntennaSpec(m, float(g), float(w)) for m, g, w in data["antennas_5g"]),
        azimuth_jitter_deg=float(data["azimuth_jitter_deg"]),
        demand=DemandConfig(
            bumps_per_km2=float(demand["bumps_per_km2"]),
            amplitude_range=tuple(float(x) for x in demand["amplitude_range"]),
            sigma_range_m=tuple(float(x) for x in demand["sigma_range_m"]),
            base_level=float(demand["base_level"]),
            daily_sigma=float(demand["daily_sigma"]),
            daily_range=tuple(float(x) for x in demand["daily_range"]),
            weekend_factor=float(demand["weekend_factor"]),
        ),
    )


def materialize(cfg: ScenarioConfig, out_dir: Path) -> tuple[list[CellInventoryEntry], GroundTruthField, KpiTable]:
    """Generate and write inventory.csv, kpi.csv and scenario.json."""
    inventory, field = generate_scenario(cfg)
    table = synthesize_kpis(field, inventory, scenario_dates(cfg))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_inventory(out_dir / "inventory.csv", inventory)
    write_kpis(out_dir / "kpi.csv", table.records())
    (out_dir / "scenario.json").write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
    )
    return inventory, field, table


# ---------------------------------------------------------------------------
# Canonical experiment scenarios.  Region A plays the in-distribution city;
# region B is a sparser city elsewhere with busier traffic (region_kpi_scale)
# and one 4G antenna model that region A never deploys.


def region_a() -> ScenarioConfig:
    return ScenarioConfig(
        seed=2022,
        region_bbox=(GeoPoint(51.4714, -0.1856), GeoPoint(51.5434, -0.0700)),
        n_sites=333,
        date_range=(dt.date(2022, 10, 1), dt.date(2022, 12, 31)),
        share_5g_sites=0.15,
        dataset_id="region-a",
    )


def region_b() -> ScenarioConfig:
    return ScenarioConfig(
        seed=2023,
        region_bbox=(GeoPoint(52.9188, -1.2161), GeoPoint(52.9908, -1.1001)),
        n_sites=200,
        date_range=(dt.date(2022, 10, 1), dt.date(2022, 12, 31)),
        share_5g_sites=0.15,
        region_kpi_scale=1.5,
        dataset_id="region-b",
        antennas_4g=DEFAULT_ANTENNAS_4G + (AntennaSpec("panel-m4", 0.95, 0.15),),
    )
