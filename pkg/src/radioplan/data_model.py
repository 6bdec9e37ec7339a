"""Cell inventory and KPI schemas, CSV ingestion, normalization, encoding.

File formats:
  inventory.csv: cell_id,site_id,lat,lon,azimuth_deg,is_omni,technology,manufacturer,antenna_model
  kpi.csv:       cell_id,date,prb_util_pct,ul_thr_mbps,dl_thr_mbps   (date ISO YYYY-MM-DD)

Normalization is fitted on training dates only and persisted as JSON next
to trained models so that serving applies the exact training-time scaling.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .geometry import Azimuth, GeoPoint, geodesic_distance

KPI_FEATURES = ("prb_util", "ul_throughput", "dl_throughput")

# Positions of cells sharing a site must agree to within this many meters.
SITE_POSITION_TOLERANCE_M = 0.5


class DataError(Exception):
    """Base class for dataset validation failures."""


class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateCellId(DataError):
    pass


class InconsistentSitePosition(DataError):
    pass


class DuplicateRecord(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class Technology(str, Enum):
    LTE4G = "4G"
    NR5G = "5G"


@dataclass(frozen=True)
class CellInventoryEntry:
    """Static description of one cell (a radio sector at a site)."""

    cell_id: str
    site_id: str
    position: GeoPoint
    azimuth: Azimuth
    technology: Technology
    manufacturer: str
    antenna_model: str


@dataclass(frozen=True)
class KpiRecord:
    """One cell-day of daily-average KPIs."""

    cell_id: str
    date: dt.date
    prb_util: float  # percent, [0, 100]
    ul_throughput: float  # Mbit/s, >= 0
    dl_throughput: float  # Mbit/s, >= 0

    def __post_init__(self):
        if not (0.0 <= self.prb_util <= 100.0):
            raise ValueError(f"prb_util {self.prb_util} outside [0, 100]")
        if self.ul_throughput < 0.0 or self.dl_throughput < 0.0:
            raise ValueError("throughputs must be non-negative")

    def value(self, feature: str) -> float:
        return getattr(self, feature)


class KpiTable:
    """KPI records indexed by (cell_id, date); duplicates rejected."""

    def __init__(self, records: Iterable[KpiRecord] = ()):
        self._by_key: dict[tuple[str, dt.date], KpiRecord] = {}
        for rec in records:
            self.add(rec)

    def add(self, rec: KpiRecord) -> None:
        key = (rec.cell_id, rec.date)
        if key in self._by_key:
            raise DuplicateRecord(f"duplicate KPI record for {key}")
        self._by_key[key] = rec

    def get(self, cell_id: str, date: dt.date) -> Optional[KpiRecord]:
        return self._by_key.get((cell_id, date))

    def records(self) -> list[KpiRecord]:
        return [self._by_key[k] for k in sorted(self._by_key)]

    def dates(self) -> set[dt.date]:
        return {d for _, d in self._by_key}

    def cell_ids(self) -> set[str]:
        return {c for c, _ in self._by_key}

    def __len__(self) -> int:
        return len(self._by_key)


INVENTORY_HEADER = [
    "cell_id", "site_id", "lat", "lon", "azimuth_deg", "is_omni",
    "technology", "manufacturer", "antenna_model",
]
KPI_HEADER = ["cell_id", "date", "prb_util_pct", "ul_thr_mbps", "dl_thr_mbps"]


def _parse_float(raw: str, line: int, field: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ParseError(line, f"field {field}: {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(line, f"field {field}: {raw!r} is not finite")
    return v


def load_inventory(path) -> list[CellInventoryEntry]:
    """Parse and validate an inventory CSV file."""
    entries: list[CellInventoryEntry] = []
    seen_ids: set[str] = set()
    site_positions: dict[str, GeoPoint] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != INVENTORY_HEADER:
            raise ParseError(1, f"bad inventory header {header}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(INVENTORY_HEADER):
                raise ParseError(line, f"expected {len(INVENTORY_HEADER)} fields, got {len(row)}")
            (cell_id, site_id, lat_s, lon_s, az_s, omni_s, tech_s, manuf, model) = row
            if not cell_id:
                raise ParseError(line, "empty cell_id")
            lat = _parse_float(lat_s, line, "lat")
            lon = _parse_float(lon_s, line, "lon")
            try:
                position = GeoPoint(lat, lon)
            except ValueError as exc:
                raise ParseError(line, f"field lat/lon: {exc}") from None
            if omni_s not in ("0", "1"):
                raise ParseError(line, f"field is_omni: {omni_s!r} not in {{0,1}}")
            is_omni = omni_s == "1"
            if is_omni:
                azimuth = Azimuth(is_omni=True)
            else:
                if az_s == "":
                    raise ParseError(line, "field azimuth_deg: empty for sectored cell")
                azimuth = Azimuth(_parse_float(az_s, line, "azimuth_deg"))
            try:
                technology = Technology(tech_s)
            except ValueError:
                raise ParseError(line, f"field technology: {tech_s!r} not in {{4G,5G}}") from None
            if cell_id in seen_ids:
                raise DuplicateCellId(f"line {line}: duplicate cell_id {cell_id!r}")
            seen_ids.add(cell_id)
            if site_id in site_positions:
                if geodesic_distance(site_positions[site_id], position) > SITE_POSITION_TOLERANCE_M:
                    raise InconsistentSitePosition(
                        f"line {line}: site {site_id!r} has conflicting positions"
                    )
            else:
                site_positions[site_id] = position
            entries.append(CellInventoryEntry(
                cell_id=cell_id, site_id=site_id, position=position,
                azimuth=azimuth, technology=technology,
                manufacturer=manuf, antenna_model=model,
            ))
    return entries


def load_kpis(path) -> KpiTable:
    """Parse and validate a KPI CSV file into a keyed table."""
    table = KpiTable()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != KPI_HEADER:
            raise ParseError(1, f"bad kpi header {header}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(KPI_HEADER):
                raise ParseError(line, f"expected {len(KPI_HEADER)} fields, got {len(row)}")
            cell_id, date_s, prb_s, ul_s, dl_s = row
            try:
                date = dt.date.fromisoformat(date_s)
            except ValueError:
                raise ParseError(line, f"field date: {date_s!r} is not ISO YYYY-MM-DD") from None
            prb = _parse_float(prb_s, line, "prb_util_pct")
            ul = _parse_float(ul_s, line, "ul_thr_mbps")
            dl = _parse_float(dl_s, line, "dl_thr_mbps")
            try:
                rec = KpiRecord(cell_id, date, prb, ul, dl)
            except ValueError as exc:
                raise ParseError(line, str(exc)) from None
            try:
                table.add(rec)
            except DuplicateRecord as exc:
                raise DuplicateRecord(f"line {line}: {exc}") from None
    return table


def write_inventory(path, entries: Iterable[CellInventoryEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INVENTORY_HEADER)
        for e in entries:
            writer.writerow([
                e.cell_id, e.site_id, repr(e.position.lat), repr(e.position.lon),
                "" if e.azimuth.is_omni else repr(e.azimuth.value),
                "1" if e.azimuth.is_omni else "0",
                e.technology.value, e.manufacturer, e.antenna_model,
            ])


def write_kpis(path, records: Iterable[KpiRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(KPI_HEADER)
        for r in records:
            writer.writerow([
                r.cell_id, r.date.isoformat(),
                repr(r.prb_util), repr(r.ul_throughput), repr(r.dl_throughput),
            ])


# --- normalization -----------------------------------------------------

@dataclass(frozen=True)
class UnitInterval:
    """Linear rescale by a fixed factor (e.g. percent -> [0, 1])."""

    scale: float

    def apply(self, v):
        return v * self.scale

    def invert(self, v):
        return v / self.scale


@dataclass(frozen=True)
class ZScore:
    mean: float
    std: float

    def apply(self, v):
        return (v - self.mean) / self.std

    def invert(self, v):
        return v * self.std + self.mean


@dataclass(frozen=True)
class Log1pZScore:
    """Z-score in log1p space; defined at 0 for zero-valued KPIs."""

    mean: float
    std: float

    def apply(self, v):
        return (np.log1p(v) - self.mean) / self.std

    def invert(self, v):
        return np.expm1(v * self.std + self.mean)


Transform = Union[UnitInterval, ZScore, Log1pZScore]

_TRANSFORM_TAGS = {"unit_interval": UnitInterval, "zscore": ZScore, "log1p_zscore": Log1pZScore}
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-KPI-feature transforms plus the dataset they were fitted on."""

    transforms: Mapping[str, Transform]
    fitted_on: str = ""

    def apply(self, feature: str, v):
        return self.transforms[feature].apply(v)

    def invert(self, feature: str, v):
        return self.transforms[feature].invert(v)

    def to_dict(self) -> dict:
        out = {}
        for name, tr in self.transforms.items():
            tag = next(t for t, cls in _TRANSFORM_TAGS.items() if isinstance(tr, cls))
            params = {k: v for k, v in tr.__dict__.items()}
            out[name] = {"kind": tag, **params}
        return {"fitted_on": self.fitted_on, "transforms": out}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationSpec":
        transforms = {}
        for name, spec in data["transforms"].items():
            params = dict(spec)
            kind = params.pop("kind")
            transforms[name] = _TRANSFORM_TAGS[kind](**params)
        return cls(transforms=transforms, fitted_on=data.get("fitted_on", ""))


def fit_normalization(
    table: KpiTable, training_dates: set[dt.date], dataset_id: str = ""
) -> NormalizationSpec:
    """Fit per-KPI transforms on records from the training dates only.

    PRB utilization gets a fixed percent->unit rescale; throughputs get a
    z-score in log1p space with the std floored to avoid degenerate scales.
    """
    train = [r for r in table.records() if r.date in training_dates]
    if not train:
        raise EmptyTrainingSet("no KPI records in the training dates")
    transforms: dict[str, Transform] = {"prb_util": UnitInterval(scale=0.01)}
    for feature in ("ul_throughput", "dl_throughput"):
        logs = np.log1p([r.value(feature) for r in train])
        transforms[feature] = Log1pZScore(
            mean=float(np.mean(logs)), std=float(max(np.std(logs), STD_FLOOR))
        )
    return NormalizationSpec(transforms=transforms, fitted_on=dataset_id)


# --- node feature encoding ---------------------------------------------

UNKNOWN_CATEGORY = "<unknown>"


@dataclass(frozen=True)
class CategoryVocab:
    """One-hot vocabulary with a reserved trailing bucket for unseen values."""

    categories: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.categories) + 1

    def index(self, value: str) -> int:
        try:
            return self.categories.index(value)
        except ValueError:
            return len(self.categories)


@dataclass(frozen=True)
class NodeVocabulary:
    manufacturer: CategoryVocab
    antenna_model: CategoryVocab

    def to_dict(self) -> dict:
        return {
            "manufacturer": list(self.manufacturer.categories),
            "antenna_model": list(self.antenna_model.categories),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NodeVocabulary":
        return cls(
            manufacturer=CategoryVocab(tuple(data["manufacturer"])),
            antenna_model=CategoryVocab(tuple(data["antenna_model"])),
        )


def fit_vocabulary(inventory: Iterable[CellInventoryEntry]) -> NodeVocabulary:
    entries = list(inventory)
    return NodeVocabulary(
        manufacturer=CategoryVocab(tuple(sorted({e.manufacturer for e in entries}))),
        antenna_model=CategoryVocab(tuple(sorted({e.antenna_model for e in entries}))),
    )


def clip_kpi(feature: str, value: float) -> tuple[float, bool]:
    """Clamp a de-normalized prediction to its physical range.

    Returns the clamped value and whether clamping changed anything, so
    callers can surface out-of-range model outputs instead of hiding them.
    """
    if feature == "prb_util":
        clipped = min(max(value, 0.0), 100.0)
    else:
        clipped = max(value, 0.0)
    return clipped, clipped != value


# Node feature layout: 3 normalized KPI slots, kpi_present, is_target,
# one-hot manufacturer, one-hot antenna model.
def feature_dim(vocab: NodeVocabulary) -> int:
    return 5 + vocab.manufacturer.size + vocab.antenna_model.size


def encode_node(
    entry: CellInventoryEntry,
    kpis: Optional[KpiRecord],
    spec: NormalizationSpec,
    vocab: NodeVocabulary,
) -> np.ndarray:
    """Encode one cell as a fixed-size float64 feature vector.

    5G target candidates never expose KPI values (that's the quantity under
    prediction); 4G cells without a record for the date keep their geometry
    but flag kpi_present=0 so the model can learn the mask.
    """
    x = np.zeros(feature_dim(vocab), dtype=np.float64)
    is_target = entry.technology is Technology.NR5G
    if is_target:
        x[4] = 1.0
    elif kpis is not None:
        x[0] = spec.apply("prb_util", kpis.prb_util)
        x[1] = spec.apply("ul_throughput", kpis.ul_throughput)
        x[2] = spec.apply("dl_throughput", kpis.dl_throughput)
        x[3] = 1.0
    base = 5
    x[base + vocab.manufacturer.index(entry.manufacturer)] = 1.0
    base += vocab.manufacturer.size
    x[base + vocab.antenna_model.index(entry.antenna_model)] = 1.0
    return x
