"""What-if prediction service: a planner core plus its HTTP wrapper.

The Planner owns everything loaded at startup (inventory, KPI history,
spatial index, one model per KPI) and answers requests as pure functions
over those immutable snapshots. The HTTP layer is a thin shell: it decodes
JSON, calls the planner and maps exceptions to status codes. Keeping the
prediction path inside Planner is what makes the command line `predict`
and `POST /predict` agree bit for bit, since both call the same method.

Request validation is done by hand rather than through a schema library so
that a bad field produces a 400 with a machine-readable `fields` map instead
of a framework-shaped error document.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import sys
import traceback
import uuid
from dataclasses import dataclass
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .data_model import (
    KPI_FEATURES,
    CellInventoryEntry,
    KpiTable,
    Technology,
)
from .geometry import Azimuth, GeoPoint, relative_angles
from .graph_build import (
    GraphBuildConfig,
    NoFourGCells,
    SpatialIndex,
    build_index,
    build_subgraph,
)
from . import gnn as gnn_mod
from . import mlr as mlr_mod

RESPONSE_FIELD = {
    "prb_util": "prb_util_pct",
    "ul_throughput": "ul_thr_mbps",
    "dl_throughput": "dl_thr_mbps",
}
MAX_CELLS_RESPONSE = 10_000
CANDIDATE_ID = "CANDIDATE"


class ValidationFailure(ValueError):
    """Field-level request problems, kept machine readable."""

    def __init__(self, fields: dict[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(fields.items())))
        self.fields = dict(fields)


def _model_digest(model) -> str:
    h = hashlib.sha256()
    h.update(model.kind.encode())
    h.update(model.kpi.encode())
    if model.kind == "gnn":
        arrays = model.params.arrays()
    else:
        arrays = [model.params.weights, np.asarray([model.params.bias])]
    for a in arrays:
        h.update(str(a.shape).encode())
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(json.dumps(model.norm.to_dict(), sort_keys=True).encode())
    return h.hexdigest()


def _require_number(body: dict, key: str, fields: dict) -> Optional[float]:
    value = body.get(key)
    if value is None:
        fields[key] = "required"
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        fields[key] = "must be a number"
        return None
    return float(value)


@dataclass
class Planner:
    inventory: list[CellInventoryEntry]
    kpis: KpiTable
    index: SpatialIndex
    models: dict[str, object]
    norm: object
    vocab: object
    gcfg: GraphBuildConfig
    default_date: dt.date
    model_version: str

    @classmethod
    def build(cls, data, models, gcfg: GraphBuildConfig = GraphBuildConfig()) -> "Planner":
        """Wire loaded checkpoints to a dataset. One model per KPI, all
        three KPIs covered, all trained with the same normalization."""
        by_kpi = {}
        for m in models:
            if m.kpi in by_kpi:
                raise ValueError(f"two checkpoints predict {m.kpi}")
            by_kpi[m.kpi] = m
        missing = [k for k in KPI_FEATURES if k not in by_kpi]
        if missing:
            raise ValueError(f"no checkpoint for {', '.join(missing)}")
        norms = {json.dumps(m.norm.to_dict(), sort_keys=True) for m in models}
        vocabs = {json.dumps(m.vocab.to_dict(), sort_keys=True) for m in models}
        if len(norms) > 1 or len(vocabs) > 1:
            raise ValueError("checkpoints disagree on normalization or vocabulary")
        first = by_kpi[KPI_FEATURES[0]]
        version = hashlib.sha256(
            "|".join(_model_digest(by_kpi[k]) for k in KPI_FEATURES).encode()
        ).hexdigest()[:12]
        return cls(
            inventory=list(data.inventory),
            kpis=data.kpis,
            index=build_index(data.inventory),
            models=by_kpi,
            norm=first.norm,
            vocab=first.vocab,
            gcfg=gcfg,
            default_date=max(data.kpis.dates()),
            model_version=version,
        )

    # -- request handling ---------------------------------------------

    def _validate(self, body) -> tuple[CellInventoryEntry, dt.date]:
        if not isinstance(body, dict):
            raise ValidationFailure({"body": "must be a JSON object"})
        fields: dict[str, str] = {}
        lat = _require_number(body, "lat", fields)
        lon = _require_number(body, "lon", fields)
        if lat is not None and not -90.0 <= lat <= 90.0:
            fields["lat"] = "must be within [-90, 90]"
        if lon is not None and not -180.0 <= lon <= 180.0:
            fields["lon"] = "must be within [-180, 180]"

        is_omni = body.get("is_omni", False)
        if not isinstance(is_omni, bool):
            fields["is_omni"] = "must be a boolean"
            is_omni = False
        azimuth_deg = body.get("azimuth_deg")
        if not is_omni:
            if azimuth_deg is None:
                fields["azimuth_deg"] = "required unless is_omni"
            elif isinstance(azimuth_deg, bool) or not isinstance(azimuth_deg, (int, float)):
                fields["azimuth_deg"] = "must be a number"
            elif not 0.0 <= float(azimuth_deg) < 360.0:
                fields["azimuth_deg"] = "must be within [0, 360)"

        manufacturer = body.get("manufacturer", "unknown")
        antenna_model = body.get("antenna_model", "unknown")
        if not isinstance(manufacturer, str) or not manufacturer:
            fields["manufacturer"] = "must be a non-empty string"
        if not isinstance(antenna_model, str) or not antenna_model:
            fields["antenna_model"] = "must be a non-empty string"

        date = self.default_date
        raw_date = body.get("date")
        if raw_date is not None:
            try:
                date = dt.date.fromisoformat(str(raw_date))
            except ValueError:
                fields["date"] = "must be an ISO date (YYYY-MM-DD)"
            else:
                if date not in self.kpis.dates():
                    fields["date"] = "no KPI data on this date"
        if fields:
            raise ValidationFailure(fields)

        entry = CellInventoryEntry(
            cell_id=CANDIDATE_ID,
            site_id=CANDIDATE_ID,
            position=GeoPoint(lat, lon),
            azimuth=Azimuth(is_omni=True) if is_omni else Azimuth(float(azimuth_deg)),
            technology=Technology.NR5G,
            manufacturer=manufacturer,
            antenna_model=antenna_model,
        )
        return entry, date

    def predict_payload(self, body) -> dict:
        """The WhatIfResponse as a plain dict, shared by CLI and HTTP."""
        entry, date = self._validate(body)
        g = build_subgraph(
            self.index, entry, date, self.kpis, self.norm, self.vocab, self.gcfg
        )
        response: dict = {}
        for kpi in KPI_FEATURES:
            model = self.models[kpi]
            if model.kind == "gnn":
                value, _ = gnn_mod.predict_kpi(model.params, model.norm, g, kpi, model.hp)
            else:
                value, _ = mlr_mod.predict_kpi(model.params, model.cfg, model.norm, g, kpi)
            response[RESPONSE_FIELD[kpi]] = value
        summary = []
        for node in g.neighbors:
            nb = node.entry
            geo = relative_angles(
                entry.position, entry.azimuth, nb.position, nb.azimuth
            )
            summary.append(
                {
                    "cell_id": nb.cell_id,
                    "d": geo.d,
                    "alpha": geo.alpha,
                    "theta": geo.theta,
                    "rho": geo.rho,
                }
            )
        summary.sort(key=lambda row: (row["d"], row["cell_id"]))
        response["low_confidence"] = g.low_confidence
        response["neighbors"] = summary
        response["model_version"] = self.model_version
        return response

    def cells_in_bbox(self, box: tuple[float, float, float, float]) -> tuple[list, bool]:
        min_lat, min_lon, max_lat, max_lon = box
        hits = [
            c
            for c in self.inventory
            if min_lat <= c.position.lat <= max_lat
            and min_lon <= c.position.lon <= max_lon
        ]
        hits.sort(key=lambda c: c.cell_id)
        truncated = len(hits) > MAX_CELLS_RESPONSE
        return [_cell_descriptor(c) for c in hits[:MAX_CELLS_RESPONSE]], truncated


def _cell_descriptor(c: CellInventoryEntry) -> dict:
    return {
        "cell_id": c.cell_id,
        "site_id": c.site_id,
        "lat": c.position.lat,
        "lon": c.position.lon,
        "azimuth_deg": None if c.azimuth.is_omni else c.azimuth.value,
        "is_omni": c.azimuth.is_omni,
        "technology": c.technology.value,
        "manufacturer": c.manufacturer,
        "antenna_model": c.antenna_model,
    }


def parse_bbox(raw: Optional[str]) -> tuple[float, float, float, float]:
    if raw is None or not raw.strip():
        raise ValidationFailure({"bbox": "required: minlat,minlon,maxlat,maxlon"})
    parts = raw.split(",")
    if len(parts) != 4:
        raise ValidationFailure({"bbox": "expected four comma-separated numbers"})
    try:
        min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
    except ValueError:
        raise ValidationFailure({"bbox": "expected four comma-separated numbers"}) from None
    if not (-90.0 <= min_lat <= 90.0 and -90.0 <= max_lat <= 90.0):
        raise ValidationFailure({"bbox": "latitudes must be within [-90, 90]"})
    if not (-180.0 <= min_lon <= 180.0 and -180.0 <= max_lon <= 180.0):
        raise ValidationFailure({"bbox": "longitudes must be within [-180, 180]"})
    if min_lat > max_lat or min_lon > max_lon:
        raise ValidationFailure({"bbox": "corners are inverted"})
    return min_lat, min_lon, max_lat, max_lon


def create_app(planner: Planner) -> FastAPI:
    app = FastAPI(title="what-if radio planner", docs_url=None, redoc_url=None)

    def error(status: int, code: str, message: str, fields: Optional[dict] = None):
        body = {"code": code, "message": message}
        if fields:
            body["fields"] = fields
        return JSONResponse(status_code=status, content=body)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_version": planner.model_version,
            "n_cells": len(planner.inventory),
        }

    @app.get("/cells")
    def cells(bbox: Optional[str] = None):
        try:
            box = parse_bbox(bbox)
        except ValidationFailure as exc:
            return error(400, "invalid_bbox", str(exc), exc.fields)
        descriptors, truncated = planner.cells_in_bbox(box)
        return {"cells": descriptors, "truncated": truncated}

    @app.post("/predict")
    async def predict(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "invalid_json", "request body must be valid JSON")
        try:
            return planner.predict_payload(body)
        except ValidationFailure as exc:
            return error(400, "validation_error", str(exc), exc.fields)
        except NoFourGCells as exc:
            return error(422, "no_4g_cells", str(exc))
        except Exception:
            fault = uuid.uuid4().hex[:12]
            print(f"internal fault {fault}\n{traceback.format_exc()}", file=sys.stderr)
            return error(500, "internal", f"internal fault, reference {fault}")

    return app
