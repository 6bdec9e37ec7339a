"""Planner wiring, request validation and the HTTP endpoints."""

import datetime as dt
import json
import math
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from radioplan.data_model import Technology
from radioplan.harness import load_dataset, main, make_split, run_training
from radioplan.service import (
    MAX_CELLS_RESPONSE,
    Planner,
    ValidationFailure,
    create_app,
    parse_bbox,
)
from radioplan.synth import config_from_dict, config_to_dict, materialize, region_a

D = dt.date.fromisoformat
KPI_FIELDS = ("prb_util_pct", "ul_thr_mbps", "dl_thr_mbps")


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory) -> Path:
    raw = config_to_dict(region_a())
    raw.update(
        seed=23,
        n_sites=12,
        share_5g_sites=0.4,
        date_range=["2022-10-01", "2022-10-10"],
        dataset_id="tiny-service",
    )
    out = tmp_path_factory.mktemp("svc-scenario") / "data"
    materialize(config_from_dict(raw), out)
    return out


@pytest.fixture(scope="module")
def checkpoint_dir(dataset_dir, tmp_path_factory) -> Path:
    """Three baseline checkpoints saved to disk, one per KPI."""
    data = load_dataset(dataset_dir)
    split = make_split(data.kpis.dates(), D("2022-10-07"))
    out = tmp_path_factory.mktemp("svc-models")
    for kpi in ("prb_util", "ul_throughput", "dl_throughput"):
        trained, _, _ = run_training(data, "mlr", kpi, split, seed=0)
        trained.save(out / f"mlr-{kpi}.json")
    return out


@pytest.fixture(scope="module")
def planner(dataset_dir, checkpoint_dir) -> Planner:
    from radioplan.harness import load_model

    data = load_dataset(dataset_dir)
    models = [
        load_model(checkpoint_dir / f"mlr-{kpi}.json")
        for kpi in ("prb_util", "ul_throughput", "dl_throughput")
    ]
    return Planner.build(data, models)


@pytest.fixture(scope="module")
def client(planner) -> TestClient:
    return TestClient(create_app(planner))


@pytest.fixture(scope="module")
def dense_request(planner) -> dict:
    target = next(
        c for c in planner.inventory if c.technology is Technology.NR5G
    )
    return {
        "lat": target.position.lat,
        "lon": target.position.lon,
        "azimuth_deg": 0.0 if target.azimuth.is_omni else target.azimuth.value,
        "manufacturer": target.manufacturer,
        "antenna_model": target.antenna_model,
    }


class TestPlannerBuild:
    def test_duplicate_kpi_rejected(self, dataset_dir, checkpoint_dir):
        from radioplan.harness import load_model

        data = load_dataset(dataset_dir)
        m = load_model(checkpoint_dir / "mlr-prb_util.json")
        with pytest.raises(ValueError, match="two checkpoints"):
            Planner.build(data, [m, m])

    def test_missing_kpi_rejected(self, dataset_dir, checkpoint_dir):
        from radioplan.harness import load_model

        data = load_dataset(dataset_dir)
        m = load_model(checkpoint_dir / "mlr-prb_util.json")
        with pytest.raises(ValueError, match="no checkpoint for"):
            Planner.build(data, [m])

    def test_mismatched_normalization_rejected(self, dataset_dir, checkpoint_dir):
        from radioplan.harness import load_model

        data = load_dataset(dataset_dir)
        models = [
            load_model(checkpoint_dir / f"mlr-{kpi}.json")
            for kpi in ("prb_util", "ul_throughput")
        ]
        other_split = make_split(data.kpis.dates(), D("2022-10-05"))
        odd, _, _ = run_training(data, "mlr", "dl_throughput", other_split, seed=0)
        with pytest.raises(ValueError, match="normalization"):
            Planner.build(data, [*models, odd])

    def test_version_is_short_hex(self, planner):
        assert len(planner.model_version) == 12
        int(planner.model_version, 16)

    def test_version_tracks_model_weights(self, dataset_dir, planner):
        data = load_dataset(dataset_dir)
        split = make_split(data.kpis.dates(), D("2022-10-07"))
        retrained = [
            run_training(data, "mlr", kpi, split, seed=0)[0]
            for kpi in ("prb_util", "ul_throughput", "dl_throughput")
        ]
        same = Planner.build(data, retrained)
        assert same.model_version == planner.model_version
        bumped = run_training(
            data, "mlr", "prb_util", split, seed=0,
        )[0]
        bumped.params.weights[0] += 1.0
        changed = Planner.build(data, [bumped, *retrained[1:]])
        assert changed.model_version != planner.model_version


class TestBboxParsing:
    def test_roundtrip(self):
        assert parse_bbox("51.0,-0.4,51.5,0.1") == (51.0, -0.4, 51.5, 0.1)

    @pytest.mark.parametrize(
        "raw",
        [None, "", "1,2,3", "1,2,3,4,5", "a,b,c,d", "91,0,92,1", "0,-181,1,-180"],
    )
    def test_malformed(self, raw):
        with pytest.raises(ValidationFailure):
            parse_bbox(raw)

    def test_inverted_corners(self):
        with pytest.raises(ValidationFailure, match="inverted"):
            parse_bbox("51.5,0.0,51.0,0.1")


class TestHealth:
    def test_reports_ok_and_version(self, client, planner):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["model_version"] == planner.model_version
        assert body["n_cells"] == len(planner.inventory)


class TestCells:
    def test_whole_scenario_bbox(self, client, planner):
        r = client.get("/cells", params={"bbox": "-90,-180,90,180"})
        assert r.status_code == 200
        body = r.json()
        assert len(body["cells"]) == len(planner.inventory)
        assert body["truncated"] is False
        first = body["cells"][0]
        assert set(first) == {
            "cell_id", "site_id", "lat", "lon", "azimuth_deg",
            "is_omni", "technology", "manufacturer", "antenna_model",
        }
        assert first["technology"] in ("4G", "5G")

    def test_empty_region(self, client):
        r = client.get("/cells", params={"bbox": "10,10,11,11"})
        assert r.status_code == 200
        assert r.json() == {"cells": [], "truncated": False}

    def test_truncation_cap(self, client, planner, monkeypatch):
        import radioplan.service as service_mod

        monkeypatch.setattr(service_mod, "MAX_CELLS_RESPONSE", 5)
        r = client.get("/cells", params={"bbox": "-90,-180,90,180"})
        body = r.json()
        assert len(body["cells"]) == 5
        assert body["truncated"] is True
        assert MAX_CELLS_RESPONSE == 10_000  # the import stays pristine

    def test_malformed_bbox_is_400(self, client):
        r = client.get("/cells", params={"bbox": "oops"})
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "invalid_bbox"
        assert "bbox" in body["fields"]

    def test_inverted_bbox_is_400(self, client):
        r = client.get("/cells", params={"bbox": "51.5,0.0,51.0,0.1"})
        assert r.status_code == 400

    def test_missing_bbox_is_400(self, client):
        assert client.get("/cells").status_code == 400


class TestPredict:
    def test_dense_point_happy_path(self, client, planner, dense_request):
        r = client.post("/predict", json=dense_request)
        assert r.status_code == 200
        body = r.json()
        assert 0.0 <= body["prb_util_pct"] <= 100.0
        assert body["ul_thr_mbps"] >= 0.0
        assert body["dl_thr_mbps"] >= 0.0
        assert all(math.isfinite(body[f]) for f in KPI_FIELDS)
        assert body["low_confidence"] is False
        assert body["model_version"] == planner.model_version
        dists = [n["d"] for n in body["neighbors"]]
        assert dists == sorted(dists)
        n_4g = sum(1 for c in planner.inventory if c.technology is Technology.LTE4G)
        assert len(body["neighbors"]) == min(planner.gcfg.k, n_4g)
        assert set(body["neighbors"][0]) == {"cell_id", "d", "alpha", "theta", "rho"}

    def test_omni_candidate_needs_no_azimuth(self, client, dense_request):
        request = {k: v for k, v in dense_request.items() if k != "azimuth_deg"}
        request["is_omni"] = True
        r = client.post("/predict", json=request)
        assert r.status_code == 200

    def test_remote_point_flags_low_confidence(self, client, dense_request):
        request = dict(dense_request, lat=dense_request["lat"] + 0.5)
        r = client.post("/predict", json=request)
        assert r.status_code == 200
        assert r.json()["low_confidence"] is True

    def test_out_of_range_lat_is_field_error(self, client, dense_request):
        r = client.post("/predict", json=dict(dense_request, lat=95.0))
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "validation_error"
        assert "lat" in body["fields"]

    def test_missing_azimuth_is_field_error(self, client, dense_request):
        request = {k: v for k, v in dense_request.items() if k != "azimuth_deg"}
        r = client.post("/predict", json=request)
        assert r.status_code == 400
        assert "azimuth_deg" in r.json()["fields"]

    def test_azimuth_range_checked(self, client, dense_request):
        r = client.post("/predict", json=dict(dense_request, azimuth_deg=360.0))
        assert r.status_code == 400
        assert "azimuth_deg" in r.json()["fields"]

    def test_multiple_errors_reported_together(self, client):
        r = client.post("/predict", json={"lat": 95.0})
        fields = r.json()["fields"]
        assert {"lat", "lon", "azimuth_deg"} <= set(fields)

    def test_bad_date_and_unknown_date(self, client, dense_request):
        r = client.post("/predict", json=dict(dense_request, date="October 3rd"))
        assert r.status_code == 400
        assert "date" in r.json()["fields"]
        r = client.post("/predict", json=dict(dense_request, date="2030-01-01"))
        assert r.status_code == 400
        assert "no KPI data" in r.json()["fields"]["date"]

    def test_explicit_date_accepted(self, client, dense_request):
        r = client.post("/predict", json=dict(dense_request, date="2022-10-03"))
        assert r.status_code == 200

    def test_unseen_antenna_model_is_fine(self, client, dense_request):
        request = dict(dense_request, manufacturer="upstart", antenna_model="x-99")
        assert client.post("/predict", json=request).status_code == 200

    def test_non_object_body(self, client):
        r = client.post("/predict", json=[1, 2, 3])
        assert r.status_code == 400
        assert "body" in r.json()["fields"]

    def test_unparseable_body(self, client):
        r = client.post(
            "/predict", content=b"{nope", headers={"content-type": "application/json"}
        )
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_json"

    def test_no_neighbors_maps_to_422(self, client, planner, monkeypatch, dense_request):
        monkeypatch.setattr(planner.index, "knn", lambda *a, **kw: [])
        r = client.post("/predict", json=dense_request)
        assert r.status_code == 422
        assert r.json()["code"] == "no_4g_cells"

    def test_repeated_requests_are_identical(self, client, dense_request):
        first = client.post("/predict", json=dense_request)
        second = client.post("/predict", json=dense_request)
        assert first.content == second.content

    def test_internal_fault_has_opaque_reference(self, client, planner, monkeypatch, dense_request, capsys):
        def boom(*a, **kw):
            raise RuntimeError("wires crossed")

        monkeypatch.setattr(planner.index, "knn", boom)
        r = client.post("/predict", json=dense_request)
        assert r.status_code == 500
        body = r.json()
        assert body["code"] == "internal"
        assert "wires crossed" not in body["message"]


class TestCliParity:
    def test_cli_predict_matches_endpoint(
        self, dataset_dir, checkpoint_dir, client, dense_request, capsys
    ):
        argv = [
            "predict",
            "--data", str(dataset_dir),
            "--lat", repr(dense_request["lat"]),
            "--lon", repr(dense_request["lon"]),
            "--azimuth", repr(dense_request["azimuth_deg"]),
            "--manufacturer", dense_request["manufacturer"],
            "--antenna-model", dense_request["antenna_model"],
        ]
        for kpi in ("prb_util", "ul_throughput", "dl_throughput"):
            argv += ["--checkpoint", str(checkpoint_dir / f"mlr-{kpi}.json")]
        assert main(argv) == 0
        cli = json.loads(capsys.readouterr().out)
        http = client.post("/predict", json=dense_request).json()
        for field in KPI_FIELDS:
            assert cli[field] == http[field]  # bit-equal, no tolerance
        assert cli["neighbors"] == http["neighbors"]
        assert cli["model_version"] == http["model_version"]

    def test_cli_predict_rejects_bad_azimuth(self, dataset_dir, checkpoint_dir, capsys):
        argv = [
            "predict", "--data", str(dataset_dir),
            "--lat", "51.47", "--lon", "-0.17", "--azimuth", "400",
        ]
        for kpi in ("prb_util", "ul_throughput", "dl_throughput"):
            argv += ["--checkpoint", str(checkpoint_dir / f"mlr-{kpi}.json")]
        assert main(argv) == 1
        assert "azimuth" in capsys.readouterr().err
