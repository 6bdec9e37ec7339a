"""Tests for scenario generation and the planted KPI oracle."""

import datetime as dt
import math
import random

import numpy as np
import pytest

from radioplan.data_model import Technology, load_inventory, load_kpis
from radioplan.geometry import Azimuth, GeoPoint, geodesic_distance, initial_bearing
from radioplan.synth import (
    Bump,
    GroundTruthField,
    InvalidConfig,
    ScenarioConfig,
    base_kpis,
    boresight_demand,
    config_from_dict,
    config_to_dict,
    daily_multiplier,
    demand_at,
    destination_point,
    generate_scenario,
    materialize,
    noise_floor,
    oracle_kpi,
    record_rng,
    region_a,
    region_b,
    scenario_dates,
    synthesize_kpis,
)

from oracles import clipped_noise_mape, ks_statistic

BBOX = (GeoPoint(51.49, -0.14), GeoPoint(51.52, -0.09))


def small_config(**overrides) -> ScenarioConfig:
    base = dict(
        seed=7,
        region_bbox=BBOX,
        n_sites=12,
        date_range=(dt.date(2022, 10, 1), dt.date(2022, 10, 7)),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def toy_field(**overrides) -> GroundTruthField:
    base = dict(
        seed=3,
        bumps=(Bump(51.505, -0.115, 1.2, 900.0),),
        base_level=0.18,
        gains={"panel-m1": 1.0, "panel-m2": 2.0},
        daily_sigma=0.0,
        daily_range=(0.55, 1.8),
        weekend_factor=0.72,
        region_kpi_scale=1.0,
        noise_std={"prb_util": 0.06, "ul_throughput": 0.09, "dl_throughput": 0.08},
    )
    base.update(overrides)
    return GroundTruthField(**base)


def toy_cell(cell_id="S0000L0", az=45.0, model="panel-m1", tech=Technology.LTE4G):
    from radioplan.data_model import CellInventoryEntry

    return CellInventoryEntry(
        cell_id=cell_id, site_id="S0000", position=GeoPoint(51.505, -0.115),
        azimuth=Azimuth(az), technology=tech, manufacturer="aurora", antenna_model=model,
    )


class TestGenerateScenario:
    def test_single_site_all_5g(self):
        inv, _ = generate_scenario(small_config(n_sites=1, share_5g_sites=1.0))
        four_g = [e for e in inv if e.technology is Technology.LTE4G]
        five_g = [e for e in inv if e.technology is Technology.NR5G]
        assert len(four_g) == 3
        assert len(five_g) >= 1
        assert len({e.position for e in inv}) == 1

    def test_share_zero_means_no_5g(self):
        inv, _ = generate_scenario(small_config(share_5g_sites=0.0))
        assert all(e.technology is Technology.LTE4G for e in inv)

    def test_byte_determinism(self, tmp_path):
        cfg = small_config()
        materialize(cfg, tmp_path / "one")
        materialize(cfg, tmp_path / "two")
        for name in ("inventory.csv", "kpi.csv", "scenario.json"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_materialized_files_reload(self, tmp_path):
        cfg = small_config(n_sites=5)
        inv, _, table = materialize(cfg, tmp_path)
        assert load_inventory(tmp_path / "inventory.csv") == inv
        assert len(load_kpis(tmp_path / "kpi.csv")) == len(inv) * len(scenario_dates(cfg))

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            small_config(n_sites=0).validate()
        with pytest.raises(InvalidConfig):
            small_config(region_bbox=(BBOX[1], BBOX[0])).validate()
        with pytest.raises(InvalidConfig):
            small_config(share_5g_sites=1.5).validate()
        with pytest.raises(InvalidConfig):
            small_config(noise_std={"prb_util": 0.1}).validate()
        with pytest.raises(InvalidConfig):
            small_config(date_range=(dt.date(2022, 1, 2), dt.date(2022, 1, 1))).validate()

    def test_config_json_roundtrip(self):
        for cfg in (small_config(), region_a(), region_b()):
            assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_region_presets_have_expected_shape(self):
        inv_a, _ = generate_scenario(region_a())
        four_g = sum(e.technology is Technology.LTE4G for e in inv_a)
        five_g = sum(e.technology is Technology.NR5G for e in inv_a)
        assert 900 <= four_g <= 1100
        assert 120 <= five_g <= 180
        models_b = {s.model for s in region_b().antennas_4g}
        models_a = {s.model for s in region_a().antennas_4g}
        assert models_b - models_a == {"panel-m4"}


class TestOracle:
    def test_zero_noise_is_deterministic(self):
        field = toy_field(noise_std={k: 0.0 for k in ("prb_util", "ul_throughput", "dl_throughput")})
        cell = toy_cell()
        date = dt.date(2022, 10, 3)
        first = oracle_kpi(field, cell, date, record_rng(field, cell.cell_id, date))
        second = oracle_kpi(field, cell, date, record_rng(field, cell.cell_id, date))
        assert first == second
        prb, ul, dl = base_kpis(field, cell, date)
        assert (first.prb_util, first.ul_throughput, first.dl_throughput) == (prb, ul, dl)

    def test_gain_strictly_improves_throughput(self):
        field = toy_field()
        date = dt.date(2022, 10, 3)
        _, ul_lo, dl_lo = base_kpis(field, toy_cell(model="panel-m1"), date)
        prb_lo, _, _ = base_kpis(field, toy_cell(model="panel-m1"), date)
        prb_hi, ul_hi, dl_hi = base_kpis(field, toy_cell(model="panel-m2"), date)
        assert dl_hi > dl_lo and ul_hi > ul_lo
        assert prb_hi < prb_lo  # stronger antenna serves the same load with fewer PRBs

    def test_weekend_lowers_load(self):
        field = toy_field()
        friday, saturday = dt.date(2022, 10, 7), dt.date(2022, 10, 8)
        prb_fri, _, dl_fri = base_kpis(field, toy_cell(), friday)
        prb_sat, _, dl_sat = base_kpis(field, toy_cell(), saturday)
        assert prb_sat < prb_fri
        assert dl_sat > dl_fri

    def test_order_independent_records(self):
        cfg = small_config(n_sites=4)
        inv, field = generate_scenario(cfg)
        dates = scenario_dates(cfg)
        full = synthesize_kpis(field, inv, dates)
        shuffled = list(inv)
        random.Random(1).shuffle(shuffled)
        partial = synthesize_kpis(field, shuffled[:3], reversed(dates))
        for rec in partial.records():
            assert full.get(rec.cell_id, rec.date) == rec

    def test_daily_multiplier_bounded_and_stable(self):
        field = toy_field(daily_sigma=0.22)
        for i in range(40):
            date = dt.date(2022, 10, 1) + dt.timedelta(days=i)
            m = daily_multiplier(field, date)
            assert field.daily_range[0] <= m <= field.daily_range[1]
            assert daily_multiplier(field, date) == m

    def test_noise_floor_matches_quadrature(self):
        # Keep the demand low so prb stays clear of the 100% clip and the
        # observed APE is exactly |eps|/(1+eps).
        field = toy_field(bumps=(Bump(51.505, -0.115, 0.6, 900.0),))
        cells = [toy_cell(cell_id=f"S{i:04d}L0", az=30.0 * i) for i in range(6)]
        dates = [dt.date(2022, 10, 1) + dt.timedelta(days=i) for i in range(20)]
        floor = noise_floor(field, cells, dates, n_draws=10_000, seed=5)
        for feature, sigma in field.noise_std.items():
            assert floor[feature] == pytest.approx(clipped_noise_mape(sigma), abs=0.3)


class TestGeometryHelpers:
    def test_destination_point_round_trip(self):
        rng = random.Random(11)
        for _ in range(300):
            origin = GeoPoint(rng.uniform(-60, 60), rng.uniform(-180, 179.9))
            bearing = rng.uniform(0, 360)
            distance = rng.uniform(50, 5000)
            dest = destination_point(origin, bearing, distance)
            assert geodesic_distance(origin, dest) == pytest.approx(distance, rel=1e-9)
            assert initial_bearing(origin, dest) == pytest.approx(bearing % 360, abs=1e-6)

    def test_demand_single_bump(self):
        field = toy_field()
        bump = field.bumps[0]
        center = GeoPoint(bump.lat, bump.lon)
        assert demand_at(field, center) == pytest.approx(field.base_level + bump.amplitude)
        far = destination_point(center, 90.0, 6 * bump.sigma_m)
        assert demand_at(field, far) == pytest.approx(field.base_level, abs=1e-4)

    def test_omni_reads_field_at_site(self):
        field = toy_field()
        position = GeoPoint(51.505, -0.115)
        assert boresight_demand(field, position, Azimuth(is_omni=True)) == pytest.approx(
            demand_at(field, position)
        )


class TestRegionShift:
    def test_kpi_distributions_shift_between_regions(self):
        dates = [dt.date(2022, 10, 1) + dt.timedelta(days=i) for i in range(10)]
        cfg_a = small_config(seed=21, n_sites=40)
        cfg_b = small_config(
            seed=22,
            n_sites=24,
            region_bbox=(GeoPoint(52.92, -1.21), GeoPoint(52.99, -1.10)),
            region_kpi_scale=1.5,
        )
        samples = {}
        for tag, cfg in (("a", cfg_a), ("b", cfg_b)):
            inv, field = generate_scenario(cfg)
            table = synthesize_kpis(field, inv, dates)
            recs = table.records()
            samples[tag] = {
                "prb_util": [r.prb_util for r in recs],
                "ul_throughput": [r.ul_throughput for r in recs],
                "dl_throughput": [r.dl_throughput for r in recs],
            }
        for feature in samples["a"]:
            stat = ks_statistic(samples["a"][feature], samples["b"][feature])
            assert stat > 0.2, f"{feature} KS statistic {stat:.3f}"
