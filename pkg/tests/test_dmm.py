"""Tests for phase diagrams, lookup tables, persistence and artifact validation."""

import math
import shutil

import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator

from eoam.config import ConfigError
from eoam.dmm.lookup import PLANES, AxisMismatchError, ClampCounter, LookupTable3D
from eoam.dmm.persistence import (
    TABLE_FILE,
    VEHICLE_FILE,
    TableFormatError,
    dumps_diagram,
    dumps_table,
    load_table_set,
    loads_diagram,
    loads_table,
)
from eoam.dmm.phase_diagram import (
    ClearanceError,
    DiagramSet,
    PhaseDiagram,
    Sector,
    classify_phase,
    min_clearing_distance,
    stopping_distance,
    ttc,
)
from eoam.dmm.provenance import ProvenanceMismatch, digest, provenance_hash
from eoam.dmm.validation import check_curves, check_partition, validate_table_set
from eoam.trajectory.optimizer import constant_speed_trajectory
from eoam.trajectory.path_gen import arc_length_parameterize, quintic_lane_change
from eoam.vehicle.params import G


def _diagram(clear, speeds=(0.0, 10.0, 20.0, 30.0, 40.0), mu=1.0, buffer=1.15, ttc_threshold=2.5):
    v = np.asarray(speeds, dtype=float)
    clear = np.asarray(clear, dtype=float)
    stop = v**2 / (2.0 * mu * G * 0.9)
    return PhaseDiagram(
        mu=mu,
        ttc_threshold=ttc_threshold,
        buffer=buffer,
        speeds=v,
        stop=stop,
        stop_buffered=buffer * stop,
        clear_subopt=clear,
        clear_const=clear,
        clear_buffered=buffer * clear,
        decel_eff=0.9,
    )


@pytest.fixture
def diagram():
    return _diagram([0.0, 20.0, 30.0, 40.0, 50.0])


class TestStoppingDistance:
    def test_formula(self, params):
        v = 100.0 / 3.6
        assert stopping_distance(v, 1.0, params) == pytest.approx(v**2 / (2 * G * 0.9))

    def test_quadratic_in_speed(self, params):
        for v in (5.0, 12.5, 33.3):
            assert stopping_distance(2 * v, 0.7, params) == 4 * stopping_distance(v, 0.7, params)

    def test_rejects_negative_speed(self, params):
        with pytest.raises(ValueError):
            stopping_distance(-1.0, 1.0, params)


class TestTtc:
    def test_closing(self):
        assert ttc(100.0, 20.0) == pytest.approx(5.0)

    def test_not_closing_is_infinite(self):
        assert math.isinf(ttc(100.0, 0.0))
        assert math.isinf(ttc(100.0, -3.0))

    def test_rejects_negative_distance(self):
        with pytest.raises(ValueError):
            ttc(-1.0, 10.0)


class TestMinClearingDistance:
    def test_matches_dense_first_crossing(self, params):
        v = 100.0 / 3.6
        path = quintic_lane_change(v, 2.5, 3.5)
        traj = constant_speed_trajectory(arc_length_parameterize(path), v, 1.0, 3.5)
        got = min_clearing_distance(traj, 2.0, params)

        t = np.linspace(0.0, 2.5, 200_001)
        x, y = path.position(t)
        xd, yd = path.velocity(t)
        heading = np.arctan2(yd, xd)
        gap = 1.0 + 0.94 * np.cos(heading) - 2.0 * np.sin(heading) - y
        k = int(np.flatnonzero(gap <= 0.0)[0])
        oracle = x[k] + 2.0 * np.cos(heading[k]) + 0.94 * np.sin(heading[k])
        assert got.x_clearance == pytest.approx(oracle, abs=1e-3)
        assert 0.0 < got.t_c < 2.5

    def test_never_clears_wide_object(self, params):
        v = 20.0
        traj = constant_speed_trajectory(
            arc_length_parameterize(quintic_lane_change(v, 2.5, 3.5)), v, 1.0, 3.5,
        )
        with pytest.raises(ClearanceError):
            min_clearing_distance(traj, 6.0, params)

    def test_increases_with_speed(self, tables):
        for d in tables.diagrams:
            assert np.all(np.diff(d.clear_const) > 0)


class TestClassify:
    @pytest.mark.parametrize("d,v,expected", [
        (60.0, 20.0, Sector.G),
        (40.0, 20.0, Sector.E),
        (30.5, 20.0, Sector.C),
        (24.0, 20.0, Sector.D),
        (10.0, 20.0, Sector.A),
        (110.0, 40.0, Sector.G),
        (95.0, 40.0, Sector.D),
        (80.0, 40.0, Sector.B),
        (55.0, 40.0, Sector.F),
        (45.0, 40.0, Sector.A),
    ])
    def test_examples(self, diagram, d, v, expected):
        assert diagram.classify(d, v) is expected
        assert classify_phase(diagram, d, v) is expected

    def test_opening_gap_is_safe(self, diagram):
        assert diagram.classify(1.0, 0.0) is Sector.G
        assert diagram.classify(1.0, -5.0) is Sector.G

    def test_rejects_negative_distance(self, diagram):
        with pytest.raises(ValueError):
            diagram.classify(-0.1, 10.0)

    def test_braking_only_speeds(self):
        d = _diagram([0.0, 20.0, math.inf, math.inf, math.inf])
        assert d.classify(5.0, 30.0) is Sector.A
        assert d.classify(55.0, 30.0) is Sector.D
        assert d.classify(80.0, 30.0) is Sector.G

    def test_caution_ranks(self):
        assert [s.caution for s in (Sector.G, Sector.E, Sector.C, Sector.D, Sector.B, Sector.F, Sector.A)] == [
            0, 1, 2, 2, 3, 3, 4,
        ]
        assert Sector.B.steers and Sector.F.steers
        assert Sector.C.brakes and Sector.D.brakes and Sector.A.brakes
        assert not Sector.E.brakes and not Sector.E.steers

    def test_partition_has_no_gaps_or_overlaps(self, diagram):
        assert check_partition(diagram, samples=20_000) == []

    def test_partition_with_braking_only_speeds(self):
        d = _diagram([0.0, 20.0, 30.0, math.inf, math.inf])
        assert check_partition(d, samples=20_000) == []

    def test_buffer_never_lowers_caution(self, diagram):
        rng = np.random.default_rng(7)
        bare = diagram.with_buffer(1.0)
        for d, v in zip(rng.uniform(0, 150, 5000), rng.uniform(0, 45, 5000)):
            assert diagram.classify(d, v).caution >= bare.classify(d, v).caution


class TestCurves:
    def test_curves_at_grid_speed(self, diagram):
        c = diagram.curves_at(20.0)
        assert c.stop == pytest.approx(400.0 / (2 * G * 0.9))
        assert c.stop_buffered == pytest.approx(1.15 * c.stop)
        assert c.clear == pytest.approx(30.0)
        assert c.clear_buffered == pytest.approx(34.5)
        assert c.ttc_line == pytest.approx(50.0)

    def test_linear_between_speeds(self, diagram):
        assert diagram.curves_at(25.0).clear == pytest.approx(35.0)

    def test_buffered_curves_dominate(self, tables):
        for d in tables.diagrams:
            assert check_curves(d) == []
            assert np.all(d.stop_buffered >= d.stop)

    def test_ttc_threshold_per_page(self, tables):
        by_mu = {d.mu: d.ttc_threshold for d in tables.diagrams}
        assert by_mu == {0.1: 20.0, 0.3: 5.0, 0.7: 2.5, 1.0: 2.5}


class TestDiagramSet:
    def test_pages_sorted(self, tables):
        assert tables.diagrams.mus == [0.1, 0.3, 0.7, 1.0]

    def test_exact_page(self, tables):
        assert tables.diagrams.for_mu(0.7) is tables.diagrams.page(0.7)

    def test_blends_between_pages(self, tables):
        d = tables.diagrams.for_mu(0.85)
        lo, hi = tables.diagrams.page(0.7), tables.diagrams.page(1.0)
        assert d.mu == 0.85
        finite = np.isfinite(lo.clear_subopt) & np.isfinite(hi.clear_subopt)
        assert np.all(d.clear_subopt[finite] <= np.maximum(lo.clear_subopt, hi.clear_subopt)[finite])
        assert np.all(d.clear_subopt[finite] >= np.minimum(lo.clear_subopt, hi.clear_subopt)[finite])

    def test_clamps_outside_pages(self, tables):
        assert tables.diagrams.for_mu(0.05) is tables.diagrams.page(0.1)

    def test_requires_a_page(self):
        with pytest.raises(ValueError):
            DiagramSet([])


@pytest.fixture
def small_table():
    rng = np.random.default_rng(3)
    speeds = np.array([10.0, 20.0, 30.0])
    dx = np.array([0.0, 1.0, 2.0, 3.0])
    mus = np.array([0.3, 0.7, 1.0])
    planes = {p: rng.normal(size=(3, 4, 3)) for p in PLANES}
    return LookupTable3D(speeds=speeds, dx=dx, mus=mus, planes=planes,
                         maneuver_length=np.full((3, 3), 2.5))


class TestLookupTable:
    def test_matches_independent_interpolator(self, small_table):
        rng = np.random.default_rng(11)
        t = small_table
        for _ in range(50):
            s, x, m = rng.uniform(10, 30), rng.uniform(0, 3), rng.uniform(0.3, 1.0)
            got = t.interpolate(s, x, m)
            for p in PLANES:
                oracle = RegularGridInterpolator((t.speeds, t.dx, t.mus), t.planes[p])([s, x, m])[0]
                assert getattr(got, p) == pytest.approx(oracle, abs=1e-12)

    def test_row_agrees_with_interpolate(self, small_table):
        row = small_table.row(17.0, 0.55)
        direct = small_table.interpolate(17.0, 1.4, 0.55)
        sample = row.at(1.4)
        for p in PLANES:
            assert getattr(sample, p) == pytest.approx(getattr(direct, p), abs=1e-12)

    def test_out_of_hull_clamped_and_counted(self, small_table):
        counter = ClampCounter()
        got = small_table.interpolate(50.0, 1.0, 0.5, counter)
        assert counter.counts["speeds"] == 1
        assert counter.total == 1
        assert got == small_table.interpolate(30.0, 1.0, 0.5)

    def test_dx_past_axis_holds_terminal(self, small_table):
        counter = ClampCounter()
        assert small_table.interpolate(20.0, 9.0, 0.7, counter) == small_table.interpolate(20.0, 3.0, 0.7)
        assert counter.total == 0

    def test_rejects_unsorted_axis(self, small_table):
        with pytest.raises(AxisMismatchError, match="speeds"):
            LookupTable3D(
                speeds=np.array([10.0, 30.0, 20.0]), dx=small_table.dx, mus=small_table.mus,
                planes=small_table.planes, maneuver_length=small_table.maneuver_length,
            )

    def test_rejects_plane_shape(self, small_table):
        planes = dict(small_table.planes, y_target=np.zeros((2, 4, 3)))
        with pytest.raises(AxisMismatchError, match="y_target"):
            LookupTable3D(
                speeds=small_table.speeds, dx=small_table.dx, mus=small_table.mus,
                planes=planes, maneuver_length=small_table.maneuver_length,
            )

    def test_built_rows_reach_target_offset(self, tables):
        row = tables.table.row(30.0, 1.0)
        assert row.at(0.0).y_target == pytest.approx(0.0, abs=1e-9)
        assert row.terminal().y_target == pytest.approx(3.5, abs=1e-3)
        assert row.length > 30.0 * 2.5 * 0.99

    def test_built_axes(self, tables, fast_grid):
        assert tables.table.speeds.tolist() == fast_grid.speeds
        assert tables.table.mus.tolist() == [0.1, 0.3, 0.7, 1.0]
        assert tables.table.dx[1] - tables.table.dx[0] == fast_grid.dx_step
        assert set(tables.table.sources[0]) == {"baseline"}


class TestPersistence:
    def test_table_text_is_exact(self, tables):
        table, provenance = loads_table(dumps_table(tables.table, "abc123"))
        assert provenance == "abc123"
        for p in PLANES:
            np.testing.assert_array_equal(table.planes[p], tables.table.planes[p])
        np.testing.assert_array_equal(table.maneuver_length, tables.table.maneuver_length)
        assert table.sources == tables.table.sources

    def test_diagram_text_keeps_infinities(self):
        d = _diagram([0.0, 20.0, 30.0, math.inf, math.inf])
        loaded, provenance = loads_diagram(dumps_diagram(d, "p", manifest_hash="m"))
        assert provenance == "p"
        np.testing.assert_array_equal(loaded.clear_subopt, d.clear_subopt)
        assert loaded.buffer == d.buffer

    def test_rejects_unknown_version(self, tables):
        text = dumps_table(tables.table, "abc").replace("format_version: 1", "format_version: 9")
        with pytest.raises(TableFormatError, match="unsupported format version"):
            loads_table(text)

    def test_reports_line_of_bad_value(self):
        text = "# format_version: 1\nshape 2 1 1\nspeeds 1.0 nope\n"
        with pytest.raises(TableFormatError, match=r"<string>:3"):
            loads_table(text)

    def test_saved_set_loads(self, tables, tables_dir):
        loaded = load_table_set(tables_dir)
        assert loaded.provenance == tables.provenance
        assert loaded.diagrams.mus == tables.diagrams.mus
        np.testing.assert_array_equal(loaded.table.planes["y_target"], tables.table.planes["y_target"])

    def test_missing_table_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="run precompute first"):
            load_table_set(tmp_path)

    def test_provenance_mismatch(self, tables, tables_dir, tmp_path):
        copy = tmp_path / "tables"
        shutil.copytree(tables_dir, copy)
        changed = tables.params.model_copy(update={"i_z": 3000.0})
        (copy / VEHICLE_FILE).write_text(changed.model_dump_json())
        with pytest.raises(ProvenanceMismatch):
            load_table_set(copy)

    def test_manifest_line_written(self, tables_dir):
        assert (tables_dir / TABLE_FILE).read_text().startswith("# manifest: feedc0de\n")


class TestProvenance:
    def test_stable(self, params, fast_grid):
        assert provenance_hash(params, fast_grid) == provenance_hash(params, fast_grid)

    def test_changes_with_inputs(self, params, fast_grid):
        other = fast_grid.model_copy(update={"buffer": 1.2})
        assert provenance_hash(params, fast_grid) != provenance_hash(params, other)

    def test_digest_ignores_key_order(self):
        assert digest({"a": 1, "b": 2}) == digest({"b": 2, "a": 1})


class TestValidation:
    def test_built_tables_pass(self, tables):
        assert validate_table_set(tables, samples=2_000) == []

    def test_detects_buffer_below_one(self):
        d = _diagram([0.0, 20.0, 30.0, 40.0, 50.0], buffer=0.9)
        problems = check_curves(d)
        assert any("buffer" in p for p in problems)
