"""Verification harness: suite behavior, report schema, determinism."""

import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from affinebv import GridFunction, make_quadrature
from affinebv.verify import (
    VerifyConfig,
    check_affine_invariance,
    check_comparisons,
    check_huang_li,
    check_sobolev_zhang,
    check_superadditivity,
    check_wirtinger_gap,
    disk_domain,
    ellipse_domain,
    random_bumps,
    run_suite,
    square_domain,
)


def small_config(**kw):
    defaults = dict(grid=64, dirs=64, n_fields=5, n_maps=5)
    defaults.update(kw)
    return VerifyConfig(**defaults)


class TestIndividualChecks:
    def test_sobolev_zhang_disk_equality(self):
        spec, mask = disk_domain(128)
        quad = make_quadrature(2, 256)
        u = GridFunction(spec, mask.inside.astype(float))
        rec = check_sobolev_zhang([("disk", u)], mask, quad,
                                  backend="face-atoms",
                                  equality_cases=("disk",))
        assert rec.passed
        assert rec.details["disk"] == pytest.approx(1.0, abs=0.05)

    def test_sobolev_zhang_ellipse_equality(self):
        spec, mask = ellipse_domain(128, np.diag([2.0, 0.5]))
        quad = make_quadrature(2, 256)
        u = GridFunction(spec, mask.inside.astype(float))
        rec = check_sobolev_zhang([("ellipse", u)], mask, quad,
                                  backend="face-atoms",
                                  equality_cases=("ellipse",))
        assert rec.passed
        assert rec.details["ellipse"] == pytest.approx(1.0, abs=0.05)

    def test_comparisons_pass(self):
        spec, mask = disk_domain(64)
        quad = make_quadrature(2, 128)
        rng = np.random.default_rng(0)
        fields = [(f"f{i}", u) for i, u in
                  enumerate(random_bumps(mask, 5, rng, signed=True))]
        rec = check_comparisons(fields, mask, quad)
        assert rec.passed
        assert rec.details["c2_worst"] <= 1e-12

    def test_superadditivity_pass(self):
        spec, mask = square_domain(64)
        quad = make_quadrature(2, 128)
        rng = np.random.default_rng(1)
        fields = [(f"f{i}", u) for i, u in
                  enumerate(random_bumps(mask, 3, rng, signed=True))]
        rec = check_superadditivity(fields, mask, quad)
        assert rec.passed

    def test_superadditivity_trivial_level(self):
        from affinebv import affine_energy_extended, truncate

        spec, mask = square_domain(64)
        quad = make_quadrature(2, 128)
        rng = np.random.default_rng(2)
        (u,) = random_bumps(mask, 1, rng)
        h = float(np.max(np.abs(u.values))) + 1.0
        pair = truncate(u, h)
        e = affine_energy_extended(u, mask, "face-atoms", quad)
        et = affine_energy_extended(pair.truncated, mask, "face-atoms", quad)
        assert et.value == pytest.approx(e.value, rel=1e-12)
        assert not pair.remainder.values.any()

    def test_affine_invariance_pass(self):
        spec, mask = disk_domain(64)
        quad = make_quadrature(2, 128)
        rng = np.random.default_rng(3)
        fields = [(f"f{i}", u) for i, u in
                  enumerate(random_bumps(mask, 2, rng))]
        rec = check_affine_invariance(fields, mask, quad, n_maps=10)
        assert rec.passed
        assert rec.details["atom_worst"] <= 1e-3

    def test_wirtinger_gap(self):
        rec = check_wirtinger_gap(grid=64, dirs=64)
        assert rec.passed
        assert rec.details["energy"] == 0.0
        assert rec.details["centered_l1"] > 0.15
        assert rec.details["control_energy"] > 0.0

    def test_huang_li_pass(self):
        spec, mask = disk_domain(64)
        quad = make_quadrature(2, 128)
        rng = np.random.default_rng(4)
        fields = [(f"f{i}", u) for i, u in
                  enumerate(random_bumps(mask, 2, rng))]
        rec = check_huang_li(fields, mask, quad)
        assert rec.passed
        for d in rec.details.values():
            assert d["f_best"] <= d["f_identity"] * (1 + 1e-12)


class TestRunSuite:
    def test_all_pass(self):
        report = run_suite(small_config())
        assert report.passed
        names = [r.name for r in report.records]
        for suite in ("comparisons", "superadditivity", "wirtinger_gap"):
            assert suite in names

    def test_empty_corpus_vacuous(self):
        report = run_suite(small_config(n_fields=0))
        assert report.passed
        assert all(r.details.get("empty") for r in report.records)

    def test_forced_tolerance_fails(self):
        report = run_suite(small_config(forced_tolerance=0.0,
                                        suites=("sobolev_zhang",)))
        assert not report.passed

    def test_deterministic_reports_identical(self):
        cfg = small_config(deterministic=True, suites=("comparisons",))
        r1 = run_suite(cfg).to_json()
        r2 = run_suite(cfg).to_json()
        assert r1 == r2

    def test_schema_valid(self):
        schema = json.loads(
            resources.files("affinebv").joinpath("report_schema.json")
            .read_text())
        report = run_suite(small_config(suites=("wirtinger_gap",)))
        jsonschema.validate(json.loads(report.to_json()), schema)

    def test_schema_golden_shape(self):
        report = run_suite(small_config(suites=("wirtinger_gap",)))
        doc = report.as_dict()
        assert set(doc) == {"version", "passed", "config", "records"}
        rec = doc["records"][0]
        assert set(rec) == {"name", "statement", "corpus", "count",
                            "worst_margin", "tolerance", "passed", "details"}
