import json

import numpy as np
import pytest

from datorus.anosov import ConeField
from datorus.properties import SCHEMA_VERSION, PropertyRecord, PropertyReport, reference_orbit, \
    verify_da_properties


@pytest.fixture(scope="module")
def report(da_map):
    return verify_da_properties(da_map, n_samples=20_000, seed=0)


def test_all_properties_pass(report):
    assert [r.name for r in report.records] == [f"P{i}" for i in range(1, 8)]
    bad = [(r.name, r.value) for r in report.records if r.status != "PASS"]
    assert not bad, bad
    assert report.all_pass


def test_p1_details(report, da_map):
    r = report["P1"]
    assert r.value == pytest.approx(da_map.params.mu_s * da_map.params.mu_w, abs=1e-10)
    assert r.details["charpoly_error"] < 1e-10
    assert r.details["r_cs_discriminant"] < 0
    # frozen: adapted distance from q to the period-2 orbit {(1/3,1/3,2/3), (2/3,2/3,1/3)}
    assert r.details["r_distance_to_q"] == pytest.approx(0.71, abs=0.01)


def test_p3_exact(report):
    assert report["P3"].value < 1e-12


def test_p4_constants(report, da_map):
    r = report["P4"]
    assert r.value < 1
    assert r.details["on_stable_plane"] == pytest.approx(da_map.model.lambda_c_mod, abs=1e-9)


def test_p5_eps_small(report, da_map):
    d = report["P5"].details
    assert d["eps_measured"] < da_map.params.delta / 10


def test_p7_budget(report, da_map):
    assert report["P7"].value <= 1 + da_map.params.beta
    assert report["P7"].value > 1      # the surgery really does expand some cs-vectors


def test_report_serialises(report):
    d = json.loads(report.to_json())
    assert d["schema_version"] == SCHEMA_VERSION
    assert len(d["properties"]) == 7
    assert all(p["title"] for p in d["properties"])


def test_report_lookup_errors(report):
    with pytest.raises(KeyError):
        report["P9"]


def test_disabled_surgery(linear_map):
    rep = verify_da_properties(linear_map, n_samples=4000, n_semiconj=200)
    assert rep["P1"].status == "N/A"
    assert rep["P5"].value == 0.0
    assert rep.all_pass


def test_failure_is_reported(da_map):
    """Narrow cones make P2 fail instead of silently passing."""
    rep = verify_da_properties(da_map, cones=ConeField(theta_u=0.01, theta_cs=0.15), n_samples=2000,
                               n_semiconj=100)
    assert rep["P2"].status == "FAIL"
    assert not rep.all_pass


def test_record_passed_semantics():
    assert PropertyRecord("X", "N/A", None, "").passed
    assert not PropertyRecord("X", "FAIL", 1.0, "").passed
    assert PropertyReport([PropertyRecord("X", "PASS", 0.0, "")]).all_pass


def test_reference_orbit(da_map):
    orb = reference_orbit(da_map)
    assert orb.shape == (2, 3)
    assert np.allclose(np.sort(orb[:, 0]), [1 / 3, 2 / 3])
