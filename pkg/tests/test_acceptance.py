"""The ten acceptance criteria at their stated tolerances.

Criteria 1 to 9 are read from a full ``entroflow suite`` run; criterion 10
repeats the run with the same seed and compares the outputs byte for byte.
Each test records its criterion so that the session prints one PASS/FAIL
line per criterion.
"""
import json

import pytest

from entroflow.cli import EXIT_OK, main

SEED = 0


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    outs = []
    for tag in ("first", "second"):
        out = tmp_path_factory.mktemp(tag)
        code = main(["suite", "--seed", str(SEED), "--space", "ring:32", "--out-dir", str(out)])
        outs.append((code, out))
    return outs


@pytest.fixture(scope="module")
def details(runs):
    code, out = runs[0]
    rep = json.loads((out / "suite_report.json").read_text())
    return {c["criterion"]: c for c in rep["criteria"]}


def mark(record_property, k, title):
    record_property("criterion", k)
    record_property("title", title)


def show(ok, k, title):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title}")


def test_criterion_01_integration_by_parts(details, record_property):
    title = "integration by parts on 100 random triples, 1e-12"
    mark(record_property, 1, title)
    d = details[1]["details"]
    ok = d["trials"] == 100 and d["max_rel_error"] <= 1e-12
    show(ok, 1, title)
    assert ok


def test_criterion_02_heat_semigroup(details, record_property):
    title = "semigroup, mass, maximum principle, kernel symmetry and positivity, 1e-10"
    mark(record_property, 2, title)
    d = details[2]["details"]
    worst = d["worst"]
    ok = all(worst[key] <= 1e-10 for key in ("semigroup", "mass", "max_principle", "kernel_symmetry"))
    ok = ok and all(row["positive"] and row["kernel_min"] > 0 and row["a_s"] >= 1 for row in d["per_space"])
    show(ok, 2, title)
    assert ok


def test_criterion_03_mollifier(details, record_property):
    title = "mollifier self-adjointness and commutation 1e-12, quadrature order >= 3, monotone sweep"
    mark(record_property, 3, title)
    rows = details[3]["details"]["per_space"]
    ok = all(r["self_adjoint"] <= 1e-12 and r["commutation"] <= 1e-12 and r["monotone"] for r in rows)
    ok = ok and min(min(r["orders"]) for r in rows if r["orders"]) >= 3
    show(ok, 3, title)
    assert ok


def test_criterion_04_drift_roundtrip(details, record_property):
    title = "drift recovery round trip 1e-6 at N=256 on ring 32, Riesz equality 1e-8"
    mark(record_property, 4, title)
    d = details[4]["details"]
    ok = d["N"] == 256 and d["space"] == "ring:32"
    ok = ok and d["relative_vnorm_error"] <= 1e-6 and max(d["riesz_relative_gap"]) <= 1e-8
    show(ok, 4, title)
    assert ok


def test_criterion_05_entropy_identity(details, record_property):
    title = "entropy-generation identity order >= 1.9, decomposition 1e-9"
    mark(record_property, 5, title)
    d = details[5]["details"]
    spaces = {c["space"] for c in d["curves"]}
    ok = {"ring:32", "k2", "grid:8"} <= spaces
    ok = ok and d["min_order"] >= 1.9 and d["decomposition_defect"] <= 1e-9
    show(ok, 5, title)
    assert ok


def test_criterion_06_entropy_speed_inequality(details, record_property):
    title = "inequality slack >= -1e-8 on 200 curves, slack equals osmotic term to 1e-8"
    mark(record_property, 6, title)
    d = details[6]["details"]
    ok = d["curves"] == 200 and d["min_scaled_slack"] >= -1e-8 and d["max_rel_slack_minus_osmotic"] <= 1e-8
    show(ok, 6, title)
    assert ok


def test_criterion_07_heat_dissipation(details, record_property):
    title = "heat-flow entropy dissipation defect order >= 1.9"
    mark(record_property, 7, title)
    ok = details[7]["details"]["min_order"] >= 1.9
    show(ok, 7, title)
    assert ok


def test_criterion_08_control_triangle(details, record_property):
    title = "control oracles: K2 pairwise 1e-4, ring 64 relative 1e-3, KKT 1e-6, beats baseline"
    mark(record_property, 8, title)
    d = details[8]["details"]
    k2 = d["k2"]
    ok = max(k2["solve_vs_brute"], k2["solve_vs_hopf_cole"], k2["hopf_cole_vs_brute"]) <= 1e-4
    ok = ok and d["ring64"]["relative_gap"] <= 1e-3 and d["max_kkt"] <= 1e-6 and d["beats_baseline"]
    show(ok, 8, title)
    assert ok


def test_criterion_09_transport(details, record_property):
    title = "W2 symmetry 1e-9 and triangle inequality, Sinkhorn within 5%, contraction ratio <= 1 + 1e-6"
    mark(record_property, 9, title)
    d = details[9]["details"]
    ok = d["symmetry"] <= 1e-9 and d["triangle_excess"] <= 1e-9
    ok = ok and max(d["sinkhorn_rel_error"]) <= 0.05 and max(d["contraction_ratios"]) <= 1 + 1e-6
    show(ok, 9, title)
    assert ok


def test_criterion_10_determinism(runs, record_property):
    title = "two suite runs with the same seed give byte-identical reports"
    mark(record_property, 10, title)
    (c1, o1), (c2, o2) = runs
    names = ("suite_report.json", "suite_series.csv")
    ok = c1 == c2 == EXIT_OK and all((o1 / n).read_bytes() == (o2 / n).read_bytes() for n in names)
    show(ok, 10, title)
    assert ok
