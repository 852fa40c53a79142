"""Acceptance suite: each criterion runs at its stated tolerance and prints
one PASS/FAIL line.  Scenario bundles are produced once per session.

    pytest tests/test_acceptance.py -v -s
"""
import filecmp
import math

import numpy as np
import pytest

from genwave import harness
from genwave.gennum import EpsGrid, GenNumber, Verdict, classify, estimate_order
from genwave.genlin import GenSymMatrix, GenVector, CausalClass, causal_type, index_of

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name, tag="a"):
        key = (name, tag)
        if key not in cache:
            cfg = harness.default_config(name, seed=0, out_dir=str(root / f"{name}-{tag}"))
            cache[key] = harness.run_scenario(cfg)
        return cache[key]

    return get


def report(capsys, number, title, results):
    """results: list of (label, ok, detail)."""
    ok = all(r[1] for r in results)
    with capsys.disabled():
        detail = "; ".join(f"{lbl}={det}" + ("" if good else " [x]") for lbl, good, det in results)
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} :: {detail}")
    bad = [r for r in results if not r[1]]
    assert not bad, bad


def from_check(bundle, name, fmt="{:.4g}"):
    c = bundle.check(name)
    return name, c.passed, fmt.format(c.value)


def no_errors(bundle):
    return "run", bundle.status != "error", bundle.status


def test_order_estimation(bundles, capsys):
    b = bundles("algebra-suite")
    grid = EpsGrid(1.0, 0.7, 16)
    worst = 0.0
    for a in (-3.0, -1.5, 0.0, 2.0):
        for c in (0.1, 1.0, 10.0):
            fit = estimate_order(GenNumber.from_function(grid, lambda e: c * np.asarray(e) ** a))
            worst = max(worst, abs(fit.slope - a))
    exp_v = classify(GenNumber.from_function(grid, lambda e: np.exp(-1 / np.asarray(e)))).kind
    sin_v = classify(GenNumber.from_function(grid, lambda e: np.sin(1 / np.asarray(e)))).kind
    report(capsys, 1, "order estimation", [
        no_errors(b),
        ("worst |slope - a|", worst <= 0.05, f"{worst:.2e}"),
        ("exp(-1/eps)", exp_v is Verdict.NEGLIGIBLE, exp_v.value),
        ("sin(1/eps)", sin_v is Verdict.INDETERMINATE, sin_v.value),
        from_check(b, "power_law_slopes", "{:.2e}"),
        from_check(b, "exp_negligible"),
        from_check(b, "sin_indeterminate"),
    ])


def test_index_calculus(bundles, capsys):
    b = bundles("algebra-suite")
    grid = EpsGrid(1.0, 0.7, 16)
    mink = index_of(GenSymMatrix.constant(grid, np.diag([-1.0, 1, 1, 1])))
    pos = index_of(GenSymMatrix.diag(grid, [lambda e: np.asarray(e, float), 1.0]))
    osc = index_of(GenSymMatrix.diag(
        grid, [lambda e: np.asarray(e) * np.sin(1 / np.asarray(e)), 1.0]))
    report(capsys, 2, "index calculus", [
        no_errors(b),
        ("minkowski", mink.index == 1, str(mink.index)),
        ("diag(eps,1)", pos.index == 0, str(pos.index)),
        ("diag(eps sin(1/eps),1)", osc.index is None, str(osc.index)),
        from_check(b, "index_minkowski-3+1"),
        from_check(b, "index_diag(eps,1)"),
        from_check(b, "index_diag(eps sin(1/eps),1)"),
        from_check(b, "trace_det_consistency", "{:.2e}"),
    ])


def test_non_trichotomy(bundles, capsys):
    b = bundles("algebra-suite")
    grid = EpsGrid(1.0, 0.7, 16)
    v = GenVector.from_entries(grid, [1.0, lambda e: 1 + np.asarray(e) * np.sin(1 / np.asarray(e)),
                                      0.0])
    ct = causal_type(GenSymMatrix.constant(grid, np.diag([-1.0, 1, 1])), v)
    report(capsys, 3, "non-trichotomy witness", [
        no_errors(b),
        ("causal type", ct is CausalClass.NONE, ct.value),
        from_check(b, "non_trichotomy_witness"),
    ])


def test_inverse_cauchy_schwarz(bundles, capsys):
    b = bundles("algebra-suite")
    rows = b.read_csv("ics.csv")
    report(capsys, 4, "inverse Cauchy-Schwarz", [
        no_errors(b),
        ("pairs", len(rows) == 1000, str(len(rows))),
        from_check(b, "inverse_cauchy_schwarz", "{:.0f} violations"),
    ])


def test_flat_convergence(bundles, capsys):
    b = bundles("flat-convergence")
    rows = b.read_csv("convergence.csv")
    finest = rows[-1]
    report(capsys, 5, "flat-solver convergence", [
        no_errors(b),
        ("ladder", [int(r["cells"]) for r in rows] == [64, 128, 256, 512],
         "/".join(r["cells"] for r in rows)),
        from_check(b, "convergence_order"),
        ("max_error@512", float(finest["max_error"]) <= 1e-3, finest["max_error"]),
        ("energy_drift@512", float(finest["energy_drift"]) <= 1e-4, finest["energy_drift"]),
    ])


def test_cone(bundles, capsys):
    b = bundles("cone")
    growth = [from_check(b, f"growth_{w}_k{k}", "{:.3f}")
              for w in ("metric", "inverse") for k in (1, 2, 3)]
    bounds_ok = all(b.check(f"growth_{w}_k{k}").value >= -k - 0.25
                    for w in ("metric", "inverse") for k in (1, 2, 3))
    sol = b.read_csv("solution.csv")
    report(capsys, 6, "cone scenario", [
        no_errors(b),
        from_check(b, "metric_validity", "index {:.0f}"),
        *growth,
        ("slopes >= -k-0.25", bounds_ok, ""),
        ("J", len(sol) >= 8, str(len(sol))),
        from_check(b, "solution_moderate", "order {:.3f}"),
        from_check(b, "disk_area_deficit", "{:.2e}"),
    ])


def test_collapse(bundles, capsys):
    b = bundles("collapse")
    report(capsys, 7, "collapse scenario", [
        no_errors(b),
        from_check(b, "volume_slope", "{:.4f}"),
        from_check(b, "curvature_sup", "{:.1e}"),
        from_check(b, "injectivity_slope", "{:.4f}"),
    ])


def test_xi_growth(bundles, capsys):
    flat, col = bundles("flat-convergence"), bundles("collapse")
    report(capsys, 8, "xi growth", [
        no_errors(flat), no_errors(col),
        from_check(flat, "xi_growth_minkowski", "G={:.1g}"),
        from_check(col, "xi_growth_torus", "G={:.1g}"),
        from_check(col, "xi_growth_log", "coeff {:.3f}"),
    ])


def test_hoelder_pullback(bundles, capsys):
    b = bundles("hoelder-pullback")
    report(capsys, 9, "Hoelder pullback", [
        no_errors(b),
        from_check(b, "pullback_residual_order", "{:.3f}"),
        from_check(b, "second_derivative_order", "{:.3f}"),
        from_check(b, "pullback_moderate_zero", "order {:.3f}"),
    ])


@pytest.mark.parametrize("scenario", ["algebra-suite", "flat-convergence", "collapse"])
def test_determinism(bundles, capsys, scenario):
    a, b = bundles(scenario, "a"), bundles(scenario, "b")
    names = [f["path"] for f in a.manifest["files"] if f["path"].endswith(".csv")]
    same = [filecmp.cmp(a.root / n, b.root / n, shallow=False) for n in names]
    diff = [n for n, s in zip(names, same) if not s]
    report(capsys, 10, f"determinism ({scenario})", [
        ("csv files", bool(names), str(len(names))),
        ("byte-identical", not diff, "all" if not diff else ",".join(diff)),
        ("checksums", [f["sha256"] for f in a.manifest["files"]]
         == [f["sha256"] for f in b.manifest["files"]], ""),
    ])
