import json
from collections import Counter

import numpy as np
import pytest

from varwave.coeffx import validate_conditions
from varwave.goursat import GridSpec, synthetic_state
from varwave.singular import classify, curves_csv, generic_report, report_json, zero_curves
from conftest import linear_cs, solve_data

GRID = GridSpec(0.05, 20)


def _points(**fns):
    cs = linear_cs()
    st = synthetic_state(GRID, cs, **fns)
    curves = zero_curves(st, "h") + zero_curves(st, "g")
    return st, curves, classify(st, cs, curves)


def test_linear_wave_has_no_zero_set(gaussian_linear):
    cs, d = gaussian_linear
    st = solve_data(cs, d, 1.0, 1 / 32)
    assert zero_curves(st, "h") == [] and zero_curves(st, "g") == []
    assert generic_report(st, cs)["n_flags"] == 0


def test_synthetic_linear_field_contour():
    st, curves, _ = _points(h=lambda X, Y: Y - 0.5)
    assert len(curves) == 1
    assert np.max(np.abs(curves[0].Y - 0.5)) <= 1e-6
    assert curves[0].family == "backward"


def test_synthetic_type_i():
    _, _, pts = _points(h=lambda X, Y: Y - 0.5, l=lambda X, Y: 0.1 * X)
    assert pts and all(p.type == "i" for p in pts)


def test_synthetic_type_ii():
    _, _, pts = _points(h=lambda X, Y: Y - 0.5, l=lambda X, Y: (X - 0.5) ** 2)
    ii = [p for p in pts if p.type == "ii"]
    assert len(ii) == 1
    assert ii[0].X == pytest.approx(0.5, abs=1e-9) and ii[0].Y == pytest.approx(0.5, abs=1e-6)
    assert ii[0].witness["l_XX"] == pytest.approx(2.0, rel=1e-6)


def test_synthetic_type_iii():
    _, curves, pts = _points(h=lambda X, Y: Y - 0.5, g=lambda X, Y: X - 0.5)
    assert Counter(c.family for c in curves) == {"backward": 1, "forward": 1}
    iii = [p for p in pts if p.type == "iii"]
    assert len(iii) == 1
    assert (iii[0].X, iii[0].Y) == pytest.approx((0.5, 0.5), abs=1e-6)


def test_constant_gamma_degeneracy_flagged():
    # d_u lambda vanishes identically, so h = 0 and l_X = 0 together is a forbidden triple
    cs = linear_cs()
    st = synthetic_state(GRID, cs, h=lambda X, Y: Y - 0.5, l=lambda X, Y: (X - 0.5) ** 2)
    rep = generic_report(st, cs)
    assert rep["counts"]["h,du_lam_m,l_X"] > 0
    assert not validate_conditions(cs, 11).generic_ok


def test_cusp_run_classified(cusp_state, tmp_path):
    cs, d, st = cusp_state
    curves = zero_curves(st, "h")
    assert curves
    pts = classify(st, cs, curves)
    ii = [p for p in pts if p.type == "ii"]
    assert ii
    first = min(p.t for p in ii)
    assert 1.2 <= first <= 1.3
    rep = generic_report(st, cs)
    assert rep["n_flags"] == 0
    report_json(curves, pts, tmp_path / "s.json", {"generic": rep})
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["n_type"]["ii"] == len(ii)
    curves_csv(curves, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("curve,family,x,t,X,Y")


def test_bad_field_name(cusp_state):
    with pytest.raises(ValueError):
        zero_curves(cusp_state[2], "p")
