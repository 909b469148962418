import json

import numpy as np
import pytest

from phaserig.errors import InsufficientDataError, InvalidInputError
from phaserig.models import ModelSpec
from phaserig.scattering import solve_scattering
from phaserig.sweep import (
    SweepPlan,
    SweepTable,
    correlate,
    pearson,
    rho_contour_levels,
    rho_contours,
    run_sweep,
)

U = np.sqrt(2) / 16


def dd_plan(**kw):
    base = dict(spec=ModelSpec.double_dot(U, 0.3), energy_grid=(-0.5, 0.5, 21),
                parameter_axis="coupling_v", param_grid=(0.05, 0.8, 7))
    base.update(kw)
    return SweepPlan(**base)


def test_plan_validation():
    with pytest.raises(InvalidInputError):
        SweepPlan(ModelSpec.chain(), (-1, 1, 0))
    with pytest.raises(InvalidInputError):
        SweepPlan(ModelSpec.chain(), (-1, 1, 5), parameter_axis="u")
    with pytest.raises(InvalidInputError):
        SweepPlan(ModelSpec.chain(), (-1, 1, 5), parameter_axis="coupling_v")
    with pytest.raises(InvalidInputError):
        SweepPlan(ModelSpec.chain(), (-1, 1, 5), outputs=("phase",))
    with pytest.raises(InvalidInputError):
        SweepPlan(ModelSpec.chain(), (-1, 1, 5), workers=0)
    assert SweepPlan(ModelSpec.chain(), (-1, 1, 5), outputs=("rho",)).outputs == ("t", "rho")


def test_single_slice_equals_direct_loop():
    spec = ModelSpec.chain(6, 0.5)
    table = run_sweep(SweepPlan(spec, (-1.5, 1.5, 31), "coupling_v", (0.5, 0.5, 1)))
    assert len(table) == 31
    for E, re_t, im_t, rho in zip(table.column("E"), table.column("re_t"), table.column("im_t"),
                                  table.column("abs_rho")):
        sol = solve_scattering(spec, E)
        assert complex(re_t, im_t) == sol.t
        assert rho == abs(sol.rho)


def test_row_order_and_columns():
    table = run_sweep(dd_plan(outputs=("t", "rho", "poles", "r_lambda")))
    p, E = table.column("param"), table.column("E")
    keys = list(zip(p, E))
    assert keys == sorted(keys)
    assert len(table) == 21 * 7
    for name in ("abs_t", "abs_rho", "arg_rho", "t_spectral_err", "r_1", "r_3",
                 "pole_E_1", "pole_Gamma_3", "pole_r_2"):
        assert name in table.columns
    # poles are solved once per slice and repeated on every row of the slice
    sl = table.slice(p[0])
    assert len(set(sl.raw("pole_Gamma_1"))) == 1


def test_deterministic_csv():
    a = run_sweep(dd_plan()).to_csv()
    b = run_sweep(dd_plan()).to_csv()
    assert a == b


def test_parallel_equals_serial():
    serial = run_sweep(dd_plan(outputs=("t", "rho", "r_lambda")))
    parallel = run_sweep(dd_plan(outputs=("t", "rho", "r_lambda"), workers=4))
    assert serial.to_csv() == parallel.to_csv()


def test_null_row_accounting():
    plan = SweepPlan(ModelSpec.chain(6, 0.5), (-3.0, 3.0, 61), "coupling_v", (0.3, 0.7, 3))
    table = run_sweep(plan)
    assert table.n_null + table.n_valid == 61 * 3
    assert table.n_null == 3 * 20  # |E| > 2 on a 0.1 grid, band edges nudged inside
    assert table.metadata["null_rows"]["reasons"] == {"no_channel": 60}
    assert set(table.raw("abs_t")[0:1]) == {"NA:no_channel"}


def test_threshold_points_are_nudged():
    table = run_sweep(SweepPlan(ModelSpec.chain(6, 0.5), (-2.0, 2.0, 5)))
    assert table.n_null == 0
    assert table.column("E")[0] == -2.0


def test_zero_coupling_rows():
    table = run_sweep(SweepPlan(ModelSpec.chain(6, 0.0), (-1.0, 1.0, 11)))
    assert np.all(table.column("abs_t") == 0)
    assert all(x == "NA:zero_wavefunction" for x in table.raw("abs_rho"))


def test_spectral_subsample():
    table = run_sweep(dd_plan(spectral_stride=16))
    errs = table.raw("t_spectral_err")
    checked = [e for e in errs if not isinstance(e, str)]
    assert len(checked) == len(range(0, 21 * 7, 16))
    assert max(checked) < 1e-8
    assert table.metadata["spectral_check"]["passed"]


def test_defective_point_flagged():
    # the double dot is exactly at its branch point for v = 1/2
    table = run_sweep(SweepPlan(ModelSpec.double_dot(U, 0.5), (0.0, 0.0, 1), spectral_stride=1))
    assert table.raw("t_spectral_err") == ["NA:defective"]
    assert table.column("abs_t")[0] == pytest.approx(1.0)


def test_csv_format_and_roundtrip(tmp_path):
    table = run_sweep(SweepPlan(ModelSpec.chain(6, 0.5), (-2.5, 2.0, 10), outputs=("t", "rho", "poles")))
    csv_path, side = table.write(tmp_path / "s.csv")
    text = csv_path.read_text()
    assert text.splitlines()[0].startswith("param,E,re_t,im_t,abs_t,abs_rho,arg_rho")
    assert "NA:no_channel" in text and "\r" not in text
    back = SweepTable.read_csv(csv_path)
    assert back.columns == table.columns
    assert np.array_equal(back.column("re_t"), table.column("re_t"), equal_nan=True)
    meta = json.loads(side.read_text())
    assert meta["plan"]["spec"]["kind"] == "chain"
    assert "chain" in meta["model_decisions"]
    assert meta["phaserig_version"]
    assert meta["timing"]["wall_seconds"] > 0
    assert meta["grid"]["n_points"] == 10


def test_fig1_peaks():
    table = run_sweep(SweepPlan(ModelSpec.chain(6, 0.5), (-2.0, 2.0, 2000)))
    t = table.column("abs_t")
    peaks = np.sum((t[1:-1] > t[:-2]) & (t[1:-1] >= t[2:]) & (t[1:-1] > 0.5))
    assert peaks == 6


def test_pearson_and_correlate_edge_cases():
    with pytest.raises(InsufficientDataError):
        pearson(np.arange(5.0), np.arange(5.0))
    assert np.isnan(pearson(np.ones(12), np.arange(12.0)))
    assert pearson(np.arange(12.0), 2 * np.arange(12.0) + 1) == pytest.approx(1.0)
    table = SweepTable(["param", "E", "abs_t", "abs_rho"],
                       [[0.0, float(e), 0.5, 0.9] for e in range(12)]
                       + [[1.0, float(e), 0.1 * e, 0.2] for e in range(5)])
    res = correlate(table)
    assert res[0].reason == "constant_column" and np.isnan(res[0].coefficient)
    assert res[1].reason == "insufficient_data" and res[1].n_rows == 5
    with pytest.raises(InvalidInputError):
        correlate(table, against="t")


def test_correlation_anti_test():
    table = run_sweep(SweepPlan(ModelSpec.chain(6, 0.7), (-1.9, 1.9, 400)))
    c1 = correlate(table)[0].coefficient
    c2 = correlate(table, against="rho")[0].coefficient
    assert c1 == pytest.approx(-c2, abs=1e-12)
    assert c1 > 0 > c2


def test_contours():
    levels = rho_contour_levels()
    assert len(levels) == 29 and levels[0] == pytest.approx(1 / 30)
    table = run_sweep(dd_plan(energy_grid=(-0.5, 0.5, 41), param_grid=(0.05, 0.8, 31)))
    lines = rho_contours(table)
    assert lines
    # vertices lie inside the grid
    E = np.array([c[2] for c in lines])
    v = np.array([c[3] for c in lines])
    assert E.min() >= -0.5 and E.max() <= 0.5 and v.min() >= 0.05 and v.max() <= 0.8
