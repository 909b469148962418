"""Parameter-grid engine: transmission / rigidity landscapes and correlations.

Every grid point is an independent task.  Results are merged in the
lexicographic ``(param, E)`` order of the plan regardless of how the points
were scheduled, and floats are written with 17 significant digits, so the CSV
body of a plan is reproducible byte for byte.  Timings only go to the JSON
sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import (
    DefectiveSystemError,
    InsufficientDataError,
    InvalidInputError,
    LeadThresholdError,
    NoChannelError,
    NumericalFailureError,
    SingularSolveError,
)
from .heff import build_heff, phase_rigidity_state, solve_poles
from .models import THRESHOLD_NUDGE, ModelSpec
from .scattering import solve_scattering, transmission_spectral
from .spectral import eig_complex_symmetric

__all__ = [
    "SweepPlan",
    "SweepTable",
    "SliceCorrelation",
    "run_sweep",
    "correlate",
    "pearson",
    "rho_contour_levels",
    "rho_contours",
    "MODEL_DECISIONS",
]

log = logging.getLogger(__name__)

OUTPUTS = ("t", "rho", "poles", "r_lambda")
AXES = ("coupling_v", "disk_radius", "none")

# oracle-equivalence tolerance of the sampled spectral cross-check
SPECTRAL_TOL = {"chain": 1e-8, "double_dot": 1e-8, "billiard2d": 1e-6}

MODEL_DECISIONS = {
    "chain": "hopping -1, zero onsite, leads = semi-infinite chains (band [-2,2]) "
             "coupled to sites 1 and N by hopping v; self-energy v^2*(-exp(ik))",
    "double_dot": "3 sites (dot, wire, dot), H_B[1,2]=H_B[2,3]=u, "
                  "wide-band self-energy -i v^2 on both dots",
    "billiard2d": "square lattice onsite 4 / hopping -1, Dirichlet walls, disk sites "
                  "(|r-c|<R) removed, stripe leads of width w on columns x=0 and "
                  "x=nx-1 centred in y, contact hopping v; |t| = Frobenius norm of "
                  "the channel transmission matrix; rho from channel-1 incidence",
    "coupling_vectors": "w = i v sqrt(sin k/pi) chi per open channel",
}


def _na(reason):
    return f"NA:{reason}"


def _is_na(x):
    return isinstance(x, str)


@dataclass(frozen=True)
class SweepPlan:
    """Grid over energy and (optionally) one model parameter.

    ``energy_grid`` and ``param_grid`` are ``(min, max, n)`` triples with
    inclusive end points.  ``spectral_stride`` controls how often (in flat
    grid index) the eigen-expansion route cross-checks the direct one; ``0``
    disables the check.
    """

    spec: ModelSpec
    energy_grid: Tuple[float, float, int]
    parameter_axis: str = "none"
    param_grid: Optional[Tuple[float, float, int]] = None
    outputs: Tuple[str, ...] = ("t", "rho")
    spectral_stride: int = 16
    workers: int = 1
    lead: str = "L"

    def __post_init__(self):
        e0, e1, n = self.energy_grid
        if int(n) < 1 or not np.isfinite([e0, e1]).all():
            raise InvalidInputError(f"bad energy grid {self.energy_grid}")
        if self.parameter_axis not in AXES:
            raise InvalidInputError(f"parameter_axis must be one of {AXES}")
        if self.parameter_axis != "none":
            if self.param_grid is None or int(self.param_grid[2]) < 1:
                raise InvalidInputError("a swept axis needs param_grid=(min, max, n>=1)")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad or not self.outputs:
            raise InvalidInputError(f"unknown outputs {sorted(bad)}; choose from {OUTPUTS}")
        if "t" not in self.outputs:
            object.__setattr__(self, "outputs", ("t",) + tuple(self.outputs))
        object.__setattr__(self, "outputs", tuple(o for o in OUTPUTS if o in self.outputs))
        if int(self.workers) < 1:
            raise InvalidInputError("workers must be >= 1")

    def energies(self):
        e0, e1, n = self.energy_grid
        return np.linspace(float(e0), float(e1), int(n))

    def parameters(self):
        if self.parameter_axis == "none":
            return np.array([0.0])
        p0, p1, n = self.param_grid
        return np.sort(np.linspace(float(p0), float(p1), int(n)))

    def spec_at(self, p):
        return self.spec.with_param(self.parameter_axis, p)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "energy_grid": list(self.energy_grid),
            "parameter_axis": self.parameter_axis,
            "param_grid": None if self.param_grid is None else list(self.param_grid),
            "outputs": list(self.outputs),
            "spectral_stride": int(self.spectral_stride),
            "workers": int(self.workers),
            "lead": self.lead,
        }


@dataclass
class SweepTable:
    """Rows of a sweep; missing values are ``"NA:<reason>"`` strings."""

    columns: List[str]
    rows: List[list]
    metadata: Dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def _index(self, name):
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(name) from None

    def column(self, name) -> np.ndarray:
        """Column as floats, ``NaN`` where the value is missing."""
        j = self._index(name)
        return np.array([np.nan if _is_na(r[j]) else float(r[j]) for r in self.rows])

    def raw(self, name):
        j = self._index(name)
        return [r[j] for r in self.rows]

    @property
    def valid_mask(self):
        return ~np.isnan(self.column("abs_t"))

    @property
    def n_valid(self):
        return int(self.valid_mask.sum())

    @property
    def n_null(self):
        return len(self) - self.n_valid

    def slice(self, p) -> "SweepTable":
        j = self._index("param")
        rows = [r for r in self.rows if r[j] == p]
        return SweepTable(list(self.columns), rows, dict(self.metadata))

    def param_values(self):
        return sorted({r[self._index("param")] for r in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([x if _is_na(x) else format(float(x), ".17g") for x in r])
        return buf.getvalue()

    def write(self, path) -> Tuple[Path, Path]:
        """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (metadata)."""
        path = Path(path)
        path.write_text(self.to_csv())
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path, side

    @classmethod
    def read_csv(cls, path) -> "SweepTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            rows = [[x if x.startswith("NA:") else float(x) for x in r] for r in reader]
        meta = {}
        side = Path(path).with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
        return cls(columns, rows, meta)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


# -- point evaluation -------------------------------------------------------


def _solve_nudged(spec, E, lead):
    # a grid point on a channel threshold is moved by 1e-9 to the open side
    try:
        return solve_scattering(spec, E, lead)
    except (LeadThresholdError, NoChannelError) as exc:
        first = exc
    for dE in (THRESHOLD_NUDGE, -THRESHOLD_NUDGE):
        try:
            return solve_scattering(spec, E + dE, lead)
        except (LeadThresholdError, NoChannelError):
            pass
    raise first


def _rigidities(spec, E):
    try:
        H = build_heff(spec, E).matrix
    except LeadThresholdError:
        H = build_heff(spec, E + THRESHOLD_NUDGE).matrix
    es = eig_complex_symmetric(H)
    return [phase_rigidity_state(es.right_vectors[:, k]) for k in range(len(es))]


def _evaluate_point(task):
    """Evaluate one grid point; never raises for physics failures."""
    spec, E, lead, want_rho, want_rlam, check = task
    start = time.perf_counter()
    out = {}
    try:
        sol = _solve_nudged(spec, E, lead)
        out["re_t"] = sol.t.real
        out["im_t"] = sol.t.imag
        out["abs_t"] = sol.abs_t
        if want_rho:
            if np.isnan(sol.rho.real):
                out["abs_rho"] = out["arg_rho"] = _na("zero_wavefunction")
            else:
                out["abs_rho"] = abs(sol.rho)
                out["arg_rho"] = float(np.angle(sol.rho))
        if check:
            try:
                t_spec = transmission_spectral(spec, sol.energy, full=True)
                err = np.linalg.norm(t_spec - sol.t_matrix) / max(1.0, sol.abs_t)
                out["t_spectral_err"] = float(err)
            except DefectiveSystemError:
                out["t_spectral_err"] = _na("defective")
        else:
            out["t_spectral_err"] = _na("not_sampled")
        reason = None
    except NoChannelError:
        reason = "no_channel"
    except LeadThresholdError:
        reason = "threshold"
    except SingularSolveError:
        reason = "singular"
    except NumericalFailureError:
        reason = "numerical_failure"
    if reason is not None:
        for key in ("re_t", "im_t", "abs_t", "abs_rho", "arg_rho", "t_spectral_err"):
            out[key] = _na(reason)
    if want_rlam:
        try:
            out["r_lambda"] = _rigidities(spec, E)
        except (NumericalFailureError, LeadThresholdError) as exc:
            out["r_lambda"] = _na(type(exc).__name__)
    return out, time.perf_counter() - start


def _init_worker():
    # one BLAS thread per worker: keeps results bit-identical to the serial path
    threadpool_limits(1)


def _map_points(tasks, workers):
    if workers <= 1 or len(tasks) < 2:
        with threadpool_limits(1):
            return [_evaluate_point(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
        return list(pool.map(_evaluate_point, tasks, chunksize=chunk))


def _pole_columns(states):
    cols = []
    for s in states:
        cols.append((s.energy, s.width, s.rigidity))
    return cols


def run_sweep(plan: SweepPlan) -> SweepTable:
    """Evaluate ``plan`` on its full grid.

    Point failures (no open channel, singular solve, ...) become rows whose
    values are ``NA:<reason>``; the sweep itself does not abort.
    """
    t_start = time.perf_counter()
    energies = plan.energies()
    params = plan.parameters()
    want_rho = "rho" in plan.outputs
    want_rlam = "r_lambda" in plan.outputs
    want_poles = "poles" in plan.outputs
    stride = int(plan.spectral_stride)

    tasks = []
    for i, p in enumerate(params):
        spec = plan.spec_at(p)
        for j, E in enumerate(energies):
            flat = i * len(energies) + j
            check = stride > 0 and flat % stride == 0
            tasks.append((spec, float(E), plan.lead, want_rho, want_rlam, check))

    results = _map_points(tasks, int(plan.workers))
    t_points = time.perf_counter() - t_start

    poles = {}
    t_poles = 0.0
    if want_poles:
        t0 = time.perf_counter()
        with threadpool_limits(1):
            for p in params:
                poles[float(p)] = _pole_columns(solve_poles(plan.spec_at(p)))
        t_poles = time.perf_counter() - t0

    columns = ["param", "E", "re_t", "im_t", "abs_t"]
    if want_rho:
        columns += ["abs_rho", "arg_rho"]
    columns.append("t_spectral_err")
    n_r = 0
    if want_rlam:
        n_r = max((len(o["r_lambda"]) for o, _ in results if not _is_na(o["r_lambda"])), default=0)
        columns += [f"r_{k + 1}" for k in range(n_r)]
    n_pole = max((len(v) for v in poles.values()), default=0)
    for k in range(n_pole):
        columns += [f"pole_E_{k + 1}", f"pole_Gamma_{k + 1}", f"pole_r_{k + 1}"]

    rows = []
    k = 0
    for p in params:
        pc = poles.get(float(p), [])
        for E in energies:
            out, _ = results[k]
            k += 1
            row = [float(p), float(E), out["re_t"], out["im_t"], out["abs_t"]]
            if want_rho:
                row += [out["abs_rho"], out["arg_rho"]]
            row.append(out["t_spectral_err"])
            if want_rlam:
                rl = out["r_lambda"]
                if _is_na(rl):
                    row += [rl] * n_r
                else:
                    row += list(rl) + [_na("absent")] * (n_r - len(rl))
            for q in range(n_pole):
                row += list(pc[q]) if q < len(pc) else [_na("absent")] * 3
            rows.append(row)

    table = SweepTable(columns, rows)
    errs = [o["t_spectral_err"] for o, _ in results if not _is_na(o["t_spectral_err"])]
    tol = SPECTRAL_TOL[plan.spec.kind]
    per_point = np.array([dt for _, dt in results])
    reasons = {}
    for o, _ in results:
        if _is_na(o["abs_t"]):
            reasons[o["abs_t"][3:]] = reasons.get(o["abs_t"][3:], 0) + 1
    table.metadata = {
        "phaserig_version": __version__,
        "plan": plan.to_dict(),
        "model_decisions": MODEL_DECISIONS,
        "grid": {"n_E": len(energies), "n_p": len(params), "n_points": len(tasks)},
        "null_rows": {"count": table.n_null, "reasons": reasons},
        "spectral_check": {
            "n_checked": len(errs),
            "max_error": max(errs) if errs else None,
            "tolerance": tol,
            "passed": all(e < tol for e in errs),
        },
        "poles": {str(p): [list(c) for c in v] for p, v in poles.items()},
        "timing": {
            "wall_seconds": time.perf_counter() - t_start,
            "points_seconds": t_points,
            "poles_seconds": t_poles,
            "per_point_mean": float(per_point.mean()) if len(per_point) else 0.0,
            "per_point_max": float(per_point.max()) if len(per_point) else 0.0,
        },
    }
    log.info("sweep %s: %d points, %d null, %.2fs", plan.spec.kind, len(tasks),
             table.n_null, table.metadata["timing"]["wall_seconds"])
    return table


# -- statistics -------------------------------------------------------------


@dataclass(frozen=True)
class SliceCorrelation:
    param: float
    coefficient: float
    n_rows: int
    reason: Optional[str] = None


def pearson(x, y, min_rows=10):
    """Pearson coefficient of two equal-length samples, ignoring NaN pairs.

    Raises ``InsufficientDataError`` below ``min_rows`` valid pairs; returns
    ``nan`` when either sample is constant.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < min_rows:
        raise InsufficientDataError(f"{int(ok.sum())} valid rows, need {min_rows}")
    x, y = x[ok], y[ok]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def correlate(table: SweepTable, against="one_minus_rho", min_rows=10) -> List[SliceCorrelation]:
    """Per-slice Pearson correlation of ``|t|`` with ``1 - |rho|`` (or ``|rho|``)."""
    if against not in ("one_minus_rho", "rho"):
        raise InvalidInputError(f"against must be 'one_minus_rho' or 'rho', got {against!r}")
    out = []
    for p in table.param_values():
        sl = table.slice(p)
        t = sl.column("abs_t")
        rho = sl.column("abs_rho")
        y = 1.0 - rho if against == "one_minus_rho" else rho
        n = int((np.isfinite(t) & np.isfinite(y)).sum())
        try:
            c = pearson(t, y, min_rows)
        except InsufficientDataError:
            out.append(SliceCorrelation(p, float("nan"), n, "insufficient_data"))
            continue
        out.append(SliceCorrelation(p, c, n, "constant_column" if np.isnan(c) else None))
    return out


def rho_contour_levels(spacing=1 / 30):
    """Contour levels ``spacing, 2*spacing, ..., 1 - spacing``."""
    n = int(round(1 / spacing))
    return np.arange(1, n) / n


def rho_contours(table: SweepTable, spacing=1 / 30):
    """Iso-|rho| polylines of a 2-D (param, E) table.

    Returns a list of ``(level, line_id, E, param)`` tuples, one per vertex.
    """
    import contourpy

    params = np.array(table.param_values())
    energies = np.unique(table.column("E"))
    Z = table.column("abs_rho").reshape(len(params), len(energies))
    gen = contourpy.contour_generator(energies, params, np.ma.masked_invalid(Z))
    out = []
    line_id = 0
    for level in rho_contour_levels(spacing):
        for line in gen.lines(level):
            for E, p in line:
                out.append((float(level), line_id, float(E), float(p)))
            line_id += 1
    return out
