"""Command-line interface: figure data, pole tables, branch points and generic sweeps.

Every command resolves its configuration in three layers (command defaults,
then an optional ``--config`` file, then explicit flags), echoes the resolved
configuration to ``<out-dir>/<command>.cfg`` and into every JSON sidecar, and
writes deterministic CSV bodies.  Feeding a sidecar back through ``--config``
reproduces the run.

Exit codes: 0 success, 1 runtime error or branch point not found, 2 usage
error, 3 a consistency check of the run failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BranchPointNotFoundError, InvalidInputError, PhaseRigError
from .heff import build_heff, find_branch_point, solve_poles
from .models import ModelSpec
from .spectral import EigenSystem, eig_complex_symmetric, track_pairing
from .sweep import SweepPlan, SweepTable, correlate, rho_contours, run_sweep

log = logging.getLogger("phaserig")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

U_DEFAULT = math.sqrt(2) / 16
# single-channel window of width-8 leads, 0.01 inside the first two thresholds
FIG3_E_WINDOW = (0.1306, 0.4579)

# key -> parser for values coming from a config file
CONFIG_TYPES = {
    "model": str,
    "v": lambda s: [float(x) for x in (s if isinstance(s, list) else str(s).split(","))],
    "u": float,
    "n_sites": int,
    "n_e": int,
    "e_min": float,
    "e_max": float,
    "lead_width": int,
    "nx": int,
    "ny": int,
    "disk_radius": float,
    "disk_radius_min": float,
    "disk_radius_max": float,
    "disk_radius_n": int,
    "v_min": float,
    "v_max": float,
    "n_v": int,
    "param_axis": str,
    "outputs": lambda s: ",".join(s) if isinstance(s, list) else str(s),
    "spectral_stride": int,
    "out_dir": str,
    "threads": int,
    "no_render": lambda s: s if isinstance(s, bool) else str(s).strip().lower() in ("1", "true", "yes"),
}

_COMMON = {
    "u": U_DEFAULT,
    "n_sites": 6,
    "lead_width": 8,
    "nx": None,
    "ny": None,
    "disk_radius": None,
    "spectral_stride": 16,
    "out_dir": ".",
    "threads": 1,
    "no_render": False,
    "param_axis": "none",
    "outputs": "t,rho",
}

DEFAULTS = {
    "fig1": dict(_COMMON, model="chain", v=[0.5, 0.7], n_e=2000, e_min=-2.0, e_max=2.0,
                 outputs="t,rho,poles"),
    "fig2": dict(_COMMON, model="double_dot", v=None, n_e=201, e_min=-0.5, e_max=0.5,
                 v_min=0.05, v_max=0.8, n_v=151),
    "fig3": dict(_COMMON, model="billiard2d", v=[1.0], n_e=64, e_min=FIG3_E_WINDOW[0],
                 e_max=FIG3_E_WINDOW[1], disk_radius_min=0.0, disk_radius_max=12.0,
                 disk_radius_n=16),
    "poles": dict(_COMMON, model="chain", v=[0.5]),
    "ep-locate": dict(_COMMON, model="double_dot", v=None, e_min=-0.5, e_max=0.5,
                      v_min=0.05, v_max=0.8),
    "sweep": dict(_COMMON, model="chain", v=[0.5], n_e=401, e_min=-2.0, e_max=2.0,
                  v_min=0.05, v_max=1.0, n_v=20, disk_radius_min=0.0,
                  disk_radius_max=12.0, disk_radius_n=16),
}

FIXED_MODEL = {"fig1": "chain", "fig2": "double_dot", "fig3": "billiard2d"}


class UsageError(Exception):
    pass


# -- configuration ----------------------------------------------------------


def read_config(path):
    """Parse a ``key=value`` file or a JSON sidecar into a dict of typed values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        data = json.loads(text)
        raw = data.get("config", data)
    else:
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val
    out = {}
    for key, val in raw.items():
        key = key.replace("-", "_")
        if key in ("command", "version"):
            continue
        if key not in CONFIG_TYPES:
            raise UsageError(f"unknown config key {key!r} in {path}")
        if val is None or val == "None":
            out[key] = None
            continue
        try:
            out[key] = CONFIG_TYPES[key](val)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key!r} in {path}: {val!r}") from exc
    return out


def resolve_config(args):
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        cfg.update(read_config(args.config))
    for key in CONFIG_TYPES:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    fixed = FIXED_MODEL.get(args.command)
    if fixed and cfg["model"] != fixed:
        raise UsageError(f"{args.command} is defined for model {fixed!r}, got {cfg['model']!r}")
    if cfg["model"] not in ("chain", "double_dot", "billiard2d"):
        raise UsageError(f"unknown model {cfg['model']!r}")
    if cfg.get("v") is None and cfg["model"] != "double_dot":
        cfg["v"] = [1.0 if cfg["model"] == "billiard2d" else 0.5]
    if cfg.get("v") is None:
        cfg["v"] = [0.5]
    if args.command != "fig1" and len(cfg["v"]) != 1:
        raise UsageError(f"{args.command} takes a single --v value")
    cfg["command"] = args.command
    return cfg


def write_config_echo(cfg, out_dir):
    path = Path(out_dir) / f"{cfg['command']}.cfg"
    lines = [f"# phaserig {__version__} resolved configuration"]
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, list):
            val = ",".join(repr(float(x)) for x in val)
        lines.append(f"{key}={val}")
    path.write_text("\n".join(lines) + "\n")
    return path


def build_spec(cfg, v=None):
    v = float(cfg["v"][0] if v is None else v)
    kind = cfg["model"]
    if kind == "chain":
        return ModelSpec.chain(cfg["n_sites"], v)
    if kind == "double_dot":
        return ModelSpec.double_dot(cfg["u"], v)
    dims = None
    if cfg.get("nx") or cfg.get("ny"):
        w = int(cfg["lead_width"])
        dims = (int(cfg.get("nx") or 4 * w), int(cfg.get("ny") or 5 * w))
    r = cfg.get("disk_radius") or 0.0
    return ModelSpec.billiard(cfg["lead_width"], r, v=v, dims=dims)


def _radius_grid(cfg):
    r0, r1, n = cfg["disk_radius_min"], cfg["disk_radius_max"], int(cfg["disk_radius_n"])
    if cfg.get("disk_radius") is not None:
        # a single --disk-radius fixes the slice
        r0 = r1 = float(cfg["disk_radius"])
    if r0 == r1:
        n = 1
    return (float(r0), float(r1), n)


# -- output helpers ---------------------------------------------------------


class Run:
    """Collects written files and check results for one command."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg["out_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.failed_checks = []

    def table(self, table: SweepTable, name):
        table.metadata["config"] = self.cfg
        table.metadata["command"] = self.cfg["command"]
        csv_path, side = table.write(self.out / name)
        self.files += [csv_path, side]
        chk = table.metadata.get("spectral_check")
        if chk and not chk["passed"]:
            self.failed_checks.append(
                f"{name}: spectral cross-check max error {chk['max_error']:.3e} > {chk['tolerance']:.0e}"
            )
        return csv_path

    def text(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.files.append(path)
        return path

    def script(self, name, figure, **params):
        from .plotting import write_plot_script

        path = write_plot_script(self.out / name, figure, **params)
        self.files.append(path)
        if not self.cfg["no_render"]:
            self.render(path)
        return path

    def render(self, script):
        try:
            from .plotting import render_script
        except ImportError as exc:  # pragma: no cover
            log.warning("rendering skipped: %s", exc)
            return
        png = script.with_name(script.stem.replace("_plot", "") + ".png")
        try:
            self.files.append(render_script(script, png))
        except ImportError as exc:
            log.warning("rendering skipped (matplotlib unavailable): %s", exc)

    def finish(self):
        self.files.append(write_config_echo(self.cfg, self.out))
        for f in self.files:
            print(f"wrote {f}")
        for msg in self.failed_checks:
            print(f"CHECK FAILED: {msg}", file=sys.stderr)
        return EXIT_CHECK if self.failed_checks else EXIT_OK


def _plan(cfg, spec, axis="none", pgrid=None, outputs=None):
    out = tuple((outputs or cfg["outputs"]).split(","))
    return SweepPlan(
        spec=spec,
        energy_grid=(cfg["e_min"], cfg["e_max"], int(cfg["n_e"])),
        parameter_axis=axis,
        param_grid=pgrid,
        outputs=tuple(o.strip() for o in out if o.strip()),
        spectral_stride=int(cfg["spectral_stride"]),
        workers=int(cfg["threads"]),
    )


def _fmt6(x):
    return f"{round(float(x), 6) + 0.0:.6f}"


# -- commands ---------------------------------------------------------------


def cmd_fig1(cfg):
    run = Run(cfg)
    files = []
    for v in cfg["v"]:
        table = run_sweep(_plan(cfg, build_spec(cfg, v)))
        name = f"fig1_v{v:g}.csv"
        run.table(table, name)
        files.append((f"v={v:g}", name))
        t = table.column("abs_t")
        peaks = int(np.sum((t[1:-1] > t[:-2]) & (t[1:-1] >= t[2:]) & (t[1:-1] > 0.5)))
        print(f"v={v:g}: {peaks} transmission peaks above 0.5, {table.n_null} null rows")
    run.script("fig1_plot.py", "fig1", files=files)
    return run.finish()


def _rez_curves(cfg, vs):
    """Eigenvalues of H_eff(E=0) versus v, continued by eigenvector overlap."""
    rows = []
    prev = None
    for v in vs:
        es = eig_complex_symmetric(build_heff(build_spec(cfg, v), 0.0).matrix)
        perm = np.arange(len(es)) if prev is None else track_pairing(prev, es)
        prev = EigenSystem(es.eigenvalues[perm], es.right_vectors[:, perm], es.c_norms_ok[perm])
        z = prev.eigenvalues
        rows.append([float(v)] + [float(x) for x in z.real] + [float(x) for x in z.imag])
    n = (len(rows[0]) - 1) // 2
    cols = ["v"] + [f"re_z{k + 1}" for k in range(n)] + [f"im_z{k + 1}" for k in range(n)]
    return SweepTable(cols, rows)


def cmd_fig2(cfg):
    run = Run(cfg)
    spec = build_spec(cfg)
    pgrid = (cfg["v_min"], cfg["v_max"], int(cfg["n_v"]))
    table = run_sweep(_plan(cfg, spec, "coupling_v", pgrid))
    landscape = run.table(table, "fig2_landscape.csv")

    contours = rho_contours(table, 1 / 30)
    ct = SweepTable(["level", "line", "E", "v"], [list(c) for c in contours],
                    {"spacing": 1 / 30, "config": cfg})
    run.table(ct, "fig2_contours.csv")

    vs = np.linspace(cfg["v_min"], cfg["v_max"], int(cfg["n_v"]))
    run.table(_rez_curves(cfg, vs), "fig2_rez.csv")

    rho = table.column("abs_rho")
    if np.isfinite(rho).any():
        i = int(np.nanargmin(rho))
        print(f"min |rho| = {rho[i]:.6g} at v={table.column('param')[i]:.6g}, "
              f"E={table.column('E')[i]:.6g}")

    v_c = e_c = None
    status = EXIT_OK
    try:
        bp = find_branch_point(spec, (cfg["v_min"], cfg["v_max"]), (cfg["e_min"], cfg["e_max"]))
        v_c, e_c = bp.v_c, bp.E_c
        run.text("fig2_branch_point.json", _bp_json(bp, cfg))
        print(f"branch point: v_c={_fmt6(v_c)}, E_c={_fmt6(e_c)}")
    except BranchPointNotFoundError as exc:
        print(f"branch point: not found ({exc})")
        status = EXIT_ERROR
    run.script("fig2_plot.py", "fig2", landscape=landscape.name, rez="fig2_rez.csv",
               v_c=v_c, e_c=e_c)
    code = run.finish()
    return code if code != EXIT_OK else status


def cmd_fig3(cfg):
    run = Run(cfg)
    rgrid = _radius_grid(cfg)
    spec = build_spec(dict(cfg, disk_radius=rgrid[0]))
    table = run_sweep(_plan(cfg, spec, "disk_radius", rgrid, outputs="t,rho"))
    meta = dict(table.metadata)
    t_cols = ["param", "E", "re_t", "im_t", "abs_t", "t_spectral_err"]
    r_cols = ["param", "E", "abs_rho", "arg_rho"]
    for cols, name in ((t_cols, "fig3_t.csv"), (r_cols, "fig3_rho.csv")):
        idx = [table.columns.index(c) for c in cols]
        sub = SweepTable(cols, [[r[j] for j in idx] for r in table.rows], dict(meta))
        run.table(sub, name)

    corr = correlate(table)
    rows = [[c.param, c.coefficient if c.reason is None else f"NA:{c.reason}", c.n_rows] for c in corr]
    good = sum(1 for c in corr if c.reason is None and c.coefficient > 0.3)
    summary = {
        "n_slices": len(corr),
        "slices_above_0.3": good,
        "fraction_above_0.3": good / len(corr) if corr else float("nan"),
        "timing": meta["timing"],
    }
    ctab = SweepTable(["r", "pearson_t_vs_1_minus_rho", "n_rows"], rows, {"summary": summary})
    run.table(ctab, "fig3_correlation.csv")
    print(f"correlation |t| vs 1-|rho|: {good}/{len(corr)} r-slices above 0.3; "
          f"sweep wall time {meta['timing']['wall_seconds']:.1f}s")
    run.script("fig3_plot.py", "fig3", t_file="fig3_t.csv", rho_file="fig3_rho.csv")
    return run.finish()


def cmd_poles(cfg):
    run = Run(cfg)
    spec = build_spec(cfg)
    states = solve_poles(spec)
    rows = [[k + 1, s.energy, s.width, s.rigidity, s.a_norm, float(s.converged), s.iterations]
            for k, s in enumerate(states)]
    table = SweepTable(["index", "E", "Gamma", "r", "A", "converged", "iterations"], rows,
                       {"spec": spec.to_dict(), "version": __version__})
    run.table(table, "poles.csv")
    for k, s in enumerate(states, 1):
        print(f"{k}: E={s.energy:+.10f} Gamma={s.width:.10f} r={s.rigidity:.6f} "
              f"converged={s.converged} iterations={s.iterations}")
    bad = [k for k, s in enumerate(states, 1) if not s.converged]
    if bad:
        run.failed_checks.append(f"poles {bad} did not converge")
    return run.finish()


def _bp_json(bp, cfg):
    rec = {
        "v_c": bp.v_c,
        "E_c": bp.E_c,
        "gap": bp.gap,
        "chirality_error": bp.chirality_error,
        "chirality_sign": bp.chirality_sign,
        "eigenvalue": [bp.eigenvalue.real, bp.eigenvalue.imag],
        "pair": list(bp.pair),
        "rigidities": list(bp.rigidities),
        "config": cfg,
        "version": __version__,
    }
    return json.dumps(rec, indent=2, sort_keys=True) + "\n"


def cmd_ep_locate(cfg):
    run = Run(cfg)
    spec = build_spec(cfg)
    try:
        bp = find_branch_point(spec, (cfg["v_min"], cfg["v_max"]), (cfg["e_min"], cfg["e_max"]))
    except BranchPointNotFoundError as exc:
        print(f"branch point: not found ({exc})")
        run.finish()
        return EXIT_ERROR
    run.text("branch_point.json", _bp_json(bp, cfg))
    print(f"v_c={_fmt6(bp.v_c)}, E_c={_fmt6(bp.E_c)}")
    print(f"gap={bp.gap:.3e} chirality_error={bp.chirality_error:.3e} "
          f"r=({bp.rigidities[0]:.3e}, {bp.rigidities[1]:.3e})")
    return run.finish()


def cmd_sweep(cfg):
    run = Run(cfg)
    axis = cfg["param_axis"]
    pgrid = None
    if axis == "coupling_v":
        pgrid = (cfg["v_min"], cfg["v_max"], int(cfg["n_v"]))
    elif axis == "disk_radius":
        pgrid = _radius_grid(cfg)
    spec = build_spec(cfg if axis != "disk_radius" else dict(cfg, disk_radius=pgrid[0]))
    table = run_sweep(_plan(cfg, spec, axis, pgrid))
    run.table(table, "sweep.csv")
    print(f"{len(table)} rows, {table.n_null} null")
    return run.finish()


COMMANDS = {
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "poles": cmd_poles,
    "ep-locate": cmd_ep_locate,
    "sweep": cmd_sweep,
}

_HELP = {
    "fig1": "chain transmission and phase rigidity versus energy",
    "fig2": "double-dot landscapes over (v, E) and the branch point",
    "fig3": "billiard landscapes over (E, disk radius) and correlations",
    "poles": "resonance poles from the fixed-point equations",
    "ep-locate": "locate the branch point (exceptional point)",
    "sweep": "generic parameter sweep",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--model", choices=["chain", "double_dot", "billiard2d"])
    g.add_argument("--v", type=float, nargs="+", help="coupling strength(s)")
    g.add_argument("--u", type=float, help="double-dot internal coupling")
    g.add_argument("--n-sites", type=int)
    g.add_argument("--lead-width", type=int)
    g.add_argument("--nx", type=int, help="billiard length (sites)")
    g.add_argument("--ny", type=int, help="billiard height (sites)")
    g.add_argument("--disk-radius", "--r", dest="disk_radius", type=float)
    g = common.add_argument_group("grid")
    g.add_argument("--n-e", type=int)
    g.add_argument("--e-min", type=float)
    g.add_argument("--e-max", type=float)
    g.add_argument("--v-min", type=float)
    g.add_argument("--v-max", type=float)
    g.add_argument("--n-v", type=int)
    g.add_argument("--disk-radius-min", type=float)
    g.add_argument("--disk-radius-max", type=float)
    g.add_argument("--disk-radius-n", type=int)
    g.add_argument("--param-axis", choices=["coupling_v", "disk_radius", "none"])
    g.add_argument("--outputs", help="comma list of t,rho,poles,r_lambda")
    g.add_argument("--spectral-stride", type=int)
    g = common.add_argument_group("run")
    g.add_argument("--out-dir")
    g.add_argument("--threads", type=int, help="worker processes")
    g.add_argument("--config", help="key=value file or JSON sidecar of a previous run")
    g.add_argument("--no-render", action="store_true", default=None, help="skip PNG rendering")
    g.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="phaserig", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_HELP[name])
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if int(cfg["threads"]) < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"phaserig {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"phaserig {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PhaseRigError as exc:
        print(f"phaserig {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"phaserig {args.command}: I/O error on {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
