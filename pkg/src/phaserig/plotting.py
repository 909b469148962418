"""Standalone plot scripts for the figure commands, and optional PNG rendering.

Each figure command writes its CSV data plus a small self-contained Python
script that reads those CSVs (relative to the script's own directory) and
draws the figure.  Rendering a PNG simply executes that same script with the
non-interactive Agg backend, so the picture on disk is exactly what the
script would draw.  matplotlib is only imported on the render path.
"""

from __future__ import annotations

import runpy
from pathlib import Path

__all__ = ["FIG1_SCRIPT", "FIG2_SCRIPT", "FIG3_SCRIPT", "write_plot_script", "render_script"]

_HEADER = '''\
"""{title}

Usage: python {name} [output.png]
Without an argument the figure is shown interactively.
"""
import csv
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent


def load(name):
    """CSV -> dict of float columns (NA:<reason> becomes NaN)."""
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = {{}}
    for j, key in enumerate(rows[0]):
        cols[key] = np.array([np.nan if r[j].startswith("NA:") else float(r[j]) for r in rows[1:]])
    return cols


def finish(fig, out):
    import matplotlib.pyplot as plt
    if out:
        fig.savefig(out, dpi=120, bbox_inches="tight")
        plt.close(fig)
    else:
        plt.show()
'''

FIG1_SCRIPT = _HEADER + '''
FILES = {files!r}


def main(out=None):
    import matplotlib.pyplot as plt
    fig, axes = plt.subplots(1, len(FILES), figsize=(5 * len(FILES), 3.6), squeeze=False)
    for ax, (label, name) in zip(axes[0], FILES):
        d = load(name)
        ax.plot(d["E"], d["abs_t"], "k-", lw=1.2, label="|t|")
        ax.plot(d["E"], d["abs_rho"], "k--", lw=1.0, label="|rho|")
        ax.set_xlabel("E")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(label)
        ax.legend(loc="lower center", frameon=False)
    fig.tight_layout()
    finish(fig, out)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
'''

FIG2_SCRIPT = _HEADER + '''
LANDSCAPE = {landscape!r}
REZ = {rez!r}
V_C, E_C = {v_c!r}, {e_c!r}
LEVELS = np.arange(1, 30) / 30


def grid(d, key):
    vs = np.unique(d["param"])
    es = np.unique(d["E"])
    return es, vs, d[key].reshape(len(vs), len(es))


def main(out=None):
    import matplotlib.pyplot as plt
    d = load(LANDSCAPE)
    z = load(REZ)
    fig, axes = plt.subplots(1, 3, figsize=(15, 4.2))
    es, vs, T = grid(d, "abs_t")
    _, _, R = grid(d, "abs_rho")
    for ax, M, title in ((axes[0], T, "|t|"), (axes[1], R, "|rho|")):
        im = ax.pcolormesh(vs, es, M.T, shading="auto", cmap="gray_r", vmin=0, vmax=1)
        ax.contour(vs, es, R.T, levels=LEVELS, colors="k", linewidths=0.4)
        ax.set_xlabel("v")
        ax.set_ylabel("E")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
        if V_C is not None:
            ax.plot([V_C], [E_C], "r+", ms=10)
    ax = axes[2]
    keys = sorted(k for k in z if k.startswith("re_z"))
    for k in keys:
        ax.plot(z["v"], z[k], lw=1.2, label=k.replace("re_z", "Re z"))
    if V_C is not None:
        ax.axvline(V_C, color="r", lw=0.6, ls=":")
    ax.set_xlabel("v")
    ax.set_title("Re z(E=0)")
    ax.legend(frameon=False)
    fig.tight_layout()
    finish(fig, out)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
'''

FIG3_SCRIPT = _HEADER + '''
T_FILE = {t_file!r}
RHO_FILE = {rho_file!r}


def grid(d, key):
    rs = np.unique(d["param"])
    es = np.unique(d["E"])
    return es, rs, d[key].reshape(len(rs), len(es))


def main(out=None):
    import matplotlib.pyplot as plt
    es, rs, T = grid(load(T_FILE), "abs_t")
    _, _, R = grid(load(RHO_FILE), "abs_rho")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    for ax, M, title in ((axes[0], T, "|t|"), (axes[1], 1 - R, "1 - |rho|")):
        if len(rs) > 1:
            im = ax.pcolormesh(es, rs, M, shading="auto", cmap="gray_r")
            ax.set_ylabel("r")
            fig.colorbar(im, ax=ax)
        else:
            ax.plot(es, M[0], "k-")
        ax.set_xlabel("E")
        ax.set_title(title)
    fig.tight_layout()
    finish(fig, out)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
'''

_TITLES = {
    "fig1": "Transmission |t| and phase rigidity |rho| of the chain versus energy.",
    "fig2": "Double-dot landscapes of |t| and |rho| over (v, E), with Re z(E=0) versus v.",
    "fig3": "Billiard landscapes of |t| and 1 - |rho| over (E, disk radius).",
}
_TEMPLATES = {"fig1": FIG1_SCRIPT, "fig2": FIG2_SCRIPT, "fig3": FIG3_SCRIPT}


def write_plot_script(path, figure, **params) -> Path:
    """Write the plot script for ``figure`` (``fig1``/``fig2``/``fig3``) to ``path``."""
    path = Path(path)
    text = _TEMPLATES[figure].format(title=_TITLES[figure], name=path.name, **params)
    path.write_text(text)
    return path


def render_script(script, png) -> Path:
    """Execute a generated plot script headlessly and save its figure to ``png``."""
    import matplotlib

    matplotlib.use("Agg")
    ns = runpy.run_path(str(script))
    ns["main"](str(png))
    return Path(png)
