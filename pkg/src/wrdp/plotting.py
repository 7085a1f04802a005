"""Figure output for ``wrdp curves``.

Two emitters: a gnuplot script that reads the CSV (no Python dependency), and
an optional PNG rendered with matplotlib, imported only when requested.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def group_rows(rows):
    """Split ``(R, C, P, D)`` rows into one ``(Rs, Ds)`` curve per (C, P)."""
    curves = OrderedDict()
    for R, C, P, D in rows:
        Rs, Ds = curves.setdefault((C, P), ([], []))
        Rs.append(R)
        Ds.append(D)
    return curves


def write_gnuplot(script: Path, csv_path: Path, rows, png_name: str | None = None) -> Path:
    """Plain-text gnuplot script plotting D against R, one line per (C, P)."""
    curves = group_rows(rows)
    png_name = png_name or Path(csv_path).with_suffix(".gnuplot.png").name
    lines = [
        "set datafile separator ','",
        "set key top right",
        "set xlabel 'R (bits)'",
        "set ylabel 'D'",
        "set grid",
        "set terminal pngcairo size 800,600",
        f"set output '{png_name}'",
    ]
    plots = []
    for C, P in curves:
        # column 2 and 3 hold C and P as printed in the CSV
        cond = (f"(strcol(2) eq '{_fmt(C)}' && strcol(3) eq '{_fmt(P)}')")
        plots.append(f"'{Path(csv_path).name}' every ::1 using 1:({cond} ? $4 : 1/0) "
                     f"with lines title 'C={_fmt(C)}, P={_fmt(P)}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(script).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(script)


def render_png(path: Path, rows, title: str | None = None) -> Path:
    """Render the curves to ``path`` with matplotlib's Agg backend."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for (C, P), (Rs, Ds) in group_rows(rows).items():
        ax.plot(Rs, Ds, label=f"C={_fmt(C)}, P={_fmt(P)}")
    ax.set_xlabel("R (bits)")
    ax.set_ylabel(r"$D^*(R, C, P)$")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
