"""SVG line plots rendered from result tables only.

A plot spec is a mapping::

    {
      "name": "fig_bsc",                 # output file stem
      "x": "sigma",                      # x column
      "xlabel": "sigma", "ylabel": "MSE", "title": "...",
      "curves": [
        {"y": "mmse_mc", "label": "MMSE"},
        {"y": ["eps_c_b", "eps_a"], "label": "eps_C + eps_A"},      # summed columns
        {"y": "lb_train", "label": "net", "where": {"hypothesis": "shallow_net"}}
      ]
    }

Each curve is the per-x mean over runs with a shaded +/- 1 standard deviation
band (ddof=1). Aggregate rows and error rows in the table are ignored.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SpecError  # noqa: E402

SVG_SALT = "mmse-audit"


def _raw_rows(rows: list[dict]) -> list[dict]:
    return [r for r in rows if r.get("run") not in ("agg", None) and not r.get("error")]


def _column(rows: list[dict], name: str) -> None:
    if not rows or name not in rows[0]:
        raise SpecError(f"table has no column {name!r}")


def curve_stats(rows: list[dict], x: str, y, where: dict | None = None):
    """(xs, mean, std) for one curve; ``y`` is a column name or a list summed row-wise."""
    rows = _raw_rows(rows)
    cols = [y] if isinstance(y, str) else list(y)
    for c in [x, *cols, *(where or {})]:
        _column(rows, c)
    groups: dict = {}
    for r in rows:
        if where and any(r.get(k) != v for k, v in where.items()):
            continue
        vals = [r.get(c) for c in cols]
        if r.get(x) is None or any(v is None for v in vals):
            continue
        groups.setdefault(float(r[x]), []).append(float(sum(float(v) for v in vals)))
    xs = np.array(sorted(groups))
    mean = np.array([np.mean(groups[k]) for k in xs])
    std = np.array([np.std(groups[k], ddof=1) if len(groups[k]) > 1 else 0.0 for k in xs])
    return xs, mean, std


def emit_plot(rows: list[dict], spec: dict, path) -> Path:
    """Render the spec to an SVG file whose bytes depend only on (rows, spec)."""
    for key in ("x", "curves"):
        if key not in spec:
            raise SpecError(f"plot spec is missing {key!r}")
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            for i, curve in enumerate(spec["curves"]):
                if "y" not in curve:
                    raise SpecError(f"curve {i} has no 'y'")
                xs, mean, std = curve_stats(rows, spec["x"], curve["y"], curve.get("where"))
                label = curve.get("label", curve["y"] if isinstance(curve["y"], str) else "+".join(curve["y"]))
                (line,) = ax.plot(xs, mean, marker="o", ms=3, label=label)
                line.set_gid(f"curve-{i}")
                band = ax.fill_between(xs, mean - std, mean + std, alpha=0.2, color=line.get_color())
                band.set_gid(f"band-{i}")
            ax.set_xlabel(spec.get("xlabel", spec["x"]))
            ax.set_ylabel(spec.get("ylabel", ""))
            if spec.get("title"):
                ax.set_title(spec["title"])
            if spec.get("hline") is not None:
                ax.axhline(float(spec["hline"]), color="k", lw=0.8, ls="--")
            ax.legend(loc="best", fontsize=8)
            ax.grid(alpha=0.3)
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
