"""Figures for sweep results, written next to the CSV.

Only the headless Agg backend is used so rendering works without a display.
"""

from __future__ import annotations

import json
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"figure.figsize": (6.4, 4.0), "axes.grid": True, "grid.alpha": 0.3,
          "axes.spines.top": False, "axes.spines.right": False, "font.size": 10}


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def _axis_param(params: dict) -> str | None:
    for key in ("k", "L", "gamma", "m", "alpha"):
        if key in params:
            return key
    return None


def render_sweep_figures(rows: list[dict], outdir) -> list[str]:
    """One figure per family: measured ratio against the swept parameter.

    Families with a reference bound get it drawn as a dashed line.  Returns the
    written paths (PNG), sorted.
    """
    os.makedirs(outdir, exist_ok=True)
    by_family = defaultdict(list)
    for r in rows:
        if _num(r.get("ratio")) is not None:
            by_family[r["family"]].append(r)
    paths = []
    with plt.rc_context(_STYLE):
        for family, group in sorted(by_family.items()):
            params = [json.loads(r["params"]) for r in group]
            key = _axis_param(params[0])
            fig, ax = plt.subplots()
            series = defaultdict(list)
            bounds = {}
            for r, prm in zip(group, params):
                x = prm.get(key, 0) if key else 0
                series[r["algorithm"]].append((x, float(r["ratio"])))
                b = _num(r.get("bound"))
                if b is not None:
                    bounds.setdefault(x, b)
            for alg, pts in sorted(series.items()):
                pts.sort()
                ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", ms=4, label=alg)
            if bounds:
                xs = sorted(bounds)
                ax.plot(xs, [bounds[x] for x in xs], "k--", lw=1, label=group[0]["bound_name"])
            ax.set_xlabel(key or "instance")
            ax.set_ylabel("cost(ALG) / cost(OPT)")
            if max(p[1] for pts in series.values() for p in pts) > 50:
                ax.set_yscale("log")
            ax.set_title(family)
            ax.legend(frameon=False)
            fig.tight_layout()
            path = os.path.join(outdir, f"ratio_{family}.png")
            fig.savefig(path, dpi=120)
            plt.close(fig)
            paths.append(path)
    return sorted(paths)
