"""CSV / JSON / SVG writers for pipeline products.

Every CSV starts with a ``# units:`` comment line and every JSON document
carries a ``units`` object.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import svg
from .attribution import CATEGORIES, AttributionTable
from .errors import ValidationError
from .grid import GridAxes, format_month, parse_month
from .scalefree import PowerLawFit, SizeDistribution
from .stats import ComponentStats, cumulative_curve

COMPONENT_COLUMNS = (
    "rank", "id", "voxel_count", "carbon_integral_pgc", "affected_area_m2",
    "voxel_month_area_m2", "duration_months", "start", "end",
    "lat_south", "lat_north", "lon_west", "lon_east",
    "t_min", "t_max", "lat_min", "lat_max", "lon_min", "lon_max",
)
COMPONENT_UNITS = ("carbon_integral_pgc=Pg C; affected_area_m2=m2; "
                   "voxel_month_area_m2=m2; duration_months=month; start,end=YYYY-MM; "
                   "lat_*,lon_*=degrees (bounding edges) or grid indices (*_min/*_max)")


def num(v) -> str:
    """Shortest round-trip text for a float; NaN as ``NA``."""
    v = float(v)
    if np.isnan(v):
        return "NA"
    return repr(v)


def _csv(units: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# units: {units}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def components_csv(stats: list[ComponentStats], axes: GridAxes) -> str:
    rows = []
    for s in stats:
        rows.append([
            s.rank, s.id, s.voxel_count, num(s.carbon_integral), num(s.affected_area),
            num(s.voxel_month_area), s.duration, format_month(s.start), format_month(s.end),
            num(axes.lat_edges[s.lat_min]), num(axes.lat_edges[s.lat_max + 1]),
            num(axes.lon_edges[s.lon_min]), num(axes.lon_edges[s.lon_max + 1]),
            s.t_min, s.t_max, s.lat_min, s.lat_max, s.lon_min, s.lon_max,
        ])
    return _csv(COMPONENT_UNITS, COMPONENT_COLUMNS, rows)


def read_components_csv(text: str) -> list[ComponentStats]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    missing = set(COMPONENT_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValidationError(f"components.csv lacks columns: {', '.join(sorted(missing))}")
    out = []
    for r in reader:
        out.append(ComponentStats(
            id=int(r["id"]), rank=int(r["rank"]), voxel_count=int(r["voxel_count"]),
            carbon_integral=float(r["carbon_integral_pgc"]),
            affected_area=float(r["affected_area_m2"]),
            voxel_month_area=float(r["voxel_month_area_m2"]),
            duration=int(r["duration_months"]),
            start=parse_month(r["start"]), end=parse_month(r["end"]),
            t_min=int(r["t_min"]), t_max=int(r["t_max"]),
            lat_min=int(r["lat_min"]), lat_max=int(r["lat_max"]),
            lon_min=int(r["lon_min"]), lon_max=int(r["lon_max"]),
        ))
    return out


def cumulative_csv(stats: list[ComponentStats]) -> str:
    cum, share = cumulative_curve(stats)
    rows = [[k, num(c), num(s)] for k, (c, s) in enumerate(zip(cum, share), 1)]
    return _csv("cumulative_loss_pgc=Pg C (absolute); share=fraction of total",
                ("k", "cumulative_loss_pgc", "share"), rows)


def map_csv(values: np.ndarray, axes: GridAxes, column: str, units: str) -> str:
    rows = []
    for i, lat in enumerate(axes.lat_centers):
        for j, lon in enumerate(axes.lon_centers):
            rows.append([i, j, num(lat), num(lon), num(values[i, j])])
    return _csv(f"{column}={units}; lat,lon=degrees (cell centers)",
                ("lat_index", "lon_index", "lat", "lon", column), rows)


def powerlaw_csv(d: SizeDistribution) -> str:
    rows = [[int(n), int(c), num(p)] for n, c, p in zip(d.sizes, d.counts, d.probability)]
    return _csv("size=voxels; count=components; p=probability",
                ("size", "count", "p"), rows)


def powerlaw_json(fit: PowerLawFit | None, d: SizeDistribution | None,
                  status: str = "ok", reason: str = "") -> str:
    doc = {
        "status": status,
        "units": {"size": "voxels", "gamma": "1", "log_c": "natural log of probability"},
    }
    if reason:
        doc["reason"] = reason
    if d is not None:
        doc["n_components"] = d.total
        doc["n_min"] = d.n_min
        doc["n_max"] = d.n_max
    if fit is not None:
        doc.update(gamma=fit.gamma, log_c=fit.log_c, r2=fit.r2, method=fit.method,
                   n_range=list(fit.n_range))
    return _json(doc)


def attribution_csv(table: AttributionTable) -> str:
    rows = []
    for r in table.records:
        for i, lag in enumerate(r.lags):
            rows.append([
                r.component_id, lag, num(r.coverage[i]),
                num(r.tas_median[i]), num(r.tas_q25[i]), num(r.tas_q75[i]),
                num(r.pr_median[i]), num(r.pr_q25[i]), num(r.pr_q75[i]),
                *(int(bool(r.flags(c)[i])) for c in CATEGORIES),
            ])
    return _csv("tas=standardized anomaly (1); pr=detrended fraction of total pr (1); "
                "coverage=fraction; flags=0/1",
                ("id", "lag_months", "coverage", "tas_median", "tas_q25", "tas_q75",
                 "pr_median", "pr_q25", "pr_q75", *CATEGORIES), rows)


def attribution_json(table: AttributionTable, reference_mode: str) -> str:
    return _json({
        "structure": table.structure,
        "top_k": table.top_k,
        "n_attributed": table.n_attributed,
        "lags": list(table.lags),
        "reference_mode": reference_mode,
        "per_lag": table.per_lag,
        "mean": table.mean,
        "rounded": table.rounded,
        "note": table.note,
        "units": {"counts": "number of STEs", "lags": "month"},
    })


def mask_summary_json(structure: str, mask, n_components: int) -> str:
    spec = mask.spec
    return _json({
        "structure": structure,
        "threshold": asdict(spec),
        "q_low": mask.q_low,
        "q_high": mask.q_high,
        "masked_voxels": int(np.count_nonzero(mask.values)),
        "total_voxels": int(mask.values.size),
        "masked_fraction": mask.fraction,
        "n_components": n_components,
        "units": {"q_low": "anomaly units", "q_high": "anomaly units",
                  "masked_fraction": "fraction"},
    })


# ----------------------------------------------------------------------------
# Charts
# ----------------------------------------------------------------------------

def ranked_chart(stats: list[ComponentStats], structure: str) -> str:
    ranked = sorted(stats, key=lambda s: s.rank)
    k = np.arange(1, len(ranked) + 1, dtype=float)
    loss = np.array([abs(s.carbon_integral) for s in ranked])
    area = np.array([s.affected_area / 1e9 for s in ranked])
    return svg.stacked([
        ([svg.Series(k, loss, "|loss|")], "STE rank", "loss of carbon uptake (Pg C)", True, True),
        ([svg.Series(k, area, "area")], "STE rank", "affected area (1e9 m2)", True, True),
    ], f"Ranked STEs ({structure})")


def cumulative_chart(stats: list[ComponentStats], structure: str) -> str:
    _, share = cumulative_curve(stats)
    k = np.arange(1, share.size + 1, dtype=float)
    return svg.chart([svg.Series(k, share, "cumulative share")],
                     f"Cumulative loss of carbon uptake ({structure})",
                     "number of STEs (K)", "share of total loss", logx=True)


def powerlaw_chart(fit: PowerLawFit, d: SizeDistribution, structure: str) -> str:
    x, p = fit.points
    line_x = np.geomspace(max(float(x.min()), 1.0), float(x.max()), 50)
    line_y = np.exp(fit.log_c) * line_x ** (-fit.gamma)
    return svg.chart([
        svg.Series(x, p, "p(n)", kind="points"),
        svg.Series(line_x, line_y, f"fit gamma={fit.gamma:.2f}"),
    ], f"Power-law fit ({structure})", "STE size n (voxels)", "p(n)", logx=True, logy=True)


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
