"""``stx`` command-line pipeline.

Stages (each a subcommand, each reading the previous stage's files from the
output directory)::

    preprocess -> detect -> label -> stats -> powerlaw -> attribute

``pipeline`` runs all of them. Exit codes: 0 ok, 2 configuration error,
3 data validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import reports as rep
from .attribution import AttributionConfig, attribution_table
from .config import PipelineConfig, check_inputs, load_config, override, validate
from .detect import (
    ExtremeMask,
    Labeling,
    ThresholdSpec,
    label_components,
    neighborhood,
    threshold_mask,
)
from .errors import ConfigError, DomainError, NumericalError, StxError, ValidationError
from .fixtures import write_fixture
from .grid import Grid3D
from .io import CARBON_FLUX, convert_units, load_grid, save_grid, subset_time, unit_quantity
from .preprocess import compute_anomalies, normalize_precip, scale_temperature
from .scalefree import powerlaw_fit, size_distribution
from .stats import component_metrics, iav_map, spatial_loss_map

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (StxError, OSError) as exc:
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        return run
    return wrap


# ----------------------------------------------------------------------------
# File layout
# ----------------------------------------------------------------------------

def _out(cfg: PipelineConfig) -> Path:
    p = Path(cfg.out)
    return p if p.is_absolute() else Path(cfg.base_dir) / p


def _sdir(cfg: PipelineConfig, structure: str) -> Path:
    return _out(cfg) / structure


def _want(cfg: PipelineConfig, fmt: str) -> bool:
    return fmt in cfg.formats


def _load(path: Path, what: str) -> Grid3D:
    if not path.is_file():
        raise ConfigError(f"{what} not found at {path}; run the previous stage first")
    return load_grid(path)


def _trim(cfg: PipelineConfig, g: Grid3D) -> Grid3D:
    if cfg.start is None and cfg.end is None:
        return g
    start = cfg.start if cfg.start is not None else int(g.time[0])
    end = cfg.end if cfg.end is not None else int(g.time[-1])
    try:
        return subset_time(g, start, end)
    except DomainError as exc:
        raise ValidationError(f"{g.variable_name}: {exc}") from exc


# ----------------------------------------------------------------------------
# Stages
# ----------------------------------------------------------------------------

@_stage("preprocess")
def stage_preprocess(cfg: PipelineConfig) -> None:
    check_inputs(cfg)
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    gpp = _trim(cfg, load_grid(cfg.path("gpp")))
    if unit_quantity(gpp.units) != "carbon_flux":
        raise ValidationError(f"gpp units {gpp.units!r} are not a carbon flux")
    gpp = convert_units(gpp, CARBON_FLUX)
    anomalies = gpp if cfg.gpp_is_anomaly else compute_anomalies(gpp, cfg.ssa_window)
    save_grid(anomalies, out / "anomalies.stxg")
    if cfg.tas:
        tas = _trim(cfg, load_grid(cfg.path("tas")))
        pr = _trim(cfg, load_grid(cfg.path("pr")))
        for g in (tas, pr):
            if not g.axes.same_as(anomalies.axes):
                raise ValidationError(f"{g.variable_name} axes differ from the gpp grid")
        if not cfg.drivers_preprocessed:
            tas = scale_temperature(tas, cfg.ssa_window)
            pr = normalize_precip(pr, cfg.ssa_window)
        save_grid(tas, out / "tas_scaled.stxg")
        save_grid(pr, out / "pr_normalized.stxg")
    if _want(cfg, "csv"):
        rep.write_text(out / "iav_map.csv",
                       rep.map_csv(iav_map(anomalies), anomalies.axes, "iav", anomalies.units))


def _spec(cfg: PipelineConfig) -> ThresholdSpec:
    return ThresholdSpec(cfg.percentile, cfg.tail, cfg.split_tails)


@_stage("detect")
def stage_detect(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    anomalies = _load(out / "anomalies.stxg", "anomalies")
    try:
        mask = threshold_mask(anomalies, _spec(cfg))
    except DomainError as exc:
        raise NumericalError(str(exc)) from exc
    save_grid(anomalies.with_values(mask.values.astype(np.float32), units="1",
                                    variable_name="extreme_mask"), out / "mask.stxg")
    rep.write_text(out / "mask.json", rep.mask_summary_json("all", mask, -1))


def _load_mask(cfg: PipelineConfig) -> ExtremeMask:
    out = _out(cfg)
    g = _load(out / "mask.stxg", "mask")
    meta = json.loads((out / "mask.json").read_text(encoding="utf-8"))
    t = meta["threshold"]
    spec = ThresholdSpec(t["percentile_total"], t["tail"], t["split_tails"])
    values = g.values > 0.5
    values.setflags(write=False)
    return ExtremeMask(values, spec, g.axes, meta["q_low"], meta["q_high"])


def _wrap(cfg: PipelineConfig, mask: ExtremeMask) -> bool | None:
    if cfg.wrap_lon == "auto":
        return None
    return cfg.wrap_lon == "on"


@_stage("label")
def stage_label(cfg: PipelineConfig) -> None:
    mask = _load_mask(cfg)
    for s in cfg.structures:
        lab = label_components(mask, neighborhood(s, cfg.lesd_connectivity), _wrap(cfg, mask))
        d = _sdir(cfg, s)
        d.mkdir(parents=True, exist_ok=True)
        g = Grid3D(f"labels_{s}", "1", mask.axes, lab.labels.astype(np.float64))
        save_grid(g, d / "labels.stxg")
        if _want(cfg, "json"):
            rep.write_text(d / "mask_summary.json",
                           rep.mask_summary_json(s, mask, lab.n_components))


def _load_labeling(cfg: PipelineConfig, s: str) -> Labeling:
    g = _load(_sdir(cfg, s) / "labels.stxg", f"{s} labels")
    labels = g.values.astype(np.int64)
    labels.setflags(write=False)
    flat = labels.ravel()
    sel = np.flatnonzero(flat)
    ids = flat[sel]
    k = int(ids.max()) if ids.size else 0
    sizes = np.bincount(ids, minlength=k + 1)[1:]
    first = np.full(k + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, ids, sel)
    wrap = cfg.wrap_lon == "on" or (cfg.wrap_lon == "auto" and g.axes.is_global_lon)
    return Labeling(labels, sizes.astype(np.int64), first[1:], s, wrap, g.axes)


@_stage("stats")
def stage_stats(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    anomalies = _load(out / "anomalies.stxg", "anomalies")
    mask = _load_mask(cfg)
    loss = spatial_loss_map(mask, anomalies)
    for s in cfg.structures:
        lab = _load_labeling(cfg, s)
        stats = component_metrics(lab, anomalies)
        d = _sdir(cfg, s)
        if _want(cfg, "csv"):
            rep.write_text(d / "components.csv", rep.components_csv(stats, anomalies.axes))
            rep.write_text(d / "cumulative.csv", rep.cumulative_csv(stats))
            rep.write_text(d / "loss_map.csv",
                           rep.map_csv(loss, anomalies.axes, "loss_tgc", "Tg C"))
        if _want(cfg, "svg") and stats:
            rep.write_text(d / "ranked_stes.svg", rep.ranked_chart(stats, s))
            rep.write_text(d / "cumulative.svg", rep.cumulative_chart(stats, s))


def _load_stats(cfg: PipelineConfig, s: str):
    path = _sdir(cfg, s) / "components.csv"
    if not path.is_file():
        raise ConfigError(f"{path} not found; run the stats stage first")
    return rep.read_components_csv(path.read_text(encoding="utf-8"))


@_stage("powerlaw")
def stage_powerlaw(cfg: PipelineConfig, strict: bool = False) -> None:
    for s in cfg.structures:
        d = _sdir(cfg, s)
        stats = _load_stats(cfg, s)
        if s == "sesd" and not cfg.powerlaw_sesd:
            if _want(cfg, "json"):
                rep.write_text(d / "powerlaw_fit.json", rep.powerlaw_json(
                    None, None, "skipped", "sesd components are all single voxels"))
            continue
        dist = size_distribution(stats) if stats else None
        if dist is not None and _want(cfg, "csv"):
            rep.write_text(d / "powerlaw.csv", rep.powerlaw_csv(dist))
        try:
            if dist is None:
                raise DomainError("no components to fit")
            fit = powerlaw_fit(dist, cfg.powerlaw_method)
        except DomainError as exc:
            if strict:
                raise NumericalError(f"{s}: {exc}") from exc
            if _want(cfg, "json"):
                rep.write_text(d / "powerlaw_fit.json",
                               rep.powerlaw_json(None, dist, "insufficient-data", str(exc)))
            continue
        if _want(cfg, "json"):
            rep.write_text(d / "powerlaw_fit.json", rep.powerlaw_json(fit, dist))
        if _want(cfg, "svg"):
            rep.write_text(d / "powerlaw.svg", rep.powerlaw_chart(fit, dist, s))


@_stage("attribute")
def stage_attribute(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    if not (out / "tas_scaled.stxg").is_file():
        if cfg.tas:
            raise ConfigError("preprocessed drivers missing; run the preprocess stage first")
        return
    tas = load_grid(out / "tas_scaled.stxg")
    pr = load_grid(out / "pr_normalized.stxg")
    acfg = AttributionConfig(cfg.top_k, cfg.lags, reference_mode=cfg.reference_mode)
    for s in cfg.structures:
        lab = _load_labeling(cfg, s)
        if not (tas.axes.same_as(lab.axes) and pr.axes.same_as(lab.axes)):
            raise ValidationError("driver axes differ from the labeling")
        table = attribution_table(_load_stats(cfg, s), lab, tas, pr, acfg)
        d = _sdir(cfg, s)
        if _want(cfg, "csv"):
            rep.write_text(d / "attribution.csv", rep.attribution_csv(table))
        if _want(cfg, "json"):
            rep.write_text(d / "attribution_table.json",
                           rep.attribution_json(table, cfg.reference_mode))


def write_manifest(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    doc = {
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "versions": {"stextremes": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "outputs": files,
        "units": {"outputs": "see the '# units:' header of each CSV and 'units' of each JSON"},
    }
    rep.write_text(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run(cfg: PipelineConfig) -> Path:
    """Run every stage in order and return the output directory."""
    check_inputs(cfg)
    stage_preprocess(cfg)
    stage_detect(cfg)
    stage_label(cfg)
    stage_stats(cfg)
    stage_powerlaw(cfg)
    stage_attribute(cfg)
    write_manifest(cfg)
    return _out(cfg)


# ----------------------------------------------------------------------------
# Argument handling
# ----------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--structure", action="append",
                        help="neighborhood structure (repeatable): sesd|seld|lesd|6n|18n|leld")
    common.add_argument("--percentile", help="total extremes percentile (default 10)")
    common.add_argument("--tail", choices=("neg", "pos", "both"))
    common.add_argument("--wrap-lon", choices=("on", "off", "auto"))
    common.add_argument("--top-k", type=int)
    common.add_argument("--lags", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", help="comma-separated subset of csv,json,svg")
    common.add_argument("--gpp", help="GPP grid (.stxg or .csv)")
    common.add_argument("--tas")
    common.add_argument("--pr")

    p = argparse.ArgumentParser(prog="stx", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stx {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("preprocess", "SSA anomalies and driver scaling"),
        ("detect", "threshold anomalies into an extremes mask"),
        ("label", "label connected STEs per structure"),
        ("stats", "component statistics, cumulative curves and maps"),
        ("powerlaw", "size distribution and power-law fit"),
        ("attribute", "climate-driver attribution of the top STEs"),
        ("pipeline", "run every stage"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)
    fx = sub.add_parser("make-fixture", help="write the planted three-STE fixture")
    fx.add_argument("directory")
    return p


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else validate(PipelineConfig())
    return override(
        cfg,
        structures=",".join(args.structure) if args.structure else None,
        percentile=args.percentile,
        tail=args.tail,
        wrap_lon=args.wrap_lon,
        top_k=args.top_k,
        lags=args.lags,
        out=args.out,
        formats=args.format,
        gpp=args.gpp,
        tas=args.tas,
        pr=args.pr,
    )


STAGES = {
    "preprocess": stage_preprocess,
    "detect": stage_detect,
    "label": stage_label,
    "stats": stage_stats,
    "powerlaw": lambda cfg: stage_powerlaw(cfg, strict=True),
    "attribute": stage_attribute,
    "pipeline": run,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "make-fixture":
        path = write_fixture(args.directory)
        print(f"wrote {path}")
        return 0
    try:
        cfg = _config_from_args(args)
        STAGES[args.command](cfg)
    except ConfigError as exc:
        print(f"stx: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        cause = exc.cause
        if isinstance(cause, ConfigError):
            code = EXIT_CONFIG
        elif isinstance(cause, (ValidationError, OSError)):
            code = EXIT_DATA
        else:
            code = EXIT_NUMERIC
        print(f"stx: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
