"""Command-line surface: inventories, model fitting, scenarios, synthetic data.

Configuration is a plain ``key = value`` file; every flag can override a
config key.  Exit codes: 0 success, 2 input/schema error, 3 data-consistency
error, 4 numerical failure.  All outputs are deterministic for a fixed
config and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import econometrics as econ
from . import geo, inventory, scenario, synth, weights
from .ef_model import load_default_ef_model, load_ef_model_csv
from .errors import ConsistencyError, EstimationError, ValidationError
from .output import atomic_write_text, write_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONSISTENCY = 3
EXIT_NUMERICAL = 4


@dataclass
class RunConfig:
    tracts_geojson: str | None = None
    roads_geojson: str | None = None
    vehicle_census_csv: str | None = None
    panel_csv: str | None = None
    ef_model_csv: str | None = None
    weights_scheme: str = "knn"
    weights_k: int = 8
    weights_distance: float | None = None
    model_formula: str | None = None
    fe_group_col: str = "region_id"
    models: str = ",".join(econ.ALL_METHODS)
    scenario_file: str | None = None
    fit_json: str | None = None
    output_dir: str = "."
    seed: int = 42
    synth_grid: int = 20
    synth_segments: int = 60
    synth_gamma: float = 0.679
    synth_lambda: float = 0.0
    synth_sigma: float = 0.15

    _INT_FIELDS = ("weights_k", "seed", "synth_grid", "synth_segments")
    _FLOAT_FIELDS = ("weights_distance", "synth_gamma", "synth_lambda", "synth_sigma")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}: line {lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in known:
                    raise ValidationError(f"{path}: line {lineno}: unknown config key {key!r}")
                cfg._set(key, value, where=f"{path}: line {lineno}")
        return cfg

    def _set(self, key: str, value: str, where: str = "config") -> None:
        try:
            if key in self._INT_FIELDS:
                setattr(self, key, int(value))
            elif key in self._FLOAT_FIELDS:
                setattr(self, key, float(value))
            else:
                setattr(self, key, value)
        except ValueError as exc:
            raise ValidationError(f"{where}: bad value for {key}: {exc}") from None

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ValidationError(f"config is missing required keys: {missing}")
        for k in keys:
            v = getattr(self, k)
            if k.endswith(("_csv", "_geojson", "_file", "_json")) and not os.path.exists(v):
                raise ValidationError(f"config key {k} points to a missing file: {v}")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key, value in vars(args).items():
        if key in ("config", "command", "method") or value is None:
            continue
        if hasattr(cfg, key):
            setattr(cfg, key, value)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg


def _ef_model(cfg: RunConfig):
    if cfg.ef_model_csv:
        cfg.require("ef_model_csv")
        return load_ef_model_csv(cfg.ef_model_csv)
    return load_default_ef_model()


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


# ---------------------------------------------------------------------------
# subcommands


def cmd_inventory(cfg: RunConfig, method: str) -> int:
    ef = _ef_model(cfg)
    consumption = production = None

    tracts = segments = assignment = None
    if method in ("consumption", "both", "production"):
        cfg.require("tracts_geojson", "roads_geojson")
        tracts = geo.load_tracts_geojson(cfg.tracts_geojson)
        segments = geo.load_roads_geojson(cfg.roads_geojson)
        assignment = geo.assign_segments(tracts, segments)

    if method in ("consumption", "both"):
        cfg.require("vehicle_census_csv")
        records = inventory.read_vehicle_census_csv(cfg.vehicle_census_csv)
        limits = geo.tract_avg_speed_limit(assignment, segments)
        fallback = geo.dataset_mean_speed_limit(segments)
        consumption = inventory.consumption_inventory(records, limits, ef, fallback_speed=fallback)
        inventory.write_inventory_csv(consumption, _out(cfg, "inventory_consumption.csv"))
        inventory.write_inventory_geojson(consumption, tracts, _out(cfg, "inventory_consumption.geojson"))

    if method in ("production", "both"):
        production = inventory.production_inventory(segments, assignment, ef)
        inventory.write_inventory_csv(production, _out(cfg, "inventory_production.csv"))
        inventory.write_inventory_geojson(production, tracts, _out(cfg, "inventory_production.geojson"))

    if method == "both":
        comparison = inventory.compare_inventories(consumption, production)
        inventory.write_comparison_csv(comparison, _out(cfg, "inventory_comparison.csv"))

    if assignment is not None and assignment.unassigned:
        print(f"unassigned segments: {len(assignment.unassigned)}", file=sys.stderr)
    for warning in assignment.warnings if assignment else []:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def _build_weights(cfg: RunConfig, df) -> weights.SpatialWeights:
    for col in ("x", "y"):
        if col not in df.columns:
            raise ValidationError(f"panel is missing centroid column {col!r} needed for weights")
    pts = df[["x", "y"]].to_numpy(dtype=float)
    ids = df["tract_id"].astype(str).tolist() if "tract_id" in df.columns else None
    if cfg.weights_scheme == "knn":
        return weights.knn_weights(pts, k=cfg.weights_k, ids=ids)
    if cfg.weights_scheme == "distance_band":
        if cfg.weights_distance is None:
            raise ValidationError("weights_scheme=distance_band requires weights_distance")
        return weights.distance_band_weights(pts, threshold=cfg.weights_distance, ids=ids)
    raise ValidationError(f"unknown weights_scheme {cfg.weights_scheme!r}")


def _read_panel(cfg: RunConfig):
    import pandas as pd

    cfg.require("panel_csv")
    return pd.read_csv(cfg.panel_csv)


def cmd_fit(cfg: RunConfig) -> int:
    cfg.require("model_formula")
    df = _read_panel(cfg)
    requested = [m.strip() for m in cfg.models.split(",") if m.strip()]
    unknown = sorted(set(requested) - set(econ.ALL_METHODS))
    if unknown:
        raise ValidationError(f"unknown models requested: {unknown} (choose from {list(econ.ALL_METHODS)})")

    group_col = cfg.fe_group_col if econ.OLS_FE in requested else None
    if group_col is not None and group_col not in df.columns:
        raise ValidationError(f"panel is missing the fixed-effects group column {group_col!r}")
    panel = econ.TractPanel.from_dataframe(df, cfg.model_formula, group_col=group_col)

    spatial = {econ.SLM_ML, econ.SLM_GS2SLS, econ.SEM_ML, econ.SEM_GMM, econ.SELM_GMM}
    w = None
    if spatial & set(requested):
        w = _build_weights(cfg, df)
        if panel.n != w.n:
            raise ConsistencyError(
                f"panel rows after drops ({panel.n}) do not match weights size ({w.n})"
            )

    runners = {
        econ.OLS: lambda: econ.fit_ols(panel),
        econ.OLS_FE: lambda: econ.fit_ols_fe(panel),
        econ.SLM_ML: lambda: econ.fit_slm_ml(panel, w),
        econ.SLM_GS2SLS: lambda: econ.fit_slm_gs2sls(panel, w),
        econ.SEM_ML: lambda: econ.fit_sem_ml(panel, w),
        econ.SEM_GMM: lambda: econ.fit_sem_gmm(panel, w),
        econ.SELM_GMM: lambda: econ.fit_selm_gmm(panel, w),
    }
    fits, failures = [], {}
    for m in requested:
        try:
            fit = runners[m]()
        except (ValidationError, ConsistencyError, EstimationError) as exc:
            failures[m] = str(exc)
            print(f"estimator {m} failed: {exc}", file=sys.stderr)
            continue
        fits.append(fit)
        write_json(_out(cfg, f"fit_{m}.json"), fit.to_dict())

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "mse", "r2", "r2_kind", "status"])
    if len(fits) >= 2:
        table = econ.compare_models(fits)
        for _, row in table.iterrows():
            writer.writerow([row["method"], f"{row['mse']:.6g}", f"{row['r2']:.6g}",
                             row["r2_kind"], "ok"])
    elif len(fits) == 1:
        f = fits[0]
        writer.writerow([f.method, f"{f.mse:.6g}", f"{f.r2:.6g}", f.r2_kind, "ok"])
    for m in requested:
        if m in failures:
            writer.writerow([m, "", "", "", "failed"])
    atomic_write_text(_out(cfg, "model_comparison.csv"), buf.getvalue())
    if fits:
        atomic_write_text(_out(cfg, "fits_table.txt"), econ.format_fit_table(fits))
    return EXIT_OK if fits else EXIT_NUMERICAL


def _fit_from_json(path) -> econ.ModelFit:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        names = list(doc["coefficients"])
        return econ.ModelFit(
            method=doc["method"],
            coef_names=names,
            coefficients=np.array([doc["coefficients"][n] for n in names], dtype=float),
            std_errors=np.array([doc["std_errors"].get(n, 0.0) for n in names], dtype=float),
            sigma2=doc.get("sigma2", 0.0),
            mse=doc.get("mse", 0.0),
            n=doc.get("n", 0),
            k_params=doc.get("k_params", len(names)),
            panel_token=doc.get("panel_token", ""),
            r2_adj=doc.get("r2_adj"),
            pseudo_r2=doc.get("pseudo_r2"),
            gamma=doc.get("gamma"),
            lambda_=doc.get("lambda"),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: fit JSON is missing key {exc}") from None


def cmd_scenario(cfg: RunConfig) -> int:
    cfg.require("fit_json", "scenario_file")
    fit = _fit_from_json(cfg.fit_json)
    spec = scenario.parse_scenario_file(cfg.scenario_file)
    result = scenario.run_scenario(fit, spec)
    write_json(
        _out(cfg, "scenario_result.json"),
        {
            "fit_method": fit.method,
            "region_context": spec.region_context,
            "delta_log_vmt": result.delta_log_vmt,
            "pct_change_vmt": result.pct_change_vmt,
            "contributions": [{"term": t, "delta_log_vmt": v} for t, v in result.contributions],
            "spatial_multiplier": result.spatial_multiplier,
        },
    )
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.synth_grid

    tracts = synth.make_tract_grid(grid)
    features = []
    for t in tracts:
        features.append(
            {
                "type": "Feature",
                "properties": {"tract_id": t.tract_id},
                "geometry": {"type": "Polygon", "coordinates": [t.rings[0].tolist()]},
            }
        )
    atomic_write_text(
        _out(cfg, "tracts.geojson"),
        json.dumps({"type": "FeatureCollection", "features": features},
                   sort_keys=True, separators=(",", ":")) + "\n",
    )

    segments = synth.make_road_network(grid, rng, n_segments=cfg.synth_segments)
    features = []
    for s in segments:
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "segment_id": s.segment_id,
                    "speed_limit": s.speed_limit,
                    "aadt": s.aadt,
                    "functional_class": s.functional_class,
                    "length_mi": round(s.length_mi, 9),
                },
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[round(x, 9), round(y, 9)] for x, y in s.polyline],
                },
            }
        )
    atomic_write_text(
        _out(cfg, "roads.geojson"),
        json.dumps({"type": "FeatureCollection", "features": features},
                   sort_keys=True, separators=(",", ":")) + "\n",
    )

    records = synth.make_vehicle_census([t.tract_id for t in tracts], rng)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tract_id", "quarter", "dvmt_per_vehicle", "vehicle_count"])
    for r in records:
        writer.writerow([r.tract_id, r.quarter, f"{r.dvmt_per_vehicle:.6g}", f"{r.vehicle_count:.6g}"])
    atomic_write_text(_out(cfg, "vehicle_census.csv"), buf.getvalue())

    df, w, truth = synth.make_sarar_panel(
        grid, gamma=cfg.synth_gamma, lam=cfg.synth_lambda, sigma=cfg.synth_sigma, rng=rng
    )
    buf = io.StringIO()
    df_out = df.copy()
    for col in df_out.columns:
        if df_out[col].dtype.kind == "f":
            df_out[col] = df_out[col].map(lambda v: f"{v:.10g}")
    df_out.to_csv(buf, index=False, lineterminator="\n")
    atomic_write_text(_out(cfg, "panel.csv"), buf.getvalue())

    truth["seed"] = cfg.seed
    write_json(_out(cfg, "truth.json"), truth)
    weights.export_weights(w, _out(cfg, "weights.txt"))
    return EXIT_OK


def cmd_weights_export(cfg: RunConfig) -> int:
    if cfg.panel_csv:
        df = _read_panel(cfg)
        w = _build_weights(cfg, df)
    elif cfg.tracts_geojson:
        cfg.require("tracts_geojson")
        tracts = geo.load_tracts_geojson(cfg.tracts_geojson)
        pts = np.array([t.centroid for t in tracts])
        ids = [t.tract_id for t in tracts]
        if cfg.weights_scheme == "distance_band":
            if cfg.weights_distance is None:
                raise ValidationError("weights_scheme=distance_band requires weights_distance")
            w = weights.distance_band_weights(pts, threshold=cfg.weights_distance, ids=ids)
        else:
            w = weights.knn_weights(pts, k=cfg.weights_k, ids=ids)
    else:
        raise ValidationError("weights-export needs panel_csv or tracts_geojson in the config")
    weights.export_weights(w, _out(cfg, "weights.txt"))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmtcarbon",
        description="Tract-level passenger-vehicle CO2e inventories and spatial VMT models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--output-dir", dest="output_dir", help="directory for outputs")
        p.add_argument("--seed", type=int, help="random seed for synthetic commands")

    p = sub.add_parser("inventory", help="compute per-tract CO2e inventories")
    common(p)
    p.add_argument("--method", choices=("consumption", "production", "both"), default="both")
    p.add_argument("--tracts-geojson", dest="tracts_geojson")
    p.add_argument("--roads-geojson", dest="roads_geojson")
    p.add_argument("--vehicle-census-csv", dest="vehicle_census_csv")
    p.add_argument("--ef-model-csv", dest="ef_model_csv")

    p = sub.add_parser("fit", help="fit the VMT model suite on a panel")
    common(p)
    p.add_argument("--panel-csv", dest="panel_csv")
    p.add_argument("--model-formula", dest="model_formula")
    p.add_argument("--models", help="comma-separated subset of estimators")
    p.add_argument("--weights-scheme", dest="weights_scheme", choices=("knn", "distance_band"))
    p.add_argument("--weights-k", dest="weights_k", type=int)
    p.add_argument("--weights-distance", dest="weights_distance", type=float)
    p.add_argument("--fe-group-col", dest="fe_group_col")

    p = sub.add_parser("scenario", help="evaluate a scenario file against a stored fit")
    common(p)
    p.add_argument("--fit-json", dest="fit_json")
    p.add_argument("--scenario-file", dest="scenario_file")

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    common(p)
    p.add_argument("--synth-grid", dest="synth_grid", type=int)
    p.add_argument("--synth-segments", dest="synth_segments", type=int)
    p.add_argument("--synth-gamma", dest="synth_gamma", type=float)
    p.add_argument("--synth-lambda", dest="synth_lambda", type=float)
    p.add_argument("--synth-sigma", dest="synth_sigma", type=float)

    p = sub.add_parser("weights-export", help="build and export spatial weights")
    common(p)
    p.add_argument("--panel-csv", dest="panel_csv")
    p.add_argument("--tracts-geojson", dest="tracts_geojson")
    p.add_argument("--weights-scheme", dest="weights_scheme", choices=("knn", "distance_band"))
    p.add_argument("--weights-k", dest="weights_k", type=int)
    p.add_argument("--weights-distance", dest="weights_distance", type=float)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "inventory":
            return cmd_inventory(cfg, args.method)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "scenario":
            return cmd_scenario(cfg)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "weights-export":
            return cmd_weights_export(cfg)
        parser.error(f"unknown command {args.command}")
    except ValidationError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except EstimationError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
