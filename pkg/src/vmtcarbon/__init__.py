"""Tract-level passenger-vehicle CO2e inventories and spatial VMT models."""

from .ef_model import (
    DEFAULT_TOD_SHARE,
    EfModel,
    SpeedBin,
    TIME_PERIODS,
    load_default_ef_model,
    load_ef_model_csv,
    snap_speed,
    weighted_ef,
    weighted_ef_profile,
)
from .errors import ConsistencyError, EstimationError, ValidationError, VmtCarbonError
from .geo import (
    AssignmentResult,
    RoadSegment,
    SegmentTractAssignment,
    TractGeometry,
    assign_segments,
    dataset_mean_speed_limit,
    load_roads_geojson,
    load_tracts_geojson,
    tract_avg_speed_limit,
)
from .inventory import (
    GRAMS_PER_METRIC_TON,
    PASSENGER_VMT_FACTOR,
    InventoryComparison,
    TractInventory,
    TractVehicleRecord,
    compare_inventories,
    consumption_inventory,
    passenger_vmt_factor,
    production_inventory,
    read_vehicle_census_csv,
    tract_annual_vmt,
)
from .weights import (
    SpatialWeights,
    distance_band_weights,
    export_weights,
    import_weights,
    knn_weights,
    morans_i,
)
from .econometrics import (
    ALL_METHODS,
    LogDet,
    ModelFit,
    TractPanel,
    add_log_square,
    compare_models,
    fit_ols,
    fit_ols_fe,
    fit_sem_gmm,
    fit_sem_ml,
    fit_selm_gmm,
    fit_slm_gs2sls,
    fit_slm_ml,
    format_fit_table,
    parse_formula,
)
from .scenario import (
    Intervention,
    ScenarioResult,
    ScenarioSpec,
    composite_scenario,
    mode_shift_effect,
    parse_scenario_file,
    run_scenario,
)

__version__ = "0.1.0"
