"""Post-estimation sensitivity analysis on fitted VMT models.

Translates coefficient estimates into predicted log-VMT changes for
mode-share and built-environment interventions.  Deltas are absolute
changes in each covariate's native units (percentage points for shares,
log units for logged densities).  Effects are direct coefficient sums by
default; the spatial-multiplier variant (scaling by 1/(1 - gamma)) is
opt-in and labeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .econometrics import ModelFit
from .errors import ValidationError

MAPC = "MAPC"
NON_MAPC = "non-MAPC"
REGION_CONTEXTS = (MAPC, NON_MAPC)

# columns validated to stay inside [0, 1] after an intervention
MODE_SHARE_COLUMNS = ("w_carpool", "w_pubtrans", "w_bike", "w_home")

DEFAULT_MAPC_COLUMN = "mapc_dum"

_SHARE_TOL = 1e-9


@dataclass(frozen=True)
class Intervention:
    """Covariate deltas plus the region context that picks interaction terms."""

    terms: tuple[tuple[str, float], ...]
    region_context: str = NON_MAPC

    def __post_init__(self):
        if self.region_context not in REGION_CONTEXTS:
            raise ValidationError(
                f"region context must be one of {REGION_CONTEXTS}, got {self.region_context!r}"
            )
        seen = set()
        for col, _ in self.terms:
            if col in seen:
                raise ValidationError(f"intervention repeats column {col!r}")
            seen.add(col)


@dataclass(frozen=True)
class ScenarioResult:
    """Predicted change: log points, exact percent, per-term breakdown."""

    delta_log_vmt: float
    pct_change_vmt: float
    contributions: tuple[tuple[str, float], ...]
    spatial_multiplier: float | None = None


def _interaction_name(fit: ModelFit, column: str, mapc_column: str) -> str | None:
    for cand in (f"{column}:{mapc_column}", f"{mapc_column}:{column}"):
        if cand in fit.coef_names:
            return cand
    return None


def mode_shift_effect(
    fit: ModelFit,
    intervention: Intervention,
    baseline: Mapping[str, float] | None = None,
    mapc_column: str = DEFAULT_MAPC_COLUMN,
    spatial_multiplier: bool = False,
) -> ScenarioResult:
    """Predicted log-VMT change for an intervention under a fitted model.

    Each term contributes (base coefficient + MAPC interaction coefficient
    when the context is MAPC and the fit has one) times its delta.  When a
    baseline row is supplied, mode-share columns are checked to stay inside
    [0, 1] after the shift.  ``spatial_multiplier`` rescales everything by
    1/(1 - gamma) to report the reduced-form total effect instead of the
    direct effect.
    """
    scale = 1.0
    multiplier = None
    if spatial_multiplier:
        if fit.gamma is None:
            raise ValidationError(
                f"fit {fit.method!r} has no spatial lag parameter for the multiplier variant"
            )
        multiplier = 1.0 / (1.0 - fit.gamma)
        scale = multiplier

    contributions = []
    total = 0.0
    for col, delta in intervention.terms:
        if col not in fit.coef_names:
            raise ValidationError(f"fit {fit.method!r} has no coefficient {col!r}")
        if baseline is not None and col in MODE_SHARE_COLUMNS:
            if col not in baseline:
                raise ValidationError(f"baseline row is missing column {col!r}")
            after = baseline[col] + delta
            if after < -_SHARE_TOL or after > 1.0 + _SHARE_TOL:
                raise ValidationError(
                    f"intervention drives {col} to {after:.4f}, outside [0, 1]"
                )
        coef = fit.coef(col)
        label = col
        if intervention.region_context == MAPC:
            inter = _interaction_name(fit, col, mapc_column)
            if inter is not None:
                coef += fit.coef(inter)
                label = f"{col} (+{inter})"
        contribution = coef * delta * scale
        contributions.append((label, contribution))
        total += contribution

    return ScenarioResult(
        delta_log_vmt=total,
        pct_change_vmt=100.0 * (math.exp(total) - 1.0),
        contributions=tuple(contributions),
        spatial_multiplier=multiplier,
    )


def composite_scenario(
    fit: ModelFit,
    baseline_row: Mapping[str, float],
    targets: Mapping[str, float],
    region_context: str = NON_MAPC,
    mapc_column: str = DEFAULT_MAPC_COLUMN,
    spatial_multiplier: bool = False,
) -> ScenarioResult:
    """Scenario defined by target covariate values against a baseline row.

    Deltas are target minus baseline in native units; the effect arithmetic
    is :func:`mode_shift_effect`.
    """
    terms = []
    for col in targets:
        if col not in baseline_row:
            raise ValidationError(f"baseline row is missing column {col!r}")
        terms.append((col, float(targets[col]) - float(baseline_row[col])))
    intervention = Intervention(terms=tuple(terms), region_context=region_context)
    return mode_shift_effect(
        fit,
        intervention,
        baseline=baseline_row,
        mapc_column=mapc_column,
        spatial_multiplier=spatial_multiplier,
    )


@dataclass
class ScenarioSpec:
    """Parsed scenario file: plain deltas and/or target values."""

    region_context: str = NON_MAPC
    deltas: dict[str, float] = None
    targets: dict[str, float] = None
    baseline: dict[str, float] = None
    spatial_multiplier: bool = False

    def __post_init__(self):
        self.deltas = self.deltas or {}
        self.targets = self.targets or {}
        self.baseline = self.baseline or {}


def parse_scenario_file(path) -> ScenarioSpec:
    """Read a ``key = value`` scenario file.

    Keys: ``region`` (MAPC or non-MAPC), ``delta.<column>``,
    ``target.<column>``, ``baseline.<column>``, ``spatial_multiplier``
    (true/false).  Lines starting with ``#`` and blank lines are ignored.
    Malformed lines raise with their line number.
    """
    spec = ScenarioSpec()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: line {lineno}: expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                if key == "region":
                    if value not in REGION_CONTEXTS:
                        raise ValueError(f"region must be one of {REGION_CONTEXTS}")
                    spec.region_context = value
                elif key == "spatial_multiplier":
                    if value.lower() not in ("true", "false"):
                        raise ValueError("spatial_multiplier must be true or false")
                    spec.spatial_multiplier = value.lower() == "true"
                elif key.startswith("delta."):
                    spec.deltas[key[len("delta."):]] = float(value)
                elif key.startswith("target."):
                    spec.targets[key[len("target."):]] = float(value)
                elif key.startswith("baseline."):
                    spec.baseline[key[len("baseline."):]] = float(value)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    overlap = sorted(set(spec.deltas) & set(spec.targets))
    if overlap:
        raise ValidationError(f"{path}: columns given both delta and target: {overlap}")
    missing_base = sorted(c for c in spec.targets if c not in spec.baseline)
    if missing_base:
        raise ValidationError(f"{path}: targets without baseline values: {missing_base}")
    return spec


def run_scenario(fit: ModelFit, spec: ScenarioSpec,
                 mapc_column: str = DEFAULT_MAPC_COLUMN) -> ScenarioResult:
    """Evaluate a parsed scenario spec against a fit."""
    terms = list(spec.deltas.items())
    for col, target in spec.targets.items():
        terms.append((col, target - spec.baseline[col]))
    intervention = Intervention(terms=tuple(terms), region_context=spec.region_context)
    return mode_shift_effect(
        fit,
        intervention,
        baseline=spec.baseline if spec.baseline else None,
        mapc_column=mapc_column,
        spatial_multiplier=spec.spatial_multiplier,
    )
