"""Parameter sweeps over the scenario space, with canned presets.

Three presets reproduce the bundled reference studies:

* ``fig2``: achievable throughput region over the critical traffic fraction
  (and the TDMA slot split), eps1 = eps2 = 0.5, G = 16, T = 4, L = 3;
* ``fig3``: throughputs versus the number of APs under the superposition
  model for asymmetric erasure rates, G = 30, T = 4, gamma_c = 0.5;
* ``fig4``: throughput and reliability versus the frame length for both
  sharing schemes, G = 15, eps = 0.5, L = 3, alpha = 0.5, gamma_c = 0.5.

Sweeps evaluate grid points independently (output order follows the grid)
and are byte-reproducible given (spec, seed) in Monte Carlo mode. Data only;
rendering lives in :mod:`aloha_relay.plots`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .analytic import (
    DEFAULT_TRUNCATION,
    TruncationPolicy,
    analytic_metrics,
    tdma_throughput,
    throughput_collision,
    throughput_superposition,
)
from .model import ReceiverModel, Sharing, SystemConfig, validate_config
from .simulate import estimate_metrics

ANALYTIC = "analytic"
MONTE_CARLO = "monte-carlo"

DEFAULT_GAMMA_POINTS = 41
DEFAULT_ALPHA_POINTS = 21

# sweepable parameters, by their external (config file / CLI) names
SWEEPABLE = {
    "G": ("total_load", float),
    "gamma-c": ("critical_fraction", float),
    "T": ("slots_per_frame", int),
    "L": ("num_aps", int),
    "eps1": ("access_erasure", float),
    "eps2": ("backhaul_erasure", float),
    "alpha": ("tdma_fraction", float),
}


def fig2_config() -> SystemConfig:
    return SystemConfig(
        total_load=16.0,
        critical_fraction=0.5,
        slots_per_frame=4,
        num_aps=3,
        access_erasure=0.5,
        backhaul_erasure=0.5,
    )


def fig3_config() -> SystemConfig:
    return SystemConfig(
        total_load=30.0,
        critical_fraction=0.5,
        slots_per_frame=4,
        num_aps=3,
        access_erasure=0.8,
        backhaul_erasure=0.1,
        receiver_model=ReceiverModel.SUPERPOSITION,
    )


def fig4_config() -> SystemConfig:
    return SystemConfig(
        total_load=15.0,
        critical_fraction=0.5,
        slots_per_frame=4,
        num_aps=3,
        access_erasure=0.5,
        backhaul_erasure=0.5,
        tdma_fraction=0.5,
    )


FIG3_ERASURE_PAIRS = ((0.8, 0.1), (0.1, 0.8), (0.5, 0.5))
FIG3_AP_GRID = tuple(range(1, 11))
FIG4_SLOT_GRID = (2, 4, 8, 16, 32)


@dataclass(frozen=True)
class SweepSpec:
    """A custom sweep: a base scenario plus up to two swept parameters."""

    base: SystemConfig
    axes: tuple[tuple[str, tuple[float, ...]], ...]
    mode: str = ANALYTIC
    n_frames: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a sweep needs one or two axes")
        for name, values in self.axes:
            if name not in SWEEPABLE:
                raise ValueError(
                    f"unknown sweep parameter {name!r}; choose from {sorted(SWEEPABLE)}"
                )
            if len(values) == 0:
                raise ValueError(f"sweep axis {name!r} has no values")
        if self.mode not in (ANALYTIC, MONTE_CARLO):
            raise ValueError(f"mode must be {ANALYTIC!r} or {MONTE_CARLO!r}")


@dataclass(frozen=True)
class SweepResult:
    """Tabular sweep output: column names, rows in grid order, and metadata."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class RegionData:
    """Achievable throughput points and their nondominated frontier."""

    points: tuple[dict, ...]
    frontier: tuple[tuple[float, float], ...]


def pareto_closure(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Maximal nondominated subset under componentwise >=.

    Output is ordered by the first coordinate descending; exact duplicates
    are removed. Idempotent and independent of input order.
    """
    unique = sorted({(float(x), float(y)) for x, y in points}, key=lambda p: (-p[0], -p[1]))
    frontier: list[tuple[float, float]] = []
    best_y = -math.inf
    for x, y in unique:
        if y > best_y:
            frontier.append((x, y))
            best_y = y
    return frontier


def _point_seed(seed: int, index: int) -> int:
    return (seed + index) % 2**64


def _snap_alpha(alpha: float, slots_per_frame: int) -> float:
    """Nearest fraction giving an integer slot split (simulator requirement)."""
    return round(alpha * slots_per_frame) / slots_per_frame


def _throughputs(
    cfg: SystemConfig,
    mode: str,
    trunc: TruncationPolicy,
    n_frames: int,
    seed: int,
) -> dict:
    """R_c / R_cbar at one grid point, with standard errors in MC mode."""
    if mode == ANALYTIC:
        if cfg.sharing is Sharing.TDMA:
            tp = tdma_throughput(cfg, trunc)
            return {"R_c": tp.R_c, "R_cbar": tp.R_cbar}
        if cfg.receiver_model is ReceiverModel.COLLISION:
            r_c, r_cb = throughput_collision(cfg, trunc)
        else:
            r_c, r_cb = throughput_superposition(cfg, trunc)
        return {"R_c": r_c, "R_cbar": r_cb}
    est = estimate_metrics(cfg, n_frames, seed)
    return {
        "R_c": est.metrics.R_c,
        "R_cbar": est.metrics.R_cbar,
        "se_R_c": est.se_R_c,
        "se_R_cbar": est.se_R_cbar,
    }


def _all_metrics(
    cfg: SystemConfig,
    mode: str,
    trunc: TruncationPolicy,
    n_frames: int,
    seed: int,
) -> dict:
    if mode == ANALYTIC:
        m = analytic_metrics(cfg, trunc)
        return {
            "R_c": m.R_c,
            "R_cbar": m.R_cbar,
            "Gamma_c": m.Gamma_c,
            "Gamma_cbar": m.Gamma_cbar,
        }
    est = estimate_metrics(cfg, n_frames, seed)
    m = est.metrics
    return {
        "R_c": m.R_c,
        "R_cbar": m.R_cbar,
        "Gamma_c": m.Gamma_c,
        "Gamma_cbar": m.Gamma_cbar,
        "se_R_c": est.se_R_c,
        "se_R_cbar": est.se_R_cbar,
        "se_Gamma_c": est.se_Gamma_c,
        "se_Gamma_cbar": est.se_Gamma_cbar,
    }


def sweep_throughput_region(
    cfg: Optional[SystemConfig] = None,
    gamma_grid: Optional[Sequence[float]] = None,
    alpha_grid: Optional[Sequence[float]] = None,
    mode: str = ANALYTIC,
    n_frames: int = 100_000,
    seed: int = 0,
    trunc: TruncationPolicy = DEFAULT_TRUNCATION,
) -> dict[tuple[str, str], RegionData]:
    """Achievable (R_c, R_cbar) region per sharing scheme and receiver model.

    Non-orthogonal sharing sweeps the critical traffic fraction; TDMA sweeps
    the (fraction, slot split) grid. In Monte Carlo mode each TDMA point's
    slot split is snapped to an integer slot count and both the requested
    and the effective fraction are recorded.
    """
    base = validate_config(cfg if cfg is not None else fig2_config())
    if gamma_grid is None:
        gamma_grid = np.linspace(0.0, 1.0, DEFAULT_GAMMA_POINTS)
    if alpha_grid is None:
        alpha_grid = np.linspace(0.0, 1.0, DEFAULT_ALPHA_POINTS)

    out: dict[tuple[str, str], RegionData] = {}
    index = 0
    for model in (ReceiverModel.COLLISION, ReceiverModel.SUPERPOSITION):
        points = []
        for gamma in gamma_grid:
            point_cfg = replace(
                base,
                critical_fraction=float(gamma),
                receiver_model=model,
                sharing=Sharing.NONORTHOGONAL,
            )
            row = {"gamma_c": float(gamma), "alpha": None}
            row.update(_throughputs(point_cfg, mode, trunc, n_frames, _point_seed(seed, index)))
            points.append(row)
            index += 1
        frontier = pareto_closure((p["R_c"], p["R_cbar"]) for p in points)
        out[(Sharing.NONORTHOGONAL.value, model.value)] = RegionData(
            tuple(points), tuple(frontier)
        )

    for model in (ReceiverModel.COLLISION, ReceiverModel.SUPERPOSITION):
        points = []
        for gamma in gamma_grid:
            for alpha in alpha_grid:
                effective = (
                    _snap_alpha(float(alpha), base.slots_per_frame)
                    if mode == MONTE_CARLO
                    else float(alpha)
                )
                point_cfg = replace(
                    base,
                    critical_fraction=float(gamma),
                    receiver_model=model,
                    sharing=Sharing.TDMA,
                    tdma_fraction=effective,
                )
                row = {
                    "gamma_c": float(gamma),
                    "alpha": effective,
                    "alpha_requested": float(alpha),
                }
                row.update(
                    _throughputs(point_cfg, mode, trunc, n_frames, _point_seed(seed, index))
                )
                points.append(row)
                index += 1
        frontier = pareto_closure((p["R_c"], p["R_cbar"]) for p in points)
        out[(Sharing.TDMA.value, model.value)] = RegionData(tuple(points), tuple(frontier))
    return out


def sweep_vs_aps(
    cfg: Optional[SystemConfig] = None,
    ap_grid: Sequence[int] = FIG3_AP_GRID,
    erasure_pairs: Sequence[tuple[float, float]] = FIG3_ERASURE_PAIRS,
    mode: str = ANALYTIC,
    n_frames: int = 100_000,
    seed: int = 0,
    trunc: TruncationPolicy = DEFAULT_TRUNCATION,
) -> SweepResult:
    """Throughputs as a function of the number of APs, per erasure pair."""
    base = validate_config(cfg if cfg is not None else fig3_config())
    columns = ["model", "eps1", "eps2", "L", "R_c", "R_cbar"]
    if mode == MONTE_CARLO:
        columns += ["se_R_c", "se_R_cbar"]
    rows = []
    index = 0
    for eps1, eps2 in erasure_pairs:
        for L in ap_grid:
            point_cfg = replace(
                base, num_aps=int(L), access_erasure=eps1, backhaul_erasure=eps2
            )
            vals = _throughputs(point_cfg, mode, trunc, n_frames, _point_seed(seed, index))
            row = [base.receiver_model.value, eps1, eps2, int(L), vals["R_c"], vals["R_cbar"]]
            if mode == MONTE_CARLO:
                row += [vals["se_R_c"], vals["se_R_cbar"]]
            rows.append(tuple(row))
            index += 1
    meta = {
        "spec": "fig3",
        "mode": mode,
        "base_config": base,
        "seed": seed if mode == MONTE_CARLO else None,
        "n_frames": n_frames if mode == MONTE_CARLO else None,
    }
    return SweepResult("fig3", tuple(columns), tuple(rows), meta)


def sweep_vs_slots(
    cfg: Optional[SystemConfig] = None,
    slot_grid: Sequence[int] = FIG4_SLOT_GRID,
    mode: str = ANALYTIC,
    n_frames: int = 100_000,
    seed: int = 0,
    trunc: TruncationPolicy = DEFAULT_TRUNCATION,
) -> SweepResult:
    """All four metrics versus frame length, for both sharing schemes and
    both receiver models."""
    base = validate_config(cfg if cfg is not None else fig4_config())
    columns = ["scheme", "model", "T", "R_c", "R_cbar", "Gamma_c", "Gamma_cbar"]
    if mode == MONTE_CARLO:
        columns += ["se_R_c", "se_R_cbar", "se_Gamma_c", "se_Gamma_cbar"]
    rows = []
    index = 0
    for sharing in (Sharing.NONORTHOGONAL, Sharing.TDMA):
        for model in (ReceiverModel.COLLISION, ReceiverModel.SUPERPOSITION):
            for t in slot_grid:
                if (
                    mode == MONTE_CARLO
                    and sharing is Sharing.TDMA
                    and abs(base.tdma_fraction * t - round(base.tdma_fraction * t)) > 1e-9
                ):
                    continue  # no integer slot split for this frame length
                point_cfg = replace(
                    base, slots_per_frame=int(t), receiver_model=model, sharing=sharing
                )
                vals = _all_metrics(point_cfg, mode, trunc, n_frames, _point_seed(seed, index))
                row = [
                    sharing.value,
                    model.value,
                    int(t),
                    vals["R_c"],
                    vals["R_cbar"],
                    vals["Gamma_c"],
                    vals["Gamma_cbar"],
                ]
                if mode == MONTE_CARLO:
                    row += [
                        vals["se_R_c"],
                        vals["se_R_cbar"],
                        vals["se_Gamma_c"],
                        vals["se_Gamma_cbar"],
                    ]
                rows.append(tuple(row))
                index += 1
    meta = {
        "spec": "fig4",
        "mode": mode,
        "base_config": base,
        "seed": seed if mode == MONTE_CARLO else None,
        "n_frames": n_frames if mode == MONTE_CARLO else None,
    }
    return SweepResult("fig4", tuple(columns), tuple(rows), meta)


def region_sweep_result(
    regions: dict[tuple[str, str], RegionData],
    mode: str,
    base: SystemConfig,
    seed: int,
    n_frames: int,
) -> SweepResult:
    """Flatten a region sweep into one table, marking frontier points."""
    mc = mode == MONTE_CARLO
    columns = ["scheme", "model", "gamma_c", "alpha"]
    if mc:
        columns.append("alpha_requested")
    columns += ["R_c", "R_cbar"]
    if mc:
        columns += ["se_R_c", "se_R_cbar"]
    columns.append("on_frontier")
    rows = []
    for (scheme, model), region in regions.items():
        frontier = set(region.frontier)
        for p in region.points:
            row = [scheme, model, p["gamma_c"], p["alpha"]]
            if mc:
                row.append(p.get("alpha_requested"))
            row += [p["R_c"], p["R_cbar"]]
            if mc:
                row += [p["se_R_c"], p["se_R_cbar"]]
            row.append(int((p["R_c"], p["R_cbar"]) in frontier))
            rows.append(tuple(row))
    meta = {
        "spec": "fig2",
        "mode": mode,
        "base_config": base,
        "seed": seed if mc else None,
        "n_frames": n_frames if mc else None,
    }
    return SweepResult("fig2", tuple(columns), tuple(rows), meta)


def sweep_custom(
    spec: SweepSpec, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> SweepResult:
    """Evaluate all four metrics over the grid described by ``spec``."""
    validate_config(spec.base)
    axis_names = [name for name, _ in spec.axes]
    columns = ["scheme", "model"] + axis_names + ["R_c", "R_cbar", "Gamma_c", "Gamma_cbar"]
    if spec.mode == MONTE_CARLO:
        columns += ["se_R_c", "se_R_cbar", "se_Gamma_c", "se_Gamma_cbar"]
    rows = []
    grids = [values for _, values in spec.axes]
    for index, combo in enumerate(itertools.product(*grids)):
        overrides = {}
        for (name, _), value in zip(spec.axes, combo):
            attr, conv = SWEEPABLE[name]
            overrides[attr] = conv(value)
        point_cfg = validate_config(replace(spec.base, **overrides))
        vals = _all_metrics(
            point_cfg, spec.mode, trunc, spec.n_frames, _point_seed(spec.seed, index)
        )
        row = [point_cfg.sharing.value, point_cfg.receiver_model.value]
        row += [conv(value) for (name, _), value in zip(spec.axes, combo)
                for conv in [SWEEPABLE[name][1]]]
        row += [vals["R_c"], vals["R_cbar"], vals["Gamma_c"], vals["Gamma_cbar"]]
        if spec.mode == MONTE_CARLO:
            row += [
                vals["se_R_c"],
                vals["se_R_cbar"],
                vals["se_Gamma_c"],
                vals["se_Gamma_cbar"],
            ]
        rows.append(tuple(row))
    meta = {
        "spec": "custom",
        "mode": spec.mode,
        "base_config": spec.base,
        "axes": tuple((name, tuple(values)) for name, values in spec.axes),
        "seed": spec.seed if spec.mode == MONTE_CARLO else None,
        "n_frames": spec.n_frames if spec.mode == MONTE_CARLO else None,
    }
    return SweepResult("custom", tuple(columns), tuple(rows), meta)


def run_named_sweep(
    name: str,
    mode: str = ANALYTIC,
    n_frames: int = 100_000,
    seed: int = 0,
    trunc: TruncationPolicy = DEFAULT_TRUNCATION,
) -> SweepResult:
    """Run one of the canned presets (fig2, fig3, fig4)."""
    if name == "fig2":
        base = fig2_config()
        regions = sweep_throughput_region(
            base, mode=mode, n_frames=n_frames, seed=seed, trunc=trunc
        )
        return region_sweep_result(regions, mode, base, seed, n_frames)
    if name == "fig3":
        return sweep_vs_aps(mode=mode, n_frames=n_frames, seed=seed, trunc=trunc)
    if name == "fig4":
        return sweep_vs_slots(mode=mode, n_frames=n_frames, seed=seed, trunc=trunc)
    raise ValueError(f"unknown sweep preset {name!r}; expected fig2, fig3 or fig4")
