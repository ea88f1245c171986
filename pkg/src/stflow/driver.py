"""Sequential local-refinement time stepper.

Each coarse step starts from coarse (nx, ny) pressure/saturation fields,
solves the fully implicit system on the coarsest space-time mesh, then
refines in rounds: temporal rounds first (marked by the temporal flux
indicator and saturation rate, plus a one-shot residual screening of the
coarsest initial guess), then spatial rounds with the temporal grid
frozen. Every refined mesh is re-solved, warm-started from the projected
previous solution. The end-of-step solution is restricted back to the
coarse grid and handed to the next step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, estimators, mesh as meshmod, solver
from .config import RunConfig
from .errors import NewtonError, SolverError
from .mesh import State

logger = logging.getLogger(__name__)


class StepFailure(SolverError):
    """Newton ran out of iterations inside a step; carries the pass log."""

    def __init__(self, message: str, record: "StepRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class PassRecord:
    """One mesh, one Newton solve."""

    kind: str                # "initial" | "temporal" | "spatial"
    n_elements: int
    n_subfaces: int
    n_marked: int            # marks that produced this mesh (0 on the initial pass)
    newton_iterations: int
    t_setup: float           # mesh build/refine + plan construction + assembly
    t_linear: float
    t_data: float            # projection, indicator evaluation, restriction
    indicators: "estimators.IndicatorField | None" = None

    def describe(self) -> str:
        return (
            f"{self.kind}: {self.n_elements} elements, {self.n_marked} marked, "
            f"{self.newton_iterations} Newton its"
        )


@dataclass
class StepRecord:
    """Pass log and mass audit for one coarse step."""

    index: int
    t_start: float
    t_end: float
    passes: list[PassRecord] = field(default_factory=list)
    start_mass: tuple[float, float] = (0.0, 0.0)      # (oil, water) lb
    end_mass: tuple[float, float] = (0.0, 0.0)
    produced_mass: tuple[float, float] = (0.0, 0.0)
    injected_water: float = 0.0

    @property
    def n_passes(self) -> int:
        return len(self.passes)

    @property
    def newton_total(self) -> int:
        return sum(p.newton_iterations for p in self.passes)

    @property
    def elements_total(self) -> int:
        return sum(p.n_elements for p in self.passes)

    @property
    def setup_seconds(self) -> float:
        return sum(p.t_setup for p in self.passes)

    @property
    def linear_seconds(self) -> float:
        return sum(p.t_linear for p in self.passes)

    @property
    def data_seconds(self) -> float:
        return sum(p.t_data for p in self.passes)

    def describe(self) -> str:
        lines = [p.describe() for p in self.passes]
        return f"step {self.index}: " + "; ".join(lines)


@dataclass
class RunSeries:
    """Per-step production history plus the retained end states."""

    times: np.ndarray            # step-end times, days
    produced_oil: np.ndarray     # lb per step
    produced_water: np.ndarray
    injected_water: np.ndarray
    rate_oil: np.ndarray         # ft3/day at reference density, step average
    rate_water: np.ndarray
    states: list[State]          # end-of-step fine states (empty unless kept)
    final_state: State | None
    final_coarse: tuple[np.ndarray, np.ndarray] | None   # restricted (P, S)

    @property
    def n_steps(self) -> int:
        return int(self.times.size)


@dataclass
class RunReport:
    """Wall-clock decomposition and work counters for one run."""

    mode: str
    n_steps: int
    setup_seconds: float = 0.0
    linear_seconds: float = 0.0
    data_seconds: float = 0.0
    total_seconds: float = 0.0
    newton_total: int = 0
    linear_solves: int = 0
    passes_total: int = 0
    elements_per_pass: list[int] = field(default_factory=list)
    conservation_oil: float = 0.0
    conservation_water: float = 0.0
    records: list[StepRecord] = field(default_factory=list, repr=False)

    @property
    def elements_total(self) -> int:
        return sum(self.elements_per_pass)

    def speedup_vs(self, reference: "RunReport") -> float:
        """How much faster this run was than the reference."""
        if self.total_seconds <= 0.0:
            return float("inf")
        return reference.total_seconds / self.total_seconds


def cold_start(plan: assembly.AssemblyPlan) -> np.ndarray:
    """Step-start cell fields and zero auxiliary fluxes."""
    return np.concatenate([plan.p_start, plan.s_start, np.zeros(2 * plan.n_f)])


def initial_fields(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    shape = (cfg.nx, cfg.ny)
    return np.full(shape, cfg.pressure), np.full(shape, cfg.s_water)


def _evaluate(plan, x, prev_step_state):
    ind = estimators.compute_estimators(plan, x)
    ind.eps_t, ind.eps_s = estimators.saturation_gradients(plan, x, prev_step_state)
    return ind


def _sub_cap_keys(mesh, axis: str) -> set:
    if axis == "temporal":
        return {e.key for e in mesh.elements if e.level_t < mesh.lt_max}
    return {e.key for e in mesh.elements if e.level_s < mesh.ls_max}


def _solve_pass(rec, kind, plan, x0, cfg, t_setup, t_data, n_marked):
    try:
        x, stats = solver.newton_solve(
            plan, x0,
            tol_rel=cfg.newton_tol_rel,
            tol_abs=cfg.newton_tol_abs,
            max_iter=cfg.newton_max_iter,
            linear_solver=cfg.linear_solver,
        )
    except NewtonError as e:
        rec.passes.append(PassRecord(
            kind, plan.n_el, plan.n_f, n_marked, cfg.newton_max_iter,
            t_setup, 0.0, t_data,
        ))
        raise StepFailure(f"{e} [{rec.describe()}]", rec) from e
    rec.passes.append(PassRecord(
        kind, plan.n_el, plan.n_f, n_marked, stats.iterations,
        t_setup + stats.t_assembly, stats.t_linear, t_data,
    ))
    logger.debug("step %d %s pass: %s", rec.index, kind, rec.passes[-1].describe())
    return x


def _refined_pass(plan, x, marks, axis, model, wells, p_coarse, s_coarse, cfg):
    """Refine + smooth, carry the solution over, rebuild the plan."""
    old_mesh = plan.mesh
    t0 = time.perf_counter()
    if axis == "temporal":
        new_mesh = old_mesh.refine_temporal(marks).smooth()
    else:
        new_mesh = old_mesh.refine_spatial(marks).smooth()
    t_build = time.perf_counter() - t0

    t_proj = 0.0
    x0 = None
    if cfg.warm_start:
        t0 = time.perf_counter()
        old_state = State.from_vector(old_mesh, x)
        x0 = meshmod.project_state(old_mesh, old_state, new_mesh).to_vector()
        t_proj = time.perf_counter() - t0

    t0 = time.perf_counter()
    new_plan = assembly.AssemblyPlan(new_mesh, model, wells, p_coarse, s_coarse)
    t_build += time.perf_counter() - t0
    if x0 is None:
        x0 = cold_start(new_plan)
    return new_plan, x0, t_build, t_proj


def advance_step(
    p_coarse: np.ndarray,
    s_coarse: np.ndarray,
    model,
    wells,
    cfg: RunConfig,
    step_index: int = 0,
    t_start: float = 0.0,
    prev_step_state: State | None = None,
):
    """One coarse step.

    Returns (end state on the final mesh, (P, S) coarse fields for the next
    step, StepRecord). Raises StepFailure if Newton gives out on any pass.
    """
    rec = StepRecord(index=step_index, t_start=t_start, t_end=t_start + cfg.dt)
    grid = cfg.grid(step_index, t_start)

    fine_mode = cfg.mode == "fine"
    t0 = time.perf_counter()
    if fine_mode:
        msh = meshmod.build_uniform_finest(grid, cfg.levels_space, cfg.levels_time)
    else:
        msh = meshmod.build_coarse(grid, cfg.levels_space, cfg.levels_time)
    plan = assembly.AssemblyPlan(msh, model, wells, p_coarse, s_coarse)
    t_setup = time.perf_counter() - t0

    x0 = cold_start(plan)
    t_seed = 0.0
    if fine_mode and cfg.warm_start and cfg.levels_space + cfg.levels_time > 0:
        # Newton from a uniform cold state wanders on large fine meshes, so
        # seed it with the coarse-mesh solution; the fine solve still
        # converges to the same tolerance on the same system.
        t0 = time.perf_counter()
        msh_c = meshmod.build_coarse(grid, cfg.levels_space, cfg.levels_time)
        plan_c = assembly.AssemblyPlan(msh_c, model, wells, p_coarse, s_coarse)
        t_setup_c = time.perf_counter() - t0
        x_c = _solve_pass(rec, "seed", plan_c, cold_start(plan_c), cfg,
                          t_setup_c, 0.0, 0)
        t0 = time.perf_counter()
        x0 = meshmod.project_state(msh_c, State.from_vector(msh_c, x_c), msh).to_vector()
        t_seed = time.perf_counter() - t0

    # Screen the coarsest initial guess once per step: the discrete-residual
    # indicator outlines the main refinement region before any solve.
    residual_region: set = set()
    t_data = 0.0
    adaptive = cfg.mode == "adaptive"
    if adaptive and cfg.levels_time > 0 and not cfg.mark_all:
        t0 = time.perf_counter()
        ind0 = estimators.compute_estimators(plan, x0)
        residual_region = estimators.mark_residual_region(ind0)
        t_data = time.perf_counter() - t0

    x = _solve_pass(rec, "initial", plan, x0, cfg, t_setup, t_data + t_seed, 0)

    if adaptive:
        for axis, rounds in (("temporal", cfg.levels_time), ("spatial", cfg.levels_space)):
            for _ in range(rounds):
                t0 = time.perf_counter()
                if cfg.mark_all:
                    marks = _sub_cap_keys(plan.mesh, axis)
                else:
                    ind = _evaluate(plan, x, prev_step_state)
                    if cfg.verbose_indicators:
                        rec.passes[-1].indicators = ind
                    if axis == "temporal":
                        fit_f = estimators.fit_thresholds(ind.normalized("eta_t_f"))
                        fit_e = estimators.fit_thresholds(ind.normalized("eps_t"))
                        marks = estimators.mark_temporal(ind, fit_f, fit_e)
                        marks |= residual_region
                    else:
                        fit_f = estimators.fit_thresholds(ind.normalized("eta_s_f"))
                        fit_e = estimators.fit_thresholds(ind.normalized("eps_s"))
                        marks = estimators.mark_spatial(ind, fit_f, fit_e, wells)
                residual_region = set()
                t_data = time.perf_counter() - t0
                if not marks:
                    break
                plan, x0, t_setup, t_proj = _refined_pass(
                    plan, x, marks, axis, model, wells, p_coarse, s_coarse, cfg,
                )
                x = _solve_pass(
                    rec, axis, plan, x0, cfg, t_setup, t_data + t_proj, len(marks),
                )

    state = State.from_vector(plan.mesh, x)
    t0 = time.perf_counter()
    p_next, s_next = meshmod.restrict_to_coarse(plan.mesh, state, model)
    rec.passes[-1].t_data += time.perf_counter() - t0

    oil0, wat0 = assembly.start_of_step_mass(plan)
    oil1, wat1 = assembly.end_of_step_mass(plan, x)
    q_o, q_w = assembly.production_mass(plan, state.p, state.s)
    rec.start_mass = (oil0, wat0)
    rec.end_mass = (oil1, wat1)
    rec.produced_mass = (float(q_o.sum()), float(q_w.sum()))
    rec.injected_water = float(plan.w_inj.sum())
    return state, (p_next, s_next), rec


def conservation_error(records) -> tuple[float, float]:
    """Per-phase step-balance defect |end - start + produced - injected|,
    summed over steps, relative to the total injected water mass. With no
    injection the absolute sums are returned."""
    err_o = sum(
        abs(r.end_mass[0] - r.start_mass[0] + r.produced_mass[0]) for r in records
    )
    err_w = sum(
        abs(r.end_mass[1] - r.start_mass[1] + r.produced_mass[1] - r.injected_water)
        for r in records
    )
    inj = sum(r.injected_water for r in records)
    if inj > 0.0:
        return err_o / inj, err_w / inj
    return err_o, err_w


def run_simulation(
    cfg: RunConfig,
    model=None,
    wells=None,
    keep_states: bool | None = None,
):
    """Marches cfg.n_steps coarse steps; returns (RunSeries, RunReport).

    The rock model and wells are built from the config unless supplied.
    States are retained per step only when keep_states (default: the
    config's write_vtk flag) to bound memory.
    """
    t_run0 = time.perf_counter()
    report = RunReport(mode=cfg.mode, n_steps=cfg.n_steps)

    t0 = time.perf_counter()
    if model is None:
        from . import io_out

        model = io_out.build_model(cfg)
    if wells is None:
        wells = cfg.wells()
    report.setup_seconds += time.perf_counter() - t0
    if keep_states is None:
        keep_states = cfg.write_vtk

    p_c, s_c = initial_fields(cfg)
    records: list[StepRecord] = []
    states: list[State] = []
    prod_o, prod_w, inj_w, times = [], [], [], []
    state = None
    for n in range(cfg.n_steps):
        state, (p_c, s_c), rec = advance_step(
            p_coarse=p_c, s_coarse=s_c, model=model, wells=wells, cfg=cfg,
            step_index=n, t_start=n * cfg.dt, prev_step_state=state,
        )
        records.append(rec)
        times.append(rec.t_end)
        prod_o.append(rec.produced_mass[0])
        prod_w.append(rec.produced_mass[1])
        inj_w.append(rec.injected_water)
        if keep_states:
            states.append(state)
        logger.info("%s", rec.describe())

    for rec in records:
        report.setup_seconds += rec.setup_seconds
        report.linear_seconds += rec.linear_seconds
        report.data_seconds += rec.data_seconds
        report.newton_total += rec.newton_total
        report.passes_total += rec.n_passes
        report.elements_per_pass.extend(p.n_elements for p in rec.passes)
    report.linear_solves = report.newton_total
    report.records = records
    report.conservation_oil, report.conservation_water = conservation_error(records)
    report.total_seconds = time.perf_counter() - t_run0

    prod_o = np.asarray(prod_o)
    prod_w = np.asarray(prod_w)
    fluid = model.fluid
    series = RunSeries(
        times=np.asarray(times),
        produced_oil=prod_o,
        produced_water=prod_w,
        injected_water=np.asarray(inj_w),
        rate_oil=prod_o / (fluid.rho_ref[1] * cfg.dt),
        rate_water=prod_w / (fluid.rho_ref[0] * cfg.dt),
        states=states,
        final_state=state,
        final_coarse=(p_c, s_c) if cfg.n_steps > 0 else None,
    )
    return series, report
