"""Experiment harness: specimen and FE2 scenarios, metrics and Monte Carlo sweeps."""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AsrFe2Error, ParameterError
from .fem import Constraints
from .geometry import Phase, build_structured_mesh, generate_specimen
from .homogenization import TestMode
from .materials import ElementStates, eigenstrain
from .meso_solver import (BoundaryConditions, RveProblem, closure_fixed_point, sla_damage_loop,
                          specimen_bc)
from .multiscale import MacroProblem, fe2_time_march
from .output import HistoryRecord

log = logging.getLogger(__name__)


@dataclass
class Fields:
    """Per-element state of one converged meso solution."""

    mesh: object
    phases: np.ndarray
    damage: np.ndarray
    alpha: np.ndarray
    cracked: np.ndarray
    strain: np.ndarray  # Voigt, total strain

    @property
    def crack_area(self):
        return crack_area(self.mesh.areas, self.strain, self.damage)

    def vtk_data(self):
        return {"damage": self.damage, "phase": self.phases.astype(np.int64),
                "crack_area": self.crack_area, "crack_angle": np.where(self.cracked, self.alpha, 0.0)}


def rve_fields(rve, sol):
    st = rve.states
    return Fields(rve.mesh, rve.phases.copy(), np.where(st.cracked, st.d, 0.0), st.alpha.copy(),
                  st.cracked.copy(), sol.strain.copy())


def crack_area(area, strain, damage):
    """Smeared crack area A0 * max(eps_xx + eps_yy, 0) of damaged elements."""
    strain = np.asarray(strain, dtype=float)
    vol = strain[..., 0] + strain[..., 1]
    return np.where(np.asarray(damage) > 0, np.asarray(area) * np.maximum(vol, 0.0), 0.0)


def phase_mask(phases, phase):
    """Element mask of a phase; ASR sites count as aggregate material."""
    phase = Phase(phase)
    if phase == Phase.AGGREGATE:
        return (phases == Phase.AGGREGATE) | (phases == Phase.ASR_SITE)
    return phases == phase


def crack_density(fields, phase):
    """Crack area inside a phase divided by the area of that phase."""
    mask = phase_mask(fields.phases, phase)
    total = fields.mesh.areas[mask].sum()
    if total <= 0:
        raise ParameterError(f"phase {Phase(phase).name} is empty")
    return float(fields.crack_area[mask].sum() / total)


def pooled_crack_density(fields_list, phase):
    """Crack density over several meshes (summed crack and phase areas)."""
    crack = area = 0.0
    for f in fields_list:
        mask = phase_mask(f.phases, phase)
        crack += f.crack_area[mask].sum()
        area += f.mesh.areas[mask].sum()
    if area <= 0:
        raise ParameterError(f"phase {Phase(phase).name} is empty")
    return float(crack / area)


def orientation_histogram(fields, bins=18):
    """Crack-area weighted histogram of crack angles over [0, pi), normalized to 1.

    The angle is the crack normal direction measured from the x axis, so bin 0
    holds vertical cracks. When every crack is closed (zero area) the cracked
    elements are counted with equal weight.
    """
    fields_list = fields if isinstance(fields, (list, tuple)) else [fields]
    alpha = np.concatenate([f.alpha[f.cracked] for f in fields_list])
    if not len(alpha):
        raise ParameterError("no cracked elements")
    w = np.concatenate([f.crack_area[f.cracked] for f in fields_list])
    if w.sum() <= 0:
        w = np.ones_like(alpha)
    hist, _ = np.histogram(np.mod(alpha, np.pi), bins=bins, range=(0.0, np.pi), weights=w)
    return hist / hist.sum()


# --- relative stiffness ---------------------------------------------------------

def _probe_bc(mesh, axis, strain):
    """Uniform normal displacement on the far face, near face held normal."""
    near, far = ("left", "right") if axis == 0 else ("bottom", "top")
    size = mesh.width if axis == 0 else mesh.height
    a = mesh.boundary_nodes(near)
    b = mesh.boundary_nodes(far)
    pin = 2 * a[0] + (1 - axis)  # remove the remaining rigid motion
    fixed = np.concatenate([2 * a + axis, 2 * b + axis, [pin]])
    values = np.concatenate([np.zeros(len(a)), np.full(len(b), strain * size), [0.0]])
    return BoundaryConditions(Constraints(2 * mesh.n_nodes, fixed, values)), b


def face_reaction(rve, axis, mode, strain):
    """Integrated normal reaction on the loaded face for the current frozen state."""
    s = strain if TestMode(mode) is TestMode.TENSION else -strain
    bc, face = _probe_bc(rve.mesh, axis, s)
    states = rve.states
    saved = states.closed.copy()
    try:
        sol, _ = closure_fixed_point(rve, bc, include_eigen=False)
        r = rve.internal_forces(sol).reshape(-1, 2)
    finally:
        states.closed = saved
    return abs(float(r[face, axis].sum()))


def pristine_reaction(rve, axis, mode, strain):
    pristine = RveProblem(rve.mesh, rve.phases, rve.states.pristine(), plane=rve.plane,
                          damage=False)
    return face_reaction(pristine, axis, mode, strain)


def relative_stiffness(rve, axis, mode, strain=1e-4, reference=None):
    """Percent ratio of the face reaction now to the one of the pristine specimen."""
    if reference is None:
        reference = pristine_reaction(rve, axis, mode, strain)
    return 100.0 * face_reaction(rve, axis, mode, strain) / reference


# --- specimen scenarios ----------------------------------------------------------

def boundary_strain(mesh, u):
    """Mean face-displacement difference over the specimen size, per axis."""
    u = u.reshape(-1, 2)
    ex = (u[mesh.boundary_nodes("right"), 0].mean() - u[mesh.boundary_nodes("left"), 0].mean())
    ey = (u[mesh.boundary_nodes("top"), 1].mean() - u[mesh.boundary_nodes("bottom"), 1].mean())
    return np.array([ex / mesh.width, ey / mesh.height])


@dataclass
class ScenarioResult:
    history: list
    fields: list  # final Fields, one per meso mesh
    volume_strain: list = field(default_factory=list)  # area-averaged strain per record
    problem: object = None


def build_specimen(config, geometry_seed=None, sites_seed=None, strength_seed=None):
    g = config.seed_geometry if geometry_seed is None else geometry_seed
    s = config.seed_sites if sites_seed is None else sites_seed
    k = config.seed_strength if strength_seed is None else strength_seed
    mesh, _, phases, frac = generate_specimen(config.width, config.height, config.element_size,
                                              config.d_min, config.d_max, config.packing,
                                              config.asr_site_ratio, g, s)
    if frac < config.packing - 0.02:
        log.warning("packing %.3f reached instead of %.3f", frac, config.packing)
    states = ElementStates(phases, config.material_table(), np.random.default_rng(k),
                           regularize=config.regularize)
    return RveProblem(mesh, phases, states, plane=config.plane,
                      sla_max_passes=config.sla_max_passes,
                      closure_max_iter=config.closure_max_iter,
                      criterion_tol=config.criterion_tol, sla_mode=config.sla_mode)


def _n_steps(config):
    return int(round(config.t_end / config.dt))


def _record_due(k, n, interval):
    return k % interval == 0 or k == n


def run_meso_scenario(config, rve=None):
    """Single specimen on rollers, free or under top pressure, marched in time."""
    if config.scenario not in ("meso_free", "meso_loaded"):
        raise ParameterError(f"{config.scenario} is not a specimen scenario")
    rve = build_specimen(config) if rve is None else rve
    mesh = rve.mesh
    law = config.asr_law()
    T = config.temperature
    rve.temperature = T
    bc = specimen_bc(mesh, config.load if config.loaded else 0.0)
    refs = [pristine_reaction(rve, ax, TestMode.COMPRESSION, config.probe_strain) for ax in (0, 1)]

    # load step before any expansion; its elastic strain is taken out of the records
    rve.set_eigenstrain(eigenstrain(0.0, T, law))
    sol = sla_damage_loop(rve, bc)
    base = boundary_strain(mesh, sol.u)
    base_vol = mesh.areas @ sol.strain[:, :2] / mesh.areas.sum()

    history, vol = [], []
    n = _n_steps(config)
    for k in range(1, n + 1):
        t = k * config.dt
        rve.set_eigenstrain(eigenstrain(t, T, law))
        sol = sla_damage_loop(rve, bc)
        if not _record_due(k, n, config.record_interval):
            continue
        f = rve_fields(rve, sol)
        ex, ey = boundary_strain(mesh, sol.u) - base
        rel = [relative_stiffness(rve, ax, TestMode.COMPRESSION, config.probe_strain, refs[ax])
               for ax in (0, 1)]
        history.append(HistoryRecord(
            t_days=float(t), strain_x=float(ex), strain_y=float(ey),
            crack_density_aggregate=crack_density(f, Phase.AGGREGATE),
            crack_density_mortar=crack_density(f, Phase.MORTAR),
            rel_stiffness_x=float(rel[0]), rel_stiffness_y=float(rel[1]),
            n_damaged=int(rve.states.cracked.sum())))
        vol.append(mesh.areas @ sol.strain[:, :2] / mesh.areas.sum() - base_vol)
        log.debug("t=%.1f d: strain %.3e %.3e, %d cracked", t, ex, ey, history[-1].n_damaged)
    fields_ = [rve_fields(rve, sol)]
    return ScenarioResult(history, fields_, vol, rve)


# --- FE2 scenarios -----------------------------------------------------------

def build_macro_problem(config):
    macro = build_structured_mesh(config.macro_width, config.macro_height,
                                  config.macro_element_size)
    seeds = np.random.SeedSequence([config.seed_geometry, config.seed_sites,
                                    config.seed_strength]).spawn(macro.n_elements)
    rves = []
    for e, ss in enumerate(seeds):
        g, s, k = (int(x) for x in ss.generate_state(3))
        rves.append(build_specimen(config, g, s, k))
    bottom = macro.boundary_nodes("bottom")
    fixed = np.concatenate([2 * bottom + 1, [2 * bottom[0]]])
    tractions = {"top": np.array([0.0, -config.load])} if config.loaded else {}
    return MacroProblem(macro, rves, config.asr_law(), config.temperature, fixed,
                        np.zeros(len(fixed)), tractions, tol=config.macro_tol,
                        max_iter=config.macro_max_iter, virtual_strain=config.virtual_strain,
                        n_workers=config.n_workers)


def run_fe2_scenario(config, problem=None, checkpoint_dir=None):
    """Macro specimen of periodic RVEs, free or under top pressure."""
    if config.scenario not in ("fe2_free", "fe2_loaded"):
        raise ParameterError(f"{config.scenario} is not an FE2 scenario")
    problem = build_macro_problem(config) if problem is None else problem
    mesh = problem.mesh
    n = _n_steps(config)
    state = {"base": None, "ref": None}
    history, vol = [], []

    def on_step(prob, rec):
        C = np.stack([eff.stiffness for eff in prob.effective])
        if state["ref"] is None:
            state["ref"] = C[:, [0, 1], [0, 1]].mean(axis=0)
        if rec is None:
            state["base"] = (boundary_strain(mesh, prob.u),
                             prob.assembler.areas @ prob.assembler.strains(prob.u)[:, :2]
                             / prob.assembler.areas.sum())
            return
        if not _record_due(prob.step_index, n, config.record_interval):
            return
        flds = [rve_fields(r, r.last_solution) for r in prob.rves]
        ex, ey = boundary_strain(mesh, prob.u) - state["base"][0]
        rel = 100.0 * C[:, [0, 1], [0, 1]].mean(axis=0) / state["ref"]
        history.append(HistoryRecord(
            t_days=float(rec.t), strain_x=float(ex), strain_y=float(ey),
            crack_density_aggregate=pooled_crack_density(flds, Phase.AGGREGATE),
            crack_density_mortar=pooled_crack_density(flds, Phase.MORTAR),
            rel_stiffness_x=float(rel[0]), rel_stiffness_y=float(rel[1]),
            n_damaged=int(sum(r.states.cracked.sum() for r in prob.rves))))
        vol.append(rec.mean_strain[:2] - state["base"][1])

    fe2_time_march(problem, config.t_end, config.dt, on_step, checkpoint_dir)
    flds = [rve_fields(r, r.last_solution) for r in problem.rves] if config.t_end > 0 else []
    return ScenarioResult(history, flds, vol, problem)


def run_scenario(config):
    if config.scenario.startswith("meso"):
        return run_meso_scenario(config)
    return run_fe2_scenario(config)


# --- Monte Carlo -------------------------------------------------------------

class Vary(enum.Enum):
    SITES_ONLY = "sites"
    FULL_GEOMETRY = "geometry"


@dataclass
class RunOutcome:
    seeds: tuple  # (geometry, strength, sites)
    history: list | None
    error: str | None = None


@dataclass
class MonteCarloResult:
    runs: list
    mean: np.ndarray  # (n_records, n_fields) over successful runs
    std: np.ndarray
    n_failed: int

    @property
    def successful(self):
        return [r for r in self.runs if r.history is not None]


def monte_carlo_seeds(config, n_runs, vary):
    vary = Vary(vary)
    out = []
    for i in range(n_runs):
        g = config.seed_geometry if vary is Vary.SITES_ONLY else config.seed_geometry + i
        out.append((g, config.seed_strength + i, config.seed_sites + i))
    return out


def _mc_run(args):
    config, seeds = args
    g, k, s = seeds
    cfg = config.replace(seed_geometry=g, seed_strength=k, seed_sites=s)
    try:
        return RunOutcome(seeds, run_scenario(cfg).history)
    except AsrFe2Error as err:
        return RunOutcome(seeds, None, f"{type(err).__name__}: {err}")


def monte_carlo(config, n_runs, vary=Vary.SITES_ONLY, seeds=None, n_workers=None):
    """Independent runs with varied seeds; mean and std per history field.

    ``seeds`` overrides the generated (geometry, strength, sites) triples.
    Failed runs are kept with their error message and left out of the stats.
    """
    if n_runs < 2:
        raise ParameterError("Monte Carlo needs at least two runs")
    seeds = monte_carlo_seeds(config, n_runs, vary) if seeds is None else list(seeds)
    if len(seeds) != n_runs:
        raise ParameterError("one seed triple per run is required")
    n_workers = config.n_workers if n_workers is None else n_workers
    tasks = [(config.replace(n_workers=1), s) for s in seeds]
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            runs = list(pool.map(_mc_run, tasks))
    else:
        runs = [_mc_run(t) for t in tasks]
    ok = [np.array([[getattr(r, k) for k in r.__dataclass_fields__] for r in run.history],
                   dtype=float) for run in runs if run.history is not None]
    if ok:
        stack = np.stack(ok)
        mean, std = stack.mean(axis=0), stack.std(axis=0)
    else:
        mean = std = np.empty((0, 8))
    return MonteCarloResult(runs, mean, std, sum(r.history is None for r in runs))
