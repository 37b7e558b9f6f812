"""Scenario configuration: INI files -> built runs -> checked outputs.

A scenario file holds everything needed to reproduce a run: lattice,
model constants, schedule, fixed-point options, initial-data recipes, and
the list of invariant checks to evaluate on the result.  The format is
plain INI (configparser), overridable from the command line with
``section.key=value`` strings.

Initial-data recipes (section ``initial_p`` / ``initial_c``):

* ``gaussian_bump`` -- separable Gaussian with per-block centres and
  variances, normalised to a prescribed total mass,
* ``plateau_ramp``  -- smooth tanh-edged plateau of height ``k_inf`` (a
  confined distant source region for the attractant),
* ``zero``          -- identically zero.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigurationError, ResolutionError
from .grid import GridSpec, PhaseField, SpatialField, lq_norm
from .harness import (check_c_bounds, check_comparison, check_energy,
                      check_gronwall, check_positivity, check_speed_bound,
                      write_report)
from .heat import HeatPlan, gaussian_rho
from .moments import moments_of, second_moment, velocity_marginal
from .picard import ModelParams, _alpha_raw, picard_coupled, picard_pure
from .snapshots import save_field, write_moment_table
from .stepping import Schedule, Trajectory

CHECK_NAMES = ("positivity", "comparison", "gronwall", "energy",
               "speed_bound", "c_bounds")


@dataclass(frozen=True)
class Scenario:
    """One fully specified run: lattice, constants, schedule, data, checks."""

    name: str
    driver: str
    grid: GridSpec
    params: ModelParams
    schedule: Schedule
    p_recipe: dict
    c_recipe: dict
    picard: dict
    checks: tuple


# --------------------------------------------------------------------------
# recipes


def _per_axis(value, dim, what):
    if isinstance(value, str):
        value = _floats_list(value)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, dim)
    if arr.size != dim:
        raise ConfigurationError(f"{what} needs 1 or {dim} values, got {arr.size}")
    return arr


def _periodized(profile, coords, half_width):
    """Sample ``profile`` plus its two nearest periodic images.

    Recipes are written for the real line; folding the wrap images in makes
    the sampled function genuinely smooth across the box seam, so the
    spectral semigroup sees no jump (a bare tail of, say, 1e-6 at one edge
    meeting 0 at the other would ring at that same 1e-6 scale).
    """
    period = 2.0 * half_width
    return profile(coords) + profile(coords - period) + profile(coords + period)


def _gauss_1d(coords, centre, variance, half_width, spacing):
    if not variance > 0.0:
        raise ConfigurationError(f"variance must be positive, got {variance!r}")
    # Spectral evolution needs the bump's spectrum to die before Nyquist,
    # else the semigroup rings it negative at well above round-off.
    if math.sqrt(variance) < 2.5 * spacing:
        raise ResolutionError(
            f"gaussian_bump is unresolved: sqrt(variance) = "
            f"{math.sqrt(variance):.4g} < 2.5 h = {2.5 * spacing:.4g}; "
            "widen the bump or refine the lattice"
        )

    def profile(x):
        return np.exp(-(x - centre) ** 2 / (2.0 * variance)) \
            / math.sqrt(2.0 * math.pi * variance)

    return _periodized(profile, coords, half_width)


def build_initial_p(grid: GridSpec, recipe: dict) -> PhaseField:
    """Phase-density recipe lookup; see module docstring."""
    kind = recipe.get("recipe", "zero")
    if kind == "zero":
        return PhaseField(grid, np.zeros(grid.phase_shape), nonnegative=True)
    if kind != "gaussian_bump":
        raise ConfigurationError(f"unknown density recipe {kind!r}")
    cx = _per_axis(recipe.get("center_x", 0.0), grid.dim_x, "center_x")
    cv = _per_axis(recipe.get("center_v", 0.0), grid.dim_v, "center_v")
    var_x = float(recipe.get("variance_x", 0.25))
    var_v = float(recipe.get("variance_v", 0.25))
    mass = float(recipe.get("mass", 1.0))
    if mass < 0.0:
        raise ConfigurationError(f"mass must be >= 0, got {mass!r}")
    x = grid.x_coords()
    v = grid.v_coords()
    factors = [_gauss_1d(x, cx[i], var_x, grid.half_width_x, grid.h_x)
               for i in range(grid.dim_x)]
    factors += [_gauss_1d(v, cv[i], var_v, grid.half_width_v, grid.h_v)
                for i in range(grid.dim_v)]
    vals = factors[0]
    for fac in factors[1:]:
        vals = np.multiply.outer(vals, fac)
    vals = vals * mass
    return PhaseField(grid, vals, nonnegative=True)


def build_initial_c(grid: GridSpec, recipe: dict) -> SpatialField:
    """Concentration recipe lookup; see module docstring."""
    kind = recipe.get("recipe", "zero")
    if kind == "zero":
        return SpatialField(grid, np.zeros(grid.spatial_shape), role="c")
    if kind == "gaussian_bump":
        cx = _per_axis(recipe.get("center_x", 0.0), grid.dim_x, "center_x")
        var_x = float(recipe.get("variance_x", 0.25))
        mass = float(recipe.get("mass", 1.0))
        x = grid.x_coords()
        factors = [_gauss_1d(x, cx[i], var_x, grid.half_width_x, grid.h_x)
                   for i in range(grid.dim_x)]
        vals = factors[0]
        for fac in factors[1:]:
            vals = np.multiply.outer(vals, fac)
        return SpatialField(grid, mass * vals, role="c")
    if kind != "plateau_ramp":
        raise ConfigurationError(f"unknown concentration recipe {kind!r}")
    k_inf = float(recipe.get("k_inf", 1.0))
    if k_inf < 0.0:
        raise ConfigurationError(f"k_inf must be >= 0, got {k_inf!r}")
    lo = float(recipe.get("edge_lo", -0.5 * grid.half_width_x))
    hi = float(recipe.get("edge_hi", 0.5 * grid.half_width_x))
    width = float(recipe.get("width", 0.05 * grid.half_width_x))
    if not width > 0.0 or not hi > lo:
        raise ConfigurationError(
            f"plateau needs edge_hi > edge_lo and width > 0, got "
            f"({lo!r}, {hi!r}, {width!r})"
        )
    if width < 6.0 * grid.h_x:
        raise ResolutionError(
            f"plateau_ramp is unresolved: width = {width:.4g} < 6 h_x = "
            f"{6.0 * grid.h_x:.4g}; widen the ramp or refine the lattice"
        )
    def profile(x):
        return 0.25 * (1.0 + np.tanh((x - lo) / width)) \
            * (1.0 + np.tanh((hi - x) / width))

    ramp = _periodized(profile, grid.x_coords(), grid.half_width_x)
    vals = ramp
    for _ in range(grid.dim_x - 1):
        vals = np.multiply.outer(vals, ramp)
    return SpatialField(grid, k_inf * vals, role="c")


def boundary_mass_fraction(p0: PhaseField, cells: int = 3) -> float:
    """Fraction of |p0|'s mass within ``cells`` lattice cells of any box edge.

    The periodic box stands in for free space, so initial data reaching the
    boundary wraps around instead of escaping; anything above ~1e-8 here
    deserves a warning.
    """
    total = float(np.abs(p0.values).sum())
    if total == 0.0:
        return 0.0
    mask = np.zeros(p0.values.shape, dtype=bool)
    for ax, n in enumerate(p0.values.shape):
        idx = [slice(None)] * p0.values.ndim
        idx[ax] = slice(0, cells)
        mask[tuple(idx)] = True
        idx[ax] = slice(n - cells, n)
        mask[tuple(idx)] = True
    return float(np.abs(p0.values)[mask].sum()) / total


# --------------------------------------------------------------------------
# config parsing


_GRID_KEYS = {"dim_x", "dim_v", "n_x", "n_v", "half_width_x", "half_width_v"}
_PARAM_KEYS = {"sigma", "d", "gamma", "eta", "alpha1", "c_R", "epsilon",
               "v0", "use_vector_j"}
_SCHEDULE_KEYS = {"t_end", "dt", "save_stride"}
_PICARD_KEYS = {"k_max", "tol", "init"}


def _section(parser, name, required=True):
    if not parser.has_section(name):
        if required:
            raise ConfigurationError(f"config is missing the [{name}] section")
        return {}
    return dict(parser.items(name))


def _known_keys(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in [{where}] "
            f"(allowed: {sorted(allowed)})"
        )


def _floats_list(text: str):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def load_scenario(source, overrides=()) -> Scenario:
    """Parse a scenario from a config path (or file-like / literal text).

    ``overrides`` is an iterable of ``section.key=value`` strings applied on
    top of the file before anything is built.  Any malformed value, unknown
    key, or inconsistent combination raises :class:`ConfigurationError`.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        if hasattr(source, "read"):
            parser.read_file(source)
        else:
            text = None
            try:
                with open(source, "r") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigurationError(f"cannot read scenario file {source!r}: {exc}")
            parser.read_file(io.StringIO(text), source=str(source))
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed scenario file: {exc}") from exc

    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(
                f"override {item!r} must look like section.key=value"
            )
        target, value = item.split("=", 1)
        sect, key = target.split(".", 1)
        if not parser.has_section(sect):
            parser.add_section(sect)
        parser.set(sect.strip(), key.strip(), value.strip())

    try:
        meta = _section(parser, "scenario")
        name = meta.get("name", "unnamed")
        driver = meta.get("driver", "pure")
        if driver not in ("pure", "coupled"):
            raise ConfigurationError(f"driver must be 'pure' or 'coupled', got {driver!r}")

        g = _section(parser, "grid")
        _known_keys(g, _GRID_KEYS, "grid")
        grid = GridSpec(
            dim_x=int(g.get("dim_x", 1)), dim_v=int(g.get("dim_v", 1)),
            n_x=int(g["n_x"]), n_v=int(g["n_v"]),
            half_width_x=float(g["half_width_x"]),
            half_width_v=float(g["half_width_v"]),
        )

        p = _section(parser, "params")
        _known_keys(p, _PARAM_KEYS, "params")
        params = ModelParams(
            sigma=float(p["sigma"]), d=float(p.get("d", p["sigma"])),
            gamma=float(p["gamma"]), eta=float(p.get("eta", 1.0)),
            alpha1=float(p.get("alpha1", 0.0)), c_R=float(p.get("c_R", 1.0)),
            epsilon=float(p.get("epsilon", 0.25)),
            v0=_floats_list(p.get("v0", "0")),
            use_vector_j=parser.getboolean("params", "use_vector_j", fallback=False),
        )

        s = _section(parser, "schedule")
        _known_keys(s, _SCHEDULE_KEYS, "schedule")
        schedule = Schedule(t_end=float(s["t_end"]), dt=float(s["dt"]),
                            save_stride=int(s.get("save_stride", 1)))

        pk = _section(parser, "picard", required=False)
        _known_keys(pk, _PICARD_KEYS, "picard")
        picard = {
            "k_max": int(pk.get("k_max", 20)),
            "tol": float(pk.get("tol", 1e-8)),
            "init": pk.get("init", "heat" if driver == "pure" else "zero"),
        }

        p_recipe = _section(parser, "initial_p")
        c_recipe = _section(parser, "initial_c", required=(driver == "coupled"))

        ck = _section(parser, "checks", required=False)
        names = tuple(
            tok.strip() for tok in ck.get("names", "").replace(",", " ").split()
        ) or _default_checks(driver)
        for n in names:
            if n not in CHECK_NAMES:
                raise ConfigurationError(
                    f"unknown check {n!r} (available: {', '.join(CHECK_NAMES)})"
                )
        if "c_bounds" in names and driver != "coupled":
            raise ConfigurationError("check 'c_bounds' needs the coupled driver")
    except KeyError as exc:
        raise ConfigurationError(f"scenario file is missing required key {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"bad value in scenario file: {exc}") from exc

    return Scenario(name=name, driver=driver, grid=grid, params=params,
                    schedule=schedule, p_recipe=p_recipe, c_recipe=c_recipe,
                    picard=picard, checks=names)


def _default_checks(driver):
    base = ("positivity", "comparison", "gronwall", "energy", "speed_bound")
    return base + ("c_bounds",) if driver == "coupled" else base


def shipped_scenarios() -> dict:
    """Name -> text of every scenario config shipped with the package."""
    out = {}
    root = resources.files(__package__) / "scenarios"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".cfg"):
            out[entry.name[:-4]] = entry.read_text()
    return out


def load_shipped_scenario(name: str, overrides=()) -> Scenario:
    texts = shipped_scenarios()
    if name not in texts:
        raise ConfigurationError(
            f"no shipped scenario {name!r} (available: {', '.join(sorted(texts))})"
        )
    return load_scenario(io.StringIO(texts[name]), overrides=overrides)


# --------------------------------------------------------------------------
# realisation and the full checked run


def realise(scenario: Scenario) -> dict:
    """Build the concrete fields and driver closures for a scenario."""
    grid = scenario.grid
    p0 = build_initial_p(grid, scenario.p_recipe)
    c0 = build_initial_c(grid, scenario.c_recipe) if scenario.driver == "coupled" else None
    opts = scenario.picard

    def run_pure(tol=None, init=None, k_max=None):
        return picard_pure(
            p0, None, scenario.params, scenario.schedule,
            k_max=k_max or opts["k_max"],
            tol=tol if tol is not None else opts["tol"],
            init=init or opts["init"],
        )

    def run_coupled(tol=None, init=None, k_max=None):
        return picard_coupled(
            p0, c0, scenario.params, scenario.schedule,
            k_max=k_max or opts["k_max"],
            tol=tol if tol is not None else opts["tol"],
            init=init or opts["init"],
        )

    return {"grid": grid, "p0": p0, "c0": c0,
            "run_pure": run_pure, "run_coupled": run_coupled}


def _semigroup_majorant(p0, times, sigma, rate=0.0) -> Trajectory:
    """exp(rate*t) * heat(p0, t) at the given times (exact semigroup)."""
    plan = HeatPlan(p0.grid, sigma, "xv")
    t0 = float(times[0])
    fields = []
    for t in times:
        vals = plan.apply(p0.values, float(t - t0), "phase")
        if rate:
            vals = math.exp(rate * (t - t0)) * vals
        fields.append(PhaseField(p0.grid, vals, time_tag=float(t)))
    return Trajectory(times, fields)


def _envelope_hypothesis(p0):
    """The m-envelope needs ||p~0||_q <= ||m0||_q for q in {1, 2, inf}."""
    pt0 = velocity_marginal(p0)
    m0 = second_moment(p0)
    for q in (1, 2, np.inf):
        if lq_norm(pt0, q) > lq_norm(m0, q) * (1.0 + 1e-12):
            raise ConfigurationError(
                "the second-moment envelope check needs initial data with "
                "mean square speed >= 1 (||p~0||_q <= ||m0||_q); shift the "
                "velocity centre or widen the velocity profile"
            )
    return m0


def build_checks(scenario: Scenario, p0, p_traj, c_traj=None, c0=None) -> list:
    """Evaluate the scenario's configured checks on a finished run."""
    params = scenario.params
    grid = scenario.grid
    out = []
    rho_sup = (math.pi * params.epsilon) ** (-grid.dim_v / 2.0)
    rate = params.alpha1 * rho_sup if scenario.driver == "coupled" else 0.0
    for name in scenario.checks:
        if name == "positivity":
            out.append(check_positivity(p_traj))
        elif name == "comparison":
            maj = _semigroup_majorant(p0, p_traj.times, params.sigma, rate)
            anchor = (
                "production-envelope comparison: p stays below "
                "exp(alpha1*sup_rho*t) times the heat flow of p0"
                if scenario.driver == "coupled" else
                "damping only removes density: p stays below the plain heat "
                "flow of p0"
            )
            out.append(check_comparison(p_traj, maj, anchor=anchor))
        elif name == "gronwall":
            m0 = _envelope_hypothesis(p0)
            m_traj = Trajectory(p_traj.times,
                                [second_moment(f) for f in p_traj.fields])
            pt_traj = Trajectory(p_traj.times,
                                 [velocity_marginal(f) for f in p_traj.fields])
            m_rate = rate + 2.0 * params.sigma * grid.dim_v
            for q, tag in ((1, "q1"), (2, "q2"), (np.inf, "qinf")):
                out.append(check_gronwall(p_traj, rate, q, name=f"gronwall_p_{tag}"))
                out.append(check_gronwall(pt_traj, rate, q,
                                          name=f"gronwall_pt_{tag}"))
                out.append(check_gronwall(
                    m_traj, m_rate, q, norm0=lq_norm(m0, q),
                    name=f"gronwall_m_{tag}"))
        elif name == "energy":
            if scenario.driver == "coupled":
                rho = gaussian_rho(grid, params.epsilon,
                                   params.v0 if len(params.v0) == grid.dim_v
                                   else params.v0 * grid.dim_v)
                f_fields = []
                for pf, cf in zip(p_traj.fields, c_traj.fields):
                    alpha = _alpha_raw(cf.values, params.alpha1, params.c_R,
                                       "energy source")
                    prod = (alpha.reshape(grid.spatial_shape + (1,) * grid.dim_v)
                            * rho.values.reshape((1,) * grid.dim_x + grid.velocity_shape)
                            * pf.values)
                    f_fields.append(PhaseField(grid, prod, time_tag=pf.time_tag))
            else:
                f_fields = None
            out.append(check_energy(p_traj, f_fields, params.sigma))
        elif name == "speed_bound":
            out.append(check_speed_bound([moments_of(f) for f in p_traj.fields]))
        elif name == "c_bounds":
            out.append(check_c_bounds(c_traj, c0, diffusivity=params.d))
    return out


# --------------------------------------------------------------------------
# orchestration

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_CHECK_FAILED = 4


def _write_outputs(out_dir, scenario, p_traj, c_traj, checks, payload):
    os.makedirs(out_dir, exist_ok=True)
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    for i, field in enumerate(p_traj.fields):
        save_field(field, os.path.join(snap_dir, f"p_{i:04d}.akf"))
    if c_traj is not None:
        for i, field in enumerate(c_traj.fields):
            save_field(field, os.path.join(snap_dir, f"c_{i:04d}.akf"))
    write_moment_table(p_traj, p_traj.aux["a_nodes"],
                       os.path.join(out_dir, "moments.csv"))
    write_report(checks, os.path.join(out_dir, "report.json"))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(format_summary(scenario, payload))


def format_summary(scenario: Scenario, payload: dict) -> str:
    lines = [
        f"scenario {scenario.name} ({scenario.driver} driver)",
        f"lattice: {scenario.grid.dim_x}x + {scenario.grid.dim_v}v, "
        f"{scenario.grid.n_x}^{scenario.grid.dim_x} x {scenario.grid.n_v}^{scenario.grid.dim_v}, "
        f"half-widths ({scenario.grid.half_width_x:g}, {scenario.grid.half_width_v:g})",
        f"schedule: t_end={scenario.schedule.t_end:g} dt={scenario.schedule.dt:g} "
        f"({scenario.schedule.n_steps} steps)",
        f"converged: {payload['converged']} after {payload['iterations']} iterations "
        f"over {len(payload['k_per_slab'])} slab(s) {payload['k_per_slab']}",
        f"deltas strictly decreasing: {payload['monotone_deltas']}",
    ]
    for w in payload["warnings"]:
        lines.append(f"warning: {w}")
    for c in payload["checks"]:
        lines.append(
            f"check {c['name']}: {c['verdict']} "
            f"(worst slack {c['worst_slack']:.3e} at t={c['worst_time']:.6g}, "
            f"cell {tuple(c['worst_cell'])})"
        )
    lines.append(f"exit code: {payload['exit_code']}")
    return "\n".join(lines) + "\n"


def run_scenario(scenario: Scenario, out_dir=None, tol=None) -> tuple:
    """Run a scenario end to end: drive, check, optionally write outputs.

    Returns ``(exit_code, payload)`` with the process exit convention
    0 = converged and all checks passed, 3 = the fixed point did not converge
    (or its deltas failed to decrease monotonically), 4 = converged but at
    least one invariant check failed.
    """
    made = realise(scenario)
    p0 = made["p0"]
    warnings = []
    frac = boundary_mass_fraction(p0)
    if frac > 1e-8:
        warnings.append(
            f"initial density has mass fraction {frac:.3e} within 3 cells of "
            "the box edge; the periodic wrap may pollute the run"
        )

    if scenario.driver == "coupled":
        p_traj, c_traj, diag = made["run_coupled"](tol=tol)
    else:
        p_traj, diag = made["run_pure"](tol=tol)
        c_traj = None

    checks = build_checks(scenario, p0, p_traj, c_traj=c_traj, c0=made["c0"])
    monotone = diag.deltas_strictly_decreasing()
    if diag.converged and monotone:
        code = EXIT_CHECK_FAILED if any(not c.passed for c in checks) else EXIT_OK
    else:
        code = EXIT_NO_CONVERGENCE

    payload = {
        "scenario": scenario.name,
        "driver": scenario.driver,
        "converged": bool(diag.converged),
        "monotone_deltas": bool(monotone),
        "iterations": int(diag.iterations),
        "k_per_slab": [int(k) for k in diag.k_per_slab],
        "slab_edges": [float(t) for t in diag.slab_edges],
        "deltas_p": [[float(d) for d in slab] for slab in diag.deltas_p],
        "deltas_c": [[float(d) for d in slab] for slab in diag.deltas_c],
        "checks": [c.to_dict() for c in checks],
        "all_checks_passed": all(c.passed for c in checks),
        "warnings": warnings,
        "exit_code": code,
    }
    if out_dir is not None:
        _write_outputs(out_dir, scenario, p_traj, c_traj, checks, payload)
    return code, payload
