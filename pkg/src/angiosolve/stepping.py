"""Time stepping for the linear damped diffusion problem.

The linear building block solved here is

    dp/dt = sigma * Lap_{x,v} p - a(t, x[, v]) p + f(t, x, v)

on the periodic phase box, advanced with a symmetric (Strang) splitting
around the exact spectral heat flow:

    p_{n+1} = E * H_dt( E * (p_n + dt/2 * f_n) ) + dt/2 * f_{n+1},
    E = exp(-a(t_mid) * dt / 2),

where H_dt is the exact heat semigroup of :mod:`angiosolve.heat` and a is
sampled at the step midpoint (the average of the two node samples).  The
factors E are strictly positive whatever the sign of a, H preserves signs up
to round-off, and the source enters with trapezoid endpoint weights, so the
scheme is unconditionally positivity preserving for nonnegative data, exact
for a = f = 0, and second-order accurate in dt otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError, SignError
from .grid import CLAMP_REL, GridSpec, PhaseField, SpatialField, speed_grid
from .heat import HeatPlan


@dataclass(frozen=True)
class Schedule:
    """Uniform time grid on [0, t_end] with step dt and a save stride.

    ``t_end`` must be an integer multiple of ``dt`` to within half an ulp of
    the product; anything looser silently shifts every node and is rejected
    as a configuration error.  Saved nodes are every ``save_stride``-th node
    plus always the final one.
    """

    t_end: float
    dt: float
    save_stride: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ParameterError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0.0):
            raise ParameterError(f"t_end must be positive, got {self.t_end!r}")
        n = int(round(self.t_end / self.dt))
        if n < 1 or abs(n * self.dt - self.t_end) > 0.5 * np.spacing(
            max(self.t_end, n * self.dt)
        ):
            raise ConfigurationError(
                f"t_end = {self.t_end!r} is not an integer number of steps of "
                f"dt = {self.dt!r} (closest: {n} steps = {n * self.dt!r})"
            )
        if not isinstance(self.save_stride, (int, np.integer)) or self.save_stride < 1:
            raise ParameterError(f"save_stride must be a positive integer, got {self.save_stride!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def times(self) -> np.ndarray:
        """All node times 0, dt, 2*dt, ..., n_steps*dt."""
        return np.arange(self.n_steps + 1) * self.dt

    def saved_nodes(self) -> tuple:
        """Node indices that get a full snapshot (stride nodes + final node)."""
        idx = list(range(0, self.n_steps + 1, self.save_stride))
        if idx[-1] != self.n_steps:
            idx.append(self.n_steps)
        return tuple(idx)


def _broadcast_x(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Reshape a position-lattice array so it broadcasts over phase arrays."""
    return arr.reshape(grid.spatial_shape + (1,) * grid.dim_v)


def _broadcast_v(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    return arr.reshape((1,) * grid.dim_x + grid.velocity_shape)


def _sample_values(sample, grid, n_nodes, what, strict):
    """Normalise a coefficient/source argument to a list of raw node arrays.

    Accepts None, a single field (constant in time), or a sequence of fields
    of length ``n_nodes``.  Returns (list_of_arrays_or_None, constant_flag).
    In strict mode wrong-signed entries are clamped to zero (within the usual
    tolerance) so downstream algebra sees exact signs.
    """
    if sample is None:
        return None, True
    single = isinstance(sample, (PhaseField, SpatialField, np.ndarray))
    items = [sample] if single else list(sample)
    if not single and len(items) != n_nodes:
        raise ConfigurationError(
            f"{what} track has {len(items)} samples but the schedule has "
            f"{n_nodes} nodes; the track must cover every node"
        )
    out = []
    for k, item in enumerate(items):
        if isinstance(item, (PhaseField, SpatialField)):
            if item.grid != grid:
                raise ShapeError(f"{what} sample {k} lives on a different lattice")
            arr = item.values
        else:
            arr = np.asarray(item, dtype=float)
            if arr.shape not in (grid.spatial_shape, grid.phase_shape):
                raise ShapeError(
                    f"{what} sample {k} has shape {arr.shape}, expected "
                    f"{grid.spatial_shape} or {grid.phase_shape}"
                )
        if strict:
            worst = float(arr.min())
            if worst < 0.0:
                limit = CLAMP_REL * float(np.max(np.abs(arr)))
                if worst < -limit:
                    idx = tuple(int(i) for i in np.unravel_index(arr.argmin(), arr.shape))
                    raise SignError(
                        f"strict track: {what} sample {k} has entry {worst:.6e} < 0 "
                        f"at cell {idx}; use strict=False for signed coefficients"
                    )
                arr = np.where(arr < 0.0, 0.0, arr)
        out.append(arr)
    return out, single


class CoefficientTrack:
    """Node samples of the damping coefficient and source for one schedule.

    Parameters
    ----------
    schedule : Schedule
    grid : GridSpec
    a : None | field | sequence of fields
        Damping coefficient samples at every node, on the position lattice
        (broadcast over v) or the full phase lattice.  A single field means
        constant in time.
    f : None | PhaseField | sequence
        Source samples at every node.
    sep_x, sep_v : optional separable extra term ``sep_x(t, x) * sep_v(v)``
        added to ``a``; ``sep_x`` follows the same single-or-sequence rule and
        may be signed (production terms enter with a negative sign).
    strict : bool
        Require a >= 0 and f >= 0 samplewise (up to clamping); the default.
        Signed problems (differences of solutions, production-dominated
        coefficients) must opt out explicitly.
    """

    def __init__(self, schedule, grid, a=None, f=None, sep_x=None, sep_v=None, strict=True):
        self.schedule = schedule
        self.grid = grid
        self.strict = bool(strict)
        n_nodes = schedule.n_steps + 1
        self._a, self._a_const = _sample_values(a, grid, n_nodes, "coefficient", strict)
        self._f, self._f_const = _sample_values(f, grid, n_nodes, "source", strict)
        if self._f is not None:
            for k, arr in enumerate(self._f):
                if arr.shape != grid.phase_shape:
                    raise ShapeError(f"source sample {k} must live on the phase lattice")
        if (sep_x is None) != (sep_v is None):
            raise ConfigurationError("sep_x and sep_v must be given together")
        self._sep_x, self._sep_x_const = _sample_values(sep_x, grid, n_nodes, "separable factor", False)
        if sep_v is not None:
            sep_v = np.asarray(sep_v, dtype=float)
            if sep_v.shape != grid.velocity_shape:
                raise ShapeError(
                    f"sep_v has shape {sep_v.shape}, expected {grid.velocity_shape}"
                )
        self._sep_v = sep_v

    # -- node access -------------------------------------------------------

    @property
    def has_coefficient(self) -> bool:
        return self._a is not None or self._sep_x is not None

    @property
    def constant_coefficient(self) -> bool:
        return self._a_const and self._sep_x_const

    @property
    def constant_source(self) -> bool:
        return self._f_const

    def _pick(self, samples, const, i):
        if samples is None:
            return None
        return samples[0] if const else samples[i]

    def coefficient_mid(self, i: int):
        """Midpoint coefficient of step i, broadcastable to the phase shape.

        Linear interpolation at the midpoint is the node average; constant
        tracks return the node array itself (no copy, so callers may key
        caches on identity).
        """
        g = self.grid
        a_lo = self._pick(self._a, self._a_const, i)
        a_hi = self._pick(self._a, self._a_const, i + 1)
        w = None
        if a_lo is not None:
            a_m = a_lo if a_hi is a_lo else 0.5 * (a_lo + a_hi)
            w = a_m if a_m.ndim == g.dim_x + g.dim_v else _broadcast_x(a_m, g)
        if self._sep_x is not None:
            s_lo = self._pick(self._sep_x, self._sep_x_const, i)
            s_hi = self._pick(self._sep_x, self._sep_x_const, i + 1)
            s_m = s_lo if s_hi is s_lo else 0.5 * (s_lo + s_hi)
            term = _broadcast_x(s_m, g) * _broadcast_v(self._sep_v, g)
            w = term if w is None else w + term
        return w

    def source_node(self, i: int):
        return self._pick(self._f, self._f_const, i)

    def coefficient_node(self, i: int):
        """Full coefficient at node i as a phase-broadcastable array."""
        g = self.grid
        a_i = self._pick(self._a, self._a_const, i)
        w = None
        if a_i is not None:
            w = a_i if a_i.ndim == g.dim_x + g.dim_v else _broadcast_x(a_i, g)
        if self._sep_x is not None:
            s_i = self._pick(self._sep_x, self._sep_x_const, i)
            term = _broadcast_x(s_i, g) * _broadcast_v(self._sep_v, g)
            w = term if w is None else w + term
        return w

    def _interp(self, t: float, node_of, constant: bool):
        sched = self.schedule
        if t < -1e-12 or t > sched.t_end * (1 + 1e-12):
            raise ConfigurationError(
                f"time {t!r} is outside the track's schedule [0, {sched.t_end}]"
            )
        s = min(max(t, 0.0), sched.t_end) / sched.dt
        i = min(int(s), sched.n_steps - 1)
        theta = s - i
        lo = node_of(i)
        if lo is None:
            return None
        if theta == 0.0 or constant:
            return lo
        hi = node_of(i + 1)
        return (1.0 - theta) * lo + theta * hi

    def coefficient_at(self, t: float):
        """Coefficient linearly interpolated to an arbitrary time in range."""
        return self._interp(t, self.coefficient_node, self.constant_coefficient)

    def source_at(self, t: float):
        """Source linearly interpolated to an arbitrary time in range."""
        return self._interp(t, self.source_node, self._f_const)


class Trajectory:
    """Snapshots of one evolution at selected times, plus node-level series.

    ``fields[k]`` is the saved field at ``times[k]``.  When the producing
    solver recorded them, ``node_times`` / ``p_tilde_nodes`` / ``j_nodes``
    hold the velocity marginal and speed moment at *every* schedule node
    (stacked arrays, leading axis = node).  ``aux`` carries solver-specific
    extras (depletion snapshots, far-field fields, ...).
    """

    def __init__(self, times, fields, node_times=None, p_tilde_nodes=None,
                 j_nodes=None, aux=None):
        times = np.asarray(times, dtype=float)
        fields = list(fields)
        if times.shape != (len(fields),):
            raise ShapeError(
                f"{len(fields)} fields but {times.size} save times"
            )
        times.setflags(write=False)
        self.times = times
        self.fields = fields
        self.node_times = None if node_times is None else np.asarray(node_times, float)
        self.p_tilde_nodes = p_tilde_nodes
        self.j_nodes = j_nodes
        self.aux = dict(aux or {})

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, k):
        return self.fields[k]

    @property
    def grid(self):
        return self.fields[0].grid

    @property
    def final(self):
        return self.fields[-1]


def _strang_step(vals, half_factor, plan, dt, f_lo, f_hi):
    """One splitting step on raw arrays (see module docstring)."""
    u = vals if f_lo is None else vals + (0.5 * dt) * f_lo
    if half_factor is not None:
        u = u * half_factor
    u = plan.apply(u, dt, "phase")
    if half_factor is not None:
        u = u * half_factor
    if f_hi is not None:
        u = u + (0.5 * dt) * f_hi
    return u


def advance_linear(p, a, f, sigma, dt, plan=None, strict=True) -> PhaseField:
    """One splitting step with midpoint coefficient ``a`` and constant source ``f``.

    ``a`` may be a SpatialField (broadcast over velocity), a PhaseField, or
    None; ``f`` a PhaseField or None, held constant across the step (both
    endpoint weights use it).  For time-varying data drive
    :func:`solve_linear` with a :class:`CoefficientTrack` instead.
    """
    if not (math.isfinite(float(dt)) and float(dt) > 0.0):
        raise ParameterError(f"dt must be positive, got {dt!r}")
    grid = p.grid
    if plan is None:
        plan = HeatPlan(grid, sigma, "xv")
    elif plan.grid != grid or plan.subspace != "xv":
        raise ShapeError("plan must be a full phase-space plan on the field's lattice")
    if a is not None and np.isscalar(a):
        a = SpatialField(grid, np.full(grid.spatial_shape, float(a)),
                         time_tag=p.time_tag)
    if f is not None and np.isscalar(f):
        f = PhaseField(grid, np.full(grid.phase_shape, float(f)),
                       time_tag=p.time_tag)
    w = None
    if a is not None:
        if a.grid != grid:
            raise ShapeError("coefficient lives on a different lattice")
        if strict and float(a.values.min()) < 0.0:
            limit = CLAMP_REL * float(np.max(np.abs(a.values)))
            if float(a.values.min()) < -limit:
                raise SignError(
                    "coefficient has negative entries; pass strict=False for signed problems"
                )
        w = a.values if a.values.ndim == grid.dim_x + grid.dim_v else _broadcast_x(a.values, grid)
    f_arr = None
    if f is not None:
        if f.grid != grid or f.values.shape != grid.phase_shape:
            raise ShapeError("source must be a phase field on the same lattice")
        f_arr = f.values
    half = None if w is None else np.exp((-0.5 * dt) * w)
    out = _strang_step(p.values, half, plan, dt, f_arr, f_arr)
    nonneg = strict and float(p.values.min()) >= 0.0 and (
        f_arr is None or float(f_arr.min()) >= 0.0
    )
    return PhaseField(grid, out, time_tag=p.time_tag + dt, nonnegative=nonneg)


def solve_linear(p0, track, sigma, schedule=None, plan=None,
                 record_moments=False, speed=None, saved_nodes=None,
                 clamp_saves=None) -> Trajectory:
    """March the splitting scheme across a whole schedule.

    Parameters
    ----------
    p0 : PhaseField
        Initial data; its ``time_tag`` is kept as the origin of the reported
        times (node i is tagged ``p0.time_tag + i*dt``).
    track : CoefficientTrack
        Coefficient/source samples; its schedule is used unless ``schedule``
        is passed and equal.
    sigma : float
        Phase-space diffusivity.
    record_moments : bool
        Also record the velocity marginal and the speed moment at every node
        (needed by the fixed-point drivers); ``speed`` can inject a custom
        weight lattice for the moment (defaults to |v| of the cell centres)
        or the string ``"vector"`` for the magnitude of the vector moment.
    saved_nodes : sequence of int, optional
        Override of the schedule's saved nodes (must contain 0 and the final
        node); the fixed-point drivers use this to pin slab boundaries.
    clamp_saves : bool, optional
        Force/disable round-off clamping; defaults to "track is strict and
        p0 is nonnegative".  When active the marched values are floored at
        zero after every step (the exact flow preserves sign, so anything
        negative is FFT noise and would otherwise compound over long runs),
        and saved fields carry ``nonnegative=True``.

    Returns
    -------
    Trajectory
        Snapshots at the saved nodes.
    """
    if schedule is None:
        schedule = track.schedule
    elif schedule != track.schedule:
        raise ConfigurationError("explicit schedule differs from the track's schedule")
    grid = p0.grid
    if track.grid != grid:
        raise ShapeError("track and initial data live on different lattices")
    if plan is None:
        plan = HeatPlan(grid, sigma, "xv")
    elif plan.grid != grid or plan.subspace != "xv" or plan.diffusivity != float(sigma):
        raise ConfigurationError("plan does not match (grid, sigma, 'xv')")

    dt = schedule.dt
    n_steps = schedule.n_steps
    if clamp_saves is None:
        clamp_saves = track.strict and float(p0.values.min()) >= 0.0
    clamp = clamp_saves
    if saved_nodes is None:
        saved = set(schedule.saved_nodes())
    else:
        saved = set(int(i) for i in saved_nodes)
        if 0 not in saved or n_steps not in saved or min(saved) < 0 or max(saved) > n_steps:
            raise ConfigurationError(
                "saved_nodes must contain 0 and the final node and stay in range"
            )

    vector_j = isinstance(speed, str) and speed == "vector"
    if record_moments:
        if speed is None:
            speed = speed_grid(grid)
        v_axes = tuple(range(grid.dim_v))
        p_tilde_rec = np.empty((n_steps + 1,) + grid.spatial_shape)
        j_rec = np.empty_like(p_tilde_rec)
        if vector_j:
            v1 = grid.v_coords()
            comps = []
            for ax in range(grid.dim_v):
                expand = [1] * grid.dim_v
                expand[ax] = v1.size
                comps.append(np.ascontiguousarray(
                    np.broadcast_to(v1.reshape(expand), grid.velocity_shape)))

    def _record(i, vals):
        p_tilde_rec[i] = vals.sum(axis=grid.v_axes) * grid.v_cell_volume
        if vector_j:
            sq = None
            for w in comps:
                comp = np.tensordot(vals, w, axes=(grid.v_axes, v_axes))
                sq = comp ** 2 if sq is None else sq + comp ** 2
            j_rec[i] = np.sqrt(sq) * grid.v_cell_volume
        else:
            j_rec[i] = np.tensordot(vals, speed, axes=(grid.v_axes, v_axes)) * grid.v_cell_volume

    vals = p0.values
    t0 = p0.time_tag
    fields = [PhaseField(grid, vals, time_tag=t0, nonnegative=clamp)]
    times = [t0]
    if record_moments:
        _record(0, vals)

    half_const = None
    if track.constant_coefficient and track.has_coefficient:
        half_const = np.exp((-0.5 * dt) * track.coefficient_mid(0))

    for i in range(n_steps):
        if half_const is not None:
            half = half_const
        else:
            w = track.coefficient_mid(i)
            half = None if w is None else np.exp((-0.5 * dt) * w)
        f_lo = track.source_node(i)
        f_hi = track.source_node(i + 1)
        vals = _strang_step(vals, half, plan, dt, f_lo, f_hi)
        if clamp:
            vals = np.maximum(vals, 0.0)
        if record_moments:
            _record(i + 1, vals)
        if (i + 1) in saved:
            t = t0 + (i + 1) * dt
            fields.append(PhaseField(grid, vals, time_tag=t, nonnegative=clamp))
            times.append(t)

    kwargs = {}
    if record_moments:
        kwargs = dict(node_times=t0 + schedule.times(), p_tilde_nodes=p_tilde_rec,
                      j_nodes=j_rec)
    return Trajectory(times, fields, **kwargs)


def heat_upper_solution(p0, f_track, sigma, schedule) -> Trajectory:
    """Trajectory of the coefficient-free flow dp/dt = sigma*Lap p + f.

    With nonnegative data this dominates every solution of the damped
    problem with the same source and any a >= 0 (dropping -a*p only adds
    mass), so it is the standard comparison majorant.  ``f_track`` may be
    None, a PhaseField (constant source), or a CoefficientTrack whose source
    samples are reused.
    """
    if isinstance(f_track, CoefficientTrack):
        if f_track.schedule != schedule:
            raise ConfigurationError("source track schedule differs from the requested one")
        f = f_track._f if f_track._f is None else (
            f_track._f[0] if f_track._f_const else list(f_track._f)
        )
    else:
        f = f_track
    track = CoefficientTrack(schedule, p0.grid, a=None, f=f, strict=True)
    return solve_linear(p0, track, sigma, schedule)
