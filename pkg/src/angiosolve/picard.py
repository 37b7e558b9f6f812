"""Fixed-point drivers for the nonlocal vessel-tip / attractant system.

The model couples a phase-space tip density p(t, x, v) to an attractant
concentration c(t, x):

    dp/dt = sigma Lap_{x,v} p + alpha(c) rho(v) p - gamma p * int_0^t p~ ds + f,
    dc/dt = d Lap_x c - eta c j,

with alpha(c) = alpha1 c / (c_R + c), rho a fixed Gaussian velocity profile,
p~ the velocity marginal and j the speed moment of p.  Both drivers freeze
the nonlocal (and nonlinear) couplings at the previous iterate, solve the
resulting *linear* damped diffusion problem with :func:`solve_linear`, and
repeat until successive iterates agree in relative sup norm at every saved
time.

The iteration only contracts on windows with T * sqrt(M) < 1 (M an a-priori
bound on the accumulated damping), so long runs are split into slabs of
length min(T, 0.5 / sqrt(M)) restarted from the previous slab's final state;
the running time integral is carried across slab boundaries so the damping
coefficient stays the global integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError, SignError
from .grid import CLAMP_REL, PhaseField, SpatialField
from .heat import HeatPlan, gaussian_rho
from .moments import accumulate_time_integral
from .stepping import CoefficientTrack, Schedule, Trajectory, solve_linear


@dataclass(frozen=True)
class ModelParams:
    """Model constants.

    ``sigma`` (phase diffusivity), ``d`` (attractant diffusivity), ``gamma``
    (damping strength), ``eta`` (consumption rate), ``c_R`` (half-saturation)
    and ``epsilon`` (velocity profile width) must be positive; ``alpha1``
    (production ceiling) may be zero, which switches the coupling off.
    ``v0`` is the centre of the velocity profile (scalar or one value per
    velocity axis).  ``use_vector_j=True`` drives the consumption with the
    magnitude of the vector first moment instead of the scalar speed moment;
    the fixed point is then no longer known to be unique, so the default
    stays scalar.
    """

    sigma: float
    d: float
    gamma: float
    eta: float
    alpha1: float
    c_R: float
    epsilon: float
    v0: tuple = (0.0,)
    use_vector_j: bool = False

    def __post_init__(self):
        positive = {"sigma": self.sigma, "d": self.d, "gamma": self.gamma,
                    "eta": self.eta, "c_R": self.c_R, "epsilon": self.epsilon}
        for name, val in positive.items():
            if not (math.isfinite(float(val)) and float(val) > 0.0):
                raise ParameterError(f"{name} must be positive, got {val!r}")
        if not (math.isfinite(float(self.alpha1)) and float(self.alpha1) >= 0.0):
            raise ParameterError(f"alpha1 must be >= 0, got {self.alpha1!r}")
        v0 = self.v0
        if np.isscalar(v0):
            v0 = (float(v0),)
        else:
            v0 = tuple(float(c) for c in v0)
        if not all(math.isfinite(c) for c in v0):
            raise ParameterError(f"v0 must be finite, got {self.v0!r}")
        object.__setattr__(self, "v0", v0)


@dataclass
class IterationDiagnostics:
    """Convergence record of one driver run.

    ``deltas_p[s]`` lists the relative sup-norm changes of the p iterates in
    slab s, starting at iterate 2; ``deltas_c`` likewise for the coupled
    driver (empty for the pure one).  ``driving_deltas`` is the sequence the
    stopping rule actually used (max of the two).
    """

    deltas_p: list = field(default_factory=list)
    deltas_c: list = field(default_factory=list)
    driving_deltas: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    slab_edges: list = field(default_factory=list)
    k_per_slab: list = field(default_factory=list)

    def deltas_strictly_decreasing(self, burn_in: int = 1) -> bool:
        """True when every slab's driving deltas fall strictly after burn-in.

        ``burn_in = 1`` skips no comparisons beyond the first delta (the
        sequence starts at iterate 2, so the first comparison is iterate 3
        against iterate 2).  A slab that converged immediately (one delta)
        passes vacuously.
        """
        for slab in self.driving_deltas:
            tail = slab[burn_in - 1:]
            for prev, curr in zip(tail, tail[1:]):
                if not curr < prev:
                    return False
        return True


def alpha_of_c(c: SpatialField, alpha1: float, c_R: float) -> SpatialField:
    """Saturating production rate alpha1 * c / (c_R + c), role ``alpha_of_c``.

    Monotone and bounded by alpha1; Lipschitz in c with constant alpha1/c_R.
    The concentration must be nonnegative (up to clamping).
    """
    if not (float(c_R) > 0.0):
        raise ParameterError(f"c_R must be positive, got {c_R!r}")
    if not (float(alpha1) >= 0.0):
        raise ParameterError(f"alpha1 must be >= 0, got {alpha1!r}")
    vals = _alpha_raw(c.values, float(alpha1), float(c_R), "alpha_of_c input")
    return SpatialField(c.grid, vals, time_tag=c.time_tag, role="alpha_of_c")


def _alpha_raw(c_vals: np.ndarray, alpha1: float, c_R: float, what: str) -> np.ndarray:
    worst = float(c_vals.min())
    if worst < 0.0:
        limit = CLAMP_REL * float(np.abs(c_vals).max())
        if worst < -limit:
            idx = tuple(int(i) for i in np.unravel_index(c_vals.argmin(), c_vals.shape))
            raise SignError(f"{what}: concentration {worst:.6e} < 0 at cell {idx}")
        c_vals = np.where(c_vals < 0.0, 0.0, c_vals)
    return alpha1 * c_vals / (c_R + c_vals)


def advance_c(c: SpatialField, j: SpatialField, d: float, eta: float, dt: float,
              plan: HeatPlan = None) -> SpatialField:
    """One step of dc/dt = d Lap_x c - eta j c with midpoint consumption j.

    Symmetric splitting: multiply by exp(-eta j dt/2), exact heat flow,
    multiply again.  Both factors are <= 1 for j >= 0 and strictly positive,
    so 0 <= c(t+dt) <= heat flow of c(t) holds exactly (up to round-off).
    """
    if not (float(dt) > 0.0 and math.isfinite(float(dt))):
        raise ParameterError(f"dt must be positive, got {dt!r}")
    if not (float(eta) > 0.0):
        raise ParameterError(f"eta must be positive, got {eta!r}")
    if c.grid != j.grid:
        raise ShapeError("c and j live on different lattices")
    j_vals = j.values
    worst = float(j_vals.min())
    if worst < 0.0:
        limit = CLAMP_REL * float(np.abs(j_vals).max())
        if worst < -limit:
            raise SignError(f"speed moment has negative entry {worst:.6e}")
        j_vals = np.where(j_vals < 0.0, 0.0, j_vals)
    if plan is None:
        plan = HeatPlan(c.grid, d, "x")
    elif plan.grid != c.grid or plan.subspace != "x":
        raise ConfigurationError("plan must be a subspace-'x' plan on c's lattice")
    half = np.exp((-0.5 * float(dt) * float(eta)) * j_vals)
    out = half * plan.apply(half * c.values, float(dt), "spatial")
    return SpatialField(c.grid, out, time_tag=c.time_tag + float(dt), role="c")


# --------------------------------------------------------------------------
# slab partition


def slab_partition(n_steps: int, dt: float, sup_m: float):
    """Split [0, n_steps*dt] into contraction windows.

    ``sup_m`` is the a-priori bound M on gamma times the largest marginal
    the iterates can reach; windows of length min(T, 0.5/sqrt(M)) keep the
    fixed-point map a contraction with factor <= 1/4.  Returns the node
    indices of the slab edges (starting at 0, ending at n_steps).
    """
    if sup_m <= 0.0:
        slab_steps = n_steps
    else:
        t_hat = 0.5 / math.sqrt(sup_m)
        slab_steps = int(t_hat / dt + 1e-9)
        slab_steps = max(1, min(n_steps, slab_steps))
    edges = list(range(0, n_steps, slab_steps)) + [n_steps]
    return edges


def _normalise_source(f, grid, n_nodes):
    """-> (constant_array_or_None, list_or_None); validates length/shape."""
    if f is None:
        return None, None
    if isinstance(f, CoefficientTrack):
        if f._f is None:
            return None, None
        if f._f_const:
            return f._f[0], None
        return None, list(f._f)
    if isinstance(f, PhaseField):
        if f.grid != grid:
            raise ShapeError("source lives on a different lattice")
        return f.values, None
    items = list(f)
    if len(items) != n_nodes:
        raise ConfigurationError(
            f"source series has {len(items)} samples, schedule has {n_nodes} nodes"
        )
    out = []
    for k, item in enumerate(items):
        if not isinstance(item, PhaseField) or item.grid != grid:
            raise ShapeError(f"source sample {k} must be a PhaseField on the run lattice")
        out.append(item.values)
    return None, out


def _relative_delta(fields_a, fields_b) -> float:
    """max_t sup|a - b| over the shared saved times, relative to the larger
    of the two trajectories' sup norms (0/0 -> 0)."""
    scale = 0.0
    for fa, fb in zip(fields_a, fields_b):
        scale = max(scale, float(np.abs(fa).max()), float(np.abs(fb).max()))
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for fa, fb in zip(fields_a, fields_b):
        worst = max(worst, float(np.abs(fa - fb).max()))
    return worst / scale


def _local_saved_nodes(i0, i1, global_saved, n_steps):
    local = {g - i0 for g in global_saved if i0 <= g <= i1}
    local.add(0)
    local.add(i1 - i0)
    return sorted(local)


def _slab_schedule(i0, i1, dt):
    # stride 1; the drivers pass explicit saved nodes to solve_linear instead
    return Schedule(t_end=(i1 - i0) * dt, dt=dt, save_stride=1)


def picard_pure(p0: PhaseField, f_track, params: ModelParams, schedule: Schedule,
                k_max: int = 20, tol: float = 1e-8, init: str = "heat"):
    """Fixed-point run of the uncoupled problem (production switched off).

    Iterates  p_k = solve of  dp/dt = sigma Lap p - gamma A_{k-1} p + f  with
    A_{k-1}(t) the running integral of the previous iterate's marginal
    (continued across slabs by the carried offset).  ``init="heat"`` starts
    from the frozen-offset flow (A_0 = carried offset, so the first iterate
    of the first slab is the plain heat/source flow); ``init="zero"`` starts
    from p_1 = 0.

    Returns (Trajectory, IterationDiagnostics).  Non-convergence within
    ``k_max`` iterates of any slab is flagged, never raised.
    """
    if init not in ("heat", "zero"):
        raise ParameterError(f"init must be 'heat' or 'zero', got {init!r}")
    if k_max < 2:
        raise ParameterError("k_max must allow at least two iterates")
    if not (0.0 < tol < 1.0):
        raise ParameterError(f"tol must be in (0, 1), got {tol!r}")
    grid = p0.grid
    if float(p0.values.min()) < 0.0:
        p0 = PhaseField(grid, p0.values, time_tag=p0.time_tag, nonnegative=True)
    gamma = params.gamma
    dt = schedule.dt
    n_steps = schedule.n_steps
    n_nodes = n_steps + 1
    plan = HeatPlan(grid, params.sigma, "xv")

    f_const, f_list = _normalise_source(f_track, grid, n_nodes)

    # a-priori bound on gamma * sup of any iterate's marginal: the damping
    # only removes mass, so the source-free heat flow plus accumulated source
    # dominates every iterate's marginal.
    sup_pt0 = float((p0.values.sum(axis=grid.v_axes) * grid.v_cell_volume).max())
    if f_const is not None:
        f_sup = float((f_const.sum(axis=grid.v_axes) * grid.v_cell_volume).max())
    elif f_list is not None:
        f_sup = max(float((f.sum(axis=grid.v_axes) * grid.v_cell_volume).max())
                    for f in f_list)
    else:
        f_sup = 0.0
    big_m = gamma * (sup_pt0 + schedule.t_end * f_sup)

    edges = slab_partition(n_steps, dt, big_m)
    global_saved = set(schedule.saved_nodes())

    diag = IterationDiagnostics(slab_edges=[e * dt for e in edges])
    fields, times = [], []
    pt_nodes = np.empty((n_nodes,) + grid.spatial_shape)
    j_nodes = np.empty_like(pt_nodes)
    a_offset = np.zeros(grid.spatial_shape)
    p_slab = p0

    for s in range(len(edges) - 1):
        i0, i1 = edges[s], edges[s + 1]
        local_sched = _slab_schedule(i0, i1, dt)
        local_saved = _local_saved_nodes(i0, i1, global_saved, n_steps)
        if f_const is not None:
            f_slab = f_const
        elif f_list is not None:
            f_slab = f_list[i0:i1 + 1]
        else:
            f_slab = None

        # iterate 1 per slab: either the frozen-offset flow (one real solve,
        # no delta yet) or the zero density (free).
        deltas = []
        traj_k = None
        converged_slab = False
        if init == "zero":
            prev_fields = [np.zeros(grid.phase_shape) for _ in local_saved]
            prev_marginals = np.zeros((i1 - i0 + 1,) + grid.spatial_shape)
        else:
            track1 = CoefficientTrack(local_sched, grid, a=gamma * a_offset,
                                      f=f_slab, strict=True)
            traj_k = solve_linear(p_slab, track1, params.sigma, plan=plan,
                                  record_moments=True, saved_nodes=local_saved)
            prev_fields = [f.values for f in traj_k.fields]
            prev_marginals = traj_k.p_tilde_nodes
        diag.iterations += 1
        k = 2
        while k <= k_max:
            a_nodes = a_offset + accumulate_time_integral(prev_marginals, dt)
            track = CoefficientTrack(local_sched, grid,
                                     a=[gamma * a_i for a_i in a_nodes],
                                     f=f_slab, strict=True)
            traj_k = solve_linear(p_slab, track, params.sigma, plan=plan,
                                  record_moments=True, saved_nodes=local_saved)
            diag.iterations += 1
            cur_fields = [f.values for f in traj_k.fields]
            delta = _relative_delta(cur_fields, prev_fields)
            deltas.append(delta)
            if delta <= tol:
                converged_slab = True
                break
            prev_fields = cur_fields
            prev_marginals = traj_k.p_tilde_nodes
            k += 1
        diag.deltas_p.append(deltas)
        diag.deltas_c.append([])
        diag.driving_deltas.append(list(deltas))
        diag.k_per_slab.append(k if converged_slab else k_max)
        if not converged_slab:
            diag.converged = False

        # stitch only the schedule's own saved nodes: slab edges are an
        # implementation detail and must not leak extra snapshots
        for pos, node in enumerate(local_saved):
            g_node = i0 + node
            if g_node not in global_saved or (s > 0 and node == 0):
                continue
            fields.append(traj_k.fields[pos])
            times.append(traj_k.times[pos])
        pt_nodes[i0:i1 + 1] = traj_k.p_tilde_nodes
        j_nodes[i0:i1 + 1] = traj_k.j_nodes
        a_offset = a_offset + accumulate_time_integral(traj_k.p_tilde_nodes, dt)[-1]
        p_slab = traj_k.fields[-1]

    a_nodes_global = accumulate_time_integral(pt_nodes, dt)
    aux = {"a_nodes": a_nodes_global}
    traj = Trajectory(times, fields, node_times=schedule.times(),
                      p_tilde_nodes=pt_nodes, j_nodes=j_nodes, aux=aux)
    return traj, diag


def _c_inf_nodes(c_start_vals, plan_x, n_local, dt):
    """Exact far-field concentration at the local nodes of one slab.

    ``c_start_vals`` is the far field at the slab start; the semigroup is
    exact, so evaluating each node in one shot composes exactly with the
    previous slabs.
    """
    out = np.empty((n_local + 1,) + c_start_vals.shape)
    for i in range(n_local + 1):
        out[i] = plan_x.apply(c_start_vals, i * dt, "spatial")
    return out


def _advance_c_nodes(chat_start, c_inf_loc, j_loc, eta, dt, plan_x):
    """March c = c_inf + chat across one slab given the speed moment nodes.

    Returns (c at local nodes, chat at local nodes).  chat stays <= 0 and c
    stays >= 0 by construction; both are clamped at round-off level and
    violations beyond the tolerance raise SignError.
    """
    n_local = j_loc.shape[0] - 1
    c_nodes = np.empty_like(j_loc)
    chat_nodes = np.empty_like(j_loc)
    chat = chat_start
    c = c_inf_loc[0] + chat
    c_nodes[0] = c
    chat_nodes[0] = chat
    for i in range(n_local):
        j_mid = 0.5 * (j_loc[i] + j_loc[i + 1])
        half = np.exp((-0.5 * dt * eta) * j_mid)
        c = half * plan_x.apply(half * c, dt, "spatial")
        scale = float(np.abs(c).max())
        worst = float(c.min())
        if worst < -CLAMP_REL * scale:
            raise SignError(f"concentration went negative ({worst:.3e}) at node {i + 1}")
        if worst < 0.0:
            c = np.where(c < 0.0, 0.0, c)
        chat = c - c_inf_loc[i + 1]
        worst_hat = float(chat.max())
        if worst_hat > CLAMP_REL * max(scale, float(np.abs(chat).max())):
            raise SignError(
                f"depletion went positive ({worst_hat:.3e}) at node {i + 1}: "
                "consumption should only ever lower c below its far field"
            )
        if worst_hat > 0.0:
            chat = np.where(chat > 0.0, 0.0, chat)
            c = c_inf_loc[i + 1] + chat
        c_nodes[i + 1] = c
        chat_nodes[i + 1] = chat
    return c_nodes, chat_nodes


def picard_coupled(p0: PhaseField, c0: SpatialField, params: ModelParams,
                   schedule: Schedule, k_max: int = 20, tol: float = 1e-8,
                   init: str = "zero"):
    """Fixed-point run of the fully coupled system.

    Iterate bookkeeping per slab (mirroring the construction that proves
    existence): p_1 = 0 and c_1 the plain heat flow of the slab's starting
    concentration; iterate k >= 2 solves the linear problem with coefficient
    gamma A_{k-1} - alpha(c_{k-1}) rho(v) and then advances the concentration
    with the *current* speed moment j_k.  Convergence requires both the p and
    the c change to fall below ``tol`` at every saved time.  ``init="heat"``
    replaces the zero start with the frozen-offset flow (used by the
    uniqueness probe to approach the fixed point from a different side).

    Returns (p_trajectory, c_trajectory, diagnostics); the c trajectory's
    ``aux`` carries the far-field and depletion snapshots at the saved times.
    """
    if init not in ("heat", "zero"):
        raise ParameterError(f"init must be 'heat' or 'zero', got {init!r}")
    if k_max < 2:
        raise ParameterError("k_max must allow at least two iterates")
    if not (0.0 < tol < 1.0):
        raise ParameterError(f"tol must be in (0, 1), got {tol!r}")
    grid = p0.grid
    if c0.grid != grid:
        raise ShapeError("p0 and c0 live on different lattices")
    if float(p0.values.min()) < 0.0:
        p0 = PhaseField(grid, p0.values, time_tag=p0.time_tag, nonnegative=True)
    if c0.role != "c":
        c0 = SpatialField(grid, c0.values, time_tag=c0.time_tag, role="c")

    v0 = params.v0 if len(params.v0) == grid.dim_v else params.v0 * grid.dim_v
    if len(v0) != grid.dim_v:
        raise ConfigurationError(
            f"v0 has {len(params.v0)} components for a dim_v={grid.dim_v} lattice"
        )
    rho = gaussian_rho(grid, params.epsilon, v0)
    alpha_rate = params.alpha1 * rho.sup_norm

    gamma, eta, dt = params.gamma, params.eta, schedule.dt
    n_steps = schedule.n_steps
    plan = HeatPlan(grid, params.sigma, "xv")
    plan_x = HeatPlan(grid, params.d, "x")

    sup_pt0 = float((p0.values.sum(axis=grid.v_axes) * grid.v_cell_volume).max())
    big_m = gamma * sup_pt0 * math.exp(alpha_rate * schedule.t_end)
    edges = slab_partition(n_steps, dt, big_m)
    global_saved = set(schedule.saved_nodes())

    diag = IterationDiagnostics(slab_edges=[e * dt for e in edges])
    speed_mode = "vector" if params.use_vector_j else None

    p_fields, c_fields, times = [], [], []
    chat_saved, cinf_saved = [], []
    n_nodes = n_steps + 1
    pt_nodes = np.empty((n_nodes,) + grid.spatial_shape)
    j_nodes = np.empty_like(pt_nodes)

    a_offset = np.zeros(grid.spatial_shape)
    p_slab = p0
    chat_slab = np.zeros(grid.spatial_shape)
    cinf_start = c0.values

    for s in range(len(edges) - 1):
        i0, i1 = edges[s], edges[s + 1]
        n_local = i1 - i0
        local_sched = _slab_schedule(i0, i1, dt)
        local_saved = _local_saved_nodes(i0, i1, global_saved, n_steps)
        c_inf_loc = _c_inf_nodes(cinf_start, plan_x, n_local, dt)

        # iterate 1 per slab: p_1 = 0 (the construction's seed; free) or the
        # frozen-offset flow for the alternative seeding; c_1 follows its j.
        if init == "zero":
            zero_loc = np.zeros((n_local + 1,) + grid.spatial_shape)
            prev_p_fields = [np.zeros(grid.phase_shape) for _ in local_saved]
            prev_pt = zero_loc
            prev_j = zero_loc
        else:
            track1 = CoefficientTrack(local_sched, grid, a=gamma * a_offset,
                                      strict=True)
            traj1 = solve_linear(p_slab, track1, params.sigma, plan=plan,
                                 record_moments=True, saved_nodes=local_saved,
                                 speed=speed_mode)
            prev_p_fields = [f.values for f in traj1.fields]
            prev_pt = traj1.p_tilde_nodes
            prev_j = traj1.j_nodes
        diag.iterations += 1
        c_prev_nodes, _ = _advance_c_nodes(chat_slab, c_inf_loc, prev_j, eta, dt, plan_x)

        deltas_p, deltas_c, driving = [], [], []
        converged_slab = False
        traj_k = None
        c_cur_nodes = c_prev_nodes
        chat_cur_nodes = None
        k = 2
        while k <= k_max:
            a_nodes = a_offset + accumulate_time_integral(prev_pt, dt)
            sep_x = [-_alpha_raw(c_prev_nodes[i], params.alpha1, params.c_R,
                                 "coupled iterate") for i in range(n_local + 1)]
            track = CoefficientTrack(local_sched, grid,
                                     a=[gamma * a_i for a_i in a_nodes],
                                     sep_x=sep_x, sep_v=rho.values, strict=False)
            traj_k = solve_linear(p_slab, track, params.sigma, plan=plan,
                                  record_moments=True, saved_nodes=local_saved,
                                  speed=speed_mode, clamp_saves=True)
            diag.iterations += 1
            c_cur_nodes, chat_cur_nodes = _advance_c_nodes(
                chat_slab, c_inf_loc, traj_k.j_nodes, eta, dt, plan_x)

            cur_p_fields = [f.values for f in traj_k.fields]
            d_p = _relative_delta(cur_p_fields, prev_p_fields)
            d_c = _relative_delta([c_cur_nodes[i] for i in local_saved],
                                  [c_prev_nodes[i] for i in local_saved])
            deltas_p.append(d_p)
            deltas_c.append(d_c)
            driving.append(max(d_p, d_c))
            if driving[-1] <= tol:
                converged_slab = True
                break
            prev_p_fields = cur_p_fields
            prev_pt = traj_k.p_tilde_nodes
            prev_j = traj_k.j_nodes
            c_prev_nodes = c_cur_nodes
            k += 1

        diag.deltas_p.append(deltas_p)
        diag.deltas_c.append(deltas_c)
        diag.driving_deltas.append(driving)
        diag.k_per_slab.append(k if converged_slab else k_max)
        if not converged_slab:
            diag.converged = False

        # stitch only the schedule's own saved nodes (as in the pure driver)
        for pos, node in enumerate(local_saved):
            g_node = i0 + node
            if g_node not in global_saved or (s > 0 and node == 0):
                continue
            t = g_node * dt
            times.append(t)
            p_fields.append(traj_k.fields[pos])
            c_fields.append(SpatialField(grid, c_cur_nodes[node], time_tag=t, role="c"))
            chat_saved.append(SpatialField(grid, chat_cur_nodes[node], time_tag=t,
                                           role="c_hat"))
            cinf_saved.append(SpatialField(grid, c_inf_loc[node], time_tag=t,
                                           role="c_inf"))
        pt_nodes[i0:i1 + 1] = traj_k.p_tilde_nodes
        j_nodes[i0:i1 + 1] = traj_k.j_nodes

        a_offset = a_offset + accumulate_time_integral(traj_k.p_tilde_nodes, dt)[-1]
        p_slab = traj_k.fields[-1]
        chat_slab = chat_cur_nodes[-1]
        cinf_start = c_inf_loc[-1]

    a_nodes_global = accumulate_time_integral(pt_nodes, dt)
    p_traj = Trajectory(times, p_fields, node_times=schedule.times(),
                        p_tilde_nodes=pt_nodes, j_nodes=j_nodes,
                        aux={"a_nodes": a_nodes_global, "rho_sup": rho.sup_norm,
                             "alpha_rate": alpha_rate})
    c_traj = Trajectory(times, c_fields,
                        aux={"c_hat": chat_saved, "c_inf": cinf_saved})
    return p_traj, c_traj, diag
