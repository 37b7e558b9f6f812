"""Periodic phase-space lattices and the field containers living on them.

The computational domain is a centred periodic box: positions x in
[-L_x, L_x)^dim_x and velocities v in [-L_v, L_v)^dim_v, sampled at cell
centres on a uniform lattice.  Two container types carry data:

* :class:`PhaseField`  -- densities p(x, v) on the full phase lattice,
* :class:`SpatialField` -- reduced quantities (marginals, moments,
  concentrations, running integrals) on the position lattice only.

Both are immutable: values are validated once at construction (finiteness,
shape, and -- when requested -- sign up to a relative clamping tolerance)
and the underlying array is made read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DataError, ParameterError, ShapeError, SignError

#: Relative tolerance for sign enforcement: entries on the wrong side of zero
#: by at most CLAMP_REL * max|field| are clamped to zero, anything worse is an
#: error.  Matches the round-off floor of the spectral transforms.
CLAMP_REL = 1e-12

#: Sign convention by role: +1 means "must be >= 0", -1 means "must be <= 0".
ROLE_SIGNS = {
    "c": +1,          # concentration
    "c_inf": +1,      # far-field (undepleted) concentration
    "c_hat": -1,      # depletion c - c_inf, never positive
    "p_tilde": +1,    # velocity marginal
    "j": +1,          # speed moment
    "m": +1,          # second moment
    "a": +1,          # running time integral of the marginal
    "alpha_of_c": +1, # saturating production rate
}


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice for the box [-L_x, L_x)^dim_x x [-L_v, L_v)^dim_v.

    Parameters
    ----------
    dim_x, dim_v : int
        Number of position / velocity axes, each 1 or 2.
    n_x, n_v : int
        Points per axis; powers of two, at least 8 (the transforms assume
        this, and coarser lattices cannot resolve any shipped profile).
    half_width_x, half_width_v : float
        Box half-widths L_x and L_v.
    """

    dim_x: int
    dim_v: int
    n_x: int
    n_v: int
    half_width_x: float
    half_width_v: float

    def __post_init__(self):
        if self.dim_x not in (1, 2) or self.dim_v not in (1, 2):
            raise ParameterError(
                f"dim_x and dim_v must be 1 or 2, got ({self.dim_x}, {self.dim_v})"
            )
        for name, n in (("n_x", self.n_x), ("n_v", self.n_v)):
            if not isinstance(n, (int, np.integer)) or n < 8 or not _is_pow2(int(n)):
                raise ParameterError(f"{name} must be a power of two >= 8, got {n!r}")
        for name, L in (
            ("half_width_x", self.half_width_x),
            ("half_width_v", self.half_width_v),
        ):
            if not (float(L) > 0.0) or not math.isfinite(float(L)):
                raise ParameterError(f"{name} must be a positive finite number, got {L!r}")

    # --- lattice geometry -------------------------------------------------

    @property
    def h_x(self) -> float:
        """Position spacing 2*L_x / n_x."""
        return 2.0 * self.half_width_x / self.n_x

    @property
    def h_v(self) -> float:
        return 2.0 * self.half_width_v / self.n_v

    @property
    def spatial_shape(self) -> tuple:
        return (self.n_x,) * self.dim_x

    @property
    def velocity_shape(self) -> tuple:
        return (self.n_v,) * self.dim_v

    @property
    def phase_shape(self) -> tuple:
        return self.spatial_shape + self.velocity_shape

    @property
    def x_axes(self) -> tuple:
        """Axis indices of the position directions in a phase array."""
        return tuple(range(self.dim_x))

    @property
    def v_axes(self) -> tuple:
        return tuple(range(self.dim_x, self.dim_x + self.dim_v))

    @property
    def x_cell_volume(self) -> float:
        return self.h_x ** self.dim_x

    @property
    def v_cell_volume(self) -> float:
        return self.h_v ** self.dim_v

    @property
    def cell_volume(self) -> float:
        """Phase-space cell volume h_x^dim_x * h_v^dim_v."""
        return self.x_cell_volume * self.v_cell_volume

    def x_coords(self) -> np.ndarray:
        """Cell-centre coordinates along one position axis."""
        return -self.half_width_x + self.h_x * np.arange(self.n_x)

    def v_coords(self) -> np.ndarray:
        return -self.half_width_v + self.h_v * np.arange(self.n_v)


@lru_cache(maxsize=None)
def speed_grid(grid: GridSpec) -> np.ndarray:
    """Euclidean speed |v| of every cell centre on the velocity lattice."""
    v = grid.v_coords()
    if grid.dim_v == 1:
        out = np.abs(v)
    else:
        out = np.sqrt(v[:, None] ** 2 + v[None, :] ** 2)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def speed_squared_grid(grid: GridSpec) -> np.ndarray:
    """|v|^2 of every cell centre on the velocity lattice."""
    v = grid.v_coords()
    if grid.dim_v == 1:
        out = v ** 2
    else:
        out = v[:, None] ** 2 + v[None, :] ** 2
    out.setflags(write=False)
    return out


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        idx = tuple(int(i) for i in bad)
        raise DataError(f"{what} has non-finite entry {values[idx]!r} at cell {idx}")


def _apply_sign(values: np.ndarray, sign: int, what: str) -> np.ndarray:
    """Clamp entries on the wrong side of zero; error beyond the tolerance.

    Returns a (possibly new) array with offending entries set to 0.0.
    """
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    limit = CLAMP_REL * scale
    if sign > 0:
        worst = float(values.min())
        if worst < -limit:
            idx = tuple(int(i) for i in np.unravel_index(values.argmin(), values.shape))
            raise SignError(
                f"{what} must be >= 0: entry {worst:.6e} at cell {idx} "
                f"is below the clamping tolerance {-limit:.3e}"
            )
        if worst < 0.0:
            values = np.where(values < 0.0, 0.0, values)
    else:
        worst = float(values.max())
        if worst > limit:
            idx = tuple(int(i) for i in np.unravel_index(values.argmax(), values.shape))
            raise SignError(
                f"{what} must be <= 0: entry {worst:.6e} at cell {idx} "
                f"exceeds the clamping tolerance {limit:.3e}"
            )
        if worst > 0.0:
            values = np.where(values > 0.0, 0.0, values)
    return values


class PhaseField:
    """Immutable density sample p(x, v) on the phase lattice of ``grid``.

    Parameters
    ----------
    grid : GridSpec
    values : array_like, shape ``grid.phase_shape``
    time_tag : float
        The time the sample belongs to (bookkeeping only).
    nonnegative : bool
        When true, entries below zero by at most ``CLAMP_REL * max|values|``
        are clamped to zero and anything below that raises :class:`SignError`.
    """

    __slots__ = ("grid", "values", "time_tag")

    def __init__(self, grid, values, time_tag=0.0, nonnegative=False):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.phase_shape:
            raise ShapeError(
                f"phase field shape {values.shape} does not match lattice "
                f"{grid.phase_shape}"
            )
        _check_finite(values, "phase field")
        if nonnegative:
            values = _apply_sign(values, +1, "phase field")
        if values.flags.writeable:
            values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_tag", float(time_tag))

    def __setattr__(self, name, value):
        raise AttributeError("PhaseField is immutable")

    def __repr__(self):
        return (
            f"PhaseField(t={self.time_tag:g}, shape={self.values.shape}, "
            f"sup={float(np.max(np.abs(self.values))):.6g})"
        )


class SpatialField:
    """Immutable sample of a reduced quantity on the position lattice.

    ``role`` selects a sign convention from :data:`ROLE_SIGNS` (for example
    ``"c"`` forces the field to be a valid concentration, >= 0 up to the
    clamping tolerance); ``None`` places no constraint.
    """

    __slots__ = ("grid", "values", "time_tag", "role")

    def __init__(self, grid, values, time_tag=0.0, role=None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.spatial_shape:
            raise ShapeError(
                f"spatial field shape {values.shape} does not match lattice "
                f"{grid.spatial_shape}"
            )
        _check_finite(values, "spatial field")
        if role is not None:
            if role not in ROLE_SIGNS:
                raise ParameterError(
                    f"unknown role {role!r}; expected one of {sorted(ROLE_SIGNS)}"
                )
            values = _apply_sign(values, ROLE_SIGNS[role], f"{role} field")
        if values.flags.writeable:
            values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_tag", float(time_tag))
        object.__setattr__(self, "role", role)

    def __setattr__(self, name, value):
        raise AttributeError("SpatialField is immutable")

    def __repr__(self):
        tag = f", role={self.role}" if self.role else ""
        return (
            f"SpatialField(t={self.time_tag:g}, shape={self.values.shape}{tag}, "
            f"sup={float(np.max(np.abs(self.values))):.6g})"
        )


def _field_cell_volume(field) -> float:
    if isinstance(field, PhaseField):
        return field.grid.cell_volume
    if isinstance(field, SpatialField):
        return field.grid.x_cell_volume
    raise DataError(f"expected PhaseField or SpatialField, got {type(field).__name__}")


def integrate_phase(field) -> float:
    """Total integral of the field over its own lattice (midpoint rule).

    For a :class:`PhaseField` this is the total mass over the phase box;
    a :class:`SpatialField` integrates over the position box only.
    """
    return float(field.values.sum()) * _field_cell_volume(field)


def lq_norm(field, q) -> float:
    """Discrete L^q norm of a field, q in [1, inf].

    Cell-volume weighted: ``(sum |f|^q * vol)^(1/q)``; ``q = inf`` gives the
    lattice sup norm.
    """
    vals = field.values
    if q == np.inf or q == math.inf:
        return float(np.max(np.abs(vals))) if vals.size else 0.0
    q = float(q)
    if not q >= 1.0:
        raise ParameterError(f"q must be >= 1 or inf, got {q!r}")
    vol = _field_cell_volume(field)
    if q == 1.0:
        return float(np.sum(np.abs(vals))) * vol
    if q == 2.0:
        return float(math.sqrt(np.sum(vals * vals) * vol))
    return float((np.sum(np.abs(vals) ** q) * vol) ** (1.0 / q))
