"""Inequality checks on solver trajectories, with located worst offenders.

Every check walks a trajectory, evaluates one mathematical claim per saved
time, and reports a :class:`BoundCheck`: the normalised slack per time (>= 0
means the claim holds with room), the worst slack, the time and lattice cell
where it occurs, and a pass/fail verdict against the check's tolerance.
Slacks are normalised by a problem-scale quantity (stated per check) so the
tolerances are dimensionless and comparable across scenarios.

The checks never repair anything; they only measure.  Feeding them corrupted
data is the intended way to verify they would catch a regression.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError, ParameterError
from .grid import lq_norm
from .heat import HeatPlan, gradient_energy


@dataclass
class BoundCheck:
    """Outcome of one inequality check over a trajectory."""

    name: str
    anchor: str
    tolerance: float
    times: np.ndarray
    slacks: np.ndarray
    worst_slack: float
    worst_time: float
    worst_cell: tuple
    passed: bool

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "tolerance": self.tolerance,
            "worst_slack": float(self.worst_slack),
            "worst_time": float(self.worst_time),
            "worst_cell": None if self.worst_cell is None else list(self.worst_cell),
            "verdict": self.verdict,
        }


def _finish(name, anchor, tol, times, slacks, cells) -> BoundCheck:
    slacks = np.asarray(slacks, dtype=float)
    k = int(np.argmin(slacks))
    worst = float(slacks[k])
    return BoundCheck(
        name=name, anchor=anchor, tolerance=float(tol),
        times=np.asarray(times, dtype=float), slacks=slacks,
        worst_slack=worst, worst_time=float(times[k]),
        worst_cell=cells[k], passed=bool(worst >= -tol),
    )


def _cell_of(index_flat, shape):
    return tuple(int(i) for i in np.unravel_index(int(index_flat), shape))


def check_positivity(traj, tol: float = 1e-12,
                     name: str = "positivity") -> BoundCheck:
    """Nonnegative data must stay nonnegative.

    Slack at each time is min(field)/max|field| (global max over the run);
    the worst cell is the most negative one.
    """
    scale = max(float(np.abs(f.values).max()) for f in traj.fields) or 1.0
    slacks, cells = [], []
    for f in traj.fields:
        vals = f.values
        k = int(vals.argmin())
        slacks.append(float(vals.flat[k]) / scale)
        cells.append(_cell_of(k, vals.shape))
    return _finish(
        name,
        "nonnegative initial data propagate to nonnegative solutions",
        tol, traj.times, slacks, cells,
    )


def check_comparison(traj, majorant_traj, tol: float = 1e-10,
                     name: str = "comparison",
                     anchor: str = None) -> BoundCheck:
    """Cellwise domination solution <= majorant at every shared saved time.

    Slack is min(majorant - solution) normalised by the majorant's largest
    sup norm.  Ordered data give ordered flows, so a frozen-coefficient or
    production-envelope majorant must stay above every iterate.
    """
    if len(traj) != len(majorant_traj) or not np.allclose(
            traj.times, majorant_traj.times, rtol=1e-12, atol=1e-12):
        raise ConfigurationError("trajectory and majorant saved times differ")
    scale = max(float(np.abs(f.values).max()) for f in majorant_traj.fields)
    if scale == 0.0:
        scale = max(float(np.abs(f.values).max()) for f in traj.fields) or 1.0
    slacks, cells = [], []
    for f, g in zip(traj.fields, majorant_traj.fields):
        gap = g.values - f.values
        k = int(gap.argmin())
        slacks.append(float(gap.flat[k]) / scale)
        cells.append(_cell_of(k, gap.shape))
    return _finish(
        name,
        anchor or "monotone comparison: the flow with the larger data and "
                  "weaker damping dominates cellwise",
        tol, traj.times, slacks, cells,
    )


def check_gronwall(traj, rate: float, q, tol: float = 1e-8,
                   norm0: float = None, name: str = "gronwall") -> BoundCheck:
    """Exponential norm envelope ||f(t)||_q <= ||f(0)||_q * exp(rate * t).

    Slack is (bound - norm)/bound per time.  The worst cell is the cell of
    largest magnitude at the worst time (the one carrying the norm).
    """
    t0 = float(traj.times[0])
    if norm0 is None:
        norm0 = lq_norm(traj.fields[0], q)
    slacks, cells = [], []
    for t, f in zip(traj.times, traj.fields):
        bound = norm0 * float(np.exp(rate * (t - t0)))
        norm = lq_norm(f, q)
        if bound == 0.0:
            slacks.append(0.0 if norm == 0.0 else -np.inf)
        else:
            slacks.append((bound - norm) / bound)
        cells.append(_cell_of(np.abs(f.values).argmax(), f.values.shape))
    return _finish(
        name,
        f"integral-inequality envelope: L^{q} norm grows at most like "
        f"exp({rate:g} t)",
        tol, traj.times, slacks, cells,
    )


def _energy_terms(traj, f_fields, sigma):
    e = np.array([lq_norm(f, 2) ** 2 for f in traj.fields])
    d = np.array([gradient_energy(f) for f in traj.fields])
    if f_fields is None:
        fw = np.zeros(len(traj))
    else:
        if len(f_fields) != len(traj):
            raise ConfigurationError("need one source sample per saved time")
        vol = traj.grid.cell_volume
        fw = np.array([
            float(np.sum(ff.values * pf.values)) * vol
            for ff, pf in zip(f_fields, traj.fields)
        ])
    return e, d, fw


def _energy_residual(times, e, d, fw, sigma):
    int_d = cumulative_trapezoid(d, x=times, initial=0.0)
    int_f = cumulative_trapezoid(fw, x=times, initial=0.0)
    return e[0] + 2.0 * int_f - e - 2.0 * sigma * int_d


def check_energy(traj, f_fields, sigma: float, tol: float = None,
                 name: str = "energy") -> BoundCheck:
    """Energy balance ||p(t)||^2 + 2 sigma int ||grad p||^2 <= ||p0||^2 + 2 int (f, p).

    Damping only ever removes L^2 mass, so the balance holds as an
    inequality for any a >= 0 (and as an identity when a = f = 0).  Time
    integrals use the trapezoid rule on the saved times; with ``tol=None``
    the quadrature error is calibrated by re-evaluating on every second
    saved time and Richardson-extrapolating the difference.
    """
    e, d, fw = _energy_terms(traj, f_fields, sigma)
    times = traj.times
    res = _energy_residual(times, e, d, fw, sigma)
    scale = float(e.max()) or 1.0
    if tol is None:
        if len(times) >= 5:
            sl = slice(None, None, 2)
            res_thin = _energy_residual(times[sl], e[sl], d[sl], fw[sl], sigma)
            est = float(np.max(np.abs(res[sl] - res_thin))) / scale
            tol = max(1e-10, 2.0 * est)
        else:
            tol = 1e-10
    slacks = res / scale
    cells = [
        _cell_of(np.abs(f.values).argmax(), f.values.shape) for f in traj.fields
    ]
    return _finish(
        name,
        "L2 energy balance with spectral gradients: damping only removes "
        "energy, sources add at most 2*int (f, p)",
        tol, times, slacks, cells,
    )


def check_speed_bound(moment_sets, tol: float = 1e-10,
                      R_values=(0.5, 1.0, 2.0, "optimal"),
                      name: str = "speed_bound") -> BoundCheck:
    """Interpolation bound j <= R p~ + m/R for every R > 0, cellwise.

    Checked for the listed R (``"optimal"`` uses the cellwise minimiser,
    giving the Cauchy-Schwarz form j <= 2 sqrt(p~ m)).  Slack is the worst
    gap over the R values, normalised by the largest speed moment.
    """
    sets = list(moment_sets)
    if not sets:
        raise ConfigurationError("need at least one moment set")
    scale = max(float(ms.j.values.max()) for ms in sets)
    if scale <= 0.0:
        scale = 1.0
    times, slacks, cells = [], [], []
    for ms in sets:
        pt, j, m = ms.p_tilde.values, ms.j.values, ms.m.values
        worst, cell = np.inf, None
        for R in R_values:
            if R == "optimal":
                bound = 2.0 * np.sqrt(np.maximum(pt, 0.0) * np.maximum(m, 0.0))
            else:
                R = float(R)
                if not R > 0.0:
                    raise ParameterError(f"R must be positive, got {R!r}")
                bound = R * pt + m / R
            gap = bound - j
            k = int(gap.argmin())
            if float(gap.flat[k]) < worst:
                worst = float(gap.flat[k])
                cell = _cell_of(k, gap.shape)
        times.append(ms.time_tag)
        slacks.append(worst / scale)
        cells.append(cell)
    return _finish(
        name,
        "interpolation bound j <= R*ptilde + m/R for every R > 0 "
        "(Cauchy-Schwarz at the optimal R)",
        tol, times, slacks, cells,
    )


def check_c_bounds(c_traj, c0, tol: float = 1e-12, diffusivity: float = None,
                   name: str = "c_bounds") -> BoundCheck:
    """Concentration invariants: 0 <= c <= sup c0 and depletion <= 0.

    The depletion c - c_inf (c_inf = plain heat flow of c0) comes from the
    trajectory's aux snapshots when present, otherwise it is recomputed from
    ``diffusivity``.  All three sub-claims share the normalisation sup c0;
    the reported worst cell belongs to the sub-claim with the worst slack.
    """
    sup_c0 = float(c0.values.max())
    if sup_c0 <= 0.0:
        sup_c0 = 1.0
    chat_fields = c_traj.aux.get("c_hat")
    plan = None
    if chat_fields is None:
        if diffusivity is None:
            raise ConfigurationError(
                "no depletion snapshots in the trajectory; pass diffusivity "
                "so the far field can be recomputed"
            )
        plan = HeatPlan(c0.grid, diffusivity, "x")
    t0 = float(c_traj.times[0])
    slacks, cells = [], []
    for k, (t, f) in enumerate(zip(c_traj.times, c_traj.fields)):
        vals = f.values
        # (1) c >= 0
        i_min = int(vals.argmin())
        s1 = float(vals.flat[i_min]) / sup_c0
        # (2) c <= sup c0
        i_max = int(vals.argmax())
        s2 = (sup_c0 - float(vals.flat[i_max])) / sup_c0
        # (3) depletion <= 0
        if chat_fields is not None:
            chat = chat_fields[k].values
        else:
            chat = vals - plan.apply(c0.values, t - t0, "spatial")
        i_hat = int(chat.argmax())
        s3 = -float(chat.flat[i_hat]) / sup_c0
        options = [
            (s1, _cell_of(i_min, vals.shape)),
            (s2, _cell_of(i_max, vals.shape)),
            (s3, _cell_of(i_hat, chat.shape)),
        ]
        s, cell = min(options, key=lambda sc: sc[0])
        slacks.append(s)
        cells.append(cell)
    return _finish(
        name,
        "concentration comparison: consumption keeps 0 <= c <= sup c0 and "
        "never lifts c above its consumption-free far field",
        tol, c_traj.times, slacks, cells,
    )


def write_report(checks, path) -> dict:
    """Serialise checks to a deterministic JSON report; returns the payload."""
    payload = {
        "checks": [c.to_dict() for c in checks],
        "all_passed": bool(all(c.passed for c in checks)),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
