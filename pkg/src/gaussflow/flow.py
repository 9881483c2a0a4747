"""Time integration of the radial-graph flow with live monitors.

The scalar equation evolved is

    d rho / dt = -phi(rho) K^{1/n} + phi'(rho) w,

advanced by explicit Heun steps under a parabolic CFL limit.  After every
accepted step a diagnostics row is evaluated and compared with the
previous one; violations of the proved monotonicity and bound properties
are recorded as flags rather than raised.
"""

from dataclasses import dataclass
from functools import cached_property
import logging
import math
from typing import NamedTuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy import sparse, stats

from . import _kernels
from .errors import (
    CFLCollapseError,
    ConfigError,
    ConvexityLoss,
    DegeneracyError,
    InsufficientDataError,
    ShapeError,
)
from .geometry import GeometryFields, compute_geometry
from .grid import RadialField
from .hyperbolic import XI_BRACKET, omega

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "t",
    "dt",
    "rho_min",
    "rho_max",
    "osc",
    "vol",
    "area",
    "A_nm2",
    "af_gap",
    "Q",
    "K_max",
    "kappa_min",
    "grad_gamma_sq_max",
    "mink_res_0",
    "mink_res_nm1",
)
_COL = {name: i for i, name in enumerate(TRACE_COLUMNS)}

# indexed by the kernel flag codes
FLAG_NAMES = (
    "rho_max_increase",
    "rho_min_decrease",
    "vol_decrease",
    "A_nm2_increase",
    "kappa_min_nonpositive",
    "Q_negative",
)

MONITOR_SLACK = 1e-8
MAX_RETRIES = 8
_BLOCK = 50000


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = 0.2
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    t_max: float = 100.0
    osc_tol: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if not 0.0 < self.dt_min <= self.dt_max:
            raise ConfigError(f"need 0 < dt_min <= dt_max, got {self.dt_min!r}, {self.dt_max!r}")
        if not self.t_max >= 0.0:
            raise ConfigError(f"t_max must be >= 0, got {self.t_max!r}")
        if not self.osc_tol >= 0.0:
            raise ConfigError(f"osc_tol must be >= 0, got {self.osc_tol!r}")


@dataclass(frozen=True, eq=False)
class FlowState:
    """A field plus its step count.  The field is immutable, so the cached
    geometry can never go stale."""

    field: RadialField
    step_index: int = 0

    @property
    def t(self) -> float:
        return self.field.time

    @cached_property
    def geom(self) -> GeometryFields:
        return compute_geometry(self.field)


class FlowTrace:
    """Append-only table of diagnostics rows in TRACE_COLUMNS order."""

    columns = TRACE_COLUMNS

    def __init__(self):
        self._buf = np.empty((256, len(TRACE_COLUMNS)))
        self._len = 0

    def __len__(self):
        return self._len

    def append(self, row):
        row = np.asarray(row, dtype=float)
        if row.shape != (len(TRACE_COLUMNS),):
            raise ValueError(f"trace row needs {len(TRACE_COLUMNS)} values, got shape {row.shape}")
        if self._len and not row[0] > self._buf[self._len - 1, 0]:
            raise ValueError(f"trace time must increase: {row[0]!r} after {self._buf[self._len - 1, 0]!r}")
        if self._len == self._buf.shape[0]:
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
        self._buf[self._len] = row
        self._len += 1

    def as_array(self):
        return self._buf[: self._len].copy()

    def column(self, name):
        return self._buf[: self._len, _COL[name]].copy()

    def row(self, i):
        return dict(zip(TRACE_COLUMNS, self._buf[: self._len][i].tolist()))


class MonitorFlag(NamedTuple):
    step: int
    t: float
    name: str
    amount: float


class RunResult(NamedTuple):
    state: FlowState
    trace: FlowTrace
    converged: bool
    rho_inf: float
    flags: list
    steps: int
    flag_counts: dict


def speed(geom):
    """Graph speed -phi K^{1/n} + phi' w at every node."""
    if not geom.convex:
        raise ConvexityLoss(*geom.convexity_info())
    return -geom.phi * geom.gauss_root + geom.phi_prime * geom.w


def diffusion_coefficient(geom):
    """Derivative of the graph speed with respect to rho'' at every node.

    Only kappa_m depends on rho'', through -phi/v^3, which gives
    phi^2 K^{1/n} / (n kappa_m v^3).
    """
    if not geom.convex:
        raise ConvexityLoss(*geom.convexity_info())
    return geom.phi ** 2 * geom.gauss_root / (geom.n * geom.kappa_m * geom.v ** 3)


def _cfl_dt(d_max, grid, ctrl):
    dt = ctrl.cfl_safety * grid.dpsi ** 2 / d_max
    if dt < ctrl.dt_min:
        raise CFLCollapseError(f"stable dt {dt!r} below dt_min {ctrl.dt_min!r}")
    return min(dt, ctrl.dt_max)


def stable_dt(state, ctrl):
    return _cfl_dt(float(diffusion_coefficient(state.geom).max()), state.field.grid, ctrl)


def _first_bad(rho, grid):
    geom = compute_geometry(RadialField(grid, rho))
    info = geom.convexity_info()
    return info if info is not None else (-1, float("nan"), float("nan"))


def _heun(rho, k1, grid, dt):
    """Heun update with up to MAX_RETRIES halvings; returns (new, dt_used)."""
    m = grid.m
    stage, k2, new = np.empty(m), np.empty(m), np.empty(m)
    for _ in range(MAX_RETRIES + 1):
        if _kernels.heun_try(rho, k1, grid.cot, grid.dpsi, grid.n, dt, stage, k2, new):
            _, ok = _kernels.rhs_into(new, grid.cot, grid.dpsi, grid.n, k2)
            if ok:
                return new, dt
        log.debug("step rejected at dt=%g, halving", dt)
        dt *= 0.5
    raise DegeneracyError(f"step failed after {MAX_RETRIES} dt halvings (last dt={2 * dt!r})")


def step(state, ctrl, dt=None):
    """Advance one Heun step (dt from the CFL limit unless given)."""
    grid = state.field.grid
    rho = np.array(state.field.rho)
    k1, d_max, ok = _kernels.rhs(rho, grid.cot, grid.dpsi, grid.n)
    if not ok:
        raise ConvexityLoss(*_first_bad(rho, grid))
    if dt is None:
        dt = _cfl_dt(d_max, grid, ctrl)
    new, used = _heun(rho, k1, grid, dt)
    return FlowState(RadialField(grid, new, state.t + used), state.step_index + 1)


def _flags_from(row, prev, step_index):
    codes = np.empty(_kernels.N_FLAGS, dtype=np.int64)
    amounts = np.empty(_kernels.N_FLAGS)
    prev = np.empty(0) if prev is None else prev
    nf = _kernels.check_row(prev, row, MONITOR_SLACK, MONITOR_SLACK, codes, amounts)
    return [
        MonitorFlag(step_index, float(row[0]), FLAG_NAMES[codes[i]], float(amounts[i]))
        for i in range(nf)
    ]


def monitors(state, prev_row=None, dt=0.0):
    """Diagnostics row of a state as a dict, plus any flags against ``prev_row``."""
    grid = state.field.grid
    rho = np.ascontiguousarray(state.field.rho)
    row, _, _ = _kernels.monitor_row(
        rho, grid.cot, grid.quad_w, grid.dpsi, grid.n, omega(grid.n),
        state.t, dt, float(rho.mean()), *XI_BRACKET
    )
    prev = None if prev_row is None else np.array([prev_row[c] for c in TRACE_COLUMNS], dtype=float)
    return dict(zip(TRACE_COLUMNS, row.tolist())), _flags_from(row, prev, state.step_index)


def run(
    fld,
    ctrl=StepControl(),
    *,
    sink=None,
    trace_every=1,
    snapshot_every=0,
    on_snapshot=None,
    max_steps=None,
    max_flags=10000,
):
    """Evolve until osc(rho) < ctrl.osc_tol or t >= ctrl.t_max.

    Monitors run after every accepted step.  Every ``trace_every``-th row,
    plus the first and the last, is appended to the returned trace and
    forwarded to ``sink.write_row``.  ``on_snapshot`` receives a FlowState
    every ``snapshot_every`` steps when that is positive.  At most
    ``max_flags`` flags are kept individually; ``flag_counts`` counts all.
    """
    if not isinstance(trace_every, (int, np.integer)) or trace_every < 1:
        raise ConfigError(f"trace_every must be an integer >= 1, got {trace_every!r}")
    grid = fld.grid
    n, h = grid.n, grid.dpsi
    om = omega(n)
    rho = np.array(fld.rho)
    t = fld.time
    k1 = np.empty(grid.m)
    acc = np.empty(_kernels.HEAD + 3 * (n + 1))
    d_max, ok = _kernels.eval_state(rho, grid.cot, grid.quad_w, h, n, k1, acc)
    if not ok:
        node, km, ko = _first_bad(rho, grid)
        raise ShapeError(
            f"initial surface is not uniformly convex at node {node} (kappa_m={km!r}, kappa_o={ko!r})",
            hypothesis="convexity",
            node=node,
        )
    row = np.empty(_kernels.ROW_LEN)
    rho_mean, r_eq = _kernels.row_from_integrals(acc, n, om, t, 0.0, float(rho.mean()), *XI_BRACKET, row)
    trace = FlowTrace()
    flags = _flags_from(row, None, 0)
    counts = np.zeros(_kernels.N_FLAGS, dtype=np.int64)
    for f in flags:
        counts[FLAG_NAMES.index(f.name)] += 1

    def keep(r):
        trace.append(r)
        if sink is not None:
            sink.write_row(r)

    keep(row)
    if on_snapshot is not None and snapshot_every > 0:
        on_snapshot(FlowState(RadialField(grid, rho, t), 0))

    block = snapshot_every if snapshot_every > 0 else _BLOCK
    rows = np.empty((block // trace_every + 1, _kernels.ROW_LEN))
    cap = max(max_flags, 1)
    f_step, f_code = np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64)
    f_t, f_amount = np.empty(cap), np.empty(cap)
    prev = row.copy()
    steps = 0
    status = _kernels.CONVERGED if row[_kernels.ROW_OSC] < ctrl.osc_tol else _kernels.RUNNING
    while status == _kernels.RUNNING:
        budget = block if max_steps is None else min(block, max_steps - steps)
        if budget <= 0:
            break
        status, done, t, d_max, r_eq, mean, n_rows, n_fl = _kernels.evolve(
            rho, k1, d_max, prev, grid.cot, grid.quad_w, h, n, om, t, ctrl.t_max,
            ctrl.cfl_safety, ctrl.dt_min, ctrl.dt_max, ctrl.osc_tol, budget, steps,
            trace_every, r_eq, *XI_BRACKET, MONITOR_SLACK, MONITOR_SLACK, MAX_RETRIES,
            rows, f_step, f_t, f_code, f_amount, counts,
        )
        steps += done
        if done:
            rho_mean = mean
        room = max(max_flags - len(flags), 0)
        flags += [
            MonitorFlag(int(f_step[i]), float(f_t[i]), FLAG_NAMES[f_code[i]], float(f_amount[i]))
            for i in range(min(n_fl, room))
        ]
        for r in rows[:n_rows]:
            keep(r)
        if status == _kernels.DEGENERATE:
            raise DegeneracyError(f"step {steps + 1} at t={t!r} failed after {MAX_RETRIES} dt halvings")
        if status == _kernels.CFL_COLLAPSE:
            raise CFLCollapseError(
                f"stable dt {ctrl.cfl_safety * h * h / d_max!r} below dt_min {ctrl.dt_min!r} at t={t!r}"
            )
        if on_snapshot is not None and snapshot_every > 0 and done:
            on_snapshot(FlowState(RadialField(grid, rho, t), steps))
    if trace.column("t")[-1] < t:
        keep(prev)
    total = int(counts.sum())
    if total:
        log.warning("%d monitor flags raised; first: %s", total, flags[0])
    return RunResult(
        FlowState(RadialField(grid, rho, t), steps),
        trace,
        status == _kernels.CONVERGED,
        float(rho_mean),
        flags,
        steps,
        {name: int(c) for name, c in zip(FLAG_NAMES, counts) if c},
    )


def rate_fit(trace, tail_fraction=0.5, floor=1e-14):
    """Exponential decay rate of grad_gamma_sq_max over the tail of a run.

    Rows are truncated at the first value at or below ``floor``; the last
    ``tail_fraction`` of the remainder is fitted by least squares in
    log-space.  Returns (alpha, r_squared).
    """
    t = trace.column("t")
    g = trace.column("grad_gamma_sq_max")
    below = np.flatnonzero(~(g > floor))
    end = below[0] if below.size else g.size
    start = int(math.floor(end * (1.0 - tail_fraction)))
    if end - start < 10:
        raise InsufficientDataError(f"only {end - start} usable rows for the rate fit")
    fit = stats.linregress(t[start:end], np.log(g[start:end]))
    return -fit.slope, fit.rvalue ** 2


def advance(fld, t_end, cfl_safety=0.2, dt_max=1e-2):
    """Heun-integrate to exactly ``t_end`` without monitors; returns a RadialField."""
    grid = fld.grid
    rho = np.array(fld.rho)
    status, _ = _kernels.heun_to(
        rho, grid.cot, grid.dpsi, grid.n, fld.time, t_end, cfl_safety, dt_max, MAX_RETRIES
    )
    if status:
        raise DegeneracyError(f"integration to t={t_end!r} lost convexity")
    return RadialField(grid, rho, t_end)


def solve_reference(fld, t_end, rtol=1e-10, atol=1e-12):
    """Method-of-lines reference with an implicit BDF integrator.

    Uses the same spatial discretisation as the Heun path, so the result
    differs from it only by time-integration error.
    """
    grid = fld.grid

    def f(_t, y):
        out, _, ok = _kernels.rhs(np.ascontiguousarray(y), grid.cot, grid.dpsi, grid.n)
        if not ok:
            raise ConvexityLoss(*_first_bad(y, grid))
        return out

    pattern = sparse.diags([1, 1, 1], [-1, 0, 1], shape=(grid.m, grid.m))
    sol = sp_integrate.solve_ivp(
        f, (fld.time, t_end), np.array(fld.rho), method="BDF",
        rtol=rtol, atol=atol, jac_sparsity=pattern,
    )
    if not sol.success:
        raise DegeneracyError(f"reference solve failed: {sol.message}")
    return RadialField(grid, sol.y[:, -1], t_end)
