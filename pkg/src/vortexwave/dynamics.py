"""Time integration of the coupled marker-cloud / point-vortex system.

Markers move in the blob-regularized cloud field plus the guarded vortex
field; vortices move in the cloud field plus exact pairwise interaction
(no self-term).  Every right-hand side is assembled in a fixed order so
repeated runs are bitwise identical, and every evaluation of the vortex
kernel inside the guard radius is counted: a healthy run reports zero
guard events, so the guarded core provably never activated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as _field
from typing import Callable

import numpy as np
from numba import njit, prange

from vortexwave.config import ScenarioConfig
from vortexwave.field import FloatArray, Grid, MarkerCloud, _as_points, _blob_sum
from vortexwave.kernels import TWO_PI, biot_savart

COLLISION_DIST = 1e-10


class SimulationError(RuntimeError):
    """Integration produced non-finite state."""


class CollisionError(RuntimeError):
    """Two point vortices closed to within the collision threshold."""


@dataclass(frozen=True)
class PointVortexState:
    pos: tuple[float, float]
    intensity: float


@dataclass(frozen=True)
class SimState:
    """Instantaneous system state.  Arrays are copied and frozen."""

    time: float
    cloud: MarkerCloud
    vortex_pos: FloatArray  # (V, 2)
    vortex_intensity: FloatArray  # (V,)
    mode: str
    guard_events: int = 0

    def __post_init__(self):
        vpos = np.ascontiguousarray(self.vortex_pos, dtype=np.float64).reshape(-1, 2)
        dval = np.ascontiguousarray(self.vortex_intensity, dtype=np.float64).reshape(-1)
        if len(vpos) != len(dval):
            raise ValueError("vortex_pos and vortex_intensity must have matching lengths")
        if not np.all(np.isfinite(vpos)) or not np.all(np.isfinite(dval)):
            raise ValueError("vortex state must be finite")
        vpos = vpos.copy()
        dval = dval.copy()
        vpos.setflags(write=False)
        dval.setflags(write=False)
        object.__setattr__(self, "vortex_pos", vpos)
        object.__setattr__(self, "vortex_intensity", dval)

    @property
    def n_vortices(self) -> int:
        return len(self.vortex_intensity)

    @property
    def vortices(self) -> tuple[PointVortexState, ...]:
        return tuple(
            PointVortexState((float(p[0]), float(p[1])), float(d))
            for p, d in zip(self.vortex_pos, self.vortex_intensity)
        )


@njit(parallel=True, cache=True)
def _vortex_sum(targets, vpos, dvals, eps, out, hits):  # pragma: no cover - jitted
    nt = targets.shape[0]
    nv = vpos.shape[0]
    eps2 = eps * eps
    for i in prange(nt):
        tx = targets[i, 0]
        ty = targets[i, 1]
        ux = 0.0
        uy = 0.0
        h = 0
        for j in range(nv):
            dx = tx - vpos[j, 0]
            dy = ty - vpos[j, 1]
            r2 = dx * dx + dy * dy
            if r2 >= eps2:
                c = dvals[j] / (TWO_PI * r2)
            else:
                h += 1
                c = dvals[j] * (2.0 - r2 / eps2) / (TWO_PI * eps2)
            ux -= dy * c
            uy += dx * c
        out[i, 0] = ux
        out[i, 1] = uy
        hits[i] = h


def _vortex_eval(pts: FloatArray, vpos: FloatArray, dvals: FloatArray, r_guard: float):
    out = np.empty_like(pts)
    hits = np.empty(len(pts), dtype=np.int64)
    _vortex_sum(pts, vpos, dvals, r_guard, out, hits)
    return out, int(hits.sum())


def vortex_field(state: SimState, x: FloatArray, r_guard: float) -> FloatArray:
    """Velocity induced by the point vortices alone, guarded inside r_guard."""
    pts = _as_points(x)
    flat = np.ascontiguousarray(pts.reshape(-1, 2))
    out, _ = _vortex_eval(flat, state.vortex_pos, state.vortex_intensity, r_guard)
    return out.reshape(pts.shape)


def total_field(state: SimState, x: FloatArray, r_guard: float) -> FloatArray:
    """Cloud blob field plus guarded vortex field at arbitrary points.

    The return value is exactly blob + vortex of the separately evaluated
    parts (one vector addition, fixed operand order).
    """
    pts = _as_points(x)
    flat = np.ascontiguousarray(pts.reshape(-1, 2))
    u = np.zeros_like(flat)
    if state.cloud.n > 0:
        out = np.empty_like(flat)
        _blob_sum(flat, state.cloud.pos, state.cloud.gamma, state.cloud.blob_delta**2, out)
        u = out
    if state.n_vortices > 0:
        vf, _ = _vortex_eval(flat, state.vortex_pos, state.vortex_intensity, r_guard)
        u = u + vf
    return u.reshape(pts.shape)


def _pairwise_vortex(vpos: FloatArray, dvals: FloatArray) -> FloatArray:
    """Exact mutual advection of the vortices, skipping the self-term."""
    nv = len(dvals)
    out = np.zeros((nv, 2))
    for i in range(nv):
        for j in range(nv):
            if i == j:
                continue
            sep = vpos[i] - vpos[j]
            if math.hypot(sep[0], sep[1]) < COLLISION_DIST:
                raise CollisionError(
                    f"vortices {j} and {i} within {COLLISION_DIST:g} of each other"
                )
            out[i] += dvals[j] * biot_savart(sep)
    return out


def _marker_dot(
    mpos: FloatArray,
    vpos: FloatArray,
    cloud: MarkerCloud,
    dvals: FloatArray,
    r_guard: float,
) -> tuple[FloatArray, int]:
    hits = 0
    mdot = np.zeros_like(mpos)
    if cloud.n > 0:
        _blob_sum(mpos, mpos, cloud.gamma, cloud.blob_delta**2, mdot)
    if len(dvals) > 0:
        vf, hits = _vortex_eval(mpos, vpos, dvals, r_guard)
        mdot = mdot + vf
    return mdot, hits


def _vortex_dot(
    mpos: FloatArray,
    vpos: FloatArray,
    cloud: MarkerCloud,
    dvals: FloatArray,
    mode: str,
) -> FloatArray:
    vdot = np.zeros_like(vpos)
    if mode == "fixed":
        return vdot
    if cloud.n > 0 and len(dvals) > 0:
        _blob_sum(vpos, mpos, cloud.gamma, cloud.blob_delta**2, vdot)
    if len(dvals) > 1:
        vdot = vdot + _pairwise_vortex(vpos, dvals)
    return vdot


def _rhs(
    mpos: FloatArray,
    vpos: FloatArray,
    cloud: MarkerCloud,
    dvals: FloatArray,
    r_guard: float,
    mode: str,
) -> tuple[FloatArray, FloatArray, int]:
    """Stage velocities for markers and vortices at given positions."""
    mdot, hits = _marker_dot(mpos, vpos, cloud, dvals, r_guard)
    vdot = _vortex_dot(mpos, vpos, cloud, dvals, mode)
    return mdot, vdot, hits


def vortex_rhs(state: SimState, i: int) -> FloatArray:
    """Velocity of vortex i: cloud field plus exact interaction with the
    other vortices.  Fixed mode pins the vortex (zero velocity)."""
    if not 0 <= i < state.n_vortices:
        raise IndexError(f"vortex index {i} out of range")
    vdot = _vortex_dot(
        state.cloud.pos, state.vortex_pos, state.cloud, state.vortex_intensity, state.mode
    )
    return vdot[i]


def marker_rhs(state: SimState, k: int, r_guard: float) -> FloatArray:
    """Velocity of marker k under the total (cloud + guarded vortex) field."""
    if not 0 <= k < state.cloud.n:
        raise IndexError(f"marker index {k} out of range")
    return total_field(state, state.cloud.pos[k], r_guard)


def rk4_step(state: SimState, dt: float, r_guard: float) -> SimState:
    """One classical Runge-Kutta step of markers and vortices together.

    dt may be negative (reversibility probes).  Guard events from all four
    stages accumulate onto the returned state.
    """
    cloud = state.cloud
    dvals = state.vortex_intensity
    x = cloud.pos
    z = state.vortex_pos

    m1, v1, h1 = _rhs(x, z, cloud, dvals, r_guard, state.mode)
    m2, v2, h2 = _rhs(x + (0.5 * dt) * m1, z + (0.5 * dt) * v1, cloud, dvals, r_guard, state.mode)
    m3, v3, h3 = _rhs(x + (0.5 * dt) * m2, z + (0.5 * dt) * v2, cloud, dvals, r_guard, state.mode)
    m4, v4, h4 = _rhs(x + dt * m3, z + dt * v3, cloud, dvals, r_guard, state.mode)

    sixth = dt / 6.0
    new_x = x + sixth * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    new_z = z + sixth * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
    return SimState(
        time=state.time + dt,
        cloud=cloud.with_positions(new_x),
        vortex_pos=new_z,
        vortex_intensity=dvals,
        mode=state.mode,
        guard_events=state.guard_events + h1 + h2 + h3 + h4,
    )


# ------------------------------------------------------------ scenarios


def init_scenario(config: ScenarioConfig) -> SimState:
    """Markers on the global lattice ((i+1/2)h, (j+1/2)h) restricted to the
    patches, weights h^2, omega from each patch profile; vortices from the
    config.  The lattice is anchored at the origin, not at the patches, so
    refined or swept scenarios sample nested point sets."""
    h = config.h
    pts_list = []
    omega_list = []
    if config.patches:
        xlo = min(p.center[0] - p.outer_extent for p in config.patches)
        xhi = max(p.center[0] + p.outer_extent for p in config.patches)
        ylo = min(p.center[1] - p.outer_extent for p in config.patches)
        yhi = max(p.center[1] + p.outer_extent for p in config.patches)
        ix = np.arange(math.floor(xlo / h) - 1, math.ceil(xhi / h) + 1)
        iy = np.arange(math.floor(ylo / h) - 1, math.ceil(yhi / h) + 1)
        gx, gy = np.meshgrid((ix + 0.5) * h, (iy + 0.5) * h, indexing="ij")
        lattice = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        taken = np.zeros(len(lattice), dtype=bool)
        for patch in config.patches:
            mask = patch.contains(lattice) & ~taken
            if not mask.any():
                continue
            pts = lattice[mask]
            pts_list.append(pts)
            omega_list.append(patch.omega_at(pts))
            taken |= mask
    if pts_list:
        pos = np.concatenate(pts_list)
        omega = np.concatenate(omega_list)
    else:
        pos = np.zeros((0, 2))
        omega = np.zeros(0)
    cloud = MarkerCloud(pos, omega, np.full(len(omega), h * h), config.blob_delta)
    vpos = np.array([v.pos for v in config.vortices], dtype=np.float64).reshape(-1, 2)
    dvals = np.array([v.intensity for v in config.vortices], dtype=np.float64)
    return SimState(0.0, cloud, vpos, dvals, config.mode)


def twin_states(config: ScenarioConfig, eta: float | None = None) -> tuple[SimState, SimState]:
    """Base state plus a perturbed twin: first vortex shifted by (eta, 0)
    and, when output.jitter > 0, markers jittered by a seeded uniform draw.
    eta = 0 with zero jitter yields two bitwise-identical states."""
    eta = config.output.eta if eta is None else eta
    base = init_scenario(config)
    vpos = base.vortex_pos.copy()
    if eta != 0.0:
        if len(vpos) == 0:
            raise ValueError("twin perturbation eta needs at least one vortex")
        vpos[0, 0] += eta
    pos = base.cloud.pos
    if config.output.jitter > 0.0:
        rng = np.random.default_rng(config.output.seed)
        pos = pos + rng.uniform(-config.output.jitter, config.output.jitter, pos.shape)
    twin = SimState(
        0.0,
        base.cloud.with_positions(pos),
        vpos,
        base.vortex_intensity,
        config.mode,
    )
    return base, twin


def norm_grid(config: ScenarioConfig) -> Grid:
    """Deposit grid for Lp norms: spacing norm_spacing, half-width norm_half."""
    half = config.output.norm_half
    s = config.output.norm_spacing
    cx, cy = config.support_center
    n = 2 * int(round(half / s)) + 1
    return Grid((cx - half, cy - half), s, n, n)


def diff_grid(config: ScenarioConfig) -> Grid:
    """Velocity-difference grid: diff_n^2 nodes over half-width diff_half."""
    half = config.output.diff_half
    n = config.output.diff_n
    cx, cy = config.support_center
    return Grid((cx - half, cy - half), 2.0 * half / (n - 1), n, n)


# ----------------------------------------------------------------- runs


@dataclass(frozen=True)
class Snapshot:
    state: SimState
    record: object  # diagnostics record, measured at snapshot time


@dataclass(frozen=True)
class Trajectory:
    config: ScenarioConfig
    snapshots: tuple[Snapshot, ...]

    @property
    def times(self) -> FloatArray:
        return np.array([s.state.time for s in self.snapshots])

    @property
    def records(self) -> list:
        return [s.record for s in self.snapshots]

    @property
    def guard_total(self) -> int:
        return self.snapshots[-1].state.guard_events


def run(
    config: ScenarioConfig,
    initial: SimState | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> Trajectory:
    """Integrate the scenario, measuring diagnostics every stride steps.

    Aborts with CollisionError or SimulationError naming the failing step.
    t_end = 0 yields a single measured snapshot of the initial state.
    """
    from vortexwave.diagnostics import measure_snapshot

    state = init_scenario(config) if initial is None else initial
    grid = norm_grid(config)
    stride = config.output.stride
    n_steps = config.n_steps
    snaps = [Snapshot(state, measure_snapshot(state, config, grid))]
    for k in range(1, n_steps + 1):
        try:
            state = rk4_step(state, config.dt, config.r_guard)
        except CollisionError as exc:
            raise CollisionError(f"step {k} (t = {k * config.dt:.8g}): {exc}") from exc
        except ValueError as exc:
            raise SimulationError(f"step {k} (t = {k * config.dt:.8g}): {exc}") from exc
        if not np.all(np.isfinite(state.vortex_pos)):
            raise SimulationError(f"step {k}: non-finite vortex position")
        if k % stride == 0 or k == n_steps:
            snaps.append(Snapshot(state, measure_snapshot(state, config, grid)))
        if progress is not None:
            progress(k, n_steps)
    return Trajectory(config, tuple(snaps))
