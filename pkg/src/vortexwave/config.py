"""Scenario configuration: parsing, validation, resolution and emission.

Configs are TOML with sections [scenario], [vortices], [numerics],
[diagnostics] and [output].  Parsing fills defaults and resolves every
"auto" value (0 sentinels) to a concrete number, so an emitted config
re-parses to an identical ScenarioConfig (manifest round-trip law).
Unknown keys are rejected by name; all validation errors raise
ConfigError.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomlkit

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


MODES = ("moving", "fixed", "multi")
PATCH_KINDS = ("disk", "annulus")


@dataclass(frozen=True)
class PatchSpec:
    """One vorticity patch: a constant disk or a profiled annulus.

    The annulus profile is value + radial_slope*(r - inner_radius), angularly
    modulated by (1 + cos_amplitude*cos(cos_harmonic*theta)); disks are
    strictly constant.  Harmonic 2 gives a strain field in the interior,
    harmonic 1 a uniform drift.
    """

    kind: str
    center: tuple[float, float]
    value: float
    radius: float = 0.0
    inner_radius: float = 0.0
    outer_radius: float = 0.0
    radial_slope: float = 0.0
    cos_amplitude: float = 0.0
    cos_harmonic: int = 1

    @property
    def outer_extent(self) -> float:
        return self.radius if self.kind == "disk" else self.outer_radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        if self.kind == "disk":
            return r <= self.radius
        return (r > self.inner_radius) & (r <= self.outer_radius)

    def omega_at(self, pts: np.ndarray) -> np.ndarray:
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        r = np.hypot(dx, dy)
        if self.kind == "disk":
            return np.full(len(pts), self.value)
        base = self.value + self.radial_slope * (r - self.inner_radius)
        if self.cos_amplitude != 0.0:
            theta = np.arctan2(dy, dx)
            base = base * (1.0 + self.cos_amplitude * np.cos(self.cos_harmonic * theta))
        return base

    def constant_disk_radius_at(self, point: tuple[float, float]) -> float:
        """Largest ball around `point` on which this patch is constant; 0 if
        the point is outside or the patch is not constant."""
        if self.kind != "disk" or self.radial_slope or self.cos_amplitude:
            return 0.0
        d = math.hypot(point[0] - self.center[0], point[1] - self.center[1])
        return max(self.radius - d, 0.0)


@dataclass(frozen=True)
class VortexSpec:
    pos: tuple[float, float]
    intensity: float


@dataclass(frozen=True)
class DiagnosticsSpec:
    """Per-run check toggles and their thresholds (exit-code gates)."""

    constancy: bool = False
    constancy_tol: float = 1e-10
    refine_check: bool = False
    refine_tol: float = 0.2
    lp_check: bool = False
    lp_tol: float = 0.02
    support_check: bool = False
    margin_check: bool = False
    pair_return: bool = False
    pair_return_tol: float = 1e-6
    profile_check: bool = False
    profile_tol: float = 0.02
    hole_check: bool = False
    hole_tol: float = 1e-12
    control_check: bool = False
    control_tol: float = 1e-3
    margin_family: tuple[float, ...] = ()
    exponent_min: float = 0.8
    harmonic_check: bool = False
    harmonic_rel: float = 1e-3
    harmonic_floor: float = 1e-8
    harmonic_samples: int = 128
    twin_ratio_min: float = 5.0
    eta_ladder: tuple[float, ...] = ()
    pair_distance_check: bool = False
    pair_distance_factor: float = 0.5


@dataclass(frozen=True)
class OutputSpec:
    """Snapshot stride, quadrature grids and twin perturbation controls."""

    stride: int = 0  # 0 = auto: about 100 snapshots
    norm_half: float = 0.0  # 0 = auto: 2 x initial support radius
    norm_spacing: float = 0.0  # 0 = auto: lattice spacing h
    diff_half: float = 0.0  # 0 = auto: 4 x initial support radius
    diff_n: int = 161
    eta: float = 0.0
    jitter: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str
    patches: tuple[PatchSpec, ...]
    vortices: tuple[VortexSpec, ...]
    h: float
    dt: float
    t_end: float
    blob_delta: float = 0.0  # 0 = auto: 2h
    r_guard: float = 0.0  # 0 = auto: h/2
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt)) if self.t_end > 0.0 else 0

    @property
    def support_center(self) -> tuple[float, float]:
        if not self.patches:
            return (0.0, 0.0)
        cx = sum(p.center[0] for p in self.patches) / len(self.patches)
        cy = sum(p.center[1] for p in self.patches) / len(self.patches)
        return (cx, cy)

    @property
    def initial_support_radius(self) -> float:
        if not self.patches:
            return 1.0
        c = self.support_center
        return max(
            math.hypot(p.center[0] - c[0], p.center[1] - c[1]) + p.outer_extent
            for p in self.patches
        )


# ---------------------------------------------------------------- parsing

_SCALAR = (int, float)

_PATCH_KEYS = {
    "kind",
    "center",
    "value",
    "radius",
    "inner_radius",
    "outer_radius",
    "radial_slope",
    "cos_amplitude",
    "cos_harmonic",
}
_VORTEX_KEYS = {"pos", "intensity"}
_SCENARIO_KEYS = {"mode", "patches"}
_NUMERICS_KEYS = {"h", "dt", "t_end", "blob_delta", "r_guard"}
_DIAG_KEYS = {f.name for f in dataclasses.fields(DiagnosticsSpec)}
_OUTPUT_KEYS = {f.name for f in dataclasses.fields(OutputSpec)}
_TOP_KEYS = {"scenario", "vortices", "numerics", "diagnostics", "output", "meta"}


def _reject_unknown(section: str, table: dict, allowed: set[str]) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{section}]")


def _real(section: str, table: dict, key: str, default=None) -> float:
    if key not in table:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, _SCALAR):
        raise ConfigError(f"key '{key}' in [{section}] must be a number")
    return float(v)


def _pair(section: str, table: dict, key: str) -> tuple[float, float]:
    v = table.get(key)
    if not isinstance(v, list) or len(v) != 2 or not all(isinstance(c, _SCALAR) for c in v):
        raise ConfigError(f"key '{key}' in [{section}] must be a pair [x, y]")
    return (float(v[0]), float(v[1]))


def _parse_patch(i: int, table) -> PatchSpec:
    section = f"scenario.patches[{i}]"
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    _reject_unknown(section, table, _PATCH_KEYS)
    kind = table.get("kind")
    if kind not in PATCH_KINDS:
        raise ConfigError(f"[{section}] kind must be one of {PATCH_KINDS}, got {kind!r}")
    harmonic = table.get("cos_harmonic", 1)
    if isinstance(harmonic, bool) or not isinstance(harmonic, int) or harmonic < 1:
        raise ConfigError(f"[{section}] cos_harmonic must be a positive integer")
    patch = PatchSpec(
        kind=kind,
        center=_pair(section, table, "center"),
        value=_real(section, table, "value"),
        radius=_real(section, table, "radius", 0.0),
        inner_radius=_real(section, table, "inner_radius", 0.0),
        outer_radius=_real(section, table, "outer_radius", 0.0),
        radial_slope=_real(section, table, "radial_slope", 0.0),
        cos_amplitude=_real(section, table, "cos_amplitude", 0.0),
        cos_harmonic=harmonic,
    )
    if kind == "disk":
        if not patch.radius > 0.0:
            raise ConfigError(f"[{section}] disk needs radius > 0")
        if patch.inner_radius or patch.outer_radius:
            raise ConfigError(f"[{section}] disk takes no inner/outer radius")
        if patch.radial_slope or patch.cos_amplitude:
            raise ConfigError(f"[{section}] disks are constant; use an annulus for profiles")
    else:
        if not (0.0 <= patch.inner_radius < patch.outer_radius):
            raise ConfigError(f"[{section}] annulus needs 0 <= inner_radius < outer_radius")
        if patch.radius:
            raise ConfigError(f"[{section}] annulus takes no disk radius")
        if abs(patch.cos_amplitude) >= 1.0:
            raise ConfigError(f"[{section}] cos_amplitude must lie in (-1, 1)")
    return patch


def _parse_vortex(i: int, table) -> VortexSpec:
    section = f"vortices[{i}]"
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    _reject_unknown(section, table, _VORTEX_KEYS)
    if "intensity" not in table:
        raise ConfigError(f"missing required key 'intensity' in [{section}]")
    return VortexSpec(pos=_pair(section, table, "pos"), intensity=_real(section, table, "intensity"))


def _parse_spec_table(section: str, table: dict, cls, allowed: set[str]):
    _reject_unknown(section, table, allowed)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in table:
            continue
        v = table[f.name]
        if f.type == "bool":
            if not isinstance(v, bool):
                raise ConfigError(f"key '{f.name}' in [{section}] must be true/false")
            kwargs[f.name] = v
        elif f.type == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"key '{f.name}' in [{section}] must be an integer")
            kwargs[f.name] = v
        elif f.type == "float":
            kwargs[f.name] = _real(section, table, f.name)
        else:  # tuple of reals
            if not isinstance(v, list) or not all(
                isinstance(c, _SCALAR) and not isinstance(c, bool) for c in v
            ):
                raise ConfigError(f"key '{f.name}' in [{section}] must be a list of numbers")
            kwargs[f.name] = tuple(float(c) for c in v)
    return cls(**kwargs)


def parse_config(text: str) -> ScenarioConfig:
    """Parse, validate and resolve a TOML scenario config."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:  # line info included by the parser
        raise ConfigError(f"config parse error: {exc}") from exc

    _reject_unknown("top level", data, _TOP_KEYS)
    scenario = data.get("scenario")
    if not isinstance(scenario, dict):
        raise ConfigError("missing [scenario] section")
    _reject_unknown("scenario", scenario, _SCENARIO_KEYS)
    mode = scenario.get("mode")
    if mode not in MODES:
        raise ConfigError(f"[scenario] mode must be one of {MODES}, got {mode!r}")
    raw_patches = scenario.get("patches", [])
    if not isinstance(raw_patches, list):
        raise ConfigError("[scenario] patches must be an array of tables")
    patches = tuple(_parse_patch(i, p) for i, p in enumerate(raw_patches))

    raw_vortices = data.get("vortices", [])
    if not isinstance(raw_vortices, list):
        raise ConfigError("[vortices] must be an array of tables")
    vortices = tuple(_parse_vortex(i, v) for i, v in enumerate(raw_vortices))

    numerics = data.get("numerics")
    if not isinstance(numerics, dict):
        raise ConfigError("missing [numerics] section")
    _reject_unknown("numerics", numerics, _NUMERICS_KEYS)
    h = _real("numerics", numerics, "h")
    dt = _real("numerics", numerics, "dt")
    t_end = _real("numerics", numerics, "t_end")
    blob_delta = _real("numerics", numerics, "blob_delta", 0.0)
    r_guard = _real("numerics", numerics, "r_guard", 0.0)

    diagnostics = _parse_spec_table(
        "diagnostics", data.get("diagnostics", {}), DiagnosticsSpec, _DIAG_KEYS
    )
    output = _parse_spec_table("output", data.get("output", {}), OutputSpec, _OUTPUT_KEYS)

    config = ScenarioConfig(
        mode=mode,
        patches=patches,
        vortices=vortices,
        h=h,
        dt=dt,
        t_end=t_end,
        blob_delta=blob_delta,
        r_guard=r_guard,
        diagnostics=diagnostics,
        output=output,
    )
    return _resolve(_validate(config))


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


# ------------------------------------------------------- validate/resolve


def _patches_overlap(a: PatchSpec, b: PatchSpec) -> bool:
    d = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
    a_in = 0.0 if a.kind == "disk" else a.inner_radius
    b_in = 0.0 if b.kind == "disk" else b.inner_radius
    # radial supports (a_in, a_out] about each center; open/closed chosen so
    # that a disk of radius R and an annulus starting at inner R are disjoint
    if d >= a.outer_extent + b.outer_extent:
        return False
    if d + a.outer_extent <= b_in or d + b.outer_extent <= a_in:
        return False  # one lies entirely inside the other's hole
    return True


def _validate(config: ScenarioConfig) -> ScenarioConfig:
    if not config.h > 0.0:
        raise ConfigError("[numerics] h must be > 0")
    if not config.dt > 0.0:
        raise ConfigError("[numerics] dt must be > 0")
    if config.t_end < 0.0:
        raise ConfigError("[numerics] t_end must be >= 0")
    if config.blob_delta < 0.0 or config.r_guard < 0.0:
        raise ConfigError("[numerics] blob_delta and r_guard must be >= 0")

    for i, a in enumerate(config.patches):
        for b in config.patches[i + 1 :]:
            if _patches_overlap(a, b):
                raise ConfigError("[scenario] patches overlap")

    n_v = len(config.vortices)
    if config.mode == "fixed":
        if n_v != 1:
            raise ConfigError("[vortices] fixed mode needs exactly one vortex")
        if config.vortices[0].pos != (0.0, 0.0):
            raise ConfigError("[vortices] fixed mode pins the vortex at the origin")
    elif config.mode == "moving":
        if n_v > 1:
            raise ConfigError("[vortices] moving mode takes at most one vortex (use multi)")
    else:  # multi
        if n_v < 2:
            raise ConfigError("[vortices] multi mode needs at least two vortices")
        signs = {math.copysign(1.0, v.intensity) for v in config.vortices}
        if any(v.intensity == 0.0 for v in config.vortices) or len(signs) > 1:
            raise ConfigError(
                "[vortices] multi mode requires all intensities to share one sign"
            )
    for i, a in enumerate(config.vortices):
        for b in config.vortices[i + 1 :]:
            if math.hypot(a.pos[0] - b.pos[0], a.pos[1] - b.pos[1]) < 1e-10:
                raise ConfigError("[vortices] coincident vortex positions")

    d = config.diagnostics
    if d.constancy:
        if not config.vortices:
            raise ConfigError("[diagnostics] constancy check needs at least one vortex")
        for i, (alpha, cap) in enumerate(constancy_targets(config)):
            if cap <= 0.0:
                raise ConfigError(
                    f"[diagnostics] vortex {i} lies outside every constant disk patch "
                    "but the constancy check is requested"
                )
    if d.profile_check:
        ok = (
            not config.vortices
            and len(config.patches) == 1
            and config.patches[0].kind == "disk"
        )
        if not ok:
            raise ConfigError(
                "[diagnostics] profile_check needs a single disk patch and no vortices"
            )
    if d.pair_return and (config.patches or n_v != 2):
        raise ConfigError("[diagnostics] pair_return needs two vortices and no patches")
    if d.margin_check and n_v == 0:
        raise ConfigError("[diagnostics] margin_check needs at least one vortex")
    if d.pair_distance_check and n_v < 2:
        raise ConfigError("[diagnostics] pair_distance_check needs at least two vortices")
    if d.hole_check and config.mode != "fixed":
        raise ConfigError("[diagnostics] hole_check needs fixed mode")
    if d.margin_family and not any(p.kind == "annulus" for p in config.patches):
        raise ConfigError("[diagnostics] margin_family needs an annulus patch to sweep")

    o = config.output
    if o.stride < 0 or o.diff_n < 2 or o.seed < 0:
        raise ConfigError("[output] stride/diff_n/seed out of range")
    if o.eta < 0.0 or o.jitter < 0.0:
        raise ConfigError("[output] eta and jitter must be >= 0")
    if min(o.norm_half, o.norm_spacing, o.diff_half) < 0.0:
        raise ConfigError("[output] grid sizes must be >= 0")
    return config


def _resolve(config: ScenarioConfig) -> ScenarioConfig:
    blob_delta = config.blob_delta or 2.0 * config.h
    r_guard = config.r_guard or config.h / 2.0
    r_sup = config.initial_support_radius
    o = config.output
    stride = o.stride or max(1, config.n_steps // 100)
    output = dataclasses.replace(
        o,
        stride=stride,
        norm_half=o.norm_half or 2.0 * r_sup,
        norm_spacing=o.norm_spacing or config.h,
        diff_half=o.diff_half or 4.0 * r_sup,
    )
    return dataclasses.replace(
        config, blob_delta=blob_delta, r_guard=r_guard, output=output
    )


def constancy_targets(config: ScenarioConfig) -> tuple[tuple[float, float], ...]:
    """Per vortex: (alpha, cap) of the best constant disk around it.

    alpha is the patch value, cap the largest initial radius on which the
    vorticity is identically alpha; cap = 0 marks "no constant patch".
    """
    out = []
    for v in config.vortices:
        best = (0.0, 0.0)
        for p in config.patches:
            cap = p.constant_disk_radius_at(v.pos)
            if cap > best[1]:
                best = (p.value, cap)
        out.append(best)
    return tuple(out)


def refined(config: ScenarioConfig) -> ScenarioConfig:
    """Same scenario at h/2.  dt is quartered (near-vortex rotation rate
    scales like 1/h^2) and the stride adjusted so snapshot times match.
    r_guard stays fixed: it defines the regularized system being solved,
    not the discretization."""
    o = config.output
    return dataclasses.replace(
        config,
        h=config.h / 2.0,
        dt=config.dt / 4.0,
        blob_delta=config.blob_delta / 2.0,
        output=dataclasses.replace(o, stride=o.stride * 4, norm_spacing=config.h / 2.0),
    )


def with_inner_radius(config: ScenarioConfig, inner: float) -> ScenarioConfig:
    """Replace the first annulus patch's inner radius (margin-family sweeps)."""
    patches = list(config.patches)
    for i, p in enumerate(patches):
        if p.kind == "annulus":
            patches[i] = dataclasses.replace(p, inner_radius=inner)
            return dataclasses.replace(config, patches=tuple(patches))
    raise ConfigError("no annulus patch to sweep")


def without_vortex_intensity(config: ScenarioConfig) -> ScenarioConfig:
    """Zero all vortex intensities (control runs)."""
    vortices = tuple(dataclasses.replace(v, intensity=0.0) for v in config.vortices)
    return dataclasses.replace(config, vortices=vortices)


# ------------------------------------------------------------- emission


def _patch_table(p: PatchSpec) -> dict:
    t = {"kind": p.kind, "center": list(p.center), "value": p.value}
    if p.kind == "disk":
        t["radius"] = p.radius
    else:
        t.update(
            inner_radius=p.inner_radius,
            outer_radius=p.outer_radius,
            radial_slope=p.radial_slope,
            cos_amplitude=p.cos_amplitude,
            cos_harmonic=p.cos_harmonic,
        )
    return t


def emit_config(config: ScenarioConfig, meta: dict | None = None) -> str:
    """Serialize a resolved config (plus optional [meta]) as TOML text."""
    doc: dict = {
        "scenario": {
            "mode": config.mode,
            "patches": [_patch_table(p) for p in config.patches],
        },
        "vortices": [{"pos": list(v.pos), "intensity": v.intensity} for v in config.vortices],
        "numerics": {
            "h": config.h,
            "dt": config.dt,
            "t_end": config.t_end,
            "blob_delta": config.blob_delta,
            "r_guard": config.r_guard,
        },
        "diagnostics": {
            f.name: (list(v) if isinstance(v := getattr(config.diagnostics, f.name), tuple) else v)
            for f in dataclasses.fields(DiagnosticsSpec)
        },
        "output": {f.name: getattr(config.output, f.name) for f in dataclasses.fields(OutputSpec)},
    }
    if meta:
        doc["meta"] = dict(meta)
    return tomlkit.dumps(doc)
