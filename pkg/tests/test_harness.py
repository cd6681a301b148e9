"""Config parsing/emission, delimited output and CLI contract tests.

The manifest law: emitting a resolved config and re-parsing it yields an
identical config.  The output law: floats render with 17 significant
digits, so written series round-trip bitwise and reruns are byte
identical.  The CLI contract: exit 0 pass / 1 check failure / 2 config
error / 3 runtime failure, with series.csv, manifest, report and a
rendered figure in --out.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexwave import cli
from vortexwave.cli import main
from vortexwave.config import (
    ConfigError,
    DiagnosticsSpec,
    OutputSpec,
    PatchSpec,
    ScenarioConfig,
    VortexSpec,
    emit_config,
    parse_config,
    refined,
    with_inner_radius,
    without_vortex_intensity,
)
from vortexwave.dynamics import SimulationError
from vortexwave.output import (
    atomic_write,
    format_value,
    read_report,
    read_timeseries,
    write_report,
    write_timeseries,
)

MINIMAL = """
[scenario]
mode = "moving"

[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0

[numerics]
h = 0.02
dt = 0.001
t_end = 1.0
"""

PAIR_SHORT = """
[scenario]
mode = "multi"

[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0

[[vortices]]
pos = [-0.5, 0.0]
intensity = 1.0

[numerics]
h = 0.1
dt = 0.05
t_end = 0.25

[diagnostics]
pair_return = true
pair_distance_check = true
"""


# ------------------------------------------------------- parse + resolve


def test_defaults_resolve_to_concrete_values():
    cfg = parse_config(MINIMAL)
    assert cfg.blob_delta == 2.0 * cfg.h
    assert cfg.r_guard == cfg.h / 2.0
    assert cfg.output.stride == 10  # 1000 steps, about 100 snapshots
    assert cfg.output.norm_half == 1.0  # 2 x support radius
    assert cfg.output.norm_spacing == cfg.h
    assert cfg.output.diff_half == 2.0
    assert cfg.n_steps == 1000
    assert cfg.initial_support_radius == 0.5
    assert cfg.support_center == (0.0, 0.0)


def test_explicit_values_win_over_auto():
    cfg = parse_config(
        MINIMAL.replace("[numerics]", "[numerics]\nblob_delta = 0.07\nr_guard = 0.013")
        + "\n[output]\nstride = 7\nnorm_half = 3.5\n"
    )
    assert cfg.blob_delta == 0.07
    assert cfg.r_guard == 0.013
    assert cfg.output.stride == 7
    assert cfg.output.norm_half == 3.5


@pytest.mark.parametrize(
    "mangle, fragment",
    [
        (lambda s: s.replace("[numerics]", "[numerics]\nbogus = 1"), "bogus"),
        (lambda s: s + "\n[output]\nunknown_knob = 2\n", "unknown_knob"),
        (lambda s: s + "\n[diagnostics]\ntypo_check = true\n", "typo_check"),
        (lambda s: s.replace('kind = "disk"', 'kind = "disk"\nwhat = 1'), "what"),
        (lambda s: s.replace('mode = "moving"', 'mode = "moving"\nextra = 3'), "extra"),
        (lambda s: s + "\n[mystery]\nx = 1\n", "mystery"),
        (lambda s: s.replace("h = 0.02", ""), "'h'"),
        (lambda s: s.replace('mode = "moving"', 'mode = "sideways"'), "mode"),
        (lambda s: s.replace("radius = 0.5", "radius = -0.5"), "radius"),
        (lambda s: s.replace("h = 0.02", "h = -0.02"), "h"),
        (lambda s: s.replace("center = [0.0, 0.0]", "center = [0.0]"), "pair"),
        (lambda s: s.replace("value = 1.0", 'value = "big"'), "number"),
        (lambda s: s.replace("t_end = 1.0", "t_end = [1"), "parse error"),
    ],
)
def test_bad_configs_are_rejected_by_name(mangle, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(mangle(MINIMAL))


@pytest.mark.parametrize(
    "toml, fragment",
    [
        # fixed mode needs exactly one vortex pinned at the origin
        (
            """
[scenario]
mode = "fixed"
[[scenario.patches]]
kind = "annulus"
center = [0.0, 0.0]
inner_radius = 0.3
outer_radius = 0.6
value = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "exactly one vortex",
        ),
        (
            """
[scenario]
mode = "fixed"
[[scenario.patches]]
kind = "annulus"
center = [0.0, 0.0]
inner_radius = 0.3
outer_radius = 0.6
value = 1.0
[[vortices]]
pos = [0.1, 0.0]
intensity = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "origin",
        ),
        (
            """
[scenario]
mode = "multi"
[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "at least two",
        ),
        (
            """
[scenario]
mode = "multi"
[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0
[[vortices]]
pos = [-0.5, 0.0]
intensity = -1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "one sign",
        ),
        (
            """
[scenario]
mode = "moving"
[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0
[[vortices]]
pos = [-0.5, 0.0]
intensity = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "at most one",
        ),
        (
            """
[scenario]
mode = "multi"
[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0
[[vortices]]
pos = [0.5, 0.0]
intensity = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "coincident",
        ),
        (
            """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0
[[scenario.patches]]
kind = "disk"
center = [0.6, 0.0]
radius = 0.5
value = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "overlap",
        ),
        (
            """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0
[[vortices]]
pos = [0.9, 0.0]
intensity = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
[diagnostics]
constancy = true
""",
            "outside every constant disk",
        ),
        (
            """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
[diagnostics]
margin_check = true
""",
            "margin_check",
        ),
        (
            """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "annulus"
center = [0.0, 0.0]
inner_radius = 0.6
outer_radius = 0.4
value = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "inner_radius < outer_radius",
        ),
        (
            """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0
radial_slope = 1.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
""",
            "constant",
        ),
    ],
)
def test_semantic_validation(toml, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(toml)


def test_disjoint_disk_and_annulus_share_a_boundary():
    # closed disk boundary + open annulus inner boundary: not an overlap
    cfg = parse_config(
        """
[scenario]
mode = "moving"
[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.5
value = 1.0
[[scenario.patches]]
kind = "annulus"
center = [0.0, 0.0]
inner_radius = 0.5
outer_radius = 0.75
value = 2.0
[numerics]
h = 0.05
dt = 0.01
t_end = 0.1
"""
    )
    assert len(cfg.patches) == 2
    assert cfg.initial_support_radius == 0.75


def test_derived_configs():
    cfg = parse_config(MINIMAL)
    fine = refined(cfg)
    assert fine.h == cfg.h / 2.0
    assert fine.dt == cfg.dt / 4.0
    assert fine.blob_delta == cfg.blob_delta / 2.0
    assert fine.r_guard == cfg.r_guard  # the regularized system is fixed
    assert fine.output.stride == 4 * cfg.output.stride
    assert fine.n_steps == 4 * cfg.n_steps
    halved = cli.halved(cfg)
    assert halved.h == cfg.h / 2.0
    assert halved.dt == cfg.dt / 2.0
    assert halved.r_guard == cfg.r_guard

    with pytest.raises(ConfigError):
        with_inner_radius(cfg, 0.3)  # no annulus present
    ann = parse_config(
        MINIMAL.replace(
            'kind = "disk"\ncenter = [0.0, 0.0]\nradius = 0.5',
            'kind = "annulus"\ncenter = [0.0, 0.0]\ninner_radius = 0.2\nouter_radius = 0.5',
        )
    )
    swept = with_inner_radius(ann, 0.35)
    assert swept.patches[0].inner_radius == 0.35
    assert swept.patches[0].outer_radius == 0.5

    multi = parse_config(PAIR_SHORT)
    control = without_vortex_intensity(multi)
    assert all(v.intensity == 0.0 for v in control.vortices)
    assert [v.pos for v in control.vortices] == [v.pos for v in multi.vortices]


# ----------------------------------------------------- manifest round-trip

finite = st.floats(
    min_value=1e-6, max_value=1e3, allow_nan=False, allow_infinity=False
)


@st.composite
def scenario_configs(draw):
    geometry = draw(st.sampled_from(["disk", "disk_vortex", "annulus_fixed", "pair"]))
    h = draw(finite.filter(lambda v: v < 1.0))
    numerics = dict(h=h, dt=draw(finite), t_end=draw(finite))
    if draw(st.booleans()):
        numerics["blob_delta"] = draw(finite)
        numerics["r_guard"] = draw(finite)
    diagnostics = DiagnosticsSpec(
        lp_check=draw(st.booleans()),
        lp_tol=draw(finite),
        support_check=draw(st.booleans()),
        constancy_tol=draw(finite),
        harmonic_rel=draw(finite),
        harmonic_samples=draw(st.integers(8, 512)),
        twin_ratio_min=draw(finite),
        eta_ladder=tuple(draw(st.lists(finite, max_size=3))),
    )
    output = OutputSpec(
        stride=draw(st.integers(1, 1000)),
        norm_half=draw(finite),
        norm_spacing=draw(finite),
        diff_half=draw(finite),
        diff_n=draw(st.integers(2, 400)),
        eta=draw(finite),
        jitter=draw(finite),
        seed=draw(st.integers(0, 2**31)),
    )
    value = draw(finite)
    radius = draw(finite)
    if geometry == "disk":
        mode, patches, vortices = "moving", (
            PatchSpec("disk", (draw(finite), draw(finite)), value, radius=radius),
        ), ()
    elif geometry == "disk_vortex":
        center = (draw(finite), draw(finite))
        mode = "moving"
        patches = (PatchSpec("disk", center, value, radius=radius),)
        vortices = (VortexSpec(center, draw(finite)),)
        diagnostics = DiagnosticsSpec(
            constancy=True, margin_check=draw(st.booleans()), eta_ladder=diagnostics.eta_ladder
        )
    elif geometry == "annulus_fixed":
        inner = radius
        outer = inner + draw(finite)
        patches = (
            PatchSpec(
                "annulus",
                (0.0, 0.0),
                value,
                inner_radius=inner,
                outer_radius=outer,
                radial_slope=draw(st.floats(-2, 2, allow_nan=False)),
                cos_amplitude=draw(st.floats(-0.9, 0.9, allow_nan=False)),
                cos_harmonic=draw(st.integers(1, 5)),
            ),
        )
        mode, vortices = "fixed", (VortexSpec((0.0, 0.0), draw(finite)),)
        diagnostics = DiagnosticsSpec(
            hole_check=True, hole_tol=draw(finite), control_check=draw(st.booleans())
        )
    else:
        mode, patches = "multi", ()
        sep = draw(finite)
        vortices = (
            VortexSpec((sep, 0.0), draw(finite)),
            VortexSpec((-sep, draw(finite)), draw(finite)),
        )
    return ScenarioConfig(
        mode=mode,
        patches=patches,
        vortices=vortices,
        diagnostics=diagnostics,
        output=output,
        **numerics,
    )


@given(scenario_configs())
@settings(max_examples=100, deadline=None)
def test_manifest_round_trip(cfg):
    # first pass resolves any auto (0) sentinels; after that, emit/parse
    # must be the identity, bit for bit in every float
    resolved = parse_config(emit_config(cfg))
    text = emit_config(resolved, meta={"version": "x", "command": "simulate"})
    assert parse_config(text) == resolved


def test_manifest_meta_section_is_ignored():
    cfg = parse_config(MINIMAL)
    text = emit_config(cfg, meta={"version": "0.0.0", "command": "simulate", "levels": 3})
    assert "[meta]" in text
    assert parse_config(text) == cfg


# ------------------------------------------------------- delimited output


@given(
    st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=40
    )
)
@settings(max_examples=100, deadline=None)
def test_timeseries_floats_round_trip_bitwise(values):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "series.csv"
        rows = [{"time": float(i), "value": v} for i, v in enumerate(values)]
        write_timeseries(rows, path)
        back = read_timeseries(path)
    assert np.array_equal(back["value"], np.array(values))
    assert np.array_equal(back["time"], np.arange(len(values), dtype=float))


def test_timeseries_rejects_ragged_and_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        write_timeseries([], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="columns"):
        write_timeseries([{"a": 1.0}, {"b": 2.0}], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="non-finite"):
        write_timeseries([{"a": float("nan")}], tmp_path / "x.csv")
    assert not (tmp_path / "x.csv").exists()


def test_report_round_trip(tmp_path):
    path = tmp_path / "report"
    write_report(
        [("command", "simulate"), ("lp1_drift", 0.003), ("overall", True), ("n", 17)], path
    )
    back = read_report(path)
    assert back["command"] == "simulate"
    assert float(back["lp1_drift"]) == 0.003
    assert back["overall"] == "PASS"
    assert back["n"] == "17"


def test_format_value_contract():
    assert format_value(True) == "PASS"
    assert format_value(False) == "FAIL"
    assert format_value(np.bool_(True)) == "PASS"
    assert format_value(42) == "42"
    assert format_value(np.int64(-3)) == "-3"
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(np.float64(1e-300))) == 1e-300
    assert format_value("plain") == "plain"
    with pytest.raises(ValueError):
        format_value(float("inf"))


def test_atomic_write_replaces_without_leftovers(tmp_path):
    target = tmp_path / "file"
    target.write_text("old")
    atomic_write(target, "new")
    assert target.read_text() == "new"
    assert list(tmp_path.iterdir()) == [target]


# --------------------------------------------------------------- the CLI

CHEAP_SIM = """
[scenario]
mode = "moving"

[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.3
value = 1.0

[[vortices]]
pos = [0.0, 0.0]
intensity = 1.0

[numerics]
h = 0.06
dt = 0.01
t_end = 0.05

[diagnostics]
lp_check = true
lp_tol = 0.05
support_check = true
margin_check = true
constancy = true
"""


def write_cfg(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_cli_usage_and_config_errors(tmp_path):
    assert main([]) == 2  # argparse usage error
    assert main(["simulate", "--config", str(tmp_path / "absent.toml"), "--out", str(tmp_path / "o")]) == 2
    bad = write_cfg(tmp_path, "mode = ")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    invalid = write_cfg(tmp_path, MINIMAL.replace("h = 0.02", "h = -1.0"), "neg.toml")
    assert main(["simulate", "--config", str(invalid), "--out", str(tmp_path / "o")]) == 2


def test_cli_simulate_pass_and_outputs(tmp_path):
    cfg = write_cfg(tmp_path, CHEAP_SIM)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    report = read_report(out / "report")
    assert report["overall"] == "PASS"
    assert report["command"] == "simulate"
    assert report["lp_drift_within_tol"] == "PASS"
    assert report["support_affine_within_2h"] == "PASS"
    assert report["margin_above_guard"] == "PASS"
    assert report["constancy_values_exact_0"] == "PASS"
    series = read_timeseries(out / "series.csv")
    assert "support_radius" in series and "constancy_0" in series
    assert "min_vortex_marker_dist" in series and "guard_events" in series
    assert (out / "diagnostics.png").stat().st_size > 0
    manifest = (out / "manifest").read_text()
    assert "[meta]" in manifest
    from vortexwave.config import load_config

    assert parse_config(manifest) == load_config(cfg)


def test_cli_check_failure_exits_1(tmp_path):
    # a pair stopped far short of its co-rotation period cannot return
    cfg = write_cfg(tmp_path, PAIR_SHORT)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1
    report = read_report(out / "report")
    assert report["overall"] == "FAIL"
    assert report["pair_return_within_tol"] == "FAIL"
    assert report["pair_distance_above_half_initial"] == "PASS"


def test_cli_runtime_error_exits_3(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, CHEAP_SIM)
    out = tmp_path / "out"

    def explode(config, initial=None, progress=None):
        raise SimulationError("step 3 (t = 0.03): non-finite vortex position")

    monkeypatch.setattr(cli, "run", explode)
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 3
    report = read_report(out / "report")
    assert "step 3" in report["error"]
    assert "overall" not in report


def test_cli_twin_single_eta(tmp_path):
    cfg = write_cfg(tmp_path, CHEAP_SIM)
    out = tmp_path / "out"
    assert main(["twin", "--config", str(cfg), "--out", str(out), "--eta", "1e-3"]) == 0
    report = read_report(out / "report")
    assert report["r_initial_matches_eta_sq_0.001"] == "PASS"
    series = read_timeseries(out / "series.csv")
    assert "r_0" in series and "vel_sq_0" in series and "vortex_sq_0" in series
    assert series["r_0"][0] == pytest.approx(1e-6, rel=1e-10)
    assert (out / "twin.png").stat().st_size > 0


def test_cli_twin_without_eta_is_a_config_error(tmp_path):
    cfg = write_cfg(tmp_path, CHEAP_SIM)
    assert main(["twin", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_fixed_hole_and_control(tmp_path):
    cfg = write_cfg(
        tmp_path,
        """
[scenario]
mode = "fixed"

[[scenario.patches]]
kind = "annulus"
center = [0.0, 0.0]
inner_radius = 0.3
outer_radius = 0.6
value = 1.0

[[vortices]]
pos = [0.0, 0.0]
intensity = 1.0

[numerics]
h = 0.05
dt = 0.01
t_end = 0.05

[diagnostics]
hole_check = true
margin_check = true
control_check = true
""",
    )
    out = tmp_path / "out"
    assert main(["fixed", "--config", str(cfg), "--out", str(out)]) == 0
    report = read_report(out / "report")
    assert report["hole_above_affine_bound"] == "PASS"
    assert report["control_hole_constant"] == "PASS"
    series = read_timeseries(out / "series.csv")
    assert "hole_radius" in series
    assert (out / "hole.png").stat().st_size > 0


def test_cli_convergence_writes_levels(tmp_path):
    cfg = write_cfg(
        tmp_path,
        """
[scenario]
mode = "moving"

[[scenario.patches]]
kind = "disk"
center = [0.0, 0.0]
radius = 0.3
value = 1.0

[numerics]
h = 0.1
dt = 0.02
t_end = 0.2
""",
    )
    out = tmp_path / "out"
    code = main(["convergence", "--config", str(cfg), "--out", str(out), "--levels", "2"])
    assert code in (0, 1)  # toy resolution may sit outside the ratio gate
    series = read_timeseries(out / "series.csv")
    assert list(series["level"]) == [0.0, 1.0]
    assert series["h"][1] == series["h"][0] / 2.0
    report = read_report(out / "report")
    assert "psi_0_min_ratio" in report
    assert (out / "residuals.png").stat().st_size > 0


def test_cli_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, CHEAP_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
    for name in ("series.csv", "manifest", "report"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
