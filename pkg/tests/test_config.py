import pytest

from cavityspin import config as C
from cavityspin.experiments import InterleaveSpec

from conftest import fig3_xy, fig3_zz

MINIMAL = """\
experiment: params
scheme: xy
array: {omega_e: 1000000 GHz, omega_ab: 30 GHz, omega_c: 999942 GHz, j_c: 0.2 GHz}
xy: {delta_a: 30 GHz, delta1: -16.5 MHz, rabi_a: 2 GHz, rabi_b: 2 GHz, g_a: 1 GHz, g_b: 1 GHz}
"""


def test_minimal_config_builds_parameters():
    cfg = C.parse_config(MINIMAL)
    assert cfg.xy_params() == fig3_xy()
    assert cfg.zz_params() is None
    assert cfg.layout.n_sites == 2


@pytest.mark.parametrize("text,unit", [("1 kHz", 1e-6), ("1 MHz", 1e-3), ("1 GHz", 1.0)])
def test_frequency_units(text, unit):
    cfg = C.parse_config(MINIMAL.replace("j_c: 0.2 GHz", f"j_c: {text}"))
    assert cfg.array.j_c == pytest.approx(unit)


def test_time_units():
    cfg = C.parse_config(MINIMAL + "interleave: {dt1: 0.05 us, dt2: 50 ns, total_time: 1 ms}\n")
    il = cfg.interleave_spec()
    assert (il.dt1, il.dt2, il.total_time) == pytest.approx((50.0, 50.0, 1e6))


def test_missing_unit_names_key():
    with pytest.raises(C.ConfigError) as e:
        C.parse_config(MINIMAL.replace("j_c: 0.2 GHz", "j_c: 0.2"))
    assert "array.j_c" in str(e.value)
    assert e.value.line == 3


def test_wrong_unit_kind():
    with pytest.raises(C.ConfigError, match="xy.g_a"):
        C.parse_config(MINIMAL.replace("g_a: 1 GHz", "g_a: 1 ns"))


def test_unknown_key_reports_position():
    with pytest.raises(C.ConfigError) as e:
        C.parse_config(MINIMAL + "layout: {n_sites: 2, n_sights: 3}\n")
    assert "n_sights" in str(e.value)
    assert e.value.line == 5 and e.value.column is not None


def test_duplicate_and_bad_values():
    with pytest.raises(C.ConfigError, match="duplicate"):
        C.parse_config(MINIMAL + "scheme: zz\n")
    with pytest.raises(C.ConfigError):
        C.parse_config(MINIMAL.replace("scheme: xy", "scheme: yz"))
    with pytest.raises(C.ConfigError):
        C.parse_config("experiment: [compare\n")
    with pytest.raises(C.ConfigError):
        C.parse_config(MINIMAL + "layout: {n_sites: 0}\n")


def test_fig3a_preset_values():
    cfg = C.load_preset("fig3a")
    xy, zz = cfg.xy_params(), cfg.zz_params()
    assert xy.omega_e == 1e6 and xy.omega_ab == 30.0
    assert xy.omega_c == 1e6 - 58.0 and xy.j_c == 0.2
    assert xy.rabi_a == xy.rabi_b == 2.0 and xy.g_a == xy.g_b == 1.0
    assert xy == fig3_xy(-0.0165)
    assert zz == fig3_zz()
    assert zz.lam_a == zz.lam_b == 0.71
    assert cfg.interleave_spec() == InterleaveSpec(50.0, 50.0, 60_000.0)
    assert C.load_preset("fig3b").xy_params() == fig3_xy(-0.0168)


@pytest.mark.parametrize("name", C.available_presets())
def test_preset_round_trip(name):
    cfg = C.load_preset(name)
    again = C.parse_config(C.serialize_config(cfg))
    assert again == cfg
    assert C.serialize_config(again) == C.serialize_config(cfg)


def test_presets_shipped():
    assert set(C.available_presets()) >= {"fig3a", "fig3b", "cluster2", "pbg-device",
                                          "chip-device"}
    with pytest.raises(C.ConfigError):
        C.load_preset("nope")


def test_load_config_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(MINIMAL)
    assert C.load_config(str(p)) == C.parse_config(MINIMAL)
