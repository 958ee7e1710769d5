import json
from pathlib import Path

import pytest

from screwtb.cli import (
    InvariantReport,
    RunConfig,
    compute_agreement,
    config_hash,
    fnv1a_64,
    main,
)
from screwtb.errors import ConfigError


def write_config(tmp_path, **kwargs):
    doc = {
        "model": {"name": "trivial", "params": {}},
        "lattice": {"half_width": 4},
        "numerics": {"kz_count": 16, "grid": 8, "rho": 2.0, "threads": 2},
        "output": {"directory": str(tmp_path / "out")},
    }
    for key, value in kwargs.items():
        section, name = key.split(".")
        doc.setdefault(section, {})[name] = value
    p = tmp_path / "config.json"
    p.write_text(json.dumps(doc))
    return p


def test_fnv1a_known_vectors():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_config_hash_key_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_verify_trivial_agrees(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["verify", "--config", str(cfg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["agreement"] is True
    assert report["weak_vector"] == [0, 0, 0]
    assert report["predicted_index"] == 0
    assert report["spectral_flow"] == 0
    out = tmp_path / "out"
    assert (out / "report.json").exists()
    assert (out / "spectra.csv").exists()
    csv = (out / "spectra.csv").read_text().splitlines()
    assert csv[0] == "kz,state_index,energy,core_weight"
    assert len(csv) == 1 + 16 * 2 * 81


def test_rerun_hits_cache_bit_identical(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["bulk-invariants", "--config", str(cfg)]) == 0
    first = (tmp_path / "out" / "report.json").read_bytes()
    capsys.readouterr()
    assert main(["bulk-invariants", "--config", str(cfg)]) == 0
    captured = capsys.readouterr()
    assert "(cached)" in captured.err
    assert (tmp_path / "out" / "report.json").read_bytes() == first
    assert json.loads(captured.out)["config_hash"] == config_hash(
        RunConfig.load(str(cfg)).doc
    )


def test_flag_overrides_change_the_cache_key(tmp_path):
    cfg = write_config(tmp_path)
    a = RunConfig.load(str(cfg))
    b = RunConfig.load(str(cfg), {"numerics.seed": 3})
    assert a.hash != b.hash


def test_malformed_config_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lattice": {"half_width": "wide"}}))
    assert main(["verify", "--config", str(bad)]) == 3
    assert "lattice.half_width" in capsys.readouterr().err


def test_missing_model_exits_3(tmp_path, capsys):
    doc = {"lattice": {"half_width": 3}, "output": {"directory": str(tmp_path / "o")}}
    p = tmp_path / "nomodel.json"
    p.write_text(json.dumps(doc))
    assert main(["bulk-invariants", "--config", str(p)]) == 3
    assert "model" in capsys.readouterr().err


def test_energy_window_outside_gap_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, **{"numerics.delta_halfwidth": 5.0})
    assert main(["dislocation-spectrum", "--config", str(cfg)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_predict_output(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["predict", "--config", str(cfg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["predicted_index"] == 0
    predicted = json.loads((tmp_path / "out" / "predicted.json").read_text())
    assert predicted == {"predicted_index": 0}


def test_lift_test_stats(tmp_path, capsys):
    cfg = write_config(tmp_path, **{"lift_test.half_width": 5, "lift_test.trials": 6})
    assert main(["lift-test", "--config", str(cfg)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["trials"] == 6
    assert stats["norm_bound_failures"] == 0
    assert stats["radius_failures"] == 0
    assert len(stats["cases"]) == 6


def test_output_lock_blocks_concurrent_run(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    out.mkdir()
    (out / ".lock").write_text("held")
    assert main(["bulk-invariants", "--config", str(cfg)]) == 3
    assert "locked" in capsys.readouterr().err
    (out / ".lock").unlink()
    assert main(["bulk-invariants", "--config", str(cfg)]) == 0


def test_verify_disagreement_exits_1(tmp_path, capsys):
    # a cached report with a false agreement flag must drive the exit code
    cfg = write_config(tmp_path)
    rc = RunConfig.load(str(cfg))
    cache = Path(rc.doc["output"]["directory"]) / "cache" / rc.hash / "verify"
    cache.mkdir(parents=True)
    doctored = {"agreement": False, "config_hash": rc.hash}
    (cache / "report.json").write_text(json.dumps(doctored))
    assert main(["verify", "--config", str(cfg)]) == 1


def test_compute_agreement_logic():
    base = dict(config_hash="x", version="v", seed=0)
    good = InvariantReport(
        **base,
        predicted_index=-1,
        spectral_flow=-1,
        localized_winding=-0.97,
        sigma_screw=-1.04,
    )
    assert compute_agreement(good)
    assert not compute_agreement(
        InvariantReport(
            **base,
            predicted_index=0,
            spectral_flow=-1,
            localized_winding=-0.97,
            sigma_screw=-1.0,
        )
    )
    assert not compute_agreement(
        InvariantReport(
            **base,
            predicted_index=-1,
            spectral_flow=-1,
            localized_winding=-0.8,
            sigma_screw=-1.0,
        )
    )
    assert not compute_agreement(InvariantReport(**base))


def test_run_config_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(str(tmp_path / "missing.json"))
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(str(p))
    p.write_text(json.dumps({"lattice": {"boundary": "open"}}))
    with pytest.raises(ConfigError):
        RunConfig.load(str(p))
    p.write_text(json.dumps({"lattice": {"burgers": [0, 0]}}))
    with pytest.raises(ConfigError):
        RunConfig.load(str(p))
    p.write_text(json.dumps({"numerics": {"kz_count": 4}}))
    with pytest.raises(ConfigError):
        RunConfig.load(str(p))
