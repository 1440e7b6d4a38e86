"""End-to-end pipeline behavior: config parsing, staging, provenance.

The full-run fixture uses a small planted dataset (one real cluster,
one null area) so every stage has work to do while the whole suite
stays fast.
"""

import dataclasses
import json

import numpy as np
import pytest

from brainalign.errors import ConfigError
from brainalign.pipeline import (
    PipelineConfig,
    StageFailure,
    load_config,
    run_all,
    run_consistency,
    run_encode,
    run_rois,
    run_rsa,
    synth_config_from_dict,
)
from brainalign.synth import LayerSpec, default_config, null_config

SMOKE = {
    "out_dir": "out",
    "data_dir": "data",
    "synth": {
        "grid": [10, 10, 6],
        "n_concepts": 24,
        "n_participants": 3,
        "feature_dim": 16,
        "latent_dim": 8,
        "layers": [[0.0, 1.0], [1.0, 0.4]],
        "poolings": [["mean", 1.0], ["last", 1.5]],
        "areas": [
            {
                "id": 1,
                "origin": [0, 0, 0],
                "shape": [5, 5, 6],
                "consistency": [0.5, 0.8],
                "paradigm": 0.4,
                "noise": 0.7,
                "selectivity": [0.4, 0.2],
            },
            {"id": 2, "origin": [5, 5, 0], "shape": [4, 4, 4], "selectivity": [0.0, 0.1]},
        ],
        "seed": 11,
    },
    "n_permutations": 200,
    "roi_min_voxels": 50,
    "rsa_shuffles": 20,
}


def write_config(root, payload=SMOKE):
    path = root / "cfg.json"
    path.write_text(json.dumps(payload))
    return path


def tree_bytes(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = load_config(write_config(root))
    ran = run_all(cfg)
    return cfg, root, ran


# --------------------------------------------------------------------------
# config parsing


def test_load_config_resolves_paths_against_config_dir(tmp_path):
    nested = tmp_path / "exp" / "v1"
    nested.mkdir(parents=True)
    cfg = load_config(write_config(nested))
    assert cfg.out_dir == str((nested / "out").resolve())
    assert cfg.manifest_path == (nested / "data" / "manifest.json").resolve()


def test_load_config_rejects_unknown_fields(tmp_path):
    bad = dict(SMOKE, typo_field=1)
    with pytest.raises(ConfigError, match="typo_field"):
        load_config(write_config(tmp_path, bad))


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(path)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        load_config(tmp_path / "list.json")


def test_config_needs_a_data_source():
    with pytest.raises(ConfigError, match="synth block or a manifest"):
        PipelineConfig(out_dir="out")


@pytest.mark.parametrize(
    "field,value",
    [
        ("n_permutations", 0),
        ("significance_alpha", 0.0),
        ("significance_alpha", 1.0),
        ("chunk_size", 0),
        ("roi_threshold", 1.5),
        ("roi_min_voxels", -1),
        ("cv_folds", 1),
        ("rsa_shuffles", 0),
    ],
)
def test_config_range_validation(field, value):
    kwargs = {"out_dir": "out", "manifest": "m.json", field: value}
    with pytest.raises(ConfigError, match=field):
        PipelineConfig(**kwargs)


def test_synth_config_presets():
    assert synth_config_from_dict({"preset": "default", "seed": 4}) == default_config(4)
    assert synth_config_from_dict({"preset": "null"}) == null_config()
    overridden = synth_config_from_dict({"preset": "null", "grid": [10, 10, 4]})
    assert overridden.grid == (10, 10, 4)
    assert overridden.rep_probs == (1.0, 0.0, 0.0)
    with pytest.raises(ConfigError, match="preset"):
        synth_config_from_dict({"preset": "bogus"})


def test_synth_config_conversions():
    cfg = synth_config_from_dict(SMOKE["synth"])
    assert cfg.grid == (10, 10, 6)
    assert cfg.layers == (LayerSpec(0.0, 1.0), LayerSpec(1.0, 0.4))
    assert cfg.poolings == (("mean", 1.0), ("last", 1.5))
    assert cfg.areas[0].origin == (0, 0, 0)
    assert cfg.areas[0].consistency == (0.5, 0.8)
    assert cfg.areas[1].selectivity == (0.0, 0.1)
    layered = synth_config_from_dict({"layers": [{"scale": 0.5, "noise": 2.0}]})
    assert layered.layers == (LayerSpec(0.5, 2.0),)


def test_synth_config_rejects_bad_blocks():
    with pytest.raises(ConfigError, match="unknown synth fields"):
        synth_config_from_dict({"gird": [2, 2, 2]})
    with pytest.raises(ConfigError, match="3 entries"):
        synth_config_from_dict({"grid": [2, 2]})
    with pytest.raises(ConfigError, match="rep_probs"):
        synth_config_from_dict({"rep_probs": [1.0]})
    with pytest.raises(ConfigError, match="area"):
        synth_config_from_dict({"areas": [{"id": 1, "origin": [0, 0, 0], "form": [1, 1, 1]}]})
    with pytest.raises(ConfigError, match="object"):
        synth_config_from_dict([1, 2])


# --------------------------------------------------------------------------
# full run


def test_run_all_produces_stage_tree(smoke_run):
    cfg, root, ran = smoke_run
    assert ran == ["synth", "consistency", "rois", "encode", "rsa", "ceiling", "report"]
    out = root / "out"
    assert (root / "data" / "manifest.json").exists()
    for stage in ran:
        assert (out / stage / "provenance.json").exists(), stage
    rois = json.loads((out / "rois" / "rois.json").read_text())["rois"]
    assert [r["areas"] for r in rois] == [[1]]
    assert rois[0]["n_voxels"] == 150
    enc = json.loads((out / "encode" / "summary.json").read_text())
    assert enc["group_best"] == {"model": "synthetic", "layer": 1, "pooling": "mean"}
    rsa_lines = (out / "rsa" / "rsa.csv").read_text().splitlines()
    # three participants x two conditions x two voxel restrictions
    assert len(rsa_lines) == 1 + 3 * 2 * 2
    restrictions = {line.split(",")[2] for line in rsa_lines[1:]}
    assert restrictions == {"all", "significant"}
    report = json.loads((out / "report" / "summary.json").read_text())
    assert set(report) >= {"consistency", "prob_map", "rois", "encoding", "rsa"}
    assert report["rsa"]["text+image"]["r"] > 0.2
    assert "significant_r" in report["rsa"]["text+image"]


def test_rerun_is_byte_identical(smoke_run, tmp_path):
    _, first_root, _ = smoke_run
    cfg = load_config(write_config(tmp_path))
    run_all(cfg)
    a, b = tree_bytes(first_root), tree_bytes(tmp_path)
    a.pop("cfg.json"), b.pop("cfg.json")
    assert list(a) == list(b)
    for name in a:
        assert a[name] == b[name], f"{name} differs between identical runs"


def test_single_stage_rerun_is_idempotent(smoke_run):
    cfg, root, _ = smoke_run
    stage = root / "out" / "consistency"
    before = tree_bytes(stage)
    run_consistency(cfg)
    assert tree_bytes(stage) == before


def test_provenance_is_location_free(smoke_run):
    cfg, root, ran = smoke_run
    for stage in ran:
        text = (root / "out" / stage / "provenance.json").read_text()
        assert str(root) not in text, f"{stage} provenance leaks absolute paths"
        record = json.loads(text)
        assert set(record) == {"stage", "version", "params", "inputs", "outputs"}
        assert record["stage"] == stage
        for key, digest in {**record["inputs"], **record["outputs"]}.items():
            assert key.startswith(("out:", "data:")), key
            assert len(digest) == 64 and set(digest) <= set("0123456789abcdef")


def test_report_sweep_averages_participants(smoke_run):
    _, root, _ = smoke_run
    sweep = (root / "out" / "encode" / "sweep.csv").read_text().splitlines()[1:]
    per_config: dict[tuple, list[float]] = {}
    for line in sweep:
        part, model, layer, pooling, r = line.split(",")
        per_config.setdefault((model, layer, pooling), []).append(float(r))
    agg = (root / "out" / "report" / "feature_sweep.csv").read_text().splitlines()[1:]
    assert len(agg) == len(per_config)
    for line in agg:
        model, layer, pooling, mean_r, n = line.split(",")
        vals = per_config[(model, layer, pooling)]
        assert int(n) == 3
        assert float(mean_r) == pytest.approx(np.mean(vals), abs=1e-9)


def test_stages_fail_without_their_inputs(smoke_run, tmp_path):
    cfg, root, _ = smoke_run
    fresh = dataclasses.replace(
        cfg,
        out_dir=str(tmp_path / "out"),
        synth=None,
        manifest=str(root / "data" / "manifest.json"),
    )
    with pytest.raises(StageFailure, match="consistency"):
        run_rois(fresh)
    with pytest.raises(StageFailure, match="rois"):
        run_encode(fresh)
    with pytest.raises(StageFailure, match="rois"):
        run_rsa(fresh)
    # resume from the existing dataset: consistency, then rois succeed
    run_consistency(fresh)
    run_rois(fresh)
    rois = json.loads((tmp_path / "out" / "rois" / "rois.json").read_text())["rois"]
    assert [r["areas"] for r in rois] == [[1]]


def test_all_background_run_degrades_gracefully(tmp_path):
    cfg_payload = {
        "out_dir": "out",
        "data_dir": "data",
        "synth": {
            "grid": [4, 4, 2],
            "n_concepts": 12,
            "n_participants": 2,
            "feature_dim": 6,
            "latent_dim": 4,
            "layers": [[1.0, 0.5]],
            "poolings": [["mean", 1.0]],
            "areas": [],
            "seed": 5,
        },
        "n_permutations": 100,
        "rsa_shuffles": 5,
    }
    cfg = load_config(write_config(tmp_path, cfg_payload))
    ran = run_all(cfg)
    assert ran == ["synth", "consistency", "rois", "encode", "rsa", "ceiling", "report"]
    out = tmp_path / "out"
    rois = json.loads((out / "rois" / "rois.json").read_text())["rois"]
    assert rois == []
    enc = json.loads((out / "encode" / "summary.json").read_text())
    assert enc["group_best"] is None and enc["note"] == "no labeled voxels"
    assert (out / "rsa" / "rsa.csv").read_text().splitlines()[1:] == []
    report = json.loads((out / "report" / "summary.json").read_text())
    assert report["prob_map"]["n_nonzero"] <= 2  # chance-level false positives
