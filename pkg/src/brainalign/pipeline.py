"""Stage-based analysis pipeline with per-stage provenance.

Stages: synth (optional) -> consistency -> rois -> encode -> rsa ->
ceiling -> report. Each stage reads only files written by earlier
stages, writes into ``out_dir/<stage>/`` and records a provenance
record (parameters plus content hashes of everything read and written,
no timestamps), so reruns of the same config are byte-identical and
stages can be rerun individually from the CLI.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .ceiling import RELIABILITY_CUTOFF, ceiling_adjust, noise_ceiling
from .consistency import (
    PARTITIONS,
    probabilistic_map,
    significance_mask,
    split_half_partition,
)
from .dataset import Dataset, load_dataset, load_manifest
from .encoding import (
    FeatureConfig,
    area_predictivity_correlation,
    binned_predictivity,
    collapse_rows,
    cv_predictivity,
    language_selectivity,
    quartile_bins,
    select_best_feature_config,
    word_cloud_collapse,
)
from .errors import ConfigError
from .roi import ROI, area_average, atlas_labels, roi_voxels, select_rois
from .rsa import brain_concept_vectors, model_concept_vectors, rdm, rsa_score, shuffled_baseline
from .synth import SynthConfig, AreaSpec, LayerSpec, default_config, generate, null_config
from .tensorfile import read_tensor, write_tensor


log = logging.getLogger(__name__)


class StageFailure(RuntimeError):
    """A stage could not produce its outputs."""


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str
    data_dir: str = "data"
    synth: SynthConfig | None = None
    manifest: str | None = None
    features: str | None = None
    n_permutations: int = 1000
    significance_alpha: float = 0.05
    permutation_seed: int = 0
    chunk_size: int = 16384
    roi_threshold: float = 1.0 / 17.0
    roi_min_voxels: int = 600
    cv_folds: int = 5
    cv_seed: int = 0
    rsa_shuffles: int = 100
    rsa_seed: int = 0
    mmap: bool = True

    def __post_init__(self):
        if self.synth is None and self.manifest is None:
            raise ConfigError("config needs either a synth block or a manifest path")
        if self.n_permutations < 1:
            raise ConfigError("n_permutations must be >= 1")
        if not 0 < self.significance_alpha < 1:
            raise ConfigError("significance_alpha must be in (0, 1)")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        if not 0 <= self.roi_threshold <= 1:
            raise ConfigError("roi_threshold must be in [0, 1]")
        if self.roi_min_voxels < 0:
            raise ConfigError("roi_min_voxels must be >= 0")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if self.rsa_shuffles < 1:
            raise ConfigError("rsa_shuffles must be >= 1")

    @property
    def manifest_path(self) -> Path:
        if self.manifest is not None:
            return Path(self.manifest)
        return Path(self.data_dir) / "manifest.json"

    @property
    def features_path(self) -> Path:
        if self.features is not None:
            return Path(self.features)
        return self.manifest_path.parent / "features" / "features.json"


_SYNTH_PRESETS = {"default": default_config, "null": null_config}


def _tuple3(value, name: str) -> tuple[int, int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{name} must have 3 entries")
    return tuple(int(v) for v in value)


def synth_config_from_dict(raw: dict) -> SynthConfig:
    """Build a SynthConfig from JSON data, optionally from a preset.

    ``{"preset": "default", "seed": 3, ...overrides}`` starts from the
    named builder; without ``preset`` all fields are read directly.
    """
    if not isinstance(raw, dict):
        raise ConfigError("synth block must be an object")
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in _SYNTH_PRESETS:
            raise ConfigError(f"unknown synth preset {preset!r}")
        base = _SYNTH_PRESETS[preset](seed=int(raw.pop("seed", 0)))
    else:
        base = SynthConfig()
    fields = {f.name for f in dataclasses.fields(SynthConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown synth fields: {sorted(unknown)}")
    converted = {}
    for key, value in raw.items():
        if key == "grid":
            converted[key] = _tuple3(value, "grid")
        elif key == "layers":
            converted[key] = tuple(
                LayerSpec(**spec) if isinstance(spec, dict) else LayerSpec(*spec) for spec in value
            )
        elif key == "poolings":
            converted[key] = tuple((str(name), float(mult)) for name, mult in value)
        elif key == "rep_probs":
            probs = tuple(float(v) for v in value)
            if len(probs) != 3:
                raise ConfigError("rep_probs must have 3 entries")
            converted[key] = probs
        elif key == "areas":
            specs = []
            for area in value:
                area = dict(area)
                for tup_key in ("origin", "shape"):
                    if tup_key in area:
                        area[tup_key] = _tuple3(area[tup_key], tup_key)
                for tup_key in ("consistency", "selectivity"):
                    if tup_key in area:
                        area[tup_key] = tuple(float(v) for v in area[tup_key])
                try:
                    specs.append(AreaSpec(**area))
                except TypeError as exc:
                    raise ConfigError(f"bad area spec: {exc}") from exc
            converted[key] = tuple(specs)
        else:
            converted[key] = value
    try:
        return dataclasses.replace(base, **converted)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a pipeline config JSON file; paths resolve against its dir."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    base = path.parent
    kwargs = dict(raw)
    for key in ("out_dir", "data_dir", "manifest", "features"):
        if kwargs.get(key) is not None:
            kwargs[key] = str((base / kwargs[key]).resolve())
    if kwargs.get("synth") is not None:
        kwargs["synth"] = synth_config_from_dict(kwargs["synth"])
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# provenance helpers

_HASH_CACHE: dict[tuple[str, int, int], str] = {}


def _sha256(path: Path) -> str:
    stat = path.stat()
    key = (str(path.resolve()), stat.st_size, stat.st_mtime_ns)
    if key not in _HASH_CACHE:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
        _HASH_CACHE[key] = h.hexdigest()
    return _HASH_CACHE[key]


def _relname(path: Path, cfg: PipelineConfig) -> str:
    """Stable reference for provenance keys, independent of abs location."""
    path = path.resolve()
    roots = (
        ("out", Path(cfg.out_dir).resolve()),
        ("data", cfg.manifest_path.parent.resolve()),
    )
    for tag, root in roots:
        try:
            return f"{tag}:{path.relative_to(root).as_posix()}"
        except ValueError:
            continue
    return path.name


def _write_provenance(
    cfg: PipelineConfig, stage: str, params: dict, inputs: list[Path], outputs: list[Path]
) -> None:
    record = {
        "stage": stage,
        "version": __version__,
        "params": params,
        "inputs": {_relname(p, cfg): _sha256(p) for p in inputs},
        "outputs": {_relname(p, cfg): _sha256(p) for p in outputs},
    }
    target = Path(cfg.out_dir) / stage / "provenance.json"
    target.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    d = Path(cfg.out_dir) / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _data_files(cfg: PipelineConfig, localizers: bool = False) -> list[Path]:
    man = load_manifest(cfg.manifest_path)
    files = [cfg.manifest_path]
    for part in man.participants:
        files.append(man.resolve(part.activations))
        files.append(man.resolve(part.coordinates))
        if localizers and part.localizer:
            files.extend(man.resolve(rel) for rel in part.localizer.values())
    files.append(man.resolve(man.atlas))
    return files


# ---------------------------------------------------------------------------
# stages


def run_synth(cfg: PipelineConfig) -> Path:
    if cfg.synth is None:
        raise ConfigError("no synth block in config")
    out = Path(cfg.data_dir)
    manifest_path, _ = generate(cfg.synth, out)
    stage = _stage_dir(cfg, "synth")
    written = sorted(p for p in out.rglob("*") if p.is_file())
    _write_provenance(
        cfg,
        "synth",
        {"config": dataclasses.asdict(cfg.synth)},
        [],
        written,
    )
    return stage


def run_consistency(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "consistency")
    ds = load_dataset(cfg.manifest_path, mmap=cfg.mmap)
    split = split_half_partition(ds.rep_presence())
    (stage / "split.json").write_text(
        json.dumps(
            {
                "partitions": [list(p) for p in PARTITIONS],
                "assignment": split.partition.tolist(),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    outputs = [stage / "split.json"]
    masks = []
    summary_rows = []
    for part in ds.participants:
        c, o, r = ds.participant_stimuli(part)
        res = significance_mask(
            part.activations,
            c,
            o,
            r,
            ds.n_concepts,
            split,
            n_permutations=cfg.n_permutations,
            alpha=cfg.significance_alpha,
            seed=cfg.permutation_seed,
            chunk_size=cfg.chunk_size,
        )
        masks.append(res.significant)
        for name, arr in (
            ("mask", res.significant.astype(np.float32)),
            ("p_a", res.p_a),
            ("p_b", res.p_b),
            ("c_all", res.c_all),
            ("c_a", res.c_a),
            ("c_b", res.c_b),
        ):
            target = stage / f"{part.id}_{name}.btsr"
            write_tensor(target, arr)
            outputs.append(target)
        summary_rows.append(
            (part.id, part.n_voxels, int(res.significant.sum()), res.n_excluded)
        )
    prob = probabilistic_map(np.stack(masks))
    write_tensor(stage / "prob_map.btsr", prob)
    outputs.append(stage / "prob_map.btsr")
    _write_csv(
        stage / "summary.csv",
        ["participant", "n_voxels", "n_significant", "n_excluded"],
        summary_rows,
    )
    outputs.append(stage / "summary.csv")
    _write_provenance(
        cfg,
        "consistency",
        {
            "n_permutations": cfg.n_permutations,
            "alpha": cfg.significance_alpha,
            "seed": cfg.permutation_seed,
        },
        _data_files(cfg),
        outputs,
    )
    return stage


def run_rois(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "rois")
    ds = load_dataset(cfg.manifest_path, mmap=True)
    if ds.atlas is None:
        raise StageFailure("manifest has no atlas volume")
    coords = ds.participants[0].coords
    labels = atlas_labels(ds.atlas, coords)
    prob_path = Path(cfg.out_dir) / "consistency" / "prob_map.btsr"
    if not prob_path.exists():
        raise StageFailure("consistency stage outputs missing; run it first")
    prob = read_tensor(prob_path)
    area_values = area_average(prob, labels)
    selection = select_rois(
        area_values,
        labels,
        coords,
        ds.atlas.shape,
        threshold=cfg.roi_threshold,
        min_voxels=cfg.roi_min_voxels,
    )
    record = {
        "threshold": cfg.roi_threshold,
        "min_voxels": cfg.roi_min_voxels,
        "kept_areas": [int(a) for a in selection.kept_areas],
        "components": [
            {"areas": list(areas), "n_voxels": size} for areas, size in selection.components
        ],
        "rois": [
            {
                "id": roi.id,
                "areas": list(roi.areas),
                "n_voxels": roi.n_voxels,
                "voxels": [int(v) for v in roi_voxels(roi, labels)],
            }
            for roi in selection.rois
        ],
    }
    (stage / "rois.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    _write_csv(
        stage / "area_values.csv",
        ["area", "prob_mean", "kept"],
        [
            (a, area_values[a], int(a in set(int(x) for x in selection.kept_areas)))
            for a in range(1, area_values.shape[0])
            if np.isfinite(area_values[a])
        ],
    )
    _write_provenance(
        cfg,
        "rois",
        {"threshold": cfg.roi_threshold, "min_voxels": cfg.roi_min_voxels},
        [cfg.manifest_path, prob_path],
        [stage / "rois.json", stage / "area_values.csv"],
    )
    return stage


def _load_rois(cfg: PipelineConfig) -> list[dict]:
    path = Path(cfg.out_dir) / "rois" / "rois.json"
    if not path.exists():
        raise StageFailure("rois stage outputs missing; run it first")
    return json.loads(path.read_text())["rois"]


def _load_feature_sets(cfg: PipelineConfig) -> dict[FeatureConfig, np.ndarray]:
    path = cfg.features_path
    if not path.exists():
        raise StageFailure(f"feature index not found: {path}")
    index = json.loads(path.read_text())
    if index.get("schema_version") != 1:
        raise StageFailure("unsupported features.json schema")
    sets = {}
    for entry in index["entries"]:
        fc = FeatureConfig(entry["model"], int(entry["layer"]), entry["pooling"])
        matrix = read_tensor(path.parent.parent / entry["path"]).astype(np.float64)
        if matrix.shape[1] != int(entry["dim"]):
            raise StageFailure(f"feature dim mismatch for {entry['path']}")
        sets[fc] = matrix
    if not sets:
        raise StageFailure("features.json lists no feature sets")
    return sets


def _feature_files(cfg: PipelineConfig) -> list[Path]:
    path = cfg.features_path
    index = json.loads(path.read_text())
    return [path] + [path.parent.parent / e["path"] for e in index["entries"]]


def run_encode(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "encode")
    ds = load_dataset(cfg.manifest_path, mmap=cfg.mmap)
    rois = _load_rois(cfg)
    coords = ds.participants[0].coords
    labels = atlas_labels(ds.atlas, coords) if ds.atlas is not None else np.zeros(coords.shape[0], np.int64)
    target_voxels = np.flatnonzero(labels > 0)
    outputs = []
    if target_voxels.size == 0:
        record = {"participants": {}, "group_best": None, "note": "no labeled voxels"}
        (stage / "summary.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        _write_provenance(cfg, "encode", {}, [cfg.manifest_path], [stage / "summary.json"])
        return stage

    write_tensor(stage / "voxels.btsr", target_voxels.astype(np.float64))
    outputs.append(stage / "voxels.btsr")
    feature_sets = _load_feature_sets(cfg)
    labels_t = labels[target_voxels]
    roi1 = rois[0] if rois else None
    # Selection target: mean signal of the primary ROI, or of all labeled
    # voxels when no ROI survived.
    sel_voxels = np.asarray(roi1["voxels"], dtype=np.int64) if roi1 else target_voxels

    sweep_rows = []
    bins_rows = []
    area_rows = []
    per_participant = {}
    best_votes: list[FeatureConfig] = []
    for pi, part in enumerate(ds.participants):
        c, o, r = ds.participant_stimuli(part)
        acts_t = np.asarray(part.activations[:, target_voxels], dtype=np.float64)
        acts_c, c_c, o_c, r_c, groups = word_cloud_collapse(acts_t, c, o, r)
        rows = part.stimulus_ids
        part_sets = {
            fc: collapse_rows(X[rows], groups) for fc, X in feature_sets.items()
        }
        sel_cols = np.searchsorted(target_voxels, sel_voxels)
        y_sel = acts_c[:, sel_cols].mean(axis=1)
        best, table = select_best_feature_config(
            y_sel, part_sets, n_folds=cfg.cv_folds, seed=cfg.cv_seed
        )
        best_votes.append(best)
        for fc, score in table:
            sweep_rows.append((part.id, fc.model, fc.layer, fc.pooling, score))
        res = cv_predictivity(
            part_sets[best], acts_c, n_folds=cfg.cv_folds, seed=cfg.cv_seed
        )
        write_tensor(stage / f"{part.id}_predictivity.btsr", res.r)
        outputs.append(stage / f"{part.id}_predictivity.btsr")

        # Per-area summaries against the participant's consistency map.
        c_all = read_tensor(Path(cfg.out_dir) / "consistency" / f"{part.id}_c_all.btsr")
        area_pred = area_average(res.r, labels_t)
        area_cons = area_average(c_all[target_voxels], labels_t)
        try:
            corr, n_areas = area_predictivity_correlation(area_pred, area_cons)
        except ValueError:
            corr, n_areas = float("nan"), 0
        for a in range(1, area_pred.shape[0]):
            if np.isfinite(area_pred[a]) or np.isfinite(area_cons[a]):
                area_rows.append((part.id, a, area_cons[a], area_pred[a]))

        # Binned predictivity inside the primary ROI.
        bins_done = False
        if roi1 is not None and part.localizer is not None:
            roi_cols = np.searchsorted(target_voxels, np.asarray(roi1["voxels"], dtype=np.int64))
            sel_map = language_selectivity(
                part.localizer["sentences"], part.localizer["nonwords"]
            )[target_voxels]
            cvals = c_all[target_voxels][roi_cols]
            svals = sel_map[roi_cols]
            finite = np.isfinite(cvals) & np.isfinite(svals)
            if finite.sum() >= 16:
                cols = roi_cols[finite]
                binned = binned_predictivity(
                    acts_c[:, cols],
                    part_sets[best],
                    quartile_bins(cvals[finite]),
                    quartile_bins(svals[finite]),
                    n_folds=cfg.cv_folds,
                    seed=cfg.cv_seed,
                )
                for bc in range(4):
                    for bl in range(4):
                        bins_rows.append(
                            (part.id, bc + 1, bl + 1, binned.r[bc, bl], binned.n_voxels[bc, bl])
                        )
                bins_done = True
        per_participant[part.id] = {
            "best": {"model": best.model, "layer": best.layer, "pooling": best.pooling},
            "area_correlation": None if not np.isfinite(corr) else corr,
            "n_areas": n_areas,
            "binned": bins_done,
        }

    # Group best: the config winning the per-participant sweep most often;
    # ties resolve by the sweep's own ordering (layer, then pooling).
    order = sorted(feature_sets, key=FeatureConfig.sort_key)
    counts = {fc: 0 for fc in order}
    for fc in best_votes:
        counts[fc] += 1
    group_best = max(order, key=lambda fc: (counts[fc], -order.index(fc)))
    record = {
        "participants": per_participant,
        "group_best": {
            "model": group_best.model,
            "layer": group_best.layer,
            "pooling": group_best.pooling,
        },
    }
    (stage / "summary.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    outputs.append(stage / "summary.json")
    _write_csv(stage / "sweep.csv", ["participant", "model", "layer", "pooling", "r"], sweep_rows)
    _write_csv(
        stage / "bins.csv",
        ["participant", "consistency_bin", "selectivity_bin", "r", "n_voxels"],
        bins_rows,
    )
    _write_csv(
        stage / "areas.csv", ["participant", "area", "consistency", "predictivity"], area_rows
    )
    outputs.extend([stage / "sweep.csv", stage / "bins.csv", stage / "areas.csv"])
    inputs = _data_files(cfg, localizers=True) + _feature_files(cfg)
    inputs.append(Path(cfg.out_dir) / "rois" / "rois.json")
    inputs.extend(
        Path(cfg.out_dir) / "consistency" / f"{p.id}_c_all.btsr" for p in ds.participants
    )
    _write_provenance(
        cfg,
        "encode",
        {"n_folds": cfg.cv_folds, "seed": cfg.cv_seed},
        inputs,
        outputs,
    )
    return stage


def run_rsa(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "rsa")
    ds = load_dataset(cfg.manifest_path, mmap=cfg.mmap)
    rois = _load_rois(cfg)
    rows = []
    outputs = []
    inputs = [cfg.manifest_path, Path(cfg.out_dir) / "rois" / "rois.json"]
    if rois:
        encode_summary = Path(cfg.out_dir) / "encode" / "summary.json"
        if not encode_summary.exists():
            raise StageFailure("encode stage outputs missing; run it first")
        best_rec = json.loads(encode_summary.read_text())["group_best"]
        inputs.append(encode_summary)
        feature_sets = _load_feature_sets(cfg)
        inputs.extend(_feature_files(cfg))
        best = FeatureConfig(best_rec["model"], int(best_rec["layer"]), best_rec["pooling"])
        features = feature_sets[best]
        roi1_vox = np.asarray(rois[0]["voxels"], dtype=np.int64)
        masks = {}
        for part in ds.participants:
            mask_path = Path(cfg.out_dir) / "consistency" / f"{part.id}_mask.btsr"
            if not mask_path.exists():
                raise StageFailure("consistency stage outputs missing; run it first")
            inputs.append(mask_path)
            masks[part.id] = read_tensor(mask_path) > 0.5

        def score_rows(part, condition, rdm_model, tag):
            c, o, _ = ds.participant_stimuli(part)
            acts = np.asarray(part.activations, dtype=np.float64)
            mask = masks[part.id]
            for restriction, voxels in (
                ("all", roi1_vox),
                ("significant", roi1_vox[mask[roi1_vox]]),
            ):
                if voxels.size == 0:
                    log.warning(
                        "%s %s: no voxels under restriction %r", part.id, condition, restriction
                    )
                    continue
                rdm_brain = rdm(
                    brain_concept_vectors(acts, c, o, voxels, condition, ds.n_concepts)
                )
                if restriction == "all":
                    write_tensor(stage / f"rdm_{part.id}_{tag}.btsr", rdm_brain)
                    outputs.append(stage / f"rdm_{part.id}_{tag}.btsr")
                score = rsa_score(rdm_model, rdm_brain)
                null = shuffled_baseline(
                    rdm_model, rdm_brain, n_shuffles=cfg.rsa_shuffles, seed=cfg.rsa_seed
                )
                rows.append(
                    (
                        part.id,
                        condition,
                        restriction,
                        score,
                        null.mean(),
                        null.std(ddof=1),
                        cfg.rsa_shuffles,
                    )
                )

        for condition in ("text-only", "text+image"):
            rdm_model = rdm(
                model_concept_vectors(
                    features, ds.concept, ds.paradigm, condition, ds.n_concepts
                )
            )
            tag = condition.replace("+", "_")
            write_tensor(stage / f"rdm_model_{tag}.btsr", rdm_model)
            outputs.append(stage / f"rdm_model_{tag}.btsr")
            for part in ds.participants:
                score_rows(part, condition, rdm_model, tag)
        man = load_manifest(cfg.manifest_path)
        inputs.extend(man.resolve(p.activations) for p in man.participants)
    _write_csv(
        stage / "rsa.csv",
        ["participant", "condition", "restriction", "r", "baseline_mean", "baseline_sd", "n_shuffles"],
        rows,
    )
    outputs.append(stage / "rsa.csv")
    _write_provenance(
        cfg,
        "rsa",
        {"n_shuffles": cfg.rsa_shuffles, "seed": cfg.rsa_seed},
        inputs,
        outputs,
    )
    return stage


def run_ceiling(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "ceiling")
    ds = load_dataset(cfg.manifest_path, mmap=cfg.mmap)
    rois = _load_rois(cfg)
    coords = ds.participants[0].coords
    labels = atlas_labels(ds.atlas, coords) if ds.atlas is not None else np.zeros(coords.shape[0], np.int64)

    def concept_profile(part, voxels) -> np.ndarray:
        """Per-concept mean of the voxel-set mean response, all stimuli."""
        c, _, _ = ds.participant_stimuli(part)
        ts = np.asarray(part.activations[:, voxels], dtype=np.float64).mean(axis=1)
        sums = np.bincount(c, weights=ts, minlength=ds.n_concepts)
        counts = np.bincount(c, minlength=ds.n_concepts)
        return sums / counts

    roi_rows = []
    for roi in rois:
        voxels = np.asarray(roi["voxels"], dtype=np.int64)
        vecs = np.stack([concept_profile(p, voxels) for p in ds.participants])
        ceiling, per_part = noise_ceiling(vecs)
        roi_rows.append((roi["id"], roi["n_voxels"], ceiling, int(ceiling > RELIABILITY_CUTOFF)))
    area_rows = []
    if len(ds.participants) >= 2:
        for area in np.unique(labels):
            if area <= 0:
                continue
            voxels = np.flatnonzero(labels == area)
            vecs = np.stack([concept_profile(p, voxels) for p in ds.participants])
            ceiling, _ = noise_ceiling(vecs)
            area_rows.append((int(area), voxels.size, ceiling, int(ceiling > RELIABILITY_CUTOFF)))
    _write_csv(
        stage / "roi_ceiling.csv", ["roi", "n_voxels", "ceiling", "reliable"], roi_rows
    )
    _write_csv(
        stage / "area_ceiling.csv", ["area", "n_voxels", "ceiling", "reliable"], area_rows
    )
    _write_provenance(
        cfg,
        "ceiling",
        {"cutoff": RELIABILITY_CUTOFF},
        _data_files(cfg) + [Path(cfg.out_dir) / "rois" / "rois.json"],
        [stage / "roi_ceiling.csv", stage / "area_ceiling.csv"],
    )
    return stage


def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().splitlines()
    if not lines:
        return [], []
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def run_report(cfg: PipelineConfig) -> Path:
    stage = _stage_dir(cfg, "report")
    out = Path(cfg.out_dir)
    inputs = []

    summary: dict = {"version": __version__}

    cons_csv = out / "consistency" / "summary.csv"
    if cons_csv.exists():
        header, rows = _read_csv_rows(cons_csv)
        inputs.append(cons_csv)
        summary["consistency"] = [
            {
                "participant": r[0],
                "n_voxels": int(r[1]),
                "n_significant": int(r[2]),
                "n_excluded": int(r[3]),
            }
            for r in rows
        ]
    prob_path = out / "consistency" / "prob_map.btsr"
    if prob_path.exists():
        prob = read_tensor(prob_path)
        inputs.append(prob_path)
        summary["prob_map"] = {
            "max": float(prob.max()),
            "n_nonzero": int((prob > 0).sum()),
        }

    rois_path = out / "rois" / "rois.json"
    if rois_path.exists():
        rois = json.loads(rois_path.read_text())["rois"]
        inputs.append(rois_path)
        summary["rois"] = [
            {"id": r["id"], "areas": r["areas"], "n_voxels": r["n_voxels"]} for r in rois
        ]

    encode_summary = out / "encode" / "summary.json"
    if encode_summary.exists():
        enc = json.loads(encode_summary.read_text())
        inputs.append(encode_summary)
        summary["encoding"] = enc

    sweep_csv = out / "encode" / "sweep.csv"
    if sweep_csv.exists():
        header, rows = _read_csv_rows(sweep_csv)
        inputs.append(sweep_csv)
        agg: dict[tuple, list[float]] = {}
        for r in rows:
            agg.setdefault((r[1], r[2], r[3]), []).append(float(r[4]))
        _write_csv(
            stage / "feature_sweep.csv",
            ["model", "layer", "pooling", "mean_r", "n_participants"],
            [
                (model, layer, pooling, float(np.mean(vals)), len(vals))
                for (model, layer, pooling), vals in sorted(agg.items(), key=lambda kv: (kv[0][0], int(kv[0][1]), kv[0][2]))
            ],
        )

    bins_csv = out / "encode" / "bins.csv"
    if bins_csv.exists():
        header, rows = _read_csv_rows(bins_csv)
        inputs.append(bins_csv)
        cells: dict[tuple[int, int], list[float]] = {}
        for r in rows:
            val = float(r[3])
            if np.isfinite(val):
                cells.setdefault((int(r[1]), int(r[2])), []).append(val)
        _write_csv(
            stage / "binned_predictivity.csv",
            ["consistency_bin", "selectivity_bin", "mean_r", "n_participants"],
            [
                (bc, bl, float(np.mean(vals)), len(vals))
                for (bc, bl), vals in sorted(cells.items())
            ],
        )

    rsa_csv = out / "rsa" / "rsa.csv"
    ceil_csv = out / "ceiling" / "roi_ceiling.csv"
    if rsa_csv.exists():
        header, rows = _read_csv_rows(rsa_csv)
        inputs.append(rsa_csv)
        roi1_ceiling = float("nan")
        if ceil_csv.exists():
            cheader, crows = _read_csv_rows(ceil_csv)
            inputs.append(ceil_csv)
            if crows:
                roi1_ceiling = float(crows[0][2])
        by_key: dict[tuple[str, str], list[float]] = {}
        base_key: dict[tuple[str, str], list[float]] = {}
        for r in rows:
            by_key.setdefault((r[1], r[2]), []).append(float(r[3]))
            base_key.setdefault((r[1], r[2]), []).append(float(r[4]))
        rsa_rows = []
        summary["rsa"] = {}
        for cond, restriction in sorted(by_key):
            raw = float(np.mean(by_key[(cond, restriction)]))
            base = float(np.mean(base_key[(cond, restriction)]))
            adj = ceiling_adjust(raw, roi1_ceiling)
            rsa_rows.append(
                (cond, restriction, raw, base, roi1_ceiling, adj.adjusted, int(adj.reliable))
            )
            if restriction == "all":
                summary["rsa"][cond] = {
                    "r": raw,
                    "baseline_mean": base,
                    "ceiling": None if not np.isfinite(roi1_ceiling) else roi1_ceiling,
                    "ceiling_adjusted": None if not np.isfinite(adj.adjusted) else adj.adjusted,
                    "reliable": adj.reliable,
                }
            else:
                summary["rsa"].setdefault(cond, {})["significant_r"] = raw
        _write_csv(
            stage / "rsa_summary.csv",
            ["condition", "restriction", "r", "baseline_mean", "ceiling", "ceiling_adjusted", "reliable"],
            rsa_rows,
        )

    (stage / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs = sorted(p for p in stage.iterdir() if p.is_file() and p.name != "provenance.json")
    _write_provenance(cfg, "report", {}, inputs, outputs)
    return stage


_STAGES = {
    "synth": run_synth,
    "consistency": run_consistency,
    "rois": run_rois,
    "encode": run_encode,
    "rsa": run_rsa,
    "ceiling": run_ceiling,
    "report": run_report,
}


def run_all(cfg: PipelineConfig) -> list[str]:
    """Run every stage in order; synth is skipped without a synth block."""
    ran = []
    for name, fn in _STAGES.items():
        if name == "synth" and cfg.synth is None:
            continue
        fn(cfg)
        ran.append(name)
    return ran
