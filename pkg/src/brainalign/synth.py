"""Synthetic dataset generator with analytic ground truth.

The generative model plants every quantity the pipeline estimates, so
tests can score estimates against closed-form targets. Per participant
p, voxel v (in area A(v)) and stimulus s (concept c, paradigm o,
repetition k):

    beta[p,v,s] = a_v * <w_v, z_c>  +  b_v * q[p,A(v),o,c]  +  sigma_v * eps

* ``z_c`` are iid N(0, I) latent concept vectors shared by brain and
  feature sides.
* ``w_v`` is the voxel's tuning direction. Modes per area: ``shared``
  (all voxels use one unit direction, so area means keep full signal),
  ``random`` (per-voxel unit directions) and ``isometric`` (rows of a
  scaled column-orthogonal matrix, preserving concept geometry for RSA).
* ``q`` is a paradigm-specific concept tuning drawn per participant and
  area: it caps consistency below 1 and is what the noise ceiling
  treats as participant noise.
* ``eps`` is iid stimulus noise.

Feature files per (layer, pooling) hold ``m * O (z_c + phi * g[o,c]) +
tau * eta`` with column-orthogonal mixing O, so middle layers with high
``m / tau`` are the planted best configs. Word-cloud rows reuse one
draw per concept, making the six arrangement rows byte-identical.

Closed forms (documented in docs/synth_model.md): with
``svar = a^2 ||w||^2`` and per-paradigm mean inverse repetition count
``h_o``, expected consistency is the mean over paradigm pairs of
``svar / sqrt((svar + b^2 + sigma^2 h_1)(svar + b^2 + sigma^2 h_2))``;
encoding predictivity at a layer with scale m and noise tau is
``a ||w|| * m / sqrt(m^2 (1 + phi^2) + tau^2) / sqrt(svar + b^2 +
sigma^2)``; area noise ceilings follow
:func:`brainalign.ceiling.expected_ceiling` with the planted signal and
noise variances of the area-mean response.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ceiling import expected_ceiling
from .dataset import PARADIGMS
from .encoding import FeatureConfig
from .rng import rng_for
from .tensorfile import write_tensor

MAX_REPS = 6

# Stream tags for seed derivation; every random draw is keyed by
# (config.seed, tag, *indices) so outputs are byte-identical per config.
_S_LATENT, _S_DIRECTION, _S_SELECT, _S_TUNING, _S_NOISE = 1, 2, 3, 4, 5
_S_REPS, _S_FEAT_NOISE, _S_FEAT_PARADIGM, _S_LOCALIZER, _S_MIXING = 6, 7, 8, 9, 10


@dataclass(frozen=True)
class LayerSpec:
    """Feature quality of one layer: signal scale m and noise tau."""

    scale: float
    noise: float


@dataclass(frozen=True)
class AreaSpec:
    """A rectangular atlas area and the response profile of its voxels.

    ``consistency`` lists the concept-signal weights ``a`` cycled over
    the area's voxels (several values plant graded consistency classes
    inside one area). ``selectivity`` is the (mean, sd) of the planted
    localizer contrast.
    """

    id: int
    origin: tuple[int, int, int]
    shape: tuple[int, int, int]
    consistency: tuple[float, ...] = (0.0,)
    paradigm: float = 0.0
    noise: float = 1.0
    selectivity: tuple[float, float] = (0.0, 0.0)
    tuning: str = "shared"


@dataclass(frozen=True)
class SynthConfig:
    grid: tuple[int, int, int] = (20, 20, 20)
    n_concepts: int = 180
    n_participants: int = 5
    feature_dim: int = 64
    latent_dim: int = 16
    layers: tuple[LayerSpec, ...] = (
        LayerSpec(scale=0.0, noise=1.0),
        LayerSpec(scale=1.0, noise=0.35),
        LayerSpec(scale=0.7, noise=0.7),
    )
    poolings: tuple[tuple[str, float], ...] = (("mean", 1.0), ("last", 1.6))
    paradigm_feature_weight: float = 0.25
    rep_probs: tuple[float, float, float] = (0.15, 0.25, 0.60)  # P(4), P(5), P(6) reps
    areas: tuple[AreaSpec, ...] = ()
    background_noise: float = 1.0
    localizer_noise: float = 0.1
    dtype: str = "float64"
    model_name: str = "synthetic"
    seed: int = 0

    @property
    def best_layer(self) -> int:
        qualities = [
            spec.scale / np.sqrt(spec.scale**2 * (1 + self.paradigm_feature_weight**2) + spec.noise**2)
            if (spec.scale or spec.noise)
            else 0.0
            for spec in self.layers
        ]
        return int(np.argmax(qualities))

    @property
    def best_pooling(self) -> str:
        return min(self.poolings, key=lambda item: item[1])[0]


@dataclass
class GroundTruth:
    """Planted per-voxel parameters and their closed-form consequences."""

    area_id: np.ndarray  # (V,)
    a: np.ndarray  # (V,) concept signal weight
    b: np.ndarray  # (V,) paradigm-specific weight
    sigma: np.ndarray  # (V,) stimulus noise sd
    tuning_norm: np.ndarray  # (V,) ||w_v||
    selectivity: np.ndarray  # (V,) planted localizer contrast
    consistency_class: np.ndarray  # (V,) index into the area's class cycle, -1 background
    expected_c: np.ndarray  # (P, V) population consistency over all repetitions
    encoding_rho: np.ndarray  # (V,) predictivity target at the best feature config
    best_layer: int
    best_pooling: str
    area_ceiling: dict[int, float]
    area_signal_var: dict[int, float]
    area_noise_var: dict[int, float]
    consistent_areas: tuple[int, ...]
    config: SynthConfig


def _grid_coords(grid: tuple[int, int, int]) -> np.ndarray:
    return np.argwhere(np.ones(grid, dtype=bool)).astype(np.int64)


def _area_voxels(spec: AreaSpec, grid: tuple[int, int, int]) -> np.ndarray:
    """Flat voxel indices of a rectangular area, in grid order."""
    o, s = spec.origin, spec.shape
    if any(o[i] < 0 or o[i] + s[i] > grid[i] for i in range(3)):
        raise ValueError(f"area {spec.id} exceeds the grid {grid}")
    xs, ys, zs = (np.arange(o[i], o[i] + s[i]) for i in range(3))
    flat = (
        xs[:, None, None] * (grid[1] * grid[2]) + ys[None, :, None] * grid[2] + zs[None, None, :]
    )
    return flat.ravel()


def plant_parameters(config: SynthConfig) -> tuple[GroundTruth, np.ndarray, np.ndarray]:
    """Draw all latent parameters and derive the ground truth.

    Returns ``(truth, directions, presence)`` where ``directions`` is the
    (V, latent_dim) tuning matrix including signal weights (rows are
    ``a_v * w_v``) and ``presence`` is the (P, C, 3, 6) repetition design.
    The responses themselves are generated separately so the truth is
    fixed before any data are drawn.
    """
    grid = tuple(config.grid)
    n_vox = int(np.prod(grid))
    g = config.latent_dim
    seen = set()
    for spec in config.areas:
        if spec.id in seen or not (1 <= spec.id <= 360):
            raise ValueError(f"bad or duplicate area id {spec.id}")
        seen.add(spec.id)

    area_id = np.zeros(n_vox, dtype=np.int64)
    a = np.zeros(n_vox)
    b = np.zeros(n_vox)
    sigma = np.full(n_vox, float(config.background_noise))
    delta = np.zeros(n_vox)
    klass = np.full(n_vox, -1, dtype=np.int64)
    directions = np.zeros((n_vox, g))

    for spec in config.areas:
        members = _area_voxels(spec, grid)
        if np.any(area_id[members] != 0):
            raise ValueError(f"area {spec.id} overlaps another area")
        area_id[members] = spec.id
        classes = np.asarray(spec.consistency, dtype=np.float64)
        idx = np.arange(members.size) % classes.size
        a[members] = classes[idx]
        klass[members] = idx
        b[members] = spec.paradigm
        sigma[members] = spec.noise
        rng = rng_for(config.seed, _S_SELECT, spec.id)
        delta[members] = spec.selectivity[0] + spec.selectivity[1] * rng.standard_normal(members.size)
        rng = rng_for(config.seed, _S_DIRECTION, spec.id)
        if spec.tuning == "shared":
            w = rng.standard_normal(g)
            directions[members] = w / np.linalg.norm(w)
        elif spec.tuning == "random":
            w = rng.standard_normal((members.size, g))
            directions[members] = w / np.linalg.norm(w, axis=1, keepdims=True)
        elif spec.tuning == "isometric":
            if members.size < g:
                raise ValueError(f"isometric area {spec.id} needs >= latent_dim voxels")
            q, _ = np.linalg.qr(rng.standard_normal((members.size, g)))
            directions[members] = q * np.sqrt(members.size / g)
        else:
            raise ValueError(f"unknown tuning mode {spec.tuning!r}")

    tuning_norm = np.linalg.norm(directions, axis=1)
    svar = (a * tuning_norm) ** 2

    # Repetition design: per (participant, concept, paradigm) draw the
    # repetition count from rep_probs, then a uniform subset of {0..5}.
    presence = np.zeros((config.n_participants, config.n_concepts, 3, MAX_REPS), dtype=bool)
    for p in range(config.n_participants):
        rng = rng_for(config.seed, _S_REPS, p)
        m = rng.choice([4, 5, 6], size=(config.n_concepts, 3), p=config.rep_probs)
        ranks = np.argsort(rng.random((config.n_concepts, 3, MAX_REPS)), axis=-1)
        presence[p] = ranks < m[..., None]

    # Expected consistency per participant: repetition averaging leaves
    # sigma^2 * mean_c(1 / m) residual noise per paradigm vector.
    h = (1.0 / presence.sum(axis=3)).mean(axis=1)  # (P, 3)
    expected_c = np.empty((config.n_participants, n_vox))
    pairs = ((0, 1), (0, 2), (2, 1))
    for p in range(config.n_participants):
        acc = np.zeros(n_vox)
        for o1, o2 in pairs:
            v1 = svar + b**2 + sigma**2 * h[p, o1]
            v2 = svar + b**2 + sigma**2 * h[p, o2]
            acc += svar / np.sqrt(v1 * v2)
        expected_c[p] = acc / len(pairs)

    best = config.layers[config.best_layer]
    phi = config.paradigm_feature_weight
    tau_best = best.noise * min(m for _, m in config.poolings)
    quality = (
        best.scale / np.sqrt(best.scale**2 * (1 + phi**2) + tau_best**2)
        if best.scale > 0
        else 0.0
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(
            svar > 0, a * tuning_norm * quality / np.sqrt(svar + b**2 + sigma**2), 0.0
        )

    # Ceiling oracles describe per-concept area means taken over all of a
    # participant's stimuli for the concept. The paradigm tuning q enters
    # with the realised per-paradigm weights, the stimulus noise with the
    # realised concept stimulus counts.
    n_per_paradigm = presence.sum(axis=3).astype(np.float64)  # (P, C, 3)
    n_per_concept = n_per_paradigm.sum(axis=2)  # (P, C)
    w2_bar = float(((n_per_paradigm / n_per_concept[..., None]) ** 2).sum(axis=2).mean())
    inv_n_bar = float((1.0 / n_per_concept).mean())

    area_ceiling: dict[int, float] = {}
    area_signal: dict[int, float] = {}
    area_noise: dict[int, float] = {}
    for spec in config.areas:
        members = _area_voxels(spec, grid)
        mean_dir = (directions[members] * a[members, None]).mean(axis=0)
        sig = float(mean_dir @ mean_dir)
        eps_var = float((sigma[members] ** 2).sum()) / members.size**2
        noise = float(b[members].mean() ** 2 * w2_bar + eps_var * inv_n_bar)
        area_signal[spec.id] = sig
        area_noise[spec.id] = noise
        area_ceiling[spec.id] = float(
            expected_ceiling(sig, noise, config.n_participants)
        ) if config.n_participants >= 2 else float("nan")

    truth = GroundTruth(
        area_id=area_id,
        a=a,
        b=b,
        sigma=sigma,
        tuning_norm=tuning_norm,
        selectivity=delta,
        consistency_class=klass,
        expected_c=expected_c,
        encoding_rho=rho,
        best_layer=config.best_layer,
        best_pooling=config.best_pooling,
        area_ceiling=area_ceiling,
        area_signal_var=area_signal,
        area_noise_var=area_noise,
        consistent_areas=tuple(
            spec.id for spec in config.areas if max(spec.consistency) > 0
        ),
        config=config,
    )
    return truth, directions * a[:, None], presence


def _stimulus_table(n_concepts: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global stimulus table ordered by (concept, paradigm, repetition)."""
    c, o, k = np.meshgrid(
        np.arange(n_concepts), np.arange(3), np.arange(MAX_REPS), indexing="ij"
    )
    return c.ravel(), o.ravel(), k.ravel()


def generate_activations(
    config: SynthConfig,
    truth: GroundTruth,
    weighted_directions: np.ndarray,
    presence: np.ndarray,
    participant: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Responses (n_stimuli_p, V) and stimulus ids for one participant."""
    dtype = np.float32 if config.dtype == "float32" else np.float64
    concept, paradigm, repetition = _stimulus_table(config.n_concepts)
    seen = presence[participant, concept, paradigm, repetition]
    rows = np.flatnonzero(seen)
    c_rows, o_rows = concept[rows], paradigm[rows]

    z = rng_for(config.seed, _S_LATENT).standard_normal((config.n_concepts, config.latent_dim))
    signal = (z @ weighted_directions.T).astype(dtype)  # (C, V)

    n_areas = int(truth.area_id.max()) + 1
    q = rng_for(config.seed, _S_TUNING, participant).standard_normal(
        (n_areas, 3, config.n_concepts)
    )
    acts = signal[c_rows]
    if np.any(truth.b != 0.0):
        # the gather materialises (n_stimuli, V) float64; skip it when the
        # paradigm term is identically zero (large null calibration grids)
        acts += (
            truth.b[None, :] * q[truth.area_id[None, :], o_rows[:, None], c_rows[:, None]]
        ).astype(dtype)
    eps = rng_for(config.seed, _S_NOISE, participant).standard_normal(
        (rows.size, acts.shape[1]), dtype=np.float32
    )
    acts += truth.sigma.astype(dtype)[None, :] * eps.astype(dtype, copy=False)
    return acts, rows.astype(np.int64)


def generate_features(config: SynthConfig) -> dict[FeatureConfig, np.ndarray]:
    """One (n_stimuli, feature_dim) matrix per (layer, pooling)."""
    concept, paradigm, _ = _stimulus_table(config.n_concepts)
    z = rng_for(config.seed, _S_LATENT).standard_normal((config.n_concepts, config.latent_dim))
    g_par = rng_for(config.seed, _S_FEAT_PARADIGM).standard_normal(
        (3, config.n_concepts, config.latent_dim)
    )
    core = z[concept] + config.paradigm_feature_weight * g_par[paradigm, concept]
    out: dict[FeatureConfig, np.ndarray] = {}
    for layer_idx, layer in enumerate(config.layers):
        mix = rng_for(config.seed, _S_MIXING, layer_idx).standard_normal(
            (config.feature_dim, config.latent_dim)
        )
        mix, _ = np.linalg.qr(mix)
        projected = layer.scale * (core @ mix.T)
        for pool_idx, (pooling, tau_mult) in enumerate(config.poolings):
            eta = rng_for(config.seed, _S_FEAT_NOISE, layer_idx, pool_idx).standard_normal(
                (config.n_concepts, 3, MAX_REPS, config.feature_dim)
            )
            eta[:, 2] = eta[:, 2, :1]  # word-cloud rows share one draw per concept
            x = projected + layer.noise * tau_mult * eta.reshape(-1, config.feature_dim)
            out[FeatureConfig(config.model_name, layer_idx, pooling)] = x.astype(np.float32)
    return out


def generate_localizer(config: SynthConfig, truth: GroundTruth, participant: int) -> dict[str, np.ndarray]:
    rng = rng_for(config.seed, _S_LOCALIZER, participant)
    noise = config.localizer_noise
    n_vox = truth.selectivity.shape[0]
    return {
        "sentences": truth.selectivity + noise * rng.standard_normal(n_vox),
        "nonwords": noise * rng.standard_normal(n_vox),
    }


def _atlas_volume(config: SynthConfig, truth: GroundTruth) -> np.ndarray:
    return truth.area_id.reshape(config.grid).astype(np.float64)


def _stimulus_content(config: SynthConfig, concept_labels: list[str], c: int, o: int, k: int) -> dict:
    label = concept_labels[c]
    if PARADIGMS[o] == "S":
        return {"text": f"A sentence about {label}, variant {k}."}
    if PARADIGMS[o] == "P":
        return {"text": label.capitalize(), "image": f"images/{label}_{k}.png"}
    return {"words": [f"{label}-rel{j}" for j in range(1, 6)]}


def generate(config: SynthConfig, out_dir: str | Path) -> tuple[Path, GroundTruth]:
    """Write a full dataset (manifest, tensors, features, truth) to disk.

    Returns ``(manifest_path, truth)``. Output is byte-identical for a
    fixed (config, seed).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "features").mkdir(exist_ok=True)
    (out_dir / "truth").mkdir(exist_ok=True)

    truth, weighted, presence = plant_parameters(config)
    coords = _grid_coords(config.grid)
    write_tensor(out_dir / "atlas.btsr", _atlas_volume(config, truth))

    concept_labels = [f"concept{c:03d}" for c in range(config.n_concepts)]
    concept, paradigm, repetition = _stimulus_table(config.n_concepts)
    stimuli = []
    for i in range(concept.shape[0]):
        rec = {
            "id": int(i),
            "concept": int(concept[i]),
            "paradigm": PARADIGMS[paradigm[i]],
            "repetition": int(repetition[i]),
        }
        rec.update(
            _stimulus_content(config, concept_labels, int(concept[i]), int(paradigm[i]), int(repetition[i]))
        )
        stimuli.append(rec)

    participants = []
    for p in range(config.n_participants):
        pid = f"sub-{p + 1:02d}"
        acts, stim_ids = generate_activations(config, truth, weighted, presence, p)
        write_tensor(out_dir / f"{pid}_beta.btsr", acts)
        write_tensor(out_dir / f"{pid}_voxels.btsr", coords.astype(np.float64))
        localizer = generate_localizer(config, truth, p)
        write_tensor(out_dir / f"{pid}_loc_sentences.btsr", localizer["sentences"])
        write_tensor(out_dir / f"{pid}_loc_nonwords.btsr", localizer["nonwords"])
        participants.append(
            {
                "id": pid,
                "activations": f"{pid}_beta.btsr",
                "coordinates": f"{pid}_voxels.btsr",
                "stimulus_ids": [int(s) for s in stim_ids],
                "localizer": {
                    "sentences": f"{pid}_loc_sentences.btsr",
                    "nonwords": f"{pid}_loc_nonwords.btsr",
                },
            }
        )

    features = generate_features(config)
    entries = []
    for fc, matrix in sorted(features.items(), key=lambda kv: kv[0].sort_key()):
        rel = f"features/{fc.model}_layer{fc.layer:02d}_{fc.pooling}.btsr"
        write_tensor(out_dir / rel, matrix)
        entries.append(
            {"model": fc.model, "layer": fc.layer, "pooling": fc.pooling, "path": rel, "dim": int(matrix.shape[1])}
        )
    (out_dir / "features" / "features.json").write_text(
        json.dumps({"schema_version": 1, "entries": entries}, indent=2, sort_keys=True) + "\n"
    )

    manifest = {
        "schema_version": 1,
        "concepts": concept_labels,
        "atlas": "atlas.btsr",
        "participants": participants,
        "stimuli": stimuli,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    for name, arr in (
        ("area_id", truth.area_id.astype(np.float64)),
        ("a", truth.a),
        ("b", truth.b),
        ("sigma", truth.sigma),
        ("selectivity", truth.selectivity),
        ("expected_c", truth.expected_c),
        ("encoding_rho", truth.encoding_rho),
    ):
        write_tensor(out_dir / "truth" / f"{name}.btsr", arr)
    summary = {
        "best_layer": truth.best_layer,
        "best_pooling": truth.best_pooling,
        "consistent_areas": list(truth.consistent_areas),
        "area_ceiling": {str(k): v for k, v in truth.area_ceiling.items()},
        "area_signal_var": {str(k): v for k, v in truth.area_signal_var.items()},
        "area_noise_var": {str(k): v for k, v in truth.area_noise_var.items()},
        "config": asdict(config),
    }
    (out_dir / "truth" / "ground_truth.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return manifest_path, truth


def default_config(seed: int = 0) -> SynthConfig:
    """Desk-scale config: 20^3 grid, 5 participants, one ROI-sized cluster.

    Areas 1-12 form a 768-voxel block cluster with four graded
    consistency classes (the intended ROI). Areas 13-16 form a 256-voxel
    consistent cluster that the >600-voxel filter must drop. Areas 17-24
    are null controls with varied selectivity.
    """
    areas = []
    aid = 1
    for bx in range(3):
        for by in range(2):
            for bz in range(2):
                areas.append(
                    AreaSpec(
                        id=aid,
                        origin=(4 * bx, 4 * by, 4 * bz),
                        shape=(4, 4, 4),
                        consistency=(0.25, 0.45, 0.7, 1.0),
                        paradigm=0.6,
                        noise=0.8,
                        selectivity=(0.5, 0.25),
                        tuning="shared",
                    )
                )
                aid += 1
    for bz in range(4):
        areas.append(
            AreaSpec(
                id=aid,
                origin=(16, 16, 4 * bz),
                shape=(4, 4, 4),
                consistency=(0.6,),
                paradigm=0.5,
                noise=0.8,
                selectivity=(0.2, 0.2),
                tuning="shared",
            )
        )
        aid += 1
    null_spots = [(0, 12, 12), (4, 12, 12), (12, 0, 8), (12, 4, 8), (16, 8, 0), (8, 16, 8), (12, 12, 16), (0, 16, 16)]
    for i, origin in enumerate(null_spots):
        areas.append(
            AreaSpec(
                id=aid,
                origin=origin,
                shape=(4, 4, 4),
                consistency=(0.0,),
                noise=1.0,
                selectivity=((0.3, 0.15) if i % 2 else (0.0, 0.1)),
            )
        )
        aid += 1
    return SynthConfig(areas=tuple(areas), seed=seed)


def null_config(
    grid: tuple[int, int, int] = (50, 50, 40),
    n_participants: int = 1,
    seed: int = 0,
) -> SynthConfig:
    """All-background config for permutation-test calibration runs."""
    return SynthConfig(
        grid=grid,
        n_participants=n_participants,
        feature_dim=8,
        latent_dim=8,
        layers=(LayerSpec(scale=1.0, noise=0.5),),
        poolings=(("mean", 1.0),),
        rep_probs=(1.0, 0.0, 0.0),
        areas=(),
        # calibration grids reach 1e5 voxels; float32 keeps the
        # activations file and generation peak memory manageable
        dtype="float32",
        seed=seed,
    )
