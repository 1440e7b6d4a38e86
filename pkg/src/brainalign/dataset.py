"""Dataset manifest parsing, validation and in-memory loading.

A dataset is a JSON manifest plus BTSR tensors on disk. The manifest
pins the stimulus table (concept, paradigm, repetition per stimulus),
the per-participant tensor paths and the atlas volume. Activation
tensors are stimulus-major: row k of a participant's activation matrix
holds the voxel responses to ``stimulus_ids[k]``.

See ``docs/formats.md`` for the full schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, TensorFormatError
from .tensorfile import read_tensor

SCHEMA_VERSION = 1
PARADIGMS = ("S", "P", "WC")
N_CONCEPTS = 180
MIN_REPS = 4
MAX_REPS = 6


@dataclass(frozen=True)
class Stimulus:
    id: int
    concept: int
    paradigm: str
    repetition: int
    text: str | None = None
    image: str | None = None
    words: tuple[str, ...] | None = None


@dataclass
class Participant:
    id: str
    activations: str
    coordinates: str
    stimulus_ids: list[int]
    localizer: dict[str, str] | None = None


@dataclass
class Manifest:
    schema_version: int
    concepts: list[str]
    participants: list[Participant]
    stimuli: list[Stimulus]
    atlas: str | None = None
    root: Path = field(default_factory=Path)

    def resolve(self, relpath: str) -> Path:
        return self.root / relpath


def _require(record: dict, key: str, kind, where: str):
    if key not in record:
        raise ManifestError(f"{where}: missing key {key!r}")
    value = record[key]
    if not isinstance(value, kind):
        raise ManifestError(f"{where}: {key!r} has type {type(value).__name__}")
    return value


def load_manifest(path: str | Path) -> Manifest:
    """Parse a manifest JSON file.

    Raises :class:`ManifestError` for structural problems (bad JSON,
    missing keys, wrong types). Content rules are checked separately by
    :func:`validate_manifest`.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level is not an object")
    version = _require(doc, "schema_version", int, str(path))
    concepts = _require(doc, "concepts", list, str(path))
    stimuli = []
    for i, rec in enumerate(_require(doc, "stimuli", list, str(path))):
        where = f"{path}: stimuli[{i}]"
        if not isinstance(rec, dict):
            raise ManifestError(f"{where}: not an object")
        words = rec.get("words")
        stimuli.append(
            Stimulus(
                id=_require(rec, "id", int, where),
                concept=_require(rec, "concept", int, where),
                paradigm=_require(rec, "paradigm", str, where),
                repetition=_require(rec, "repetition", int, where),
                text=rec.get("text"),
                image=rec.get("image"),
                words=tuple(words) if words is not None else None,
            )
        )
    participants = []
    for i, rec in enumerate(_require(doc, "participants", list, str(path))):
        where = f"{path}: participants[{i}]"
        if not isinstance(rec, dict):
            raise ManifestError(f"{where}: not an object")
        participants.append(
            Participant(
                id=_require(rec, "id", str, where),
                activations=_require(rec, "activations", str, where),
                coordinates=_require(rec, "coordinates", str, where),
                stimulus_ids=list(_require(rec, "stimulus_ids", list, where)),
                localizer=rec.get("localizer"),
            )
        )
    atlas = doc.get("atlas")
    return Manifest(
        schema_version=version,
        concepts=list(concepts),
        participants=participants,
        stimuli=stimuli,
        atlas=atlas,
        root=path.parent,
    )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)

    def __str__(self) -> str:  # pragma: no cover - convenience only
        return "ok" if self.ok else "\n".join(self.violations)


def validate_manifest(manifest: Manifest | str | Path, check_tensors: bool = True) -> ValidationReport:
    """Check manifest content rules and return a violation report.

    Never raises: parse failures and unreadable tensors become report
    entries. With ``check_tensors`` the referenced BTSR files are opened
    and their shapes checked against the stimulus table and atlas grid.
    """
    report = ValidationReport()
    if not isinstance(manifest, Manifest):
        try:
            manifest = load_manifest(manifest)
        except ManifestError as exc:
            report.add(str(exc))
            return report

    if manifest.schema_version != SCHEMA_VERSION:
        report.add(f"schema_version {manifest.schema_version} != {SCHEMA_VERSION}")
    if len(manifest.concepts) != N_CONCEPTS:
        report.add(f"{len(manifest.concepts)} concept labels, expected {N_CONCEPTS}")
    if len(set(manifest.concepts)) != len(manifest.concepts):
        report.add("concept labels are not unique")

    n = len(manifest.stimuli)
    seen_keys = set()
    for stim in manifest.stimuli:
        where = f"stimulus {stim.id}"
        if stim.id < 0 or stim.id >= n:
            report.add(f"{where}: id outside [0, {n})")
        if stim.concept < 0 or stim.concept >= len(manifest.concepts):
            report.add(f"{where}: concept {stim.concept} outside [0, {len(manifest.concepts)})")
        if stim.paradigm not in PARADIGMS:
            report.add(f"{where}: paradigm {stim.paradigm!r} not in {PARADIGMS}")
        if stim.repetition < 0 or stim.repetition >= MAX_REPS:
            report.add(f"{where}: repetition {stim.repetition} outside [0, {MAX_REPS})")
        key = (stim.concept, stim.paradigm, stim.repetition)
        if key in seen_keys:
            report.add(f"{where}: duplicate (concept, paradigm, repetition) {key}")
        seen_keys.add(key)
    ids = [s.id for s in manifest.stimuli]
    if ids != list(range(n)):
        report.add("stimulus ids are not 0..n-1 in table order")

    atlas = None
    if manifest.atlas is not None and check_tensors:
        try:
            atlas = read_tensor(manifest.resolve(manifest.atlas))
            if atlas.ndim != 3:
                report.add(f"atlas: rank {atlas.ndim}, expected 3")
                atlas = None
            else:
                labels = np.unique(atlas)
                if not np.all(labels == np.round(labels)):
                    report.add("atlas: non-integer labels")
                if labels.min() < 0 or labels.max() > 360:
                    report.add("atlas: labels outside 0..360")
        except (OSError, TensorFormatError) as exc:
            report.add(f"atlas: {exc}")

    pids = [p.id for p in manifest.participants]
    if len(set(pids)) != len(pids):
        report.add("participant ids are not unique")

    by_id = {s.id: s for s in manifest.stimuli}
    reference_coords = None
    for part in manifest.participants:
        where = f"participant {part.id}"
        if len(set(part.stimulus_ids)) != len(part.stimulus_ids):
            report.add(f"{where}: duplicate stimulus ids")
        dangling = [sid for sid in part.stimulus_ids if sid not in by_id]
        if dangling:
            report.add(f"{where}: stimulus ids not in manifest: {dangling[:5]}")
            continue
        counts: dict[tuple[int, str], int] = {}
        for sid in part.stimulus_ids:
            stim = by_id[sid]
            counts[(stim.concept, stim.paradigm)] = counts.get((stim.concept, stim.paradigm), 0) + 1
        expected_pairs = {
            (c, om) for c in range(len(manifest.concepts)) for om in PARADIGMS
        }
        for pair in sorted(expected_pairs | set(counts)):
            got = counts.get(pair, 0)
            if got < MIN_REPS or got > MAX_REPS:
                report.add(
                    f"{where}: concept {pair[0]} paradigm {pair[1]}: "
                    f"{got} repetitions outside [{MIN_REPS}, {MAX_REPS}]"
                )
        if not check_tensors:
            continue
        try:
            acts = read_tensor(manifest.resolve(part.activations), mmap=True, check_finite=False)
            coords = read_tensor(manifest.resolve(part.coordinates))
        except (OSError, TensorFormatError) as exc:
            report.add(f"{where}: {exc}")
            continue
        if acts.ndim != 2 or acts.shape[0] != len(part.stimulus_ids):
            report.add(
                f"{where}: activations shape {acts.shape}, expected "
                f"({len(part.stimulus_ids)}, n_voxels)"
            )
        if coords.ndim != 2 or coords.shape[1] != 3:
            report.add(f"{where}: coordinates shape {coords.shape}, expected (n_voxels, 3)")
            continue
        if not np.all(coords == np.round(coords)) or coords.min() < 0:
            report.add(f"{where}: coordinates must be non-negative integers")
        if acts.ndim == 2 and acts.shape[1] != coords.shape[0]:
            report.add(
                f"{where}: {acts.shape[1]} activation voxels vs {coords.shape[0]} coordinates"
            )
        if reference_coords is None:
            reference_coords = coords
        elif coords.shape != reference_coords.shape or not np.array_equal(coords, reference_coords):
            report.add(f"{where}: voxel grid differs from participant {pids[0]}")
        if atlas is not None and coords.size and np.any(coords.max(axis=0) >= atlas.shape):
            report.add(f"{where}: coordinates fall outside the atlas grid {atlas.shape}")
    return report


@dataclass
class ParticipantData:
    id: str
    activations: np.ndarray  # (n_stimuli, n_voxels) float64
    coords: np.ndarray  # (n_voxels, 3) int64
    stimulus_ids: np.ndarray  # (n_stimuli,) int64, manifest row ids
    localizer: dict[str, np.ndarray] | None = None

    @property
    def n_voxels(self) -> int:
        return self.activations.shape[1]


@dataclass
class Dataset:
    """Fully loaded dataset: stimulus table arrays plus participant tensors."""

    concepts: list[str]
    concept: np.ndarray  # (n_stimuli,) concept index per manifest stimulus
    paradigm: np.ndarray  # (n_stimuli,) code into PARADIGMS
    repetition: np.ndarray  # (n_stimuli,)
    participants: list[ParticipantData]
    atlas: np.ndarray | None = None
    manifest: Manifest | None = None

    @property
    def n_concepts(self) -> int:
        return len(self.concepts)

    def participant_stimuli(self, part: ParticipantData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(concept, paradigm code, repetition) arrays for one participant's rows."""
        sel = part.stimulus_ids
        return self.concept[sel], self.paradigm[sel], self.repetition[sel]

    def rep_presence(self) -> np.ndarray:
        """Boolean (n_participants, n_concepts, 3, 6) presence of each repetition."""
        out = np.zeros((len(self.participants), self.n_concepts, len(PARADIGMS), MAX_REPS), dtype=bool)
        for pi, part in enumerate(self.participants):
            c, om, r = self.participant_stimuli(part)
            out[pi, c, om, r] = True
        return out


def load_dataset(manifest: Manifest | str | Path, mmap: bool = False) -> Dataset:
    """Load every tensor referenced by the manifest into a :class:`Dataset`."""
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    paradigm_code = {name: i for i, name in enumerate(PARADIGMS)}
    concept = np.array([s.concept for s in manifest.stimuli], dtype=np.int64)
    paradigm = np.array([paradigm_code[s.paradigm] for s in manifest.stimuli], dtype=np.int64)
    repetition = np.array([s.repetition for s in manifest.stimuli], dtype=np.int64)
    participants = []
    for part in manifest.participants:
        acts = read_tensor(manifest.resolve(part.activations), mmap=mmap)
        coords = read_tensor(manifest.resolve(part.coordinates)).astype(np.int64)
        localizer = None
        if part.localizer:
            localizer = {
                key: read_tensor(manifest.resolve(rel)).astype(np.float64)
                for key, rel in part.localizer.items()
            }
        participants.append(
            ParticipantData(
                id=part.id,
                activations=acts if mmap else acts.astype(np.float64, copy=False),
                coords=coords,
                stimulus_ids=np.asarray(part.stimulus_ids, dtype=np.int64),
                localizer=localizer,
            )
        )
    atlas = None
    if manifest.atlas is not None:
        atlas = read_tensor(manifest.resolve(manifest.atlas)).astype(np.int64)
    return Dataset(
        concepts=list(manifest.concepts),
        concept=concept,
        paradigm=paradigm,
        repetition=repetition,
        participants=participants,
        atlas=atlas,
        manifest=manifest,
    )
