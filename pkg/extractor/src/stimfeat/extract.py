"""Extraction driver: manifest in, one feature file per (layer, pooling) out.

Feature matrices are row-aligned with the manifest stimulus table:
row ``i`` of every file is the pooled representation of stimulus ``i``.
Stimuli that render to the same model input (identical prompt text and
image path, e.g. the repeated presentations of one word cloud) are
encoded once and share a row value.  An index file ``features.json``
describes every written tensor with paths relative to the parent of the
output directory, which is where the analysis side resolves them from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from re import sub
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, ExtractionError
from .formatting import StimulusText, format_stimulus, image_token_family
from .tensorio import write_tensor

SCHEMA_VERSION = 1
_POOLERS = {
    "mean": lambda tokens: tokens.mean(axis=0),
    "last": lambda tokens: tokens[-1],
    "cls": lambda tokens: tokens[0],
}
_POOLING_RANK = {"mean": 0, "last": 1, "cls": 2, "unimodal-mean": 3, "multimodal": 4}


@dataclass(frozen=True)
class FeatureSpec:
    """One extracted feature set: a model layer under a pooling rule."""

    model: str
    layer: int
    pooling: str

    def filename(self) -> str:
        safe = sub(r"[^A-Za-z0-9._-]+", "-", self.model)
        return f"{safe}_layer{self.layer:02d}_{self.pooling}.btsr"


def load_stimuli(manifest_path: Path) -> Tuple[List[str], List[dict]]:
    """Concept list and stimulus records from a manifest, in row order.

    Only the structure the extractor depends on is checked here: the
    stimulus ids must equal the table positions, otherwise feature rows
    could not be aligned with activation rows downstream.
    """
    try:
        doc = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ExtractionError(f"cannot read manifest {manifest_path}: {exc}") from exc
    concepts = doc.get("concepts")
    stimuli = doc.get("stimuli")
    if not isinstance(concepts, list) or not isinstance(stimuli, list):
        raise ExtractionError("manifest needs 'concepts' and 'stimuli' lists")
    for row, record in enumerate(stimuli):
        if record.get("id") != row:
            raise AlignmentError(
                f"stimulus at position {row} has id {record.get('id')!r}; "
                "feature rows would not align with activation rows"
            )
    return concepts, stimuli


def render_all(
    stimuli: Sequence[dict], concepts: Sequence[str], model_id: str
) -> List[StimulusText]:
    family = image_token_family(model_id)
    return [format_stimulus(record, concepts, family) for record in stimuli]


def extract_features(
    manifest_path: Path,
    backend,
    out_dir: Path,
    layers: Sequence[int] = (),
    poolings: Sequence[str] = ("mean", "last"),
) -> Path:
    """Encode every manifest stimulus and write pooled feature files.

    ``layers`` are hidden-state indices (0 is the embedding layer); an
    empty sequence means every layer the backend exposes.  Returns the
    path of the written ``features.json`` index.
    """
    layers = list(layers) if layers else list(range(backend.n_states))
    for layer in layers:
        if not 0 <= layer < backend.n_states:
            raise ExtractionError(
                f"layer {layer} out of range for {backend.model_id} "
                f"(has {backend.n_states} states)"
            )
    for pooling in poolings:
        if pooling not in backend.poolings:
            raise ExtractionError(
                f"pooling {pooling!r} not supported by {backend.model_id}; "
                f"choose from {', '.join(backend.poolings)}"
            )

    concepts, stimuli = load_stimuli(manifest_path)
    rendered = render_all(stimuli, concepts, backend.model_id)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = sorted(
        (FeatureSpec(backend.model_id, layer, pooling)
         for layer in layers for pooling in poolings),
        key=lambda s: (s.layer, _POOLING_RANK.get(s.pooling, len(_POOLING_RANK))),
    )

    matrices: Dict[FeatureSpec, np.ndarray] = {
        spec: np.empty((len(rendered), backend.dim), dtype=np.float32)
        for spec in specs
    }
    cache: Dict[Tuple[str, str], List[np.ndarray]] = {}
    for row, stim in enumerate(rendered):
        key = (stim.text, stim.image or "")
        states = cache.get(key)
        if states is None:
            states = backend.encode(stim)
            cache[key] = states
        for spec in specs:
            matrices[spec][row] = _POOLERS[spec.pooling](states[spec.layer])

    entries = []
    for spec in specs:
        write_tensor(out_dir / spec.filename(), matrices[spec])
        entries.append(
            {
                "model": spec.model,
                "layer": spec.layer,
                "pooling": spec.pooling,
                "path": f"{out_dir.name}/{spec.filename()}",
                "dim": int(backend.dim),
            }
        )
    index_path = out_dir / "features.json"
    index_path.write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, "entries": entries},
                   indent=2, sort_keys=True)
        + "\n"
    )
    return index_path
