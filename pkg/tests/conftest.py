import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from brainalign.dataset import N_CONCEPTS, PARADIGMS
from brainalign.tensorfile import write_tensor

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def build_dataset(
    root: Path,
    n_participants: int = 2,
    reps: tuple[int, ...] = (0, 1, 2, 3),
    seed: int = 0,
    edit=None,
) -> Path:
    """Write a minimal structurally valid dataset: full concept table,
    2x2x2 grid, 8 voxels, identical stimulus sets for all participants.

    ``edit(manifest_dict, root)`` may mutate the manifest (and write
    replacement tensors) before it is saved, for violation tests.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    grid = (2, 2, 2)
    n_vox = 8
    atlas = (np.arange(n_vox).reshape(grid) % 3).astype(np.float64)
    write_tensor(root / "atlas.btsr", atlas)
    coords = np.argwhere(np.ones(grid, dtype=bool)).astype(np.float64)

    stimuli = []
    sid = 0
    for c in range(N_CONCEPTS):
        for paradigm in PARADIGMS:
            for k in reps:
                stimuli.append(
                    {"id": sid, "concept": c, "paradigm": paradigm, "repetition": k}
                )
                sid += 1
    participants = []
    for p in range(n_participants):
        pid = f"sub-{p + 1:02d}"
        acts = rng.standard_normal((sid, n_vox))
        write_tensor(root / f"{pid}_beta.btsr", acts)
        write_tensor(root / f"{pid}_voxels.btsr", coords)
        participants.append(
            {
                "id": pid,
                "activations": f"{pid}_beta.btsr",
                "coordinates": f"{pid}_voxels.btsr",
                "stimulus_ids": list(range(sid)),
            }
        )
    manifest = {
        "schema_version": 1,
        "concepts": [f"concept{c:03d}" for c in range(N_CONCEPTS)],
        "atlas": "atlas.btsr",
        "participants": participants,
        "stimuli": stimuli,
    }
    if edit is not None:
        edit(manifest, root)
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


@pytest.fixture()
def dataset_builder(tmp_path):
    counter = [0]

    def build(**kwargs) -> Path:
        counter[0] += 1
        return build_dataset(tmp_path / f"ds{counter[0]}", **kwargs)

    return build


@pytest.fixture(scope="session")
def valid_manifest(tmp_path_factory) -> Path:
    return build_dataset(tmp_path_factory.mktemp("valid") / "ds")
