"""Backends that turn a rendered stimulus into per-layer token states.

A backend exposes ``model_id``, ``n_states`` (number of hidden-state
layers, embedding layer included), ``poolings`` (the pooling names it
supports), and ``encode(stim) -> list of (n_tokens, dim) arrays``, one
per layer.

Two implementations live here.  :class:`ToyBackend` is a deterministic
stand-in whose token vectors are a pure function of the input strings,
so the full extraction path (formatting, caching, pooling, file layout)
can be tested without model weights.  :class:`TransformersBackend`
wraps a pretrained Hugging Face model and is imported lazily so the
package works without torch installed.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ModelLoadError
from .formatting import StimulusText


def _seed(*parts: str) -> int:
    digest = hashlib.blake2b("|".join(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


class ToyBackend:
    """Deterministic pseudo-model for exercising the extraction path.

    Token vectors are seeded from a hash of (model id, token string);
    image paths contribute a synthetic token hashed from the path string,
    no file is read.  Layers above the embedding apply a fixed random
    mixing matrix with a tanh nonlinearity.  Everything is a pure
    function of the inputs, so re-extraction is bit-identical.
    """

    poolings = ("mean", "last", "cls")

    def __init__(self, model_id: str, n_layers: int = 4, dim: int = 32):
        if n_layers < 1:
            raise ValueError("need at least one layer above the embedding")
        if dim < 1:
            raise ValueError("dim must be positive")
        self.model_id = model_id
        self.dim = dim
        self._mix = [
            np.random.default_rng(_seed(model_id, f"mix{layer}")).standard_normal(
                (dim, dim)
            )
            / np.sqrt(dim)
            for layer in range(1, n_layers + 1)
        ]

    @property
    def n_states(self) -> int:
        return len(self._mix) + 1

    def _token_vector(self, token: str) -> np.ndarray:
        rng = np.random.default_rng(_seed(self.model_id, "tok", token))
        return rng.standard_normal(self.dim)

    def encode(self, stim: StimulusText) -> List[np.ndarray]:
        tokens = stim.text.split()
        if stim.image is not None:
            tokens = [f"<img:{stim.image}>", *tokens]
        states = [np.stack([self._token_vector(t) for t in tokens])]
        for mix in self._mix:
            states.append(np.tanh(states[-1] @ mix))
        return states


class TransformersBackend:
    """Hidden states from a pretrained model via the transformers library.

    Text inputs go through the tokenizer; picture stimuli additionally
    load the image through the model's processor when one exists.
    Covers causal and encoder language models plus vision-language
    models whose processors accept ``text=``/``images=``; the FLAVA-style
    dual-encoder poolings are not implemented here.
    """

    poolings = ("mean", "last")

    def __init__(
        self,
        model_id: str,
        image_root: Optional[Path] = None,
        device: str = "cpu",
        revision: Optional[str] = None,
    ):
        try:
            import torch
            from transformers import AutoModel, AutoProcessor, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(
                "transformers backend requires the [models] extra"
            ) from exc
        self.model_id = model_id
        self._torch = torch
        self._image_root = Path(image_root) if image_root is not None else None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(
                model_id, revision=revision
            )
            try:
                self._processor = AutoProcessor.from_pretrained(
                    model_id, revision=revision
                )
            except Exception:
                self._processor = None
            self._model = AutoModel.from_pretrained(
                model_id, revision=revision, output_hidden_states=True
            )
        except Exception as exc:
            raise ModelLoadError(f"could not load {model_id}: {exc}") from exc
        self._model.eval()
        self._model.to(device)
        self._device = device
        self.dim = int(self._model.config.hidden_size)

    @property
    def n_states(self) -> int:
        return int(self._model.config.num_hidden_layers) + 1

    def _batch(self, stim: StimulusText):
        if stim.image is not None and self._processor is not None:
            from PIL import Image

            path = Path(stim.image)
            if self._image_root is not None and not path.is_absolute():
                path = self._image_root / path
            with Image.open(path) as img:
                return self._processor(
                    text=stim.text, images=img.convert("RGB"), return_tensors="pt"
                )
        return self._tokenizer(stim.text, return_tensors="pt")

    def encode(self, stim: StimulusText) -> List[np.ndarray]:
        batch = {k: v.to(self._device) for k, v in self._batch(stim).items()}
        with self._torch.no_grad():
            out = self._model(**batch)
        return [h[0].float().cpu().numpy() for h in out.hidden_states]
