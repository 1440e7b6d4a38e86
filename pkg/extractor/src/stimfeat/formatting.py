"""Render stimulus records as the input strings a model actually sees.

Each of the three presentation paradigms has a fixed template:

* sentences (``S``) are passed through unchanged,
* word clouds (``WC``) become a single space-separated sequence, the
  concept word first, closed with a period (one sequence stands in for
  every on-screen arrangement of the same words),
* pictures (``P``) become the model family's image placeholder token
  followed by the concept word.

Keeping the templates here, away from any tokenizer, means the exact
strings can be unit-tested and reused across backends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import FormattingError

# Image placeholder dialects for the vision-language families we format
# for.  The placeholder is substituted by the processor at encode time;
# the surrounding text is what matters for the template.
IMAGE_TOKEN_FAMILIES = {
    "llava": "<image>",
    "qwen-vl": "<|vision_start|><|image_pad|><|vision_end|>",
}


@dataclass(frozen=True)
class StimulusText:
    """A rendered model input: prompt text plus an optional image path."""

    paradigm: str
    text: str
    image: Optional[str] = None


def image_token_family(model_id: str) -> Optional[str]:
    """Image-token dialect for ``model_id``, or None for text-only models."""
    name = model_id.lower()
    if "llava" in name:
        return "llava"
    if "qwen" in name and "vl" in name:
        return "qwen-vl"
    return None


def format_stimulus(
    record: Mapping,
    concepts: Sequence[str],
    family: Optional[str] = None,
) -> StimulusText:
    """Render one manifest stimulus record as a :class:`StimulusText`.

    ``record`` is a manifest stimulus entry (``paradigm``, ``concept``
    index, and the paradigm-specific payload field).  ``concepts`` is the
    manifest concept list.  ``family`` selects the image-token dialect
    for picture stimuli; None renders the bare concept word.

    Raises :class:`FormattingError` for picture records without an image
    path and for unknown paradigms.
    """
    paradigm = record["paradigm"]
    if paradigm == "S":
        return StimulusText("S", record["text"])
    if paradigm == "WC":
        label = concepts[record["concept"]].lower()
        words = list(record.get("words") or ())
        return StimulusText("WC", " ".join([label, *words]) + ".")
    if paradigm == "P":
        image = record.get("image")
        if not image:
            raise FormattingError(
                f"picture stimulus {record.get('id')!r} has no image path"
            )
        word = record.get("text") or concepts[record["concept"]].capitalize()
        prefix = IMAGE_TOKEN_FAMILIES.get(family) if family else None
        text = f"{prefix} {word}" if prefix else word
        return StimulusText("P", text, image=image)
    raise FormattingError(f"unknown paradigm {paradigm!r}")
