"""Template strings for the three stimulus paradigms."""

import pytest

from stimfeat import FormattingError, format_stimulus, image_token_family

CONCEPTS = ["Ability", "Bird", "Argument"]


def test_sentence_passes_through_unchanged():
    record = {"id": 0, "concept": 1, "paradigm": "S",
              "text": "The bird flew around the cage."}
    out = format_stimulus(record, CONCEPTS)
    assert out.text == "The bird flew around the cage."
    assert out.image is None


def test_word_cloud_concept_first_space_separated_period():
    record = {"id": 1, "concept": 1, "paradigm": "WC",
              "words": ["nest", "flock", "mating", "beak", "winged"]}
    out = format_stimulus(record, CONCEPTS)
    assert out.text == "bird nest flock mating beak winged."


def test_word_cloud_lowercases_concept_and_keeps_word_order():
    record = {"id": 2, "concept": 0, "paradigm": "WC", "words": ["b", "a"]}
    assert format_stimulus(record, CONCEPTS).text == "ability b a."


def test_picture_uses_llava_image_token():
    record = {"id": 3, "concept": 1, "paradigm": "P",
              "text": "Bird", "image": "images/bird_0.png"}
    out = format_stimulus(record, CONCEPTS, family="llava")
    assert out.text == "<image> Bird"
    assert out.image == "images/bird_0.png"


def test_picture_uses_qwen_vision_tokens():
    record = {"id": 3, "concept": 1, "paradigm": "P",
              "text": "Bird", "image": "images/bird_0.png"}
    out = format_stimulus(record, CONCEPTS, family="qwen-vl")
    assert out.text == "<|vision_start|><|image_pad|><|vision_end|> Bird"


def test_picture_without_family_is_bare_concept_word():
    record = {"id": 3, "concept": 1, "paradigm": "P", "image": "i.png"}
    out = format_stimulus(record, CONCEPTS, family=None)
    assert out.text == "Bird"


def test_picture_without_image_path_is_an_error():
    record = {"id": 4, "concept": 1, "paradigm": "P", "text": "Bird"}
    with pytest.raises(FormattingError, match="no image path"):
        format_stimulus(record, CONCEPTS, family="llava")


def test_unknown_paradigm_is_an_error():
    with pytest.raises(FormattingError, match="unknown paradigm"):
        format_stimulus({"id": 5, "concept": 0, "paradigm": "X"}, CONCEPTS)


@pytest.mark.parametrize(
    "model_id,family",
    [
        ("llava-hf/llava-1.5-7b-hf", "llava"),
        ("Qwen/Qwen2.5-VL-3B-Instruct", "qwen-vl"),
        ("Qwen/Qwen2-VL-7B", "qwen-vl"),
        ("gpt2", None),
        ("mistralai/Mistral-7B-v0.1", None),
        ("toy/mini", None),
    ],
)
def test_image_token_family_detection(model_id, family):
    assert image_token_family(model_id) == family
