import json

import numpy as np
import pytest

from belieftrack.corpus import load_woz
from belieftrack.embeddings import VectorStore
from belieftrack.ontology import load_ontology

TINY_ONTOLOGY = {
    "informable": {
        "food": ["indian", "chinese"],
        "area": ["north", "south", "east"],
    },
    "requestable": ["phone", "address"],
}


@pytest.fixture
def tiny_ontology():
    return load_ontology(json.dumps(TINY_ONTOLOGY))


@pytest.fixture
def food_slot(tiny_ontology):
    return tiny_ontology.slot("food")


def make_woz_corpus():
    """Two small dialogues in the WOZ file shape."""
    return [
        {
            "dialogue_idx": "d0",
            "dialogue": [
                {
                    "transcript": "I want Indian food",
                    "system_acts": [],
                    "turn_label": [["food", "indian"]],
                },
                {
                    "transcript": "what is the phone number",
                    "system_acts": ["food"],
                    "turn_label": [["request", "phone"]],
                },
                {
                    "transcript": "actually make it chinese, in the north",
                    "system_acts": [["food", "indian"]],
                    "turn_label": [["food", "chinese"], ["area", "north"]],
                },
            ],
        },
        {
            "dialogue_idx": "d1",
            "dialogue": [
                {
                    "transcript": "anywhere is fine",
                    "system_acts": [],
                    "turn_label": [["area", "dontcare"]],
                },
                {
                    "transcript": "thanks",
                    "system_acts": [],
                    "turn_label": [],
                },
            ],
        },
    ]


@pytest.fixture
def woz_corpus_json():
    return json.dumps(make_woz_corpus())


@pytest.fixture
def woz_dialogues(tiny_ontology, woz_corpus_json):
    return load_woz(woz_corpus_json, tiny_ontology)


def tiny_store(dimension=2):
    """A store with hand-picked vectors for exact arithmetic in tests."""
    table = {
        "a": np.array([1.0, 0.0]),
        "b": np.array([0.0, 1.0]),
        "cheap": np.array([0.5, -0.5]),
        "food": np.array([0.25, 0.25]),
    }
    for vec in table.values():
        vec.flags.writeable = False
    return VectorStore(dimension=dimension, table=table, oov_seed=7)
