import json

import numpy as np
import pytest

from negspace import concepts
from negspace.embstore import EmbeddingMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def unit_rows(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def random_unit_matrix(rng, rows: int, dim: int) -> EmbeddingMatrix:
    return EmbeddingMatrix(
        unit_rows(rng.standard_normal((rows, dim))).astype(np.float32), normalized=True
    )


@pytest.fixture
def pet_fixture_file(tmp_path):
    """Canned LLM responses for a 3-class pet lexicon, keyed by request hash."""
    classes = ["tabby cat", "siamese cat", "beagle"]
    sc_raw = json.dumps([
        {"class": "tabby cat", "superclass": "cat"},
        {"class": "siamese cat", "superclass": "cat"},
        {"class": "beagle", "superclass": "dog"},
    ])
    responses = {
        concepts.request_key("claude-3-5-sonnet", concepts.superclass_messages(classes)): sc_raw,
    }
    for sc in ("cat", "dog"):
        msgs = concepts.background_messages(sc, 2, 3)
        responses[concepts.request_key("claude-3-5-sonnet", msgs)] = json.dumps(
            [f"cozy {sc} sofa", f"sunny {sc} garden"]
        )
    path = tmp_path / "llm_fixture.json"
    path.write_text(json.dumps(responses))
    return str(path), classes
