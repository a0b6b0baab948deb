import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoflow.errors import EmptyClassList
from geoflow.gfk import build_kernel, gfk_distance
from geoflow.prompt import (
    TEMPLATE,
    PromptSpec,
    build_prompt,
    class_subsets,
    domain_prompt_matrix,
    embed_prompt,
    tokenize,
    view_prompts,
)
from geoflow.scene.config import CLASSES
from geoflow.subspace import feasible_dim, fit_subspace


def test_template_wording():
    assert TEMPLATE.endswith("captured from the [domain] view")


def test_build_prompt_examples():
    assert build_prompt(PromptSpec(["road", "building"], "drone")) == "road, building captured from the drone view"
    assert build_prompt(PromptSpec(["car"], "car")) == "car captured from the car view"
    spec = PromptSpec(CLASSES, "car")
    assert build_prompt(spec) == build_prompt(spec)


def test_spec_validation():
    with pytest.raises(EmptyClassList):
        PromptSpec([], "car")
    with pytest.raises(ValueError):
        PromptSpec(["road"], "satellite")
    with pytest.raises(ValueError):
        PromptSpec(["road"], "car", template="{classes} seen")


def test_tokenize():
    assert tokenize("Road, building captured") == ["road", "building", "captured"]


def test_embedding_deterministic_unit():
    text = build_prompt(PromptSpec(CLASSES, "drone"))
    a, b = embed_prompt(text), embed_prompt(text)
    np.testing.assert_array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-12
    assert embed_prompt(text, 16).shape == (16,)
    with pytest.raises(ValueError):
        embed_prompt(text, 4)


@settings(max_examples=50, deadline=None)
@given(st.text(max_size=40), st.integers(8, 128))
def test_any_text_embeds_to_unit_vector(text, dim):
    f = embed_prompt(text, dim)
    assert abs(np.linalg.norm(f) - 1.0) <= 1e-12


def test_class_order_matters():
    a = embed_prompt(build_prompt(PromptSpec(["road", "car"], "car")))
    b = embed_prompt(build_prompt(PromptSpec(["car", "road"], "car")))
    assert not np.allclose(a, b)


@pytest.mark.parametrize("k", range(1, len(CLASSES) + 1))
def test_domains_separate(k):
    classes = CLASSES[:k]
    car = embed_prompt(build_prompt(PromptSpec(classes, "car")))
    drone = embed_prompt(build_prompt(PromptSpec(classes, "drone")))
    assert np.arccos(np.clip(car @ drone, -1, 1)) > 0


def test_prompt_kernel_distance_positive():
    p = view_prompts(CLASSES, 64)
    Fs, Ft = p["source_all"], p["target_all"]
    n = min(feasible_dim(256, Fs), feasible_dim(256, Ft))
    k = build_kernel(fit_subspace(Fs, n), fit_subspace(Ft, n))
    d = gfk_distance(k, p["source"] - k.mean_s, p["target"] - k.mean_t)
    assert d > 0


def test_class_subsets():
    subs = class_subsets(CLASSES)
    assert len(subs) == 2 ** len(CLASSES) - 1
    assert subs[0] == ("road",) and subs[-1] == CLASSES
    many = tuple(f"c{i}" for i in range(10))
    big = class_subsets(many)
    assert len(big) == 11 and big[-1] == many
    with pytest.raises(EmptyClassList):
        class_subsets([])


def test_domain_matrix_rows_are_unit():
    M = domain_prompt_matrix(("road", "car", "tree"), "drone", 32)
    assert M.shape == (7, 32)
    np.testing.assert_allclose(np.linalg.norm(M, axis=1), 1.0, atol=1e-12)
