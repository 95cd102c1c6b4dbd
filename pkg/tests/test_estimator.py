import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from psgan.data.annotations import TextAnnotation
from psgan.data.synth import SynthSpec, synthetic_samples
from psgan.errors import ShapeError
from psgan.estimator import TextReplacer, check_image, check_masks
from psgan.norm import MaskSet

TINY = dict(base_channels=4, n_resblocks=1, steps=3, seed=1)


@pytest.fixture(scope="module")
def samples():
    return synthetic_samples(SynthSpec(image_size=32, max_polys=1, max_chars=2, seed=3), 4)


@pytest.fixture(scope="module")
def fitted(samples):
    return TextReplacer(**TINY).fit(samples)


def test_params_follow_estimator_conventions():
    model = TextReplacer(**TINY)
    params = model.get_params()
    assert params["base_channels"] == 4 and params["steps"] == 3
    twin = clone(model).set_params(learning_rate=1e-3)
    assert twin.learning_rate == 1e-3 and model.learning_rate == 2e-4


def test_fit_validates_input():
    with pytest.raises(ValueError):
        TextReplacer(**TINY).fit([])
    with pytest.raises(TypeError):
        TextReplacer(**TINY).fit([np.zeros((32, 32, 3), np.uint8)])


def test_unfitted_model_refuses_to_predict(samples):
    with pytest.raises(NotFittedError):
        TextReplacer().transform(samples)
    with pytest.raises(NotFittedError):
        TextReplacer().save("x.ckpt")


def test_fit_records_history_and_transform_shapes(fitted, samples):
    assert [h.step for h in fitted.history_] == [1, 2, 3]
    outs = fitted.transform(samples)
    assert len(outs) == 4 and all(o.shape == (32, 32, 3) and o.dtype == np.uint8 for o in outs)
    assert fitted.score(samples) <= 0.0


def test_fit_is_deterministic(fitted, samples):
    again = TextReplacer(**TINY).fit(samples)
    assert again.checkpoint_ == fitted.checkpoint_


def test_predict_uses_requested_texts(fitted, samples):
    texts = [["ZZ"] * len(s.masks) for s in samples]
    outs = fitted.predict(samples, texts)
    assert len(outs) == 4
    with pytest.raises(ValueError):
        fitted.predict(samples, texts[:2])


def test_replace_text_only_touches_regions(fitted, samples):
    s = samples[0]
    out = fitted.replace_text(s.target, s.masks, "AB")
    assert out.shape == s.target.shape
    outside = ~s.masks.union
    assert np.array_equal(out[outside], s.target[outside])


def test_replace_text_accepts_polygons_and_grayscale(fitted):
    img = np.full((32, 32), 200, np.uint8)
    polys = [((2, 2), (30, 2), (30, 21), (2, 21))]
    out = fitted.replace_text(img, polys, ["HI"])
    assert out.shape == (32, 32, 3)
    assert np.array_equal(out[25:], np.full((7, 32, 3), 200))
    ann = [TextAnnotation(polys[0], "old")]
    assert np.array_equal(fitted.replace_text(img, ann, "HI"), out)


def test_replace_text_with_no_regions_copies(fitted, samples):
    img = samples[0].target
    out = fitted.replace_text(img, [], "AB")
    assert np.array_equal(out, img) and out is not img


def test_save_and_reload_give_identical_outputs(fitted, samples, tmp_path):
    path = fitted.save(tmp_path / "m.ckpt")
    twin = TextReplacer.from_checkpoint(path)
    assert twin.get_params()["base_channels"] == 4
    for a, b in zip(fitted.transform(samples), twin.transform(samples)):
        assert np.array_equal(a, b)


def test_check_image_validation():
    assert check_image(np.zeros((4, 5), np.int64)).shape == (4, 5, 3)
    with pytest.raises(ShapeError):
        check_image(np.zeros((4, 5, 4), np.uint8))
    with pytest.raises(TypeError):
        check_image(np.zeros((4, 5, 3), np.float32))
    with pytest.raises(ValueError):
        check_image(np.full((4, 5, 3), 300))


def test_check_masks_variants():
    m = np.zeros((8, 8), bool)
    m[1:4, 1:5] = True
    assert len(check_masks([m], (8, 8))) == 1
    assert len(check_masks([], (8, 8))) == 0
    assert check_masks([((1, 1), (5, 1), (5, 4), (1, 4))], (8, 8)).masks[0].sum() == 12
    with pytest.raises(ShapeError):
        check_masks(MaskSet([m], (8, 8)), (9, 8))
    with pytest.raises(ValueError, match="fewer than two"):
        check_masks([((1, 1), (1.2, 1), (1.2, 1.2))], (8, 8))
