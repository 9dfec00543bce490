import numpy as np
import pytest
from skimage.metrics import structural_similarity

from ucmnet.metrics import batch_scores, gaussian_window, psnr, ssim
from ucmnet.tensor import ShapeError


def test_psnr_closed_form():
    a = np.full((8, 8, 3), 0.5)
    assert abs(psnr(a, a + 0.1) - 20.0) <= 1e-9
    assert abs(psnr(a, a + 0.01) - 40.0) <= 1e-9


def test_identical_images(rng):
    x = rng.uniform(size=(16, 16, 3))
    assert psnr(x, x) >= 120.0
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def _reference_interior(a, b):
    # skimage pads by the window radius; its interior windows are exactly ours
    _, full = structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0, full=True
    )
    return full[5:-5, 5:-5].mean()


def test_ssim_matches_reference_on_valid_windows(rng):
    a, b = rng.uniform(size=(30, 27)), rng.uniform(size=(30, 27))
    assert abs(ssim(a, b) - _reference_interior(a, b)) <= 1e-10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_per_channel_average_matches_reference(seed):
    r = np.random.default_rng(seed)
    a = r.uniform(size=(24, 20, 3))
    b = np.clip(a + 0.1 * r.standard_normal(a.shape), 0, 1)
    ref = np.mean([_reference_interior(a[..., c], b[..., c]) for c in range(3)])
    assert abs(ssim(a, b) - ref) <= 1e-10


def test_inverted_pattern_has_low_ssim():
    i, j = np.mgrid[0:32, 0:32]
    pattern = np.where((i // 4 + j // 4) % 2 == 0, 0.05, 0.95)
    img = np.repeat(pattern[..., None], 3, axis=2)
    assert ssim(img, 1.0 - img) < 0.1


def test_gaussian_window_normalized():
    g = gaussian_window(11, 1.5)
    assert abs(g.sum() - 1.0) <= 1e-15
    np.testing.assert_allclose(g, g[::-1], atol=1e-15)


def test_shape_errors():
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_batch_scores_average(rng):
    a = rng.uniform(size=(2, 16, 16, 3))
    b = a.copy()
    b[1] = np.clip(b[1] + 0.1, 0, 1)
    p, s = batch_scores(b, a)
    assert p == pytest.approx((120.0 + psnr(b[1], a[1])) / 2)
    assert s == pytest.approx((1.0 + ssim(b[1], a[1])) / 2)
