import numpy as np
import pytest

from kprefine import geometry


@pytest.fixture
def corner_square():
    """64x64 bright axis-aligned square on dark background.

    Returns (image, corner positions in (x, y) pixel coordinates).
    """
    img = np.full((64, 64), 0.1)
    img[20:45, 20:45] = 0.9
    corners = [(20.0, 20.0), (44.0, 20.0), (20.0, 44.0), (44.0, 44.0)]
    return img, corners


@pytest.fixture
def default_augmentations():
    return geometry.build_augmentation_set()


def textured_image(seed: int, size: int = 256) -> np.ndarray:
    """Synthetic texture with corner structure: smooth blobs + rectangles."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random((size, size)), 4.0)
    for _ in range(40):
        x0, y0 = rng.integers(0, size - 20, size=2)
        w, h = rng.integers(4, 18, size=2)
        img[y0:y0 + h, x0:x0 + w] += rng.uniform(-0.5, 0.5)
    img -= img.min()
    img /= img.max()
    return img
