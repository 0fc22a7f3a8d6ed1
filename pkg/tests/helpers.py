import numpy as np


def planted_scene(size: int = 16, top: int = 4, left: int = 4, extent: int = 6):
    """A mid-grey image with a bright square and the square's region map."""
    image = np.full((3, size, size), 0.3, dtype=np.float32)
    region = np.zeros((size, size), dtype=bool)
    region[top:top + extent, left:left + extent] = True
    image[:, region] = 0.9
    return image, region


def two_region_scene(size: int = 64, extent: int = 18, rng=None):
    """Two equally bright squares, one in each half, either of which is full evidence on its own."""
    rng = rng or np.random.default_rng(0)
    half = size // 2
    image = np.full((3, size, size), 0.3, dtype=np.float32)
    regions = []
    for offset in (0, half):
        top = int(rng.integers(1, size - extent))
        left = offset + int(rng.integers(1, half - extent))
        region = np.zeros((size, size), dtype=bool)
        region[top:top + extent, left:left + extent] = True
        image[:, region] = 0.9
        regions.append(region)
    return image, regions[0], regions[1]
