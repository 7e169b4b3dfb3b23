import numpy as np
import pytest

from ktseg.volumes import BinaryMask, VolumeGeometry


@pytest.fixture
def geo16():
    return VolumeGeometry((16, 16, 16))


def make_mask(bits: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    nz, ny, nx = bits.shape
    return BinaryMask(VolumeGeometry((nx, ny, nz), spacing), bits.astype(bool))
