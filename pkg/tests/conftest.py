import numpy as np
import pytest

import lattisketch as ls


@pytest.fixture
def square_sketch():
    """10x10 axis-aligned square, drawn as one closed polyline."""
    line = '{"drawing": [[[0, 10, 10, 0, 0], [0, 0, 10, 10, 0]]]}'
    return ls.parse_quickdraw_line(line)


@pytest.fixture
def tiny_pcfg():
    enc = ls.EncoderConfig(d=8, K=2)
    dec = ls.DecoderConfig(hidden_size=16, M=2, n_max=32, z_dim=8)
    return ls.PipelineConfig(encoder=enc, decoder=dec,
                             train=ls.TrainConfig(batch_size=4, iterations=3, seed=0))


@pytest.fixture
def tiny_store(tiny_pcfg):
    return ls.init_params(tiny_pcfg, seed=0)


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory):
    """A briefly trained small model shared by pipeline tests.

    40 iterations is enough to give non-degenerate weights and a loadable
    checkpoint; tests that need learned behavior use the acceptance model.
    """
    tmp = tmp_path_factory.mktemp("tiny_model")
    paths = ls.generate_dataset(tmp / "data", 12, seed=7)
    enc = ls.EncoderConfig(d=8, K=2)
    dec = ls.DecoderConfig(hidden_size=16, M=2, n_max=64, z_dim=8)
    pcfg = ls.PipelineConfig(encoder=enc, decoder=dec,
                             train=ls.TrainConfig(batch_size=4, iterations=40, seed=1))
    summary = ls.fit([str(p) for p in paths], pcfg, tmp / "run")
    return ls.load_model(summary["checkpoint"])


def random_raster(rng, side=256, density=0.02):
    pixels = (rng.random((side, side)) < density).astype(np.uint8)
    return ls.RasterSketch(pixels=pixels)
