import numpy as np
import pytest

from mazesteer import diffusion as df
from mazesteer import maze as mz


@pytest.fixture(scope="session")
def corridors_maze():
    return mz.load_builtin_maze("corridors")


@pytest.fixture(scope="session")
def mini_demos(corridors_maze):
    return mz.generate_demos(corridors_maze, num_steps=8_000, seed=101, horizon=16)


@pytest.fixture(scope="session")
def mini_policy(corridors_maze, mini_demos):
    """Small, quickly trained policy for plumbing-level tests (horizon 16)."""
    policy = df.make_policy(corridors_maze, horizon=16, hidden=(128, 128), seed=0)
    policy, _ = df.train(policy, mini_demos, steps=3_000, seed=1, batch=64, lr=2e-3)
    return policy


@pytest.fixture(scope="session")
def two_mode_mixture():
    return df.GaussianMixture(
        means=np.array([[-0.5, 0.0], [0.5, 0.0]]),
        variances=np.array([0.01, 0.01]),
        weights=np.array([0.5, 0.5]),
    )


@pytest.fixture(scope="session")
def gmm_policy(two_mode_mixture):
    return df.AnalyticGMMPolicy(
        mixture=two_mode_mixture, schedule=df.cosine_schedule(100, 10)
    )


@pytest.fixture(scope="session")
def toy_mixture():
    """The composition-demo geometry (see bench.default_toy_mixture)."""
    from mazesteer import bench as bn

    return bn.default_toy_mixture()


@pytest.fixture(scope="session")
def toy_policy(toy_mixture):
    from mazesteer import bench as bn

    return df.AnalyticGMMPolicy(
        mixture=toy_mixture,
        schedule=df.cosine_schedule(100, bn.TOY_INFERENCE_STEPS),
        clip_clean=bn.TOY_CLIP_CLEAN,
    )
