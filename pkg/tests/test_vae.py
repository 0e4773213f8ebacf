import numpy as np
import pytest

from mazesteer import nn
from mazesteer import vae as vb
from mazesteer.diffusion import sample_unguided


@pytest.fixture(scope="module")
def trained_vae(corridors_maze, mini_demos):
    policy = vb.make_latent_policy(
        corridors_maze, horizon=16, hidden=(128, 128), seed=7
    )
    policy, history = vb.train_vae(policy, mini_demos, steps=2_500, seed=8, batch=64)
    return policy, history


class TestGradients:
    def test_vae_loss_gradient_matches_finite_differences(self, corridors_maze):
        policy = vb.make_latent_policy(corridors_maze, horizon=4, hidden=(16,), seed=0)
        rng = np.random.default_rng(1)
        x0 = rng.uniform(-1, 1, size=(3, 8))
        cond = x0[:, :2]

        def total_loss():
            r = np.random.default_rng(42)
            recon, kl, _, _ = vb._vae_batch(policy, x0, cond, r)
            return recon + policy.kl_weight * kl

        # analytic grads with the same fixed noise draw
        r = np.random.default_rng(42)
        recon, kl, eg, dg = vb._vae_batch(policy, x0, cond, r)
        h = 1e-6
        for net, grad in ((policy.encoder, eg), (policy.decoder, dg)):
            idxs = np.random.default_rng(2).choice(len(net.params), 40, replace=False)
            for i in idxs:
                saved = net.params[i]
                net.params[i] = saved + h
                up = total_loss()
                net.params[i] = saved - h
                dn = total_loss()
                net.params[i] = saved
                num = (up - dn) / (2 * h)
                assert abs(grad[i] - num) < 1e-5 * max(1.0, abs(num))


class TestTraining:
    def test_reconstruction_improves_at_least_2x(self, trained_vae):
        _, history = trained_vae
        assert history["recon"][-1] < 0.5 * history["recon"][0]

    def test_same_seed_identical_checkpoint(self, corridors_maze, mini_demos):
        a = vb.make_latent_policy(corridors_maze, horizon=16, hidden=(32,), seed=3)
        a, _ = vb.train_vae(a, mini_demos, steps=200, seed=4, batch=32)
        b = vb.make_latent_policy(corridors_maze, horizon=16, hidden=(32,), seed=3)
        b, _ = vb.train_vae(b, mini_demos, steps=200, seed=4, batch=32)
        assert np.array_equal(a.encoder.params, b.encoder.params)
        assert np.array_equal(a.decoder.params, b.decoder.params)

    def test_zero_kl_weight_is_accepted(self, corridors_maze, mini_demos):
        # degenerate config: plain autoencoder, no posterior-collapse pressure
        policy = vb.make_latent_policy(
            corridors_maze, horizon=16, hidden=(32,), kl_weight=0.0, seed=5
        )
        policy, history = vb.train_vae(policy, mini_demos, steps=100, seed=6, batch=32)
        assert np.isfinite(history["recon"][-1])

    def test_empty_dataset_rejected(self, corridors_maze, mini_demos):
        from mazesteer.maze import DemoDataset

        policy = vb.make_latent_policy(corridors_maze, horizon=16, hidden=(32,), seed=0)
        with pytest.raises(ValueError):
            vb.train_vae(
                policy, DemoDataset(np.zeros((0, 16, 2)), map_id="x", seed=0), 10, 0
            )


class TestSampling:
    def test_same_seed_identical(self, trained_vae):
        policy, _ = trained_vae
        a = vb.sample_vae(policy, np.array([1.5, 1.5]), batch=8, seed=9)
        b = vb.sample_vae(policy, np.array([1.5, 1.5]), batch=8, seed=9)
        assert np.array_equal(a, b)

    def test_member_streams_independent_of_batch(self, trained_vae):
        policy, _ = trained_vae
        small = vb.sample_vae(policy, np.array([1.5, 1.5]), batch=4, seed=10)
        large = vb.sample_vae(policy, np.array([1.5, 1.5]), batch=12, seed=10)
        assert np.array_equal(small, large[:4])

    def test_less_diverse_than_diffusion_policy(self, trained_vae, mini_policy):
        policy, _ = trained_vae
        conds = np.random.default_rng(11).uniform([1.2, 1.2], [10.8, 10.8], size=(20, 2))

        def diversity(trajs):
            ends = trajs[:, -1]
            return np.linalg.norm(ends[:, None] - ends[None], axis=2).mean()

        d_vae, d_dp = [], []
        for i, c in enumerate(conds):
            d_vae.append(diversity(vb.sample_vae(policy, c, batch=16, seed=100 + i)))
            d_dp.append(diversity(sample_unguided(mini_policy, c, batch=16, seed=100 + i)))
        assert np.mean(d_vae) < np.mean(d_dp)


class TestCheckpoint:
    def test_round_trip(self, trained_vae, tmp_path):
        policy, _ = trained_vae
        p = tmp_path / "vae.ckpt"
        vb.save_latent_policy(p, policy, {"note": "rt"})
        loaded, meta = vb.load_latent_policy(p)
        assert meta["note"] == "rt"
        assert loaded.kl_weight == policy.kl_weight
        a = vb.sample_vae(loaded, np.array([2.0, 2.0]), batch=4, seed=12)
        b = vb.sample_vae(policy, np.array([2.0, 2.0]), batch=4, seed=12)
        assert np.array_equal(a, b)
