import math

import numpy as np
import pytest

from resetgame.skills import (Discriminator, LabeledObsBuffer, RndPair,
                              SkillPrior, pseudo_reward, sample_skill)


def uniform_disc(obs_dim=4, k=10):
    """Zeroed net: exactly uniform log-probabilities."""
    d = Discriminator(obs_dim, k, rng=np.random.default_rng(0))
    for w in d.net.weights:
        w[:] = 0.0
    for b in d.net.biases:
        b[:] = 0.0
    return d


def confident_disc(z, obs_dim=4, k=10):
    """Zeroed net with a huge logit on skill z: near-delta classifier."""
    d = uniform_disc(obs_dim, k)
    d.net.biases[-1][z] = 500.0
    return d


class TestPrior:
    def test_log_p(self):
        assert SkillPrior(10).log_p == pytest.approx(-math.log(10), abs=1e-15)
        assert SkillPrior(1).log_p == 0.0

    def test_k_validation(self):
        with pytest.raises(ValueError):
            SkillPrior(0)

    def test_single_skill_always_zero(self):
        prior = SkillPrior(1)
        rng = np.random.default_rng(0)
        state = rng.bit_generator.state
        assert all(sample_skill(prior, rng) == 0 for _ in range(50))
        # the degenerate prior must not consume randomness
        assert rng.bit_generator.state == state

    def test_empirical_frequencies_within_3_sigma(self):
        k, n = 10, 100_000
        rng = np.random.default_rng(1)
        counts = np.bincount([sample_skill(SkillPrior(k), rng)
                              for _ in range(n)], minlength=k)
        p = 1.0 / k
        sigma = math.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma)


class TestPseudoReward:
    def test_perfect_discriminator_gives_log_k(self):
        r = pseudo_reward(confident_disc(3), SkillPrior(10), logpi=0.0,
                          obs=np.zeros(4), z=3)
        assert r == pytest.approx(math.log(10), abs=1e-12)
        assert r == pytest.approx(2.30259, abs=1e-5)

    def test_uniform_discriminator_cancels_prior(self):
        r = pseudo_reward(uniform_disc(), SkillPrior(10), logpi=-1.7,
                          obs=np.zeros(4), z=4)
        assert r == pytest.approx(1.7, abs=1e-12)

    def test_scale_multiplicative(self):
        args = dict(disc=uniform_disc(), prior=SkillPrior(10), logpi=-0.9,
                    obs=np.zeros(4), z=0)
        assert pseudo_reward(scale=2.0, **args) == \
            pytest.approx(2.0 * pseudo_reward(scale=1.0, **args), abs=1e-12)

    def test_decomposition(self):
        rng = np.random.default_rng(2)
        disc = Discriminator(4, 6, rng=rng)
        prior = SkillPrior(6)
        obs = rng.standard_normal(4)
        logpi = -2.3
        z = 5
        r = pseudo_reward(disc, prior, logpi, obs, z)
        pieces = float(disc.log_probs(obs)[z]) + math.log(6) - logpi
        assert r == pytest.approx(pieces, abs=1e-12)

    def test_entropy_term_optional(self):
        disc = uniform_disc()
        prior = SkillPrior(10)
        r1 = pseudo_reward(disc, prior, -5.0, np.zeros(4), 0,
                           include_entropy=False)
        r2 = pseudo_reward(disc, prior, +5.0, np.zeros(4), 0,
                           include_entropy=False)
        assert r1 == r2 == 0.0

    def test_skill_out_of_range(self):
        with pytest.raises(ValueError):
            pseudo_reward(uniform_disc(), SkillPrior(10), 0.0,
                          np.zeros(4), 10)


class TestDiscriminator:
    def test_initial_loss_near_chance(self):
        rng = np.random.default_rng(3)
        disc = Discriminator(4, 4, rng=rng)
        obs = rng.standard_normal((256, 4))
        labels = rng.integers(0, 4, 256)
        loss = disc.update(obs, labels)
        assert loss == pytest.approx(math.log(4), abs=0.1)

    def test_separable_toy_converges(self):
        rng = np.random.default_rng(4)
        obs = np.concatenate([rng.normal(-3, 0.3, (64, 1)),
                              rng.normal(3, 0.3, (64, 1))])
        obs = np.concatenate([obs, np.zeros((128, 3))], axis=1)
        labels = np.array([0] * 64 + [1] * 64)
        disc = Discriminator(4, 2, lr=1e-2, rng=rng)
        loss = math.inf
        for _ in range(500):
            loss = disc.update(obs, labels)
            if loss < 0.1:
                break
        assert loss < 0.1
        assert disc.accuracy(obs, labels) == 1.0

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        centers = np.array([[-4.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
        obs = np.concatenate([c + rng.normal(0, 0.3, (40, 2))
                              for c in centers])
        labels = np.repeat([0, 1, 2], 40)
        perm = np.array([2, 0, 1])
        accs = []
        for lab in (labels, perm[labels]):
            disc = Discriminator(2, 3, lr=1e-2,
                                 rng=np.random.default_rng(6))
            for _ in range(300):
                disc.update(obs, lab)
            accs.append(disc.accuracy(obs, lab))
        assert accs[0] >= 0.95 and accs[1] >= 0.95
        assert abs(accs[0] - accs[1]) <= 0.05

    def test_xy_only_ignores_velocity(self):
        disc = Discriminator(4, 3, xy_only=True,
                             rng=np.random.default_rng(7))
        a = disc.log_probs(np.array([1.0, 2.0, 0.0, 0.0]))
        b = disc.log_probs(np.array([1.0, 2.0, 9.0, -9.0]))
        assert np.array_equal(a, b)

    def test_bad_batches_rejected(self):
        disc = Discriminator(4, 3, rng=np.random.default_rng(8))
        with pytest.raises(ValueError):
            disc.update(np.zeros((0, 4)), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            disc.update(np.zeros((2, 4)), [0, 3])

    def test_confusion_matrix(self):
        disc = confident_disc(1, obs_dim=4, k=3)
        mat = disc.confusion(np.zeros((5, 4)), [0, 1, 1, 2, 2])
        assert mat.sum() == 5
        assert np.array_equal(mat[:, 1], [1, 2, 2])


class TestLabeledObsBuffer:
    def test_wraparound_and_sampling(self):
        buf = LabeledObsBuffer(3, 1)
        for i in range(5):
            buf.push([float(i)], i % 2)
        assert buf.size == 3
        obs, labels = buf.sample(32, np.random.default_rng(0))
        assert set(obs[:, 0]) <= {2.0, 3.0, 4.0}
        assert set(labels) <= {0, 1}


class TestRnd:
    def test_copied_predictor_zero_bonus(self):
        rnd = RndPair(4, embed_dim=8, rng=np.random.default_rng(9))
        rnd.predictor = rnd.target.copy()
        assert rnd.bonus(np.ones(4)) == 0.0

    def test_embed_dim_validated(self):
        with pytest.raises(ValueError):
            RndPair(4, embed_dim=0)

    def test_target_frozen_bit_exact(self):
        rnd = RndPair(4, embed_dim=8, hidden=(16,),
                      rng=np.random.default_rng(10))
        before = [w.copy() for w in rnd.target.weights + rnd.target.biases]
        rng = np.random.default_rng(11)
        for _ in range(50):
            rnd.update(rng.standard_normal((16, 4)))
        after = rnd.target.weights + rnd.target.biases
        for a, b in zip(after, before):
            assert np.array_equal(a, b)

    def test_training_decays_bonus(self):
        rnd = RndPair(4, embed_dim=8, hidden=(32,), lr=1e-2,
                      rng=np.random.default_rng(12))
        obs = np.random.default_rng(13).standard_normal((32, 4))
        initial = float(np.mean(rnd.bonus(obs)))
        for _ in range(1000):
            rnd.update(obs)
        final = float(np.mean(rnd.bonus(obs)))
        assert final < 0.1 * initial

    def test_loss_mostly_monotone(self):
        drops = 0
        for seed in range(100):
            rnd = RndPair(2, embed_dim=4, hidden=(16,), lr=1e-3,
                          rng=np.random.default_rng(seed))
            obs = np.random.default_rng(1000 + seed).standard_normal((8, 2))
            first = rnd.update(obs)
            for _ in range(4):
                last = rnd.update(obs)
            drops += last <= first
        assert drops >= 90

    def test_running_std_normalizes(self):
        rnd = RndPair(4, embed_dim=8, rng=np.random.default_rng(14))
        rng = np.random.default_rng(15)
        assert rnd.std == 1.0  # warmup default
        for _ in range(20):
            rnd.bonus(rng.standard_normal((8, 4)))
        assert rnd.std > 0.0 and rnd.count == 160
