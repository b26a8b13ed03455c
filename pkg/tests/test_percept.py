import numpy as np
import pytest

from catchlab.errors import ContractError
from catchlab.numkit import Adam, Tensor, backward
from catchlab.percept import (attend, chamfer_loss, encode, encode_np,
                              init_percept, perturb, recon_loss, reconstruct,
                              sample_cloud)
from catchlab.sim import Disk
from catchlab.sim.world import ObjectState


def disk_object(pos=(0.0, 0.0), radius=1.0, theta=0.0):
    return ObjectState(position=np.asarray(pos, dtype=np.float64),
                       velocity=np.zeros(2), theta=theta, omega=0.0,
                       shape=Disk(radius), mass=1.0, inertia=0.5,
                       friction=0.8, target_theta=0.0, name="disk")


class TestSampleCloud:
    def test_unit_disk_points_on_circle(self):
        cloud = sample_cloud(disk_object(), 256, np.random.default_rng(0))
        radii = np.linalg.norm(cloud, axis=1)
        np.testing.assert_allclose(radii, 1.0, atol=1e-12)

    def test_translated_disk_centroid_near_center(self):
        m = 256
        obj = disk_object(pos=(0.7, -0.3), radius=0.5)
        cloud = sample_cloud(obj, m, np.random.default_rng(1))
        centroid = cloud.mean(axis=0)
        assert np.linalg.norm(centroid - obj.position) < 2.0 / np.sqrt(m)

    def test_same_seed_identical(self):
        obj = disk_object(radius=0.3)
        a = sample_cloud(obj, 64, np.random.default_rng(5))
        b = sample_cloud(obj, 64, np.random.default_rng(5))
        assert a.tobytes() == b.tobytes()

    def test_zero_points_rejected(self):
        with pytest.raises(ContractError):
            sample_cloud(disk_object(), 0, np.random.default_rng(0))


class TestPerturb:
    def test_sigma_zero_is_identity(self):
        cloud = np.random.default_rng(0).normal(size=(32, 2))
        out = perturb(cloud, 0.0, np.random.default_rng(1))
        np.testing.assert_array_equal(out, cloud)

    def test_noise_std_matches_sigma(self):
        cloud = np.zeros((100_000, 2))
        out = perturb(cloud, 0.01, np.random.default_rng(2))
        assert abs(out.std() - 0.01) < 0.0002

    def test_count_and_order_preserved(self):
        cloud = np.arange(20.0).reshape(10, 2)
        out = perturb(cloud, 0.001, np.random.default_rng(3))
        assert out.shape == cloud.shape
        np.testing.assert_allclose(out, cloud, atol=0.01)


class TestEncode:
    def test_global_feature_permutation_invariant(self):
        rng = np.random.default_rng(0)
        params = init_percept(rng, d_f=16, m_points=32, enc_hidden=(24,))
        cloud = rng.normal(size=(32, 2))
        _, fg1 = encode(cloud, params)
        _, fg2 = encode(cloud[rng.permutation(32)], params)
        assert fg1.data.tobytes() == fg2.data.tobytes()

    def test_single_point_equals_its_feature(self):
        rng = np.random.default_rng(1)
        params = init_percept(rng, d_f=8, m_points=1, enc_hidden=(12,))
        cloud = rng.normal(size=(1, 2))
        per_point, fg = encode(cloud, params)
        np.testing.assert_array_equal(fg.data[0], per_point.data[0, 0])

    def test_non_max_point_does_not_change_global_feature(self):
        rng = np.random.default_rng(2)
        params = init_percept(rng, d_f=12, m_points=8, enc_hidden=(16,))
        cloud = rng.normal(size=(8, 2))
        feats, fg = encode(cloud, params)
        # find a point that holds no channel max, brute force over channels
        arg = feats.data[0].argmax(axis=0)
        loser = next(i for i in range(8) if i not in set(arg.tolist()))
        other = cloud.copy()
        other[loser] = cloud[loser] * 0.5  # move the non-max point
        feats2, fg2 = encode(other, params)
        if np.all(feats2.data[0, loser] <= feats.data[0].max(axis=0)):
            assert fg.data.tobytes() == fg2.data.tobytes()

    def test_np_path_matches_tape_path(self):
        rng = np.random.default_rng(3)
        params = init_percept(rng, d_f=16, m_points=10)
        clouds = rng.normal(size=(4, 10, 2))
        _, fg = encode(clouds, params)
        np.testing.assert_allclose(encode_np(clouds, params), fg.data, atol=1e-14)


class TestAttend:
    def test_identical_features_give_uniform_weights(self):
        rng = np.random.default_rng(0)
        params = init_percept(rng, d_f=8, m_points=5)
        one = rng.normal(size=(1, 1, 8))
        per_point = Tensor(np.repeat(one, 5, axis=1))
        fg = Tensor(one[:, 0, :])
        _, w = attend(per_point, fg, params)
        np.testing.assert_allclose(w.data, np.full((1, 5), 0.2), atol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(1)
        params = init_percept(rng, d_f=16, m_points=12)
        per_point = Tensor(rng.normal(size=(3, 12, 16)))
        fg = Tensor(rng.normal(size=(3, 16)))
        _, w = attend(per_point, fg, params)
        np.testing.assert_allclose(w.data.sum(axis=1), np.ones(3), atol=1e-9)
        assert np.all(w.data >= 0)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(2)
        d_f, m = 6, 4
        params = init_percept(rng, d_f=d_f, m_points=m)
        pp = rng.normal(size=(1, m, d_f))
        fg = rng.normal(size=(1, d_f))
        z, w = attend(Tensor(pp), Tensor(fg), params)

        q = fg[0] @ params.wq.data
        scores = np.empty(m)
        for i in range(m):
            k = pp[0, i] @ params.wk.data
            scores[i] = sum(k[d] * q[d] for d in range(d_f)) / np.sqrt(d_f)
        e = np.exp(scores - scores.max())
        wts = e / e.sum()
        out = np.zeros(d_f)
        for i in range(m):
            out += wts[i] * (pp[0, i] @ params.wv.data)
        np.testing.assert_allclose(z.data[0], fg[0] + out, atol=1e-10)
        np.testing.assert_allclose(w.data[0], wts, atol=1e-10)

    def test_invariant_under_simultaneous_permutation(self):
        rng = np.random.default_rng(4)
        params = init_percept(rng, d_f=8, m_points=6)
        cloud = rng.normal(size=(6, 2))
        perm = rng.permutation(6)
        feats, fg = encode(cloud, params)
        z1, _ = attend(feats, fg, params)
        feats2, fg2 = encode(cloud[perm], params)
        z2, _ = attend(feats2, fg2, params)
        np.testing.assert_allclose(z1.data, z2.data, atol=1e-12)


class TestReconstruct:
    def test_output_shape_and_determinism(self):
        rng = np.random.default_rng(0)
        params = init_percept(rng, d_f=8, m_points=16)
        z = Tensor(rng.normal(size=(2, 8)))
        out1 = reconstruct(z, params)
        out2 = reconstruct(z, params)
        assert out1.shape == (2, 16, 2)
        assert out1.data.tobytes() == out2.data.tobytes()

    def test_recon_loss_gradient_passes_fd_check(self):
        rng = np.random.default_rng(1)
        params = init_percept(rng, d_f=4, m_points=3, enc_hidden=(6,),
                              dec_hidden=(5,))
        target = rng.normal(size=(1, 3, 2))
        z = Tensor(rng.normal(size=(1, 4)))

        loss = recon_loss(target, reconstruct(z, params))
        backward(loss)

        h = 1e-5
        for p in params.decoder.params():
            flat = p.data.reshape(-1)
            gflat = p.grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = float(recon_loss(target, reconstruct(z, params)).data)
                flat[i] = orig - h
                lo = float(recon_loss(target, reconstruct(z, params)).data)
                flat[i] = orig
                fd = (hi - lo) / (2 * h)
                denom = max(abs(fd) + abs(gflat[i]), 1e-8)
                assert abs(fd - gflat[i]) / denom < 1e-4


class TestReconLoss:
    def test_identity_is_zero(self):
        p = np.random.default_rng(0).normal(size=(8, 2))
        assert float(recon_loss(p, p.copy()).data) == 0.0

    def test_uniform_offset(self):
        p = np.random.default_rng(1).normal(size=(20, 2))
        q = p + np.array([0.1, 0.0])
        assert float(recon_loss(p, q).data) == pytest.approx(0.01, abs=1e-12)

    def test_nonnegative_and_symmetric(self):
        rng = np.random.default_rng(2)
        p, q = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
        a = float(recon_loss(p, q).data)
        assert a >= 0
        assert a == pytest.approx(float(recon_loss(q, p).data), rel=1e-12)

    def test_mismatched_counts_rejected(self):
        with pytest.raises(ContractError):
            recon_loss(np.zeros((4, 2)), np.zeros((5, 2)))


class TestChamferOption:
    def test_permutation_invariant_unlike_indexed(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(1, 12, 2))
        perm = p[:, rng.permutation(12), :]
        assert float(chamfer_loss(p, perm).data) == pytest.approx(0.0, abs=1e-12)
        assert float(recon_loss(p, perm).data) > 1e-3

    def test_matches_bruteforce_set_distance(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=(1, 5, 2))
        q = rng.normal(size=(1, 5, 2))
        got = float(chamfer_loss(p, q).data)
        fwd = np.mean([min(np.sum((p[0, i] - q[0, j]) ** 2) for j in range(5))
                       for i in range(5)])
        bwd = np.mean([min(np.sum((p[0, i] - q[0, j]) ** 2) for i in range(5))
                       for j in range(5)])
        assert got == pytest.approx(0.5 * fwd + 0.5 * bwd, abs=1e-12)

    def test_gradient_flows_through_prediction(self):
        rng = np.random.default_rng(2)
        p = rng.normal(size=(1, 4, 2))
        q = Tensor(rng.normal(size=(1, 4, 2)), requires_grad=True)
        backward(chamfer_loss(p, q))
        assert q.grad is not None
        h = 1e-6
        flat = q.data.reshape(-1)
        g = q.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(chamfer_loss(p, Tensor(q.data)).data)
            flat[i] = orig - h
            lo = float(chamfer_loss(p, Tensor(q.data)).data)
            flat[i] = orig
            assert (hi - lo) / (2 * h) == pytest.approx(g[i], abs=1e-4)


class TestFiniteOutputs:
    def test_encoder_outputs_finite_for_bounded_inputs(self):
        rng = np.random.default_rng(5)
        params = init_percept(rng, d_f=32, m_points=64, enc_hidden=(32,))
        for _ in range(20):
            cloud = rng.uniform(-10.0, 10.0, size=(64, 2))
            feats, fg = encode(cloud, params)
            assert np.isfinite(feats.data).all()
            assert np.isfinite(fg.data).all()
            z, w = attend(feats, fg, params)
            assert np.isfinite(z.data).all()


class TestPretraining:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recon_loss_halves_within_2000_steps(self, seed):
        rng = np.random.default_rng(seed)
        m_points = 24
        params = init_percept(rng, d_f=24, m_points=m_points, enc_hidden=(24,),
                              dec_hidden=(48,), sigma=0.01)
        # fixed dataset of disk clouds at varying centers/radii
        objs = [disk_object(pos=rng.uniform(-0.3, 0.3, 2),
                            radius=rng.uniform(0.04, 0.09)) for _ in range(48)]
        clouds = np.stack([sample_cloud(o, m_points, rng) for o in objs])

        opt = Adam(params.params(), lr=2e-3)
        smoothed = None
        initial = None
        for step_i in range(2000):
            idx = rng.integers(0, len(clouds), size=16)
            batch = clouds[idx]
            noisy = perturb(batch, params.sigma, rng)
            feats, fg = encode(noisy, params)
            z, _ = attend(feats, fg, params)
            loss = recon_loss(batch, reconstruct(z, params))
            opt.zero_grad()
            backward(loss)
            opt.step()
            val = float(loss.data)
            smoothed = val if smoothed is None else 0.99 * smoothed + 0.01 * val
            if initial is None:
                initial = smoothed
        assert smoothed <= 0.5 * initial
