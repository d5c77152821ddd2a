import math

import numpy as np
import pytest

from dyn_nn_lab import morse, networks as nw, training as tr
from dyn_nn_lab.numerics import SeededRng, finite_diff_gradient


def prod2(ell=None):
    return tr.builtin_loss("prod2", ell=ell)


def two_point():
    return tr.builtin_loss("two-point-scalar")


class TestLossAndGradients:
    def test_interpolating_point_has_zero_loss_and_gradient(self):
        model = prod2()
        assert tr.loss(model, [2.0, 0.5]) == pytest.approx(0.0, abs=1e-15)
        assert tr.grad_loss(model, [2.0, 0.5]) == pytest.approx([0.0, 0.0], abs=1e-15)

    def test_rank_one_factorized_loss_value(self):
        model = prod2()
        theta = np.array([1.7, -0.4])
        assert tr.loss(model, theta) == pytest.approx((1 - 1.7 * -0.4) ** 2)

    def test_regimes(self):
        assert prod2().regime == "overparameterized"
        assert two_point().regime == "overdetermined"

    def test_batch_loss_full_set_equals_loss(self):
        model = two_point()
        theta = np.array([0.7])
        assert tr.batch_loss(model, theta, range(2)) == pytest.approx(
            tr.loss(model, theta))

    def test_batch_loss_singleton(self):
        model = two_point()
        assert tr.batch_loss(model, np.array([1.0]), [0]) == pytest.approx(0.5)
        assert tr.batch_loss(model, np.array([1.0]), [1]) == pytest.approx(2.0)

    def test_batch_index_out_of_range(self):
        with pytest.raises(ValueError):
            tr.batch_loss(two_point(), np.array([1.0]), [5])

    def test_reverse_accumulation_matches_finite_differences(self):
        # includes MLP-backed parameter maps beyond the named losses
        rng = SeededRng(606)
        gen = rng.gen
        checked = 0
        for k in range(200):
            kind = k % 4
            if kind < 3:
                model = tr.builtin_loss(tr.BUILTIN_LOSSES[kind])
            else:
                template = morse.random_mlp([2, 3, 1], rng.child(k))
                data = tr.Dataset(gen.normal(size=(3, 2)), gen.normal(size=(3, 1)))
                model = tr.LossModel(tr.MLPMap(template), data, "mse-half")
            theta = gen.normal(scale=1.2, size=model.D)
            g = tr.grad_loss(model, theta)
            fd = finite_diff_gradient(lambda t: tr.loss(model, t), theta)
            rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)
            assert rel <= 1e-5
            checked += 1
        assert checked == 200


class TestGDRun:
    def test_linear_contraction_closed_form(self):
        model = tr.builtin_loss("quadratic", c=1.0)  # L = theta^2/2
        cfg = tr.GDConfig(eta=0.5, max_steps=10, stride=1)
        traj = tr.gd_run(model, [1.0], cfg)
        # theta_n = (1 - eta)^n
        for n, th in enumerate(traj.thetas[:, 0]):
            assert th == pytest.approx(0.5 ** n, abs=1e-14)

    def test_divergence_verdict(self):
        model = tr.builtin_loss("quadratic", c=1.0)
        traj = tr.gd_run(model, [1.0], tr.GDConfig(eta=2.1, max_steps=1000))
        assert traj.diverged
        assert np.all(np.isfinite(traj.thetas))

    def test_critical_point_is_fixed(self):
        model = prod2()
        traj = tr.gd_run(model, [2.0, 0.5], tr.GDConfig(eta=0.3, max_steps=50,
                                                        stride=1))
        assert np.allclose(traj.thetas, traj.thetas[0])

    def test_batched_config_rejected(self):
        with pytest.raises(ValueError):
            tr.gd_run(prod2(), [1.0, 1.0],
                      tr.GDConfig(eta=0.1, batch_size=1, rng=SeededRng(0)))


class TestSGDRun:
    def test_batch_size_bounds(self):
        model = tr.builtin_loss("quadratic", c=1.0)  # N = 1
        with pytest.raises(ValueError):
            tr.sgd_run(model, [1.0], tr.GDConfig(eta=0.1, batch_size=1,
                                                 rng=SeededRng(0)))

    def test_identical_examples_match_full_gd(self):
        data = tr.Dataset(np.array([[1.0], [1.0]]), np.array([[0.0], [0.0]]))
        model = tr.LossModel(tr.LinearScalarMap(), data, "mse-half")
        cfg_s = tr.GDConfig(eta=0.3, max_steps=20, batch_size=1,
                            rng=SeededRng(4), stride=1)
        cfg_g = tr.GDConfig(eta=0.3, max_steps=20, stride=1)
        ts = tr.sgd_run(model, [1.0], cfg_s)
        tg = tr.gd_run(model, [1.0], cfg_g)
        assert np.array_equal(ts.thetas, tg.thetas)

    def test_seeded_reproducibility_and_convergence(self):
        model = two_point()
        runs = []
        for _ in range(2):
            cfg = tr.GDConfig(eta=0.4, max_steps=200, batch_size=1,
                              rng=SeededRng(7), stride=1)
            runs.append(tr.sgd_run(model, [1.0], cfg))
        assert np.array_equal(runs[0].thetas, runs[1].thetas)
        assert runs[0].batch_log == runs[1].batch_log
        assert abs(runs[0].theta_end[0]) < 1e-8

    def test_cocycle_property_bitwise(self):
        model = two_point()
        full = tr.sgd_run(model, [1.0], tr.GDConfig(eta=0.4, max_steps=30,
                                                    batch_size=1,
                                                    rng=SeededRng(11), stride=1))
        rng = SeededRng(11)
        first = tr.sgd_run(model, [1.0], tr.GDConfig(eta=0.4, max_steps=12,
                                                     batch_size=1, rng=rng,
                                                     stride=1))
        second = tr.sgd_run(model, first.theta_end,
                            tr.GDConfig(eta=0.4, max_steps=18, batch_size=1,
                                        rng=rng, stride=1))
        stitched = np.vstack([first.thetas, second.thetas[1:]])
        assert np.array_equal(stitched, full.thetas)

    def test_batch_sampling_uniform_over_subsets(self):
        gen = SeededRng(13).gen
        counts = {}
        for _ in range(6000):
            batch = tuple(sorted(tr.sample_batch(gen, 4, 2)))
            counts[batch] = counts.get(batch, 0) + 1
        assert len(counts) == 6
        freqs = np.array(list(counts.values())) / 6000
        assert np.max(np.abs(freqs - 1 / 6)) < 0.03


class TestFindMinimum:
    def test_reaches_interpolation_manifold(self):
        rep = tr.find_minimum(prod2(), [2.5, 0.41])
        assert rep.on_manifold
        assert rep.theta[0] * rep.theta[1] == pytest.approx(1.0, abs=1e-9)

    def test_manifold_point_returned_unchanged(self):
        rep = tr.find_minimum(prod2(), [2.0, 0.5])
        assert rep.theta == pytest.approx([2.0, 0.5])
        assert rep.on_manifold

    def test_inconsistent_data_off_manifold(self):
        data = tr.Dataset(np.array([[1.0], [1.0]]), np.array([[1.0], [2.0]]))
        model = tr.LossModel(tr.LinearScalarMap(), data, "mse-half")
        rep = tr.find_minimum(model, [0.0])
        assert not rep.on_manifold
        assert rep.residual == pytest.approx(0.5, abs=1e-6)


class TestHessian:
    def test_rank_one_interpolation_hessian(self):
        h = tr.hessian(prod2(), [1.0, 1.0])
        assert np.max(np.abs(h - np.array([[2.0, 2.0], [2.0, 2.0]]))) <= 1e-8

    def test_quadratic_constant_hessian(self):
        model = tr.builtin_loss("quadratic", c=4.0)
        for theta in ([0.0], [2.0], [-1.3]):
            assert tr.hessian(model, theta)[0, 0] == pytest.approx(4.0, abs=1e-8)

    def test_flat_loss_zero_hessian(self):
        data = tr.Dataset(np.array([[0.0]]), np.array([[0.0]]))
        model = tr.LossModel(tr.LinearScalarMap(), data, "mse-half")
        assert tr.hessian(model, [1.0])[0, 0] == pytest.approx(0.0, abs=1e-10)


class TestTangentNormalSplit:
    def test_symmetric_point(self):
        split = tr.tangent_normal_split(prod2(), [1.0, 1.0])
        assert split.tangent_basis.shape == (2, 1)
        assert split.normal_basis.shape == (2, 1)
        assert split.expected_tangent_dim == 1
        assert not split.dim_mismatch
        t = split.tangent_basis[:, 0]
        n = split.normal_basis[:, 0]
        assert abs(t @ np.array([1.0, 1.0])) < 1e-6      # tangent ~ (1, -1)
        assert abs(abs(n @ np.array([1.0, 1.0])) - math.sqrt(2)) < 1e-6
        assert abs(t @ n) <= 1e-10

    def test_asymmetric_point_kernel_tangency(self):
        split = tr.tangent_normal_split(prod2(), [2.0, 0.5])
        t = split.tangent_basis[:, 0]
        # tangent to {theta1*theta2 = 1}: proportional to (theta1, -theta2)
        assert abs(t @ np.array([0.5, 2.0])) < 1e-6
        h = tr.hessian(prod2(), [2.0, 0.5])
        assert np.max(np.abs(h - np.array([[0.5, 2.0], [2.0, 8.0]]))) <= 1e-7

    def test_positive_definite_hessian_empty_tangent(self):
        split = tr.tangent_normal_split(two_point(), [0.0])
        assert split.tangent_basis.shape == (1, 0)
        assert split.dim_mismatch  # D - qN = -1 is not attainable

    def test_off_manifold_rejected(self):
        with pytest.raises(ValueError):
            tr.tangent_normal_split(prod2(), [2.0, 2.0])

    def test_basis_orthonormal_and_hessian_block(self):
        for theta in ([1.0, 1.0], [0.5, 2.0], [-1.0, -1.0]):
            split = tr.tangent_normal_split(prod2(), theta)
            basis = np.hstack([split.tangent_basis, split.normal_basis])
            assert np.max(np.abs(basis.T @ basis - np.eye(2))) <= 1e-10
            h = tr.hessian(prod2(), theta)
            tt = split.tangent_basis.T @ h @ split.tangent_basis
            assert np.max(np.abs(tt)) <= 1e-6 * np.max(np.abs(h))


class TestSpectralStability:
    def test_stable_unstable_edge(self):
        model = prod2()
        assert tr.spectral_stability(model, [1.0, 1.0], 0.4).verdict == "stable"
        assert tr.spectral_stability(model, [1.0, 1.0], 0.6).verdict == "unstable"
        assert tr.spectral_stability(model, [1.0, 1.0], 0.5).verdict == "edge"

    def test_sharpness_is_top_eigenvalue(self):
        frag = tr.spectral_stability(prod2(), [1.0, 1.0], 0.4)
        assert frag.sharpness == pytest.approx(4.0, abs=1e-8)
        assert frag.gd_stable_flag

    def test_loss_scaling_flag_equality(self):
        gen = SeededRng(21).gen
        for _ in range(20):
            c = float(gen.uniform(0.2, 5.0))
            eta = float(gen.uniform(0.05, 1.0))
            model = prod2()
            scaled = tr.LossModel(model.param_map, model.dataset, model.ell,
                                  scale=c)
            theta = [1.0, 1.0]
            f1 = tr.spectral_stability(model, theta, eta).gd_stable_flag
            f2 = tr.spectral_stability(scaled, theta, eta / c).gd_stable_flag
            assert f1 == f2


class TestEdgeOfStabilityTrace:
    def test_quadratic_constant_sharpness(self):
        model = tr.builtin_loss("quadratic", c=4.0)
        rows, _ = tr.edge_of_stability_trace(model, [1.0],
                                             tr.GDConfig(eta=0.1, max_steps=50),
                                             stride=10)
        for row in rows:
            assert row[3] == pytest.approx(4.0, abs=1e-7)
            assert row[4] == pytest.approx(20.0)

    def test_stable_learning_rate_lands_on_stable_arc(self):
        cfg = tr.GDConfig(eta=0.2, max_steps=20_000, stop_grad_tol=1e-13)
        rows, traj = tr.edge_of_stability_trace(prod2(), [2.5, 0.41], cfg,
                                                stride=10)
        assert not traj.diverged
        assert tr.residual(prod2(), traj.theta_end) <= 1e-9
        assert rows[-1][3] <= 10.0 + 1e-6
        assert 0.4568 < abs(traj.theta_end[0]) < 2.1889

    def test_marginal_learning_rate_escapes_initial_region(self):
        cfg = tr.GDConfig(eta=0.5, max_steps=3000, stop_grad_tol=0.0)
        rows, traj = tr.edge_of_stability_trace(prod2(), [2.5, 0.41], cfg,
                                                stride=25)
        # the start sits near the sharpness-13 part of the manifold; the
        # iteration must leave that neighborhood rather than settle there
        assert abs(traj.theta_end[0] - 2.5) > 0.5 or traj.diverged


class TestMilnorProbe:
    def test_exact_map_to_zero(self):
        model = tr.builtin_loss("quadratic", c=1.0)
        res = tr.milnor_probe(model, [0.0], radius=1.0, samples=50, eta=1.0,
                              rng=SeededRng(3), horizon=5)
        assert res.fraction == 1.0

    def test_expansive_map_never_converges(self):
        model = tr.builtin_loss("quadratic", c=1.0)
        res = tr.milnor_probe(model, [0.0], radius=1.0, samples=50, eta=2.5,
                              rng=SeededRng(3), horizon=100)
        assert res.fraction == 0.0

    def test_overparameterized_mode_converges_to_manifold(self):
        res = tr.milnor_probe(prod2(), [1.0, 1.0], radius=0.1, samples=100,
                              eta=0.4, rng=SeededRng(5), horizon=400)
        assert res.mode == "overparameterized"
        assert res.fraction > 0.9


class TestBatchNormalJacobians:
    def test_full_batch_recovers_gd_jacobian(self):
        model = two_point()
        # B = N is outside SGD but the Jacobian builder accepts it
        mats, batches = tr.batch_normal_jacobians(model, [0.0], eta=0.1, b=2)
        assert len(mats) == 1
        hess = tr.hessian(model, [0.0])
        assert mats[0][0, 0] == pytest.approx(1.0 - 0.1 * hess[0, 0], abs=1e-8)

    def test_two_point_scalars(self):
        mats, batches = tr.batch_normal_jacobians(two_point(), [0.0],
                                                  eta=0.4, b=1)
        vals = sorted(m[0, 0] for m in mats)
        assert vals == pytest.approx([1 - 4 * 0.4, 1 - 0.4], abs=1e-8)

    def test_flat_batch_gives_identity(self):
        data = tr.Dataset(np.array([[0.0], [1.0]]), np.array([[0.0], [0.0]]))
        model = tr.LossModel(tr.LinearScalarMap(), data, "mse-half")
        mats, batches = tr.batch_normal_jacobians(model, [0.0], eta=0.7, b=1)
        flat = mats[batches.index((0,))]
        assert flat[0, 0] == pytest.approx(1.0, abs=1e-8)


class TestLyapunovExponent:
    def test_deterministic_diagonal(self):
        est, se = tr.lyapunov_exponent(np.diag([2.0, 0.5]), 2000, SeededRng(1),
                                       replicates=6, burn_in=200)
        assert abs(est - math.log(2.0)) <= 3 * se + 1e-9

    def test_scalar_mixture_closed_form(self):
        mats = np.array([[[0.6]], [[-0.6]]])
        est, se = tr.lyapunov_exponent(mats, 10_000, SeededRng(2), replicates=8)
        assert abs(est - math.log(0.6)) <= 3 * se + 1e-9

    def test_sampler_form_matches_stack_form(self):
        mats = np.array([[[0.7]], [[-1.3]]])
        target = 0.5 * (math.log(0.7) + math.log(1.3))

        def sampler(gen):
            return mats[int(gen.integers(2))]

        est, se = tr.lyapunov_exponent(sampler, 20_000, SeededRng(8),
                                       replicates=6)
        assert abs(est - target) <= 3 * se + 1e-9

    def test_zero_matrix_minus_infinity(self):
        est, se = tr.lyapunov_exponent(np.array([[[0.0]]]), 100, SeededRng(3),
                                       replicates=3)
        assert est == -math.inf

    def test_probabilities_validated(self):
        with pytest.raises(ValueError):
            tr.lyapunov_exponent(np.array([[[1.0]], [[2.0]]]), 10, SeededRng(0),
                                 probs=[0.7, 0.7])


class TestRegularityCheck:
    def test_scalar_contraction(self):
        rep = tr.regularity_check([np.array([[0.5]])], rng=SeededRng(0))
        assert rep.invertible and rep.complement_invertible
        assert rep.irreducible_indicative
        assert rep.regular_indicative

    def test_identity_breaks_complement(self):
        rep = tr.regularity_check([np.array([[1.0]]), np.array([[0.5]])],
                                  rng=SeededRng(0))
        assert not rep.complement_invertible
        assert not rep.regular_indicative

    def test_noncommuting_rotations_pass_heuristic(self):
        def rot(angle, scale):
            c, s = math.cos(angle), math.sin(angle)
            return scale * np.array([[c, -s], [s, c]])
        rep = tr.regularity_check([rot(0.7, 0.9), rot(2.1, 1.1)],
                                  rng=SeededRng(14))
        assert rep.irreducible_indicative

    def test_common_invariant_line_detected(self):
        mats = [np.diag([2.0, 0.5]), np.diag([0.3, 1.5])]
        rep = tr.regularity_check(mats, rng=SeededRng(15))
        assert not rep.irreducible_indicative


class TestStabilityReport:
    def test_spectral_only(self):
        rep = tr.stability_report(prod2(), [1.0, 1.0], eta=0.4)
        assert rep.sharpness == pytest.approx(4.0, abs=1e-8)
        assert rep.gd_stable_flag
        assert rep.residual <= 1e-12
        assert rep.lyapunov is None
        assert rep.tangent_basis.shape == (2, 1)

    def test_batched_report_includes_lyapunov_and_flags(self):
        rep = tr.stability_report(two_point(), [0.0], eta=0.4, batch_size=1,
                                  rng=SeededRng(20), lyapunov_steps=20_000,
                                  replicates=6)
        est, se = rep.lyapunov
        assert abs(est - math.log(0.6)) <= 3 * se + 1e-9
        assert rep.regular_flags.invertible
        assert rep.regular_flags.complement_invertible


class TestVariationalPropagate:
    def test_identity_stages(self):
        stages = [tr.Stage(lambda x: x, lambda x: np.eye(len(x)))] * 3
        _, fwd = tr.variational_propagate(stages, [1.0, 2.0], seed=[1.0, 0.0],
                                          mode="forward")
        assert fwd == pytest.approx([1.0, 0.0])

    def test_chain_rule_scalar_example(self):
        stages = [tr.Stage.from_scalar(lambda x: x * x, lambda x: 2 * x),
                  tr.Stage.from_scalar(math.sin, math.cos)]
        _, fwd = tr.variational_propagate(stages, [0.5], seed=[1.0],
                                          mode="forward")
        _, rev = tr.variational_propagate(stages, [0.5], cotangent=[1.0],
                                          mode="reverse")
        assert fwd[0] == pytest.approx(math.cos(0.25))
        assert rev[0] == pytest.approx(fwd[0], abs=1e-12)

    def test_forward_columns_assemble_reverse_gradient(self):
        gen = SeededRng(99).gen
        spec = morse.random_mlp([3, 3, 1], SeededRng(98))
        stages = [tr.Stage.from_layer(lp) for lp in spec.layers]
        x = gen.normal(size=3)
        _, grad = tr.variational_propagate(stages, x, cotangent=[1.0],
                                           mode="reverse")
        cols = [tr.variational_propagate(stages, x, seed=e, mode="forward")[1][0]
                for e in np.eye(3)]
        assert np.max(np.abs(np.array(cols) - grad)) <= 1e-10

    def test_reverse_matches_finite_differences(self):
        spec = morse.random_mlp([2, 4, 1], SeededRng(44))
        stages = [tr.Stage.from_layer(lp) for lp in spec.layers]
        x = np.array([0.3, -0.7])
        _, grad = tr.variational_propagate(stages, x, cotangent=[1.0],
                                           mode="reverse")
        fd = finite_diff_gradient(lambda p: nw.mlp_forward(spec, p)[0], x)
        assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8) <= 1e-5


class TestVanishingGradient:
    def test_exact_exponentials(self):
        trace = tr.vanishing_gradient_demo(0.01, 5.0, 0.01)
        t, p1, p2, e1, e2 = trace.rows[-1]
        assert t == pytest.approx(5.0)
        assert p1 == pytest.approx(math.exp(-5.0), rel=1e-9)
        assert p2 == pytest.approx(math.exp(-0.05), rel=1e-9)
        assert (e1, e2) == pytest.approx((math.exp(-5.0), math.exp(-0.05)))

    def test_symmetric_epsilon_one(self):
        trace = tr.vanishing_gradient_demo(1.0, 2.0, 0.01)
        for _, p1, p2, _, _ in trace.rows:
            assert p1 == pytest.approx(p2, abs=1e-12)

    def test_time_zero_is_initial_state(self):
        trace = tr.vanishing_gradient_demo(0.5, 1.0, 0.1, p0=(0.3, -0.8))
        assert trace.rows[0] == (0.0, 0.3, -0.8, 0.3, -0.8)

    def test_decay_times_separate_scales(self):
        trace = tr.vanishing_gradient_demo(0.01, 120.0, 0.05)
        t1, t2 = trace.decay_times
        assert t1 == pytest.approx(1.0, abs=0.06)
        assert t2 == pytest.approx(100.0, abs=0.2)


class TestFixedPointInvariant:
    def test_zero_gradient_points_stay_fixed(self):
        gen = SeededRng(70).gen
        model = prod2()
        for _ in range(20):
            a = float(gen.uniform(0.3, 3.0)) * float(gen.choice([-1.0, 1.0]))
            theta = [a, 1.0 / a]
            traj = tr.gd_run(model, theta, tr.GDConfig(eta=0.3, max_steps=10,
                                                       stride=1))
            assert np.allclose(traj.thetas, traj.thetas[0], atol=1e-12)
