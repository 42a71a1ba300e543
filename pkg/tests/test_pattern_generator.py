"""Unit tests for preview-control synthesis and trajectory generation."""

import math

import numpy as np
import pytest
from _pipeline import (
    DT,
    OMEGA,
    PARAMS,
    constant_schedule,
    hand_pair,
    preview_gains,
    standing_timeline,
)

from locomanip.core_dynamics import ExternalContact
from locomanip.errors import DegenerateScale
from locomanip.pattern_generator import (
    PreviewWeights,
    discretize,
    generate_trajectory,
    initial_state,
    solve_dare_fixed_point,
    step_pg,
    synthesize_gains,
)

# feedback gains for omega=sqrt(9.81/0.8), dt=0.002, q=1, r=1e-8,
# frozen from an independent Riccati solve
K_FB_REF = np.array([4715.60195026, 2705.42004837, 391.51776754])


class TestDiscretize:
    def test_matrix_entries(self):
        A, B, C = discretize(OMEGA, DT)
        assert A[0, 1] == DT
        assert A[0, 2] == pytest.approx(DT * DT / 2.0, rel=1e-15)
        assert A[1, 2] == DT
        assert np.all(np.diag(A) == 1.0)
        assert B[0] == pytest.approx(DT**3 / 6.0, rel=1e-15)
        assert B[1] == pytest.approx(DT * DT / 2.0, rel=1e-15)
        assert B[2] == DT
        assert C[0] == 1.0 and C[1] == 0.0
        assert C[2] == pytest.approx(-0.8 / 9.81, rel=1e-15)

    def test_rejects_bad_sampling(self):
        with pytest.raises(ValueError):
            discretize(OMEGA, 0.0)
        with pytest.raises(ValueError):
            discretize(0.0, DT)


class TestRiccati:
    def test_matches_scipy_dare(self):
        scipy_linalg = pytest.importorskip("scipy.linalg")
        A, B, C = discretize(OMEGA, DT)
        q = np.outer(C, C)
        P = solve_dare_fixed_point(A, B, q, 1e-8)
        P_ref = scipy_linalg.solve_discrete_are(
            A, B.reshape(-1, 1), q, np.array([[1e-8]])
        )
        assert np.allclose(P, P_ref, rtol=1e-9, atol=1e-9)

    def test_feedback_gain_regression(self):
        gains = preview_gains()
        assert np.allclose(gains.k_fb, K_FB_REF, rtol=1e-9)


class TestSynthesis:
    def test_window_sets_preview_length(self):
        gains = preview_gains()
        assert gains.n_preview == 800
        assert gains.k_ff.shape == (800,)
        assert gains.dt == DT
        assert gains.omega == OMEGA

    def test_closed_loop_is_contractive(self):
        gains = preview_gains()
        A, B, _ = discretize(OMEGA, DT)
        closed = A - np.outer(B, gains.k_fb)
        assert np.max(np.abs(np.linalg.eigvals(closed))) < 1.0

    def test_feedforward_dc_matches_feedback(self):
        # an infinitely long window would satisfy sum(k_ff) = k_fb[0]
        gains = preview_gains()
        assert np.sum(gains.k_ff) == pytest.approx(gains.k_fb[0], rel=0.01)

    def test_arrays_are_frozen(self):
        gains = preview_gains()
        with pytest.raises(ValueError):
            gains.k_fb[0] = 0.0
        with pytest.raises(ValueError):
            gains.k_ff[0] = 0.0

    def test_soft_pendulum_needs_longer_window(self):
        # at omega=2.0 one second of preview truncates too much gain mass
        with pytest.raises(ValueError, match="preview window too short"):
            synthesize_gains(PreviewWeights(), 2.0, 0.005, 1.0)
        synthesize_gains(PreviewWeights(), 2.0, 0.005, 2.0)

    def test_minimum_window_enforced(self):
        with pytest.raises(ValueError, match="window"):
            synthesize_gains(PreviewWeights(), OMEGA, DT, 0.8)

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            PreviewWeights(q_zmp=0.0)
        with pytest.raises(ValueError):
            PreviewWeights(r_jerk=-1e-9)


def rollout(gains, refs, state=None):
    """Drive step_pg over a padded reference; returns outputs and jerks."""
    n = len(refs)
    npv = gains.n_preview
    padded = np.vstack([refs, np.tile(refs[-1], (npv, 1))])
    state = np.zeros((3, 2)) if state is None else state
    outputs = np.zeros((n, 2))
    jerks = np.zeros((n, 2))
    for k in range(n):
        state, jerk, out = step_pg(state, gains, padded[k + 1 : k + 1 + npv])
        outputs[k] = out
        jerks[k] = jerk
    return outputs, jerks


class TestPreviewTracking:
    def test_origin_rest_is_exact_fixed_point(self):
        gains = preview_gains()
        refs = np.zeros((100, 2))
        outputs, jerks = rollout(gains, refs)
        assert np.all(jerks == 0.0)
        assert np.all(outputs == 0.0)

    def test_constant_reference_converges_to_fixed_point(self):
        """Jerk decays below 1e-9 once the law settles on a constant ref."""
        gains = preview_gains()
        level = 0.1
        refs = np.tile([level, -level], (int(10.0 / DT), 1))
        _, jerks = rollout(gains, refs, state=initial_state([level, -level]))
        assert np.max(np.abs(jerks[-1])) < 1e-9

    def test_constant_reference_steady_state(self):
        """A long window drives steady-state output error below 1e-6."""
        gains = synthesize_gains(PreviewWeights(), OMEGA, DT, 4.0)
        n = int(10.0 / DT)
        refs = np.zeros((n, 2))
        refs[int(1.0 / DT) :, 0] = 0.3
        outputs, _ = rollout(gains, refs)
        assert abs(outputs[-1, 0] - 0.3) < 1e-6
        assert abs(outputs[-1, 1]) < 1e-6

    def test_piecewise_constant_tracking_rms(self):
        """RMS output error beyond 0.3 s of each jump stays under 2 mm."""
        gains = preview_gains()
        rng = np.random.default_rng(17)
        seg = int(1.2 / DT)
        levels = rng.uniform(-0.075, 0.075, size=8)
        ref_x = np.concatenate(
            [np.full(seg, lv) for lv in levels] + [np.full(int(2.0 / DT), levels[-1])]
        )
        refs = np.column_stack([ref_x, np.zeros_like(ref_x)])
        outputs, _ = rollout(gains, refs, state=initial_state([levels[0], 0.0]))
        err = outputs[:, 0] - ref_x
        mask = np.ones(len(refs), dtype=bool)
        for j in range(1, 9):
            k = j * seg
            mask[k : k + int(0.3 / DT)] = False
        rms = math.sqrt(float(np.mean(err[mask] ** 2)))
        assert rms < 2e-3

    def test_axes_are_decoupled(self):
        gains = preview_gains()
        n = int(3.0 / DT)
        refs = np.zeros((n, 2))
        refs[:, 1] = 0.05 * np.sin(np.linspace(0.0, 4.0 * math.pi, n))
        outputs, jerks = rollout(gains, refs)
        assert np.all(outputs[:, 0] == 0.0)
        assert np.all(jerks[:, 0] == 0.0)
        assert np.any(outputs[:, 1] != 0.0)


class TestGenerateTrajectory:
    def test_default_start_at_first_zmp(self):
        timeline = standing_timeline(
            duration=2.0, schedule=constant_schedule(hand_pair(fx=-50.0))
        )
        traj = generate_trajectory(timeline, preview_gains())
        assert np.all(traj.com_pos[0] == timeline.zmp_ref[0])
        assert np.all(traj.com_vel[0] == 0.0)

    def test_model_consistency_every_sample(self):
        """acc = w^2 (c - kappa z + gamma) and dcm = c + v/w, per sample."""
        timeline = standing_timeline(
            duration=2.0, schedule=constant_schedule(hand_pair(fx=-50.0, fz=100.0))
        )
        traj = generate_trajectory(timeline, preview_gains())
        w2 = OMEGA * OMEGA
        for k in range(0, len(traj.time), 100):
            kappa = timeline.kappa[k]
            gamma = timeline.gamma[k]
            acc_model = w2 * (traj.com_pos[k] - kappa * traj.zmp[k] + gamma)
            assert np.allclose(traj.com_acc[k], acc_model, atol=1e-10)
            assert np.allclose(
                traj.dcm[k], traj.com_pos[k] + traj.com_vel[k] / OMEGA, atol=1e-15
            )

    def test_tracks_shifted_ext_zmp(self):
        """Hands pulling backward shift the CoM behind the stance midpoint."""
        timeline = standing_timeline(
            duration=6.0, schedule=constant_schedule(hand_pair(fx=-50.0))
        )
        traj = generate_trajectory(timeline, preview_gains())
        # settled CoM sits at kappa*z - gamma, not at the ZMP
        gamma_x = timeline.gamma[-1, 0]
        assert traj.com_pos[-1, 0] == pytest.approx(-gamma_x, abs=1e-3)
        assert abs(traj.zmp[-1, 0]) < 1e-3

    def test_degenerate_scale_rejected(self):
        heavy = (
            ExternalContact(
                force=(0.0, 0.0, 0.96 * 981.0),
                moment=(0.0, 0.0, 0.0),
                position=(0.0, 0.0, 1.2),
            ),
        )
        timeline = standing_timeline(duration=0.5, schedule=constant_schedule(heavy))
        with pytest.raises(DegenerateScale):
            generate_trajectory(timeline, preview_gains())

    def test_sampling_mismatch_rejected(self):
        timeline = standing_timeline(duration=0.5)
        wrong_dt = synthesize_gains(PreviewWeights(), OMEGA, 0.004, 1.6)
        with pytest.raises(ValueError, match="rate"):
            generate_trajectory(timeline, wrong_dt)
        wrong_omega = synthesize_gains(PreviewWeights(), 3.0, DT, 1.6)
        with pytest.raises(ValueError, match="frequency"):
            generate_trajectory(timeline, wrong_omega)
