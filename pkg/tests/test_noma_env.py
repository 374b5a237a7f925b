import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irs_noma_ddpg.channel import ChannelRealization, FadingConfig, SystemDims, sample_realization
from irs_noma_ddpg.noma_env import (
    EnvConfig,
    EnvState,
    NetworkAction,
    ProjectionDegenerateError,
    action_dim,
    check_sic_feasibility,
    dbm_to_watts,
    decode_action,
    decoding_order,
    encode_action,
    env_step,
    initial_action,
    initial_state,
    interference_set,
    project_action,
    rate,
    sinr_observed,
    state_dim,
    watts_to_dbm,
)

from conftest import make_realization
from oracles import feasibility_pairs, sinr_pair, sorted_by_gain


def direct_only_realization(h_d_rows, n_elements=1):
    """Realization whose reflective path is zero, so composite = conj(h_d)."""
    h_d = np.atleast_2d(np.asarray(h_d_rows, dtype=complex))
    K, M = h_d.shape
    return ChannelRealization(
        G=np.zeros((n_elements, M), dtype=complex),
        h_d=h_d,
        h_r=np.zeros((K, n_elements), dtype=complex),
        dist_direct=np.ones(K),
        dist_reflect=np.ones(K),
        dist_bs_irs=1.0,
    )


def unit_phases(n):
    return np.ones(n, dtype=complex)


# ---------------------------------------------------------------------------
# decoding order / interference sets


def test_decoding_order_two_users():
    # gains 2.0 and 0.5: the weaker user (index 1) is decoded first
    real = direct_only_realization([[np.sqrt(2.0)], [np.sqrt(0.5)]])
    npt.assert_array_equal(decoding_order(real, unit_phases(1)), [1, 0])


def test_decoding_order_ties_broken_by_index():
    real = direct_only_realization([[1.0], [1.0], [1.0]])
    npt.assert_array_equal(decoding_order(real, unit_phases(1)), [0, 1, 2])


def test_decoding_order_matches_sort_oracle():
    rng = np.random.default_rng(17)
    for _ in range(25):
        real = sample_realization(SystemDims(M=2, N=3, K=5), FadingConfig(), rng)
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
        npt.assert_array_equal(decoding_order(real, phases), sorted_by_gain(real, phases))


def test_decoding_order_label_equivariance():
    rng = np.random.default_rng(29)
    real = sample_realization(SystemDims(M=2, N=3, K=4), FadingConfig(), rng)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    perm = np.array([2, 0, 3, 1])  # new index of each old user
    permuted = ChannelRealization(
        G=real.G,
        h_d=real.h_d[np.argsort(perm)],
        h_r=real.h_r[np.argsort(perm)],
        dist_direct=real.dist_direct[np.argsort(perm)],
        dist_reflect=real.dist_reflect[np.argsort(perm)],
        dist_bs_irs=real.dist_bs_irs,
    )
    base = decoding_order(real, phases)
    npt.assert_array_equal(decoding_order(permuted, phases), perm[base])


def test_interference_set_examples():
    order = np.array([0, 1, 2])
    assert interference_set(order, 0) == {1, 2}
    assert interference_set(order, 2) == set()
    assert interference_set(np.array([2, 0, 1]), 1) == {1}
    with pytest.raises(ValueError):
        interference_set(order, 3)


# ---------------------------------------------------------------------------
# SINR and rates


def test_sinr_single_user():
    real = direct_only_realization([[2.0]])
    action = NetworkAction(beams=np.array([[3.0 + 0.0j]]), phases=unit_phases(1))
    got = sinr_observed(0, 0, action, real, np.array([0]), noise_power=0.5)
    npt.assert_allclose(got, (2.0 * 3.0) ** 2 / 0.5)


def test_sinr_orthogonal_interferers():
    # Composite channel of user 0 is [1, 0]; the other beams live on the
    # second antenna axis, so only w_0 contributes signal or interference.
    real = direct_only_realization([[1.0, 0.0], [0.0, 1.0]])
    beams = np.array([[0.7 + 0.0j, 0.0], [0.0, 0.9 + 0.0j]])
    action = NetworkAction(beams=beams, phases=unit_phases(1))
    order = decoding_order(real, unit_phases(1))
    got = sinr_observed(0, 0, action, real, order, noise_power=1e-2)
    npt.assert_allclose(got, 0.49 / 1e-2)


def test_sinr_matches_bruteforce_oracle():
    rng = np.random.default_rng(41)
    for _ in range(50):
        real = sample_realization(SystemDims(M=3, N=4, K=3), FadingConfig(), rng)
        beams = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) / np.sqrt(2)
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        action = NetworkAction(beams=beams, phases=phases)
        order = decoding_order(real, phases)
        noise = 1e-4
        for pos_i in range(3):
            for pos_j in range(pos_i, 3):
                i, j = int(order[pos_i]), int(order[pos_j])
                got = sinr_observed(i, j, action, real, order, noise)
                want = sinr_pair(real, phases, beams, order, i, j, noise)
                assert abs(got - want) <= 1e-12 * max(abs(want), 1e-30)


def test_rate_values():
    assert rate(0.0) == 0.0
    npt.assert_allclose(rate(1.0), 1.0)
    npt.assert_allclose(rate(3.0), 2.0)
    with pytest.raises(ValueError):
        rate(-1e-9)


# ---------------------------------------------------------------------------
# projection


def test_project_single_beam_rescale():
    raw = NetworkAction(beams=np.array([[1.0 + 0.0j, 0.0]]), phases=unit_phases(2))
    out = project_action(raw, P_t=4.0)
    npt.assert_allclose(out.beams, [[2.0 + 0.0j, 0.0]])


def test_project_phase_normalization():
    raw = NetworkAction(beams=np.array([[1.0 + 0.0j]]), phases=np.array([3.0 + 4.0j]))
    out = project_action(raw, P_t=1.0)
    npt.assert_allclose(out.phases, [0.6 + 0.8j])


def test_project_preserves_power_ratio():
    raw = NetworkAction(
        beams=np.array([[1.0 + 0.0j, 0.0], [np.sqrt(3.0) + 0.0j, 0.0]]),
        phases=unit_phases(2),
    )
    out = project_action(raw, P_t=8.0)
    npt.assert_allclose(out.beam_powers(), [2.0, 6.0], rtol=1e-12)
    npt.assert_allclose(out.total_power(), 8.0, rtol=1e-12)


def test_project_degenerate_inputs():
    with pytest.raises(ProjectionDegenerateError):
        project_action(NetworkAction(beams=np.zeros((2, 2), dtype=complex), phases=unit_phases(2)), 1.0)
    with pytest.raises(ProjectionDegenerateError):
        project_action(
            NetworkAction(beams=np.ones((1, 1), dtype=complex), phases=np.array([0.0 + 0.0j])),
            1.0,
        )


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_projection_properties(seed):
    rng = np.random.default_rng(seed)
    K, M, N = (int(rng.integers(1, 5)) for _ in range(3))
    raw = NetworkAction(
        beams=rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M)),
        phases=rng.standard_normal(N) + 1j * rng.standard_normal(N),
    )
    P_t = float(rng.uniform(0.1, 10.0))
    out = project_action(raw, P_t)
    # exact power, unit modulus
    assert abs(out.total_power() - P_t) <= 1e-9 * P_t
    assert np.max(np.abs(np.abs(out.phases) - 1.0)) <= 1e-12
    # idempotence
    again = project_action(out, P_t)
    npt.assert_allclose(again.beams, out.beams, rtol=0, atol=1e-12 * np.abs(out.beams).max())
    npt.assert_allclose(again.phases, out.phases, rtol=0, atol=1e-12)
    # direction preservation per beam
    for k in range(K):
        a, b = raw.beams[k], out.beams[k]
        cos = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
        assert abs(cos - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# feasibility and reward


def _two_user_setup(w0, w1, noise=1.0):
    real = direct_only_realization([[1.0], [2.0]])
    beams = np.array([[w0], [w1]], dtype=complex)
    action = NetworkAction(beams=beams, phases=unit_phases(1))
    order = decoding_order(real, unit_phases(1))
    dims = SystemDims(M=1, N=1, K=2)
    cfg = EnvConfig(P_t=abs(w0) ** 2 + abs(w1) ** 2 + 1e-12, dims=dims, noise_power=noise, R_t=1.0)
    return action, real, order, cfg


def test_feasibility_rt_zero_always_feasible():
    rng = np.random.default_rng(3)
    real = sample_realization(SystemDims(M=2, N=3, K=2), FadingConfig(), rng)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    action = NetworkAction(
        beams=(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))),
        phases=phases,
    )
    dims = SystemDims(M=2, N=3, K=2)
    cfg = EnvConfig(P_t=1.0, dims=dims, R_t=0.0)
    feasible, deficit = check_sic_feasibility(action, real, decoding_order(real, phases), cfg)
    assert feasible and deficit == 0.0


def test_feasibility_clean_pass():
    # Rates: R_0 = log2(1 + 4/1.01), R_01 = log2(1 + 16/4.01), R_1 = log2(401);
    # all above R_t = 1, so feasible with zero deficit.
    action, real, order, cfg = _two_user_setup(2.0, 1.0, noise=0.01)
    feasible, deficit = check_sic_feasibility(action, real, order, cfg)
    assert feasible and deficit == 0.0


def test_feasibility_exact_deficit():
    # Weak user's beam sized so its own rate is exactly 0.4 while the other
    # user's observation of it clears the target: the single violated cross
    # pair contributes 0.4 - 1.0 = -0.6.
    w0 = np.sqrt(2.0**0.4 - 1.0)
    action, real, order, cfg = _two_user_setup(w0, 0.0)
    feasible, deficit = check_sic_feasibility(action, real, order, cfg)
    assert not feasible
    npt.assert_allclose(deficit, -0.6, rtol=1e-12)


def test_feasibility_matches_pair_oracle():
    rng = np.random.default_rng(53)
    dims = SystemDims(M=2, N=3, K=3)
    cfg = EnvConfig(P_t=1.0, dims=dims, noise_power=1e-4, R_t=0.8)
    for _ in range(40):
        real = sample_realization(dims, FadingConfig(), rng)
        raw = NetworkAction(
            beams=rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)),
            phases=rng.standard_normal(3) + 1j * rng.standard_normal(3),
        )
        action = project_action(raw, cfg.P_t)
        order = decoding_order(real, action.phases)
        feasible, deficit = check_sic_feasibility(action, real, order, cfg)
        want_f, want_d = feasibility_pairs(
            real, action.phases, action.beams, order, cfg.noise_power, cfg.R_t
        )
        assert feasible == want_f
        assert abs(deficit - want_d) <= 1e-12 * max(abs(want_d), 1e-30)


def test_more_severe_violation_lowers_reward():
    # Raising the noise floor lowers every rate, so the deficit drops.
    w0 = np.sqrt(2.0**0.4 - 1.0)
    action, real, order, cfg_lo = _two_user_setup(w0, 0.0, noise=1.0)
    _, _, _, cfg_hi = _two_user_setup(w0, 0.0, noise=10.0)
    _, deficit_lo = check_sic_feasibility(action, real, order, cfg_lo)
    _, deficit_hi = check_sic_feasibility(action, real, order, cfg_hi)
    assert deficit_hi < deficit_lo < 0


# ---------------------------------------------------------------------------
# action encoding


def test_encode_layout_minimal():
    action = NetworkAction(
        beams=np.array([[1.0 + 2.0j]]), phases=np.array([0.0 + 1.0j])
    )
    npt.assert_array_equal(encode_action(action), [1.0, 2.0, 0.0, 1.0])


def test_encode_decode_roundtrip():
    rng = np.random.default_rng(7)
    dims = SystemDims(M=3, N=5, K=3)
    for _ in range(100):
        action = NetworkAction(
            beams=rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)),
            phases=rng.standard_normal(5) + 1j * rng.standard_normal(5),
        )
        back = decode_action(encode_action(action), dims)
        npt.assert_array_equal(back.beams, action.beams)
        npt.assert_array_equal(back.phases, action.phases)


def test_decode_zero_and_bad_length():
    dims = SystemDims(M=2, N=2, K=2)
    zero = decode_action(np.zeros(action_dim(dims)), dims)
    assert not zero.beams.any() and not zero.phases.any()
    with pytest.raises(ValueError):
        decode_action(np.zeros(action_dim(dims) + 1), dims)


def test_state_vector_length():
    dims = SystemDims(M=3, N=4, K=2)
    state = EnvState(
        prev_sinr=np.zeros(2), prev_action=np.zeros(action_dim(dims)), prev_beam_power=np.zeros(2)
    )
    assert state.to_vector().shape == (state_dim(dims),)
    assert state_dim(dims) == 2 + 2 * 3 * 2 + 2 * 4 + 2


# ---------------------------------------------------------------------------
# env_step


def _random_raw_vec(dims, rng):
    return rng.standard_normal(action_dim(dims))


def test_env_step_feasible_reward_is_sum_rate():
    dims = SystemDims(M=2, N=3, K=2)
    cfg = EnvConfig(P_t=1.0, dims=dims, R_t=0.0)
    rng = np.random.default_rng(8)
    real = sample_realization(dims, FadingConfig(), rng)
    outcome = env_step(_random_raw_vec(dims, rng), real, cfg)
    assert outcome.feasible
    npt.assert_allclose(outcome.reward, outcome.sum_rate)
    npt.assert_allclose(outcome.reward, np.sum(outcome.rates))


def test_env_step_infeasible_reward_matches_deficit():
    dims = SystemDims(M=2, N=3, K=2)
    cfg = EnvConfig(P_t=1e-6, dims=dims, R_t=2.0)  # starved power: infeasible
    rng = np.random.default_rng(9)
    found = False
    for _ in range(20):
        real = sample_realization(dims, FadingConfig(), rng)
        raw = _random_raw_vec(dims, rng)
        outcome = env_step(raw, real, cfg)
        if not outcome.feasible:
            found = True
            action = project_action(decode_action(raw, dims), cfg.P_t)
            feasible, deficit = check_sic_feasibility(action, real, outcome.decoding_order, cfg)
            assert not feasible
            assert outcome.reward <= 0.0
            npt.assert_allclose(outcome.reward, deficit, rtol=1e-12)
    assert found


def test_env_step_next_state_contents():
    dims = SystemDims(M=2, N=3, K=2)
    cfg = EnvConfig(P_t=2.0, dims=dims, R_t=0.0)
    rng = np.random.default_rng(10)
    real = sample_realization(dims, FadingConfig(), rng)
    raw = _random_raw_vec(dims, rng)
    outcome = env_step(raw, real, cfg)
    ns = outcome.next_state
    projected = project_action(decode_action(raw, dims), cfg.P_t)
    npt.assert_allclose(ns.prev_action, encode_action(projected))
    npt.assert_allclose(np.sum(ns.prev_beam_power), cfg.P_t, rtol=1e-12)
    npt.assert_allclose(np.log2(1.0 + ns.prev_sinr), outcome.rates, rtol=1e-12)
    assert ns.to_vector().shape == (state_dim(dims),)


def test_env_step_rejects_degenerate_raw_action():
    dims = SystemDims(M=2, N=2, K=2)
    cfg = EnvConfig(P_t=1.0, dims=dims)
    real = make_realization(dims, seed=2)
    with pytest.raises(ProjectionDegenerateError):
        env_step(np.zeros(action_dim(dims)), real, cfg)


def test_initial_action_and_state():
    dims = SystemDims(M=2, N=4, K=2)
    rng = np.random.default_rng(12)
    act = initial_action(dims, rng)
    npt.assert_array_equal(act.beams, np.eye(2, dtype=complex))
    npt.assert_allclose(np.abs(act.phases), 1.0)
    cfg = EnvConfig(P_t=1.0, dims=dims, R_t=0.0)
    real = make_realization(dims, seed=3)
    state = initial_state(real, cfg, np.random.default_rng(12))
    assert state.to_vector().shape == (state_dim(dims),)
    npt.assert_allclose(np.sum(state.prev_beam_power), 1.0, rtol=1e-12)


def test_rectangular_identity_beams():
    dims = SystemDims(M=2, N=2, K=3)
    act = initial_action(dims, np.random.default_rng(0))
    npt.assert_array_equal(act.beams, np.eye(3, 2, dtype=complex))


def test_dbm_conversion():
    npt.assert_allclose(dbm_to_watts(-10.0), 1e-4)
    npt.assert_allclose(dbm_to_watts(30.0), 1.0)
    npt.assert_allclose(watts_to_dbm(1e-4), -10.0)


def test_env_config_validation():
    dims = SystemDims(M=2, N=2, K=2)
    with pytest.raises(ValueError):
        EnvConfig(P_t=0.0, dims=dims)
    with pytest.raises(ValueError):
        EnvConfig(P_t=1.0, dims=dims, noise_power=0.0)
    with pytest.raises(ValueError):
        EnvConfig(P_t=1.0, dims=dims, R_t=-0.5)
