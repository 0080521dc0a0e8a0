"""Action index codec, material heuristic, weight files, and toy inference."""

import dataclasses
import math

import numpy as np
import pytest

from penumbral import evaluator as ev
from penumbral import rules, stateset
from penumbral.bits import BLACK, WHITE, board_index, KING, PAWN, QUEEN
from penumbral.rules import Action
from penumbral.synopsis import planes_to_array, synopsis

from conftest import random_state


# ---------------------------------------------------------------------------
# Action indices
# ---------------------------------------------------------------------------


def test_index_layout_constants():
    assert ev.action_to_index(Action.move(0, 0), WHITE) == 0
    assert ev.action_to_index(Action.sense(0), WHITE) == 4096
    assert ev.action_to_index(Action.passing(), WHITE) == 4160
    assert ev.action_to_index(Action.passing(), BLACK) == 4160
    assert ev.NUM_ACTION_INDICES == 4224


def test_black_perspective_flips_ranks_not_files():
    # e2e4 for White and e7e5 for Black land on the same index.
    white_idx = ev.action_to_index(Action.move(12, 28), WHITE)
    black_idx = ev.action_to_index(Action.move(52, 36), BLACK)
    assert white_idx == black_idx == 12 * 64 + 28
    assert ev.action_to_index(Action.sense(52), BLACK) == 4096 + 12


def test_under_promotions_fold_to_one_index():
    indices = {
        ev.action_to_index(Action.move(48, 56, promo), WHITE)
        for promo in (QUEEN, 1, 2, 3)
    }
    assert len(indices) == 1


def test_codec_roundtrip_over_random_states(rng):
    checked = 0
    for _ in range(60):
        state = random_state(rng)
        persp = state.side
        pawns = state.boards[board_index(persp, PAWN)]
        for action in rules.requestable_actions(state):
            idx = ev.action_to_index(action, persp)
            assert 0 <= idx < ev.NUM_ACTION_INDICES
            back = ev.index_to_action(idx, persp, pawns)
            assert back.text() == action.text()
            checked += 1
    assert checked > 1000


def test_decode_without_pawn_context_drops_promotion():
    idx = ev.action_to_index(Action.move(48, 56, QUEEN), WHITE)
    assert ev.index_to_action(idx, WHITE).promotion is None


# ---------------------------------------------------------------------------
# Material heuristic
# ---------------------------------------------------------------------------


def white_view(state):
    sa = stateset.singleton(state)
    legal = ev.actions_to_indices(rules.requestable_actions(state), state.side)
    return synopsis(sa, state.side), legal


def test_heuristic_initial_position_is_level():
    planes, legal = white_view(rules.initial_state())
    out = ev.HeuristicEvaluator().evaluate([(planes, legal)])[0]
    assert out.value == 0.0
    np.testing.assert_allclose(out.policy, 1.0 / len(legal))
    assert math.isclose(out.policy.sum(), 1.0)


def test_heuristic_up_a_queen():
    state = rules.initial_state()
    boards = list(state.boards)
    boards[board_index(BLACK, QUEEN)] = 0
    state = dataclasses.replace(state, boards=tuple(boards))
    planes, legal = white_view(state)
    out = ev.HeuristicEvaluator().evaluate([(planes, legal)])[0]
    assert out.value == pytest.approx(math.tanh(0.9), abs=1e-9)


def test_heuristic_uncertain_queen_counts_half():
    # Two possible states, one with the opposing queen and one without:
    # the queen contributes 4.5 points of expected material.
    state = rules.initial_state()
    boards = list(state.boards)
    boards[board_index(BLACK, QUEEN)] = 0
    missing = dataclasses.replace(state, boards=tuple(boards))
    sa = stateset.concat(stateset.singleton(state), stateset.singleton(missing))
    legal = ev.actions_to_indices(rules.requestable_actions(state), WHITE)
    out = ev.HeuristicEvaluator().evaluate([(synopsis(sa, WHITE), legal)])[0]
    assert out.value == pytest.approx(math.tanh(0.45), abs=1e-9)


def test_heuristic_boosts_certain_king_capture():
    # White pawn on d7 can take the black king on e8. The hundredfold
    # boost clears 0.9 whenever at most a dozen actions are requestable;
    # this position has nine (five king moves, three pawn moves, pass).
    state = rules.initial_state()
    boards = [0] * 12
    boards[board_index(WHITE, PAWN)] = 1 << 51
    boards[board_index(WHITE, KING)] = 1 << 3
    boards[board_index(BLACK, KING)] = 1 << 60
    state = dataclasses.replace(state, boards=tuple(boards), castling=0)
    state, _ = rules.apply_sense(state, 0)
    planes, legal = white_view(state)
    actions = rules.requestable_actions(state)
    assert len(actions) == 9
    out = ev.HeuristicEvaluator().evaluate([(planes, legal)])[0]
    capture = next(
        i for i, a in enumerate(actions) if a.kind == "move" and a.to_sq == 60
    )
    assert out.policy[capture] > 0.9


def test_heuristic_material_equal_singleton_near_zero(rng):
    # A singleton with level material should sit at exactly zero; fuzzed
    # singletons stay inside the band implied by their material swing.
    state = rules.initial_state()
    planes, legal = white_view(state)
    out = ev.HeuristicEvaluator().evaluate([(planes, legal)])[0]
    assert abs(out.value) <= 0.05


def test_heuristic_antisymmetry_on_singletons(rng):
    # Swapping the own and opposing piece planes of a singleton synopsis
    # flips the sign of the value.
    heur = ev.HeuristicEvaluator()
    for _ in range(25):
        state = random_state(rng)
        sa = stateset.singleton(state)
        planes = synopsis(sa, state.side)
        legal = ev.actions_to_indices(rules.requestable_actions(state), state.side)
        swapped = planes.copy()
        swapped[12:18] = planes[19:25]
        swapped[19:25] = planes[12:18]
        swapped[26:32] = planes[12:18]
        forward = heur.evaluate([(planes, legal)])[0].value
        backward = heur.evaluate([(swapped, legal)])[0].value
        assert forward == pytest.approx(-backward, abs=1e-12)


def test_heuristic_single_action_gets_all_mass():
    planes, _ = white_view(rules.initial_state())
    only = np.array([ev.PASS_INDEX], dtype=np.int32)
    out = ev.HeuristicEvaluator().evaluate([(planes, only)])[0]
    assert out.policy.shape == (1,) and out.policy[0] == 1.0


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------


def test_weight_roundtrip(tmp_path, rng):
    tensors = ev.initial_tensors(width=8, depth=1, rng=rng)
    path = tmp_path / "toy.pnbw"
    ev.write_weights(str(path), tensors)
    loaded = ev.read_weights(str(path))
    assert set(loaded) == set(tensors)
    for name, tensor in tensors.items():
        np.testing.assert_array_equal(loaded[name], tensor)
        assert loaded[name].dtype == np.float32


def test_weight_corruption_raises_checksum_error(tmp_path):
    path = tmp_path / "toy.pnbw"
    ev.write_weights(str(path), ev.initial_tensors(width=8, depth=1))
    blob = path.read_bytes()
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(flipped))
    with pytest.raises(ev.WeightChecksumError):
        ev.read_weights(str(path))
    path.write_bytes(blob[:-9])
    with pytest.raises(ev.WeightFileError):
        ev.read_weights(str(path))


def test_unknown_tensor_rejected(tmp_path):
    tensors = ev.initial_tensors(width=8, depth=1)
    tensors["head.Top.mystery.w"] = np.zeros(3, dtype=np.float32)
    path = tmp_path / "toy.pnbw"
    ev.write_weights(str(path), tensors)
    with pytest.raises(ev.WeightTensorError):
        ev.NetworkEvaluator.load(str(path))


def test_missing_headset_rejected(tmp_path):
    tensors = {
        name: tensor
        for name, tensor in ev.initial_tensors(width=8, depth=1).items()
        if ".All." not in name
    }
    path = tmp_path / "toy.pnbw"
    ev.write_weights(str(path), tensors)
    with pytest.raises(ev.WeightTensorError):
        ev.NetworkEvaluator.load(str(path))


def test_wrong_shape_rejected(tmp_path):
    tensors = ev.initial_tensors(width=8, depth=1)
    tensors["trunk.in.b"] = np.zeros(9, dtype=np.float32)
    path = tmp_path / "toy.pnbw"
    ev.write_weights(str(path), tensors)
    with pytest.raises(ev.WeightShapeError):
        ev.NetworkEvaluator.load(str(path))


def test_absent_file_fails_at_load_time(tmp_path):
    with pytest.raises(ev.WeightFileError):
        ev.NetworkEvaluator.load(str(tmp_path / "nope.pnbw"))


def test_env_var_resolution(tmp_path, monkeypatch):
    monkeypatch.delenv(ev.WEIGHTS_ENV_VAR, raising=False)
    assert ev.default_weights_path(None) is None
    assert isinstance(ev.load_evaluator(None), ev.HeuristicEvaluator)
    monkeypatch.setenv(ev.WEIGHTS_ENV_VAR, str(tmp_path / "w.pnbw"))
    assert ev.default_weights_path(None) == str(tmp_path / "w.pnbw")
    ev.write_weights(str(tmp_path / "w.pnbw"), ev.initial_tensors(width=8, depth=1))
    assert isinstance(ev.load_evaluator(None), ev.NetworkEvaluator)


# ---------------------------------------------------------------------------
# Toy network inference
# ---------------------------------------------------------------------------


def network(width=8, depth=1, rng=None):
    return ev.NetworkEvaluator(ev.initial_tensors(width=width, depth=depth, rng=rng))


def test_zero_network_is_uniform_and_level():
    planes, legal = white_view(rules.initial_state())
    out = network().evaluate([(planes, legal)], ev.TOP_HEADSET)[0]
    np.testing.assert_allclose(out.policy, 1.0 / len(legal))
    assert out.value == pytest.approx(0.0, abs=1e-9)
    assert out.soon_win == pytest.approx(0.5)
    assert out.soon_lose == pytest.approx(0.5)
    assert out.piece_counts.shape == (12,)


def test_policy_mass_only_on_legal_actions(rng):
    net = network(rng=rng)
    planes, legal = white_view(rules.initial_state())
    subset = legal[:5]
    out = net.evaluate([(planes, subset)], ev.TOP_HEADSET)[0]
    assert out.policy.shape == (5,)
    assert out.policy.sum() == pytest.approx(1.0)
    assert (out.policy > 0).all()


def test_network_is_deterministic(rng):
    net = network(rng=rng)
    planes, legal = white_view(rules.initial_state())
    a = net.evaluate([(planes, legal)], ev.TOP_HEADSET)[0]
    b = net.evaluate([(planes, legal)], ev.TOP_HEADSET)[0]
    np.testing.assert_array_equal(a.policy, b.policy)
    assert a.value == b.value


def test_batch_matches_single_evaluation(rng):
    net = network(rng=rng)
    items = []
    for _ in range(4):
        state = random_state(rng)
        sa = stateset.singleton(state)
        legal = ev.actions_to_indices(rules.requestable_actions(state), state.side)
        items.append((synopsis(sa, state.side), legal))
    together = net.evaluate(items, ev.ALL_HEADSET)
    for item, combined in zip(items, together):
        alone = net.evaluate([item], ev.ALL_HEADSET)[0]
        np.testing.assert_allclose(alone.policy, combined.policy, atol=1e-6)
        assert alone.value == pytest.approx(combined.value, abs=1e-6)


def test_headsets_differ_when_weights_differ(rng):
    tensors = ev.initial_tensors(width=8, depth=1, rng=rng)
    tensors["head.Top.policy.w"] = tensors["head.Top.policy.w"] + np.float32(0.1)
    net = ev.NetworkEvaluator(tensors)
    planes, legal = white_view(rules.initial_state())
    top = net.evaluate([(planes, legal)], ev.TOP_HEADSET)[0]
    allh = net.evaluate([(planes, legal)], ev.ALL_HEADSET)[0]
    assert not np.allclose(top.policy, allh.policy)
    with pytest.raises(KeyError):
        net.evaluate([(planes, legal)], "NoSuchHeadset")


def test_accepts_raw_and_float_planes(rng):
    net = network(rng=rng)
    planes, legal = white_view(rules.initial_state())
    raw = net.evaluate([(planes, legal)], ev.TOP_HEADSET)[0]
    floats = net.evaluate([(planes_to_array(planes), legal)], ev.TOP_HEADSET)[0]
    np.testing.assert_allclose(raw.policy, floats.policy, atol=1e-7)
    assert raw.value == pytest.approx(floats.value, abs=1e-7)


def test_select_headset():
    available = [ev.TOP_HEADSET, ev.ALL_HEADSET, "StrongBot"]
    assert ev.select_headset("StrongBot", available) == "StrongBot"
    assert ev.select_headset("Unknown", available) == ev.TOP_HEADSET
    assert ev.select_headset(None, available) == ev.TOP_HEADSET
