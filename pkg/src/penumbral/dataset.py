"""Training-example extraction and the synopsis dump format.

Each example is one decision point of one player: the folded planes of a
fresh subsample of their possible-state set, the action they took, and
the outcome labels the trainer regresses against.  Extraction replays a
game record with fresh trackers, so any record can be mined regardless
of what its players tracked live, and the same decision can be emitted
several times with independent subsamples.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import rules, stateset
from .bits import BLACK, WHITE, board_index
from .evaluator import action_to_index, actions_to_indices
from .rules import Action, initial_state
from .synopsis import NUM_PLANES, synopsis
from .tracking import Tracker

_log = logging.getLogger("penumbral.dataset")

MAGIC = b"PNBS1"

# All sixty-four sense squares are requestable at a sense decision, so the
# legal-index list for that phase is a constant per perspective.
_SENSE_ACTIONS = [Action.sense(s) for s in range(64)]


@dataclass
class Example:
    """One synopsis with its action and outcome labels."""

    planes: np.ndarray  # (104,) uint64 square masks
    perspective: int
    action: int  # ActionIndex of the move or sense taken
    winner: int  # 1 when the perspective player won the game
    soon_win: int  # game over, in this player's favor, within 5 actions
    soon_lose: int
    piece_counts: list  # true counts, perspective player's P..K then opponent's
    legal: np.ndarray  # ActionIndex values requestable at this decision
    game_id: str
    tag: str  # headset tag: the acting player's name


def pack_example(e: Example) -> bytes:
    out = MAGIC + e.planes.astype("<u8").tobytes()
    out += struct.pack("<BHBBB", e.perspective, e.action, e.winner,
                       e.soon_win, e.soon_lose)
    out += bytes(e.piece_counts)
    legal = np.asarray(e.legal, dtype="<u2")
    out += struct.pack("<H", legal.size) + legal.tobytes()
    gid, tag = e.game_id.encode(), e.tag.encode()
    out += struct.pack("<B", len(gid)) + gid
    out += struct.pack("<B", len(tag)) + tag
    return out


def unpack_examples(blob: bytes) -> list[Example]:
    examples = []
    pos = 0
    while pos < len(blob):
        if blob[pos:pos + 5] != MAGIC:
            raise ValueError(f"bad synopsis record magic at byte {pos}")
        pos += 5
        planes = np.frombuffer(blob, dtype="<u8", count=NUM_PLANES, offset=pos)
        pos += NUM_PLANES * 8
        perspective, action, winner, soon_win, soon_lose = struct.unpack_from(
            "<BHBBB", blob, pos)
        pos += 6
        piece_counts = list(blob[pos:pos + 12])
        pos += 12
        (n_legal,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        legal = np.frombuffer(blob, dtype="<u2", count=n_legal, offset=pos)
        pos += n_legal * 2
        gid_len = blob[pos]
        game_id = blob[pos + 1:pos + 1 + gid_len].decode()
        pos += 1 + gid_len
        tag_len = blob[pos]
        tag = blob[pos + 1:pos + 1 + tag_len].decode()
        pos += 1 + tag_len
        examples.append(Example(
            planes=planes.astype(np.uint64), perspective=perspective,
            action=action, winner=winner, soon_win=soon_win,
            soon_lose=soon_lose, piece_counts=piece_counts,
            legal=legal.astype(np.int32), game_id=game_id, tag=tag,
        ))
    return examples


def write_examples(path, examples) -> int:
    with open(path, "wb") as f:
        for e in examples:
            f.write(pack_example(e))
    return len(examples)


def read_examples(path) -> list[Example]:
    with open(path, "rb") as f:
        return unpack_examples(f.read())


# ---------------------------------------------------------------------------
# Extraction


@dataclass
class DecisionPoint:
    """One choice made in a replayed game, with the chooser's exact set."""

    side: int
    sa: object  # StateArray at the decision, phase matching the choice
    taken: Action
    legal: list
    ordinal: int  # action number within the game, senses and moves alike
    world: object  # true state when the choice was made


def iter_decision_points(record, cap: int):
    """Replay a record, yielding every decision backed by an exact set.

    Decisions after a player's tracker freezes are skipped: without the
    possible-state set there is no synopsis to train on.
    """
    trackers = {WHITE: Tracker(WHITE, cap=cap, keep_history=False),
                BLACK: Tracker(BLACK, cap=cap, keep_history=False)}
    world = initial_state()
    for i, turn in enumerate(record.turns):
        side = world.side
        mine = trackers[side]
        sense = Action.from_text(turn.sense)
        if not mine.overflow:
            yield DecisionPoint(side, mine.current.sa, sense,
                                _SENSE_ACTIONS, 2 * i, world)
        world, result = rules.apply_sense(world, sense.sense_sq)
        mine.on_own_sense(sense.sense_sq, result)
        requested = Action.from_text(turn.requested)
        if not mine.overflow:
            moved = stateset.advance_phase(mine.current.sa)
            yield DecisionPoint(side, moved, requested,
                                stateset.set_requestable_moves(moved), 2 * i + 1,
                                world)
        world, executed, capture_square = rules.apply_move(world, requested)
        mine.on_own_move(requested, executed, capture_square)
        trackers[1 - side].on_opponent_move(capture_square)


def _true_piece_counts(world, perspective: int) -> list:
    counts = []
    for color in (perspective, 1 - perspective):
        for kind in range(6):
            counts.append(world.boards[board_index(color, kind)].bit_count())
    return counts


def extract_examples(record, rng, multiplicity: int = 1,
                     subsample_limit: int = 128, cap: int = 50_000,
                     game_id: str | None = None) -> list[Example]:
    """Mine one finished game for training examples.

    Games without a winner carry no outcome label and yield nothing.  Each
    decision appears `multiplicity` times with independent subsamples.
    """
    if record.winner is None or record.reason == "aborted":
        return []
    if game_id is None:
        game_id = f"g{record.seed}-{record.white}-{record.black}"
    names = {WHITE: record.white, BLACK: record.black}
    total_actions = 2 * len(record.turns)
    examples = []
    for point in iter_decision_points(record, cap):
        label = action_to_index(point.taken, point.side)
        legal = actions_to_indices(point.legal, point.side)
        if label not in legal:
            # A scripted or degraded request outside the requestable set;
            # it substituted to something else live, so it is not a
            # usable imitation target.
            _log.debug("skipping off-policy action %s in %s",
                       point.taken.text(), game_id)
            continue
        winner = int(record.winner == point.side)
        actions_left = total_actions - point.ordinal
        soon = actions_left <= 5
        shared = dict(
            perspective=point.side,
            action=label,
            winner=winner,
            soon_win=int(soon and winner),
            soon_lose=int(soon and not winner),
            piece_counts=_true_piece_counts(point.world, point.side),
            legal=legal,
            game_id=game_id,
            tag=names[point.side],
        )
        for _ in range(multiplicity):
            sample = stateset.subsample(point.sa, subsample_limit, rng)
            examples.append(Example(planes=synopsis(sample, point.side), **shared))
    return examples


def extract_many(records, seed: int = 0, **kwargs) -> list[Example]:
    """extract_examples over a record list with one derived rng per game."""
    out = []
    seeds = np.random.SeedSequence(seed).spawn(max(len(records), 1))
    for record, child in zip(records, seeds):
        out.extend(extract_examples(record, np.random.default_rng(child), **kwargs))
    return out


# ---------------------------------------------------------------------------
# Self-play generation


def selfplay(white_spec, black_spec, games: int, seed: int = 0,
             turn_cap: int = 160, progress=None):
    """Play a batch of games between two agent specs, alternating colors.

    Returns the records in play order; aborted games are kept (extraction
    drops them) so seeds stay aligned with game numbers.
    """
    from .harness import play_game

    records = []
    game_seeds = np.random.SeedSequence(seed).generate_state(max(games, 1))
    for g in range(games):
        a, b = (white_spec, black_spec) if g % 2 == 0 else (black_spec, white_spec)
        record = play_game(a.build(), b.build(), seed=int(game_seeds[g]),
                           turn_cap=turn_cap)
        records.append(record)
        if progress is not None:
            progress(g, record)
    return records
