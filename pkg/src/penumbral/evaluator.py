"""Action indexing, the material heuristic, and toy-network inference.

Both evaluators speak the same protocol: given a batch of (planes, legal
action indices) pairs they return a probability vector over exactly those
legal actions plus a scalar value in [-1, 1] from the acting player's
point of view. Everything upstream of the bandit goes through here.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import bits
from .bits import BLACK
from .rules import Action
from .synopsis import planes_to_array, synopsis

# ---------------------------------------------------------------------------
# Action indices
# ---------------------------------------------------------------------------

# Moves occupy from * 64 + to with under-promotions folded onto the queen
# index; senses sit above them, then the single pass slot. The tail is
# reserved so the table is a round 66 * 64.
NUM_MOVE_INDICES = 64 * 64
SENSE_BASE = NUM_MOVE_INDICES
PASS_INDEX = SENSE_BASE + 64
NUM_ACTION_INDICES = PASS_INDEX + 64

_FLIP = 56  # xor flips ranks, keeping files, for the black perspective


def action_to_index(action: Action, perspective: int) -> int:
    """Map an action to its index as seen from `perspective`."""
    flip = _FLIP if perspective == BLACK else 0
    if action.kind == "pass":
        return PASS_INDEX
    if action.kind == "sense":
        return SENSE_BASE + (action.sense_sq ^ flip)
    return (action.from_sq ^ flip) * 64 + (action.to_sq ^ flip)


def index_to_action(index: int, perspective: int, pawn_mask: int = 0) -> Action:
    """Invert action_to_index.

    Promotion kind is not part of the index; pass the acting side's pawn
    occupancy so queen promotion can be restored for pawn moves that end
    on a final rank.
    """
    flip = _FLIP if perspective == BLACK else 0
    if index == PASS_INDEX:
        return Action.passing()
    if index >= SENSE_BASE:
        return Action.sense((index - SENSE_BASE) ^ flip)
    from_sq = (index // 64) ^ flip
    to_sq = (index % 64) ^ flip
    promo = None
    back_ranks = bits.RANK_1 | bits.RANK_8
    if (pawn_mask >> from_sq) & 1 and (back_ranks >> to_sq) & 1:
        promo = bits.QUEEN
    return Action.move(from_sq, to_sq, promo)


def actions_to_indices(actions: list[Action], perspective: int) -> np.ndarray:
    return np.array(
        [action_to_index(a, perspective) for a in actions], dtype=np.int32
    )


# ---------------------------------------------------------------------------
# Evaluator output and headsets
# ---------------------------------------------------------------------------


@dataclass
class EvaluatorOutput:
    """Policy over the supplied legal actions plus a value estimate.

    policy[i] corresponds to the i-th legal index in the request; the
    auxiliary predictions are only populated by the network evaluator.
    """

    policy: np.ndarray
    value: float
    soon_win: float | None = None
    soon_lose: float | None = None
    piece_counts: np.ndarray | None = None


TOP_HEADSET = "Top"
ALL_HEADSET = "All"


def select_headset(name: str | None, available: list[str]) -> str:
    """Pick a headset by exact name, falling back to the strongest one."""
    if name is not None and name in available:
        return name
    return TOP_HEADSET


# ---------------------------------------------------------------------------
# Material heuristic
# ---------------------------------------------------------------------------

_MATERIAL = np.array([1.0, 3.0, 3.0, 5.0, 9.0, 0.0])
_KING_CAPTURE_BOOST = 100.0

_OWN_BASE = 12
_DEF_OPP_BASE = 19
_POSS_OPP_BASE = 26
_DEF_OPP_KING = 24


def _popcounts(planes: np.ndarray, base: int, count: int) -> np.ndarray:
    return np.bitwise_count(planes[base : base + count]).astype(np.float64)


class HeuristicEvaluator:
    """Expected-material evaluator usable without any weight file.

    Own material is read exactly; an opposing piece counts fully when it
    appears in every possible state and half when it merely might exist.
    The policy is uniform over legal actions except that moves capturing
    a certainly-placed opposing king get a large multiplicative boost.
    """

    headsets = [TOP_HEADSET, ALL_HEADSET]

    def evaluate(
        self, batch: list[tuple[np.ndarray, np.ndarray]], headset: str = TOP_HEADSET
    ) -> list[EvaluatorOutput]:
        del headset  # one head fits all here
        return [self._one(planes, legal) for planes, legal in batch]

    def _one(self, planes: np.ndarray, legal: np.ndarray) -> EvaluatorOutput:
        own = float(_popcounts(planes, _OWN_BASE, 5) @ _MATERIAL[:5])
        certain = _popcounts(planes, _DEF_OPP_BASE, 5)
        possible = _popcounts(planes, _POSS_OPP_BASE, 5)
        opposing = float((certain + 0.5 * (possible - certain)) @ _MATERIAL[:5])
        value = float(np.tanh((own - opposing) / 10.0))

        weights = np.ones(len(legal))
        king_mask = int(planes[_DEF_OPP_KING])
        if king_mask:
            for i, idx in enumerate(np.asarray(legal)):
                idx = int(idx)
                if idx < NUM_MOVE_INDICES and (king_mask >> (idx % 64)) & 1:
                    weights[i] = _KING_CAPTURE_BOOST
        return EvaluatorOutput(policy=weights / weights.sum(), value=value)

    def policy_for(self, sets, indices, headset: str = TOP_HEADSET) -> np.ndarray:
        """Priors over one action list for each state set, skipping planes.

        Matches evaluate() on each set's synopsis exactly: the only plane
        the policy reads is the certainly-placed opposing king, which is
        the AND-fold of the members' opposing king boards.
        """
        del headset
        indices = np.asarray(indices, dtype=np.int64)
        out = np.empty((len(sets), len(indices)))
        for row, sa in enumerate(sets):
            king_col = bits.board_index(1 - sa.side, bits.KING)
            king_mask = int(np.bitwise_and.reduce(sa.boards[:, king_col]))
            weights = np.ones(len(indices))
            if king_mask:
                flip = _FLIP if sa.side == BLACK else 0
                for i, idx in enumerate(indices):
                    idx = int(idx)
                    if idx < NUM_MOVE_INDICES and (king_mask >> ((idx % 64) ^ flip)) & 1:
                        weights[i] = _KING_CAPTURE_BOOST
            out[row] = weights / weights.sum()
        return out

    def value_for(self, sets, headset: str = TOP_HEADSET) -> np.ndarray:
        """Expected-material values straight from board folds."""
        del headset
        out = np.empty(len(sets))
        for row, sa in enumerate(sets):
            certain_cols = np.bitwise_and.reduce(sa.boards, axis=0)
            possible_cols = np.bitwise_or.reduce(sa.boards, axis=0)
            own_base, opp_base = 6 * sa.side, 6 * (1 - sa.side)
            # Own planes are OR folds, sound for sets whose own placement
            # varies; for an owner-tracked set the folds coincide anyway.
            own_counts = np.bitwise_count(possible_cols[own_base : own_base + 5])
            own = float(own_counts.astype(np.float64) @ _MATERIAL[:5])
            certain = np.bitwise_count(certain_cols[opp_base : opp_base + 5]).astype(np.float64)
            possible = np.bitwise_count(possible_cols[opp_base : opp_base + 5]).astype(np.float64)
            opposing = float((certain + 0.5 * (possible - certain)) @ _MATERIAL[:5])
            out[row] = float(np.tanh((own - opposing) / 10.0))
        return out


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------

WEIGHTS_MAGIC = b"PNBW1"
WEIGHTS_ENV_VAR = "PENUMBRAL_WEIGHTS"


class WeightFileError(ValueError):
    """Base for every malformed-weight-file condition."""


class WeightChecksumError(WeightFileError):
    """The trailing CRC32 does not match the file contents."""


class WeightTensorError(WeightFileError):
    """A tensor name is missing or not recognised."""


class WeightShapeError(WeightFileError):
    """A tensor exists but its dimensions are wrong."""


def write_weights(path: str, tensors: dict[str, np.ndarray]) -> None:
    """Serialise float32 tensors in the engine's portable format."""
    body = bytearray(WEIGHTS_MAGIC)
    body += struct.pack("<I", len(tensors))
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype=np.float32)
        raw = name.encode()
        body += struct.pack("<H", len(raw)) + raw
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    with open(path, "wb") as handle:
        handle.write(bytes(body))


def read_weights(path: str) -> dict[str, np.ndarray]:
    """Parse a weight file, raising WeightChecksumError on any corruption."""
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path!r}: {exc}") from exc
    if len(blob) < len(WEIGHTS_MAGIC) + 8 or not blob.startswith(WEIGHTS_MAGIC):
        raise WeightFileError(f"{path!r} is not a weight file")
    (stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored:
        raise WeightChecksumError(f"checksum mismatch in {path!r}")

    tensors: dict[str, np.ndarray] = {}
    offset = len(WEIGHTS_MAGIC)
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    end = len(blob) - 4
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode()
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = 4 * int(np.prod(shape, dtype=np.int64)) if rank else 4
            data = np.frombuffer(blob[offset : offset + size], dtype="<f4")
            offset += size
            tensors[name] = data.reshape(shape).astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise WeightFileError(f"truncated weight file {path!r}") from exc
    if offset != end:
        raise WeightFileError(f"trailing bytes in weight file {path!r}")
    return tensors


def default_weights_path(explicit: str | None = None) -> str | None:
    """Resolve the weight file path from an argument or the environment."""
    if explicit:
        return explicit
    return os.environ.get(WEIGHTS_ENV_VAR) or None


# ---------------------------------------------------------------------------
# Toy network inference
# ---------------------------------------------------------------------------

NUM_POLICY_CHANNELS = 65  # 64 move targets plus one sense channel
VALUE_CHANNELS = 8


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    patches = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    return np.einsum("ocij,ncxyij->noxy", w, patches) + b[None, :, None, None]


def _conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("oc,ncxy->noxy", w[:, :, 0, 0], x) + b[None, :, None, None]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


@dataclass
class _Headset:
    policy_w: np.ndarray
    policy_b: np.ndarray
    pass_w: np.ndarray
    pass_b: np.ndarray
    value_conv_w: np.ndarray
    value_conv_b: np.ndarray
    value_dense_w: np.ndarray
    value_dense_b: np.ndarray


@dataclass
class _Trunk:
    in_w: np.ndarray
    in_b: np.ndarray
    residual: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = field(
        default_factory=list
    )


class NetworkEvaluator:
    """Inference over a residual trunk with one policy/value pair per headset.

    Batch norm is folded into convolution weights at export time, so the
    forward pass is convolutions, ReLUs, and two tiny dense layers. The
    spatial policy layout matches the action index table: channel t at
    square f is the move f to t, channel 64 is the sense at that square.
    """

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._trunk, self._heads, self._aux = _parse_tensors(tensors)
        self.width = int(self._trunk.in_w.shape[0])
        self.depth = len(self._trunk.residual)
        self.headsets = sorted(self._heads)

    @staticmethod
    def load(path: str) -> "NetworkEvaluator":
        return NetworkEvaluator(read_weights(path))

    def evaluate(
        self, batch: list[tuple[np.ndarray, np.ndarray]], headset: str = TOP_HEADSET
    ) -> list[EvaluatorOutput]:
        if headset not in self._heads:
            raise KeyError(f"unknown headset {headset!r}")
        if not batch:
            return []
        x = np.stack(
            [
                planes_to_array(planes) if planes.dtype == np.uint64 else planes
                for planes, _ in batch
            ]
        ).astype(np.float32)
        head = self._heads[headset]

        trunk = np.maximum(_conv3x3(x, self._trunk.in_w, self._trunk.in_b), 0.0)
        for w1, b1, w2, b2 in self._trunk.residual:
            inner = np.maximum(_conv3x3(trunk, w1, b1), 0.0)
            trunk = np.maximum(trunk + _conv3x3(inner, w2, b2), 0.0)
        pooled = trunk.mean(axis=(2, 3))

        policy_maps = _conv1x1(trunk, head.policy_w, head.policy_b)
        square_logits = policy_maps.reshape(len(batch), NUM_POLICY_CHANNELS, 64)
        pass_logits = pooled @ head.pass_w + head.pass_b[0]

        value_maps = np.maximum(
            _conv1x1(trunk, head.value_conv_w, head.value_conv_b), 0.0
        )
        flat = value_maps.reshape(len(batch), -1)
        values = np.tanh(flat @ head.value_dense_w[0] + head.value_dense_b[0])

        soon = 1.0 / (1.0 + np.exp(-(pooled @ self._aux["soon.w"].T + self._aux["soon.b"])))
        counts = pooled @ self._aux["piece.w"].T + self._aux["piece.b"]

        outputs = []
        for i, (_, legal) in enumerate(batch):
            legal = np.asarray(legal)
            logits = np.empty(len(legal))
            for j, idx in enumerate(legal):
                idx = int(idx)
                if idx == PASS_INDEX:
                    logits[j] = pass_logits[i]
                elif idx >= SENSE_BASE:
                    logits[j] = square_logits[i, 64, idx - SENSE_BASE]
                else:
                    logits[j] = square_logits[i, idx % 64, idx // 64]
            outputs.append(
                EvaluatorOutput(
                    policy=_softmax(logits),
                    value=float(values[i]),
                    soon_win=float(soon[i, 0]),
                    soon_lose=float(soon[i, 1]),
                    piece_counts=counts[i].copy(),
                )
            )
        return outputs

    def policy_for(self, sets, indices, headset: str = TOP_HEADSET) -> np.ndarray:
        """Priors over one action list for each state set, planes built here."""
        indices = np.asarray(indices, dtype=np.int64)
        batch = [
            (synopsis(sa, sa.side, assume_uniform_own=False), indices) for sa in sets
        ]
        return np.stack([out.policy for out in self.evaluate(batch, headset)])

    def value_for(self, sets, headset: str = TOP_HEADSET) -> np.ndarray:
        """Value of each state set from its acting side's point of view."""
        only_pass = np.array([PASS_INDEX], dtype=np.int64)
        batch = [
            (synopsis(sa, sa.side, assume_uniform_own=False), only_pass) for sa in sets
        ]
        return np.array([out.value for out in self.evaluate(batch, headset)])


def _expect(shape: tuple[int, ...], tensor: np.ndarray, name: str) -> np.ndarray:
    if tuple(tensor.shape) != shape:
        raise WeightShapeError(f"{name}: expected shape {shape}, found {tensor.shape}")
    return tensor


def _parse_tensors(tensors: dict[str, np.ndarray]):
    def take(name: str) -> np.ndarray:
        if name not in tensors:
            raise WeightTensorError(f"missing tensor {name!r}")
        return tensors.pop(name)

    tensors = dict(tensors)
    in_w = take("trunk.in.w")
    if in_w.ndim != 4 or in_w.shape[1] != 104 or in_w.shape[2:] != (3, 3):
        raise WeightShapeError(f"trunk.in.w: bad shape {in_w.shape}")
    width = in_w.shape[0]
    trunk = _Trunk(in_w=in_w, in_b=_expect((width,), take("trunk.in.b"), "trunk.in.b"))

    block = 0
    while f"trunk.res{block}.conv1.w" in tensors:
        pieces = []
        for conv in ("conv1", "conv2"):
            base = f"trunk.res{block}.{conv}"
            pieces.append(_expect((width, width, 3, 3), take(base + ".w"), base + ".w"))
            pieces.append(_expect((width,), take(base + ".b"), base + ".b"))
        trunk.residual.append(tuple(pieces))
        block += 1

    names = {name.split(".")[1] for name in tensors if name.startswith("head.")}
    for required in (TOP_HEADSET, ALL_HEADSET):
        if required not in names:
            raise WeightTensorError(f"weight file lacks the {required!r} headset")
    heads = {}
    for name in names:
        base = f"head.{name}."
        heads[name] = _Headset(
            policy_w=_expect(
                (NUM_POLICY_CHANNELS, width, 1, 1),
                take(base + "policy.w"),
                base + "policy.w",
            ),
            policy_b=_expect(
                (NUM_POLICY_CHANNELS,), take(base + "policy.b"), base + "policy.b"
            ),
            pass_w=_expect((width,), take(base + "pass.w"), base + "pass.w"),
            pass_b=_expect((1,), take(base + "pass.b"), base + "pass.b"),
            value_conv_w=_expect(
                (VALUE_CHANNELS, width, 1, 1),
                take(base + "value.conv.w"),
                base + "value.conv.w",
            ),
            value_conv_b=_expect(
                (VALUE_CHANNELS,), take(base + "value.conv.b"), base + "value.conv.b"
            ),
            value_dense_w=_expect(
                (1, VALUE_CHANNELS * 64),
                take(base + "value.dense.w"),
                base + "value.dense.w",
            ),
            value_dense_b=_expect(
                (1,), take(base + "value.dense.b"), base + "value.dense.b"
            ),
        )

    aux = {
        "soon.w": _expect((2, width), take("aux.soon.w"), "aux.soon.w"),
        "soon.b": _expect((2,), take("aux.soon.b"), "aux.soon.b"),
        "piece.w": _expect((12, width), take("aux.piece.w"), "aux.piece.w"),
        "piece.b": _expect((12,), take("aux.piece.b"), "aux.piece.b"),
    }
    if tensors:
        raise WeightTensorError(f"unknown tensor {sorted(tensors)[0]!r}")
    return trunk, heads, aux


def initial_tensors(
    width: int = 32, depth: int = 2, headsets: tuple[str, ...] = (TOP_HEADSET, ALL_HEADSET),
    rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Build a freshly initialised tensor dictionary for the toy network.

    With rng=None every tensor is zero, which the engine treats as a
    uniform-policy, zero-value network; with an rng the convolutions get
    scaled Gaussian weights suitable for quick training experiments.
    """

    def init(*shape: int) -> np.ndarray:
        if rng is None:
            return np.zeros(shape, dtype=np.float32)
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

    def zeros(*shape: int) -> np.ndarray:
        return np.zeros(shape, dtype=np.float32)

    tensors = {"trunk.in.w": init(width, 104, 3, 3), "trunk.in.b": zeros(width)}
    for i in range(depth):
        for conv in ("conv1", "conv2"):
            tensors[f"trunk.res{i}.{conv}.w"] = init(width, width, 3, 3)
            tensors[f"trunk.res{i}.{conv}.b"] = zeros(width)
    for name in headsets:
        base = f"head.{name}."
        tensors[base + "policy.w"] = init(NUM_POLICY_CHANNELS, width, 1, 1)
        tensors[base + "policy.b"] = zeros(NUM_POLICY_CHANNELS)
        tensors[base + "pass.w"] = zeros(width)
        tensors[base + "pass.b"] = zeros(1)
        tensors[base + "value.conv.w"] = init(VALUE_CHANNELS, width, 1, 1)
        tensors[base + "value.conv.b"] = zeros(VALUE_CHANNELS)
        tensors[base + "value.dense.w"] = zeros(1, VALUE_CHANNELS * 64)
        tensors[base + "value.dense.b"] = zeros(1)
    tensors["aux.soon.w"] = zeros(2, width)
    tensors["aux.soon.b"] = zeros(2)
    tensors["aux.piece.w"] = zeros(12, width)
    tensors["aux.piece.b"] = zeros(12)
    return tensors


def load_evaluator(path: str | None = None):
    """Return a network evaluator when weights resolve, else the heuristic."""
    resolved = default_weights_path(path)
    if resolved is None:
        return HeuristicEvaluator()
    return NetworkEvaluator.load(resolved)
