"""Regenerate the cross-language fixtures in this directory.

Run from the repository root with the engine installed:

    python trainer/test/data/gen.py

Outputs:
  sample.pnbs            self-play synopsis examples (engine-written)
  sample_expected.json   field-level expectations for the record parser
  parity.pnbw            random dense weights written by the engine
  parity_expected.json   engine forward outputs on the first sample records
"""

import json
import pathlib

import numpy as np

from penumbral.dataset import extract_many, read_examples, selfplay, write_examples
from penumbral.evaluator import NetworkEvaluator, initial_tensors, write_weights
from penumbral.harness import AgentSpec

HERE = pathlib.Path(__file__).parent


def main() -> None:
    records = selfplay(
        AgentSpec("MaterialBot"), AgentSpec("AttackerBot"), games=6, seed=5, turn_cap=80
    )
    examples = extract_many(records, seed=11, multiplicity=1, subsample_limit=64)[:150]
    write_examples(HERE / "sample.pnbs", examples)

    def describe(e):
        return {
            "perspective": int(e.perspective),
            "action": int(e.action),
            "winner": int(e.winner),
            "soon_win": int(e.soon_win),
            "soon_lose": int(e.soon_lose),
            "piece_counts": [int(c) for c in e.piece_counts],
            "legal_len": int(e.legal.size),
            "legal_first": int(e.legal[0]),
            "legal_last": int(e.legal[-1]),
            "game_id": e.game_id,
            "tag": e.tag,
        }

    expected = {
        "count": len(examples),
        "first_planes": [str(int(p)) for p in examples[0].planes],
        "head": [describe(e) for e in examples[:3]],
        "tags": sorted({e.tag for e in examples}),
    }
    (HERE / "sample_expected.json").write_text(json.dumps(expected, indent=1))

    # Dense random weights: every head contributes nonzero outputs, which
    # makes the parity comparison sensitive to any layout mistake.
    rng = np.random.default_rng(3)
    tensors = {
        name: (rng.standard_normal(t.shape) * 0.1).astype(np.float32)
        for name, t in initial_tensors(width=8, depth=1).items()
    }
    write_weights(HERE / "parity.pnbw", tensors)

    evaluator = NetworkEvaluator(tensors)
    cases = []
    sample = read_examples(HERE / "sample.pnbs")[:6]
    for i, e in enumerate(sample):
        headset = evaluator.headsets[i % len(evaluator.headsets)]
        (out,) = evaluator.evaluate([(e.planes, e.legal)], headset)
        cases.append(
            {
                "index": i,
                "headset": headset,
                "policy": [float(p) for p in out.policy],
                "value": float(out.value),
                "soon_win": float(out.soon_win),
                "soon_lose": float(out.soon_lose),
                "piece_counts": [float(c) for c in out.piece_counts],
            }
        )
    (HERE / "parity_expected.json").write_text(json.dumps({"cases": cases}, indent=1))
    print(f"wrote {len(examples)} examples and {len(cases)} parity cases")


if __name__ == "__main__":
    main()
