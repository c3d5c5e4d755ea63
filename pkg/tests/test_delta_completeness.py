"""Brute-force completeness of hit-stream diffing: every single-hit
perturbation of a recorded trace yields exactly one non-AllSame block,
anchored at the last matched site before it.

Hit values here are determined by the site they were recorded at. Alignment
is by site id with values judged afterwards, so inside a run of equal-id hits
the aligner may pair any subset; site-determined values make every such
choice equivalent and the single-block guarantee exact. (With per-iteration
values a dropped hit inside a run can surface as OnlyA plus an adjacent
DiffVars — that ambiguity is inherent to id-based alignment, not a defect.)
"""

import random

from resub.diffrepair import DeltaKind, diff_traces, pair_calls
from resub.tracekit import BinaryRole, ExecutionTrace, TraceHit, call_hash

N_TRACES = 50
MAX_HITS = 200
BP_IDS = [f"L{n}" for n in (4, 5, 7, 9, 12, 15, 21)]


def site_values(bp):
    return {"v": str(int(bp[1:]) * 13 % 97)}


def synth_trace(rng, n_hits):
    return [TraceHit("t", call_hash("t", 1), bp, 1, 1, site_values(bp))
            for bp in (rng.choice(BP_IDS) for _ in range(n_hits))]


def as_pair(a_hits, b_hits):
    pairs, a_only, b_only = pair_calls(
        ExecutionTrace(BinaryRole.OriginalA, list(a_hits)),
        ExecutionTrace(BinaryRole.SubstitutedB, list(b_hits)))
    assert not a_only and not b_only
    return pairs[0]


def check_anchor_chain(blocks):
    """Each block's anchor is the id of the matched entry right before it."""
    last_matched = ""
    for block in blocks:
        assert block.anchor == last_matched
        for entry in block.entries:
            if block.kind in (DeltaKind.AllSame, DeltaKind.DiffVars):
                last_matched = entry.bp_id


def divergent(a_hits, b_hits):
    blocks = diff_traces(as_pair(a_hits, b_hits))
    check_anchor_chain(blocks)
    return [b for b in blocks if b.kind != DeltaKind.AllSame]


def test_single_hit_perturbations():
    rng = random.Random(0x5EED)
    sizes = [rng.randrange(4, 41) for _ in range(N_TRACES - 3)] + [MAX_HITS] * 3
    assert len(sizes) == N_TRACES
    checked = 0
    for size in sizes:
        hits = synth_trace(rng, size)
        assert not divergent(hits, list(hits))      # identity

        # one perturbation per position, the shape rotating so every index
        # is exercised without cubing the runtime
        for i in range(len(hits)):
            mode = (i + size) % 3
            b = list(hits)
            if mode == 0:        # value change at i -> DiffVars
                h = hits[i]
                b[i] = TraceHit(h.test_id, h.call_hash, h.bp_id,
                                h.invocation_index, h.call_depth,
                                {"v": "999"})
                expected = DeltaKind.DiffVars
            elif mode == 1:      # drop hit i -> OnlyA
                del b[i]
                expected = DeltaKind.OnlyA
            else:                # insert a foreign hit after i -> OnlyB
                b.insert(i + 1, TraceHit("t", call_hash("t", 1), "L99",
                                         1, 1, {"v": "0"}))
                expected = DeltaKind.OnlyB
            odd = divergent(hits, b)
            assert len(odd) == 1
            assert odd[0].kind == expected
            assert len(odd[0].entries) == 1
            want_bp = "L99" if expected is DeltaKind.OnlyB else hits[i].bp_id
            assert odd[0].entries[0].bp_id == want_bp
            checked += 1
    assert checked >= 1000
