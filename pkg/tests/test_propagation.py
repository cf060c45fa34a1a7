import pytest
from hypothesis import given, settings, strategies as st

from advf import kernels
from advf import masking as mk
from advf.interp import run, run_with_injection
from advf.ir import parse_program
from advf.propagation import (Escalated, InjectionPoint, MaskedAt, PropagationConfig, read_points,
                              resolve, write_points)
from advf.trace import DataObjectMap, resolve_object_refs

from test_interp import BRANCH, GIANT, dyn_of


def deferred(p, obj, trace=None):
    if trace is None:
        _, trace = run(p)
    trace = resolve_object_refs(trace, DataObjectMap.for_program(p))
    out = []
    for rec in trace:
        for s in mk.target_slots(rec, obj):
            pos = mk.FaultPattern.single().positions(rec.slot(s).value.type.bit_width)
            for v, bits in zip(mk.classify(rec, s, mk.FaultPattern.single()), pos):
                if v is None:
                    out.append((rec, s, bits))
    return trace, out


def test_giant_masks_by_shadowing():
    p = parse_program(GIANT)
    _, tr = run(p)
    rec = tr[dyn_of(tr, "c")]
    [o] = resolve(p, None, tr, [(rec, "result", (0,))], PropagationConfig(10))
    assert isinstance(o, MaskedAt)
    assert o.cls == mk.SHADOWING and o.steps <= 2 and o.level == mk.PROPAGATION


def test_branch_flip_escalates():
    p = parse_program(BRANCH)
    _, tr = run(p)
    rec = tr[dyn_of(tr, "t")]
    [o] = resolve(p, None, tr, [(rec, "result", (0,))])
    assert isinstance(o, Escalated)
    assert o.point == InjectionPoint(rec.dyn_id, "result", (0,))
    assert o.reason.startswith("diverged")


def test_chain_budget_boundary():
    p = kernels.load("chain_k").program
    _, tr = run(p)
    cand = [(tr[dyn_of(tr, "v1")], 0, (30,))]
    # the chain carries the fault through 12 tainted operations
    assert isinstance(resolve(p, None, tr, cand, PropagationConfig(11))[0], Escalated)
    o = resolve(p, None, tr, cand, PropagationConfig(12))[0]
    assert isinstance(o, MaskedAt) and o.cls == mk.OVERWRITING and o.steps <= 12


def test_output_order_follows_input():
    p = kernels.load("mmul").program
    tr, cands = deferred(p, "C")
    sample = cands[::97][::-1]
    out = resolve(p, None, tr, sample)
    for (rec, s, bits), o in zip(sample, out):
        key = o.point if isinstance(o, Escalated) else None
        if key is not None:
            assert key == InjectionPoint(rec.dyn_id, s, bits)
    assert out == [resolve(p, None, tr, [c])[0] for c in sample]


@pytest.mark.parametrize("budget", ["tainted", "all"])
@pytest.mark.parametrize("name, obj", [("mmul", "C"), ("l2norm", "sum"), ("abft_mmul", "C")])
def test_masked_set_grows_with_k(name, obj, budget):
    p = kernels.load(name).program
    tr, cands = deferred(p, obj)
    cands = cands[::7]
    prev = None
    for k in (1, 3, 10, 25, 50):
        out = resolve(p, None, tr, cands, PropagationConfig(k, budget=budget))
        masked = {i for i, o in enumerate(out) if isinstance(o, MaskedAt)}
        assert all(o.steps <= k for o in out if isinstance(o, MaskedAt))
        if prev is not None:
            assert prev <= masked
        prev = masked


@pytest.mark.parametrize("name, obj", [("abft_mmul", "C"), ("l2norm", "sum"), ("chain_k", "t")])
def test_no_false_masking(name, obj):
    # every propagation-level mask reproduces the golden outcome bit-exactly
    p = kernels.load(name).program
    golden, _ = run(p, trace=False)
    tr, cands = deferred(p, obj)
    out = resolve(p, None, tr, cands, PropagationConfig(50))
    hits = 0
    for (rec, s, bits), o in zip(cands, out):
        if isinstance(o, MaskedAt):
            hits += 1
            assert run_with_injection(p, None, InjectionPoint(rec.dyn_id, s, bits).fault()) == golden
    assert hits > 0


def test_config_range():
    assert PropagationConfig().k == 10
    for bad in (0, 51):
        with pytest.raises(ValueError):
            PropagationConfig(bad)
    with pytest.raises(ValueError):
        PropagationConfig(5, budget="some")


def test_points_file_sorted_and_round_trips():
    pts = [InjectionPoint(9, "result", (3,)), InjectionPoint(2, 1, (63,)), InjectionPoint(2, 0, (5, 6)),
           InjectionPoint(2, "result", (0,)), InjectionPoint(2, 0, (5, 6))]
    text = write_points(pts)
    assert text.splitlines() == ["2 0 5,6", "2 1 63", "2 result 0", "9 result 3"]
    assert read_points(text) == sorted(set(pts))
    with pytest.raises(ValueError):
        read_points("12 result\n")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.one_of(st.integers(0, 3), st.just("result")),
       st.lists(st.integers(0, 63), min_size=1, max_size=4))
def test_point_line_round_trip(d, slot, bits):
    pt = InjectionPoint(d, slot, tuple(bits))
    assert InjectionPoint.parse(pt.line()) == pt
