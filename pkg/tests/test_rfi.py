import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from advf import kernels
from advf.interp import run
from advf.ir import parse_program
from advf.rfi import RfiResult, margin_of_error, rfi_campaign, sample_points, sample_size
from advf.trace import DataObjectMap, resolve_object_refs

import oracles


def test_margin_at_half():
    assert margin_of_error(0.5, 1000) == pytest.approx(0.0310, abs=5e-5)
    assert abs(margin_of_error(0.5, 1000) - 1.96 * math.sqrt(0.25 / 1000)) < 1e-15


def test_success_rate_scale():
    r = RfiResult(1000, 620, 1)
    assert r.success_rate == 0.62
    assert "n=1000 m=620 success_rate=0.620000" in r.line()


def test_sample_size_inverts_margin():
    assert sample_size(0.031) == 1000
    with pytest.raises(ValueError):
        sample_size(0)


@settings(max_examples=100)
@given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_margin_formula(mn):
    m, n = mn
    p = m / n
    assert abs(RfiResult(n, m, 0).margin - 1.96 * math.sqrt(p * (1 - p) / n)) <= 1e-12
    assert 0 <= p <= 1 and RfiResult(n, m, 0).margin >= 0


def _trace(name):
    k = kernels.load(name)
    _, tr = run(k.program)
    return k, resolve_object_refs(tr, DataObjectMap.for_program(k.program))


def test_sampling_is_seed_determined():
    k, tr = _trace("mmul")
    a = sample_points(tr, "C", 200, 7)
    assert a == sample_points(tr, "C", 200, 7)
    assert a != sample_points(tr, "C", 200, 8)


def test_campaign_seed_determinism_and_spread():
    k = kernels.load("mmul")
    r1 = rfi_campaign(k.program, None, "C", 150, 3)
    assert r1 == rfi_campaign(k.program, None, "C", 150, 3)
    rates = {rfi_campaign(k.program, None, "C", 150, s).success_rate for s in range(1, 6)}
    assert len(rates) > 1


def test_parallel_jobs_do_not_change_result():
    k = kernels.load("l2norm")
    assert rfi_campaign(k.program, None, "sum", 120, 4, jobs=1) == \
        rfi_campaign(k.program, None, "sum", 120, 4, jobs=2)


def test_exhaustion_without_replacement_equals_exhaustive_fraction():
    k, tr = _trace("mmul")
    want, slots = oracles.exhaustive_advf(k.program, "C")
    total = slots * 64
    with pytest.raises(ValueError):
        sample_points(tr, "C", total + 1, 0, without_replacement=True)
    assert len(set(sample_points(tr, "C", total, 0, without_replacement=True))) == total
    r = rfi_campaign(k.program, None, "C", total, 0, k.accept, without_replacement=True)
    assert Fraction(r.m, r.n) == want


def test_errors():
    k = kernels.load("mmul")
    with pytest.raises(ValueError):
        rfi_campaign(k.program, None, "C", 0, 1)
    p = parse_program("entry:\n  %u = alloc f64 x1\n  %w = alloc f64 x1\n  store f64 %w[0], 1.0\n  ret\n")
    with pytest.raises(ValueError, match="no candidate"):
        rfi_campaign(p, None, "u", 10, 1)
