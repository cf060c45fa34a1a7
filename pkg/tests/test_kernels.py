import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advf import kernels
from advf.interp import FaultSpec, run, run_with_injection
from advf.ir import parse_program
from advf.kernels import abft_encode, abft_verify_correct
from advf.kernels.generate import shipped
from advf.trace import DataObjectMap


def test_encode_examples():
    Ar, _ = abft_encode([[1, 2], [3, 4]], np.eye(2))
    assert Ar[-1].tolist() == [4, 6]
    _, Bc = abft_encode(np.eye(2), [[1, 0], [0, 1]])
    assert Bc[:, -1].tolist() == [1, 1]


def test_encode_dimension_mismatch():
    with pytest.raises(ValueError):
        abft_encode(np.ones((2, 3)), np.ones((2, 2)))


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_checksum_row_of_product(seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(-9, 10, (3, 3)).astype(float)
    B = rng.integers(-9, 10, (3, 3)).astype(float)
    Ar, Bc = abft_encode(A, B)
    Cf = Ar @ Bc
    assert np.array_equal(Cf[-1, :-1], (A @ B).sum(axis=0))
    assert np.array_equal(Cf[:-1, -1], (A @ B).sum(axis=1))
    assert np.array_equal(Cf[:-1, :-1], A @ B)


def _cf():
    Ar, Bc = abft_encode([[1, 2], [3, 4]], [[5, 6], [7, 8]])
    return Ar @ Bc


def test_clean_matrix_untouched():
    Cf = _cf()
    out, rep = abft_verify_correct(Cf)
    assert rep.status == "clean" and np.array_equal(out, Cf)


def test_single_corruption_restored():
    Cf = _cf()
    bad = Cf.copy()
    bad[0, 1] += 5
    out, rep = abft_verify_correct(bad)
    assert rep.status == "corrected"
    assert rep.corrections == ((0, 1, Cf[0, 1] + 5, Cf[0, 1]),)
    assert np.array_equal(out, Cf)


def test_two_corruptions_uncorrectable():
    bad = _cf()
    bad[0, 0] += 1
    bad[1, 1] -= 3
    assert abft_verify_correct(bad)[1].status == "uncorrectable"


# --- shipped kernels -------------------------------------------------------

def test_shipped_files_match_generators():
    for name, (src, cfg) in shipped().items():
        assert kernels.path(name).read_text() == src, name
        assert kernels.path(name, "cfg").read_text() == cfg, name
        omap = DataObjectMap.for_program(parse_program(src))
        assert kernels.path(name, "map").read_text() == omap.dumps()
    assert sorted(shipped()) == kernels.names()


@pytest.mark.parametrize("name", kernels.names())
def test_kernel_runs_and_targets_exist(name):
    k = kernels.load(name)
    out, _ = run(k.program, trace=False)
    assert out.completed and out.dynamic_length < 5_000_000
    omap = k.object_map
    for t in k.targets:
        assert t in omap
    k.accept.check_names(out)


@pytest.mark.parametrize("name, n", [("mmul", 2), ("mmul4", 4), ("abft_mmul", 2), ("abft_mmul4", 4)])
def test_matrix_kernels_print_the_product(name, n):
    k = kernels.load(name)
    A = np.array(k.program.inputs[0].default).reshape(n, n)
    B = np.array(k.program.inputs[1].default).reshape(n, n)
    out, _ = run(k.program, trace=False)
    vals = [v.signed() for _, v in out.printed]
    assert vals == (A @ B).ravel().astype(int).tolist()


def test_cg_converges_below_tau():
    k = kernels.load("cg_lite")
    out, _ = run(k.program, trace=False)
    assert k.accept.accepts(out, out)
    assert out.named()["resid"][-1].native() <= k.accept.tau


def test_abft_ir_corrects_every_interior_corruption():
    # corrupt each interior element of C^f as the verify phase reads it
    k = kernels.load("abft_mmul")
    golden, tr = run(k.program)
    omap = k.object_map
    base = omap["C"].base
    reads = [r for r in tr if r.opcode == "load" and r.source_label == "verify"]
    interior = {base + 8 * (i * 3 + j) for i in range(2) for j in range(2)}
    hits = [r for r in reads if r.result.address in interior]
    assert len(hits) == 4
    for r in hits:
        for b in range(64):
            out = run_with_injection(k.program, None, FaultSpec(r.dyn_id, "result", (b,)))
            assert out == golden, (r.result.address, b)


def test_abft_ir_corrects_corruption_between_multiply_and_verify():
    # flipping the value being stored by the multiply's final write of each
    # interior element is the earliest corruption point
    k = kernels.load("abft_mmul")
    golden, tr = run(k.program)
    base = k.object_map["C"].base
    first_verify = next(r.dyn_id for r in tr if r.source_label == "verify")
    last = {}
    for r in tr[:first_verify]:
        if r.opcode == "store" and r.result.address is not None:
            last[r.result.address] = r
    for i, j in itertools.product(range(2), range(2)):
        r = last[base + 8 * (i * 3 + j)]
        for b in (0, 5, 31, 62, 63):
            out = run_with_injection(k.program, None, FaultSpec(r.dyn_id, 1, (b,)))
            assert out == golden
