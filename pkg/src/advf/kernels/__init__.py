"""Shipped IR kernels and the numpy ABFT reference routines."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import AnalysisConfig, parse_config
from ..injector import AcceptanceSpec
from ..ir import Program, parse_program
from ..trace import DataObjectMap

DATA = Path(__file__).with_name("data")


@dataclass
class KernelSpec:
    name: str
    source: str
    targets: tuple[str, ...]
    config_text: str = ""
    inputs: dict = field(default_factory=dict)
    expected: tuple[str, ...] = ()

    @cached_property
    def program(self) -> Program:
        return parse_program(self.source)

    @property
    def config(self) -> AnalysisConfig:
        return parse_config(self.config_text)

    @property
    def accept(self) -> AcceptanceSpec:
        return self.config.accept

    @property
    def object_map(self) -> DataObjectMap:
        return DataObjectMap.for_program(self.program)


# name -> (targets, expected properties)
CATALOG: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "l2norm": (("sum",), ("advf(sum) equals the exhaustive-injection masked fraction",)),
    "mmul": (("C",), ("only the accumulator stores mask faults in C",)),
    "mmul4": (("C",), ("only the accumulator stores mask faults in C",)),
    "abft_mmul": (("C",), ("advf(C) exceeds mmul's by more than 0.5",
                           "most of the gain is propagation-level overwriting")),
    "abft_mmul4": (("C",), ("advf(C) exceeds mmul4's by more than 0.5",)),
    "cg_lite": (("colidx_like", "r_like"), ("advf(colidx_like) < advf(r_like) - 0.1",)),
    "chain_k": (("t",), ("the chain head escalates below k = length+1 and converges at it",)),
}


def names() -> list[str]:
    return sorted(CATALOG)


def load(name: str) -> KernelSpec:
    if name not in CATALOG:
        raise KeyError(f"unknown kernel {name!r}; known: {', '.join(names())}")
    targets, expected = CATALOG[name]
    src = (DATA / f"{name}.arat-ir").read_text()
    cfg_path = DATA / f"{name}.cfg"
    cfg = cfg_path.read_text() if cfg_path.exists() else ""
    return KernelSpec(name, src, targets, cfg, {}, expected)


def path(name: str, ext: str = "arat-ir") -> Path:
    return DATA / f"{name}.{ext}"


# ---------------------------------------------------------------------------
# ABFT reference routines


def abft_encode(A, B) -> tuple[np.ndarray, np.ndarray]:
    """A^r = [A; e^T A] and B^c = [B, B e]."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {B.shape}")
    Ar = np.vstack([A, A.sum(axis=0, keepdims=True)])
    Bc = np.hstack([B, B.sum(axis=1, keepdims=True)])
    return Ar, Bc


@dataclass(frozen=True)
class AbftReport:
    status: str  # clean | corrected | uncorrectable
    corrections: tuple = ()  # ((i, j, old, new), ...)
    bad_rows: tuple = ()
    bad_cols: tuple = ()


def _mismatches(Cf: np.ndarray, atol: float):
    p, r = Cf.shape[0] - 1, Cf.shape[1] - 1
    rows = tuple(int(i) for i in np.flatnonzero(np.abs(Cf[:, :r].sum(axis=1) - Cf[:, r]) > atol))
    cols = tuple(int(j) for j in np.flatnonzero(np.abs(Cf[:p, :].sum(axis=0) - Cf[p, :]) > atol))
    return rows, cols


def abft_verify_correct(Cf, atol: float = 0.0) -> tuple[np.ndarray, AbftReport]:
    """Check every row (checksum row included) against the checksum column
    and every column (checksum column included) against the checksum row;
    a single mismatching row i and column j locate the corrupted element."""
    Cf = np.array(Cf, dtype=np.float64)
    if Cf.ndim != 2 or min(Cf.shape) < 2:
        raise ValueError("C^f must be at least 2x2")
    p, r = Cf.shape[0] - 1, Cf.shape[1] - 1
    rows, cols = _mismatches(Cf, atol)
    if not rows and not cols:
        return Cf, AbftReport("clean")
    if len(rows) != 1 or len(cols) != 1:
        return Cf, AbftReport("uncorrectable", (), rows, cols)
    i, j = rows[0], cols[0]
    old = float(Cf[i, j])
    if i == p and j == r:
        new = Cf[p, :r].sum()
    elif j < r:
        new = Cf[i, r] - (Cf[i, :r].sum() - Cf[i, j])
    else:
        new = Cf[p, j] - (Cf[:p, j].sum() - Cf[i, j])
    Cf[i, j] = new
    return Cf, AbftReport("corrected", ((i, j, old, float(new)),), rows, cols)
