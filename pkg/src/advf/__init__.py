"""Application-level data vulnerability factor (aDVF) analysis for a small
SSA IR: golden tracing, operation-level masking, bounded propagation replay,
deterministic fault injection and a random-injection baseline."""

from .config import AnalysisConfig, parse_config
from .engine import ADVFReport, PendingInjections, analyze, compute_advf, merge_reports
from .injector import AcceptanceSpec, InjectionResult, run_campaign
from .interp import FaultSpec, Outcome, fork_replay, run, run_with_injection
from .ir import Program, parse_program, print_program
from .masking import FaultPattern, ShadowingThreshold, classify
from .propagation import InjectionPoint, PropagationConfig, resolve
from .rfi import RfiResult, rfi_campaign
from .trace import DataObjectMap, read_trace, resolve_object_refs, write_trace

__version__ = "0.1.0"

__all__ = [
    "ADVFReport", "AcceptanceSpec", "AnalysisConfig", "DataObjectMap", "FaultPattern", "FaultSpec",
    "InjectionPoint", "InjectionResult", "Outcome", "PendingInjections", "Program",
    "PropagationConfig", "RfiResult", "ShadowingThreshold", "analyze", "classify", "compute_advf",
    "fork_replay", "merge_reports", "parse_config", "parse_program", "print_program", "read_trace",
    "resolve", "resolve_object_refs", "rfi_campaign", "run", "run_campaign", "run_with_injection",
    "write_trace",
]
