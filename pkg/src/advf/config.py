"""Analysis configuration and its flat ``key value`` file format.

Recognised lines::

    k 10
    budget tainted|all             # what k counts
    pattern single | multi:<w> | bit:<b>
    accept exact | rel:<eps>[:<tag>...] | conv:<tag>:<tau>
    deduce on|off
    verify-deduction on|off
    jobs 4
    step-limit 10000000
    seed 1
    region <dyn_lo> <dyn_hi>        # analyse only slots with lo <= dyn_id < hi
    shadow <object> abs <lo> <hi>
    shadow <object> rel <eps>
    tolerance <object> <rel>       # fork-replay state tolerance on float memory
    object <name>                  # default target object
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .injector import AcceptanceSpec
from .interp import DEFAULT_STEP_LIMIT
from .masking import FaultPattern, ShadowingThreshold
from .propagation import K_DEFAULT, PropagationConfig


class ConfigError(ValueError):
    pass


_BOOL = {"on": True, "true": True, "1": True, "yes": True,
         "off": False, "false": False, "0": False, "no": False}


@dataclass(frozen=True)
class AnalysisConfig:
    k: int = K_DEFAULT
    pattern: FaultPattern = field(default_factory=FaultPattern.single)
    thresholds: tuple[ShadowingThreshold, ...] = ()
    accept: AcceptanceSpec = field(default_factory=AcceptanceSpec.exact)
    deduce: bool = True
    verify_deduction: bool = False
    jobs: int = 1
    step_limit: int = DEFAULT_STEP_LIMIT
    seed: int = 0
    region: Optional[tuple[int, int]] = None
    tolerances: tuple[tuple[str, float], ...] = ()
    object: Optional[str] = None
    budget: str = "tainted"

    def __post_init__(self):
        try:
            PropagationConfig(self.k, budget=self.budget)  # range checks
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.step_limit < 1:
            raise ConfigError("step-limit must be >= 1")
        if self.region is not None and not 0 <= self.region[0] <= self.region[1]:
            raise ConfigError("region needs 0 <= lo <= hi")
        names = [t.object_name for t in self.thresholds]
        if len(set(names)) != len(names):
            raise ConfigError("at most one shadow threshold per object")

    def threshold(self, obj: str) -> Optional[ShadowingThreshold]:
        for t in self.thresholds:
            if t.object_name == obj:
                return t
        return None

    def propagation(self) -> PropagationConfig:
        return PropagationConfig(self.k, dict(self.tolerances) or None, self.budget)

    def with_(self, **kw) -> "AnalysisConfig":
        return replace(self, **kw)

    def echo(self) -> dict:
        """Settings that affect report contents."""
        return {
            "k": self.k,
            "budget": self.budget,
            "pattern": str(self.pattern),
            "thresholds": [str(t) for t in self.thresholds],
            "accept": str(self.accept),
            "deduce": self.deduce,
            "region": list(self.region) if self.region else None,
            "tolerances": [f"{n} {t!r}" for n, t in self.tolerances],
        }


def _num(text: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {text!r} is not a number") from None


def parse_config(text: str, base: Optional[AnalysisConfig] = None) -> AnalysisConfig:
    kw: dict = {}
    thresholds = list(base.thresholds) if base else []
    tolerances = list(base.tolerances) if base else []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        try:
            if key == "k":
                kw["k"] = int(args[0])
            elif key == "pattern":
                kw["pattern"] = FaultPattern.parse(args[0])
            elif key == "accept":
                kw["accept"] = AcceptanceSpec.parse(args[0])
            elif key in ("deduce", "verify-deduction"):
                if args[0] not in _BOOL:
                    raise ConfigError(f"line {lineno}: expected on/off, got {args[0]!r}")
                kw["deduce" if key == "deduce" else "verify_deduction"] = _BOOL[args[0]]
            elif key == "jobs":
                kw["jobs"] = int(args[0])
            elif key == "step-limit":
                kw["step_limit"] = int(args[0])
            elif key == "seed":
                kw["seed"] = int(args[0])
            elif key == "region":
                kw["region"] = (int(args[0]), int(args[1]))
            elif key == "budget":
                kw["budget"] = args[0]
            elif key == "object":
                kw["object"] = args[0]
            elif key == "tolerance":
                tolerances.append((args[0], _num(args[1], lineno)))
            elif key == "shadow":
                name, kind = args[0], args[1]
                thresholds = [t for t in thresholds if t.object_name != name]
                if kind == "abs":
                    thresholds.append(ShadowingThreshold.absolute(
                        name, _num(args[2], lineno), _num(args[3], lineno)))
                elif kind == "rel":
                    thresholds.append(ShadowingThreshold.relative(name, _num(args[2], lineno)))
                else:
                    raise ConfigError(f"line {lineno}: shadow kind must be abs or rel")
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except IndexError:
            raise ConfigError(f"line {lineno}: missing value for {key}") from None
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    kw["thresholds"] = tuple(thresholds)
    kw["tolerances"] = tuple(tolerances)
    try:
        return replace(base, **kw) if base else AnalysisConfig(**kw)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def dump_config(cfg: AnalysisConfig) -> str:
    lines = [f"k {cfg.k}", f"budget {cfg.budget}", f"pattern {cfg.pattern}", f"accept {cfg.accept}",
             f"deduce {'on' if cfg.deduce else 'off'}",
             f"verify-deduction {'on' if cfg.verify_deduction else 'off'}",
             f"jobs {cfg.jobs}", f"step-limit {cfg.step_limit}", f"seed {cfg.seed}"]
    if cfg.region:
        lines.append(f"region {cfg.region[0]} {cfg.region[1]}")
    if cfg.object:
        lines.append(f"object {cfg.object}")
    lines += [str(t) for t in cfg.thresholds]
    lines += [f"tolerance {n} {t!r}" for n, t in cfg.tolerances]
    return "\n".join(lines) + "\n"
