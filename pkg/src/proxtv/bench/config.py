"""JSON experiment configurations."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from ..solver import STRATEGIES

__all__ = ["ExperimentConfig", "ConfigError", "canned_config", "CANNED_TESTS", "RUN_KINDS"]

CANNED_TESTS = ("test1", "test2", "test3", "test4")
RUN_KINDS = tuple(STRATEGIES) + ("primal",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep over mesh levels, ``epsilon = h**beta`` powers, ``gamma`` values and run kinds.

    ``strategies`` holds names from :data:`RUN_KINDS`; ``"primal"`` is the
    primal Newton method started from the same flow iterate as S1.  Flow
    handoffs are evaluated with ``gamma = flow_gamma`` and shared by all runs
    on the same mesh and ``epsilon``.
    """

    name: str
    test: str = "sweep"
    mesh: str = "uniform"
    levels: tuple = (5,)
    epsilon_powers: tuple = (1.0,)
    gammas: tuple = (1.0,)
    strategies: tuple = ("S1",)
    alpha: float = 10.0
    radius: float = 0.5
    handoff: Optional[float] = None
    flow_gamma: float = 1.0
    stop: float = 1e-12
    max_iter: int = 250
    tau: float = 1e-3
    flow_max_iter: int = 5000
    out_dir: str = "results"
    export_vtk: bool = False
    record_l2_error: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("levels", "epsilon_powers", "gammas", "strategies"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("name must be non-empty")
        if self.mesh not in ("uniform", "graded"):
            raise ConfigError(f"unknown mesh kind {self.mesh!r}")
        if not self.levels or any(int(l) != l or l < 0 for l in self.levels):
            raise ConfigError("levels must be non-negative integers")
        if not self.epsilon_powers or any(b <= 0 for b in self.epsilon_powers):
            raise ConfigError("epsilon powers must be positive")
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise ConfigError("gammas must be positive")
        bad = [s for s in self.strategies if s not in RUN_KINDS]
        if not self.strategies or bad:
            raise ConfigError(f"unknown strategies {bad}; expected a subset of {RUN_KINDS}")
        if not 0 < self.radius < 1 or self.alpha <= 0:
            raise ConfigError("need 0 < radius < 1 and alpha > 0")
        if self.handoff is not None and self.handoff <= 0:
            raise ConfigError("handoff must be positive")
        if self.stop <= 0 or self.max_iter < 0 or self.tau <= 0 or self.flow_max_iter < 1:
            raise ConfigError("invalid stopping parameters")

    # -- (de)serialization ---------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("levels", "epsilon_powers", "gammas", "strategies"):
            d[name] = list(d[name])
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


def canned_config(test: str) -> ExperimentConfig:
    """The checked-in configuration of one of the four benchmark tests."""
    if test not in CANNED_TESTS:
        raise ConfigError(f"unknown test {test!r}")
    text = resources.files(__package__).joinpath("configs", f"{test}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))
