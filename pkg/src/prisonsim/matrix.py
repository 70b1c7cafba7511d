"""Experiment design enumeration: scenarios, runs and their identifiers."""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass

from prisonsim.errors import ConfigurationError
from prisonsim.prompts import Goal, Persona, list_personality_combos

DEFAULT_REPETITIONS = 10
PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.7
    top_k: int = 40
    top_p: float = 0.9

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigurationError("temperature must be > 0")
        if int(self.top_k) != self.top_k or self.top_k < 1:
            raise ConfigurationError("top_k must be a positive integer")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError("top_p must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "top_k": self.top_k, "top_p": self.top_p}


@dataclass(frozen=True)
class ScenarioConfig:
    model_id: str
    persona: Persona
    oversight: bool
    risks: bool
    goal: Goal

    @property
    def id(self) -> str:
        return scenario_id(self)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "guard_personality": self.persona.guard.value,
            "prisoner_personality": self.persona.prisoner.value,
            "oversight": self.oversight,
            "risks": self.risks,
            "goal": self.goal.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(
            d["model_id"],
            Persona.parse(f"{d['guard_personality']}-{d['prisoner_personality']}"),
            bool(d["oversight"]),
            bool(d["risks"]),
            Goal(d["goal"]),
        )


@dataclass(frozen=True)
class RunSpec:
    scenario: ScenarioConfig
    repetition: int
    seed: int

    @property
    def conversation_id(self) -> str:
        return f"{self.scenario.id}#r{self.repetition:02d}"

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario.id,
            "scenario": self.scenario.to_dict(),
            "repetition": self.repetition,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        return cls(ScenarioConfig.from_dict(d["scenario"]), int(d["repetition"]), int(d["seed"]))


def scenario_id(config: ScenarioConfig) -> str:
    """Canonical id: ``model|guard-prisoner|ov0|rk1|goal``."""
    return "|".join(
        [
            config.model_id,
            config.persona.label,
            f"ov{int(config.oversight)}",
            f"rk{int(config.risks)}",
            config.goal.value,
        ]
    )


def derive_seed(scenario: str, repetition: int, base_seed: int = 0) -> int:
    digest = hashlib.sha256(f"{base_seed}:{scenario}:{repetition}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def enumerate_scenarios(models: list[str]) -> list[ScenarioConfig]:
    if not models:
        raise ConfigurationError("at least one model id is required")
    if len(set(models)) != len(models):
        raise ConfigurationError("model ids must be unique")
    for m in models:
        if not m or "|" in m or "#" in m:
            raise ConfigurationError(f"model id {m!r} must be non-empty and free of '|' and '#'")
    return [
        ScenarioConfig(model, persona, oversight, risks, goal)
        for model, persona, oversight, risks, goal in itertools.product(
            models,
            list_personality_combos(),
            (False, True),
            (False, True),
            (Goal.ESCAPE, Goal.YARD_TIME),
        )
    ]


def expand_runs(
    scenarios: list[ScenarioConfig], repetitions: int = DEFAULT_REPETITIONS, base_seed: int = 0
) -> list[RunSpec]:
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    runs = [
        RunSpec(s, rep, derive_seed(s.id, rep, base_seed))
        for s in scenarios
        for rep in range(1, repetitions + 1)
    ]
    if len({r.seed for r in runs}) != len(runs):  # pragma: no cover - 64-bit collision
        raise ConfigurationError("seed collision; choose another base seed")
    return runs


def scenarios_per_model() -> int:
    return len(list_personality_combos()) * 2 * 2 * 2
