"""Dummy-coded design matrices for the regression models."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from prisonsim.errors import ConfigurationError


class CollinearityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Factor:
    name: str
    baseline: object
    levels: tuple  # non-baseline levels, in column order

    def columns(self) -> list[str]:
        if set(self.levels) == {True} and self.baseline is False:
            return [self.name]
        return [f"{self.name}[{level}]" for level in self.levels]


@dataclass(frozen=True)
class DesignSpec:
    outcome: str
    factors: tuple[Factor, ...]
    outcome_map: dict | None = field(default=None)

    def columns(self) -> list[str]:
        return ["intercept"] + [c for f in self.factors for c in f.columns()]


@dataclass(frozen=True)
class Design:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]


DISCLOSURES = (Factor("oversight", False, (True,)), Factor("risks", False, (True,)))
PERSONAS = ("Abusive-Rebellious", "Respectful-Rebellious", "Abusive-Peaceful", "Respectful-Peaceful")
PERSUASION_CODES = {"Yes": 1.0, "No": 0.0}


def model_factor(models: Sequence[str]) -> Factor:
    if not models:
        raise ConfigurationError("need at least one model")
    return Factor("model_id", models[0], tuple(models[1:]))


def ols_spec(outcome: str, models: Sequence[str]) -> DesignSpec:
    """Separate guard and prisoner personality factors; first model is the reference."""
    return DesignSpec(
        outcome,
        DISCLOSURES
        + (
            Factor("guard_personality", "Blank", ("Abusive", "Respectful")),
            Factor("prisoner_personality", "Blank", ("Rebellious", "Peaceful")),
            Factor("goal", "Escape", ("YardTime",)),
            model_factor(models),
        ),
    )


def logit_spec(models: Sequence[str], disclosures: bool = True, outcome: str = "outcome") -> DesignSpec:
    """Five-level persona combination; persuasion coded Yes=1, No=0."""
    factors = (
        Factor("persona", "Blank-Blank", PERSONAS),
        Factor("goal", "Escape", ("YardTime",)),
        model_factor(models),
    )
    return DesignSpec(outcome, (DISCLOSURES + factors) if disclosures else factors, PERSUASION_CODES)


def _value(row: dict, name: str):
    if name == "persona" and "persona" not in row:
        return f"{row['guard_personality']}-{row['prisoner_personality']}"
    return row[name]


def encode_design(rows: Sequence[dict], spec: DesignSpec) -> Design:
    """Intercept first, then one dummy per non-baseline level in declared order."""
    columns = spec.columns()
    X = np.zeros((len(rows), len(columns)))
    X[:, 0] = 1.0
    y = np.empty(len(rows))
    for i, row in enumerate(rows):
        j = 1
        for f in spec.factors:
            try:
                value = _value(row, f.name)
            except KeyError:
                raise ConfigurationError(f"row {i} lacks factor {f.name!r}") from None
            if value != f.baseline and value not in f.levels:
                raise ConfigurationError(f"unseen level {value!r} for factor {f.name!r}")
            for level in f.levels:
                X[i, j] = 1.0 if value == level else 0.0
                j += 1
        raw = row.get(spec.outcome)
        if spec.outcome_map is not None:
            if raw not in spec.outcome_map:
                raise ConfigurationError(f"row {i}: outcome {raw!r} cannot be coded")
            y[i] = spec.outcome_map[raw]
        else:
            try:
                y[i] = float(raw)
            except (TypeError, ValueError):
                raise ConfigurationError(f"row {i}: outcome {raw!r} is not numeric") from None
    if len(rows):
        constant = [c for c, col in zip(columns[1:], X[:, 1:].T) if col.min() == col.max()]
        if constant:
            warnings.warn(f"constant dummy columns (collinear with intercept): {constant}", CollinearityWarning)
    return Design(X, y, columns)


def select_rows(rows: Sequence[dict], predicate: Callable[[dict], bool]) -> list[dict]:
    return [r for r in rows if predicate(r)]
