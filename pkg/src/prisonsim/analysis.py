"""Analysis tables built from conversations, scores, metrics and labels."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from prisonsim.gateway.scoring import PROXIES, ScoreRecord
from prisonsim.integrity import Outcome, ResolvedLabel, TurnThird
from prisonsim.metrics import SCOPES, correlate, temporal_profile
from prisonsim.orchestrator import Conversation, Status
from prisonsim.prompts import Role
from prisonsim.stats import (
    Direction,
    encode_design,
    granger_lag1,
    logit_fit,
    logit_spec,
    ols_fit,
    aliased_columns,
    ols_spec,
    pvalue_summary,
)


def fmt(value) -> str:
    """Stable text form for CSV cells and reports."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Inf" if value > 0 else "-Inf"
        return f"{value:.10g}"
    return str(value)


def to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def ols_report(rows: Sequence[dict], outcome: str, models: Sequence[str]) -> list[dict]:
    """OLS table; structurally aliased dummies are dropped in declared order.

    With only five persona combinations a Blank guard always meets a Blank
    prisoner, so one personality dummy is a linear combination of the others.
    It is reported with ``aliased=true`` and NaN estimates.
    """
    design = encode_design(rows, ols_spec(outcome, models))
    dropped = set(aliased_columns(design.X, design.columns))
    keep = [j for j, c in enumerate(design.columns) if c not in dropped]
    fit = ols_fit(design.X[:, keep], design.y, [design.columns[j] for j in keep])
    by_term = {r["term"]: r for r in fit.rows()}
    nan = math.nan
    out = []
    for c in design.columns:
        r = by_term.get(c) or {
            "term": c, "estimate": nan, "SE": nan, "statistic": nan, "p": nan,
            "CI_low": nan, "CI_high": nan, "N": fit.n,
        }
        out.append({"outcome": outcome, **r, "aliased": c in dropped, "R2": fit.r2})
    return out


def logit_report(rows: Sequence[dict], models: Sequence[str], disclosures: bool = True) -> list[dict]:
    design = encode_design(rows, logit_spec(models, disclosures))
    fit = logit_fit(design.X, design.y, columns=design.columns)
    return [
        {**r, "converged": fit.converged, "iterations": fit.iterations, "disclosures": disclosures}
        for r in fit.rows()
    ]


def agent_series(conversation: Conversation, score_of: Mapping[tuple, float]) -> dict[Role, list[float]]:
    out = {}
    for role in (Role.GUARD, Role.PRISONER):
        msgs = sorted(conversation.by_author(role), key=lambda m: m.author_ordinal)
        out[role] = [score_of[(conversation.id, m.turn_index)] for m in msgs]
    return out


def conversation_granger(
    conversation: Conversation, score_of: Mapping[tuple, float], direction: Direction
):
    """Per-agent ordinal alignment.

    Guard -> prisoner: prisoner t on prisoner t-1 and guard t-1.
    Prisoner -> guard: guard t on guard t-1 and prisoner t-1.
    """
    series = agent_series(conversation, score_of)
    guard, prisoner = series[Role.GUARD], series[Role.PRISONER]
    if direction is Direction.GUARD_TO_PRISONER:
        return granger_lag1(guard[: len(prisoner)], prisoner, direction)
    return granger_lag1(prisoner[: len(guard) - 1], guard, direction)


def granger_table(
    conversations: Iterable[Conversation],
    scores: Iterable[ScoreRecord],
    proxies: Sequence[str] = PROXIES,
) -> list[dict]:
    scores = list(scores)
    rows = []
    for proxy in proxies:
        score_of = {(r.conversation_id, r.turn_index): r.get(proxy) for r in scores}
        for conv in conversations:
            if conv.status is not Status.COMPLETE:
                continue
            s = conv.run.scenario
            for direction in Direction:
                res = conversation_granger(conv, score_of, direction)
                rows.append(
                    {
                        "conversation_id": conv.id,
                        "model_id": s.model_id,
                        "persona": s.persona.label,
                        "goal": s.goal.value,
                        "proxy": proxy,
                        "direction": direction.value,
                        "F": res.F,
                        "p": res.p,
                        "T": res.T_effective,
                        "differenced_x": res.differenced_x,
                        "differenced_y": res.differenced_y,
                    }
                )
    return rows


def granger_summary(rows: Sequence[dict], alpha: float = 0.05) -> list[dict]:
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in rows:
        groups[(r["model_id"], r["persona"], r["goal"], r["proxy"], r["direction"])].append(r["p"])
    out = []
    for key in sorted(groups):
        summary = pvalue_summary(groups[key], alpha)
        out.append(
            {
                "model_id": key[0],
                "persona": key[1],
                "goal": key[2],
                "proxy": key[3],
                "direction": key[4],
                "n": summary.n,
                "fraction_below_alpha": summary.fraction_below_alpha,
            }
        )
    return out


def correlation_rows(rows: Sequence[dict], proxy: str, measure: str = "pct") -> list[dict]:
    columns = [f"{proxy}_{measure}_{s}" for s in SCOPES]
    mat = correlate(rows, columns)
    return [
        {"row": a, **{b: float(mat.values[i, j]) for j, b in enumerate(columns)}}
        for i, a in enumerate(columns)
    ]


def temporal_rows(conversations, scores, proxy: str, grouping=("model", "persona", "goal")) -> list[dict]:
    points = temporal_profile(conversations, scores, proxy, grouping)
    return [
        {
            **dict(zip(grouping, p.group)),
            "author": p.author.value,
            "ordinal": p.ordinal,
            "mean": p.mean,
            "ci_half_width": p.ci_half_width,
            "n": p.n,
        }
        for p in points
    ]


def persuasion_summary(
    conversations: Iterable[Conversation],
    labels: Mapping[str, ResolvedLabel],
    valid_ids: Iterable[str] | None = None,
) -> list[dict]:
    """Outcome counts and shares per model and goal, plus success-third shares.

    Percentages are recomputed from raw counts. Only conversations with a
    resolved (non-pending) label are counted; NA rows are kept as a column
    but excluded from the percentage denominator.
    """
    allowed = set(valid_ids) if valid_ids is not None else None
    counts: dict[tuple, Counter] = defaultdict(Counter)
    for conv in conversations:
        label = labels.get(conv.id)
        if label is None or label.outcome is None:
            continue
        if allowed is not None and conv.id not in allowed and label.outcome is not Outcome.NA:
            continue
        key = (conv.run.scenario.model_id, conv.run.scenario.goal.value)
        counts[key][label.outcome.value] += 1
        if label.turn_third is not None:
            counts[key][label.turn_third.value] += 1
    out = []
    for (model, goal) in sorted(counts):
        c = counts[(model, goal)]
        analysed = c["Yes"] + c["No"] + c["NotTried"]
        row = {"model_id": model, "goal": goal}
        for o in Outcome:
            row[o.value] = c[o.value]
        for o in ("Yes", "No", "NotTried"):
            row[f"pct_{o}"] = 100.0 * c[o] / analysed if analysed else math.nan
        for t in TurnThird:
            row[f"pct_yes_{t.value}"] = 100.0 * c[t.value] / c["Yes"] if c["Yes"] else math.nan
        out.append(row)
    return out


def persuasion_crosstab(
    metric_rows: Sequence[dict], labels: Mapping[str, ResolvedLabel], column: str = "toxicity_pct_overall"
) -> list[dict]:
    """Mean and SD of a conversation measure by outcome, model, goal and persona."""
    cells: dict[tuple, list[float]] = defaultdict(list)
    for r in metric_rows:
        label = labels.get(r["conversation_id"])
        if label is None or label.outcome is None or label.outcome is Outcome.NA:
            continue
        persona = f"{r['guard_personality']}-{r['prisoner_personality']}"
        cells[(r["model_id"], r["goal"], persona, label.outcome.value)].append(float(r[column]))
    out = []
    for key in sorted(cells):
        xs = np.asarray(cells[key])
        out.append(
            {
                "model_id": key[0],
                "goal": key[1],
                "persona": key[2],
                "outcome": key[3],
                "measure": column,
                "n": len(xs),
                "mean": float(xs.mean()),
                "sd": float(xs.std(ddof=1)) if len(xs) > 1 else math.nan,
            }
        )
    return out
