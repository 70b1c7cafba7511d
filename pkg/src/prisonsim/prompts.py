"""Role and persona prompt assembly for the guard and prisoner agents.

Section bodies are shipped verbatim as text resources under
``prisonsim/resources/prompts``; nothing here paraphrases them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from prisonsim.errors import ConfigurationError


class Role(str, enum.Enum):
    GUARD = "Guard"
    PRISONER = "Prisoner"

    @property
    def other(self) -> "Role":
        return Role.PRISONER if self is Role.GUARD else Role.GUARD


class GuardPersonality(str, enum.Enum):
    BLANK = "Blank"
    ABUSIVE = "Abusive"
    RESPECTFUL = "Respectful"


class PrisonerPersonality(str, enum.Enum):
    BLANK = "Blank"
    REBELLIOUS = "Rebellious"
    PEACEFUL = "Peaceful"


class Goal(str, enum.Enum):
    YARD_TIME = "YardTime"
    ESCAPE = "Escape"


class Sharing(str, enum.Enum):
    SHARED = "Shared"
    PRIVATE_GUARD = "PrivateGuard"
    PRIVATE_PRISONER = "PrivatePrisoner"


@dataclass(frozen=True, order=True)
class Persona:
    guard: GuardPersonality
    prisoner: PrisonerPersonality

    @property
    def label(self) -> str:
        return f"{self.guard.value}-{self.prisoner.value}"

    @classmethod
    def parse(cls, label: str) -> "Persona":
        try:
            guard, prisoner = label.split("-")
            return cls(GuardPersonality(guard), PrisonerPersonality(prisoner))
        except ValueError as exc:
            raise ConfigurationError(f"invalid persona label {label!r}") from exc

    def for_role(self, role: Role) -> GuardPersonality | PrisonerPersonality:
        return self.guard if role is Role.GUARD else self.prisoner


@dataclass(frozen=True)
class PromptSection:
    title: str
    body: str
    sharing: Sharing
    optional: bool = False


# Canonical render order; the starting section (empty title) always leads.
SECTION_ORDER = (
    "",
    "PERSONALITY",
    "GOAL",
    "COMMUNICATION RULES",
    "ENVIRONMENT",
    "RESEARCH OVERSIGHT",
    "RISKS",
)


@lru_cache(maxsize=None)
def load_body(name: str) -> str:
    """Return the verbatim body stored in resource ``<name>.txt``."""
    path = resources.files("prisonsim.resources.prompts").joinpath(f"{name}.txt")
    return path.read_text(encoding="utf-8")


_PRIVATE = {Role.GUARD: Sharing.PRIVATE_GUARD, Role.PRISONER: Sharing.PRIVATE_PRISONER}

_PERSONALITY_RESOURCE = {
    GuardPersonality.ABUSIVE: "guard_personality_abusive",
    GuardPersonality.RESPECTFUL: "guard_personality_respectful",
    PrisonerPersonality.REBELLIOUS: "prisoner_personality_rebellious",
    PrisonerPersonality.PEACEFUL: "prisoner_personality_peaceful",
}

_GOAL_RESOURCE = {
    Goal.YARD_TIME: "prisoner_goal_yard_time",
    Goal.ESCAPE: "prisoner_goal_escape",
}


def build_shared_sections(oversight: bool, risks: bool) -> list[PromptSection]:
    sections = [
        PromptSection("COMMUNICATION RULES", load_body("communication_rules"), Sharing.SHARED),
        PromptSection("ENVIRONMENT", load_body("environment"), Sharing.SHARED),
    ]
    if oversight:
        sections.append(
            PromptSection("RESEARCH OVERSIGHT", load_body("research_oversight"), Sharing.SHARED, True)
        )
    if risks:
        sections.append(PromptSection("RISKS", load_body("risks"), Sharing.SHARED, True))
    return sections


def build_private_sections(
    role: Role, persona: Persona, goal: Goal | None
) -> list[PromptSection]:
    """Starting prompt, optional personality and goal for one role.

    The guard's goal is fixed; passing a goal for the guard, or omitting it
    for the prisoner, is a configuration error.
    """
    if role is Role.GUARD and goal is not None:
        raise ConfigurationError("the guard has a fixed goal; do not pass one")
    if role is Role.PRISONER and goal is None:
        raise ConfigurationError("a prisoner profile needs a goal")

    sharing = _PRIVATE[role]
    prefix = "guard" if role is Role.GUARD else "prisoner"
    sections = [PromptSection("", load_body(f"{prefix}_starting"), sharing)]

    personality = persona.for_role(role)
    if personality.value != "Blank":
        sections.append(
            PromptSection("PERSONALITY", load_body(_PERSONALITY_RESOURCE[personality]), sharing, True)
        )

    goal_body = load_body("guard_goal") if goal is None else load_body(_GOAL_RESOURCE[goal])
    sections.append(PromptSection("GOAL", goal_body, sharing))
    return sections


@dataclass(frozen=True)
class AgentProfile:
    role: Role
    persona: Persona
    goal: Goal | None
    oversight: bool
    risks: bool
    sections: tuple[PromptSection, ...] = field(default=())

    @property
    def personality(self) -> GuardPersonality | PrisonerPersonality:
        return self.persona.for_role(self.role)


def build_profile(
    role: Role, persona: Persona, goal: Goal | None, oversight: bool, risks: bool
) -> AgentProfile:
    """Build a profile; ``goal`` is ignored for the guard."""
    own_goal = goal if role is Role.PRISONER else None
    sections = build_private_sections(role, persona, own_goal) + build_shared_sections(
        oversight, risks
    )
    rank = {title: i for i, title in enumerate(SECTION_ORDER)}
    sections.sort(key=lambda s: rank[s.title])
    return AgentProfile(role, persona, own_goal, oversight, risks, tuple(sections))


def with_extra_section(profile: AgentProfile, title: str, body: str) -> AgentProfile:
    """Append a titled shared section after the canonical ones (e.g. day summaries)."""
    extra = PromptSection(title.upper(), body, Sharing.SHARED, True)
    return AgentProfile(
        profile.role,
        profile.persona,
        profile.goal,
        profile.oversight,
        profile.risks,
        profile.sections + (extra,),
    )


def render_sections(sections) -> str:
    parts = []
    for section in sections:
        body = section.body.rstrip()
        parts.append(body if not section.title else f"{section.title}\n\n{body}")
    return "\n\n".join(parts)


def assemble_system_prompt(profile: AgentProfile) -> str:
    """Render a profile as one system prompt.

    The untitled starting section comes first; each titled section follows as
    its uppercase title, a blank line and the body, separated by one blank
    line. No trailing whitespace.
    """
    return render_sections(profile.sections)


def list_personality_combos() -> list[Persona]:
    G, P = GuardPersonality, PrisonerPersonality
    return [
        Persona(G.BLANK, P.BLANK),
        Persona(G.ABUSIVE, P.REBELLIOUS),
        Persona(G.RESPECTFUL, P.REBELLIOUS),
        Persona(G.ABUSIVE, P.PEACEFUL),
        Persona(G.RESPECTFUL, P.PEACEFUL),
    ]
