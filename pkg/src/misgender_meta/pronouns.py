"""Closed-set pronoun morphology: base pronouns, cases, spelling profiles."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .text import Token, sentence_spans, tokenize


class ConfigError(ValueError):
    """Raised for malformed or non-total spelling profiles."""


class BasePronoun(str, enum.Enum):
    HE = "he"
    SHE = "she"
    THEY = "they"
    XE = "xe"

    def __str__(self) -> str:
        return self.value


class PronounCase(str, enum.Enum):
    NOMINATIVE = "nom"
    ACCUSATIVE = "acc"
    POSSESSIVE_DEPENDENT = "pos_dep"
    POSSESSIVE_INDEPENDENT = "pos_ind"
    REFLEXIVE = "refl"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value: str) -> "PronounCase":
        key = value.strip().lower()
        for case in cls:
            if key in (case.value, case.name.lower()):
                return case
        raise ValueError(f"unknown pronoun case {value!r}")


NOM = PronounCase.NOMINATIVE
ACC = PronounCase.ACCUSATIVE
DEP = PronounCase.POSSESSIVE_DEPENDENT
IND = PronounCase.POSSESSIVE_INDEPENDENT
REFL = PronounCase.REFLEXIVE
CASES = tuple(PronounCase)
BASES = tuple(BasePronoun)


def parse_base(value: str) -> BasePronoun:
    try:
        return BasePronoun(value.strip().lower())
    except ValueError:
        raise ValueError(f"unknown base pronoun {value!r}") from None


@dataclass(frozen=True)
class PronounForm:
    surface: str
    base: BasePronoun
    cases: frozenset[PronounCase]

    def __post_init__(self):
        if not self.cases:
            raise ConfigError(f"form {self.surface!r} has no cases")


def _common_table(xe: tuple[str, str, str, str, str]) -> dict:
    rows = {
        BasePronoun.HE: ("he", "him", "his", "his", "himself"),
        BasePronoun.SHE: ("she", "her", "her", "hers", "herself"),
        BasePronoun.THEY: ("they", "them", "their", "theirs", "themself"),
        BasePronoun.XE: xe,
    }
    return {b: dict(zip(CASES, row)) for b, row in rows.items()}


# surfaces accepted on detection but never emitted
DEFAULT_ALIASES = {"themselves": (BasePronoun.THEY, REFL)}


@dataclass(frozen=True)
class SpellingProfile:
    name: str
    table: Mapping[BasePronoun, Mapping[PronounCase, str]]
    aliases: Mapping[str, tuple[BasePronoun, PronounCase]] = field(
        default_factory=lambda: dict(DEFAULT_ALIASES)
    )

    def __post_init__(self):
        missing = [(b.value, c.value) for b in BASES for c in CASES
                   if not self.table.get(b, {}).get(c)]
        if missing:
            raise ConfigError(f"profile {self.name!r} is missing entries for {missing}")
        self._build_forms()

    def __hash__(self):
        return hash(self.name)

    def _build_forms(self) -> dict[str, PronounForm]:
        grouped: dict[str, tuple[BasePronoun, set]] = {}
        entries = [(s.lower(), b, c) for b, row in self.table.items() for c, s in row.items()]
        entries += [(s.lower(), b, c) for s, (b, c) in self.aliases.items()]
        for surface, base, case in entries:
            prev = grouped.setdefault(surface, (base, set()))
            if prev[0] != base:
                raise ConfigError(
                    f"surface {surface!r} maps to both {prev[0].value} and {base.value}"
                )
            prev[1].add(case)
        return {s: PronounForm(s, b, frozenset(cs)) for s, (b, cs) in grouped.items()}

    @cached_property
    def forms(self) -> dict[str, PronounForm]:
        return self._build_forms()

    def surface(self, base: BasePronoun, case: PronounCase) -> str:
        return self.table[base][case]

    def form_of(self, base: BasePronoun, case: PronounCase) -> PronounForm:
        return self.forms[self.surface(base, case)]

    def lookup(self, surface: str) -> PronounForm | None:
        return self.forms.get(surface.lower())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "table": {b.value: {c.value: self.table[b][c] for c in CASES} for b in BASES},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SpellingProfile":
        try:
            name = data["name"]
            raw = data["table"]
            table = {
                parse_base(b): {PronounCase.parse(c): s for c, s in row.items()}
                for b, row in raw.items()
            }
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise ConfigError(f"malformed profile: {exc}") from exc
        return cls(name, table)

    @classmethod
    def load(cls, path: str | Path) -> "SpellingProfile":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


MISGENDERED_RUFF = SpellingProfile(
    "misgendered_ruff", _common_table(("xe", "xem", "xyr", "xyrs", "xemself"))
)
TANGO = SpellingProfile("tango", _common_table(("xe", "xir", "xir", "xirs", "xirself")))

PROFILES = {p.name: p for p in (MISGENDERED_RUFF, TANGO)}


def get_profile(name: str | SpellingProfile) -> SpellingProfile:
    if isinstance(name, SpellingProfile):
        return name
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown spelling profile {name!r}") from None


def register_profile(profile: SpellingProfile) -> None:
    PROFILES[profile.name] = profile


def surface_set(profile: SpellingProfile) -> frozenset[PronounForm]:
    return frozenset(profile.forms.values())


def forms_for_case(profile: SpellingProfile, case: PronounCase) -> list[PronounForm]:
    """Candidate fillers for a slot of the given case, one per base pronoun."""
    return [profile.form_of(b, case) for b in BASES]


def resolve_base(form: PronounForm | str, profile: SpellingProfile = MISGENDERED_RUFF) -> BasePronoun:
    surface = form.surface if isinstance(form, PronounForm) else form
    found = profile.lookup(surface)
    if found is None:
        raise LookupError(f"{surface!r} is not a pronoun in profile {profile.name!r}")
    return found.base


def declaration_indices(tokens: list[Token], profile: SpellingProfile) -> set[int]:
    """Pronoun token positions inside "... pronouns are X/Y/Z" declarations."""
    skip: set[int] = set()
    for lo, hi in sentence_spans(tokens):
        words = [t.lower for t in tokens[lo:hi]]
        if "pronouns" not in words:
            continue
        for i in range(lo, hi):
            if profile.lookup(tokens[i].surface) is None:
                continue
            near = [tokens[j].surface for j in (i - 1, i + 1) if lo <= j < hi]
            if "/" in near:
                skip.add(i)
    return skip


def iter_pronouns(
    tokens: list[Token], profile: SpellingProfile, skip_declarations: bool = False
) -> Iterable[tuple[PronounForm, int]]:
    skip = declaration_indices(tokens, profile) if skip_declarations else set()
    for i, tok in enumerate(tokens):
        if not tok.is_word or i in skip:
            continue
        form = profile.lookup(tok.surface)
        if form is not None:
            yield form, i


def first_pronoun(
    text: str | list[Token], profile: SpellingProfile, skip_declarations: bool = False
) -> tuple[PronounForm, int] | None:
    """Earliest whole-token pronoun in ``text`` with its token index."""
    tokens = tokenize(text) if isinstance(text, str) else text
    return next(iter_pronouns(tokens, profile, skip_declarations), None)
