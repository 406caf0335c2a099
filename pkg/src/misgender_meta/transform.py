"""Conversions between templates and generation contexts.

Templates become generation prompts by truncating before the mask or by
filling it with the gold pronoun. Context/generation pairs become templates
by locating the first pronoun and rewriting the truncated generation once per
base pronoun (xe -> she, neutralize to they, deneutralize to the target).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .corpus import Context, GenerationRecord, Template
from .pronouns import (
    ACC, BASES, DEP, IND, NOM, BasePronoun, PronounCase, PronounForm,
    SpellingProfile, get_profile, iter_pronouns,
)
from .text import CLOSERS, MASK, SENTENCE_END, Token, detokenize, sentence_of, tokenize

OK = "ok"
NO_PRONOUN = "no_pronoun"
AMBIGUOUS_CASE_RESOLVED = "ambiguous_case_resolved"
REWRITE_FAILED = "rewrite_failed"


class RewriteError(ValueError):
    """Conjugation repair could not be applied."""


class DegenerateInputError(ValueError):
    pass


def match_case(original: str, replacement: str) -> str:
    if len(original) > 1 and original.isupper():
        return replacement.upper()
    if original[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


# ---------------------------------------------------------------- rendering


def _mask_is_sentence_initial(prefix: str) -> bool:
    before = prefix.rstrip()
    if not before:
        return True
    stripped = before.rstrip("".join(CLOSERS))
    if stripped != before:
        return bool(stripped) and stripped[-1] in SENTENCE_END
    return before[-1] in SENTENCE_END


def render_mask(template: Template, form: PronounForm) -> str:
    """The template with its mask filled by ``form``, capitalized if sentence-initial."""
    if template.mask_case not in form.cases:
        raise ValueError(
            f"form {form.surface!r} ({sorted(c.value for c in form.cases)}) "
            f"cannot fill a {template.mask_case.value} slot"
        )
    if template.renderings is not None:
        return template.renderings[form.base]
    prefix, suffix = template.text.split(MASK)
    surface = form.surface
    if _mask_is_sentence_initial(prefix):
        surface = surface[:1].upper() + surface[1:]
    return prefix + surface + suffix


def _context_metadata(template: Template) -> dict:
    return {**template.metadata, "source_template": template.id}


def prob_to_gen_pre(template: Template) -> Context:
    prefix = template.text.split(MASK)[0].rstrip()
    if not prefix:
        raise DegenerateInputError(f"template {template.id!r}: mask at position 0 leaves no context")
    return Context(
        id=f"{template.id}:pre_mask",
        dataset=template.dataset,
        text=prefix,
        gold_base=template.gold_base,
        profile=template.profile,
        setting="pre_mask",
        metadata=_context_metadata(template),
        has_distractor=template.has_distractor,
    )


def prob_to_gen_post(template: Template) -> Context:
    profile = get_profile(template.profile)
    gold = profile.form_of(template.gold_base, template.mask_case)
    return Context(
        id=f"{template.id}:post_mask",
        dataset=template.dataset,
        text=render_mask(template, gold),
        gold_base=template.gold_base,
        profile=template.profile,
        setting="post_mask",
        metadata=_context_metadata(template),
        has_distractor=template.has_distractor,
    )


# ------------------------------------------------------------------ tagging

DETERMINERS = {
    "the", "a", "an", "this", "that", "these", "those", "some", "any", "every",
    "each", "no", "all", "both", "either", "neither", "another", "such", "what", "which",
}
PREPOSITIONS = {
    "to", "at", "in", "on", "for", "with", "about", "from", "by", "of", "into",
    "onto", "over", "under", "after", "before", "during", "since", "until", "through",
    "around", "across", "behind", "near", "without", "toward", "towards", "against",
    "up", "down", "out", "off", "back", "away", "like", "as", "than", "upon", "within",
    "along", "among", "between", "beside", "beyond", "per",
}
CONJUNCTIONS = {
    "and", "or", "but", "so", "because", "if", "when", "while", "although",
    "though", "whether", "then", "nor", "yet", "once", "unless", "where", "who", "how",
}
OTHER_PRONOUNS = {
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "it",
    "its", "itself", "we", "us", "our", "ours", "ourselves", "everyone", "someone",
    "anyone", "nobody", "everything", "something", "nothing",
}
AUXILIARIES = {
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had",
    "do", "does", "did", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must", "not", "never", "ought",
}
ADVERBS = {
    "very", "too", "also", "again", "yesterday", "today", "tomorrow", "now", "here",
    "there", "later", "soon", "twice", "home", "tonight", "anymore", "well",
    "either", "instead", "anyway", "ever", "just", "still", "even", "always", "often",
    "sometimes", "already", "together", "alone", "much", "more", "most", "less",
}
BASE_VERBS = {
    "go", "be", "do", "make", "take", "get", "see", "know", "come", "think",
    "leave", "stay", "feel", "become", "try", "eat", "sleep", "win", "lose", "speak",
    "say", "sing", "cry", "laugh", "smile", "understand", "believe", "learn", "sit",
    "stand", "wait", "decide", "explain", "finish", "happen", "help", "hear", "keep",
    "let", "meet", "move", "pay", "remember", "run", "tell", "want", "watch",
}
ADJECTIVES = {
    "own", "new", "old", "best", "favorite", "favourite", "first", "last", "next",
    "little", "big", "small", "great", "good", "bad", "long", "short", "young",
    "whole", "entire", "only", "other", "many", "few", "dear", "beloved", "main",
    "latest", "early", "late", "entire", "usual", "former", "future", "current",
    "biggest", "greatest", "second", "third", "full", "true", "real", "close",
    "older", "younger", "elder", "dream", "debut", "private", "personal", "daily",
}
NON_NOMINAL = (
    DETERMINERS | PREPOSITIONS | CONJUNCTIONS | OTHER_PRONOUNS | AUXILIARIES
    | ADVERBS | BASE_VERBS
)
# words after a pronoun that cannot be the verb to inflect
NON_VERB = DETERMINERS | CONJUNCTIONS | OTHER_PRONOUNS | AUXILIARIES | ADVERBS
LY_VERBS = {"apply", "reply", "rely", "supply", "fly", "ally", "multiply", "imply", "comply"}


def _is_modifier(word: str) -> bool:
    return (
        word in ADJECTIVES
        or word.isdigit()
        or (len(word) > 4 and word.endswith(("ly", "ing", "ed")))
    )


def followed_by_nominal(tokens: list[Token], index: int, profile: SpellingProfile) -> bool:
    """True if a noun-like word follows ``index``, skipping modifiers."""
    modified = False
    for tok in tokens[index + 1:]:
        if not tok.is_word:
            return False
        word = tok.lower
        # "his second win": a bare verb form after a modifier is a noun
        if modified and word in BASE_VERBS:
            return True
        if word in NON_NOMINAL or profile.lookup(word) is not None:
            return False
        if _is_modifier(word):
            modified = True
            continue
        return True
    return False


def tag_case(tokens: list[Token], index: int, form: PronounForm, profile: SpellingProfile) -> PronounCase:
    """Pick one case for a possibly case-ambiguous pronoun occurrence."""
    if len(form.cases) == 1:
        return next(iter(form.cases))
    if DEP in form.cases and followed_by_nominal(tokens, index, profile):
        return DEP
    for case in (ACC, IND, NOM, DEP):
        if case in form.cases and case != DEP:
            return case
    return DEP


# ------------------------------------------------------------- conjugation

DEFAULT_IRREGULARS = {
    "is": "are",
    "was": "were",
    "has": "have",
    "does": "do",
    "isn't": "aren't",
    "wasn't": "weren't",
    "hasn't": "haven't",
    "doesn't": "don't",
    "isn’t": "aren’t",
    "wasn’t": "weren’t",
    "hasn’t": "haven’t",
    "doesn’t": "don’t",
}
# verbs that do not inflect for person (modals, past tense)
INVARIANT = {
    "can", "could", "will", "would", "shall", "should", "may", "might", "must",
    "did", "had", "ought", "used", "went", "said", "took", "ran", "made", "came",
    "saw", "got", "gave", "found", "thought", "told", "became", "left", "felt",
    "kept", "began", "brought", "wrote", "stood", "heard", "let", "meant", "met",
    "paid", "sat", "spoke", "led", "grew", "lost", "fell", "sent", "built",
    "understood", "drew", "broke", "spent", "drove", "bought", "wore", "chose",
    "sang", "won", "ate", "slept", "taught", "caught", "fought", "sold", "held",
    "knew", "rode", "hid", "forgot", "woke", "swam", "threw", "flew", "put", "set",
    "read", "hit", "cut", "quit", "shut", "hurt", "cost", "not", "never",
    "can't", "won't", "couldn't", "wouldn't", "shouldn't", "didn't", "mustn't",
    "hadn't", "can’t", "won’t", "couldn’t", "wouldn’t", "shouldn’t", "didn’t",
}
# adverbs allowed between a nominative pronoun and its verb
VERB_ADVERBS = {
    "also", "never", "often", "always", "still", "sometimes", "usually", "really",
    "just", "only", "even", "already", "rarely", "seldom", "generally", "actually",
    "certainly", "probably", "barely", "nearly", "almost", "then", "now", "soon",
}
ES_ENDINGS = ("s", "sh", "ch", "x", "z", "o")
VOWELS = set("aeiou")


@dataclass(frozen=True)
class ConjugationTable:
    """Third-person singular <-> plural verb pairs plus regular -s rules."""

    irregular: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_IRREGULARS))

    def __post_init__(self):
        plurals = list(self.irregular.values())
        if len(set(plurals)) != len(plurals):
            raise ValueError("conjugation table must be a bijection")

    @property
    def reverse(self) -> dict[str, str]:
        return {v: k for k, v in self.irregular.items()}

    @classmethod
    def load(cls, path: str | Path) -> "ConjugationTable":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        return cls({**DEFAULT_IRREGULARS, **data.get("irregular", data)})

    def to_plural(self, word: str) -> str:
        low = word.lower()
        if low in self.irregular:
            return match_case(word, self.irregular[low])
        if low in INVARIANT or low in self.reverse:
            return word
        if "'" in low or "’" in low:
            raise RewriteError(f"no plural form known for {word!r}")
        if not low.isalpha() or len(low) < 3 or not low.endswith("s") or low.endswith("ss"):
            return word
        if low.endswith("ies") and len(low) > 4 and low[-4] not in VOWELS:
            return word[:-3] + "y"
        if low.endswith(tuple(e + "es" for e in ES_ENDINGS)):
            return word[:-2]
        return word[:-1]

    def to_singular(self, word: str) -> str:
        low = word.lower()
        reverse = self.reverse
        if low in reverse:
            return match_case(word, reverse[low])
        if low in INVARIANT or low in self.irregular:
            return word
        if "'" in low or "’" in low:
            raise RewriteError(f"no singular form known for {word!r}")
        if not low.isalpha() or low.endswith("ed") or low in NON_VERB:
            return word
        if low.endswith("ly") and low not in LY_VERBS:
            return word
        if low.endswith("y") and len(low) > 2 and low[-2] not in VOWELS:
            return word[:-1] + "ies"
        if low.endswith(ES_ENDINGS):
            return word + "es"
        return word + "s"


DEFAULT_TABLE = ConjugationTable()


@dataclass(frozen=True)
class RewriteRule:
    direction: str  # "neutralize" or "deneutralize"
    table: ConjugationTable = DEFAULT_TABLE

    def verb(self, word: str) -> str:
        if self.direction == "neutralize":
            return self.table.to_plural(word)
        return self.table.to_singular(word)


def governed_verb(tokens: list[Token], index: int) -> int | None:
    """Index of the verb right after a nominative pronoun, across adverbs."""
    j = index + 1
    while j < len(tokens) and tokens[j].is_word and tokens[j].lower in VERB_ADVERBS:
        j += 1
    if j < len(tokens) and tokens[j].is_word:
        return j
    return None


# --------------------------------------------------------------- rewriting


def _apply(tokens: list[Token], replacements: Mapping[int, str]) -> str:
    if not tokens:
        return ""
    parts = [tokens[0].lead]
    for i, tok in enumerate(tokens):
        parts.append(replacements.get(i, tok.surface))
        parts.append(tok.ws)
    return "".join(parts)


def _cases_for(tokens, profile, base, hints) -> dict[int, PronounCase]:
    out = {}
    for form, i in iter_pronouns(tokens, profile):
        if form.base == base:
            out[i] = hints.get(i) if i in hints and hints[i] in form.cases else tag_case(
                tokens, i, form, profile
            )
    return out


def _map_base(text, src, dst, profile, hints, rule: RewriteRule | None) -> str:
    tokens = tokenize(text)
    cases = _cases_for(tokens, profile, src, hints)
    replacements: dict[int, str] = {}
    for i, case in cases.items():
        replacements[i] = match_case(tokens[i].surface, profile.surface(dst, case))
        if rule is not None and case == NOM:
            j = governed_verb(tokens, i)
            if j is not None and j not in cases:
                replacements[j] = rule.verb(tokens[j].surface)
    return _apply(tokens, replacements)


def rewrite_pronouns(
    text: str,
    from_base: BasePronoun,
    to_base: BasePronoun,
    profile: SpellingProfile | str,
    table: ConjugationTable = DEFAULT_TABLE,
    case_hints: Mapping[int, PronounCase] | None = None,
) -> str:
    """Rewrite every ``from_base`` pronoun in ``text`` as ``to_base``.

    ``case_hints`` maps token indices to known cases and overrides the tagger;
    indices stay valid across steps because replacements are one-for-one.
    """
    profile = get_profile(profile)
    hints = dict(case_hints or {})
    if from_base == to_base:
        return text
    current = from_base
    if current == BasePronoun.XE:
        text = _map_base(text, BasePronoun.XE, BasePronoun.SHE, profile, hints, None)
        current = BasePronoun.SHE
    if current != BasePronoun.THEY:
        text = _map_base(text, current, BasePronoun.THEY, profile, hints, RewriteRule("neutralize", table))
    if to_base != BasePronoun.THEY:
        text = _map_base(text, BasePronoun.THEY, to_base, profile, hints, RewriteRule("deneutralize", table))
    return text


# ------------------------------------------------------------- gen -> prob


@dataclass
class ConversionOutcome:
    status: str
    product: Template | Context | None = None
    diagnostics: list[str] = field(default_factory=list)
    source: tuple[str, int] | None = None

    def __post_init__(self):
        if self.status == NO_PRONOUN and self.product is not None:
            raise ValueError("no_pronoun outcomes carry no product")


def truncate_generation(tokens: list[Token], index: int, profile: SpellingProfile) -> tuple[list[Token], str, list[str]]:
    """Cut a generation so that the pronoun at ``index`` is its only pronoun."""
    diagnostics = []
    _, hi = sentence_of(tokens, index)
    later = [i for _, i in iter_pronouns(tokens[:hi], profile, skip_declarations=True) if i > index]
    if later:
        kept = tokens[: index + 1]
        text = _apply(kept, {}).rstrip() + "."
        diagnostics.append("second pronoun in sentence; cut after first pronoun")
        return tokenize(text), text, diagnostics
    kept = tokens[:hi]
    return kept, _apply(kept, {}).rstrip(), diagnostics


def gen_to_prob(
    context: Context,
    generation: GenerationRecord,
    profile: SpellingProfile | str | None = None,
    table: ConjugationTable = DEFAULT_TABLE,
) -> ConversionOutcome:
    profile = get_profile(profile or context.profile)
    source = generation.key
    if generation.context_id != context.id:
        raise ValueError(f"generation belongs to {generation.context_id!r}, not {context.id!r}")
    # the context supplies the joining space
    tokens = tokenize(generation.text.lstrip())
    hit = next(iter_pronouns(tokens, profile, skip_declarations=True), None)
    if hit is None:
        return ConversionOutcome(NO_PRONOUN, None, ["generation contains no pronoun"], source)
    form, index = hit
    case = tag_case(tokens, index, form, profile)
    status = AMBIGUOUS_CASE_RESOLVED if len(form.cases) > 1 else OK
    diagnostics = []
    if status == AMBIGUOUS_CASE_RESOLVED:
        diagnostics.append(f"{form.surface!r} tagged {case.value}")
    kept, truncated, notes = truncate_generation(tokens, index, profile)
    diagnostics += notes

    prefix = context.text.rstrip() + " "
    try:
        renderings = {
            b: prefix + rewrite_pronouns(truncated, form.base, b, profile, table, {index: case})
            for b in BASES
        }
    except RewriteError as exc:
        return ConversionOutcome(REWRITE_FAILED, None, diagnostics + [str(exc)], source)
    masked = _apply(kept, {index: MASK})
    template = Template(
        id=f"{context.id}:{generation.sample_index}",
        dataset="tango_derived",
        text=prefix + masked,
        mask_case=case,
        gold_base=context.gold_base,
        profile=profile.name,
        metadata={
            **context.metadata,
            "source_context": context.id,
            "sample_index": str(generation.sample_index),
            "located_pronoun": form.surface,
        },
        has_distractor=context.has_distractor,
        renderings=renderings,
    )
    return ConversionOutcome(status, template, diagnostics, source)


def failure_rate(outcomes: list[ConversionOutcome]) -> float:
    if not outcomes:
        raise ValueError("no conversion outcomes")
    return sum(o.status == NO_PRONOUN for o in outcomes) / len(outcomes)
