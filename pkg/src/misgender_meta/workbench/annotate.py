"""Terminal annotation stepper and human/automatic agreement checks.

Labels follow a three-way schema: the target's correct pronoun is used
consistently, an incorrect pronoun appears anywhere (this overrides the
others), or no pronoun refers to the target at all.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ..corpus import AnnotationRecord, Context, GenerationRecord, Label, load_records, write_records
from ..evaluation import EvalOutcome
from ..metrics import AgreementReport, agreement
from ..pronouns import BasePronoun, SpellingProfile, get_profile, iter_pronouns
from ..text import tokenize

KEYS = {"1": Label.CORRECT, "2": Label.MISGENDERING, "3": Label.NO_PRONOUN}

GENDERED_WORDS = frozenset({
    "man", "men", "woman", "women", "boy", "boys", "girl", "girls", "male", "males",
    "female", "females", "sister", "sisters", "brother", "brothers", "mother", "father",
    "mom", "dad", "son", "daughter", "wife", "husband", "lady", "ladies", "gentleman",
    "gentlemen", "guy", "guys", "gal", "king", "queen", "actress", "waitress",
    "girlfriend", "boyfriend", "aunt", "uncle", "niece", "nephew", "genderqueer",
    "masculine", "feminine", "sir", "madam", "mr", "mrs", "ms",
})


def suggest_label(generation: str, gold_base: BasePronoun, profile: SpellingProfile | str) -> Label:
    """Apply the labeling schema mechanically to every pronoun in ``generation``."""
    profile = get_profile(profile)
    bases = {form.base for form, _ in iter_pronouns(tokenize(generation), profile, skip_declarations=True)}
    if bases - {gold_base}:
        return Label.MISGENDERING
    if bases:
        return Label.CORRECT
    return Label.NO_PRONOUN


def extraneous_gendered(generation: str, context: str = "") -> bool:
    """Gendered words in the generation that the context did not already use."""
    seen = {t.lower for t in tokenize(context)}
    return any(t.lower in GENDERED_WORDS and t.lower not in seen for t in tokenize(generation))


def binary_collapse(label: Label) -> int:
    """Only misgendering counts as incorrect; the other labels count as correct."""
    return 0 if label == Label.MISGENDERING else 1


@dataclass
class Item:
    context: Context | None
    generation: GenerationRecord

    @property
    def key(self) -> tuple[str, int]:
        return self.generation.key


def presentation_order(items: Sequence[Item], annotator_id: str, seed: int = 0) -> list[Item]:
    ordered = sorted(items, key=lambda it: it.key)
    random.Random(f"{seed}:{annotator_id}").shuffle(ordered)
    return ordered


def sample_plan(items: Sequence[Item], per_stratum: int, seed: int = 0) -> list[Item]:
    """At most ``per_stratum`` items per (context setting, gold pronoun).

    The draw ignores the annotator, so every annotator labels the same items.
    Items without a context form their own stratum.
    """
    if per_stratum < 1:
        raise ValueError("per_stratum must be at least 1")
    strata: dict[tuple[str, str], list[Item]] = {}
    for it in sorted(items, key=lambda it: it.key):
        key = (it.context.setting, it.context.gold_base.value) if it.context else ("", "")
        strata.setdefault(key, []).append(it)
    rng = random.Random(f"{seed}:plan")
    chosen = []
    for key in sorted(strata):
        group = strata[key]
        chosen += group if len(group) <= per_stratum else rng.sample(group, per_stratum)
    return sorted(chosen, key=lambda it: it.key)


def _done_keys(path: Path, annotator_id: str) -> set[tuple[str, int]]:
    if not path.exists():
        return set()
    return {r.key for r in load_records(path, "annotation_jsonl") if r.annotator_id == annotator_id}


def _show(item: Item, position: int, total: int, extraneous: bool, note: str, emit) -> None:
    emit(f"\n[{position}/{total}] {item.generation.context_id} #{item.generation.sample_index}")
    if item.context is not None:
        emit(f"context ({item.context.gold_base.value}): {item.context.text}")
        hint = suggest_label(item.generation.text, item.context.gold_base, item.context.profile)
        emit(f"generation: {item.generation.text}")
        emit(f"suggested: {hint.value}")
    else:
        emit(f"generation: {item.generation.text}")
    emit(f"extraneous gendered: {'yes' if extraneous else 'no'}" + (f" | note: {note}" if note else ""))
    emit("1=correct 2=misgendering 3=no pronoun  g=toggle gendered  n=note  q=quit")


def annotate_session(
    items: Sequence[Item],
    annotator_id: str,
    out_path: str | Path,
    seed: int = 0,
    read: Callable[[str], str] = input,
    emit: Callable[[str], None] = print,
) -> int:
    """Step through unlabeled items; each label is appended as soon as it is given.

    Returns the number of items labeled in this session. End of input behaves
    like ``q``.
    """
    out_path = Path(out_path)
    done = _done_keys(out_path, annotator_id)
    queue = [it for it in presentation_order(items, annotator_id, seed) if it.key not in done]
    labeled = 0
    for pos, item in enumerate(queue, start=len(done) + 1):
        extraneous, note = False, ""
        while True:
            _show(item, pos, len(done) + len(queue), extraneous, note, emit)
            try:
                key = read("> ").strip().lower()
            except EOFError:
                return labeled
            if key == "q":
                return labeled
            if key == "g":
                extraneous = not extraneous
            elif key == "n":
                try:
                    note = read("note: ").strip()
                except EOFError:
                    return labeled
            elif key in KEYS:
                rec = AnnotationRecord(
                    item.generation.context_id, item.generation.sample_index, KEYS[key],
                    extraneous, note, annotator_id,
                )
                write_records(out_path, [rec], append=True)
                labeled += 1
                break
            else:
                emit(f"unknown key {key!r}")
    return labeled


def load_items(generations_path: str | Path, contexts_path: str | Path | None = None) -> list[Item]:
    contexts = {}
    if contexts_path is not None and Path(contexts_path).exists():
        contexts = {c.id: c for c in load_records(contexts_path, "context_jsonl")}
    return [Item(contexts.get(g.context_id), g) for g in load_records(generations_path, "generation_jsonl")]


# ------------------------------------------------------------- validation


@dataclass(frozen=True)
class HumanAgreement:
    n: int
    label_agreement: float
    extraneous_agreement: float

    def to_dict(self) -> dict:
        return {"n": self.n, "label_agreement": self.label_agreement,
                "extraneous_agreement": self.extraneous_agreement}


def _by_key(records: Iterable[AnnotationRecord]) -> dict:
    out = {}
    for r in records:
        out[r.key] = r  # later lines supersede earlier ones
    return out


def human_human(a: Iterable[AnnotationRecord], b: Iterable[AnnotationRecord]) -> HumanAgreement:
    """Raw agreement on the three-way label and on the extraneous flag."""
    a, b = _by_key(a), _by_key(b)
    keys = sorted(set(a) & set(b))
    if not keys:
        raise ValueError("the two annotation sets share no items")
    labels = sum(a[k].label == b[k].label for k in keys)
    extra = sum(a[k].extraneous_gendered == b[k].extraneous_gendered for k in keys)
    return HumanAgreement(len(keys), labels / len(keys), extra / len(keys))


def human_automatic(annotations: Iterable[AnnotationRecord], outcomes: Iterable[EvalOutcome]) -> AgreementReport:
    """Agreement between collapsed human labels and automatic generation outcomes."""
    ann = _by_key(annotations)
    auto = {
        (o.context_id, o.sample_index): o.m
        for o in outcomes
        if o.method == "generation"
    }
    keys = sorted(set(ann) & set(auto))
    if not keys:
        raise ValueError("annotations and outcomes share no items")
    return agreement([binary_collapse(ann[k].label) for k in keys], [auto[k] for k in keys])
