"""Conjugation fixtures for pronoun rewriting, with hand-written neutral forms."""

from misgender_meta.pronouns import ACC, DEP, IND, NOM, REFL

# sentence frames; each slot name is a case
FRAMES = [
    "{Nom} is a doctor.", "{Nom} was tired after the game.", "{Nom} has two cats.",
    "{Nom} does the dishes every night.", "{Nom} likes golf.", "{Nom} goes to school early.",
    "{Nom} tries hard.", "{Nom} watches the news.", "{Nom} isn't ready yet.", "{Nom} wasn't home.",
    "{Nom} hasn't called.", "{Nom} doesn't smoke.", "{Nom} always writes before bed.",
    "{Nom} hurt {refl} while cooking.", "{Nom} can swim.", "{Nom} walked home.",
    "I saw {acc} at the store.", "The award went to {acc}.", "Everyone admired {dep} courage.",
    "{Dep} car is red.", "The blue coat is {ind}.", "That idea was {ind} all along.",
    "{Nom} taught {refl} to cook.", "{Nom} bought {refl} a gift.", "{Nom} said the book was {ind}.",
    "Ask {acc} about {dep} trip.", "{Nom} is proud of {dep} work and {nom} is happy.",
    "When {nom} arrives, {nom} is always smiling.", "{Nom} has {dep} own office.",
    "{Nom} fixes cars for a living.", "{Nom} was sure that {nom} was right.",
    "People say {nom} really cares.", "{Nom} finishes {dep} homework quickly.",
]
# the same frames written out by hand for "they"
NEUTRAL = [
    "They are a doctor.", "They were tired after the game.", "They have two cats.",
    "They do the dishes every night.", "They like golf.", "They go to school early.",
    "They try hard.", "They watch the news.", "They aren't ready yet.", "They weren't home.",
    "They haven't called.", "They don't smoke.", "They always write before bed.",
    "They hurt themself while cooking.", "They can swim.", "They walked home.",
    "I saw them at the store.", "The award went to them.", "Everyone admired their courage.",
    "Their car is red.", "The blue coat is theirs.", "That idea was theirs all along.",
    "They taught themself to cook.", "They bought themself a gift.", "They said the book was theirs.",
    "Ask them about their trip.", "They are proud of their work and they are happy.",
    "When they arrive, they are always smiling.", "They have their own office.",
    "They fix cars for a living.", "They were sure that they were right.",
    "People say they really care.", "They finish their homework quickly.",
]


def fill(frame, profile, base):
    slots = {k: profile.surface(base, c) for k, c in
             (("nom", NOM), ("acc", ACC), ("dep", DEP), ("ind", IND), ("refl", REFL))}
    slots.update({k.capitalize(): v.capitalize() for k, v in list(slots.items())})
    return frame.format(**slots)
