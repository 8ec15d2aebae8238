"""Deterministic input perturbations: typo transpositions and lexicon substitution.

Randomness comes from one documented generator so that outputs can be
reproduced outside Python:

* the per-item state is ``SeedSequence([seed, h])`` fed to PCG64, where ``h``
  is the first 8 bytes (big-endian) of SHA-256 over the UTF-8 item id;
* a uniform draw is PCG64's ``next_double`` (top 53 bits of a 64-bit output
  times 2**-53);
* choosing ``k`` of ``n`` tokens is a partial Fisher-Yates shuffle where step
  ``i`` swaps position ``i`` with ``i + floor(u * (n - i))``, and the first
  ``k`` positions are the selection;
* every other choice among ``m`` options takes ``floor(u * m)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("typo", "lexicon_substitution")
MIN_TYPO_LENGTH = 4
HEADER_KEY = "_header"

_SPLIT = re.compile(r"(\s+)")
_CORE = re.compile(r"^(\W*)(.*?)(\W*)$", re.DOTALL)


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    rate: float
    seed: int = 0
    lexicon: Mapping[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PerturbationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise PerturbationError(f"rate must lie in [0, 1], got {self.rate}")
        if self.kind == "lexicon_substitution":
            if not self.lexicon:
                raise PerturbationError("lexicon substitution needs a non-empty lexicon")
            lex = {}
            for word, subs in self.lexicon.items():
                subs = tuple(subs)
                if not subs:
                    raise PerturbationError(f"lexicon entry {word!r} has no substitutes")
                lex[word.lower()] = subs
            object.__setattr__(self, "lexicon", lex)


@dataclass(frozen=True)
class PerturbedItem:
    item_id: str
    original_text: str
    perturbed_text: str
    edits: tuple[tuple[int, str], ...] = field(default=())


def item_rng(seed: int, item_id: str) -> np.random.Generator:
    h = int.from_bytes(hashlib.sha256(item_id.encode("utf-8")).digest()[:8], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), h])))


def _index(rng: np.random.Generator, m: int) -> int:
    return min(int(rng.random() * m), m - 1)


def _select(rng: np.random.Generator, n: int, k: int) -> list[int]:
    pool = list(range(n))
    for i in range(k):
        j = i + _index(rng, n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def _edit_count(rate: float, eligible: int) -> int:
    if eligible == 0:
        return 0
    # round away float noise (0.05 * 20 is 1.0000000000000002) before the ceiling
    return min(eligible, math.ceil(round(rate * eligible, 9)))


def _tokens(text: str) -> list[str]:
    """Alternating [whitespace?, token, whitespace, token, ...] pieces."""
    return _SPLIT.split(text)


def perturb_typo(text: str, spec: PerturbationSpec, item_id: str = "") -> PerturbedItem:
    """Swap one adjacent interior character pair in ceil(rate * eligible) tokens.

    Tokens are whitespace-delimited; a token is eligible when it has at least
    4 characters. The first and last characters never move.
    """
    if spec.kind != "typo":
        raise PerturbationError(f"perturb_typo needs a typo spec, got {spec.kind!r}")
    pieces = _tokens(text)
    token_pos = [i for i, p in enumerate(pieces) if p and not p.isspace()]
    eligible = [t for t, i in enumerate(token_pos) if len(pieces[i]) >= MIN_TYPO_LENGTH]
    k = _edit_count(spec.rate, len(eligible))
    if k == 0:
        return PerturbedItem(item_id, text, text, ())
    rng = item_rng(spec.seed, item_id)
    chosen = sorted(eligible[i] for i in _select(rng, len(eligible), k))
    edits = []
    for t in chosen:
        word = pieces[token_pos[t]]
        j = 1 + _index(rng, len(word) - 3)
        pieces[token_pos[t]] = word[:j] + word[j + 1] + word[j] + word[j + 2 :]
        edits.append((t, "transpose"))
    return PerturbedItem(item_id, text, "".join(pieces), tuple(edits))


def perturb_lexicon(text: str, spec: PerturbationSpec, item_id: str = "") -> PerturbedItem:
    """Replace ceil(rate * eligible) lexicon words with a seeded substitute.

    Matching ignores case and surrounding punctuation; a capitalized original
    yields a capitalized substitute.
    """
    if spec.kind != "lexicon_substitution":
        raise PerturbationError(f"perturb_lexicon needs a lexicon spec, got {spec.kind!r}")
    pieces = _tokens(text)
    token_pos = [i for i, p in enumerate(pieces) if p and not p.isspace()]
    parts = [_CORE.match(pieces[i]).groups() for i in token_pos]
    eligible = [t for t, (_, core, _) in enumerate(parts) if core.lower() in spec.lexicon]
    k = _edit_count(spec.rate, len(eligible))
    if k == 0:
        return PerturbedItem(item_id, text, text, ())
    rng = item_rng(spec.seed, item_id)
    chosen = sorted(eligible[i] for i in _select(rng, len(eligible), k))
    edits = []
    for t in chosen:
        lead, core, trail = parts[t]
        subs = spec.lexicon[core.lower()]
        new = subs[_index(rng, len(subs))]
        if core[:1].isupper():
            new = new[:1].upper() + new[1:]
        pieces[token_pos[t]] = lead + new + trail
        edits.append((t, "substitute"))
    return PerturbedItem(item_id, text, "".join(pieces), tuple(edits))


def perturb(text: str, spec: PerturbationSpec, item_id: str = "") -> PerturbedItem:
    if spec.kind == "typo":
        return perturb_typo(text, spec, item_id)
    return perturb_lexicon(text, spec, item_id)


def eligible_count(text: str, spec: PerturbationSpec) -> int:
    tokens = [p for p in _tokens(text) if p and not p.isspace()]
    if spec.kind == "typo":
        return sum(len(t) >= MIN_TYPO_LENGTH for t in tokens)
    return sum(_CORE.match(t).group(2).lower() in spec.lexicon for t in tokens)


def expected_edits(text: str, spec: PerturbationSpec) -> int:
    return _edit_count(spec.rate, eligible_count(text, spec))


# -- files ---------------------------------------------------------------------


def _read_jsonl(path, required: tuple[str, ...]):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PerturbationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise PerturbationError(f"{path}:{lineno}: expected a JSON object")
            if HEADER_KEY in obj:
                continue
            if set(obj) != set(required):
                raise PerturbationError(f"{path}:{lineno}: expected exactly the keys {list(required)}")
            rows.append((lineno, obj))
    return rows


def read_questions(path) -> dict[str, str]:
    """Question file: one ``{"item_id", "text"}`` object per line."""
    out = {}
    for lineno, obj in _read_jsonl(path, ("item_id", "text")):
        if obj["item_id"] in out:
            raise PerturbationError(f"{path}:{lineno}: duplicate item_id {obj['item_id']!r}")
        out[obj["item_id"]] = obj["text"]
    return out


def _line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def write_questions(items: Iterable[tuple[str, str]], path, header: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(_line({HEADER_KEY: header}) + "\n")
        for item_id, text in items:
            fh.write(_line({"item_id": item_id, "text": text}) + "\n")


def read_lexicon(path) -> dict[str, tuple[str, ...]]:
    lex = {}
    for lineno, obj in _read_jsonl(path, ("word", "substitutes")):
        if not isinstance(obj["substitutes"], list) or not obj["substitutes"]:
            raise PerturbationError(f"{path}:{lineno}: 'substitutes' must be a non-empty array")
        lex[obj["word"]] = tuple(obj["substitutes"])
    if not lex:
        raise PerturbationError(f"{path}: empty lexicon")
    return lex


def write_variants(items: Iterable[PerturbedItem], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for it in items:
            fh.write(_line({"item_id": it.item_id, "perturbed_text": it.perturbed_text}) + "\n")


def ingest_external_variants(path, originals: Mapping[str, str]) -> list[PerturbedItem]:
    """Join externally produced variants (e.g. back-translations) to their originals.

    Originals left without a variant are logged as warnings.
    """
    items = []
    seen = set()
    for lineno, obj in _read_jsonl(path, ("item_id", "perturbed_text")):
        item_id = obj["item_id"]
        if item_id in seen:
            raise PerturbationError(f"{path}:{lineno}: duplicate item_id {item_id!r}")
        if item_id not in originals:
            raise PerturbationError(f"{path}:{lineno}: unknown item_id {item_id!r}")
        seen.add(item_id)
        items.append(PerturbedItem(item_id, originals[item_id], obj["perturbed_text"], ()))
    unmatched = sorted(set(originals) - seen)
    if unmatched:
        logger.warning("%d original(s) have no variant: %s", len(unmatched), ", ".join(unmatched[:10]))
    return items
