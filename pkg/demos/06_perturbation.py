"""
Seeded text perturbations
=========================

Typo noise swaps one interior character pair in a fixed share of tokens;
lexicon substitution swaps listed words for alternatives. The same seed and
item id always give the same output.
"""

# %%
from pathlib import Path

from crs import perturb as pt

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
questions = pt.read_questions(DATA / "questions.jsonl")

typo = pt.PerturbationSpec("typo", rate=0.05, seed=7)
for item_id in list(questions)[:5]:
    item = pt.perturb(questions[item_id], typo, item_id)
    print(f"{item_id}: {item.original_text!r}\n     -> {item.perturbed_text!r}  edits {item.edits}")

# %% ceil rule: every item with an eligible token gets at least one edit
eligible = sum(pt.eligible_count(q, typo) for q in questions.values())
edits = sum(pt.expected_edits(q, typo) for q in questions.values())
print(f"{len(questions)} questions, {eligible} eligible tokens, {edits} edits at rate {typo.rate}")

# %% heavier noise
heavy = pt.PerturbationSpec("typo", rate=0.5, seed=7)
print(pt.perturb(questions["q001"], heavy, "q001").perturbed_text)

# %% lexicon substitution keeps capitalization and punctuation
lex = pt.PerturbationSpec("lexicon_substitution", rate=1.0, seed=1, lexicon=pt.read_lexicon(DATA / "lexicon.jsonl"))
hits = [i for i, q in questions.items() if pt.eligible_count(q, lex)][:4]
for item_id in hits:
    print(pt.perturb(questions[item_id], lex, item_id).perturbed_text)
