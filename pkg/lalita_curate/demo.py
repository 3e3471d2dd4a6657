"""Deterministic demo corpus: English -> pseudo-Hindi bitext with UD annotation.

Sentences come from a small clause grammar so every token carries UPOS,
head/deprel, morphological features and NER tags. The raw corpus includes
planted hygiene violations (duplicates, romanized targets, bad length ratios,
one-to-many sources, multi-sentence sources). A separate synthetic corpus
mimics back-translated data with `avg_logprob` sidecars.
"""
import zlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from loguru import logger

from lalita_curate.bitext import BitextPair, bitext_rows, format_sidecar_field
from lalita_curate.conllu_ingest import AnnotatedSentence, Token, to_conllu

NOUNS = (
    ("committee", "committees"), ("minister", "ministers"), ("report", "reports"),
    ("farmer", "farmers"), ("village", "villages"), ("river", "rivers"),
    ("school", "schools"), ("teacher", "teachers"), ("road", "roads"),
    ("court", "courts"), ("budget", "budgets"), ("scheme", "schemes"),
    ("officer", "officers"), ("student", "students"), ("market", "markets"),
    ("law", "laws"), ("district", "districts"), ("festival", "festivals"),
    ("project", "projects"), ("hospital", "hospitals"),
)
VERBS = (
    ("approve", "approved", "approves"), ("inspect", "inspected", "inspects"),
    ("visit", "visited", "visits"), ("support", "supported", "supports"),
    ("announce", "announced", "announces"), ("review", "reviewed", "reviews"),
    ("build", "built", "builds"), ("open", "opened", "opens"),
    ("discuss", "discussed", "discusses"), ("fund", "funded", "funds"),
    ("reject", "rejected", "rejects"), ("praise", "praised", "praises"),
)
ADJECTIVES = ("new", "old", "large", "small", "local", "national", "public", "rural", "final", "annual")
ADPOSITIONS = ("in", "of", "near", "for", "with", "from", "across", "under")
PERSONS = (("Asha", "Verma"), ("Ravi", "Kumar"), ("Meena", "Iyer"), ("Arjun", "Singh"), ("Farah", "Khan"))
ORGANIZATIONS = ("Lokpal", "Parliament", "UNESCO", "ISRO")
LOCATIONS = ("Delhi", "Assam", "Kerala", "Punjab", "Odisha", "Goa")
FRAGMENT_NOUNS = ("state", "legislation", "enactment", "water", "supply", "board", "tax", "reform", "council", "election")

SYLLABLES = (
    "क", "का", "कि", "की", "र", "रा", "म", "मा", "न", "ना", "स", "सा", "त", "ता", "प",
    "पा", "ल", "ला", "व", "वा", "ह", "हा", "ग", "गा", "द", "दा", "य", "या", "ज", "जा",
)

FINITE_PAST = {"Mood": "Ind", "Tense": "Past", "VerbForm": "Fin"}
FINITE_PRES = {"Mood": "Ind", "Number": "Sing", "Person": "3", "Tense": "Pres", "VerbForm": "Fin"}
PARTICIPLE = {"Tense": "Past", "VerbForm": "Part"}
ARTICLE = {"Definite": "Def", "PronType": "Art"}
INDEFINITE = {"Definite": "Ind", "PronType": "Art"}


class _SentenceBuilder:
    """Accumulates token rows; heads are 1-based positions in this block."""

    def __init__(self):
        self.rows: List[Dict] = []

    def add(self, form, lemma, upos, deprel, head=None, feats=None, ner=None) -> int:
        self.rows.append({
            "form": form, "lemma": lemma, "upos": upos, "deprel": deprel,
            "head": head, "feats": dict(feats or {}), "ner": ner,
        })
        return len(self.rows)

    def attach(self, position: int, head: int, deprel: Optional[str] = None):
        self.rows[position - 1]["head"] = head
        if deprel is not None:
            self.rows[position - 1]["deprel"] = deprel

    def tokens(self, offset: int = 0) -> List[Token]:
        return [
            Token(
                id=i + offset,
                form=row["form"],
                lemma=row["lemma"],
                upos=row["upos"],
                head=row["head"] + offset if row["head"] else 0,
                deprel=row["deprel"],
                feats=row["feats"],
                ner=row["ner"],
            )
            for i, row in enumerate(self.rows, start=1)
        ]


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def _noun_phrase(b: _SentenceBuilder, noun: Tuple[str, str], adjectives: Sequence[str], plural: bool, definite: bool) -> int:
    det_form = "the" if definite or plural else "a"
    det = b.add(det_form, det_form if det_form == "the" else "a", "DET", "det", feats=ARTICLE if det_form == "the" else INDEFINITE)
    adjs = [b.add(a, a, "ADJ", "amod", feats={"Degree": "Pos"}) for a in adjectives]
    form = noun[1] if plural else noun[0]
    head = b.add(form, noun[0], "NOUN", "dep", feats={"Number": "Plur" if plural else "Sing"})
    b.attach(det, head)
    for a in adjs:
        b.attach(a, head)
    return head


def _clause(
    b: _SentenceBuilder,
    rng: Optional[np.random.Generator],
    *,
    n_adj: int,
    n_pp: int,
    aux: bool,
    subject: str = "np",
    relcl: bool = False,
    past: bool = True,
    loc_share: float = 0.0,
    seed_index: int = 0,
) -> int:
    """Subject, optional auxiliary, verb, object and n_pp prepositional phrases. Returns the verb position."""

    def choose(items: Sequence, shift: int = 0):
        if rng is None:
            return items[(seed_index + shift) % len(items)]
        return _pick(rng, items)

    subj_adj = min(n_adj, 1)
    obj_adj = n_adj - subj_adj
    if subject == "per":
        first, last = choose(PERSONS)
        subj = b.add(first, first, "PROPN", "nsubj", feats={"Number": "Sing"}, ner="B-PER")
        rest = b.add(last, last, "PROPN", "flat", head=subj, feats={"Number": "Sing"}, ner="I-PER")
        b.attach(rest, subj)
    elif subject == "org":
        name = choose(ORGANIZATIONS)
        subj = b.add(name, name, "PROPN", "nsubj", feats={"Number": "Sing"}, ner="B-ORG")
    else:
        adjs = [choose(ADJECTIVES, 3 + i) for i in range(subj_adj)]
        subj = _noun_phrase(b, choose(NOUNS, 1), adjs, plural=False, definite=True)

    aux_pos = None
    if aux:
        form, feats = ("has", FINITE_PRES) if not past else ("had", FINITE_PAST)
        aux_pos = b.add(form, "have", "AUX", "aux", feats=feats)
    lemma, past_form, pres_form = choose(VERBS, 2)
    if aux:
        verb = b.add(past_form, lemma, "VERB", "root", feats=PARTICIPLE)
    else:
        verb = b.add(past_form if past else pres_form, lemma, "VERB", "root", feats=FINITE_PAST if past else FINITE_PRES)
    b.attach(subj, verb, "nsubj")
    if aux_pos is not None:
        b.attach(aux_pos, verb)

    adjs = [choose(ADJECTIVES, 5 + i) for i in range(obj_adj)]
    plural = bool(rng.random() < 0.4) if rng is not None else (seed_index % 2 == 1)
    obj = _noun_phrase(b, choose(NOUNS, 4), adjs, plural=plural, definite=True)
    b.attach(obj, verb, "obj")

    if relcl:
        that = b.add("that", "that", "PRON", "nsubj", feats={"PronType": "Rel"})
        r_lemma, r_past, _ = choose(VERBS, 6)
        rel_verb = b.add(r_past, r_lemma, "VERB", "acl:relcl", head=obj, feats=FINITE_PAST)
        b.attach(that, rel_verb)
        b.attach(rel_verb, obj)
        r_obj = _noun_phrase(b, choose(NOUNS, 7), [], plural=False, definite=True)
        b.attach(r_obj, rel_verb, "obj")

    for i in range(n_pp):
        adp_form = choose(ADPOSITIONS, 8 + i)
        adp = b.add(adp_form, adp_form, "ADP", "case")
        if rng is not None and rng.random() < loc_share:
            place = _pick(rng, LOCATIONS)
            head = b.add(place, place, "PROPN", "obl", feats={"Number": "Sing"}, ner="B-LOC")
        else:
            head = _noun_phrase(b, choose(NOUNS, 9 + i), [], plural=False, definite=True)
        b.attach(adp, head)
        b.attach(head, verb, "obl")
    return verb


def _join(b: _SentenceBuilder, root: int, verb: int, joiner: int, subordinate: bool):
    b.attach(joiner, verb, "mark" if subordinate else "cc")
    b.attach(verb, root, "advcl" if subordinate else "conj")


def _fragment(b: _SentenceBuilder, words: Sequence[str], plural_last: bool):
    positions = []
    for i, word in enumerate(words):
        last = i == len(words) - 1
        form = word + "s" if last and plural_last else word
        positions.append(b.add(form, word, "NOUN", "compound", feats={"Number": "Plur" if last and plural_last else "Sing"}))
    root = positions[-1]
    for p in positions[:-1]:
        b.attach(p, root)
    b.attach(root, 0, "root")


def random_sentence(rng: np.random.Generator, clause_weights: Sequence[float], fragment_share: float = 0.08) -> List[Token]:
    b = _SentenceBuilder()
    if rng.random() < fragment_share:
        n = int(rng.integers(2, 5))
        words = [_pick(rng, FRAGMENT_NOUNS) for _ in range(n)]
        _fragment(b, words, plural_last=bool(rng.random() < 0.5))
        return b.tokens()

    n_clauses = int(rng.choice(len(clause_weights), p=np.asarray(clause_weights) / sum(clause_weights))) + 1

    def clause():
        return _clause(
            b, rng,
            n_adj=int(rng.integers(0, 3)),
            n_pp=int(rng.choice(4, p=[0.3, 0.35, 0.25, 0.1])),
            aux=bool(rng.random() < 0.3),
            subject=str(rng.choice(["np", "per", "org"], p=[0.7, 0.2, 0.1])),
            relcl=bool(rng.random() < 0.15),
            past=bool(rng.random() < 0.6),
            loc_share=0.25,
        )

    root = clause()
    b.attach(root, 0, "root")
    for _ in range(n_clauses - 1):
        subordinate = bool(rng.random() < 0.3)
        joiner = b.add("because", "because", "SCONJ", "mark") if subordinate else b.add("and", "and", "CCONJ", "cc")
        verb = clause()
        _join(b, root, verb, joiner, subordinate)
    b.add(".", ".", "PUNCT", "punct", head=root)
    return b.tokens()


def fixture_sentence(sent_id: str, n_tokens: int, n_verbs: int) -> AnnotatedSentence:
    """
    A sentence of exactly `n_tokens` tokens and `n_verbs` verbs built from the
    demo grammar. With no verbs it is a compound noun phrase; 3 tokens gives
    "state legislation enactments".
    """
    b = _SentenceBuilder()
    if n_verbs == 0:
        words = [FRAGMENT_NOUNS[i % len(FRAGMENT_NOUNS)] for i in range(n_tokens)]
        _fragment(b, words, plural_last=True)
        return AnnotatedSentence(id=sent_id, tokens=tuple(b.tokens()), block_sizes=(n_tokens,))

    content = n_tokens - (n_verbs - 1) - 1
    base, extra = divmod(content, n_verbs)
    lengths = [base + (1 if i < extra else 0) for i in range(n_verbs)]
    if min(lengths) < 5:
        raise ValueError(f"{n_tokens} tokens are too few for {n_verbs} clauses")

    root = None
    for i, length in enumerate(lengths):
        n_pp, n_adj = divmod(length - 5, 3)
        if i > 0:
            joiner = b.add("and", "and", "CCONJ", "cc")
        verb = _clause(b, None, n_adj=n_adj, n_pp=n_pp, aux=False, seed_index=i)
        if root is None:
            root = verb
            b.attach(root, 0, "root")
        else:
            _join(b, root, verb, joiner, subordinate=False)
    b.add(".", ".", "PUNCT", "punct", head=root)
    return AnnotatedSentence(id=sent_id, tokens=tuple(b.tokens()), block_sizes=(n_tokens,))


def _hindi_word(word: str) -> str:
    if word == ".":
        return "।"
    if not any(c.isalpha() for c in word):
        return word
    key = zlib.crc32(word.lower().encode("utf-8"))
    n = 1 + key % 3
    parts = []
    for _ in range(n):
        key //= 7
        parts.append(SYLLABLES[key % len(SYLLABLES)])
    return "".join(parts)


def pseudo_translate(forms: Sequence[str]) -> str:
    return " ".join(_hindi_word(f) for f in forms if f.lower() not in ("the", "a"))


def _document(doc_id: str, blocks: Sequence[List[Token]]) -> AnnotatedSentence:
    tokens: List[Token] = []
    for block in blocks:
        offset = len(tokens)
        tokens.extend(
            t.model_copy(update={"id": t.id + offset, "head": t.head + offset if t.head else 0})
            for t in block
        )
    return AnnotatedSentence(id=doc_id, tokens=tuple(tokens), block_sizes=tuple(len(b) for b in blocks))


def _renamed(ann: AnnotatedSentence, new_id: str) -> AnnotatedSentence:
    return ann.model_copy(update={"id": new_id})


def build_real_corpus(rng: np.random.Generator, n_pairs: int) -> List[Tuple[BitextPair, AnnotatedSentence]]:
    """Clean pairs plus planted violations, shuffled, with sequential ids."""
    n_dup = max(1, n_pairs * 3 // 100)
    n_roman = max(1, n_pairs * 2 // 100)
    n_ratio = max(1, n_pairs // 100)
    n_ambiguous = max(1, n_pairs // 100)
    n_multi = max(1, n_pairs * 2 // 100)
    n_clean = n_pairs - n_dup - n_roman - n_ratio - n_ambiguous - n_multi
    weights = (0.35, 0.35, 0.2, 0.1)

    records: List[Tuple[str, str, AnnotatedSentence]] = []
    for _ in range(n_clean):
        ann = _document("tmp", [random_sentence(rng, weights)])
        records.append((" ".join(ann.forms), pseudo_translate(ann.forms), ann))

    for i in range(n_dup):
        records.append(records[i * 7 % n_clean])
    for i in range(n_ambiguous):
        source, target, ann = records[(i * 11 + 3) % n_clean]
        records.append((source, target + " " + _hindi_word("variant"), ann))
    for _ in range(n_roman):
        ann = _document("tmp", [random_sentence(rng, weights, fragment_share=0.0)])
        records.append((" ".join(ann.forms), " ".join(f.lower() for f in ann.forms), ann))
    for _ in range(n_ratio):
        ann = _document("tmp", [random_sentence(rng, (0.0, 0.3, 0.4, 0.3), fragment_share=0.0)])
        records.append((" ".join(ann.forms), pseudo_translate(ann.forms[:2]), ann))
    for _ in range(n_multi):
        blocks = [random_sentence(rng, (0.6, 0.4), fragment_share=0.0) for _ in range(2)]
        ann = _document("tmp", blocks)
        records.append((" ".join(ann.forms), pseudo_translate(ann.forms), ann))

    out = []
    for position, index in enumerate(rng.permutation(len(records)), start=1):
        source, target, ann = records[int(index)]
        pair_id = f"demo-{position:05d}"
        out.append((BitextPair(id=pair_id, source=source, target=target), _renamed(ann, pair_id)))
    return out


def build_synthetic_corpus(rng: np.random.Generator, n_pairs: int) -> List[Tuple[BitextPair, AnnotatedSentence]]:
    """Long-leaning back-translation-like pairs carrying avg_logprob and nlm_ppl."""
    out = []
    for i in range(1, n_pairs + 1):
        pair_id = f"syn-{i:05d}"
        if rng.random() < 0.05:
            blocks = [random_sentence(rng, (0.5, 0.5), fragment_share=0.0) for _ in range(2)]
        else:
            blocks = [random_sentence(rng, (0.0, 0.15, 0.3, 0.35, 0.2), fragment_share=0.0)]
        ann = _document(pair_id, blocks)
        sidecar = {
            "avg_logprob": round(float(rng.uniform(-1.6, -0.2)), 4),
            "nlm_ppl": round(float(rng.lognormal(3.4, 0.25)), 4),
        }
        out.append((BitextPair(id=pair_id, source=" ".join(ann.forms), target=pseudo_translate(ann.forms), sidecar=sidecar), ann))
    return out


def _write_lines(path: Path, lines: Sequence[str]):
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(lines)


def demo_config(output_dir: str = "output") -> Dict:
    return {
        "system": {"log_level": "INFO"},
        "paths": {
            "bitext": "bitext.tsv",
            "conllu": "source.conllu",
            "sidecars": ["nlm_ppl.tsv"],
            "synthetic_bitext": "synthetic.tsv",
            "synthetic_conllu": "synthetic.conllu",
            "output_dir": output_dir,
        },
        "filter": {"preset": "full"},
        "lm": {"order": 5},
        "score": {"components": 10},
        "cluster": {"k": 4, "silhouette_sample": 10000, "seed": 0},
        "sampling": {
            "configurations": ["0_0_0_100", "25_25_25_25", "100_0_0_0"],
            "tds": [300],
            "seed": 0,
            "random_runs": 3,
            "stepwise_strategies": ["incpca", "decpca", "rs"],
            "increment": 300,
        },
        "report": {"enabled": True, "histogram_features": ["VERB", "sentenceLength"]},
    }


def generate_demo(out_dir: Path, n_pairs: int = 1000, n_synthetic: int = 600, seed: int = 0) -> Path:
    """Write the demo corpus and a ready-to-run config.yaml into `out_dir`. Returns the config path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    real = build_real_corpus(rng, n_pairs)
    synthetic = build_synthetic_corpus(rng, n_synthetic)

    _write_lines(out_dir / "bitext.tsv", ["\t".join(row) + "\n" for row in bitext_rows(p for p, _ in real)])
    _write_lines(out_dir / "source.conllu", [to_conllu(ann) for _, ann in real])
    nlm_lines = [
        f"{pair.id}\t{format_sidecar_field({'nlm_ppl': round(float(rng.lognormal(3.4, 0.25)), 4)})}\n"
        for pair, _ in real
    ]
    _write_lines(out_dir / "nlm_ppl.tsv", nlm_lines)
    _write_lines(out_dir / "synthetic.tsv", ["\t".join(row) + "\n" for row in bitext_rows(p for p, _ in synthetic)])
    _write_lines(out_dir / "synthetic.conllu", [to_conllu(ann) for _, ann in synthetic])

    config_path = out_dir / "config.yaml"
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(demo_config(), f, sort_keys=False, allow_unicode=True)
    logger.success(f"Demo corpus written to {out_dir} ({len(real)} pairs, {len(synthetic)} synthetic)")
    return config_path
