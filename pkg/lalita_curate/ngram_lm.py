"""Interpolated modified Kneser-Ney n-gram language model.

Training pads every sentence with ``order - 1`` ``<s>`` symbols and one
``</s>``. The highest order uses raw counts, lower orders use continuation
counts (number of distinct left extensions). Each order gets three discounts
from its counts-of-counts; when those statistics are degenerate the order
falls back to a single discount of 0.75.

The trained model is stored as backoff tables: for every seen n-gram the
interpolated log-probability, for every seen context its log backoff weight.
All logarithms are natural.
"""
import json
import math
import unicodedata
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from loguru import logger

from lalita_curate.conllu_ingest import AnnotatedSentence
from lalita_curate.errors import LanguageModelError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
FORMAT = "lalita-kn-lm"
VERSION = 1
FALLBACK_DISCOUNT = 0.75

Ngram = Tuple[str, ...]


def normalize_forms(forms: Iterable[str]) -> List[str]:
    return [unicodedata.normalize("NFC", form.lower()) for form in forms]


def normalize_for_lm(ann: AnnotatedSentence) -> List[str]:
    """Lowercased, NFC-normalized token forms."""
    return normalize_forms(ann.forms)


def _discounts(counts: Dict[Ngram, int]) -> Tuple[Tuple[float, float, float], bool]:
    coc = Counter(c for c in counts.values() if c <= 4)
    n1, n2, n3, n4 = (coc.get(i, 0) for i in (1, 2, 3, 4))
    if min(n1, n2, n3, n4) == 0:
        return (FALLBACK_DISCOUNT,) * 3, True
    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if not all(0 < di < i for i, di in enumerate(d, start=1)):
        return (FALLBACK_DISCOUNT,) * 3, True
    return d, False


def _discount_for(count: int, d: Tuple[float, float, float]) -> float:
    if count <= 0:
        return 0.0
    return d[min(count, 3) - 1]


class NgramModel:
    """A trained model: backoff tables plus the metadata needed to query them."""

    def __init__(
        self,
        order: int,
        vocab: Iterable[str],
        discounts: Dict[int, Tuple[float, float, float]],
        fallback: Dict[int, bool],
        logprobs: Dict[int, Dict[Ngram, float]],
        backoffs: Dict[int, Dict[Ngram, float]],
    ):
        self.order = order
        self.vocab = frozenset(vocab)
        self.discounts = discounts
        self.fallback = fallback
        self.logprobs = logprobs
        self.backoffs = backoffs

    @property
    def predictable(self) -> List[str]:
        """Every symbol a distribution ranges over (the vocabulary without `<s>`)."""
        return sorted(self.vocab - {BOS})

    def contexts(self, order: int) -> List[Ngram]:
        return sorted(self.backoffs.get(order, {}))

    def logprob(self, word: str, history: Sequence[str]) -> float:
        """ln P(word | history), backing off through shorter contexts."""
        word = word if word in self.vocab and word != BOS else UNK
        context = tuple(w if w in self.vocab else UNK for w in history)
        context = context[len(context) - (self.order - 1):] if self.order > 1 else ()
        weight = 0.0
        while True:
            n = len(context) + 1
            value = self.logprobs[n].get(context + (word,))
            if value is not None:
                return weight + value
            weight += self.backoffs.get(n, {}).get(context, 0.0)
            context = context[1:]

    def to_payload(self) -> Dict:
        def table(rows: Dict[Ngram, float]) -> List:
            return [[list(g), rows[g]] for g in sorted(rows)]

        return {
            "format": FORMAT,
            "version": VERSION,
            "order": self.order,
            "vocab": sorted(self.vocab),
            "discounts": {str(n): list(self.discounts[n]) for n in sorted(self.discounts)},
            "discount_fallback": {str(n): self.fallback[n] for n in sorted(self.fallback)},
            "logprobs": {str(n): table(self.logprobs[n]) for n in sorted(self.logprobs)},
            "backoffs": {str(n): table(self.backoffs[n]) for n in sorted(self.backoffs)},
        }

    @classmethod
    def from_payload(cls, payload: Dict) -> "NgramModel":
        if payload.get("format") != FORMAT or payload.get("version") != VERSION:
            raise LanguageModelError(
                f"Unsupported language model format {payload.get('format')!r} version {payload.get('version')!r}"
            )
        try:
            return cls(
                order=int(payload["order"]),
                vocab=payload["vocab"],
                discounts={int(n): tuple(d) for n, d in payload["discounts"].items()},
                fallback={int(n): bool(f) for n, f in payload["discount_fallback"].items()},
                logprobs={int(n): {tuple(g): float(v) for g, v in rows} for n, rows in payload["logprobs"].items()},
                backoffs={int(n): {tuple(g): float(v) for g, v in rows} for n, rows in payload["backoffs"].items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise LanguageModelError(f"Malformed language model payload: {e}")


def load_model(path: Path) -> NgramModel:
    with open(path, "r", encoding="utf-8") as f:
        return NgramModel.from_payload(json.load(f))


def _count(corpus: Sequence[Sequence[str]], order: int) -> Dict[int, Dict[Ngram, int]]:
    top: Counter = Counter()
    for sentence in corpus:
        padded = [BOS] * (order - 1) + list(sentence) + [EOS]
        for i in range(order - 1, len(padded)):
            top[tuple(padded[i - order + 1:i + 1])] += 1

    counts: Dict[int, Dict[Ngram, int]] = {order: dict(top)}
    types = set(top)
    for n in range(order - 1, 0, -1):
        continuation: Counter = Counter()
        for gram in types:
            continuation[gram[1:]] += 1
        counts[n] = dict(continuation)
        types = set(continuation)
    return counts


def train_kn(corpus: Sequence[Sequence[str]], order: int = 5) -> NgramModel:
    """Train an interpolated modified Kneser-Ney model on tokenized sentences."""
    if order < 1:
        raise LanguageModelError(f"Model order must be at least 1, got {order}")
    if not corpus:
        raise LanguageModelError("Cannot train a language model on an empty corpus")

    counts = _count(corpus, order)
    vocab = {w for (w,) in counts[1]} | {EOS, UNK}
    predictable = sorted(vocab)
    vocab.add(BOS)

    discounts: Dict[int, Tuple[float, float, float]] = {}
    fallback: Dict[int, bool] = {}
    logprobs: Dict[int, Dict[Ngram, float]] = {}
    backoffs: Dict[int, Dict[Ngram, float]] = {}
    probs: Dict[int, Dict[Ngram, float]] = {}

    for n in range(1, order + 1):
        table = counts[n]
        d, fell_back = _discounts(table)
        discounts[n], fallback[n] = d, fell_back
        if fell_back:
            logger.warning(f"Degenerate counts-of-counts at order {n}; using absolute discount {FALLBACK_DISCOUNT}")

        totals: Dict[Ngram, int] = defaultdict(int)
        mass: Dict[Ngram, float] = defaultdict(float)
        for gram, c in table.items():
            totals[gram[:-1]] += c
            mass[gram[:-1]] += _discount_for(c, d)
        gamma = {h: mass[h] / totals[h] for h in totals}

        current: Dict[Ngram, float] = {}
        if n == 1:
            uniform = 1.0 / len(predictable)
            total = totals[()]
            for w in predictable:
                c = table.get((w,), 0)
                current[(w,)] = max(c - _discount_for(c, d), 0.0) / total + gamma[()] * uniform
        else:
            lower = probs[n - 1]
            for gram, c in table.items():
                h = gram[:-1]
                current[gram] = max(c - _discount_for(c, d), 0.0) / totals[h] + gamma[h] * lower[gram[1:]]
            backoffs[n] = {h: math.log(g) for h, g in gamma.items()}
        probs[n] = current
        logprobs[n] = {gram: math.log(p) for gram, p in current.items()}

    model = NgramModel(order, vocab, discounts, fallback, logprobs, backoffs)
    shown = {n: [round(x, 4) for x in d] for n, d in discounts.items()}
    logger.info(f"Trained {order}-gram model on {len(corpus)} sentences; vocab={len(vocab)}, discounts={shown}")
    return model


def perplexity(model: NgramModel, tokens: Sequence[str]) -> float:
    """exp of the mean negative log-probability over the tokens and `</s>`."""
    if not tokens:
        raise LanguageModelError("Perplexity is undefined for an empty token list")
    history = [BOS] * (model.order - 1)
    total = 0.0
    for word in list(tokens) + [EOS]:
        total += model.logprob(word, history)
        history.append(word)
    return math.exp(-total / (len(tokens) + 1))


def sentence_perplexities(model: NgramModel, sentences: Sequence[AnnotatedSentence]) -> Dict[str, float]:
    return {ann.id: perplexity(model, normalize_for_lm(ann)) for ann in sentences}


def train_on_annotations(sentences: Sequence[AnnotatedSentence], order: int = 5) -> NgramModel:
    return train_kn([normalize_for_lm(ann) for ann in sentences], order)
