"""CoNLL-U ingestion: source-side annotations joined to bitext by id.

Sentence blocks carry their join key in ``# sent_id = <id>``. Consecutive
blocks sharing a sent_id form one document (one bitext source instance);
``sentence_count_in_doc`` records how many blocks it held. Multiword-token
ranges (``3-4``) and empty nodes (``5.1``) are skipped everywhere.
"""
import asyncio
import re
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import conllu
from conllu.models import Token as ConlluToken, TokenList
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from loguru import logger

from lalita_curate.bitext import BitextPair, check_unique_ids
from lalita_curate.errors import ConlluParseError

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
NER_CATEGORIES = ("LOC", "MISC", "ORG", "PER")

_INT_ID = re.compile(r"^[1-9][0-9]*$")
_RANGE_ID = re.compile(r"^[1-9][0-9]*-[1-9][0-9]*$")
_EMPTY_ID = re.compile(r"^[0-9]+\.[1-9][0-9]*$")
_NER_TAG = re.compile(r"^[BI]-(LOC|MISC|ORG|PER)$")
_HEAD = re.compile(r"^(0|[1-9][0-9]*)$")


class Token(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    form: str
    lemma: str = "_"
    upos: str
    head: int
    deprel: str
    feats: Dict[str, str] = Field(default_factory=dict)
    ner: Optional[str] = None

    @field_validator("upos")
    @classmethod
    def _known_upos(cls, value: str) -> str:
        if value not in UPOS_TAGS:
            raise ValueError(f"unknown UPOS '{value}'")
        return value

    @field_validator("ner")
    @classmethod
    def _known_ner(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not _NER_TAG.match(value):
            raise ValueError(f"invalid NER tag '{value}'")
        return value

    @field_validator("feats")
    @classmethod
    def _non_empty_feats(cls, value: Dict[str, str]) -> Dict[str, str]:
        for key, item in value.items():
            if not key or not item:
                raise ValueError(f"FEATS entries need a name and a value, got '{key}={item}'")
        return value


class AnnotatedSentence(BaseModel):
    """Tokenized source instance with its linguistic annotation."""
    model_config = ConfigDict(frozen=True)

    id: str
    tokens: Tuple[Token, ...]
    block_sizes: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_structure(self):
        if not self.block_sizes or any(size < 1 for size in self.block_sizes):
            raise ValueError("every sentence block must hold at least one token")
        if sum(self.block_sizes) != len(self.tokens):
            raise ValueError("block sizes do not add up to the token count")
        n = len(self.tokens)
        for expected, token in enumerate(self.tokens, start=1):
            if token.id != expected:
                raise ValueError(f"token ids must be 1..{n} contiguous, found {token.id} at position {expected}")
            if not 0 <= token.head <= n:
                raise ValueError(f"head {token.head} of token {token.id} is out of range")
        return self

    @property
    def sentence_count_in_doc(self) -> int:
        return len(self.block_sizes)

    @property
    def forms(self) -> List[str]:
        return [t.form for t in self.tokens]

    def entity_spans(self) -> List[Tuple[str, int, int]]:
        """Maximal B-X I-X* runs as (category, first token id, last token id)."""
        spans: List[Tuple[str, int, int]] = []
        current: Optional[List] = None
        for token in self.tokens:
            tag = token.ner
            if tag is None:
                current = None
                continue
            prefix, category = tag.split("-", 1)
            if prefix == "I" and current is not None and current[0] == category:
                current[2] = token.id
                continue
            # B-X, or an orphan I-X, opens a new entity
            current = [category, token.id, token.id]
            spans.append(current)
        return [tuple(span) for span in spans]


class JoinResult(BaseModel):
    records: List[Tuple[BitextPair, AnnotatedSentence]]
    unmatched_pairs: List[str]
    unmatched_annotations: List[str]


def _decode_lines(stream: BinaryIO, source: str) -> Iterator[Tuple[int, str]]:
    for line_no, raw in enumerate(stream, start=1):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConlluParseError(f"invalid UTF-8: {e}", line_no, source=source)
        yield line_no, text.rstrip("\r\n")


def _iter_blocks(stream: BinaryIO, source: str) -> Iterator[List[Tuple[int, str]]]:
    block: List[Tuple[int, str]] = []
    for line_no, text in _decode_lines(stream, source):
        if not text.strip():
            if block:
                yield block
                block = []
            continue
        block.append((line_no, text))
    if block:
        yield block


def _sent_id_of(block: List[Tuple[int, str]]) -> Optional[str]:
    for _, text in block:
        if text.startswith("#"):
            body = text[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                key, value = body.split("=", 1)
                if key.strip() == "sent_id":
                    return value.strip()
    return None


def _validate_block(block: List[Tuple[int, str]], sent_id: Optional[str], source: str) -> List[int]:
    """Line-level checks that the conllu parser does not make. Returns word-line numbers."""
    if sent_id is None:
        raise ConlluParseError("sentence block has no '# sent_id' comment", block[0][0], source=source)

    word_lines: List[int] = []
    heads: List[Tuple[int, int]] = []
    for line_no, text in block:
        if text.startswith("#"):
            continue
        cols = text.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(f"expected 10 tab-separated columns, got {len(cols)}", line_no, sent_id, source)
        token_id = cols[0]
        if _RANGE_ID.match(token_id) or _EMPTY_ID.match(token_id):
            continue
        if not _INT_ID.match(token_id):
            raise ConlluParseError(f"invalid token id '{token_id}'", line_no, sent_id, source)
        expected = len(word_lines) + 1
        if int(token_id) != expected:
            raise ConlluParseError(f"non-contiguous token id {token_id}, expected {expected}", line_no, sent_id, source)
        word_lines.append(line_no)

        upos = cols[3]
        if upos not in UPOS_TAGS:
            raise ConlluParseError(f"unknown UPOS '{upos}'", line_no, sent_id, source)
        if not cols[7] or cols[7] == "_":
            raise ConlluParseError("missing DEPREL", line_no, sent_id, source)
        if not _HEAD.match(cols[6]):
            raise ConlluParseError(f"invalid HEAD '{cols[6]}'", line_no, sent_id, source)
        heads.append((line_no, int(cols[6])))

        feats = cols[5]
        if feats != "_":
            keys = set()
            for item in feats.split("|"):
                key, sep, value = item.partition("=")
                if not sep or not key or not value:
                    raise ConlluParseError(f"malformed FEATS item '{item}'", line_no, sent_id, source)
                if key in keys:
                    raise ConlluParseError(f"duplicate FEATS key '{key}'", line_no, sent_id, source)
                keys.add(key)

        for item in cols[9].split("|"):
            key, sep, value = item.partition("=")
            if key == "NER" and value not in ("", "O") and not _NER_TAG.match(value):
                raise ConlluParseError(f"invalid NER tag '{value}'", line_no, sent_id, source)

    if not word_lines:
        raise ConlluParseError("sentence block has no word lines", block[0][0], sent_id, source)
    for line_no, head in heads:
        if head > len(word_lines):
            raise ConlluParseError(f"head {head} out of range 0..{len(word_lines)}", line_no, sent_id, source)
    return word_lines


def _block_tokens(block: List[Tuple[int, str]], offset: int) -> List[Token]:
    text = "\n".join(line for _, line in block) + "\n\n"
    parsed = conllu.parse(text)[0]
    tokens = []
    for item in parsed:
        if not isinstance(item["id"], int):
            continue
        misc = item.get("misc") or {}
        ner = misc.get("NER")
        if ner in ("O", ""):
            ner = None
        head = int(item["head"])
        tokens.append(Token(
            id=item["id"] + offset,
            form=item["form"],
            lemma=item.get("lemma") or "_",
            upos=item["upos"],
            head=head + offset if head else 0,
            deprel=item["deprel"],
            feats=dict(item.get("feats") or {}),
            ner=ner,
        ))
    return tokens


def parse_conllu(stream: BinaryIO, source: str = "<stream>") -> List[AnnotatedSentence]:
    """
    Parse a CoNLL-U byte stream into AnnotatedSentence records.
    Consecutive blocks sharing one sent_id are grouped into one document.
    """
    sentences: List[AnnotatedSentence] = []
    current_id: Optional[str] = None
    tokens: List[Token] = []
    sizes: List[int] = []

    def flush():
        if current_id is not None:
            sentences.append(AnnotatedSentence(id=current_id, tokens=tuple(tokens), block_sizes=tuple(sizes)))

    for block in _iter_blocks(stream, source):
        sent_id = _sent_id_of(block)
        _validate_block(block, sent_id, source)
        if sent_id != current_id:
            flush()
            current_id, tokens, sizes = sent_id, [], []
        block_tokens = _block_tokens(block, offset=len(tokens))
        tokens.extend(block_tokens)
        sizes.append(len(block_tokens))
    flush()
    return sentences


def read_conllu(path: Path) -> List[AnnotatedSentence]:
    with open(path, "rb") as f:
        sentences = parse_conllu(f, source=str(path))
    logger.debug(f"Parsed {len(sentences)} annotated instances from {path}")
    return sentences


async def read_conllu_many(paths: Sequence[Path]) -> List[List[AnnotatedSentence]]:
    """Parse several files concurrently; results keep the order of `paths`."""
    return list(await asyncio.gather(*(asyncio.to_thread(read_conllu, p) for p in paths)))


def to_conllu(sentence: AnnotatedSentence) -> str:
    """Serialize to the canonical 10-column layout, one block per sentence block."""
    parts = []
    start = 0
    for size in sentence.block_sizes:
        offset = start
        rows = []
        for token in sentence.tokens[start:start + size]:
            rows.append(ConlluToken({
                "id": token.id - offset,
                "form": token.form,
                "lemma": token.lemma,
                "upos": token.upos,
                "xpos": None,
                "feats": {key: token.feats[key] for key in sorted(token.feats)} or None,
                "head": token.head - offset if token.head else 0,
                "deprel": token.deprel,
                "deps": None,
                "misc": {"NER": token.ner} if token.ner else None,
            }))
        parts.append(TokenList(rows, metadata={"sent_id": sentence.id}).serialize())
        start += size
    return "".join(parts)


def index_annotations(annotations: Iterable[AnnotatedSentence]) -> Dict[str, AnnotatedSentence]:
    annotations = list(annotations)
    check_unique_ids((a.id for a in annotations), "annotations")
    return {a.id: a for a in annotations}


def join_bitext(pairs: Sequence[BitextPair], annotations: Sequence[AnnotatedSentence]) -> JoinResult:
    """Inner join on id, ordered by the bitext input order."""
    check_unique_ids((p.id for p in pairs), "bitext")
    by_id = index_annotations(annotations)

    records = []
    unmatched = []
    for pair in pairs:
        ann = by_id.get(pair.id)
        if ann is None:
            unmatched.append(pair.id)
        else:
            records.append((pair, ann))
    pair_ids = {p.id for p in pairs}
    orphans = [a.id for a in annotations if a.id not in pair_ids]

    if unmatched:
        logger.warning(f"{len(unmatched)} bitext ids have no annotation")
    if orphans:
        logger.warning(f"{len(orphans)} annotation ids have no bitext pair")
    return JoinResult(records=records, unmatched_pairs=unmatched, unmatched_annotations=orphans)
