"""Bitext TSV reading and writing.

Line layout: ``id<TAB>source<TAB>target[<TAB>key=value;...]``. The optional
fourth column carries sidecar scalars such as ``nlm_ppl`` and ``avg_logprob``.
"""
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field
from loguru import logger

from lalita_curate.errors import BitextFormatError, DuplicateIdError
from lalita_curate.utils import format_number


class BitextPair(BaseModel):
    """One aligned sentence pair."""
    model_config = ConfigDict(frozen=True)

    id: str
    source: str
    target: str
    sidecar: Dict[str, float] = Field(default_factory=dict)

    def with_sidecar(self, values: Mapping[str, float]) -> "BitextPair":
        merged = dict(self.sidecar)
        merged.update(values)
        return self.model_copy(update={"sidecar": merged})


def parse_sidecar_field(text: str, line_no: int = 0, source: str = "<stream>") -> Dict[str, float]:
    values: Dict[str, float] = {}
    text = text.strip()
    if not text or text == "_":
        return values
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise BitextFormatError(f"Sidecar entry '{item}' is not key=value", line_no, source)
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise BitextFormatError("Sidecar entry with empty key", line_no, source)
        try:
            values[key] = float(raw)
        except ValueError:
            raise BitextFormatError(f"Sidecar value for '{key}' is not a number: '{raw}'", line_no, source)
    return values


def format_sidecar_field(values: Mapping[str, float]) -> str:
    return ";".join(f"{key}={format_number(values[key])}" for key in sorted(values))


def iter_bitext_lines(lines: Iterable[str], source: str = "<stream>") -> Iterator[BitextPair]:
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) not in (3, 4):
            raise BitextFormatError(f"Expected 3 or 4 tab-separated columns, got {len(cols)}", line_no, source)
        pair_id = cols[0].strip()
        if not pair_id:
            raise BitextFormatError("Empty id", line_no, source)
        sidecar = parse_sidecar_field(cols[3], line_no, source) if len(cols) == 4 else {}
        yield BitextPair(id=pair_id, source=cols[1], target=cols[2], sidecar=sidecar)


def read_bitext(path: Path) -> List[BitextPair]:
    with open(path, "r", encoding="utf-8") as f:
        pairs = list(iter_bitext_lines(f, source=str(path)))
    logger.debug(f"Read {len(pairs)} pairs from {path}")
    return pairs


def bitext_rows(pairs: Iterable[BitextPair]) -> Iterator[List[str]]:
    for pair in pairs:
        row = [pair.id, pair.source, pair.target]
        if pair.sidecar:
            row.append(format_sidecar_field(pair.sidecar))
        yield row


def read_sidecar_file(path: Path) -> Dict[str, Dict[str, float]]:
    """Read a sidecar TSV: ``id<TAB>key=value;...``."""
    table: Dict[str, Dict[str, float]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise BitextFormatError(f"Expected 2 tab-separated columns, got {len(cols)}", line_no, str(path))
            table.setdefault(cols[0].strip(), {}).update(parse_sidecar_field(cols[1], line_no, str(path)))
    return table


def attach_sidecars(pairs: Sequence[BitextPair], tables: Iterable[Mapping[str, Mapping[str, float]]]) -> List[BitextPair]:
    """Merge sidecar tables into pairs; later tables override earlier values."""
    merged: Dict[str, Dict[str, float]] = {}
    for table in tables:
        for pair_id, values in table.items():
            merged.setdefault(pair_id, {}).update(values)
    if not merged:
        return list(pairs)
    out = [pair.with_sidecar(merged[pair.id]) if pair.id in merged else pair for pair in pairs]
    known = {pair.id for pair in pairs}
    orphans = [pair_id for pair_id in merged if pair_id not in known]
    if orphans:
        logger.warning(f"{len(orphans)} sidecar ids have no matching pair")
    return out


def check_unique_ids(ids: Iterable[str], side: str):
    seen = set()
    duplicates = []
    for item in ids:
        if item in seen:
            duplicates.append(item)
        seen.add(item)
    if duplicates:
        raise DuplicateIdError(side, duplicates)
