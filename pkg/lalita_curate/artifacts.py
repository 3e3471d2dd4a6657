import io
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger

from lalita_curate.utils import canonical_json, sha256_file, sha256_text

INDEX_NAME = "artifacts.json"


class ArtifactWriter:
    """
    Writes stage artifacts under one output directory.
    Every write is atomic (temp file + rename). The index file records, per
    stage, the input fingerprint and the sha256 of each output so a stage can
    be resumed when nothing it depends on has changed.
    """

    def __init__(self, output_dir: Path, config_hash: str):
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.index_path = self.output_dir / INDEX_NAME
        self.index = self._load_index()

    def _load_index(self) -> Dict[str, Any]:
        empty = {"config_hash": self.config_hash, "stages": {}}
        if not self.index_path.exists():
            return empty
        try:
            with open(self.index_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except json.JSONDecodeError:
            logger.warning(f"Artifact index {self.index_path} is not valid JSON. Starting fresh.")
            return empty
        if not isinstance(loaded, dict) or not isinstance(loaded.get("stages"), dict):
            logger.warning(f"Artifact index {self.index_path} has an unexpected layout. Starting fresh.")
            return empty
        loaded["config_hash"] = self.config_hash
        return loaded

    def path(self, relative: str) -> Path:
        return self.output_dir / relative

    def _atomic_write(self, relative: str, data: bytes) -> Path:
        path = self.path(relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
        logger.debug(f"Wrote {path}")
        return path

    def save_json(self, relative: str, payload: Dict[str, Any], schema_hash: Optional[str] = None) -> Path:
        """Write a JSON object stamped with the config hash (and schema hash when given)."""
        data = dict(payload)
        data["config_hash"] = self.config_hash
        if schema_hash is not None:
            data["schema_hash"] = schema_hash
        return self._atomic_write(relative, canonical_json(data).encode("utf-8"))

    def save_tsv(self, relative: str, rows: Iterable[Sequence[str]]) -> Path:
        lines = []
        for row in rows:
            for cell in row:
                if "\t" in cell or "\n" in cell:
                    raise ValueError(f"TSV cell contains a tab or newline: {cell!r}")
            lines.append("\t".join(row) + "\n")
        return self._atomic_write(relative, "".join(lines).encode("utf-8"))

    def save_npy(self, relative: str, matrix: np.ndarray) -> Path:
        buffer = io.BytesIO()
        np.save(buffer, np.ascontiguousarray(matrix, dtype=np.float64), allow_pickle=False)
        return self._atomic_write(relative, buffer.getvalue())

    def load_json(self, relative: str) -> Dict[str, Any]:
        with open(self.path(relative), "r", encoding="utf-8") as f:
            return json.load(f)

    def read_tsv(self, relative: str) -> List[List[str]]:
        with open(self.path(relative), "r", encoding="utf-8") as f:
            return [line.rstrip("\n").split("\t") for line in f if line.strip()]

    def file_hash(self, path: Path) -> str:
        return sha256_file(path)

    def fingerprint(self, stage: str, section: str, inputs: Sequence[Path]) -> str:
        """sha256 over the stage name, its config section hash and the content of its inputs."""
        payload = {
            "stage": stage,
            "section": section,
            "inputs": [self.file_hash(p) for p in inputs],
        }
        return sha256_text(canonical_json(payload))

    def is_fresh(self, stage: str, fingerprint: str) -> bool:
        entry = self.index["stages"].get(stage)
        if not entry or entry.get("fingerprint") != fingerprint:
            return False
        for relative, digest in entry.get("outputs", {}).items():
            path = self.path(relative)
            if not path.exists() or self.file_hash(path) != digest:
                logger.info(f"Artifact {relative} of stage '{stage}' is missing or changed")
                return False
        return True

    def record(self, stage: str, fingerprint: str, outputs: Iterable[Path], schema_hash: Optional[str] = None):
        """Register a finished stage and rewrite the index."""
        entry = {
            "fingerprint": fingerprint,
            "config_hash": self.config_hash,
            "outputs": {
                p.relative_to(self.output_dir).as_posix(): self.file_hash(p)
                for p in outputs
            },
        }
        if schema_hash is not None:
            entry["schema_hash"] = schema_hash
        self.index["stages"][stage] = entry
        self._atomic_write(INDEX_NAME, canonical_json(self.index).encode("utf-8"))

    def outputs_of(self, stage: str) -> List[str]:
        return sorted(self.index["stages"].get(stage, {}).get("outputs", {}))
