from typing import Dict, Iterable, Optional


class CurationError(Exception):
    """Base exception for corpus curation errors."""
    exit_code = 3


class ConfigError(CurationError):
    """Invalid configuration or command-line usage."""
    exit_code = 1


class DataError(CurationError):
    """Input data violates a format or content contract."""
    exit_code = 2


class StageError(CurationError):
    """A pipeline stage failed. Wraps the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"Stage '{stage}' failed: {cause}")


class ConlluParseError(DataError):
    def __init__(self, message: str, line_no: int, sent_id: Optional[str] = None, source: str = "<stream>"):
        self.line_no = line_no
        self.sent_id = sent_id
        super().__init__(f"{source}: line {line_no} (sent_id={sent_id or '?'}): {message}")


class BitextFormatError(DataError):
    def __init__(self, message: str, line_no: int, source: str = "<stream>"):
        self.line_no = line_no
        super().__init__(f"{source}: line {line_no}: {message}")


class DuplicateIdError(DataError):
    def __init__(self, side: str, duplicates: Iterable[str]):
        self.side = side
        self.duplicates = sorted(set(duplicates))
        shown = ", ".join(self.duplicates[:10])
        more = f" (+{len(self.duplicates) - 10} more)" if len(self.duplicates) > 10 else ""
        super().__init__(f"Duplicate ids in {side}: {shown}{more}")


class SidecarMissingError(DataError):
    def __init__(self, key: str, pair_id: str):
        self.key = key
        self.pair_id = pair_id
        super().__init__(f"Pair '{pair_id}' has no sidecar value '{key}'")


class LanguageModelError(DataError):
    pass


class FeatureError(DataError):
    pass


class ScoreModelError(DataError):
    pass


class ClusterError(DataError):
    pass


class SamplingError(DataError):
    def __init__(self, message: str, shortfall: Optional[Dict[int, int]] = None):
        self.shortfall = dict(shortfall or {})
        if self.shortfall:
            detail = ", ".join(f"cluster {c}: short by {n}" for c, n in sorted(self.shortfall.items()))
            message = f"{message} ({detail})"
        super().__init__(message)


class ReportError(DataError):
    pass
