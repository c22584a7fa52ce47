"""Global character alignment of a transcript against a recognizer hypothesis,
plus the feedback segments a client colors in.

Scoring is the textbook match +1 / mismatch -1 / gap -1, traceback prefers
diagonal, then a gap in the hypothesis, then a gap in the reference, so the
output is deterministic. A middot marks gap columns; inputs that themselves
contain U+00B7 make the gapped rows ambiguous to read back.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .datamodel import ModelInfo

GAP = "·"

MAX_INPUT = 2000  # DP table is O(|ref|*|hyp|)

MATCH = 1
MISMATCH = -1
GAP_PENALTY = -1


def _fold(text: str) -> str:
    # per-character lowercase; multi-char expansions (e.g. dotted capital I)
    # would break column/index correspondence, so those characters stay as-is
    return "".join(c if len(c.lower()) != 1 else c.lower() for c in text)


@dataclass(frozen=True)
class Alignment:
    aligned_ref: str
    aligned_hyp: str
    score: int

    def reference_row(self) -> str:
        """The reference projected through the alignment: a character where
        the hypothesis reproduced it, a middot where it did not; columns in
        which the reference itself is gapped are dropped."""
        out = []
        for r, h in zip(self.aligned_ref, self.aligned_hyp):
            if r == GAP:
                continue
            out.append(r if r == h else GAP)
        return "".join(out)


def needleman_wunsch(reference: str, hypothesis: str) -> Alignment:
    ref = _fold(reference)
    hyp = _fold(hypothesis)
    if len(ref) > MAX_INPUT or len(hyp) > MAX_INPUT:
        raise ValueError(f"inputs capped at {MAX_INPUT} characters")
    m, n = len(ref), len(hyp)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dp[i][0] = i * GAP_PENALTY
    for j in range(1, n + 1):
        dp[0][j] = j * GAP_PENALTY
    for i in range(1, m + 1):
        row, above = dp[i], dp[i - 1]
        rc = ref[i - 1]
        for j in range(1, n + 1):
            s = MATCH if rc == hyp[j - 1] else MISMATCH
            row[j] = max(above[j - 1] + s, above[j] + GAP_PENALTY, row[j - 1] + GAP_PENALTY)
    out_ref: list[str] = []
    out_hyp: list[str] = []
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            s = MATCH if ref[i - 1] == hyp[j - 1] else MISMATCH
            if dp[i][j] == dp[i - 1][j - 1] + s:
                out_ref.append(ref[i - 1])
                out_hyp.append(hyp[j - 1])
                i -= 1
                j -= 1
                continue
        if i > 0 and dp[i][j] == dp[i - 1][j] + GAP_PENALTY:
            out_ref.append(ref[i - 1])
            out_hyp.append(GAP)
            i -= 1
            continue
        out_ref.append(GAP)
        out_hyp.append(hyp[j - 1])
        j -= 1
    return Alignment(aligned_ref="".join(reversed(out_ref)),
                     aligned_hyp="".join(reversed(out_hyp)),
                     score=dp[m][n])


@dataclass(frozen=True)
class FeedbackSegment:
    start: int  # index into the reference
    text: str  # reference characters the learner should work on
    gap_len: int
    intensity: float  # gap_len / longest gap in this sentence, in (0, 1]

    def to_jsonable(self) -> dict:
        return {"start": self.start, "text": self.text,
                "gap_len": self.gap_len, "intensity": self.intensity}


def feedback(reference: str, hypothesis: str) -> list[FeedbackSegment]:
    """One segment per maximal run of reference positions the hypothesis
    failed to reproduce; intensity is normalized so the longest run is 1.0."""
    alignment = needleman_wunsch(reference, hypothesis)
    row = alignment.reference_row()
    runs: list[tuple[int, int]] = []  # (start, length) over reference indices
    start = None
    for idx, ch in enumerate(row):
        if ch == GAP:
            if start is None:
                start = idx
        elif start is not None:
            runs.append((start, idx - start))
            start = None
    if start is not None:
        runs.append((start, len(row) - start))
    if not runs:
        return []
    longest = max(length for _, length in runs)
    return [FeedbackSegment(start=s, text=reference[s:s + length],
                            gap_len=length, intensity=length / longest)
            for s, length in runs]


def format_rows(reference: str, hypothesis: str) -> str:
    """Three-row transcript / hypothesis / alignment text block."""
    alignment = needleman_wunsch(reference, hypothesis)
    return "\n".join((
        f"Tr:   {reference}",
        f"Hyp:  {hypothesis}",
        f"Alig: {alignment.reference_row()}",
    ))


# ---------------------------------------------------------------------------
# hypothesis providers


class HypothesisProvider(Protocol):
    def transcribe(self, audio: bytes, language: str) -> str: ...


class ManualHypothesis:
    """Caller supplies the hypothesis text (the web demo's typed mode)."""

    def __init__(self, text: str):
        self.text = text

    def transcribe(self, audio: bytes, language: str) -> str:
        return self.text


class IdentityHypothesis:
    """Echoes the audio bytes as UTF-8; tests pass the reference in as audio."""

    def transcribe(self, audio: bytes, language: str) -> str:
        return audio.decode("utf-8")


def fetch_model(store, info: ModelInfo, cache_dir: Path | str) -> Path:
    """Download a model blob into a local cache; nothing here runs it."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    target = cache_dir / info.model
    if not target.exists():
        data = store.get(info.model)
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(target)
    return target
