"""Build language indices from a tab-separated corpus release.

Input is the conventional speech-corpus layout: a TSV of transcripts with a
header naming at least `path` and `sentence`, next to a directory of MP3
clips. Clips are capped, measured (characters per second of audio), and
split into ten equal-population difficulty buckets.
"""

from __future__ import annotations

import io
import logging
import random
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .datamodel import (
    ClipEntry,
    LanguageIndex,
    LanguageMeta,
    LanguageTree,
    Sentence,
    SentenceMeta,
    encode,
    round4,
)
from .errors import CorpusError, UnsupportedAudioError

log = logging.getLogger(__name__)

BUCKET_COUNT = 10
DEFAULT_CAP = 10_000


# ---------------------------------------------------------------------------
# corpus parsing


@dataclass
class CorpusRow:
    clip_path: Path
    sentence: str
    language: str


@dataclass
class ParseResult:
    rows: list[CorpusRow]
    skipped: int = 0


def parse_corpus(tsv, clips_dir: Path | str, language: str) -> ParseResult:
    """Read transcript rows; rows with an empty sentence, a missing clip file,
    or a malformed line are skipped and counted."""
    clips_dir = Path(clips_dir)
    if isinstance(tsv, (str, Path)):
        stream = open(tsv, "r", encoding="utf-8")
    elif isinstance(tsv, (bytes, bytearray)):
        stream = io.StringIO(tsv.decode("utf-8"))
    else:
        stream = tsv
    with stream:
        header_line = stream.readline()
        if not header_line:
            raise CorpusError("empty corpus file")
        header = header_line.rstrip("\r\n").split("\t")
        try:
            path_col = header.index("path")
            sent_col = header.index("sentence")
        except ValueError:
            raise CorpusError(f"header must name 'path' and 'sentence' columns, got {header}") from None
        rows: list[CorpusRow] = []
        skipped = 0
        for lineno, line in enumerate(stream, start=2):
            cells = line.rstrip("\r\n").split("\t")
            if len(cells) < len(header):
                log.warning("line %d: %d cells, expected %d; skipped", lineno, len(cells), len(header))
                skipped += 1
                continue
            sentence = cells[sent_col].strip()
            clip_path = clips_dir / cells[path_col]
            if not sentence:
                skipped += 1
                continue
            if not clip_path.is_file():
                log.warning("line %d: clip %s missing; skipped", lineno, clip_path)
                skipped += 1
                continue
            rows.append(CorpusRow(clip_path=clip_path, sentence=sentence, language=language))
    return ParseResult(rows=rows, skipped=skipped)


# ---------------------------------------------------------------------------
# MPEG audio duration

_SAMPLE_RATES = {
    3: (44100, 48000, 32000),  # MPEG1
    2: (22050, 24000, 16000),  # MPEG2
    0: (11025, 12000, 8000),  # MPEG2.5
}
_BITRATES_V1 = {
    3: (0, 32, 64, 96, 128, 160, 192, 224, 256, 288, 320, 352, 384, 416, 448),  # layer I
    2: (0, 32, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320, 384),  # layer II
    1: (0, 32, 40, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320),  # layer III
}
_BITRATES_V2 = {
    3: (0, 32, 48, 56, 64, 80, 96, 112, 128, 144, 160, 176, 192, 224, 256),
    2: (0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160),
    1: (0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160),
}


def _samples_per_frame(version_bits: int, layer_bits: int) -> int:
    if layer_bits == 3:  # layer I
        return 384
    if layer_bits == 2:  # layer II
        return 1152
    return 1152 if version_bits == 3 else 576  # layer III


def _id3v2_size(data: bytes, i: int) -> int:
    # "ID3" vv f ssss, size is syncsafe and excludes the 10-byte header
    if len(data) - i < 10 or data[i:i + 3] != b"ID3":
        return 0
    flags = data[i + 5]
    size = ((data[i + 6] & 0x7F) << 21 | (data[i + 7] & 0x7F) << 14
            | (data[i + 8] & 0x7F) << 7 | (data[i + 9] & 0x7F))
    return 10 + size + (10 if flags & 0x10 else 0)


def mp3_duration(data: bytes) -> float:
    """Sum samples-per-frame / sample-rate over every MPEG audio frame.

    Frame headers are scanned byte-by-byte, so CBR and VBR streams come out
    the same way; ID3v2 tags are skipped. Raises when no frame decodes.
    """
    i = 0
    n = len(data)
    samples_by_rate: dict[int, int] = {}
    frames = 0
    while True:
        skip = _id3v2_size(data, i)
        if not skip:
            break
        i += skip
    while i + 4 <= n:
        if data[i] != 0xFF or (data[i + 1] & 0xE0) != 0xE0:
            i += 1
            continue
        b1, b2 = data[i + 1], data[i + 2]
        version_bits = (b1 >> 3) & 0x3
        layer_bits = (b1 >> 1) & 0x3
        bitrate_idx = (b2 >> 4) & 0xF
        rate_idx = (b2 >> 2) & 0x3
        padding = (b2 >> 1) & 0x1
        if version_bits == 1 or layer_bits == 0 or bitrate_idx in (0, 15) or rate_idx == 3:
            i += 1  # reserved/free-format header; resync
            continue
        table = _BITRATES_V1 if version_bits == 3 else _BITRATES_V2
        bitrate = table[layer_bits][bitrate_idx] * 1000
        rate = _SAMPLE_RATES[version_bits][rate_idx]
        spf = _samples_per_frame(version_bits, layer_bits)
        if layer_bits == 3:  # layer I counts padding in 4-byte slots
            frame_len = (12 * bitrate // rate + padding) * 4
        else:
            frame_len = spf // 8 * bitrate // rate + padding
        if frame_len <= 4:
            i += 1
            continue
        samples_by_rate[rate] = samples_by_rate.get(rate, 0) + spf
        frames += 1
        i += frame_len
    if frames == 0:
        raise UnsupportedAudioError("no MPEG audio frame found")
    # one division per sample rate keeps uniform streams numerically exact
    return sum(count / rate for rate, count in sorted(samples_by_rate.items()))


# ---------------------------------------------------------------------------
# difficulty metric and text processing


def chars_per_sec(sentence: str, length: float) -> float:
    """Unicode scalar count divided by seconds, 4 decimals, half-even."""
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    ratio = Decimal(len(sentence)) / Decimal(repr(float(length)))
    return float(ratio.quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _is_punct_or_symbol(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def tokenize(sentence: str) -> list[str]:
    """Split on whitespace, then peel leading/trailing punctuation characters
    into their own tokens. Concatenation preserves every non-space character."""
    tokens: list[str] = []
    for chunk in sentence.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and _is_punct(chunk[0]):
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punct(chunk[-1]):
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


def tag_tokens(tokens: list[str]) -> list[str]:
    """"PUNCT" when every character is punctuation or symbol, else "X"."""
    return ["PUNCT" if tok and all(_is_punct_or_symbol(c) for c in tok) else "X"
            for tok in tokens]


# ---------------------------------------------------------------------------
# bucketing


@dataclass
class DifficultyBuckets:
    buckets: list[list[ClipEntry]] = field(default_factory=lambda: [[] for _ in range(BUCKET_COUNT)])

    def all_clips(self) -> list[ClipEntry]:
        return [c for b in self.buckets for c in b]


def partition_by_difficulty(clips: list[ClipEntry], buckets: int = BUCKET_COUNT) -> DifficultyBuckets:
    """Equal-population split on chars_sec, ascending; equal values at a
    boundary stay in the lower bucket."""
    ordered = sorted(clips, key=lambda c: c.chars_sec)
    n = len(ordered)
    base, rem = divmod(n, buckets)
    cuts = [0]
    for k in range(buckets):
        cuts.append(cuts[-1] + base + (1 if k < rem else 0))
    for idx in range(1, buckets):
        cut = cuts[idx]
        while 0 < cut < n and ordered[cut].chars_sec == ordered[cut - 1].chars_sec:
            cut += 1
        cuts[idx] = max(cut, cuts[idx - 1])
    result = DifficultyBuckets(buckets=[ordered[cuts[k]:cuts[k + 1]] for k in range(buckets)])
    return result


@dataclass
class BucketBuild:
    buckets: DifficultyBuckets
    skipped: int = 0


def _process_row(row: CorpusRow, store, copyright: str) -> ClipEntry:
    audio = row.clip_path.read_bytes()
    length = round4(mp3_duration(audio))
    sentence = Sentence(content=row.sentence, copyright=copyright, language=row.language)
    sentence_cid = store.put(encode(sentence))
    tokens = tokenize(row.sentence)
    meta = SentenceMeta(sentence_cid=sentence_cid, tokens=tuple(tokens),
                        tags=tuple(tag_tokens(tokens)))
    return ClipEntry(
        chars_sec=chars_per_sec(row.sentence, length),
        clip_cid=store.put(audio),
        length=length,
        sentence_cid=sentence_cid,
        meta_cid=store.put(encode(meta)),
    )


def build_buckets(rows: list[CorpusRow], store, cap: int = DEFAULT_CAP,
                  seed: int | None = None, copyright: str = "CC0-1.0",
                  workers: int | None = None) -> BucketBuild:
    """Select up to `cap` rows (seedable-random when over the cap), store each
    clip's audio/sentence/metadata, and partition the entries into buckets."""
    if not rows:
        raise CorpusError("no corpus rows to ingest")
    if len(rows) > cap:
        rows = random.Random(seed).sample(rows, cap)
    skipped = 0
    clips: list[ClipEntry] = []

    def safe(row: CorpusRow) -> ClipEntry | None:
        try:
            return _process_row(row, store, copyright)
        except (OSError, UnsupportedAudioError) as exc:
            log.warning("clip %s skipped: %s", row.clip_path, exc)
            return None

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, rows))
    else:
        results = [safe(row) for row in rows]
    for entry in results:
        if entry is None:
            skipped += 1
        else:
            clips.append(entry)
    if not clips:
        raise CorpusError("every selected clip was unreadable")
    return BucketBuild(buckets=partition_by_difficulty(clips), skipped=skipped)


def language_tree(build: BucketBuild, display: str,
                  alternatives: dict[str, tuple[str, ...]] | None = None) -> LanguageTree:
    meta = LanguageMeta(display=display, alternatives=alternatives or {})
    return LanguageTree(
        meta=meta,
        buckets=[LanguageIndex(clips=tuple(b)) for b in build.buckets.buckets],
    )
