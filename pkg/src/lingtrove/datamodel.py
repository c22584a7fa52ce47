"""Typed index hierarchy, canonical JSON serialization, and tree utilities.

Wire format is UTF-8 JSON with lexicographically sorted keys and no
insignificant whitespace. Decimals carry at most 4 fractional digits
(round-half-even, trailing zeros trimmed) so equal values always produce
byte-identical encodings and therefore equal CIDs. Unknown fields survive a
decode/encode round trip untouched.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

from .cas import Cid, is_valid_cid
from .errors import DecodeError, InvariantError, NotFoundError

LANGUAGE_CODE_RE = re.compile(r"[a-z]{2,3}(-[A-Za-z]{2,4})?$")

VALID_TAGS = ("X", "PUNCT")


# ---------------------------------------------------------------------------
# canonical JSON


def format_decimal(value) -> str:
    """Render a number with <=4 fractional digits, half-even, zeros trimmed."""
    if isinstance(value, bool):
        raise TypeError("bool is not a decimal")
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"non-finite decimal: {value!r}")
    dec = value if isinstance(value, Decimal) else Decimal(repr(value) if isinstance(value, float) else value)
    text = format(dec.quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text if text not in ("-0", "") else "0"


def round4(value: float) -> float:
    return float(format_decimal(value))


def _enc(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (float, Decimal)):
        return format_decimal(value)
    if isinstance(value, dict):
        for k in value:
            if not isinstance(k, str):
                raise TypeError(f"non-string key {k!r}")
        items = ",".join(f"{json.dumps(k, ensure_ascii=False)}:{_enc(value[k])}" for k in sorted(value))
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_enc(v) for v in value) + "]"
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


def canonical_json(value) -> bytes:
    return _enc(value).encode("utf-8")


# ---------------------------------------------------------------------------
# field coercion helpers


def _need(obj: dict, key: str, what: str):
    if key not in obj:
        raise DecodeError(f"{what}: missing field {key!r}")
    return obj[key]


def _text(value, what: str) -> str:
    if not isinstance(value, str):
        raise DecodeError(f"{what}: expected string, got {type(value).__name__}")
    return value


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DecodeError(f"{what}: expected number, got {type(value).__name__}")
    return float(value)


def _mapping(value, what: str) -> dict:
    if not isinstance(value, dict):
        raise DecodeError(f"{what}: expected object, got {type(value).__name__}")
    return value


def _array(value, what: str) -> list:
    if not isinstance(value, list):
        raise DecodeError(f"{what}: expected array, got {type(value).__name__}")
    return value


def _check_cid(value: str, what: str) -> str:
    if not isinstance(value, str) or not is_valid_cid(value):
        raise InvariantError(f"{what}: not a valid cid: {value!r}")
    return value


# ---------------------------------------------------------------------------
# index types


@dataclass
class Sentence:
    content: str
    copyright: str
    language: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.content, str) or not self.content:
            raise InvariantError("sentence content must be non-empty")
        if not isinstance(self.copyright, str):
            raise InvariantError("sentence copyright must be a string")
        if not isinstance(self.language, str) or not LANGUAGE_CODE_RE.fullmatch(self.language):
            raise InvariantError(f"bad language code: {self.language!r}")

    def to_jsonable(self) -> dict:
        return {"content": self.content, "copyright": self.copyright,
                "language": self.language, **self.extra}

    @classmethod
    def from_jsonable(cls, obj) -> "Sentence":
        obj = _mapping(obj, "sentence")
        known = {"content", "copyright", "language"}
        return cls(
            content=_text(_need(obj, "content", "sentence"), "sentence.content"),
            copyright=_text(_need(obj, "copyright", "sentence"), "sentence.copyright"),
            language=_text(_need(obj, "language", "sentence"), "sentence.language"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class SentenceMeta:
    sentence_cid: Cid
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.tags = tuple(self.tags)
        _check_cid(self.sentence_cid, "sentence meta")
        if len(self.tokens) != len(self.tags):
            raise InvariantError(
                f"{len(self.tokens)} tokens vs {len(self.tags)} tags")
        for tag in self.tags:
            if tag not in VALID_TAGS:
                raise InvariantError(f"unknown tag {tag!r}")
        for tok in self.tokens:
            if not isinstance(tok, str) or not tok:
                raise InvariantError(f"bad token {tok!r}")

    def to_jsonable(self) -> dict:
        return {"sentence_cid": self.sentence_cid, "tags": list(self.tags),
                "tokens": list(self.tokens), **self.extra}

    @classmethod
    def from_jsonable(cls, obj) -> "SentenceMeta":
        obj = _mapping(obj, "sentence meta")
        known = {"sentence_cid", "tags", "tokens"}
        return cls(
            sentence_cid=_text(_need(obj, "sentence_cid", "sentence meta"), "sentence_cid"),
            tokens=tuple(_text(t, "token") for t in _array(_need(obj, "tokens", "sentence meta"), "tokens")),
            tags=tuple(_text(t, "tag") for t in _array(_need(obj, "tags", "sentence meta"), "tags")),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class ClipEntry:
    chars_sec: float
    clip_cid: Cid
    length: float
    sentence_cid: Cid
    meta_cid: Cid
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.chars_sec = float(self.chars_sec)
        self.length = float(self.length)
        if self.chars_sec < 0:
            raise InvariantError(f"chars_sec must be >= 0, got {self.chars_sec}")
        if self.length <= 0:
            raise InvariantError(f"length must be > 0, got {self.length}")
        for name in ("clip_cid", "sentence_cid", "meta_cid"):
            _check_cid(getattr(self, name), name)

    def to_jsonable(self) -> dict:
        return {"chars_sec": self.chars_sec, "clip_cid": self.clip_cid,
                "length": self.length, "meta_cid": self.meta_cid,
                "sentence_cid": self.sentence_cid, **self.extra}

    @classmethod
    def from_jsonable(cls, obj) -> "ClipEntry":
        obj = _mapping(obj, "clip entry")
        known = {"chars_sec", "clip_cid", "length", "meta_cid", "sentence_cid"}
        return cls(
            chars_sec=_number(_need(obj, "chars_sec", "clip entry"), "chars_sec"),
            clip_cid=_text(_need(obj, "clip_cid", "clip entry"), "clip_cid"),
            length=_number(_need(obj, "length", "clip entry"), "length"),
            sentence_cid=_text(_need(obj, "sentence_cid", "clip entry"), "sentence_cid"),
            meta_cid=_text(_need(obj, "meta_cid", "clip entry"), "meta_cid"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class LanguageIndex:
    clips: tuple[ClipEntry, ...] = ()

    def __post_init__(self):
        self.clips = tuple(self.clips)
        for clip in self.clips:
            if not isinstance(clip, ClipEntry):
                raise InvariantError("language index holds ClipEntry values")

    def to_jsonable(self) -> list:
        return [c.to_jsonable() for c in self.clips]

    @classmethod
    def from_jsonable(cls, obj) -> "LanguageIndex":
        return cls(clips=tuple(ClipEntry.from_jsonable(c) for c in _array(obj, "language index")))


@dataclass
class ModelInfo:
    format: str
    licence: str
    model: Cid
    src: str
    type: str = "acoustic"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.type != "acoustic":
            raise InvariantError(f"unsupported model type {self.type!r}")
        _check_cid(self.model, "model")

    def to_jsonable(self) -> dict:
        return {"format": self.format, "licence": self.licence, "model": self.model,
                "src": self.src, "type": self.type, **self.extra}

    @classmethod
    def from_jsonable(cls, obj) -> "ModelInfo":
        obj = _mapping(obj, "model info")
        known = {"format", "licence", "model", "src", "type"}
        return cls(
            format=_text(_need(obj, "format", "model info"), "format"),
            licence=_text(_need(obj, "licence", "model info"), "licence"),
            model=_text(_need(obj, "model", "model info"), "model"),
            src=_text(_need(obj, "src", "model info"), "src"),
            type=_text(_need(obj, "type", "model info"), "type"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class LanguageMeta:
    display: str
    alternatives: dict[str, tuple[str, ...]] = field(default_factory=dict)
    models: tuple[Cid, ...] | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.display, str):
            raise InvariantError("display must be a string")
        self.alternatives = {k: tuple(v) for k, v in self.alternatives.items()}
        for key, repls in self.alternatives.items():
            if not isinstance(key, str) or len(key) != 1:
                raise InvariantError(f"alternatives key must be one character: {key!r}")
            for r in repls:
                if not isinstance(r, str):
                    raise InvariantError(f"alternative for {key!r} must be a string")
        if self.models is not None:
            self.models = tuple(self.models)
            for cid in self.models:
                _check_cid(cid, "models entry")

    def to_jsonable(self) -> dict:
        obj = {"alternatives": {k: list(v) for k, v in self.alternatives.items()},
               "display": self.display, **self.extra}
        if self.models is not None:
            obj["models"] = list(self.models)
        return obj

    @classmethod
    def from_jsonable(cls, obj) -> "LanguageMeta":
        obj = _mapping(obj, "language meta")
        known = {"alternatives", "display", "models"}
        alts = _mapping(obj.get("alternatives", {}), "alternatives")
        models = obj.get("models")
        return cls(
            display=_text(_need(obj, "display", "language meta"), "display"),
            alternatives={k: tuple(_text(r, "alternative") for r in _array(v, f"alternatives[{k!r}]"))
                          for k, v in alts.items()},
            models=None if models is None else tuple(
                _text(m, "model cid") for m in _array(models, "models")),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class LanguageEntry:
    cids: tuple[Cid, ...]
    meta: Cid
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cids = tuple(self.cids)
        for cid in self.cids:
            _check_cid(cid, "language index cid")
        _check_cid(self.meta, "meta cid")

    def to_jsonable(self) -> dict:
        return {"cids": list(self.cids), "meta": self.meta, **self.extra}

    @classmethod
    def from_jsonable(cls, obj) -> "LanguageEntry":
        obj = _mapping(obj, "language entry")
        known = {"cids", "meta"}
        return cls(
            cids=tuple(_text(c, "cid") for c in _array(_need(obj, "cids", "language entry"), "cids")),
            meta=_text(_need(obj, "meta", "language entry"), "meta"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass
class RootIndex:
    entries: dict[str, LanguageEntry] = field(default_factory=dict)

    def __post_init__(self):
        for code, entry in self.entries.items():
            if not isinstance(code, str) or not LANGUAGE_CODE_RE.fullmatch(code):
                raise InvariantError(f"bad language code: {code!r}")
            if not isinstance(entry, LanguageEntry):
                raise InvariantError("root entries hold LanguageEntry values")

    def to_jsonable(self) -> dict:
        return {code: entry.to_jsonable() for code, entry in self.entries.items()}

    @classmethod
    def from_jsonable(cls, obj) -> "RootIndex":
        obj = _mapping(obj, "root index")
        return cls(entries={code: LanguageEntry.from_jsonable(v) for code, v in obj.items()})


# ---------------------------------------------------------------------------
# encode / decode


def encode(value) -> bytes:
    return canonical_json(value.to_jsonable())


def decode(data: bytes, cls):
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"not valid JSON: {exc}") from exc
    return cls.from_jsonable(obj)


# ---------------------------------------------------------------------------
# tree storage and validation


@dataclass
class LanguageTree:
    """Unstored per-language subtree: metadata plus difficulty-ordered buckets."""

    meta: LanguageMeta
    buckets: list[LanguageIndex]
    models: list[ModelInfo] | None = None


def store_tree(store, languages: dict[str, LanguageTree]) -> Cid:
    """Store buckets, metadata, then the root; children before parents.

    Clip/sentence/meta blocks referenced from ClipEntries must already be in
    the store (or be stored separately); only index objects are written here.
    Empty buckets are dropped so a published index is never empty.
    """
    entries: dict[str, LanguageEntry] = {}
    for code, tree in languages.items():
        cids = [store.put(encode(b)) for b in tree.buckets if b.clips]
        if not cids:
            raise InvariantError(f"language {code!r} has no non-empty bucket")
        meta = tree.meta
        if tree.models is not None:
            model_cids = tuple(store.put(encode(m)) for m in tree.models)
            meta = LanguageMeta(display=meta.display, alternatives=dict(meta.alternatives),
                                models=model_cids, extra=dict(meta.extra))
        meta_cid = store.put(encode(meta))
        entries[code] = LanguageEntry(cids=tuple(cids), meta=meta_cid)
    return store.put(encode(RootIndex(entries=entries)))


@dataclass
class ValidationIssue:
    path: str
    kind: str  # unresolvable | decode | invariant | inconsistency
    detail: str

    def __str__(self):
        return f"{self.kind}\t{self.path}\t{self.detail}"


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.issues

    def add(self, path: str, kind: str, detail: str) -> None:
        self.issues.append(ValidationIssue(path, kind, detail))


def _fetch(store, cid: Cid, cls, path: str, report: ValidationReport):
    try:
        data = store.get(cid)
    except NotFoundError:
        report.add(path, "unresolvable", f"missing block {cid}")
        return None
    except Exception as exc:  # integrity / backend
        report.add(path, "unresolvable", str(exc))
        return None
    if cls is bytes:
        return data
    try:
        return decode(data, cls)
    except (DecodeError, InvariantError) as exc:
        report.add(path, "decode", str(exc))
        return None


def _strip_ws(text: str) -> str:
    return "".join(text.split())


def validate_tree(store, root_cid: Cid) -> ValidationReport:
    """Walk the whole hierarchy; every problem becomes a report entry."""
    report = ValidationReport()
    root = _fetch(store, root_cid, RootIndex, "root", report)
    if root is None:
        return report
    for code, entry in sorted(root.entries.items()):
        if not entry.cids:
            report.add(f"{code}", "invariant", "published root entry has no index cids")
        meta = _fetch(store, entry.meta, LanguageMeta, f"{code}/meta", report)
        if meta is not None and meta.models:
            for i, mcid in enumerate(meta.models):
                _fetch(store, mcid, ModelInfo, f"{code}/meta/models[{i}]", report)
        for b, bucket_cid in enumerate(entry.cids):
            index = _fetch(store, bucket_cid, LanguageIndex, f"{code}/bucket[{b}]", report)
            if index is None:
                continue
            if not index.clips:
                report.add(f"{code}/bucket[{b}]", "invariant", "published index is empty")
            for i, clip in enumerate(index.clips):
                path = f"{code}/bucket[{b}]/clip[{i}]"
                _fetch(store, clip.clip_cid, bytes, f"{path}/audio", report)
                sentence = _fetch(store, clip.sentence_cid, Sentence, f"{path}/sentence", report)
                meta_obj = _fetch(store, clip.meta_cid, SentenceMeta, f"{path}/meta", report)
                if sentence is not None:
                    drift = abs(clip.chars_sec * clip.length - len(sentence.content))
                    if drift >= 0.5:
                        report.add(path, "inconsistency",
                                   f"chars_sec*length off by {drift:.3f} from {len(sentence.content)} chars")
                if meta_obj is not None and meta_obj.sentence_cid != clip.sentence_cid:
                    report.add(f"{path}/meta", "inconsistency",
                               "meta sentence_cid differs from clip sentence_cid")
                if meta_obj is not None and sentence is not None:
                    if _strip_ws("".join(meta_obj.tokens)) != _strip_ws(sentence.content):
                        report.add(f"{path}/meta", "inconsistency",
                                   "tokens do not reassemble the sentence")
    return report


def merge_roots(a: RootIndex, b: RootIndex) -> RootIndex:
    """Union of languages; shared languages concatenate bucket cids (a first,
    exact duplicates dropped) and keep a's metadata."""
    entries: dict[str, LanguageEntry] = {}
    for code, entry in a.entries.items():
        if code in b.entries:
            seen: dict[str, None] = {}
            for cid in (*entry.cids, *b.entries[code].cids):
                seen.setdefault(cid)
            entries[code] = LanguageEntry(cids=tuple(seen), meta=entry.meta,
                                          extra=dict(entry.extra))
        else:
            entries[code] = entry
    for code, entry in b.entries.items():
        if code not in a.entries:
            entries[code] = entry
    return RootIndex(entries=entries)
