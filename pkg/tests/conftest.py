import pytest

from lingtrove.cas import LocalStore, NameRegistry
from lingtrove.datamodel import (
    ClipEntry,
    LanguageIndex,
    LanguageMeta,
    LanguageTree,
    Sentence,
    SentenceMeta,
    encode,
    store_tree,
)
from lingtrove.ingest import chars_per_sec, mp3_duration, round4, tag_tokens, tokenize

from mp3gen import clip_of_seconds


@pytest.fixture
def store(tmp_path):
    return LocalStore(tmp_path / "store")


@pytest.fixture
def registry(tmp_path):
    return NameRegistry(tmp_path / "store" / "names.log")


def put_clip(store, text: str, seconds: float, language: str = "br",
             copyright: str = "CC0-1.0") -> ClipEntry:
    """Store audio + sentence + metadata for one clip and return its entry.

    The frame payload byte is derived from the text so distinct sentences get
    distinct audio blocks (0xFF excluded to keep payloads free of sync bytes).
    """
    audio = clip_of_seconds(seconds, fill=sum(text.encode()) % 0xFE)
    length = round4(mp3_duration(audio))
    sentence = Sentence(content=text, copyright=copyright, language=language)
    sentence_cid = store.put(encode(sentence))
    tokens = tokenize(text)
    meta = SentenceMeta(sentence_cid=sentence_cid, tokens=tuple(tokens),
                        tags=tuple(tag_tokens(tokens)))
    return ClipEntry(
        chars_sec=chars_per_sec(text, length),
        clip_cid=store.put(audio),
        length=length,
        sentence_cid=sentence_cid,
        meta_cid=store.put(encode(meta)),
    )


def make_root(store, sentences: list[tuple[str, float]], language: str = "br",
              display: str = "Brezhoneg",
              alternatives: dict | None = None) -> tuple[str, list[ClipEntry]]:
    """Single-bucket root for game/service tests."""
    clips = [put_clip(store, text, seconds, language) for text, seconds in sentences]
    tree = LanguageTree(
        meta=LanguageMeta(display=display, alternatives=alternatives or {}),
        buckets=[LanguageIndex(clips=tuple(clips))],
    )
    return store_tree(store, {language: tree}), clips


BRETON_SENTENCES = [
    ("Gouzout a rit ar pezh zo c'hoarvezet gantañ?", 4.8),
    ("Me a gar ar mor hag an avel.", 4.8),
    ("An heol a bar war ar menez uhel.", 4.8),
    ("Deuet eo ar goañv gant an erc'h gwenn.", 4.8),
    ("Ar vugale a c'hoari er porzh bras.", 4.8),
    ("Klevet em eus ar c'hleier o seniñ.", 4.8),
    ("Hiziv eo brav an amzer er vro.", 4.8),
]
