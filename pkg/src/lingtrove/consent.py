"""Consent-preserving contribution layer.

A session key (256-bit AES-GCM) is the unit of consent: clips contributed
under one key live in one encrypted clip list, and publishing or withholding
the key in the identity's root grants or revokes use of all of them at once.
The published root maps key fingerprints to per-session encrypted language
indices; an optional "keys" entry carries the JSON Web Key copies that are
currently consented.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import secrets
import stat
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import ingest
from .cas import Cid, NameKey, NameRegistry
from .datamodel import (
    ClipEntry,
    LanguageIndex,
    RootIndex,
    Sentence,
    canonical_json,
    decode,
    encode,
    round4,
)
from .errors import (
    ConsentError,
    DecodeError,
    IntegrityError,
    NotFoundError,
    WrongKeyError,
)
from .wordlist import words_for_fingerprint

KEY_BITS = 256
IV_BYTES = 12
ALG = {"length": KEY_BITS, "name": "AES-GCM"}

_FPR_HEX = 40


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise DecodeError(f"bad base64: {exc}") from exc


def _b64url_nopad(raw: bytes) -> str:
    return base64.urlsafe_b64encode(raw).decode("ascii").rstrip("=")


def _unb64url_nopad(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


# ---------------------------------------------------------------------------
# session keys


@dataclass(frozen=True)
class SessionKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BITS // 8:
            raise ValueError(f"session key must be {KEY_BITS // 8} bytes")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha1(self.key).hexdigest()

    @property
    def words(self) -> list[str]:
        return words_for_fingerprint(self.fingerprint)

    def to_jwk(self) -> dict:
        return {"alg": "A256GCM", "k": _b64url_nopad(self.key), "kty": "oct"}

    @classmethod
    def from_jwk(cls, jwk: dict) -> "SessionKey":
        if not isinstance(jwk, dict) or jwk.get("kty") != "oct" or "k" not in jwk:
            raise DecodeError(f"not a symmetric JWK: {jwk!r}")
        return cls(key=_unb64url_nopad(jwk["k"]))


def generate_session_key() -> SessionKey:
    return SessionKey(key=secrets.token_bytes(KEY_BITS // 8))


# ---------------------------------------------------------------------------
# encrypted objects


@dataclass(frozen=True)
class EncryptedObject:
    keyfpr: str
    iv: bytes
    encdata: bytes  # ciphertext || 16-byte auth tag

    def to_jsonable(self) -> dict:
        return {"alg": dict(ALG), "encdata": _b64(self.encdata),
                "iv": _b64(self.iv), "keyfpr": self.keyfpr}

    @classmethod
    def from_jsonable(cls, obj) -> "EncryptedObject":
        if not isinstance(obj, dict):
            raise DecodeError("encrypted object must be a JSON object")
        alg = obj.get("alg")
        if not isinstance(alg, dict) or alg.get("name") != ALG["name"] or alg.get("length") != ALG["length"]:
            raise DecodeError(f"unsupported alg: {alg!r}")
        for key in ("keyfpr", "iv", "encdata"):
            if key not in obj:
                raise DecodeError(f"encrypted object missing {key!r}")
        return cls(keyfpr=obj["keyfpr"], iv=_unb64(obj["iv"]), encdata=_unb64(obj["encdata"]))


def encrypt(key: SessionKey, plaintext: bytes) -> EncryptedObject:
    iv = os.urandom(IV_BYTES)  # fresh per call; never reused under a key
    encdata = AESGCM(key.key).encrypt(iv, plaintext, None)
    return EncryptedObject(keyfpr=key.fingerprint, iv=iv, encdata=encdata)


def decrypt(key: SessionKey, obj: EncryptedObject) -> bytes:
    if obj.keyfpr != key.fingerprint:
        raise WrongKeyError(f"object is for key {obj.keyfpr}, not {key.fingerprint}")
    try:
        return AESGCM(key.key).decrypt(obj.iv, obj.encdata, None)
    except InvalidTag as exc:
        raise IntegrityError("ciphertext failed authentication") from exc


def store_encrypted(store, obj: EncryptedObject) -> Cid:
    return store.put(canonical_json(obj.to_jsonable()))


def load_encrypted(store, cid: Cid) -> EncryptedObject:
    data = store.get(cid)
    try:
        return EncryptedObject.from_jsonable(json.loads(data.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"block {cid} is not an encrypted object: {exc}") from exc


# ---------------------------------------------------------------------------
# encrypted roots


@dataclass
class EncryptedRoot:
    sessions: dict[str, Cid] = field(default_factory=dict)  # fingerprint -> inner root cid
    keys: dict[str, SessionKey] = field(default_factory=dict)  # published subset

    def __post_init__(self):
        for fpr in self.keys:
            if fpr not in self.sessions:
                raise DecodeError(f"published key {fpr} has no session entry")

    def to_jsonable(self) -> dict:
        obj: dict = {fpr: cid for fpr, cid in self.sessions.items()}
        if self.keys:
            obj["keys"] = {fpr: key.to_jwk() for fpr, key in self.keys.items()}
        return obj

    @classmethod
    def from_jsonable(cls, obj) -> "EncryptedRoot":
        if not isinstance(obj, dict):
            raise DecodeError("encrypted root must be a JSON object")
        sessions: dict[str, Cid] = {}
        keys: dict[str, SessionKey] = {}
        for k, v in obj.items():
            if k == "keys":
                if not isinstance(v, dict):
                    raise DecodeError("keys entry must be an object")
                keys = {fpr: SessionKey.from_jwk(jwk) for fpr, jwk in v.items()}
            elif _looks_like_fingerprint(k):
                if not isinstance(v, str):
                    raise DecodeError(f"session {k} target must be a cid string")
                sessions[k] = v
            else:
                raise DecodeError(f"unexpected encrypted-root key {k!r}")
        return cls(sessions=sessions, keys=keys)


def _looks_like_fingerprint(text: str) -> bool:
    if len(text) != _FPR_HEX:
        return False
    return all(c in "0123456789abcdef" for c in text)


def is_encrypted_root(obj) -> bool:
    """Encrypted roots hold a "keys" entry and/or fingerprint keys; classic
    roots are keyed by language codes, which are far shorter."""
    if not isinstance(obj, dict) or not obj:
        return False
    if "keys" in obj:
        return True
    return all(_looks_like_fingerprint(k) for k in obj)


# ---------------------------------------------------------------------------
# identities


class Identity:
    """Name keypair plus the locally held (still consented) session keys."""

    def __init__(self, directory: Path, name_key: NameKey,
                 session_keys: dict[str, SessionKey] | None = None,
                 active: str | None = None):
        self.directory = Path(directory)
        self.name_key = name_key
        self.session_keys = dict(session_keys or {})
        self.active = active

    @property
    def name(self) -> str:
        return self.name_key.name

    def active_key(self) -> SessionKey:
        if self.active is None or self.active not in self.session_keys:
            raise ConsentError("no active session key; roll one first")
        return self.session_keys[self.active]

    def save(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        os.chmod(self.directory, stat.S_IRWXU)
        key_path = self.directory / "name.key"
        _write_private(key_path, self.name_key.private_bytes().hex().encode("ascii"))
        keystore = {
            "active": self.active,
            "keys": {fpr: key.to_jwk() for fpr, key in self.session_keys.items()},
        }
        _write_private(self.directory / "keystore.json",
                       json.dumps(keystore, indent=2, sort_keys=True).encode("utf-8"))

    @classmethod
    def load(cls, directory: Path | str) -> "Identity":
        directory = Path(directory)
        try:
            name_key = NameKey.from_private_bytes(
                bytes.fromhex((directory / "name.key").read_text("ascii").strip()))
            keystore = json.loads((directory / "keystore.json").read_text("utf-8"))
        except FileNotFoundError as exc:
            raise NotFoundError(f"no identity at {directory}") from exc
        keys = {fpr: SessionKey.from_jwk(jwk) for fpr, jwk in keystore.get("keys", {}).items()}
        return cls(directory=directory, name_key=name_key,
                   session_keys=keys, active=keystore.get("active"))


def _write_private(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, data)
    finally:
        os.close(fd)
    os.replace(tmp, path)


def identities_dir(base_dir: Path | str) -> Path:
    return Path(base_dir) / "identities"


def create_identity(base_dir: Path | str) -> Identity:
    """Generate a name keypair plus a first session key and persist both."""
    name_key = NameKey.generate()
    first = generate_session_key()
    identity = Identity(
        directory=identities_dir(base_dir) / name_key.name,
        name_key=name_key,
        session_keys={first.fingerprint: first},
        active=first.fingerprint,
    )
    identity.save()
    return identity


def load_identity(base_dir: Path | str, name: str) -> Identity:
    return Identity.load(identities_dir(base_dir) / name)


def list_identities(base_dir: Path | str) -> list[str]:
    root = identities_dir(base_dir)
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / "name.key").is_file())


def roll_key(identity: Identity) -> SessionKey:
    """Start a new consent session; earlier sessions stay as they are."""
    key = generate_session_key()
    identity.session_keys[key.fingerprint] = key
    identity.active = key.fingerprint
    identity.save()
    return key


# ---------------------------------------------------------------------------
# contribution / revocation / consumption


def _load_current_root(store, registry: NameRegistry, name: str) -> EncryptedRoot:
    try:
        cid = registry.resolve(name)
    except NotFoundError:
        return EncryptedRoot()
    try:
        obj = json.loads(store.get(cid).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"published root {cid} is not JSON: {exc}") from exc
    if obj and not is_encrypted_root(obj):
        raise ConsentError(
            f"identity {name} currently publishes a classic root index; "
            "contributions need their own identity")
    return EncryptedRoot.from_jsonable(obj)


def _load_inner_root(store, cid: Cid) -> dict[str, dict]:
    """Per-session root: {language: {"cids": [cid-of-encrypted-clip-list]}}."""
    try:
        obj = json.loads(store.get(cid).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"session root {cid} is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("session root must be a JSON object")
    return obj


def _publish_root(store, registry: NameRegistry, identity: Identity,
                  root: EncryptedRoot) -> Cid:
    cid = store.put(canonical_json(root.to_jsonable()))
    registry.publish(identity.name_key, cid)
    return cid


def contribute(identity: Identity, session_key: SessionKey, language: str,
               clip_mp3: bytes, sentence_cid: Cid, meta_cid: Cid,
               store, registry: NameRegistry) -> Cid:
    """Encrypt and append one clip to the key's session, then republish.

    The clip's difficulty metadata is derived here (audio duration, character
    rate of the referenced sentence) and stays in plaintext alongside the
    encrypted audio reference, matching the published clip-list shape.
    """
    sentence = decode(store.get(sentence_cid), Sentence)
    length = round4(ingest.mp3_duration(clip_mp3))
    clip_cid = store_encrypted(store, encrypt(session_key, clip_mp3))
    entry = ClipEntry(
        chars_sec=ingest.chars_per_sec(sentence.content, length),
        clip_cid=clip_cid,
        length=length,
        sentence_cid=sentence_cid,
        meta_cid=meta_cid,
    )

    fpr = session_key.fingerprint
    root = _load_current_root(store, registry, identity.name)
    inner: dict[str, dict] = {}
    clips: list[ClipEntry] = []
    if fpr in root.sessions:
        inner = _load_inner_root(store, root.sessions[fpr])
        lang_entry = inner.get(language)
        if lang_entry:
            try:
                enc_list = load_encrypted(store, lang_entry["cids"][0])
                clips = list(decode(decrypt(session_key, enc_list), LanguageIndex).clips)
            except (WrongKeyError, IntegrityError, KeyError, IndexError, TypeError) as exc:
                raise ConsentError(f"existing clip list for {fpr} is unreadable: {exc}") from exc
    clips.append(entry)

    list_bytes = encode(LanguageIndex(clips=tuple(clips)))
    enc_list_cid = store_encrypted(store, encrypt(session_key, list_bytes))
    inner[language] = {"cids": [enc_list_cid]}
    inner_cid = store.put(canonical_json(inner))

    sessions = dict(root.sessions)
    sessions[fpr] = inner_cid
    keys = {f: identity.session_keys[f] for f in sessions if f in identity.session_keys}
    return _publish_root(store, registry, identity,
                         EncryptedRoot(sessions=sessions, keys=keys))


def revoke(identity: Identity, fingerprint: str, store,
           registry: NameRegistry) -> Cid:
    """Withdraw consent for one session: drop its published key, keep its
    (now opaque) session entry, and destroy the local key copy."""
    root = _load_current_root(store, registry, identity.name)
    if fingerprint not in root.sessions:
        raise ConsentError(f"unknown session fingerprint {fingerprint}")
    if fingerprint not in root.keys:
        raise ConsentError(f"session {fingerprint} is already revoked")
    keys = {f: k for f, k in root.keys.items() if f != fingerprint}
    cid = _publish_root(store, registry, identity,
                        EncryptedRoot(sessions=dict(root.sessions), keys=keys))
    identity.session_keys.pop(fingerprint, None)
    if identity.active == fingerprint:
        identity.active = None
    identity.save()
    return cid


@dataclass
class SessionView:
    fingerprint: str
    status: str  # "open" | "opaque" | "corrupt"
    clips: dict[str, list[ClipEntry]] = field(default_factory=dict)
    detail: str = ""

    @property
    def words(self) -> list[str]:
        return words_for_fingerprint(self.fingerprint)

    def clip_count(self) -> int:
        return sum(len(v) for v in self.clips.values())


@dataclass
class OpenedIdentity:
    cid: Cid
    encrypted: bool
    sessions: list[SessionView] = field(default_factory=list)
    classic_root: RootIndex | None = None


def _load_json(store, cid: Cid):
    try:
        return json.loads(store.get(cid).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"block {cid} is not JSON: {exc}") from exc


def open_encrypted_root(store, root_cid: Cid,
                        extra_keys: dict[str, SessionKey] | None = None) -> OpenedIdentity:
    """Decrypt every session whose key is published or locally cached;
    everything else comes back opaque."""
    root = EncryptedRoot.from_jsonable(_load_json(store, root_cid))
    known = dict(extra_keys or {})
    known.update(root.keys)
    opened = OpenedIdentity(cid=root_cid, encrypted=True)
    for fpr in sorted(root.sessions):
        key = known.get(fpr)
        if key is None:
            opened.sessions.append(SessionView(fingerprint=fpr, status="opaque"))
            continue
        try:
            inner = _load_inner_root(store, root.sessions[fpr])
            clips: dict[str, list[ClipEntry]] = {}
            for language, entry in inner.items():
                enc_list = load_encrypted(store, entry["cids"][0])
                index = decode(decrypt(key, enc_list), LanguageIndex)
                clips[language] = list(index.clips)
            opened.sessions.append(SessionView(fingerprint=fpr, status="open", clips=clips))
        except (IntegrityError, WrongKeyError, DecodeError, KeyError, IndexError,
                TypeError, NotFoundError) as exc:
            opened.sessions.append(SessionView(fingerprint=fpr, status="corrupt", detail=str(exc)))
    return opened


def open_identity(store, registry: NameRegistry, name: str,
                  extra_keys: dict[str, SessionKey] | None = None) -> OpenedIdentity:
    """Resolve a published identity; encrypted roots are opened session by
    session, classic roots decode as a plain index."""
    cid = registry.resolve(name)
    obj = _load_json(store, cid)
    if is_encrypted_root(obj):
        return open_encrypted_root(store, cid, extra_keys)
    return OpenedIdentity(cid=cid, encrypted=False,
                          classic_root=RootIndex.from_jsonable(obj))


def decrypt_clip(store, key: SessionKey, clip: ClipEntry) -> bytes:
    """Fetch and decrypt the audio behind a contributed clip entry."""
    return decrypt(key, load_encrypted(store, clip.clip_cid))
