"""Content-addressed block store and signed mutable name registry.

Blocks are addressed by base58btc(0x12 0x20 || SHA-256(content)); the text
form always starts with "Qm". The local backend keeps one file per block.
The gateway backend speaks the conventional daemon HTTP surface
(POST /api/v0/add, GET /ipfs/{cid}) and treats foreign CIDs as opaque.
Names are Ed25519-signed, sequence-numbered pointers to a CID; the highest
valid sequence wins.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol

import requests
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .base58 import b58decode, b58encode
from .errors import (
    IntegrityError,
    NotFoundError,
    SignatureError,
    StaleSequenceError,
    StoreError,
)

Cid = str

_MH_PREFIX = b"\x12\x20"  # sha2-256, 32-byte digest


def compute_cid(content: bytes) -> Cid:
    return b58encode(_MH_PREFIX + hashlib.sha256(content).digest())


def cid_digest(cid: Cid) -> bytes:
    """Return the SHA-256 digest encoded in `cid`, or raise ValueError."""
    try:
        raw = b58decode(cid)
    except ValueError as exc:
        raise ValueError(f"not a valid cid: {cid!r}") from exc
    if len(raw) != 34 or raw[:2] != _MH_PREFIX:
        raise ValueError(f"not a valid cid: {cid!r}")
    return raw[2:]


def is_valid_cid(cid: str) -> bool:
    try:
        cid_digest(cid)
    except ValueError:
        return False
    return True


def verify_cid(cid: Cid, content: bytes) -> bool:
    return compute_cid(content) == cid


class BlockStore(Protocol):
    def put(self, content: bytes) -> Cid: ...

    def get(self, cid: Cid) -> bytes: ...

    def has(self, cid: Cid) -> bool: ...


_BLOCK_NAME = re.compile(r"[1-9A-HJ-NP-Za-km-z]{1,128}$")  # base58; no separators


class LocalStore:
    """One file per block under `root/blocks`, filename = CID text.

    Safe for concurrent readers and writers: writes go through a temp file
    and an atomic rename, and content addressing makes concurrent writes of
    the same block byte-identical. Requested names are validated before any
    path join, so untrusted CIDs cannot reach outside the blocks directory.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.blocks = self.root / "blocks"
        self.blocks.mkdir(parents=True, exist_ok=True)

    def _path(self, cid: Cid) -> Path:
        if not _BLOCK_NAME.fullmatch(cid):
            raise NotFoundError(f"no block {cid!r}")
        return self.blocks / cid

    def put(self, content: bytes) -> Cid:
        cid = compute_cid(content)
        path = self.blocks / cid
        if path.exists():
            return cid
        tmp = path.with_name(f".{cid}.{os.getpid()}.{threading.get_ident()}.tmp")
        try:
            tmp.write_bytes(content)
            os.replace(tmp, path)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise StoreError(f"cannot write block {cid}: {exc}") from exc
        return cid

    def get(self, cid: Cid) -> bytes:
        try:
            content = self._path(cid).read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"no block {cid}") from None
        except OSError as exc:
            raise StoreError(f"cannot read block {cid}: {exc}") from exc
        if is_valid_cid(cid) and not verify_cid(cid, content):
            raise IntegrityError(f"stored content does not match {cid}")
        return content

    def has(self, cid: Cid) -> bool:
        try:
            return self._path(cid).exists()
        except NotFoundError:
            return False

    def __contains__(self, cid: Cid) -> bool:
        return self.has(cid)

    def cids(self) -> Iterator[Cid]:
        for p in sorted(self.blocks.iterdir()):
            if not p.name.startswith("."):
                yield p.name


class GatewayStore:
    """HTTP client for a remote daemon gateway.

    CIDs minted by the daemon are opaque; content fetched under a CID that
    parses in the local scheme is re-verified, anything else is trusted as
    round-trip data.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = session or requests.Session()

    def put(self, content: bytes) -> Cid:
        try:
            resp = self._http.post(
                f"{self.base_url}/api/v0/add",
                files={"file": ("block", content, "application/octet-stream")},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise StoreError(f"gateway unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise StoreError(f"gateway add failed: HTTP {resp.status_code}")
        try:
            body = resp.json()
            cid = body.get("Hash") or body.get("Cid") or body.get("cid")
        except ValueError:
            cid = resp.text.strip()
        if not cid:
            raise StoreError("gateway add returned no cid")
        return cid

    def get(self, cid: Cid) -> bytes:
        try:
            resp = self._http.get(f"{self.base_url}/ipfs/{cid}", timeout=self.timeout)
        except requests.RequestException as exc:
            raise StoreError(f"gateway unreachable: {exc}") from exc
        if resp.status_code == 404:
            raise NotFoundError(f"gateway has no block {cid}")
        if resp.status_code >= 400:
            raise StoreError(f"gateway get failed: HTTP {resp.status_code}")
        content = resp.content
        if is_valid_cid(cid) and not verify_cid(cid, content):
            raise IntegrityError(f"gateway returned tampered content for {cid}")
        return content

    def has(self, cid: Cid) -> bool:
        try:
            resp = self._http.head(f"{self.base_url}/ipfs/{cid}", timeout=self.timeout)
        except requests.RequestException as exc:
            raise StoreError(f"gateway unreachable: {exc}") from exc
        return resp.status_code < 400


class TieredStore:
    """Read-through pair: local store backed by an optional gateway."""

    def __init__(self, local: LocalStore, gateway: GatewayStore | None = None):
        self.local = local
        self.gateway = gateway

    def put(self, content: bytes) -> Cid:
        return self.local.put(content)

    def get(self, cid: Cid) -> bytes:
        try:
            return self.local.get(cid)
        except NotFoundError:
            if self.gateway is None:
                raise
        content = self.gateway.get(cid)
        if is_valid_cid(cid):
            self.local.put(content)
        return content

    def has(self, cid: Cid) -> bool:
        return self.local.has(cid) or (self.gateway is not None and self.gateway.has(cid))


def _record_message(target: Cid, sequence: int) -> bytes:
    return f"{sequence}\n{target}".encode("utf-8")


@dataclass(frozen=True)
class NameRecord:
    name: str
    target: Cid
    sequence: int
    signature: bytes
    public_key: bytes  # raw Ed25519 public bytes

    def verify(self) -> None:
        if hashlib.sha256(self.public_key).hexdigest() != self.name:
            raise SignatureError(f"public key does not bind to name {self.name}")
        try:
            pub = Ed25519PublicKey.from_public_bytes(self.public_key)
            pub.verify(self.signature, _record_message(self.target, self.sequence))
        except (InvalidSignature, ValueError) as exc:
            raise SignatureError(f"bad signature on record for {self.name}") from exc

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "sequence": self.sequence,
            "signature": base64.b64encode(self.signature).decode("ascii"),
            "public_key": base64.b64encode(self.public_key).decode("ascii"),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "NameRecord":
        try:
            return cls(
                name=obj["name"],
                target=obj["target"],
                sequence=int(obj["sequence"]),
                signature=base64.b64decode(obj["signature"]),
                public_key=base64.b64decode(obj["public_key"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SignatureError(f"malformed name record: {exc}") from exc


class NameKey:
    """Ed25519 keypair behind a registry name.

    The name is the lowercase hex SHA-256 of the raw public key.
    """

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        pub = private.public_key().public_bytes_raw()
        self.public_bytes = pub
        self.name = hashlib.sha256(pub).hexdigest()

    @classmethod
    def generate(cls) -> "NameKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> "NameKey":
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._private.private_bytes_raw()

    def sign(self, target: Cid, sequence: int) -> NameRecord:
        sig = self._private.sign(_record_message(target, sequence))
        return NameRecord(
            name=self.name,
            target=target,
            sequence=sequence,
            signature=sig,
            public_key=self.public_bytes,
        )


class NameRegistry:
    """Append-only record log with compare-and-swap publish semantics."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._latest: dict[str, NameRecord] = {}
        if self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    record = NameRecord.from_jsonable(json.loads(line))
                    record.verify()
                except (SignatureError, ValueError):
                    continue  # never surface an invalid record
                self._remember(record)

    def _remember(self, record: NameRecord) -> None:
        cur = self._latest.get(record.name)
        if cur is None or record.sequence > cur.sequence:
            self._latest[record.name] = record

    def _append(self, record: NameRecord) -> None:
        line = json.dumps(record.to_jsonable(), sort_keys=True)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        except OSError as exc:
            raise StoreError(f"cannot append name record: {exc}") from exc

    def publish(self, key: NameKey, target: Cid, sequence: int | None = None) -> NameRecord:
        with self._lock:
            cur = self._latest.get(key.name)
            cur_seq = cur.sequence if cur else 0
            seq = cur_seq + 1 if sequence is None else sequence
            if seq <= cur_seq:
                raise StaleSequenceError(
                    f"sequence {seq} is not above current {cur_seq} for {key.name}"
                )
            record = key.sign(target, seq)
            record.verify()
            self._append(record)
            self._remember(record)
            return record

    def submit(self, record: NameRecord) -> None:
        """Accept a pre-signed record (e.g. arriving over HTTP)."""
        record.verify()
        with self._lock:
            cur = self._latest.get(record.name)
            if cur is not None and record.sequence <= cur.sequence:
                raise StaleSequenceError(
                    f"sequence {record.sequence} is not above current {cur.sequence}"
                )
            self._append(record)
            self._remember(record)

    def resolve(self, name: str) -> Cid:
        record = self._latest.get(name)
        if record is None:
            raise NotFoundError(f"name never published: {name}")
        return record.target

    def latest(self, name: str) -> NameRecord:
        record = self._latest.get(name)
        if record is None:
            raise NotFoundError(f"name never published: {name}")
        return record
