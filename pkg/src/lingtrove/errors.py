"""Exception hierarchy shared across the package."""


class LingtroveError(Exception):
    """Base class for all package errors."""


class StoreError(LingtroveError):
    """Backend trouble (unreachable, out of space). Retriable."""


class NotFoundError(LingtroveError):
    """Requested block or name does not exist."""


class IntegrityError(LingtroveError):
    """Content does not match its address, or ciphertext fails authentication."""


class DataError(LingtroveError):
    """Malformed or invariant-violating index data."""


class DecodeError(DataError):
    """Wire bytes do not decode to the expected structure."""


class InvariantError(DataError):
    """A structurally valid value violates a type invariant."""


class StaleSequenceError(LingtroveError):
    """Name publish raced a newer record; retry with a refreshed sequence."""


class SignatureError(LingtroveError):
    """Name record signature or key binding does not verify."""


class UnsupportedAudioError(LingtroveError):
    """Byte stream contains no decodable MPEG audio frame."""


class CorpusError(LingtroveError):
    """Corpus input unusable (bad header, nothing ingestible)."""


class WrongKeyError(LingtroveError):
    """Encrypted object is addressed to a different session key."""


class ConsentError(LingtroveError):
    """Contribution or revocation cannot proceed (unknown/revoked session, ...)."""


class GameError(LingtroveError):
    """Session operation violates game state (double submit, short bucket, ...)."""
