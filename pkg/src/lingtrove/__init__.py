"""Decentralised, consent-preserving storage and gap-fill training for
listening-practice corpora."""

__version__ = "0.1.0"
