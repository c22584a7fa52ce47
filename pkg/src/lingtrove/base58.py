"""Base58 encoding with the Bitcoin alphabet (base58btc)."""

ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_INDEX = {c: i for i, c in enumerate(ALPHABET)}


def b58encode(raw: bytes) -> str:
    n = int.from_bytes(raw, "big")
    digits = []
    while n > 0:
        n, r = divmod(n, 58)
        digits.append(ALPHABET[r])
    pad = 0
    for b in raw:
        if b != 0:
            break
        pad += 1
    return ALPHABET[0] * pad + "".join(reversed(digits))


def b58decode(text: str) -> bytes:
    n = 0
    for ch in text:
        try:
            n = n * 58 + _INDEX[ch]
        except KeyError:
            raise ValueError(f"invalid base58 character {ch!r}") from None
    pad = 0
    for ch in text:
        if ch != ALPHABET[0]:
            break
        pad += 1
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    return b"\x00" * pad + body
