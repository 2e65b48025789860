"""Symmetric primitives shared by every protocol in the package.

Everything is built on SHA-256: the one-way function used for key chains and
Merkle trees, key derivation, an HMAC tag truncated to 16 bytes, and a
hash-based counter-mode keystream. One primitive keeps all test vectors
self-consistent.
"""

import hashlib
import hmac

DIGEST_LEN = 32
KEY_LEN = 16
TAG_LEN = 16

Digest = bytes
Key = bytes
Tag = bytes


def hash(data: bytes) -> Digest:  # noqa: A001 - mirrors the protocol vocabulary
    return hashlib.sha256(data).digest()


def chain_step(key: Key) -> Key:
    """One application of the public one-way function ``F``."""
    return hashlib.sha256(key).digest()[:KEY_LEN]


def chain_apply(key: Key, steps: int) -> Key:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    for _ in range(steps):
        key = chain_step(key)
    return key


def mac(key: Key, msg: bytes) -> Tag:
    return hmac.new(key, msg, hashlib.sha256).digest()[:TAG_LEN]


def verify_mac(key: Key, msg: bytes, tag: Tag) -> bool:
    return hmac.compare_digest(mac(key, msg), tag)


def derive_key(master: Key, label: bytes | str) -> Key:
    if isinstance(label, str):
        label = label.encode()
    return hashlib.sha256(master + label).digest()[:KEY_LEN]


def _keystream(key: Key, counter: int, length: int) -> bytes:
    prefix = key + counter.to_bytes(8, "big")
    blocks = []
    for i in range((length + DIGEST_LEN - 1) // DIGEST_LEN):
        blocks.append(hashlib.sha256(prefix + i.to_bytes(4, "big")).digest())
    return b"".join(blocks)[:length]


def ctr_encrypt(key: Key, counter: int, plaintext: bytes) -> bytes:
    if counter < 0:
        raise ValueError("counter must be non-negative")
    if not plaintext:
        return b""
    n = len(plaintext)
    stream = _keystream(key, counter, n)
    return (int.from_bytes(plaintext, "big") ^ int.from_bytes(stream, "big")).to_bytes(n, "big")


# XOR keystream: decryption is the same operation
ctr_decrypt = ctr_encrypt
