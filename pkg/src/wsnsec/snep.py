"""Pairwise confidentiality, authentication and weak freshness.

Both endpoints keep a shared counter per direction.  The sender encrypts in
counter mode under ``K_encr`` and tags ``counter || ciphertext`` under
``K_mac``; the counter itself never goes on the wire.  The receiver tries the
next ``W`` counter values, which tolerates short losses and makes replays
(counters already consumed) impossible to accept.
"""

from dataclasses import dataclass, field
import os
import struct

from . import crypto

DEFAULT_WINDOW = 4
COUNTER_LIMIT = 1 << 32


class SnepReject(Exception):
    """Raised when a message or resync step fails authentication.

    ``reason`` is ``"replay"`` when the tag matches a message this endpoint
    already accepted (ground-truth bookkeeping only; on the wire the two
    cases look the same) and ``"auth"`` otherwise.
    """

    def __init__(self, reason="auth"):
        super().__init__(reason)
        self.reason = reason


def encode_counter(c: int) -> bytes:
    return struct.pack(">I", c % COUNTER_LIMIT)


@dataclass(frozen=True)
class SnepMessage:
    ciphertext: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.tag + self.ciphertext

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SnepMessage":
        if len(raw) < crypto.TAG_LEN:
            raise ValueError("SNEP frame shorter than a tag")
        return cls(raw[crypto.TAG_LEN:], raw[:crypto.TAG_LEN])


@dataclass
class SnepSession:
    me: int
    peer: int
    k_encr: bytes
    k_mac: bytes
    k_rand: bytes  # derived for completeness; no procedure consumes it
    send_counter: int = 0
    recv_counter: int = 0
    window: int = DEFAULT_WINDOW
    accepted_tags: set = field(default_factory=set, repr=False)

    @classmethod
    def from_master(cls, me, peer, master: bytes, window=DEFAULT_WINDOW, send_counter=0, recv_counter=0):
        return cls(me, peer, crypto.derive_key(master, "encr"), crypto.derive_key(master, "mac"),
                   crypto.derive_key(master, "rand"), send_counter, recv_counter, window)


def session_pair(a: int, b: int, master: bytes, window=DEFAULT_WINDOW):
    return SnepSession.from_master(a, b, master, window), SnepSession.from_master(b, a, master, window)


def snep_send(session: SnepSession, data: bytes) -> SnepMessage:
    c = session.send_counter
    ct = crypto.ctr_encrypt(session.k_encr, c, data)
    tag = crypto.mac(session.k_mac, encode_counter(c) + ct)
    session.send_counter = c + 1
    return SnepMessage(ct, tag)


def snep_receive(session: SnepSession, msg: SnepMessage) -> bytes:
    for c in range(session.recv_counter, session.recv_counter + session.window):
        if crypto.verify_mac(session.k_mac, encode_counter(c) + msg.ciphertext, msg.tag):
            session.recv_counter = c + 1
            session.accepted_tags.add(msg.tag)
            return crypto.ctr_decrypt(session.k_encr, c, msg.ciphertext)
    raise SnepReject("replay" if msg.tag in session.accepted_tags else "auth")


# -- counter exchange ------------------------------------------------------
# m1  A->B  nonce_a
# m2  B->A  nonce_b | send_b | recv_b | mac(nonce_a | nonce_b | send_b | recv_b)
# m3  A->B  send_a | recv_a | mac(nonce_b | send_a | recv_a)

NONCE_LEN = 8


def resync_request(session: SnepSession, nonce: bytes | None = None) -> bytes:
    return nonce if nonce is not None else os.urandom(NONCE_LEN)


def resync_respond(session: SnepSession, m1: bytes, nonce: bytes | None = None) -> bytes:
    nonce_b = nonce if nonce is not None else os.urandom(NONCE_LEN)
    body = nonce_b + encode_counter(session.send_counter) + encode_counter(session.recv_counter)
    return body + crypto.mac(session.k_mac, b"rs2" + m1 + body)


def resync_finish(session: SnepSession, m1: bytes, m2: bytes) -> tuple:
    """Check the responder's report; return ``(m3, peer_send, peer_recv)``."""
    body, tag = m2[:-crypto.TAG_LEN], m2[-crypto.TAG_LEN:]
    if len(body) != NONCE_LEN + 8 or not crypto.verify_mac(session.k_mac, b"rs2" + m1 + body, tag):
        raise SnepReject()
    nonce_b = body[:NONCE_LEN]
    peer_send, peer_recv = struct.unpack(">II", body[NONCE_LEN:])
    report = encode_counter(session.send_counter) + encode_counter(session.recv_counter)
    m3 = report + crypto.mac(session.k_mac, b"rs3" + nonce_b + report)
    return m3, peer_send, peer_recv


def resync_confirm(session: SnepSession, m2: bytes, m3: bytes) -> tuple:
    body, tag = m3[:-crypto.TAG_LEN], m3[-crypto.TAG_LEN:]
    nonce_b = m2[:NONCE_LEN]
    if len(body) != 8 or not crypto.verify_mac(session.k_mac, b"rs3" + nonce_b + body, tag):
        raise SnepReject()
    return struct.unpack(">II", body)


def counter_resync(a: SnepSession, b: SnepSession, tamper=None, nonces=(None, None)):
    """Run the three-message exchange between two in-process endpoints.

    ``tamper(step, raw) -> raw`` lets a test play the adversary on the link.
    Counters are committed only when every step authenticates; on failure
    ``SnepReject`` propagates and neither session changes.
    """
    tamper = tamper or (lambda step, raw: raw)
    m1 = tamper(1, resync_request(a, nonces[0]))
    m2 = tamper(2, resync_respond(b, m1, nonces[1]))
    m3, b_send, b_recv = resync_finish(a, m1, m2)
    m3 = tamper(3, m3)
    a_send, a_recv = resync_confirm(b, m2, m3)
    # counters never move backwards: each direction settles on the larger value
    ab = max(a_send, b_recv)
    ba = max(b_send, a_recv)
    a.send_counter, b.recv_counter = ab, ab
    b.send_counter, a.recv_counter = ba, ba
    return m1, m2, m3
