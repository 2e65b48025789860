"""Broadcast authentication with a one-way key chain and delayed disclosure.

The sender tags each broadcast in interval ``i`` with chain key ``K_i`` and
reveals ``K_i`` only ``disclosure_lag`` intervals later.  A receiver buffers a
packet only while the key is provably still secret (the safety condition under
a clock error bound ``epsilon``) and authenticates it once a disclosed key
hashes back to the last key it trusts.
"""

from collections import deque
from dataclasses import dataclass, field
import logging

from . import crypto
from .core import BROADCAST, Packet, PacketKind

log = logging.getLogger(__name__)

DEFAULT_BUFFER_CAP = 256


@dataclass
class KeyChain:
    keys: list  # keys[0] is the commitment K_0, keys[-1] the seed K_n
    interval_len: int
    start_time: int = 0
    disclosure_lag: int = 2

    @property
    def n(self) -> int:
        return len(self.keys) - 1

    @property
    def commitment(self) -> bytes:
        return self.keys[0]

    def interval_of(self, t: int) -> int:
        return (t - self.start_time) // self.interval_len

    def interval_start(self, i: int) -> int:
        return self.start_time + i * self.interval_len

    def disclosure(self, i: int) -> "DisclosedKey":
        return DisclosedKey(i, self.keys[i])


@dataclass(frozen=True)
class DisclosedKey:
    interval_index: int
    key: bytes


def generate_chain(seed: bytes, n: int, interval_len: int, start_time: int = 0,
                   disclosure_lag: int = 2) -> KeyChain:
    if n < 1:
        raise ValueError("key chain needs at least one usable interval (n >= 1)")
    if interval_len < 1:
        raise ValueError("interval_len must be positive")
    keys = [seed]
    for _ in range(n):
        keys.append(crypto.chain_step(keys[-1]))
    keys.reverse()
    return KeyChain(keys, interval_len, start_time, disclosure_lag)


def auth_broadcast(chain: KeyChain, payload: bytes, t: int, uid: int = 0, src: int = 0) -> Packet:
    """Tag ``payload`` with the key of the interval containing ``t``.

    The interval index travels in the packet's ``counter`` field.
    """
    i = chain.interval_of(t)
    if i < 0 or i > chain.n:
        raise ValueError(f"tick {t} is outside the key chain lifetime")
    return Packet(uid=uid, kind=PacketKind.Announce, src=src, dst=BROADCAST,
                  next_hop=BROADCAST, payload=payload,
                  tag=crypto.mac(chain.keys[i], payload), counter=i)


@dataclass
class ReceiverAuthState:
    last_auth_index: int
    last_auth_key: bytes
    epsilon: int
    interval_len: int
    start_time: int = 0
    disclosure_lag: int = 2
    buffer_cap: int = DEFAULT_BUFFER_CAP
    pending: deque = field(default_factory=deque)
    evicted: int = 0

    @classmethod
    def bootstrap(cls, chain: KeyChain, epsilon: int, buffer_cap: int = DEFAULT_BUFFER_CAP):
        """Out-of-band parameter distribution: authentic K_0 plus the schedule."""
        return cls(0, chain.commitment, epsilon, chain.interval_len, chain.start_time,
                   chain.disclosure_lag, buffer_cap)

    def interval_of(self, t: int) -> int:
        return (t - self.start_time) // self.interval_len


def is_safe(state: ReceiverAuthState, sender_interval: int, local_t: int) -> bool:
    latest_sender_interval = state.interval_of(local_t + state.epsilon)
    return latest_sender_interval < sender_interval + state.disclosure_lag


def receiver_accept(state: ReceiverAuthState, packet: Packet, sender_interval: int,
                    local_t: int) -> str:
    """Buffer ``packet`` if its key cannot have been disclosed yet."""
    if sender_interval <= state.last_auth_index or not is_safe(state, sender_interval, local_t):
        return "rejected_unsafe"
    if len(state.pending) >= state.buffer_cap:
        state.pending.popleft()
        state.evicted += 1
    state.pending.append((packet, sender_interval))
    return "buffered"


def receiver_verify_disclosure(state: ReceiverAuthState, disclosed: DisclosedKey) -> list:
    """Authenticate a disclosed key and release the packets it unlocks.

    Returns the released packets.  An inauthentic key leaves the state
    untouched; a disclosure at or below the last authenticated interval is a
    no-op.
    """
    idx = disclosed.interval_index
    gap = idx - state.last_auth_index
    if gap <= 0:
        return []
    if crypto.chain_apply(disclosed.key, gap) != state.last_auth_key:
        log.debug("discarding inauthentic key for interval %d", idx)
        return []
    # keys for every interval skipped since the last authentic disclosure
    interval_keys = {idx: disclosed.key}
    k = disclosed.key
    for j in range(idx - 1, state.last_auth_index, -1):
        k = crypto.chain_step(k)
        interval_keys[j] = k
    released, keep = [], deque()
    for packet, i in state.pending:
        if i > idx:
            keep.append((packet, i))
        elif i in interval_keys and packet.tag is not None and crypto.verify_mac(
                interval_keys[i], packet.payload, packet.tag):
            released.append(packet)
    state.pending = keep
    state.last_auth_index = idx
    state.last_auth_key = disclosed.key
    return released
