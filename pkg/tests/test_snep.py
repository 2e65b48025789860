import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsnsec import crypto, snep

MASTER = b"M" * 16


def _pair(window=snep.DEFAULT_WINDOW):
    return snep.session_pair(1, 2, MASTER, window)


def test_roundtrip_in_order():
    a, b = _pair()
    msgs = [f"reading {i}".encode() for i in range(50)]
    got = [snep.snep_receive(b, snep.snep_send(a, m)) for m in msgs]
    assert got == msgs
    assert a.send_counter == b.recv_counter == 50


def test_counter_not_on_the_wire():
    a, _ = _pair()
    msg = snep.snep_send(a, b"abcd")
    assert len(msg.to_bytes()) == len(b"abcd") + crypto.TAG_LEN
    assert snep.SnepMessage.from_bytes(msg.to_bytes()) == msg
    with pytest.raises(ValueError):
        snep.SnepMessage.from_bytes(b"short")


def test_tag_covers_counter_and_ciphertext():
    a, _ = _pair()
    msg = snep.snep_send(a, b"x")
    assert msg.tag == crypto.mac(a.k_mac, snep.encode_counter(0) + msg.ciphertext)
    assert msg.ciphertext == crypto.ctr_encrypt(a.k_encr, 0, b"x")


def test_duplicate_rejected_as_replay():
    a, b = _pair()
    msg = snep.snep_send(a, b"once")
    assert snep.snep_receive(b, msg) == b"once"
    with pytest.raises(snep.SnepReject) as exc:
        snep.snep_receive(b, msg)
    assert exc.value.reason == "replay"


def test_forged_tag_rejected():
    a, b = _pair()
    msg = snep.snep_send(a, b"data")
    bad = snep.SnepMessage(msg.ciphertext, bytes(16))
    with pytest.raises(snep.SnepReject) as exc:
        snep.snep_receive(b, bad)
    assert exc.value.reason == "auth"
    assert b.recv_counter == 0


def test_identical_plaintexts_give_distinct_ciphertexts():
    a, _ = _pair()
    cts = {snep.snep_send(a, b"same plaintext!!").ciphertext for _ in range(1000)}
    assert len(cts) == 1000


def test_losses_shorter_than_window_recover():
    a, b = _pair(window=4)
    sent = [snep.snep_send(a, bytes([i])) for i in range(10)]
    # drop three in a row: the fourth lands inside the window
    assert snep.snep_receive(b, sent[0]) == b"\x00"
    assert snep.snep_receive(b, sent[4]) == b"\x04"
    assert b.recv_counter == 5


def test_gap_of_window_needs_resync():
    a, b = _pair(window=4)
    sent = [snep.snep_send(a, bytes([i])) for i in range(12)]
    with pytest.raises(snep.SnepReject):
        snep.snep_receive(b, sent[10])
    snep.counter_resync(a, b, nonces=(b"n" * 8, b"m" * 8))
    assert b.recv_counter == a.send_counter == 12
    assert snep.snep_receive(b, snep.snep_send(a, b"after")) == b"after"


def test_resync_tampering_leaves_counters_untouched():
    a, b = _pair()
    for _ in range(3):
        snep.snep_send(a, b"x")
    before = (a.send_counter, a.recv_counter, b.send_counter, b.recv_counter)

    def flip(step, raw):
        if step == 2:
            return raw[:8] + bytes([raw[8] ^ 1]) + raw[9:]
        return raw

    with pytest.raises(snep.SnepReject):
        snep.counter_resync(a, b, tamper=flip)
    assert (a.send_counter, a.recv_counter, b.send_counter, b.recv_counter) == before


def test_resync_never_moves_counters_backwards():
    a, b = _pair()
    a.send_counter, b.recv_counter = 9, 4
    b.send_counter, a.recv_counter = 2, 7
    snep.counter_resync(a, b)
    assert (a.send_counter, b.recv_counter) == (9, 9)
    assert (b.send_counter, a.recv_counter) == (7, 7)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_any_loss_pattern_shorter_than_window(delivered):
    """Every loss run shorter than W leaves later messages decryptable."""
    window = 4
    a, b = _pair(window)
    run = 0
    for i, ok in enumerate(delivered):
        msg = snep.snep_send(a, i.to_bytes(2, "big"))
        if not ok and run < window - 1:
            run += 1
            continue
        run = 0
        assert snep.snep_receive(b, msg) == i.to_bytes(2, "big")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.binary(max_size=24), min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_replayed_or_reordered_old_messages_never_accepted_twice(msgs, rng):
    a, b = _pair()
    sent = [snep.snep_send(a, m) for m in msgs]
    accepted = 0
    for m in sent:
        snep.snep_receive(b, m)
        accepted += 1
    # replay everything in a shuffled order
    replay = list(sent)
    rng.shuffle(replay)
    for m in replay:
        with pytest.raises(snep.SnepReject):
            snep.snep_receive(b, m)
    assert accepted == len(msgs)
