import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsnsec import merkle


def _directory(n):
    return merkle.KeyDirectory((i, bytes([i]) * 16) for i in range(1, n + 1))


def _oracle_root(entries):
    """Straightforward re-implementation used as an independent check."""
    h = lambda b: hashlib.sha256(b).digest()
    leaves = [h(i.to_bytes(4, "big") + pk) for i, pk in sorted(entries)]
    width = 1
    while width < len(leaves):
        width *= 2
    leaves += [h(bytes(32))] * (width - len(leaves))
    while len(leaves) > 1:
        leaves = [h(leaves[k] + leaves[k + 1]) for k in range(0, len(leaves), 2)]
    return leaves[0]


def test_root_of_five_member_directory():
    tree = merkle.build_tree(_directory(5))
    assert tree.root.hex() == "805a14bb249848332407b66d46f57c9c2e687aea6eb03589a2a506879fdcdb4d"


@pytest.mark.parametrize("n,height", [(1, 0), (2, 1), (4, 2), (5, 3), (8, 3), (9, 4)])
def test_height_and_storage(n, height):
    tree = merkle.build_tree(_directory(n))
    assert tree.height == height
    assert tree.leaf_count == 1 << height
    assert tree.verifier_storage() == height + 1
    for i in range(1, n + 1):
        assert len(tree.prove(i)) == height


def test_five_pads_to_eight_with_four_digest_storage():
    tree = merkle.build_tree(_directory(5))
    assert tree.leaf_count == 8
    assert tree.verifier_storage() == 4


def test_every_leaf_of_eight_verifies():
    d = _directory(8)
    tree = merkle.build_tree(d)
    for i, pk in d.entries:
        assert merkle.verify(tree.root, i, pk, tree.prove(i), height=3)


def test_single_member_tree_has_empty_path():
    tree = merkle.build_tree(_directory(1))
    path = tree.prove(1)
    assert len(path) == 0
    assert tree.root == merkle.leaf_value(1, bytes([1]) * 16)
    assert merkle.verify(tree.root, 1, bytes([1]) * 16, path)


def test_wrong_pk_id_or_height_rejected():
    tree = merkle.build_tree(_directory(4))
    path = tree.prove(2)
    assert not merkle.verify(tree.root, 2, bytes([9]) * 16, path)
    assert not merkle.verify(tree.root, 3, bytes([2]) * 16, path)
    assert not merkle.verify(tree.root, 2, bytes([2]) * 16, path, height=3)


def test_sentinel_leaf_cannot_be_claimed():
    tree = merkle.build_tree(_directory(5))
    # the padding leaf at index 5 has a valid sibling path, but no (id, pk) hashes to it
    steps = []
    k = 5
    for level in tree.levels[:-1]:
        sib = k ^ 1
        steps.append(merkle.PathStep("L" if sib < k else "R", level[sib]))
        k //= 2
    path = merkle.AuthPath(tuple(steps))
    assert not merkle.verify(tree.root, 6, bytes(16), path)


def test_directory_rejects_duplicates_and_empty_tree():
    with pytest.raises(ValueError):
        merkle.KeyDirectory([(1, b"a"), (1, b"b")])
    with pytest.raises(ValueError):
        merkle.build_tree(merkle.KeyDirectory([]))


def test_unknown_member_has_no_proof():
    tree = merkle.build_tree(_directory(3))
    with pytest.raises(KeyError):
        tree.prove(42)


def test_directory_text_and_path_lines_roundtrip():
    text = "# id pk\n3 0303\n1 0101\n\n2 0202  # trailing comment\n"
    d = merkle.KeyDirectory.parse(text)
    assert [i for i, _ in d.entries] == [1, 2, 3]
    tree = merkle.build_tree(d)
    path = tree.prove(3)
    again = merkle.AuthPath.from_lines(path.to_lines())
    assert again == path
    with pytest.raises(ValueError):
        merkle.AuthPath.from_lines(["X " + "00" * 32])


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(0, 10_000), st.binary(min_size=1, max_size=32), min_size=1, max_size=20))
def test_completeness_against_oracle(entries):
    d = merkle.KeyDirectory(entries.items())
    tree = merkle.build_tree(d)
    assert tree.root == _oracle_root(entries.items())
    for i, pk in entries.items():
        assert merkle.verify(tree.root, i, pk, tree.prove(i), height=tree.height)
