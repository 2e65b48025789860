"""Hash-tree certification of node public keys.

Leaves are ``hash(id_be32 || pk)``, internal nodes ``hash(left || right)``.
A directory of N entries is padded with ``hash(zeros)`` sentinel leaves up to
the next power of two, so every authentication path has exactly ``H`` siblings
and a verifier keeps ``H + 1`` digests (the path plus the root).
"""

from dataclasses import dataclass

from . import crypto

SENTINEL = crypto.hash(bytes(crypto.DIGEST_LEN))


def encode_id(node_id: int) -> bytes:
    return node_id.to_bytes(4, "big")


def leaf_value(node_id: int, pk: bytes) -> bytes:
    return crypto.hash(encode_id(node_id) + pk)


def combine(left: bytes, right: bytes) -> bytes:
    return crypto.hash(left + right)


@dataclass(frozen=True)
class PathStep:
    side: str  # "L" when the sibling sits to the left of the running value
    digest: bytes


@dataclass(frozen=True)
class AuthPath:
    siblings: tuple[PathStep, ...]

    def __len__(self):
        return len(self.siblings)

    def to_lines(self) -> list[str]:
        return [f"{s.side} {s.digest.hex()}" for s in self.siblings]

    @classmethod
    def from_lines(cls, lines) -> "AuthPath":
        steps = []
        for raw in lines:
            raw = raw.strip()
            if not raw:
                continue
            side, digest = raw.split()
            if side not in ("L", "R"):
                raise ValueError(f"bad path side {side!r}")
            steps.append(PathStep(side, bytes.fromhex(digest)))
        return cls(tuple(steps))


class KeyDirectory:
    """Canonical (ascending id) list of ``(id, public key)`` entries."""

    def __init__(self, entries):
        entries = [(int(i), bytes(pk)) for i, pk in entries]
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node id in key directory")
        self.entries = sorted(entries)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def parse(cls, text: str) -> "KeyDirectory":
        """Parse ``<id> <pk-hex>`` lines; blank lines and ``#`` comments ignored."""
        entries = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                node_id, pk = line.split()
                entries.append((int(node_id), bytes.fromhex(pk)))
        return cls(entries)


class MerkleTree:
    def __init__(self, directory: KeyDirectory):
        if len(directory) == 0:
            raise ValueError("key directory is empty")
        self.directory = directory
        n_real = len(directory)
        self.height = (n_real - 1).bit_length()
        width = 1 << self.height
        leaves = [leaf_value(i, pk) for i, pk in directory.entries]
        leaves += [SENTINEL] * (width - n_real)
        self.levels = [leaves]
        while len(self.levels[-1]) > 1:
            prev = self.levels[-1]
            self.levels.append([combine(prev[k], prev[k + 1]) for k in range(0, len(prev), 2)])
        self._index = {node_id: k for k, (node_id, _) in enumerate(directory.entries)}

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0])

    def verifier_storage(self) -> int:
        """Digests a member stores to authenticate peers: path plus root."""
        return self.height + 1

    def prove(self, node_id: int) -> AuthPath:
        if node_id not in self._index:
            raise KeyError(f"node {node_id} not in directory")
        k = self._index[node_id]
        steps = []
        for level in self.levels[:-1]:
            sib = k ^ 1
            steps.append(PathStep("L" if sib < k else "R", level[sib]))
            k //= 2
        return AuthPath(tuple(steps))


def build_tree(directory: KeyDirectory) -> MerkleTree:
    return MerkleTree(directory)


def prove(tree: MerkleTree, node_id: int) -> AuthPath:
    return tree.prove(node_id)


def verify(root: bytes, node_id: int, pk: bytes, path: AuthPath, height: int | None = None) -> bool:
    """Recompute the root from a leaf and its siblings.

    ``height`` is the tree height the verifier expects; a path of any other
    length is rejected rather than raising.
    """
    if height is not None and len(path.siblings) != height:
        return False
    value = leaf_value(node_id, pk)
    for step in path.siblings:
        if step.side == "L":
            value = combine(step.digest, value)
        elif step.side == "R":
            value = combine(value, step.digest)
        else:
            return False
    return value == root
