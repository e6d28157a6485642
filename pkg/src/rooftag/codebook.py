"""Tag code storage and rotation-aware matching.

A codebook is a small set of (tag_id, k x k binary grid) entries.  Grid
convention: entry grids cover only the interior data cells of a tag (the
black border ring is not part of the code).  A set bit / value 1 means a
dark cell.  Row 0 is the top row of the canonical tag viewed from above
with corner (-w, -w) at the bottom left.

Codebook files are line oriented text::

    # comment
    tag_id hex_code k

with the k*k bits packed row major, most significant bit = top-left cell.

The load-time invariant that makes decoding unambiguous: for every pair
of distinct entries, the Hamming distance between one grid and every
90-degree rotation of the other exceeds 2 * max_hamming.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "TagCodebook",
    "grid_from_code",
    "code_from_grid",
    "grid_rotations",
    "hamming_distance",
    "load_codebook",
    "save_codebook",
    "default_codebook",
]


def grid_from_code(code: int, k: int) -> np.ndarray:
    """Unpack a row-major integer code into a k x k uint8 grid."""
    if code < 0 or code >> (k * k):
        raise ConfigError(f"code 0x{code:x} does not fit in {k}x{k} bits")
    bits = (code >> np.arange(k * k - 1, -1, -1, dtype=np.uint64)) & 1
    return bits.astype(np.uint8).reshape(k, k)


def code_from_grid(grid: np.ndarray) -> int:
    """Pack a binary grid back into its row-major integer code."""
    flat = np.asarray(grid).ravel()
    value = 0
    for b in flat:
        value = (value << 1) | int(b & 1)
    return value


def grid_rotations(grid: np.ndarray):
    """The four 90-degree rotations of a grid, starting with the grid itself."""
    return [np.rot90(grid, r) for r in range(4)]


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.count_nonzero(a != b))


@dataclass(frozen=True)
class TagCodebook:
    """Immutable set of decodable tag codes.

    entries     list of (tag_id, k x k uint8 grid)
    cell_count  k, the number of data cells per tag side
    max_hamming largest bit-error count still accepted by the decoder
    """

    entries: tuple
    cell_count: int
    max_hamming: int = 1

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("codebook has no entries")
        if self.cell_count < 2:
            raise ConfigError("cell_count must be at least 2")
        if self.max_hamming < 0:
            raise ConfigError("max_hamming must be non-negative")
        seen = set()
        normalized = []
        for tag_id, grid in self.entries:
            tag_id = int(tag_id)
            if tag_id < 0:
                raise ConfigError(f"negative tag id {tag_id}")
            if tag_id in seen:
                raise ConfigError(f"duplicate tag id {tag_id}")
            seen.add(tag_id)
            grid = np.ascontiguousarray(np.asarray(grid, dtype=np.uint8) & 1)
            if grid.shape != (self.cell_count, self.cell_count):
                raise ConfigError(
                    f"tag {tag_id}: grid shape {grid.shape} does not match "
                    f"cell_count {self.cell_count}"
                )
            grid.setflags(write=False)
            normalized.append((tag_id, grid))
        object.__setattr__(self, "entries", tuple(normalized))
        floor = 2 * self.max_hamming
        for i, (id_a, grid_a) in enumerate(self.entries):
            for id_b, grid_b in self.entries[i + 1:]:
                for rot in grid_rotations(grid_b):
                    d = hamming_distance(grid_a, rot)
                    if d <= floor:
                        raise ConfigError(
                            f"tags {id_a} and {id_b} are only {d} bits apart "
                            f"under rotation; need more than {floor}"
                        )

    def __len__(self):
        return len(self.entries)

    def best_match(self, grid: np.ndarray):
        """Closest (tag_id, hamming, rotation) over all entries and rotations.

        rotation r means the sampled grid equals the entry rotated r times by
        90 degrees counter-clockwise (numpy rot90 convention).  Acceptance
        against max_hamming is the caller's business.
        """
        grid = np.asarray(grid, dtype=np.uint8)
        best = None
        for tag_id, entry in self.entries:
            for r, rot in enumerate(grid_rotations(entry)):
                d = hamming_distance(grid, rot)
                if best is None or d < best[1]:
                    best = (tag_id, d, r)
        return best


def load_codebook(path, max_hamming: int = 1) -> TagCodebook:
    """Read a codebook text file (see module docstring for the format)."""
    entries = []
    cell_count = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'tag_id hex_code k', got {raw!r}"
                )
            try:
                tag_id = int(parts[0])
                code = int(parts[1], 16)
                k = int(parts[2])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if cell_count is None:
                cell_count = k
            elif k != cell_count:
                raise ConfigError(
                    f"{path}:{lineno}: cell count {k} differs from earlier {cell_count}"
                )
            entries.append((tag_id, grid_from_code(code, k)))
    if not entries:
        raise ConfigError(f"{path}: no codebook entries found")
    return TagCodebook(tuple(entries), cell_count, max_hamming)


def save_codebook(path, codebook: TagCodebook):
    hex_width = (codebook.cell_count ** 2 + 3) // 4
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# tag_id hex_code cells_per_side\n")
        for tag_id, grid in codebook.entries:
            code = code_from_grid(grid)
            fh.write(f"{tag_id} {code:0{hex_width}x} {codebook.cell_count}\n")


# Eight 6x6 codes found by seeded random search.  Any two codes differ in at
# least 12 bits under every relative rotation, each code differs from its own
# rotations by at least 12 bits (so the decoded orientation is unambiguous),
# and every rotation is at least 12 bits from all-dark and all-light.
_DEFAULT_CODES = (
    (0, 0xFA08FEF3F),
    (1, 0x615481F7F),
    (2, 0xEC59DD7C2),
    (3, 0x42FE46521),
    (4, 0x51B058462),
    (5, 0x1E3B3A1F8),
    (6, 0x3DE46552C),
    (7, 0x518B7086C),
)


def default_codebook(max_hamming: int = 1) -> TagCodebook:
    """The built-in eight-entry 6x6 codebook."""
    entries = tuple((tid, grid_from_code(code, 6)) for tid, code in _DEFAULT_CODES)
    return TagCodebook(entries, 6, max_hamming)
