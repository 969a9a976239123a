"""
Stream files and synthetic stream generators.

Three line formats are supported:

- bits: one `0` or `1` per line;
- edges: `set<TAB>element`, both non-negative integers;
- points: comma-separated integer coordinates.

Blank lines are ignored.
"""

import logging
from collections.abc import Callable, Iterable, Iterator
from pathlib import Path
from typing import Any

import numpy as np

from winsketch.constants import Problem, StreamKind

LOGGER = logging.getLogger(__name__)

Point = tuple[int, ...]


class StreamFormatError(ValueError):
    """
    A stream line that does not parse. `line` is 1-based.
    """

    def __init__(self, path: Path | str, line: int, message: str):
        super().__init__(path, line, message)
        self.path = path
        self.line = line
        self.message = message

    def __str__(self) -> str:
        return f"{self.path}, line {self.line}: {self.message}"


def parse_bit(text: str) -> int:
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return int(text)


def parse_edge(text: str) -> tuple[int, int]:
    parts = text.split("\t")
    if len(parts) != 2:
        raise ValueError(f"expected 'set<TAB>element', got {text!r}")
    set_id, elem_id = (int(part) for part in parts)
    if set_id < 0 or elem_id < 0:
        raise ValueError(f"ids must be non-negative, got {text!r}")
    return set_id, elem_id


def parse_point(text: str) -> Point:
    return tuple(int(part) for part in text.split(","))


def format_bit(value: int) -> str:
    return str(int(value))


def format_edge(value: tuple[int, int]) -> str:
    return f"{value[0]}\t{value[1]}"


def format_point(value: Point) -> str:
    return ",".join(str(c) for c in value)


PARSERS: dict[str, Callable[[str], Any]] = {
    "bits": parse_bit,
    "edges": parse_edge,
    "points": parse_point,
}

FORMATTERS: dict[str, Callable[[Any], str]] = {
    "bits": format_bit,
    "edges": format_edge,
    "points": format_point,
}

PROBLEM_FORMATS = {
    Problem.ONES: "bits",
    Problem.MEDIAN: "bits",
    Problem.KCOVER: "edges",
    Problem.DIVERSITY: "points",
    Problem.CLUSTER: "points",
}


def read_stream(path: Path | str, fmt: str) -> Iterator[Any]:
    """
    Lazily parse a stream file.

    Args:
        path (Path | str): the stream file.
        fmt (str): one of `bits`, `edges` or `points`.

    Raises:
        StreamFormatError: on the first line that does not parse.

    Yields:
        Iterator[Any]: the stream items in order.
    """
    if fmt not in PARSERS:
        raise ValueError(f"Unknown stream format {fmt!r}.")
    parse = PARSERS[fmt]
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                yield parse(text)
            except ValueError as e:
                raise StreamFormatError(path, lineno, str(e)) from e


def write_stream(path: Path | str, values: Iterable[Any], fmt: str) -> int:
    """
    Write a stream, one item per line, and return the number of items written.
    """
    if fmt not in FORMATTERS:
        raise ValueError(f"Unknown stream format {fmt!r}.")
    fmt_value = FORMATTERS[fmt]
    count = 0
    with open(path, "w") as f:
        for value in values:
            f.write(fmt_value(value) + "\n")
            count += 1
    LOGGER.debug(f"Wrote {count} items to {path}.")
    return count


def gen_bits(length: int, seed: int, prob: float = 0.5) -> list[int]:
    if length < 0 or not 0 <= prob <= 1:
        raise ValueError(f"Invalid bit stream parameters length={length}, prob={prob}.")
    rng = np.random.default_rng(seed)
    return [int(b) for b in rng.random(length) < prob]


def gen_edges(length: int, n: int, m: int, seed: int) -> list[tuple[int, int]]:
    """
    Uniform random (set, element) incidences.
    """
    if length < 0 or n < 1 or m < 1:
        raise ValueError(f"Invalid edge stream parameters length={length}, n={n}, m={m}.")
    rng = np.random.default_rng(seed)
    sets = rng.integers(0, n, size=length)
    elems = rng.integers(0, m, size=length)
    return [(int(s), int(e)) for s, e in zip(sets, elems)]


def gen_mixture(
    length: int,
    d: int,
    delta_grid: int,
    seed: int,
    clusters: int = 3,
    spread: float = 2.0,
) -> list[Point]:
    """
    Gaussian mixture with uniform centers, rounded and clamped to [1, Delta]^d.

    Args:
        length (int): number of points.
        d (int): dimension.
        delta_grid (int): side of the domain.
        seed (int): generator seed.
        clusters (int): number of mixture components.
        spread (float): standard deviation of each component.

    Returns:
        list[Point]: the points.
    """
    if length < 0 or d < 1 or delta_grid < 1 or clusters < 1 or spread < 0:
        raise ValueError("Invalid mixture parameters.")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(1, delta_grid, size=(clusters, d))
    labels = rng.integers(0, clusters, size=length)
    X = centers[labels] + rng.normal(0, spread, size=(length, d))
    X = np.clip(np.rint(X), 1, delta_grid).astype(int)
    return [tuple(int(c) for c in x) for x in X]


def cover_counterexample(m: int, k: int = 1) -> list[tuple[int, int]]:
    """
    Edge stream on which k-cover is not smooth: stream A followed by C.

    With k = 1, A is (S_0, e_0..e_{m-1}) then (S_1, e_m..e_{2m-1}) and C is
    (S_0, e_m..e_{2m-1}). The optimum is m on A and on its suffix of S_1 edges, 2m on
    A followed by C and m on the suffix followed by C. Larger k uses k disjoint copies.
    """
    if m < 1 or k < 1:
        raise ValueError(f"Counterexample needs m >= 1 and k >= 1, got m={m}, k={k}.")
    A, C = [], []
    for c in range(k):
        s, base = 2 * c, 2 * m * c
        A += [(s, base + e) for e in range(m)]
        A += [(s + 1, base + m + e) for e in range(m)]
        C += [(s, base + m + e) for e in range(m)]
    return A + C


def diversity_counterexample() -> list[Point]:
    """
    Point stream in [2]^4 on which diversity with k = 2 is not smooth: three points A
    followed by one point C. The best pair is at distance sqrt(2) on A and on A's
    suffix of two points, 2 once C arrives.
    """
    A = [(1, 2, 2, 1), (2, 2, 1, 1), (2, 1, 2, 1)]
    C = [(2, 1, 1, 2)]
    return A + C


def generate_stream(kind: StreamKind, seed: int = 0, **params) -> tuple[str, list[Any]]:
    """
    Generate a synthetic stream.

    Args:
        kind (StreamKind): the generator.
        seed (int): generator seed.
        params: generator parameters (length, n, m, d, delta_grid, clusters, spread,
            prob, k).

    Returns:
        tuple[str, list[Any]]: the line format and the items.
    """
    match kind:
        case StreamKind.BITS:
            return "bits", gen_bits(params["length"], seed, params.get("prob", 0.5))
        case StreamKind.EDGES:
            return "edges", gen_edges(params["length"], params["n"], params["m"], seed)
        case StreamKind.MIXTURE:
            points = gen_mixture(
                params["length"],
                params["d"],
                params["delta_grid"],
                seed,
                params.get("clusters", 3),
                params.get("spread", 2.0),
            )
            return "points", points
        case StreamKind.COVER_COUNTEREXAMPLE:
            return "edges", cover_counterexample(params["m"], params.get("k", 1))
        case StreamKind.DIVERSITY_COUNTEREXAMPLE:
            return "points", diversity_counterexample()
    raise ValueError(f"Unknown stream kind {kind!r}.")
