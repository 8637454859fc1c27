"""Key management: per-pair key pools with strict accounting, hop-by-hop
trusted-repeater relay, and transmitter/receiver pairing from a measured
symmetry matrix.

Pool content is simulated: the secret bits of a pool are a deterministic
pseudorandom stream derived from the pool's seed and pair, so draws are
reproducible and the oldest-bits-first contract is testable. Counters obey
produced = consumed + available at all times; draws and relays are atomic.
"""

from __future__ import annotations

import csv
import hashlib
import math
import threading
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment


class InsufficientKeyError(RuntimeError):
    """A draw or relay asked for more bits than a pool holds."""

    def __init__(self, msg: str, pair: tuple[str, str] | None = None):
        super().__init__(msg)
        self.pair = pair


class RouteError(ValueError):
    """A relay route references a node pair without a key pool."""


class MatrixShapeError(ValueError):
    """Pairing matrix is not square or has missing entries."""


def pool_key(a: str, b: str) -> tuple[str, str]:
    """Pools are undirected: one pool per unordered node pair."""
    if a == b:
        raise RouteError(f"a key pool needs two distinct nodes, got {a!r} twice")
    return (a, b) if a < b else (b, a)


def _stream_bits(label: str, start: int, n: int) -> np.ndarray:
    """Bits [start, start+n) of the deterministic stream named by label.
    The stream is SHA-256 in counter mode: random access, no state."""
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    first, last = start // 256, (start + n - 1) // 256
    chunks = [
        np.frombuffer(hashlib.sha256(f"{label}:{i}".encode()).digest(), dtype=np.uint8)
        for i in range(first, last + 1)
    ]
    bits = np.unpackbits(np.concatenate(chunks))
    offset = start - first * 256
    return bits[offset:offset + n].copy()


@dataclass
class KeyPool:
    """Reservoir of secret bits shared by one node pair.

    Bits are consumed oldest-first and exactly once; a failed draw leaves
    the pool untouched. Operations are linearizable via an internal lock.
    """

    pair: tuple[str, str]
    seed: int = 0
    produced_bits: int = 0
    consumed_bits: int = 0
    produced_by_direction: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        self.pair = pool_key(*self.pair)
        self._lock = threading.RLock()
        self._label = f"pool:{self.pair[0]}|{self.pair[1]}:{self.seed}"

    @property
    def available_bits(self) -> int:
        return self.produced_bits - self.consumed_bits

    def deposit(self, n_bits: int, direction: tuple[str, str] | None = None) -> None:
        if n_bits < 0:
            raise ValueError(f"cannot deposit {n_bits} bits")
        with self._lock:
            self.produced_bits += n_bits
            if direction is not None:
                self.produced_by_direction[direction] = (
                    self.produced_by_direction.get(direction, 0) + n_bits
                )

    def draw(self, n_bits: int) -> np.ndarray:
        """Remove and return the oldest n_bits unconsumed bits."""
        if n_bits < 0:
            raise ValueError(f"cannot draw {n_bits} bits")
        with self._lock:
            if n_bits > self.available_bits:
                raise InsufficientKeyError(
                    f"pool {self.pair[0]}-{self.pair[1]}: requested {n_bits} bits, "
                    f"only {self.available_bits} available",
                    pair=self.pair,
                )
            bits = _stream_bits(self._label, self.consumed_bits, n_bits)
            self.consumed_bits += n_bits
            return bits

    def consume(self, n_bits: int) -> None:
        """Debit n_bits without materializing them: the consumer took the
        oldest bits but their content is irrelevant (bulk accounting)."""
        if n_bits < 0:
            raise ValueError(f"cannot consume {n_bits} bits")
        with self._lock:
            if n_bits > self.available_bits:
                raise InsufficientKeyError(
                    f"pool {self.pair[0]}-{self.pair[1]}: requested {n_bits} bits, "
                    f"only {self.available_bits} available",
                    pair=self.pair,
                )
            self.consumed_bits += n_bits

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "pair": list(self.pair),
                "produced_bits": self.produced_bits,
                "consumed_bits": self.consumed_bits,
                "available_bits": self.available_bits,
                "produced_by_direction": {
                    f"{t}->{r}": n for (t, r), n in sorted(self.produced_by_direction.items())
                },
            }


class KeyPoolStore:
    """All pools of one network, created on first touch with seeds derived
    from the store seed and the pair."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._pools: dict[tuple[str, str], KeyPool] = {}

    def pool(self, a: str, b: str) -> KeyPool:
        key = pool_key(a, b)
        if key not in self._pools:
            self._pools[key] = KeyPool(pair=key, seed=self.seed)
        return self._pools[key]

    def pools(self) -> list[KeyPool]:
        return [self._pools[k] for k in sorted(self._pools)]

    def snapshot(self) -> list[dict]:
        return [p.snapshot() for p in self.pools()]


@dataclass(frozen=True)
class RelayRoute:
    """Ordered node sequence; every adjacent pair must have a pool."""

    nodes: tuple[str, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise RouteError(f"a relay route needs at least 2 nodes, got {list(self.nodes)}")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def hops(self) -> list[tuple[str, str]]:
        return [pool_key(a, b) for a, b in zip(self.nodes, self.nodes[1:])]


def _locked_hop_pools(route: RelayRoute, store: KeyPoolStore, n_bits: int, stack: ExitStack) -> list[KeyPool]:
    """Acquire every hop pool (in sorted order, once each) and verify the
    total demand, so the caller can debit without partial failure."""
    pools = []
    for hop in route.hops:
        pool = store._pools.get(hop)
        if pool is None:
            raise RouteError(f"no key pool for hop {hop[0]}-{hop[1]}")
        pools.append(pool)
    unique = {pool.pair: pool for pool in pools}
    for pair in sorted(unique):
        stack.enter_context(unique[pair]._lock)
    demand: dict[tuple[str, str], int] = {}
    for pool in pools:
        demand[pool.pair] = demand.get(pool.pair, 0) + n_bits
    for pool in pools:
        if demand[pool.pair] > pool.available_bits:
            raise InsufficientKeyError(
                f"hop {pool.pair[0]}-{pool.pair[1]}: relay needs {demand[pool.pair]} bits, "
                f"only {pool.available_bits} available",
                pair=pool.pair,
            )
    return pools


def relay_key(route: RelayRoute, store: KeyPoolStore, n_bits: int,
              rng: np.random.Generator) -> np.ndarray:
    """Deliver a fresh n_bits key from the route's first node to its last.

    The key is generated at the source, one-time-pad encrypted under the
    first hop pool, and decrypted/re-encrypted by every trusted intermediate
    node; each hop pool is debited exactly n_bits. Atomic: if any hop is
    under-provisioned, no pool is debited.
    """
    with ExitStack() as stack:
        pools = _locked_hop_pools(route, store, n_bits, stack)
        key = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
        carried = key
        for pool in pools:
            pad = pool.draw(n_bits)
            ciphertext = np.bitwise_xor(carried, pad)   # what crosses the classical channel
            carried = np.bitwise_xor(ciphertext, pad)   # next trusted node recovers the key
        return carried


def relay_consume(route: RelayRoute, store: KeyPoolStore, n_bits: int) -> None:
    """Accounting-only relay: debit every hop pool by n_bits atomically
    without materializing key content (bulk consumers in simulations)."""
    with ExitStack() as stack:
        pools = _locked_hop_pools(route, store, n_bits, stack)
        for pool in pools:
            pool.consume(n_bits)


def relay_throughput(per_hop_rates_bps: list[float]) -> float:
    """Sustainable end-to-end relay rate: the slowest hop."""
    if not per_hop_rates_bps:
        raise ValueError("relay route has no hops")
    if any(r < 0 for r in per_hop_rates_bps):
        raise ValueError(f"hop rates must be >= 0, got {per_hop_rates_bps}")
    return min(per_hop_rates_bps)


# -- device pairing from the symmetry matrix ----------------------------------

@dataclass(frozen=True)
class PairingMatrix:
    """Back-to-back QBER (fraction) per transmitter/receiver combination."""

    transmitters: tuple[str, ...]
    receivers: tuple[str, ...]
    qber: dict[tuple[str, str], float]

    def get(self, transmitter: str, receiver: str, default: float | None = None) -> float | None:
        return self.qber.get((transmitter, receiver), default)

    def as_array(self) -> np.ndarray:
        if len(self.transmitters) != len(self.receivers):
            raise MatrixShapeError(
                f"matrix is {len(self.transmitters)}x{len(self.receivers)}, need square"
            )
        try:
            return np.array([
                [self.qber[(t, r)] for r in self.receivers] for t in self.transmitters
            ], dtype=float)
        except KeyError as exc:
            raise MatrixShapeError(f"missing matrix entry {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Assignment:
    objective: str
    mapping: dict[str, str]          # transmitter -> receiver
    total: float                     # sum of assigned entries
    bottleneck: float                # max of assigned entries


def _has_perfect_matching(allowed: np.ndarray) -> bool:
    # zero cost on allowed edges, prohibitive on the rest
    cost = np.where(allowed, 0.0, 1.0)
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols].sum() == 0.0


def _lexicographic_refine(cost: np.ndarray, feasible_total: float | None,
                          allowed: np.ndarray) -> list[int]:
    """Among assignments restricted to allowed edges (and, when
    feasible_total is given, summing to it), pick the lexicographically
    smallest receiver sequence in transmitter order."""
    n = cost.shape[0]
    chosen: list[int] = []
    used: set[int] = set()
    prefix_cost = 0.0
    for i in range(n):
        for j in range(n):
            if j in used or not allowed[i, j]:
                continue
            rest_rows = [r for r in range(i + 1, n)]
            rest_cols = [c for c in range(n) if c not in used and c != j]
            if rest_rows:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                sub_allowed = allowed[np.ix_(rest_rows, rest_cols)]
                if not _has_perfect_matching(sub_allowed):
                    continue
                if feasible_total is not None:
                    masked = np.where(sub_allowed, sub, np.inf)
                    rr, cc = linear_sum_assignment(masked)
                    rest_best = masked[rr, cc].sum()
                else:
                    rest_best = 0.0
            else:
                rest_best = 0.0
            if feasible_total is not None and not math.isclose(
                prefix_cost + cost[i, j] + rest_best, feasible_total,
                rel_tol=1e-9, abs_tol=1e-12,
            ):
                continue
            chosen.append(j)
            used.add(j)
            prefix_cost += cost[i, j]
            break
        else:
            raise MatrixShapeError("no feasible assignment under the given constraints")
    return chosen


def best_pairing(matrix: PairingMatrix, objective: str = "min_sum") -> Assignment:
    """Optimal transmitter->receiver bijection. min_sum minimizes the total
    QBER; min_max minimizes the worst pair. Ties broken lexicographically
    in transmitter order."""
    cost = matrix.as_array()
    n = cost.shape[0]
    if objective == "min_sum":
        rows, cols = linear_sum_assignment(cost)
        optimal = cost[rows, cols].sum()
        chosen = _lexicographic_refine(cost, optimal, np.ones_like(cost, dtype=bool))
    elif objective == "min_max":
        thresholds = np.unique(cost)
        lo, hi = 0, len(thresholds) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _has_perfect_matching(cost <= thresholds[mid]):
                hi = mid
            else:
                lo = mid + 1
        allowed = cost <= thresholds[lo]
        chosen = _lexicographic_refine(cost, None, allowed)
    else:
        raise ValueError(f"objective must be min_sum|min_max, got {objective!r}")
    mapping = {matrix.transmitters[i]: matrix.receivers[j] for i, j in enumerate(chosen)}
    assigned = [cost[i, j] for i, j in enumerate(chosen)]
    return Assignment(
        objective=objective,
        mapping=mapping,
        total=float(sum(assigned)),
        bottleneck=float(max(assigned)) if assigned else 0.0,
    )


@dataclass(frozen=True)
class SymmetryReport:
    passed: bool
    threshold: float
    violations: tuple[tuple[str, str, float], ...]


def symmetry_check(matrix: PairingMatrix, threshold: float) -> SymmetryReport:
    """Pass iff every matrix entry is strictly below the threshold."""
    if not (0 < threshold < 0.5):
        raise ValueError(f"threshold must be in (0, 0.5), got {threshold}")
    violations = tuple(
        (t, r, matrix.qber[(t, r)])
        for t in matrix.transmitters
        for r in matrix.receivers
        if (t, r) in matrix.qber and matrix.qber[(t, r)] >= threshold
    )
    return SymmetryReport(passed=not violations, threshold=threshold, violations=violations)


def load_pairing_matrix(path: Path | str) -> PairingMatrix:
    """Read a symmetry matrix file: first column transmitter ids, remaining
    columns one receiver each. Values are QBER percentages, as published."""
    path = Path(path)
    if not path.exists():
        raise MatrixShapeError(f"pairing matrix not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MatrixShapeError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise MatrixShapeError(f"{path}: line 1: need a transmitter column and at least one receiver")
        receivers = tuple(h.strip() for h in header[1:])
        transmitters: list[str] = []
        qber: dict[tuple[str, str], float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise MatrixShapeError(
                    f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            t = row[0].strip()
            transmitters.append(t)
            for r, cell in zip(receivers, row[1:]):
                try:
                    value = float(cell) / 100.0
                except ValueError:
                    raise MatrixShapeError(
                        f"{path}: line {lineno}: {cell!r} is not a number"
                    ) from None
                if not (0 <= value <= 0.5):
                    raise MatrixShapeError(
                        f"{path}: line {lineno}: QBER {cell}% outside [0, 50]%"
                    )
                qber[(t, r)] = value
    return PairingMatrix(transmitters=tuple(transmitters), receivers=receivers, qber=qber)
