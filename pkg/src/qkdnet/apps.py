"""Key-consuming applications: the one-time-pad encryption medium and the
seed-refresh VPN gateway.

Only key consumption is modeled faithfully -- every key bit an application
uses is debited from exactly one pool, once. OTP payload encryption is the
real XOR; the VPN's AES payload path is out of scope, only its seed-key
cadence matters.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .keymgmt import InsufficientKeyError, KeyPool, KeyPoolStore, RelayRoute, relay_key

REALTIME = "realtime"
PRELOAD_REQUIRED = "preload_required"


def otp_feasible(data_rate_bps: float, key_rate_bps: float) -> str:
    """Can a one-time-pad stream run live off the pool, or must the key
    material be preloaded out of band?"""
    if data_rate_bps < 0 or key_rate_bps < 0:
        raise ValueError("rates must be >= 0")
    return REALTIME if key_rate_bps >= data_rate_bps else PRELOAD_REQUIRED


def vpn_refresh_rate(path_key_rate_bps: float, key_size_bits: int = 256) -> int:
    """Whole seed keys per second sustainable on a path."""
    if path_key_rate_bps < 0:
        raise ValueError(f"rate must be >= 0, got {path_key_rate_bps}")
    return int(path_key_rate_bps // key_size_bits)


class _KeyFifo:
    """Key bits in transit between the encrypting and decrypting ends."""

    def __init__(self):
        self._chunks: deque[np.ndarray] = deque()

    def push(self, bits: np.ndarray) -> None:
        self._chunks.append(bits)

    def pop(self, n_bits: int) -> np.ndarray:
        out, need = [], n_bits
        while need > 0:
            if not self._chunks:
                raise InsufficientKeyError(f"decrypt needs {need} more key bits than were drawn")
            head = self._chunks.popleft()
            if head.size > need:
                out.append(head[:need])
                self._chunks.appendleft(head[need:])
                need = 0
            else:
                out.append(head)
                need -= head.size
        return np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)


class OtpSession:
    """One-time-pad channel between the two ends of a node pair.

    In realtime mode key bits come straight from the live pool; in preloaded
    mode a card of card_bits is drawn up front (optionally relayed over a
    multi-hop route) and consumed message by message.
    """

    def __init__(self, session_id: str, pool: KeyPool | None = None, mode: str = REALTIME,
                 card_bits: int = 0, data_rate_bps: float = 0.0,
                 route: RelayRoute | None = None, store: KeyPoolStore | None = None,
                 rng: np.random.Generator | None = None):
        if mode not in (REALTIME, "preloaded"):
            raise ValueError(f"mode must be realtime|preloaded, got {mode!r}")
        if mode == REALTIME and pool is None:
            raise ValueError("realtime OTP needs live pool access")
        self.id = session_id
        self.mode = mode
        self.data_rate_bps = data_rate_bps
        self._pool = pool
        self._fifo = _KeyFifo()
        self._card: np.ndarray | None = None
        self._card_used = 0
        if mode == "preloaded":
            if card_bits <= 0:
                raise ValueError("preloaded OTP needs positive card_bits")
            try:
                if route is not None:
                    if store is None or rng is None:
                        raise ValueError("relayed preload needs a pool store and rng")
                    self._card = relay_key(route, store, card_bits, rng)
                else:
                    self._card = pool.draw(card_bits)
            except InsufficientKeyError as exc:
                raise InsufficientKeyError(
                    f"session {session_id}: cannot fill {card_bits}-bit card: {exc}",
                    pair=exc.pair,
                ) from exc

    @property
    def card_remaining_bits(self) -> int:
        if self._card is None:
            return 0
        return self._card.size - self._card_used

    def _draw(self, n_bits: int) -> np.ndarray:
        if self.mode == REALTIME:
            try:
                return self._pool.draw(n_bits)
            except InsufficientKeyError as exc:
                raise InsufficientKeyError(f"session {self.id}: {exc}", pair=exc.pair) from exc
        if n_bits > self.card_remaining_bits:
            raise InsufficientKeyError(
                f"session {self.id}: card exhausted ({self.card_remaining_bits} bits left, "
                f"{n_bits} requested)"
            )
        bits = self._card[self._card_used:self._card_used + n_bits]
        self._card_used += n_bits
        return bits

    def encrypt(self, plaintext_bits: np.ndarray) -> np.ndarray:
        plaintext_bits = np.asarray(plaintext_bits, dtype=np.uint8)
        key = self._draw(plaintext_bits.size)
        self._fifo.push(key)
        return np.bitwise_xor(plaintext_bits, key)

    def decrypt(self, ciphertext_bits: np.ndarray) -> np.ndarray:
        ciphertext_bits = np.asarray(ciphertext_bits, dtype=np.uint8)
        key = self._fifo.pop(ciphertext_bits.size)
        return np.bitwise_xor(ciphertext_bits, key)


@dataclass
class VpnTunnel:
    """Seed-refresh consumer: one fixed-size key per refresh, drawn from a
    pair pool or relayed over a route."""

    tunnel_id: str
    key_size_bits: int = 256
    pool: KeyPool | None = None
    route: RelayRoute | None = None
    store: KeyPoolStore | None = None
    refresh_count: int = 0

    def __post_init__(self):
        if self.key_size_bits != 256:
            raise ValueError(f"seed keys are 256-bit, got {self.key_size_bits}")
        if self.pool is None and (self.route is None or self.store is None):
            raise ValueError("a VPN tunnel needs a pool, or a route with a pool store")

    def refresh(self, rng: np.random.Generator) -> np.ndarray:
        try:
            if self.route is not None:
                key = relay_key(self.route, self.store, self.key_size_bits, rng)
            else:
                key = self.pool.draw(self.key_size_bits)
        except InsufficientKeyError as exc:
            raise InsufficientKeyError(f"tunnel {self.tunnel_id}: {exc}", pair=exc.pair) from exc
        self.refresh_count += 1
        return key
