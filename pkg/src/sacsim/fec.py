"""CRC-aided polar coding for the repeated-frame payload.

Encoder: CRC append, reliability-ordered input placement, butterfly
transform, shortening of the mother code down to the rate-matched
length.  Decoder: successive-cancellation list decoding (min-sum LLR
path metrics) with CRC selection across the surviving list.

Code construction uses a Gaussian-approximation density evolution over
per-position channel qualities, which lets the shortened (known-zero)
code bits enter the recursion as effectively noiseless positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

# CRC-11: x^11 + x^10 + x^9 + x^5 + 1, zero initial state so the
# (info -> codeword) map stays linear over GF(2).
CRC11_POLY = np.array([1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1], dtype=np.int8)

# LLR magnitude assigned to shortened (known-zero) code bits.
_SHORT_LLR = 1e9
# Channel-quality mean assigned to shortened positions in construction.
_SHORT_MEAN = 1e4


def crc_remainder(bits, poly=CRC11_POLY) -> np.ndarray:
    """GF(2) remainder of bits * x^deg(poly) modulo poly."""
    bits = np.asarray(bits, dtype=np.int8).reshape(-1)
    k = len(poly) - 1
    buf = np.concatenate([bits, np.zeros(k, dtype=np.int8)])
    for i in range(bits.size):
        if buf[i]:
            buf[i:i + k + 1] ^= poly
    return buf[-k:]


def crc_ok(bits_with_crc, poly=CRC11_POLY) -> bool:
    """True when the trailing CRC matches the leading payload."""
    bits = np.asarray(bits_with_crc, dtype=np.int8).reshape(-1)
    k = len(poly) - 1
    return bool(np.array_equal(crc_remainder(bits[:-k], poly), bits[-k:]))


def polar_transform(u) -> np.ndarray:
    """Butterfly transform x = u * F^(log2 N) in natural bit order."""
    x = np.asarray(u, dtype=np.int8).copy()
    h = 1
    while h < x.size:
        blocks = x.reshape(-1, 2 * h)
        blocks[:, :h] ^= blocks[:, h:]
        h *= 2
    return x


def _phi(x: np.ndarray) -> np.ndarray:
    """Gaussian-approximation phi function (Chung-style fit)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 10.0
    xs = np.maximum(x[small], 1e-12)
    out[small] = np.exp(-0.4527 * xs ** 0.86 + 0.0218)
    xl = x[~small]
    out[~small] = np.sqrt(np.pi / xl) * np.exp(-xl / 4.0) * (1.0 - 10.0 / (7.0 * xl))
    return np.clip(out, 0.0, 1.0)


def _phi_inv(y: float) -> float:
    """Inverse of :func:`_phi` by bisection on [1e-12, 4e4]."""
    lo, hi = 1e-12, 4.0e4
    if y >= _phi(np.array([lo]))[0]:
        return lo
    if y <= _phi(np.array([hi]))[0]:
        return hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _phi(np.array([mid]))[0] > y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _ga_means(channel_means: np.ndarray) -> np.ndarray:
    """Propagate per-position LLR means from code bits to input bits."""
    m = np.asarray(channel_means, dtype=float)
    if m.size == 1:
        return m.copy()
    half = m.size // 2
    left, right = m[:half], m[half:]
    p = 1.0 - (1.0 - _phi(left)) * (1.0 - _phi(right))
    check = np.array([_phi_inv(v) for v in p])
    return np.concatenate([_ga_means(check), _ga_means(left + right)])


@dataclass(frozen=True)
class PolarConfig:
    """Shortened CRC-aided polar code parameters.

    The mother code length is the next power of two at or above the
    rate-matched length ``e``; the last ``n_mother - e`` code bits are
    shortened (known zero, not transmitted) with their input positions
    forced frozen.
    """

    k_info: int
    e: int
    k_crc: int = 11
    list_size: int = 8
    design_snr_db: float = 2.0
    n_mother: int = field(init=False)
    info_positions: np.ndarray = field(init=False, repr=False)
    frozen_mask: np.ndarray = field(init=False, repr=False)
    _crc_gen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k_info < 1 or self.e < 2:
            raise ValueError("invalid code dimensions")
        if self.k_info + self.k_crc > self.e:
            raise ValueError("payload plus CRC exceeds the rate-matched length")
        if self.list_size < 1:
            raise ValueError("list size must be >= 1")
        n_mother = 1 << math.ceil(math.log2(self.e))
        means = np.full(n_mother, 4.0 * 10.0 ** (self.design_snr_db / 10.0))
        means[self.e:] = _SHORT_MEAN
        reliability = _ga_means(means)
        reliability[self.e:] = -np.inf  # shortened inputs stay frozen
        k_total = self.k_info + self.k_crc
        info = np.sort(np.argsort(reliability, kind="stable")[::-1][:k_total])
        frozen = np.ones(n_mother, dtype=np.uint8)
        frozen[info] = 0
        object.__setattr__(self, "n_mother", n_mother)
        object.__setattr__(self, "info_positions", info)
        object.__setattr__(self, "frozen_mask", frozen)
        # CRC as a generator matrix (it is GF(2)-linear with zero init)
        gen = np.empty((self.k_info, self.k_crc), dtype=np.int8)
        unit = np.zeros(self.k_info, dtype=np.int8)
        for i in range(self.k_info):
            unit[i] = 1
            gen[i] = crc_remainder(unit)
            unit[i] = 0
        object.__setattr__(self, "_crc_gen", gen)

    @property
    def code_rate(self) -> float:
        return self.k_info / self.e

    def crc_bits(self, info_bits: np.ndarray) -> np.ndarray:
        """Matrix form of :func:`crc_remainder` for the hot path."""
        return (info_bits.astype(np.int32) @ self._crc_gen.astype(np.int32)
                % 2).astype(np.int8)


def polar_encode(info_bits, cfg: PolarConfig) -> np.ndarray:
    """Encode ``k_info`` bits into ``e`` coded bits."""
    info_bits = np.asarray(info_bits, dtype=np.int8).reshape(-1)
    if info_bits.size != cfg.k_info:
        raise ValueError(f"expected {cfg.k_info} info bits, got {info_bits.size}")
    payload = np.concatenate([info_bits, cfg.crc_bits(info_bits)])
    u = np.zeros(cfg.n_mother, dtype=np.int8)
    u[cfg.info_positions] = payload
    x = polar_transform(u)
    # shortened tail is structurally zero; transmit only the head
    return x[:cfg.e]


@njit(cache=True)
def _upd_llrs(llr, bits_left, i, n):
    """Refresh the working LLRs in the 2N-1 heap for leaf ``i``."""
    if i == 0:
        top = n
    else:
        t = 0
        while (i >> t) & 1 == 0:
            t += 1
        lev = t + 1
        start = (1 << (lev - 1)) - 1
        length = 1 << (lev - 1)
        pstart = (1 << lev) - 1
        for j in range(length):
            a = llr[pstart + j]
            b = llr[pstart + j + length]
            if bits_left[start + j]:
                llr[start + j] = b - a
            else:
                llr[start + j] = b + a
        top = t
    for lev in range(top, 0, -1):
        start = (1 << (lev - 1)) - 1
        length = 1 << (lev - 1)
        pstart = (1 << lev) - 1
        for j in range(length):
            a = llr[pstart + j]
            b = llr[pstart + j + length]
            s = 1.0 if (a >= 0) == (b >= 0) else -1.0
            llr[start + j] = s * min(abs(a), abs(b))


@njit(cache=True)
def _upd_bits(bits_left, bits_right, i, n, n_total, latest):
    """Propagate the decision for leaf ``i`` into the partial sums."""
    if i == n_total - 1:
        return
    if i % 2 == 0:
        bits_left[0] = latest
        return
    s = 0
    while (i >> s) & 1 == 1:
        s += 1
    bits_right[0] = latest
    for lev in range(1, s):
        start = (1 << (lev - 1)) - 1
        length = 1 << (lev - 1)
        pstart = (1 << lev) - 1
        for j in range(length):
            bits_right[pstart + j] = bits_left[start + j] ^ bits_right[start + j]
            bits_right[pstart + j + length] = bits_right[start + j]
    start = (1 << (s - 1)) - 1
    length = 1 << (s - 1)
    pstart = (1 << s) - 1
    for j in range(length):
        bits_left[pstart + j] = bits_left[start + j] ^ bits_right[start + j]
        bits_left[pstart + j + length] = bits_right[start + j]


@njit(cache=True)
def _scl_decode(llr_ch, frozen, list_size):
    """List decode one block; returns (decisions[L, N], metrics[L])."""
    n_total = llr_ch.shape[0]
    n = 0
    while (1 << n) < n_total:
        n += 1
    L = list_size
    llr = np.zeros((L, 2 * n_total - 1))
    b_left = np.zeros((L, n_total - 1), dtype=np.uint8)
    b_right = np.zeros((L, n_total - 1), dtype=np.uint8)
    u = np.zeros((L, n_total), dtype=np.uint8)
    pm = np.zeros(L)
    llr[0, n_total - 1:] = llr_ch
    active = 1

    cand = np.empty(2 * L)
    keep = np.empty(2 * L, dtype=np.uint8)
    free_slots = np.empty(L, dtype=np.int64)

    for i in range(n_total):
        for p in range(active):
            _upd_llrs(llr[p], b_left[p], i, n)
        if frozen[i]:
            for p in range(active):
                d = llr[p, 0]
                u[p, i] = 0
                if d < 0.0:
                    pm[p] += -d
        elif 2 * active <= L:
            for p in range(active):
                q = active + p
                llr[q] = llr[p]
                b_left[q] = b_left[p]
                b_right[q] = b_right[p]
                u[q] = u[p]
                d = llr[p, 0]
                u[p, i] = 0
                u[q, i] = 1
                pm[q] = pm[p]
                if d < 0.0:
                    pm[p] += -d
                else:
                    pm[q] += d
            active *= 2
        else:
            for p in range(active):
                d = llr[p, 0]
                cand[p] = pm[p] + (-d if d < 0.0 else 0.0)
                cand[p + active] = pm[p] + (d if d > 0.0 else 0.0)
            order = np.argsort(cand[:2 * active])
            for j in range(2 * active):
                keep[j] = 0
            for j in range(active):
                keep[order[j]] = 1
            n_free = 0
            for p in range(active):
                if keep[p] == 0 and keep[p + active] == 0:
                    free_slots[n_free] = p
                    n_free += 1
            for p in range(active):
                k0 = keep[p]
                k1 = keep[p + active]
                if k0 and not k1:
                    u[p, i] = 0
                    pm[p] = cand[p]
                elif k1 and not k0:
                    u[p, i] = 1
                    pm[p] = cand[p + active]
                elif k0 and k1:
                    n_free -= 1
                    q = free_slots[n_free]
                    llr[q] = llr[p]
                    b_left[q] = b_left[p]
                    b_right[q] = b_right[p]
                    u[q] = u[p]
                    u[q, i] = 1
                    pm[q] = cand[p + active]
                    u[p, i] = 0
                    pm[p] = cand[p]
        for p in range(active):
            _upd_bits(b_left[p], b_right[p], i, n, n_total, u[p, i])
    return u[:active], pm[:active]


def polar_decode(llrs, cfg: PolarConfig):
    """CRC-aided list decode of ``e`` channel LLRs.

    Returns ``(info_bits, crc_ok)``; the reported bits come from the
    best-metric CRC-passing path, or the best path overall when no
    path passes.
    """
    llrs = np.asarray(llrs, dtype=float).reshape(-1)
    if llrs.size != cfg.e:
        raise ValueError(f"expected {cfg.e} LLRs, got {llrs.size}")
    if not np.all(np.isfinite(llrs)):
        raise ValueError("LLRs must be finite")
    llr_full = np.concatenate([llrs, np.full(cfg.n_mother - cfg.e, _SHORT_LLR)])
    u_all, pm = _scl_decode(llr_full, cfg.frozen_mask, cfg.list_size)
    order = np.argsort(pm)
    k = cfg.k_crc
    for p in order:
        payload = u_all[p, cfg.info_positions].astype(np.int8)
        if np.array_equal(cfg.crc_bits(payload[:-k]), payload[-k:]):
            return payload[:-k], True
    payload = u_all[order[0], cfg.info_positions].astype(np.int8)
    return payload[:-k], False
