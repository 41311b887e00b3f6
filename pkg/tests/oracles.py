"""Reference implementations the tests check the package against.

Nothing here imports from ``teekv``; SHA-256 is written out from FIPS 180-4
so the key-hierarchy checks do not share code with OpenSSL or ``hmac``.
"""

import struct

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]
_H0 = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]
_M = 0xFFFFFFFF


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & _M


def sha256(msg: bytes) -> bytes:
    msg = bytes(msg)
    bitlen = len(msg) * 8
    msg += b"\x80" + b"\x00" * ((55 - len(msg)) % 64) + struct.pack(">Q", bitlen)
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = list(struct.unpack(">16I", msg[off:off + 64]))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & _M)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25))
                  + ((e & f) ^ (~e & g)) + _K[i] + w[i]) & _M
            t2 = ((_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))) & _M
            a, b, c, d, e, f, g, hh = (t1 + t2) & _M, a, b, c, (d + t1) & _M, e, f, g
        h = [(x + y) & _M for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return struct.pack(">8I", *h)


def hmac_sha256(key: bytes, msg: bytes) -> bytes:
    if len(key) > 64:
        key = sha256(key)
    key = key.ljust(64, b"\x00")
    inner = sha256(bytes(k ^ 0x36 for k in key) + msg)
    return sha256(bytes(k ^ 0x5C for k in key) + inner)


def ssk_oracle(huk: bytes) -> bytes:
    return hmac_sha256(huk, b"ssk-derivation-v1")


def tsk_oracle(ssk: bytes, uuid_bytes: bytes) -> bytes:
    return hmac_sha256(ssk, uuid_bytes)


STATIC_HUK = b"static-huk-fallback" + b"\x00" * 13


class DictKv:
    """Plain-dict model of the KV TA's observable behaviour.

    Return codes are spelled out numerically; capacity is 1 MiB with 32 bytes
    charged per entry on top of the value.
    """

    OK, BAD, NOT_FOUND, OOM, SHORT = 0, 0xFFFF0006, 0xFFFF0008, 0xFFFF000C, 0xFFFF0010

    def __init__(self, limit=1 << 20, overhead=32):
        self.d = {}
        self.limit, self.overhead = limit, overhead

    def used(self):
        return sum(len(v) + self.overhead for v in self.d.values())

    def put(self, k, v):
        if not 1 <= len(v) <= 4096:
            return self.BAD
        old = self.d.get(k)
        delta = len(v) + self.overhead - (len(old) + self.overhead if old is not None else 0)
        if self.used() + delta > self.limit:
            return self.OOM
        self.d[k] = bytes(v)
        return self.OK

    def get(self, k, out_len):
        if k not in self.d:
            return self.NOT_FOUND, None
        v = self.d[k]
        if out_len < len(v):
            return self.SHORT, None
        return self.OK, v

    def delete(self, k):
        return self.OK if self.d.pop(k, None) is not None else self.NOT_FOUND
