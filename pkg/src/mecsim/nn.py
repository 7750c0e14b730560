"""Dense tanh networks with hand-written reverse mode, Adam, and a binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    bytes 0..7   magic b"MECSIMCK"
    uint32       format version (1)
    uint32       header length L
    L bytes      UTF-8 JSON header: {"nets": [{"name", "sizes", "n_extra"}, ...], "meta": {...}}
    float64[P]   parameters of every net in header order, little-endian,
                 P = sum over nets of (sum_i sizes[i-1]*sizes[i] + sizes[i]) + n_extra
    uint32       CRC-32 of everything before it
"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"MECSIMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def param_count(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


class DenseNet:
    """Affine layers with tanh between them and a linear output.

    Parameters live in one flat array; ``layers`` holds (W, b) views into it with
    ``W`` shaped (fan_in, fan_out).
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_gain: float = 1.0,
                 params: np.ndarray | None = None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        n = param_count(self.sizes)
        if params is None:
            params = np.zeros(n)
            if rng is not None:
                self._init(params, rng, out_gain)
        elif len(params) != n:
            raise ValueError(f"expected {n} parameters, got {len(params)}")
        self.params = np.asarray(params, dtype=float)
        self._bind()

    def _bind(self):
        self.layers = []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = self.params[off:off + a * b].reshape(a, b)
            off += a * b
            bias = self.params[off:off + b]
            off += b
            self.layers.append((W, bias))

    def _init(self, params, rng, out_gain):
        off = 0
        pairs = list(zip(self.sizes[:-1], self.sizes[1:]))
        for i, (a, b) in enumerate(pairs):
            gain = out_gain if i == len(pairs) - 1 else 1.0
            params[off:off + a * b] = rng.standard_normal(a * b) * gain / np.sqrt(a)
            off += a * b + b

    def set_params(self, params: np.ndarray) -> None:
        self.params[:] = params

    def forward(self, x):
        """Return ``(output, cache)``; accepts a single vector or a batch of rows."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        cache = [h]
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def backward(self, cache, grad_out) -> np.ndarray:
        if not cache:
            raise ValueError("backward needs the cache of a forward pass")
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads = []
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            W, _ = self.layers[i]
            if i < last:
                g = g * (1.0 - cache[i + 1] ** 2)
            grads.append((cache[i].T @ g, g.sum(axis=0)))
            if i > 0:
                g = g @ W.T
        flat = []
        for gW, gb in reversed(grads):
            flat.append(gW.ravel())
            flat.append(gb)
        return np.concatenate(flat)

    def __call__(self, x):
        return self.forward(x)[0]


@dataclass
class Adam:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0
    skipped: int = field(default=0)

    def step(self, params: np.ndarray, grads: np.ndarray) -> bool:
        """In-place bias-corrected update; a non-finite gradient skips the step."""
        if params.shape != grads.shape:
            raise ValueError("parameter and gradient shapes differ")
        if not np.all(np.isfinite(grads)):
            self.skipped += 1
            log.warning("non-finite gradient, skipping Adam step %d", self.t + 1)
            return False
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return True


def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """``nets`` maps a name to ``(sizes, flat_params, n_extra)``."""
    header = {"nets": [], "meta": meta or {}}
    arrays = []
    for name, (sizes, params, n_extra) in nets.items():
        params = np.asarray(params, dtype="<f8")
        if len(params) != param_count(sizes) + n_extra:
            raise ValueError(f"net {name}: parameter count does not match its manifest")
        header["nets"].append({"name": name, "sizes": list(map(int, sizes)), "n_extra": int(n_extra)})
        arrays.append(params)
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<II", VERSION, len(hdr)) + hdr
    body += np.concatenate(arrays).astype("<f8").tobytes() if arrays else b""
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(body)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(nets, meta)`` with ``nets[name] = (sizes, params, n_extra)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 20 or data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    flat = np.frombuffer(data[16 + hlen:-4], dtype="<f8").astype(float)
    nets = {}
    off = 0
    for entry in header["nets"]:
        n = param_count(entry["sizes"]) + entry["n_extra"]
        if off + n > len(flat):
            raise CheckpointError(f"{path}: parameter block shorter than its manifest")
        nets[entry["name"]] = (entry["sizes"], flat[off:off + n].copy(), entry["n_extra"])
        off += n
    if off != len(flat):
        raise CheckpointError(f"{path}: trailing parameters beyond the manifest")
    return nets, header.get("meta", {})
