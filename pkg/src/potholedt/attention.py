"""Forward passes of the channel (CAM), position (PAM) and dual (DAM) attention
modules, and the per-level attention-aggregation scheme.

Tensors are plain ``float64`` numpy arrays shaped ``(N, C, H, W)``. Nothing
here trains; parameters are passed in or drawn from a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

AM_TYPES = ("CAM", "PAM", "DAM")
N_LEVELS = 5


def check_tensor4(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax_rows(a):
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _init(rng, shape, fan_in):
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)


# --------------------------------------------------------------------------
# CAM


def cam_reduction(channels: int, reduction: int = 16) -> int:
    """Largest divisor of ``channels`` not above ``reduction``; ``channels`` if it is smaller."""
    if channels < reduction:
        return channels
    r = reduction
    while channels % r:
        r -= 1
    return r


@dataclass(frozen=True, eq=False)
class CamParams:
    w1: np.ndarray  # (C/r, C)
    b1: np.ndarray  # (C/r,)
    w2: np.ndarray  # (C, C/r)
    b2: np.ndarray  # (C,)

    def __post_init__(self):
        hidden, c = np.shape(self.w1)
        if np.shape(self.b1) != (hidden,) or np.shape(self.w2) != (c, hidden) \
                or np.shape(self.b2) != (c,):
            raise ValueError("inconsistent CAM parameter shapes")
        if c % hidden:
            raise ValueError(f"hidden width {hidden} does not divide C={c}")

    @property
    def channels(self) -> int:
        return self.w1.shape[1]

    @property
    def reduction(self) -> int:
        return self.w1.shape[1] // self.w1.shape[0]

    @classmethod
    def random(cls, channels, rng, reduction=16):
        r = cam_reduction(channels, reduction)
        hidden = channels // r
        return cls(_init(rng, (hidden, channels), channels), np.zeros(hidden),
                   _init(rng, (channels, hidden), hidden), np.zeros(channels))

    @classmethod
    def constant(cls, channels, reduction=16, bias2=0.0):
        hidden = channels // cam_reduction(channels, reduction)
        return cls(np.zeros((hidden, channels)), np.zeros(hidden),
                   np.zeros((channels, hidden)), np.full(channels, float(bias2)))


def cam_gate(x, p: CamParams) -> np.ndarray:
    """Per-(n, c) weights in (0, 1)."""
    s = x.mean(axis=(2, 3))
    h = np.maximum(s @ p.w1.T + p.b1, 0.0)
    return sigmoid(h @ p.w2.T + p.b2)


def cam_forward(x, p: CamParams) -> np.ndarray:
    x = check_tensor4(x)
    if x.shape[1] != p.channels:
        raise ValueError(f"CAM built for C={p.channels}, input has C={x.shape[1]}")
    z = cam_gate(x, p)
    return x * z[:, :, None, None]


# --------------------------------------------------------------------------
# PAM: channel mean/max pooling -> k x k conv -> sigmoid spatial gate


@dataclass(frozen=True, eq=False)
class PamParams:
    kernel: np.ndarray  # (2, k, k): [mean-map weights, max-map weights]
    bias: float = 0.0

    def __post_init__(self):
        shape = np.shape(self.kernel)
        if len(shape) != 3 or shape[0] != 2 or shape[1] != shape[2]:
            raise ValueError(f"PAM kernel must be (2, k, k), got {shape}")
        if shape[1] % 2 == 0:
            raise ValueError("PAM kernel size must be odd")

    @property
    def k(self) -> int:
        return self.kernel.shape[1]

    @classmethod
    def random(cls, rng, k=7):
        return cls(_init(rng, (2, k, k), 2 * k * k), 0.0)

    @classmethod
    def constant(cls, k=7, bias=0.0):
        return cls(np.zeros((2, k, k)), float(bias))


def pam_gate(x, p: PamParams) -> np.ndarray:
    """Spatial weights of shape (N, H, W) in (0, 1)."""
    pooled = np.stack([x.mean(axis=1), x.max(axis=1)], axis=1)  # (N, 2, H, W)
    pad = (p.k - 1) // 2
    padded = np.pad(pooled, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(padded, (p.k, p.k), axis=(2, 3))  # (N, 2, H, W, k, k)
    conv = np.einsum("nchwij,cij->nhw", win, p.kernel)
    return sigmoid(conv + p.bias)


def pam_forward(x, p: PamParams) -> np.ndarray:
    x = check_tensor4(x)
    m = pam_gate(x, p)
    return x * m[:, None, :, :]


# --------------------------------------------------------------------------
# DAM: self-attention over positions and over channels, summed residually


@dataclass(frozen=True, eq=False)
class DamParams:
    q: np.ndarray  # (C, C/8)
    k: np.ndarray  # (C, C/8)
    v: np.ndarray  # (C, C)
    gamma_p: float = 0.0
    gamma_c: float = 0.0

    def __post_init__(self):
        c = np.shape(self.v)[0]
        if c < 8:
            raise ValueError("DAM needs at least 8 channels")
        if np.shape(self.v) != (c, c) or np.shape(self.q) != (c, c // 8) \
                or np.shape(self.k) != (c, c // 8):
            raise ValueError("inconsistent DAM parameter shapes")
        if not (np.isfinite(self.gamma_p) and np.isfinite(self.gamma_c)):
            raise ValueError("DAM scales must be finite")

    @property
    def channels(self) -> int:
        return self.v.shape[0]

    @classmethod
    def random(cls, channels, rng, gamma_p=0.0, gamma_c=0.0):
        if channels < 8:
            raise ValueError("DAM needs at least 8 channels")
        c8 = channels // 8
        return cls(_init(rng, (channels, c8), channels), _init(rng, (channels, c8), channels),
                   _init(rng, (channels, channels), channels), gamma_p, gamma_c)


def dam_forward(x, p: DamParams, return_attention: bool = False):
    """Dual attention. With ``return_attention`` also returns the position
    affinities ``(N, L, L)`` and channel affinities ``(N, C, C)``."""
    x = check_tensor4(x)
    n, c, h, w = x.shape
    if c != p.channels:
        raise ValueError(f"DAM built for C={p.channels}, input has C={c}")
    out = np.empty_like(x)
    a_pos = np.empty((n, h * w, h * w))
    a_chan = np.empty((n, c, c))
    for b in range(n):
        xf = x[b].reshape(c, h * w)
        queries = xf.T @ p.q
        keys = xf.T @ p.k
        a_pos[b] = softmax_rows(queries @ keys.T)
        a_chan[b] = softmax_rows(xf @ xf.T)
        y = xf.copy()
        # a zero scale contributes nothing, so the identity at gamma=0 is bitwise
        if p.gamma_p != 0.0:
            y += p.gamma_p * ((p.v.T @ xf) @ a_pos[b].T)
        if p.gamma_c != 0.0:
            y += p.gamma_c * (a_chan[b] @ xf)
        out[b] = y.reshape(c, h, w)
    if return_attention:
        return out, a_pos, a_chan
    return out


# --------------------------------------------------------------------------
# aggregation scheme


@dataclass(frozen=True)
class AttentionScheme:
    """Attention module per network level, lowest level first.

    Levels 1..n-1 sit on the skip connections, level n on the deepest
    feature map; DAM is only allowed there.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(None if lv in (None, "", "-", "none", "None") else str(lv).upper()
                       for lv in self.levels)
        if len(levels) != N_LEVELS:
            raise ValueError(f"scheme needs {N_LEVELS} levels, got {len(levels)}")
        for i, lv in enumerate(levels):
            if lv is not None and lv not in AM_TYPES:
                raise ValueError(f"unknown attention module {lv!r} at level {i + 1}")
            if lv == "DAM" and i != len(levels) - 1:
                raise ValueError(f"DAM is only allowed at the highest level, found at level {i + 1}")
        object.__setattr__(self, "levels", levels)

    @property
    def n(self) -> int:
        return len(self.levels)

    @classmethod
    def parse(cls, text: str) -> "AttentionScheme":
        return cls(tuple(part.strip() for part in text.split(",")))

    def __str__(self):
        return ",".join(lv or "-" for lv in self.levels)


def _scheme(*levels):
    return AttentionScheme(levels)


# architecture columns of the U-Net and RTFNet variant tables
AA_UNET_VARIANTS = {
    "A": _scheme(None, None, None, None, None),
    "B": _scheme(None, None, None, None, "DAM"),
    "C": _scheme(None, None, None, None, "CAM"),
    "D": _scheme(None, None, None, None, "PAM"),
    "E": _scheme(None, None, None, "CAM", None),
    "F": _scheme(None, None, None, "PAM", None),
    "G": _scheme(None, None, "CAM", None, None),
    "H": _scheme(None, None, "PAM", None, None),
    "I": _scheme(None, "CAM", None, None, None),
    "J": _scheme(None, "PAM", None, None, None),
    "K": _scheme("CAM", None, None, None, None),
    "L": _scheme("PAM", None, None, None, None),
    "M": _scheme(None, None, None, "CAM", "DAM"),
    "N": _scheme(None, None, None, "PAM", "DAM"),
    "O": _scheme(None, None, "CAM", "CAM", "DAM"),
    "P": _scheme(None, None, "PAM", "CAM", "DAM"),
    "Q": _scheme(None, "CAM", "CAM", "CAM", "DAM"),
    "R": _scheme(None, "PAM", "CAM", "CAM", "DAM"),
    "S": _scheme("CAM", "CAM", "CAM", "CAM", "DAM"),
    "T": _scheme("PAM", "CAM", "CAM", "CAM", "DAM"),
}

AA_RTFNET_VARIANTS = {
    "A": _scheme(None, None, None, None, None),
    "B": _scheme(None, None, None, None, "DAM"),
    "C": _scheme(None, None, None, "CAM", "DAM"),
    "D": _scheme(None, None, None, "PAM", "DAM"),
    "E": _scheme(None, None, "CAM", "CAM", "DAM"),
    "F": _scheme(None, None, "PAM", "CAM", "DAM"),
    "G": _scheme(None, "CAM", "CAM", "CAM", "DAM"),
    "H": _scheme(None, "PAM", "CAM", "CAM", "DAM"),
    "I": _scheme("CAM", "CAM", "CAM", "CAM", "DAM"),
    "J": _scheme("PAM", "CAM", "CAM", "CAM", "DAM"),
}

#: PAM lowest, CAM in the middle, DAM on top
BEST_SCHEME = AA_UNET_VARIANTS["T"]

_FORWARD = {"CAM": (CamParams, cam_forward), "PAM": (PamParams, pam_forward),
            "DAM": (DamParams, dam_forward)}


def random_params(scheme: AttentionScheme, features, seed: int, gamma: float = 0.0):
    """Seeded parameters for every level of ``scheme`` (None where no AM)."""
    rng = np.random.default_rng(seed)
    out = []
    for lv, f in zip(scheme.levels, features):
        c = np.shape(f)[1]
        if lv == "CAM":
            out.append(CamParams.random(c, rng))
        elif lv == "PAM":
            out.append(PamParams.random(rng))
        elif lv == "DAM":
            out.append(DamParams.random(c, rng, gamma, gamma))
        else:
            out.append(None)
    return out


def apply_scheme(features, scheme: AttentionScheme, params) -> list:
    """Apply each level's module to its feature map; identity where none."""
    if len(features) != scheme.n or len(params) != scheme.n:
        raise ValueError(f"expected {scheme.n} feature maps and parameter sets, "
                         f"got {len(features)} and {len(params)}")
    out = []
    for i, (lv, f, p) in enumerate(zip(scheme.levels, features, params)):
        if lv is None:
            out.append(check_tensor4(f).copy())
            continue
        ptype, fwd = _FORWARD[lv]
        if not isinstance(p, ptype):
            raise TypeError(f"level {i + 1} ({lv}) needs {ptype.__name__}, got {type(p).__name__}")
        out.append(fwd(f, p))
    return out


# --------------------------------------------------------------------------
# tensor files: text header "N C H W\n" then little-endian float32 data


def write_tensor(x, path) -> None:
    x = check_tensor4(x)
    with open(Path(path), "wb") as fh:
        fh.write(("%d %d %d %d\n" % x.shape).encode("ascii"))
        fh.write(x.astype("<f4").tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            dims = tuple(int(t) for t in header.decode("ascii").split())
        except (UnicodeDecodeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed tensor header") from exc
        if len(dims) != 4 or min(dims) < 1:
            raise ValueError(f"{path}: header must hold four positive sizes")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {data.size}")
    return data.astype(np.float64).reshape(dims)
