"""Search-space encoding shared by the metaheuristics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BOUNDS = {
    "kp": (0.1, 500.0),
    "kvp": (0.01, 200.0),
    "kvi": (0.1, 5000.0),
    "kfv": (0.0, 1.0),
}
DEFAULT_LOG = {"kp": True, "kvp": True, "kvi": True, "kfv": False}


@dataclass(frozen=True, eq=False)
class SearchSpace:
    """Box bounds with optional per-dimension log encoding.

    The optimizers move in encoded coordinates (``log`` of the value for
    log-scaled dimensions) so that a fixed relative step means the same thing
    at 0.1 and at 500. Decoded candidates always lie inside ``lower..upper``.
    """

    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        log_scale = np.broadcast_to(np.asarray(self.log_scale, dtype=bool), lower.shape).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if np.any(lower >= upper):
            raise ValueError("each lower bound must be below its upper bound")
        if np.any(log_scale & (lower <= 0)):
            raise ValueError("log-scaled dimensions need positive bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "log_scale", log_scale)

    @classmethod
    def box(cls, lower, upper) -> "SearchSpace":
        lower = np.asarray(lower, dtype=float)
        return cls(lower, np.asarray(upper, dtype=float), np.zeros(lower.shape, dtype=bool))

    @classmethod
    def gains(cls, bounds: dict | None = None, log_scale: dict | None = None) -> "SearchSpace":
        b = dict(DEFAULT_BOUNDS, **(bounds or {}))
        ls = dict(DEFAULT_LOG, **(log_scale or {}))
        names = tuple(DEFAULT_BOUNDS)
        return cls(np.array([b[n][0] for n in names]), np.array([b[n][1] for n in names]),
                   np.array([ls[n] for n in names]), names)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def enc_lower(self) -> np.ndarray:
        return np.where(self.log_scale, np.log(np.where(self.log_scale, self.lower, 1.0)), self.lower)

    @property
    def enc_upper(self) -> np.ndarray:
        return np.where(self.log_scale, np.log(np.where(self.log_scale, self.upper, 1.0)), self.upper)

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = np.where(self.log_scale, np.exp(np.where(self.log_scale, z, 0.0)), z)
        return np.clip(x, self.lower, self.upper)

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(self.log_scale, np.log(np.where(self.log_scale, x, 1.0)), x)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))
