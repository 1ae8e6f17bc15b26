"""Named parameter collections."""
from __future__ import annotations

from collections.abc import Mapping

import numpy as np


class ParamSet(dict):
    """Ordered mapping of unique parameter names to float64 arrays."""

    def copy(self) -> "ParamSet":
        return ParamSet((k, v.copy()) for k, v in self.items())

    def zeros_like(self) -> "ParamSet":
        return ParamSet((k, np.zeros_like(v)) for k, v in self.items())

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """Entries under ``prefix.`` with the prefix stripped (views, not copies)."""
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.items() if k.startswith(pre)}

    def update_prefixed(self, prefix: str, entries: Mapping[str, np.ndarray]) -> None:
        for k, v in entries.items():
            self[f"{prefix}.{k}"] = v

    def n_values(self) -> int:
        return int(sum(v.size for v in self.values()))

    def check_finite(self, what: str = "parameter") -> None:
        for k, v in self.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite {what} {k!r}")

    def equal(self, other: Mapping[str, np.ndarray]) -> bool:
        """Bit-exact comparison of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == np.asarray(other[k]).tobytes()
            for k in self
        )


# A gradient set has the same layout as the parameters it belongs to.
GradientSet = ParamSet
