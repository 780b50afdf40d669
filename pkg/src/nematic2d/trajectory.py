from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np


@dataclass
class Trajectory:
    """Output times, saved states and per-output diagnostics of one run.

    ``diagnostics`` maps a column name to a list aligned with ``times``.
    ``status`` is ``"completed"`` or a halt reason such as ``"close-approach"``.
    """

    times: List[float] = field(default_factory=list)
    states: List[Any] = field(default_factory=list)
    diagnostics: Dict[str, list] = field(default_factory=dict)
    status: str = "completed"
    meta: Dict[str, Any] = field(default_factory=dict)

    def record(self, t, state, **diag):
        self.times.append(float(t))
        self.states.append(state)
        for key, value in diag.items():
            self.diagnostics.setdefault(key, []).append(value)

    def series(self, key) -> np.ndarray:
        return np.asarray(self.diagnostics[key])

    def __len__(self):
        return len(self.times)
