"""Append-only store of (state, action, next_state) transitions."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


class EmptyBufferError(ValueError):
    pass


def _as_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


class TransitionBuffer:
    """Ordered transitions with fixed state/action dimensions.

    When ``capacity`` is set, the oldest transitions are dropped first.
    """

    def __init__(self, state_dim: int, action_dim: int, capacity: int | None = None):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.capacity = capacity
        self._states: list[np.ndarray] = []
        self._actions: list[np.ndarray] = []
        self._next: list[np.ndarray] = []
        self._cache = None

    @classmethod
    def from_arrays(cls, states, actions, next_states, capacity=None) -> "TransitionBuffer":
        states, actions, next_states = (_as_rows(x) for x in (states, actions, next_states))
        buf = cls(states.shape[1], actions.shape[1], capacity)
        buf.extend(states, actions, next_states)
        return buf

    def append(self, state, action, next_state) -> None:
        s = np.asarray(state, dtype=float).reshape(-1)
        a = np.asarray(action, dtype=float).reshape(-1)
        s2 = np.asarray(next_state, dtype=float).reshape(-1)
        if s.shape[0] != self.state_dim or s2.shape[0] != self.state_dim or a.shape[0] != self.action_dim:
            raise ValueError(
                f"transition dims ({s.shape[0]}, {a.shape[0]}, {s2.shape[0]}) do not match "
                f"buffer ({self.state_dim}, {self.action_dim})"
            )
        self._states.append(s)
        self._actions.append(a)
        self._next.append(s2)
        if self.capacity is not None and len(self._states) > self.capacity:
            del self._states[0], self._actions[0], self._next[0]
        self._cache = None

    def extend(self, states, actions, next_states) -> None:
        for s, a, s2 in zip(states, actions, next_states):
            self.append(s, a, s2)

    def __len__(self) -> int:
        return len(self._states)

    def __getitem__(self, b: int):
        return self._states[b], self._actions[b], self._next[b]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._cache is None:
            if not self._states:
                empty = (np.zeros((0, self.state_dim)), np.zeros((0, self.action_dim)), np.zeros((0, self.state_dim)))
                return empty
            self._cache = (np.stack(self._states), np.stack(self._actions), np.stack(self._next))
        return self._cache

    @property
    def states(self) -> np.ndarray:
        return self.arrays()[0]

    @property
    def actions(self) -> np.ndarray:
        return self.arrays()[1]

    @property
    def next_states(self) -> np.ndarray:
        return self.arrays()[2]

    def columns(self) -> list[str]:
        return (
            [f"s{i}" for i in range(self.state_dim)]
            + [f"a{i}" for i in range(self.action_dim)]
            + [f"next_s{i}" for i in range(self.state_dim)]
        )

    def csv_text(self) -> str:
        """Header s*, a*, next_s*; floats in shortest round-trip form."""
        s, a, s2 = self.arrays()
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns())
        for row in np.hstack([s, a, s2]):
            writer.writerow([repr(float(x)) for x in row])
        return out.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    @classmethod
    def from_csv(cls, path) -> "TransitionBuffer":
        path = Path(path)
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = np.array([[float(x) for x in row] for row in reader], dtype=float)
        state_dim = sum(1 for h in header if h.startswith("s"))
        action_dim = sum(1 for h in header if h.startswith("a"))
        if rows.size == 0:
            return cls(state_dim, action_dim)
        s = rows[:, :state_dim]
        a = rows[:, state_dim:state_dim + action_dim]
        s2 = rows[:, state_dim + action_dim:]
        buf = cls(state_dim, action_dim)
        buf._states, buf._actions, buf._next = list(s), list(a), list(s2)
        return buf
