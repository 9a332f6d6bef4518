from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Sequence, Tuple

import numpy as np
from autograd.tracer import getval

from metameta.errors import ShapeError


@dataclass(frozen=True, eq=False)
class ParamSet:
    """
    Named, ordered arrays of one network.

    Entries may hold autograd boxes while a gradient is being traced; published
    ParamSets (after `detached()`) hold plain float64 arrays.
    """

    names: Tuple[str, ...]
    arrays: Tuple[Any, ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.arrays):
            raise ShapeError("ParamSet needs one array per name")
        if len(set(self.names)) != len(self.names):
            raise ShapeError(f"ParamSet names must be unique: {list(self.names)!r}")

    @classmethod
    def from_items(cls, items: Sequence[Tuple[str, Any]]) -> ParamSet:
        return cls(tuple(n for n, _ in items), tuple(a for _, a in items))

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> Any:
        try:
            return self.arrays[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def items(self) -> List[Tuple[str, Any]]:
        return list(zip(self.names, self.arrays))

    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(np.shape(a)) for a in self.arrays)

    @property
    def size(self) -> int:
        return int(sum(int(np.prod(s)) for s in self.shapes()))

    def is_congruent(self, other: ParamSet) -> bool:
        return self.names == other.names and self.shapes() == other.shapes()

    def require_congruent(self, other: ParamSet, what: str = "ParamSet") -> None:
        if not self.is_congruent(other):
            raise ShapeError(
                f"{what} is not congruent: "
                f"{list(zip(self.names, self.shapes()))!r} vs "
                f"{list(zip(other.names, other.shapes()))!r}"
            )

    def with_arrays(self, arrays: Sequence[Any]) -> ParamSet:
        arrays = tuple(arrays)
        if len(arrays) != len(self.names):
            raise ShapeError(f"expected {len(self.names)} arrays, got {len(arrays)}")
        return ParamSet(self.names, arrays)

    def map(self, fn: Callable[[Any], Any]) -> ParamSet:
        return ParamSet(self.names, tuple(fn(a) for a in self.arrays))

    def zip_map(self, other: ParamSet, fn: Callable[[Any, Any], Any]) -> ParamSet:
        self.require_congruent(other)
        return ParamSet(self.names, tuple(fn(a, b) for a, b in zip(self.arrays, other.arrays)))

    def detached(self) -> ParamSet:
        """Plain float64 copies with any autograd boxes stripped."""
        return self.map(lambda a: np.array(getval(a), dtype=np.float64))

    def zeros_like(self) -> ParamSet:
        return self.map(lambda a: np.zeros(np.shape(a), dtype=np.float64))

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(getval(a)))) for a in self.arrays)

    def equals(self, other: ParamSet) -> bool:
        """Exact (bitwise) equality of names, shapes and values."""
        if not self.is_congruent(other):
            return False
        return all(
            np.asarray(getval(a), dtype=np.float64).tobytes()
            == np.asarray(getval(b), dtype=np.float64).tobytes()
            for a, b in zip(self.arrays, other.arrays)
        )

    # ---- namespacing, used to differentiate several networks at once ----

    def prefixed(self, prefix: str) -> ParamSet:
        return ParamSet(tuple(f"{prefix}/{n}" for n in self.names), self.arrays)

    @staticmethod
    def concat(parts: Sequence[ParamSet]) -> ParamSet:
        names: List[str] = []
        arrays: List[Any] = []
        for p in parts:
            names.extend(p.names)
            arrays.extend(p.arrays)
        return ParamSet(tuple(names), tuple(arrays))

    def select(self, prefix: str) -> ParamSet:
        """Entries under `prefix/`, with the prefix removed."""
        head = f"{prefix}/"
        items = [(n[len(head) :], a) for n, a in self.items() if n.startswith(head)]
        if not items:
            raise KeyError(prefix)
        return ParamSet.from_items(items)

    # ---- serialization ----

    def to_dict(self) -> dict:
        entries = []
        for name, arr in self.items():
            a = np.asarray(getval(arr), dtype=np.float64)
            entries.append(
                {
                    "name": name,
                    "shape": [int(s) for s in a.shape],
                    "data": [float(v) for v in a.ravel()],
                }
            )
        return {"entries": entries}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ParamSet:
        try:
            entries = data["entries"]
        except (KeyError, TypeError) as e:
            raise ShapeError("ParamSet document needs an 'entries' list") from e
        items = []
        for entry in entries:
            shape = tuple(int(s) for s in entry["shape"])
            values = np.asarray(entry["data"], dtype=np.float64)
            if int(np.prod(shape)) != values.size:
                raise ShapeError(
                    f"entry {entry.get('name')!r}: shape {list(shape)} does not match "
                    f"{values.size} values"
                )
            items.append((str(entry["name"]), values.reshape(shape)))
        return cls.from_items(items)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ParamSet:
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}{list(s)}" for n, s in zip(self.names, self.shapes()))
        return f"ParamSet({inner})"
