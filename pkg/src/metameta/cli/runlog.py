from __future__ import annotations

import json
from pathlib import Path
from typing import IO, List, Optional, Union


class RunLog:
    """
    JSONL training curve: one {"phase", "iteration", "meta_loss"} object per
    line. Usable directly as a pipeline step hook.
    """

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        self._fh: Optional[IO[str]] = None

    def __enter__(self) -> RunLog:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8", newline="\n")
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __call__(self, phase: str, iteration: int, meta_loss: float) -> None:
        self.write(phase, iteration, meta_loss)

    def write(self, phase: str, iteration: int, meta_loss: float) -> None:
        if self._fh is None:
            raise RuntimeError("run log is not open")
        record = {"phase": phase, "iteration": int(iteration), "meta_loss": float(meta_loss)}
        self._fh.write(json.dumps(record) + "\n")


def read_run_log(path: Union[str, Path]) -> List[dict]:
    with Path(path).open(encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
