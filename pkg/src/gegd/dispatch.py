"""Parallel cost evaluation and the external-cost subprocess protocol.

Wire format (one JSON object per line over the child's stdin/stdout)::

    request:  {"id": 7, "fidelity": "hi", "rows": 18, "cols": 36, "design": "0011..."}
    response: {"id": 7, "cost": -1.25}   or   {"id": 7, "error": "message"}

``design`` is the row-major 0/1 string. Responses may arrive in any order and
are matched by id.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import DesignGrid
from .problems import CostEvaluationError, Problem, as_density

logger = logging.getLogger(__name__)


class Dispatcher:
    """Order-preserving fan-out over a thread pool; ``workers=1`` runs inline."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("worker count must be at least 1")
        self.workers = int(workers)
        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None

    def map(self, fn: Callable, items: Iterable) -> list:
        items = list(items)
        if self._pool is None or len(items) < 2:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _evaluate_with_retry(problem: Problem, design, fidelity: str) -> float:
    for attempt in range(2):
        try:
            value = float(problem.cost(design, fidelity))
        except CostEvaluationError:
            raise
        except Exception as exc:  # noqa: BLE001 - any backend failure is retried once
            if attempt == 0:
                logger.warning("cost evaluation failed (%s); retrying", exc)
                continue
            logger.warning("cost evaluation failed twice (%s); dropping member", exc)
            return math.nan
        if math.isfinite(value):
            return value
        if attempt == 0:
            logger.warning("non-finite cost; retrying")
    return math.nan


def dispatch_costs(problem: Problem, designs: Sequence, fidelities: Sequence[str],
                   dispatcher: Dispatcher | None = None) -> np.ndarray:
    """Evaluate designs in member order; failed members come back as NaN."""
    if len(designs) != len(fidelities):
        raise ValueError("one fidelity per design required")
    batch = getattr(problem, "evaluate_batch", None)
    if batch is not None:
        return np.asarray(batch(designs, fidelities), dtype=float)
    dispatcher = dispatcher or Dispatcher(1)
    pairs = list(zip(designs, fidelities))
    return np.asarray(dispatcher.map(lambda p: _evaluate_with_retry(problem, p[0], p[1]), pairs), dtype=float)


def encode_request(req_id: int, fidelity: str, design) -> str:
    bits = (as_density(design) > 0.5).astype(np.uint8)
    rows, cols = bits.shape
    return json.dumps(
        {"id": int(req_id), "fidelity": fidelity, "rows": rows, "cols": cols,
         "design": "".join("1" if b else "0" for b in bits.ravel())},
        separators=(",", ":"),
    )


def decode_design(msg: dict) -> np.ndarray:
    rows, cols, s = int(msg["rows"]), int(msg["cols"]), msg["design"]
    if len(s) != rows * cols or set(s) - {"0", "1"}:
        raise ValueError("malformed design string")
    return (np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")).reshape(rows, cols)


class _Child:
    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self.restarts = 0
        self.proc = self._spawn()
        self.lock = threading.Lock()

    def _spawn(self):
        return subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def restart(self):
        if self.restarts >= 1:
            raise CostEvaluationError(f"external cost process {self.command[0]!r} died twice")
        self.restarts += 1
        logger.warning("external cost process died; restarting")
        try:
            self.proc.kill()
        except OSError:
            pass
        self.proc = self._spawn()

    def roundtrip(self, lines: list[tuple[int, str]]) -> dict[int, dict]:
        """Send requests one at a time, collecting responses by id; replays after one restart."""
        pending = dict(lines)
        out: dict[int, dict] = {}
        with self.lock:
            while pending:
                req_id = next(iter(pending))
                try:
                    self.proc.stdin.write(pending[req_id] + "\n")
                    self.proc.stdin.flush()
                    reply = self.proc.stdout.readline()
                    if not reply:
                        raise BrokenPipeError("child closed its output")
                except (BrokenPipeError, OSError, ValueError):
                    self.restart()
                    continue
                msg = json.loads(reply)
                rid = int(msg["id"])
                if rid not in pending:
                    raise CostEvaluationError(f"unexpected response id {rid}")
                out[rid] = msg
                del pending[rid]
        return out

    def close(self):
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:  # noqa: BLE001
            self.proc.kill()


class ExternalProblem(Problem):
    """Costs computed by one or more child processes speaking the line protocol."""

    supports_low_fidelity = True

    def __init__(self, grid: DesignGrid, command: Sequence[str], processes: int = 1,
                 t_hf: float = 1.0, t_lf: float = 1.0):
        super().__init__(grid, t_hf=t_hf, t_lf=t_lf)
        if processes < 1:
            raise ValueError("need at least one external process")
        self.children = [_Child(command) for _ in range(processes)]
        self._next_id = 0
        self._pool = ThreadPoolExecutor(max_workers=processes) if processes > 1 else None

    def cost(self, design, fidelity: str = "hi") -> float:
        return float(self.evaluate_batch([design], [fidelity])[0])

    def evaluate_batch(self, designs: Sequence, fidelities: Sequence[str]) -> np.ndarray:
        ids = list(range(self._next_id, self._next_id + len(designs)))
        self._next_id += len(designs)
        lines = [(i, encode_request(i, f, self.check_shape(d))) for i, d, f in zip(ids, designs, fidelities)]
        shards = [lines[k :: len(self.children)] for k in range(len(self.children))]
        jobs = [(child, shard) for child, shard in zip(self.children, shards) if shard]
        if self._pool is None:
            replies = [child.roundtrip(shard) for child, shard in jobs]
        else:
            replies = list(self._pool.map(lambda js: js[0].roundtrip(js[1]), jobs))
        merged: dict[int, dict] = {}
        for r in replies:
            merged.update(r)
        out = np.empty(len(ids))
        for k, i in enumerate(ids):
            msg = merged[i]
            if "error" in msg:
                logger.warning("external cost error for request %d: %s", i, msg["error"])
                out[k] = math.nan
            else:
                out[k] = float(msg["cost"])
        return out

    def close(self):
        for child in self.children:
            child.close()
        if self._pool is not None:
            self._pool.shutdown()
