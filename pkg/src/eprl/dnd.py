"""Episodic key/value store with k-nearest-neighbour reads.

Keys are context embeddings, values are cell-state vectors. Reads use
cosine distance d = 1 - cos(q, k) and normalized inverse-kernel weights
w_i = kappa(d_i) / sum_j kappa(d_j) with kappa(d) = 1 / (d + delta).
Lookup is an exhaustive linear scan; stores here hold at most a few
thousand rows and correctness beats speed.

Edge rules (fixed by tests):
  * empty store reads return the zero vector;
  * a zero-norm query, or a zero-norm stored key, is at maximal
    distance (2.0) from everything;
  * distance ties break toward the smaller insertion index;
  * writing an exactly-equal key replaces that entry's value in place.
"""

from __future__ import annotations

import json

import numpy as np

MAX_DISTANCE = 2.0


class DndStore:
    """Append/overwrite key-value memory, cleared at epoch boundaries."""

    def __init__(self, key_dim: int, value_dim: int, k: int = 1,
                 kernel_delta: float = 1e-3):
        if k < 1:
            raise ValueError("k must be >= 1")
        if kernel_delta <= 0:
            raise ValueError("kernel_delta must be positive")
        self.key_dim = key_dim
        self.value_dim = value_dim
        self.k = k
        self.kernel_delta = kernel_delta
        self.read_count = 0
        self.write_count = 0
        self._keys: list[np.ndarray] = []
        self._key_norms: list[float] = []
        self._values: list[np.ndarray] = []
        self._index: dict[bytes, int] = {}  # exact-key row lookup

    def __len__(self) -> int:
        return len(self._keys)

    def entries(self):
        """(key, value, insert_index) triples in insertion order."""
        return [(k.copy(), v.copy(), i)
                for i, (k, v) in enumerate(zip(self._keys, self._values))]

    def write(self, key: np.ndarray, value: np.ndarray) -> None:
        key = np.asarray(key, dtype=np.float64)
        value = np.asarray(value, dtype=np.float64)
        if key.shape != (self.key_dim,):
            raise ValueError(f"key shape {key.shape} != ({self.key_dim},)")
        if value.shape != (self.value_dim,):
            raise ValueError(f"value shape {value.shape} != ({self.value_dim},)")
        self.write_count += 1
        # +0.0 folds -0.0 onto +0.0 so byte lookup equals coordinate equality
        token = (key + 0.0).tobytes()
        row = self._index.get(token)
        if row is not None:
            self._values[row] = value.copy()
            return
        self._index[token] = len(self._keys)
        self._keys.append(key.copy())
        self._key_norms.append(float(np.linalg.norm(key)))
        self._values.append(value.copy())

    def distances(self, query: np.ndarray) -> np.ndarray:
        """Cosine distance from the query to every stored key."""
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.key_dim,):
            raise ValueError(f"query shape {query.shape} != ({self.key_dim},)")
        qn = float(np.linalg.norm(query))
        out = np.empty(len(self._keys))
        for i, (key, kn) in enumerate(zip(self._keys, self._key_norms)):
            if qn == 0.0 or kn == 0.0:
                out[i] = MAX_DISTANCE
            else:
                out[i] = 1.0 - float(np.dot(query, key)) / (qn * kn)
        return out

    def lookup(self, query: np.ndarray):
        """Indices and normalized kernel weights of the k nearest entries."""
        d = self.distances(query)
        order = sorted(range(len(d)), key=lambda i: (d[i], i))[:self.k]
        kappa = [1.0 / (d[i] + self.kernel_delta) for i in order]
        total = sum(kappa)
        return order, [kap / total for kap in kappa]

    def read(self, query: np.ndarray) -> np.ndarray:
        """Weighted blend of the k nearest stored values (zeros if empty)."""
        self.read_count += 1
        if not self._keys:
            np.asarray(query, dtype=np.float64)  # still validate dtype
            return np.zeros(self.value_dim)
        order, weights = self.lookup(query)
        out = np.zeros(self.value_dim)
        for i, w in zip(order, weights):
            out += w * self._values[i]
        return out

    def clear(self) -> None:
        self._keys.clear()
        self._key_norms.clear()
        self._values.clear()
        self._index.clear()

    # -- checkpointing ------------------------------------------------------

    def dump(self, path) -> None:
        payload = {
            "format_version": 1,
            "key_dim": self.key_dim,
            "value_dim": self.value_dim,
            "k": self.k,
            "kernel_delta": self.kernel_delta,
            "entries": [
                {"insert_index": i, "key": k.tolist(), "value": v.tolist()}
                for i, (k, v) in enumerate(zip(self._keys, self._values))
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @staticmethod
    def load(path) -> "DndStore":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("format_version") != 1:
            raise ValueError("unsupported store file version")
        store = DndStore(payload["key_dim"], payload["value_dim"],
                         k=payload["k"], kernel_delta=payload["kernel_delta"])
        entries = sorted(payload["entries"], key=lambda e: e["insert_index"])
        for entry in entries:
            store.write(np.array(entry["key"]), np.array(entry["value"]))
        store.write_count = 0
        return store


class BatchedDnd:
    """B independent stores with a vectorized k=1 read path.

    Training rolls out B workers in lockstep; per-step reads across all
    workers collapse to one masked argmin. Semantics must match
    DndStore.read with k=1 (covered by tests); writes and clears go
    through per-worker DndStore instances so the reference behaviour is
    the only behaviour.
    """

    def __init__(self, batch: int, key_dim: int, value_dim: int,
                 kernel_delta: float = 1e-3):
        self.stores = [DndStore(key_dim, value_dim, k=1, kernel_delta=kernel_delta)
                       for _ in range(batch)]
        self.batch = batch
        self.key_dim = key_dim
        self.value_dim = value_dim
        self._stale = True
        self._keys = np.zeros((batch, 0, key_dim))
        self._norms = np.zeros((batch, 0))
        self._counts = np.zeros(batch, dtype=np.int64)

    def _restack(self) -> None:
        """Pad per-store keys/norms into one array; reads are one einsum.
        Rebuilt only after writes or clears (once per episode, not per step)."""
        self._counts = np.array([len(s) for s in self.stores])
        n = int(self._counts.max(initial=0))
        self._keys = np.zeros((self.batch, n, self.key_dim))
        self._norms = np.zeros((self.batch, n))
        for b, s in enumerate(self.stores):
            if len(s):
                self._keys[b, :len(s)] = s._keys
                self._norms[b, :len(s)] = s._key_norms
        self._stale = False

    def read_all(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64)
        if queries.shape != (self.batch, self.key_dim):
            raise ValueError("queries must be (batch, key_dim)")
        if self._stale:
            self._restack()
        for s in self.stores:
            s.read_count += 1
        out = np.zeros((self.batch, self.value_dim))
        n = self._keys.shape[1]
        if n == 0:
            return out
        qn = np.linalg.norm(queries, axis=1)
        dots = np.einsum("bnd,bd->bn", self._keys, queries)
        denom = qn[:, None] * self._norms
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = 1.0 - dots / denom
        dist[denom == 0.0] = MAX_DISTANCE
        dist[np.arange(n)[None, :] >= self._counts[:, None]] = np.inf
        nearest = np.argmin(dist, axis=1)  # first minimum = smallest insert index
        for b, s in enumerate(self.stores):
            if len(s):
                out[b] = s._values[nearest[b]]
        return out

    def write(self, worker: int, key: np.ndarray, value: np.ndarray) -> None:
        self.stores[worker].write(key, value)
        self._stale = True

    def clear_all(self) -> None:
        for s in self.stores:
            s.clear()
        self._stale = True

    def sizes(self) -> list[int]:
        return [len(s) for s in self.stores]
