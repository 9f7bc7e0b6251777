"""Rotor walks on lazily materialized periodic trees.

The tree lives in flat arrays: vertex ``0`` is the root, ``SINK`` (-1) is the
extra vertex above it. A type-``t`` vertex has ``d_t + 1`` neighbours, index 0
being the ancestor, and its rotor turns modulo ``d_t + 1``. A vertex is created
(and its rotor drawn) the first time the walker steps onto it; the draw is a
hash of the seed and the vertex's path from the root, so the rotor
configuration does not depend on the order in which vertices appear.

The walker sits on the sink at time 0, so ``X_1`` is the root and the range
``{X_1, ..., X_n}`` (sink excluded) is empty at ``n = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np

from .generator import Generator, adjacency
from .mbp import RotorLaw, good_children_counts

__all__ = [
    "SINK",
    "SinkReturnRecord",
    "ReturnsResult",
    "WalkState",
    "CapExhausted",
    "InternalConsistencyError",
    "new_walk",
    "step",
    "run_until_returns",
    "sample_good_tree",
    "sample_good_trees",
    "write_trace",
]

SINK = -1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_ROTOR_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

_DONE, _RETURNED, _FULL = 0, 1, 2


@numba.njit(cache=True)
def _splitmix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def _draw_rotor(key, t, cdf, cofs):
    u = np.float64(_splitmix(key ^ _ROTOR_SALT) >> _S11) * (1.0 / 9007199254740992.0)
    k = 0
    last = cofs[t + 1] - cofs[t] - 1
    while k < last and u >= cdf[cofs[t] + k]:
        k += 1
    return k


@numba.njit(cache=True)
def _root_key(seed, root_type):
    return _splitmix(seed ^ _splitmix(np.uint64(root_type) + _GOLDEN))


@numba.njit(cache=True)
def _advance(
    st, max_steps, deg, wofs, wflat, cdf, cofs,
    vtype, parent, rotor, init_rotor, key, cbase, child, first_visit,
    range_by_type, psi, modulus_shift,
):
    # st = [position, n, n_vertices, n_child_slots, max_degree]
    pos = st[0]
    n = st[1]
    nv = st[2]
    ns = st[3]
    maxdeg = st[4]
    cap = vtype.shape[0]
    ccap = child.shape[0]
    status = _DONE
    done = 0
    while done < max_steps:
        if pos == -1:
            pos = 0
            n += 1
            done += 1
            psi[vtype[0]] += 1
            if first_visit[0] < 0:
                first_visit[0] = n
                range_by_type[vtype[0]] += 1
            continue
        if nv >= cap or ns + maxdeg > ccap:
            status = _FULL
            break
        t = vtype[pos]
        r = rotor[pos] + 1
        if r > deg[t] + modulus_shift:
            r = 0
        rotor[pos] = r
        n += 1
        done += 1
        if r == 0:
            psi[t] += 1
            pos = parent[pos]
            if pos == -1:
                status = _RETURNED
                break
            continue
        slot = cbase[pos] + r - 1
        c = child[slot]
        if c < 0:
            c = nv
            nv += 1
            ct = wflat[wofs[t] + r - 1]
            k = _splitmix(key[pos] ^ _splitmix(np.uint64(r)))
            vtype[c] = ct
            parent[c] = pos
            key[c] = k
            rot = _draw_rotor(k, ct, cdf, cofs)
            rotor[c] = rot
            init_rotor[c] = rot
            cbase[c] = ns
            for l in range(deg[ct]):
                child[ns + l] = -1
            ns += deg[ct]
            first_visit[c] = -1
            child[slot] = c
        pos = c
        psi[vtype[c]] += 1
        if first_visit[c] < 0:
            first_visit[c] = n
            range_by_type[vtype[c]] += 1
    st[0] = pos
    st[1] = n
    st[2] = nv
    st[3] = ns
    return status


@numba.njit(cache=True)
def _audit(nv, vtype, deg, wofs, wflat, cbase, child, rotor, init_rotor, first_visit,
           tau_prev, leaves):
    """Scan the visited set at a sink return.

    Fills ``leaves`` with per-type counts of unvisited children of visited
    vertices, and checks that every visited rotor points to the ancestor and
    that the visited children are exactly the expected ones: all children of
    vertices first reached before ``tau_prev``, and the good children (positions
    beyond the initial rotor) of the others.
    Returns (visited, n_rotor_bad, first_rotor_bad, n_children_bad, first_children_bad).
    """
    visited = 0
    rot_bad = 0
    rot_first = -1
    ch_bad = 0
    ch_first = -1
    for v in range(nv):
        if first_visit[v] < 0:
            continue
        visited += 1
        t = vtype[v]
        if rotor[v] != 0:
            rot_bad += 1
            if rot_first < 0:
                rot_first = v
        old = first_visit[v] <= tau_prev
        for l in range(deg[t]):
            c = child[cbase[v] + l]
            seen = c >= 0 and first_visit[c] >= 0
            if not seen:
                leaves[wflat[wofs[t] + l]] += 1
            if seen != (old or l + 1 > init_rotor[v]):
                ch_bad += 1
                if ch_first < 0:
                    ch_first = v
    return visited, rot_bad, rot_first, ch_bad, ch_first


class InternalConsistencyError(RuntimeError):
    """An exact identity failed at a sink return."""


class CapExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SinkReturnRecord:
    k: int
    tau: int
    range_by_type: tuple[int, ...]
    leaves_by_type: tuple[int, ...]
    violations: tuple[str, ...] = ()

    @property
    def range_size(self) -> int:
        return sum(self.range_by_type)


class ReturnsResult(NamedTuple):
    records: list
    cap_exhausted: bool


def _law_cdf(g: Generator, law: RotorLaw):
    cofs = np.zeros(g.n_types + 1, dtype=np.int64)
    flat = []
    for i, row in enumerate(law.probs):
        acc = np.cumsum([float(p) for p in row])
        acc[-1] = 1.0
        flat.extend(acc)
        cofs[i + 1] = len(flat)
    return np.array(flat), cofs


@dataclass
class _Tables:
    deg: np.ndarray
    wofs: np.ndarray
    wflat: np.ndarray
    cdf: np.ndarray
    cofs: np.ndarray
    D: np.ndarray

    @classmethod
    def build(cls, g: Generator, law: RotorLaw):
        deg = np.array(g.degrees, dtype=np.int64)
        wofs = np.zeros(g.n_types + 1, dtype=np.int64)
        wofs[1:] = np.cumsum(deg)
        wflat = np.array([t for w in g.words for t in w], dtype=np.int64)
        cdf, cofs = _law_cdf(g, law)
        return cls(deg, wofs, wflat, cdf, cofs, adjacency(g))


class WalkState:
    """A rotor walk in progress, with its tree arena.

    Use :func:`new_walk` to create one. ``position`` is a vertex handle or
    ``SINK``; ``range_by_type`` and ``psi`` (edge traversals per type, an edge
    taking the type of its endpoint farther from the sink) are live counters.
    """

    def __init__(self, g: Generator, law: RotorLaw, root_type: int, seed: int,
                 capacity: int = 1024, max_vertices: Optional[int] = None,
                 modulus_shift: int = 0):
        if not 0 <= root_type < g.n_types:
            raise ValueError(f"root type {root_type + 1} outside 1..{g.n_types}")
        law.check(g)
        self.generator = g
        self.law = law
        self.root_type = root_type
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.max_vertices = max_vertices
        # test hook: -1 turns rotors modulo d_t instead of d_t + 1
        self.modulus_shift = modulus_shift
        self._tab = _Tables.build(g, law)
        n = g.n_types
        maxdeg = int(self._tab.deg.max())
        self._st = np.array([SINK, 0, 1, 0, maxdeg], dtype=np.int64)
        self._alloc(capacity)
        root_key = np.uint64(_root_key(np.uint64(self.seed), root_type))
        self._vtype[0] = root_type
        self._parent[0] = SINK
        self._key[0] = root_key
        r0 = _draw_rotor(root_key, root_type, self._tab.cdf, self._tab.cofs)
        self._rotor[0] = r0
        self._init_rotor[0] = r0
        self._cbase[0] = 0
        d0 = g.degrees[root_type]
        self._child[:d0] = -1
        self._st[3] = d0
        self._first_visit[0] = -1
        self.range_by_type = np.zeros(n, dtype=np.int64)
        self.psi = np.zeros(n, dtype=np.int64)
        self.sink_visits: list[int] = [0]
        self.records: list[SinkReturnRecord] = []
        self.range_log: list[tuple[int, int]] = []

    def _alloc(self, cap):
        ccap = cap * max(int(self._tab.deg.max()), 1) + int(self._tab.deg.max())
        self._vtype = np.zeros(cap, dtype=np.int64)
        self._parent = np.zeros(cap, dtype=np.int64)
        self._rotor = np.zeros(cap, dtype=np.int64)
        self._init_rotor = np.zeros(cap, dtype=np.int64)
        self._key = np.zeros(cap, dtype=np.uint64)
        self._cbase = np.zeros(cap, dtype=np.int64)
        self._first_visit = np.full(cap, -1, dtype=np.int64)
        self._child = np.full(ccap, -1, dtype=np.int64)

    def _grow(self):
        nv = int(self._st[2])
        if self.max_vertices is not None and nv >= self.max_vertices:
            raise CapExhausted(f"vertex cap {self.max_vertices} reached at step {self.n}")
        cap = self._vtype.shape[0] * 2
        if self.max_vertices is not None:
            cap = min(cap, self.max_vertices)
        ccap = max(self._child.shape[0] * 2, int(self._st[3]) + 2 * int(self._st[4]) + 1)

        def grown(a, size, fill):
            out = np.full(size, fill, dtype=a.dtype)
            out[: a.shape[0]] = a
            return out

        self._vtype = grown(self._vtype, cap, 0)
        self._parent = grown(self._parent, cap, 0)
        self._rotor = grown(self._rotor, cap, 0)
        self._init_rotor = grown(self._init_rotor, cap, 0)
        self._key = grown(self._key, cap, 0)
        self._cbase = grown(self._cbase, cap, 0)
        self._first_visit = grown(self._first_visit, cap, -1)
        self._child = grown(self._child, ccap, -1)

    # -- state --------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self._st[1])

    @property
    def position(self) -> int:
        return int(self._st[0])

    @property
    def n_vertices(self) -> int:
        return int(self._st[2])

    @property
    def range_size(self) -> int:
        return int(self.range_by_type.sum())

    @property
    def returns(self) -> int:
        return len(self.sink_visits) - 1

    def vertex_type(self, v: int) -> int:
        return int(self._vtype[v])

    def rotor_of(self, v: int) -> int:
        return int(self._rotor[v])

    def initial_rotor(self, v: int) -> int:
        return int(self._init_rotor[v])

    def first_visit(self, v: int) -> int:
        """Time of the first visit to ``v`` (-1 if not visited yet)."""
        return int(self._first_visit[v])

    def parent(self, v: int) -> int:
        return int(self._parent[v])

    def children(self, v: int) -> list[int]:
        """Child handles of ``v`` in planar order; -1 for children not created yet."""
        d = self.generator.degrees[self.vertex_type(v)]
        b = int(self._cbase[v])
        return [int(c) for c in self._child[b : b + d]]

    def vertex_path(self, v: int) -> tuple[int, ...]:
        """Child positions (1-based) leading from the root to ``v``."""
        path = []
        while v > 0:
            p = int(self._parent[v])
            path.append(self.children(p).index(v) + 1)
            v = p
        return tuple(reversed(path))

    def visited_vertices(self) -> np.ndarray:
        nv = self.n_vertices
        return np.flatnonzero(self._first_visit[:nv] >= 0)

    # -- dynamics -----------------------------------------------------------
    def _kernel(self, max_steps: int) -> int:
        t = self._tab
        while True:
            before = self.n
            status = _advance(
                self._st, max_steps, t.deg, t.wofs, t.wflat, t.cdf, t.cofs,
                self._vtype, self._parent, self._rotor, self._init_rotor, self._key,
                self._cbase, self._child, self._first_visit,
                self.range_by_type, self.psi, self.modulus_shift,
            )
            if status != _FULL:
                return status
            self._grow()
            max_steps -= self.n - before

    def advance(self, steps: int) -> int:
        """Make up to ``steps`` steps, stopping early at a sink return.

        Returns the number of steps made. Returns are recorded in
        ``sink_visits`` / ``records`` as they happen.
        """
        start = self.n
        status = self._kernel(steps)
        if status == _RETURNED:
            self._record_return()
        return self.n - start

    def step(self) -> "WalkState":
        self.advance(1)
        return self

    def run(self, steps: int, stride: Optional[int] = None) -> "WalkState":
        """Advance ``steps`` steps, logging ``(n, |R_n|)`` every ``stride`` steps."""
        target = self.n + steps
        while self.n < target:
            chunk = target - self.n
            if stride:
                chunk = min(chunk, stride - self.n % stride)
            self.advance(chunk)
            if stride and self.n % stride == 0 and (
                not self.range_log or self.range_log[-1][0] != self.n
            ):
                self.range_log.append((self.n, self.range_size))
        return self

    def _record_return(self):
        tau = self.n
        tau_prev = self.sink_visits[-1]
        self.sink_visits.append(tau)
        t = self._tab
        leaves = np.zeros(self.generator.n_types, dtype=np.int64)
        visited, rot_bad, rot_first, ch_bad, ch_first = _audit(
            self.n_vertices, self._vtype, t.deg, t.wofs, t.wflat, self._cbase, self._child,
            self._rotor, self._init_rotor, self._first_visit, tau_prev, leaves,
        )
        counts = self.range_by_type.copy()
        k = len(self.sink_visits) - 1
        problems = []
        if tau - tau_prev != 2 * counts.sum():
            problems.append(
                f"return {k}: tau_k - tau_(k-1) = {tau - tau_prev} != 2|R_k| = {2 * counts.sum()}"
            )
        expected = (t.D - np.eye(len(counts), dtype=np.int64)).T @ counts
        expected[self.root_type] += 1
        if not np.array_equal(leaves, expected):
            problems.append(
                f"return {k}: leaves {leaves.tolist()} != (D - I)#R + e_root = {expected.tolist()}"
            )
        if visited != counts.sum():
            problems.append(f"return {k}: {visited} visited vertices but |R_k| = {counts.sum()}")
        if rot_bad:
            problems.append(
                f"return {k}: {rot_bad} visited rotors not at the ancestor, "
                f"first at vertex {self._path_str(rot_first)}"
            )
        if ch_bad:
            problems.append(
                f"return {k}: {ch_bad} vertices with unexpected visited children, "
                f"first at vertex {self._path_str(ch_first)}"
            )
        self.records.append(
            SinkReturnRecord(k, tau, tuple(int(c) for c in counts),
                             tuple(int(x) for x in leaves), tuple(problems))
        )

    def _path_str(self, v: int) -> str:
        return path_label(self.vertex_path(v))

    def run_until_returns(self, k: int, step_cap: int, strict: bool = True) -> ReturnsResult:
        """Walk until the ``k``-th sink return or until ``step_cap`` total steps."""
        while self.returns < k and self.n < step_cap:
            self.advance(step_cap - self.n)
        records = self.records[:k]
        if strict:
            bad = [p for r in records for p in r.violations]
            if bad:
                raise InternalConsistencyError("; ".join(bad))
        return ReturnsResult(records, self.returns < k)


def path_label(path) -> str:
    return "r" + "".join(f".{p}" for p in path)


def new_walk(g: Generator, law: Optional[RotorLaw] = None, root_type: int = 0,
             seed: int = 0, **kwargs) -> WalkState:
    law = RotorLaw.for_generator(g) if law is None else law
    return WalkState(g, law, root_type, seed, **kwargs)


def step(s: WalkState) -> WalkState:
    return s.step()


def run_until_returns(s: WalkState, k: int, step_cap: int, strict: bool = True) -> ReturnsResult:
    return s.run_until_returns(k, step_cap, strict)


def write_trace(s: WalkState, steps: int, out) -> None:
    """Write ``n,vertex_path,type,rotor_after`` per step for the vertex whose
    rotor turned (``o`` for the sink, which has no rotor)."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n", "vertex_path", "type", "rotor_after"])
    for _ in range(steps):
        here = s.position
        s.advance(1)
        if here == SINK:
            writer.writerow([s.n, "o", "", ""])
        else:
            writer.writerow(
                [s.n, path_label(s.vertex_path(here)), s.vertex_type(here) + 1, s.rotor_of(here)]
            )


# -- direct sampling of the good-children tree ---------------------------------
def sample_good_trees(g: Generator, law: Optional[RotorLaw], root_type: int,
                      n_samples: int, seed, size_cap: int = 10**7):
    """Total progeny per type of ``n_samples`` independent good-children trees.

    Generation by generation: the particles of type ``i`` draw rotor states
    multinomially and contribute the matching good-children vectors. Returns
    ``(Y, truncated)``; rows whose total size passed ``size_cap`` are flagged
    and hold the counts reached so far.
    """
    law = RotorLaw.for_generator(g) if law is None else law
    law.check(g)
    rng = np.random.default_rng(seed)
    n = g.n_types
    pvals, cmats = [], []
    for i in range(n):
        pvals.append(np.array([float(p) for p in law.probs[i]]))
        cmats.append(
            np.array([good_children_counts(g, i, k) for k in range(g.degrees[i] + 1)])
        )
    y = np.zeros((n_samples, n), dtype=np.int64)
    truncated = np.zeros(n_samples, dtype=bool)
    z = np.zeros((n_samples, n), dtype=np.int64)
    z[:, root_type] = 1
    active = np.arange(n_samples)
    while active.size:
        y[active] += z
        over = y[active].sum(axis=1) > size_cap
        truncated[active[over]] = True
        nxt = np.zeros_like(z)
        for i in range(n):
            counts = z[:, i]
            if counts.any():
                draws = rng.multinomial(counts, pvals[i])
                nxt += draws @ cmats[i]
        alive = (nxt.sum(axis=1) > 0) & ~over
        active = active[alive]
        z = nxt[alive]
    return y, truncated


class GoodTreeSample(NamedTuple):
    counts: np.ndarray
    truncated: bool


def sample_good_tree(g: Generator, law: Optional[RotorLaw], root_type: int, seed,
                     size_cap: int = 10**7) -> GoodTreeSample:
    y, tr = sample_good_trees(g, law, root_type, 1, seed, size_cap)
    return GoodTreeSample(y[0], bool(tr[0]))
