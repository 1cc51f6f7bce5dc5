"""Fixed-step RK4 simulation of hybrid systems with event localization.

Every trajectory of a batch advances in lockstep on one ``(n, N)`` column
array; all per-row decisions (event location, jumps, branching) depend only
on that row's data, so a batch reproduces single-trajectory runs bitwise.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import HybridArc, HybridSystem, Termination
from .sets import TAU_SET

log = logging.getLogger(__name__)

OVERLAP_POLICIES = ("jump_priority", "flow_priority", "branch_both")

_DISCRETE, _FLOW, _DONE = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    t_max: float = 10.0
    j_max: int = 10_000
    step: float = 1e-3
    event_tol: float = 1e-9
    overlap_policy: str = "jump_priority"
    branch_budget: int = 16
    zeno_window: Tuple[int, float] = (50, 1e-6)
    escape_radius: float = 1e6
    record_every: int = 1
    set_tol: float = TAU_SET

    def __post_init__(self):
        if not (self.t_max > 0 or self.j_max > 0):
            raise ValueError("need t_max > 0 or j_max > 0")
        if self.t_max < 0 or self.j_max < 0:
            raise ValueError("horizons must be nonnegative")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 < self.event_tol < self.step:
            raise ValueError("event_tol must lie in (0, step)")
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise ValueError(f"overlap_policy must be one of {OVERLAP_POLICIES}")
        if self.branch_budget < 1:
            raise ValueError("branch_budget must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "zeno_window", (int(self.zeno_window[0]), float(self.zeno_window[1])))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["zeno_window"] = list(self.zeno_window)
        return d


@dataclass
class BatchItem:
    x0: np.ndarray
    arcs: List[HybridArc]
    error: Optional[str] = None


def _rk4(sys: HybridSystem, X: np.ndarray, h: np.ndarray, sel: int) -> np.ndarray:
    h = h[None, :]
    k1 = sys.flow(X, sel)
    k2 = sys.flow(X + 0.5 * h * k1, sel)
    k3 = sys.flow(X + 0.5 * h * k2, sel)
    k4 = sys.flow(X + h * k3, sel)
    return X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Engine:
    def __init__(self, sys: HybridSystem, cfg: SimConfig):
        if not sys.flow_map:
            raise ValueError("flow selections empty")
        self.sys = sys
        self.cfg = cfg
        self.C = sys.flow_set
        self.D = sys.jump_set
        n = sys.dim
        cap = 16
        self.X = np.zeros((n, cap))
        self.T = np.zeros(cap)
        self.J = np.zeros(cap, dtype=np.int64)
        self.K = np.zeros(cap, dtype=np.int64)
        self.TPH = np.zeros(cap)
        self.TLJ = np.zeros(cap)
        self.ZC = np.zeros(cap, dtype=np.int64)
        self.WID = np.zeros(cap, dtype=bool)
        self.SEL = np.zeros(cap, dtype=np.int64)
        self.MODE = np.full(cap, _DONE, dtype=np.int64)
        self.MUST = np.zeros(cap, dtype=bool)
        self.NREC = np.zeros(cap, dtype=np.int64)
        self.RECD = np.zeros(cap, dtype=bool)
        self.origin: List[int] = []
        self.parent: List[int] = []
        self.plen: List[int] = []
        self.bid: List[int] = []
        self.term: List[Optional[Termination]] = []
        self.per_origin: dict = {}
        self.chunks: List[tuple] = []
        self.pending: List[int] = []

    # -- row bookkeeping ----------------------------------------------------
    def _grow(self):
        cap = self.T.size * 2
        for name in ("T", "J", "K", "TPH", "TLJ", "ZC", "WID", "SEL", "MODE", "MUST", "NREC", "RECD"):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            if name == "MODE":
                new[:] = _DONE
            new[:old.size] = old
            setattr(self, name, new)
        X = np.zeros((self.X.shape[0], cap))
        X[:, :self.X.shape[1]] = self.X
        self.X = X

    def _new_row(self, origin: int, parent: int = -1) -> int:
        r = len(self.origin)
        if r >= self.T.size:
            self._grow()
        self.origin.append(origin)
        self.parent.append(parent)
        self.plen.append(int(self.NREC[parent]) if parent >= 0 else 0)
        count = self.per_origin.get(origin, 0)
        self.bid.append(count)
        self.per_origin[origin] = count + 1
        self.term.append(None)
        if parent >= 0:
            for name in ("T", "J", "K", "TPH", "TLJ", "ZC", "WID", "SEL"):
                getattr(self, name)[r] = getattr(self, name)[parent]
            self.X[:, r] = self.X[:, parent]
            self.RECD[r] = True
        return r

    def _spawn(self, r: int) -> Optional[int]:
        """Branch off a copy of row ``r``, or None if the budget is exhausted."""
        if self.per_origin[self.origin[r]] >= self.cfg.branch_budget:
            return None
        self._ensure_recorded(r)
        return self._new_row(self.origin[r], parent=r)

    def _record(self, rows: np.ndarray, t: np.ndarray, j: np.ndarray, X: np.ndarray, bump: bool = True):
        self.chunks.append((rows.copy(), t.copy(), j.copy(), X.copy()))
        if bump:
            self.NREC[rows] += 1
        self.RECD[rows] = True

    def _record_row(self, r: int):
        self._record(np.array([r]), self.T[r:r + 1], self.J[r:r + 1], self.X[:, r:r + 1])

    def _ensure_recorded(self, r: int):
        if not self.RECD[r]:
            self._record_row(r)

    def _finish(self, r: int, reason: Termination):
        self._ensure_recorded(r)
        self.MODE[r] = _DONE
        self.term[r] = reason

    # -- predicates -----------------------------------------------------------
    def _exit_C(self, X: np.ndarray) -> np.ndarray:
        if self.C.guard is not None:
            return self.C.guard_value(X) > 0
        return ~self.C.contains(X, self.cfg.set_tol)

    def _in_D_strict(self, X: np.ndarray) -> np.ndarray:
        if self.D.guard is not None:
            return self.D.guard_value(X) <= 0
        return self.D.contains(X, self.cfg.event_tol)

    def _escaped(self, X: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return ~np.all(np.isfinite(X), axis=0) | (np.sqrt(np.sum(X ** 2, axis=0)) > self.cfg.escape_radius)

    def _event(self, X: np.ndarray, wid: np.ndarray) -> np.ndarray:
        esc = self._escaped(X)
        Xs = np.where(esc[None, :], 0.0, X)
        return esc | self._exit_C(Xs) | (self._in_D_strict(Xs) & ~wid)

    # -- main loop ------------------------------------------------------------
    def run(self, x0s: Sequence[np.ndarray]) -> List[List[HybridArc]]:
        for i, x0 in enumerate(x0s):
            r = self._new_row(i)
            self.X[:, r] = x0
            self.MODE[r] = _DISCRETE
            self._record_row(r)
            self.pending.append(r)
        while True:
            while self.pending:
                batch, self.pending = np.array(self.pending), []
                X = self.X[:, batch]
                in_C = self.C.contains(X, self.cfg.set_tol)
                in_D = self.D.contains(X, self.cfg.event_tol)
                for r, c, d in zip(batch.tolist(), in_C.tolist(), in_D.tolist()):
                    self._discrete(r, c, d)
            flow = np.flatnonzero(self.MODE[:len(self.origin)] == _FLOW)
            if flow.size == 0:
                break
            for sel in np.unique(self.SEL[flow]):
                self._flow_phase(flow[self.SEL[flow] == sel], int(sel))
        return self._assemble(len(x0s))

    def _discrete(self, r: int, in_C: bool, in_D: bool):
        """Take one decision (jump, flow or stop) for row ``r``; jumped rows are re-queued."""
        cfg = self.cfg
        x = self.X[:, r]
        if cfg.t_max > 0 and self.T[r] >= cfg.t_max:
            self._finish(r, Termination.HORIZON_REACHED)
            return
        can_flow = in_C and not self.MUST[r] and cfg.t_max > 0
        if in_D and can_flow:
            action = {"jump_priority": "jump", "flow_priority": "flow",
                      "branch_both": "both"}[cfg.overlap_policy]
        elif in_D:
            action = "jump"
        elif can_flow:
            action = "flow"
        else:
            self._finish(r, Termination.LEFT_C_AND_D)
            return

        if action in ("jump", "both"):
            if self.J[r] >= cfg.j_max:
                self._finish(r, Termination.HORIZON_REACHED)
                return
            outs = []
            for g in self.sys.jump_map:
                y = g(x.copy())
                if y is not None:
                    outs.append(np.asarray(y, dtype=float).reshape(self.sys.dim))
            if not outs:
                if can_flow:
                    action = "flow"
                else:
                    self._finish(r, Termination.LEFT_C_AND_D)
                    return
        if action == "both":
            f = self._spawn(r)
            if f is None:
                self._finish(r, Termination.BRANCH_BUDGET)
                return
            self._start_flow(f, in_D)
            action = "jump"
        if action == "flow":
            self._start_flow(r, in_D)
            return

        if self.per_origin[self.origin[r]] + len(outs) - 1 > cfg.branch_budget:
            self._finish(r, Termination.BRANCH_BUDGET)
            return
        rows = [r] + [self._spawn(r) for _ in outs[1:]]
        for row, y in zip(rows, outs):
            if self._jump(row, y):
                self.pending.append(row)

    def _jump(self, r: int, y: np.ndarray) -> bool:
        """Apply a jump outcome to row ``r``; False when the row terminated."""
        cfg = self.cfg
        t = self.T[r]
        short = (t - self.TLJ[r]) < cfg.zeno_window[1]
        self.ZC[r] = self.ZC[r] + 1 if short else 0
        self.TLJ[r] = t
        self.J[r] += 1
        self.X[:, r] = y
        self.MUST[r] = False
        self._record_row(r)
        if self._escaped(y[:, None])[0]:
            self._finish(r, Termination.ESCAPE_DETECTED)
            return False
        if self.ZC[r] >= cfg.zeno_window[0]:
            self._finish(r, Termination.ZENO_SUSPECTED)
            return False
        return True

    def _start_flow(self, r: int, in_D: bool):
        self.MODE[r] = _FLOW
        self.TPH[r] = self.T[r]
        self.K[r] = 0
        self.WID[r] = in_D
        if (self.cfg.overlap_policy == "branch_both" and len(self.sys.flow_map) > 1
                and self.J[r] > 0 and self.TLJ[r] == self.T[r] and self.SEL[r] == 0):
            for sel in range(1, len(self.sys.flow_map)):
                b = self._spawn(r)
                if b is None:
                    self._finish(r, Termination.BRANCH_BUDGET)
                    return
                self.SEL[b] = sel
                self.MODE[b] = _FLOW

    def _flow_phase(self, rows: np.ndarray, sel: int):
        """Advance ``rows`` by fixed steps; rows needing attention drop out and are settled together."""
        cfg = self.cfg
        step, t_max = cfg.step, cfg.t_max
        R2 = cfg.escape_radius ** 2
        every = cfg.record_every
        X = self.X[:, rows]
        T = self.T[rows]
        K = self.K[rows]
        TPH = self.TPH[rows]
        WID = self.WID[rows]
        J = self.J[rows]
        act = rows
        recd = self.RECD[rows].copy()
        buf = []
        stops, parked = [], []
        while act.size:
            t_next = TPH + (K + 1) * step
            last = t_next > t_max - 1e-9 * step
            any_last = bool(last.any())
            if any_last:
                t_next = np.where(last, t_max, t_next)
                h = np.where(last, t_max - T, step)
            else:
                h = np.full(act.size, step)
            with np.errstate(all="ignore"):
                Xn = _rk4(self.sys, X, h, sel)
                esc = ~(np.sum(Xn * Xn, axis=0) <= R2)
            any_esc = bool(esc.any())
            Xs = np.where(esc[None, :], 0.0, Xn) if any_esc else Xn
            in_d = self._in_D_strict(Xs)
            ev = self._exit_C(Xs) | (in_d & ~WID)
            stop = esc | last | ev
            if stop.any():
                # park the stopping rows at their last accepted state
                q = stop
                rs = act[q]
                self.X[:, rs] = X[:, q]
                self.T[rs] = T[q]
                self.K[rs] = K[q]
                self.WID[rs] = WID[q]
                parked.append((rs, recd[q].copy()))
                stops.append((rs, X[:, q], T[q], t_next[q], h[q], last[q], Xn[:, q], esc[q],
                              (ev & ~esc)[q], in_d[q]))
                keep = ~q
                act, X, T, K, TPH, WID, J, recd = (act[keep], X[:, keep], T[keep], K[keep], TPH[keep],
                                                  WID[keep], J[keep], recd[keep])
                Xn, t_next, in_d = Xn[:, keep], t_next[keep], in_d[keep]
                if act.size == 0:
                    break
            X, T, K, WID = Xn, t_next, K + 1, in_d
            if every == 1:
                buf.append((act, T, J, X))
                recd[:] = True
            else:
                m = (K % every) == 0
                recd = m
                if m.any():
                    buf.append((act[m], T[m], J[m], X[:, m]))
        if buf:
            cat = np.concatenate([b[0] for b in buf])
            self._record(cat, np.concatenate([b[1] for b in buf]), np.concatenate([b[2] for b in buf]),
                         np.concatenate([b[3] for b in buf], axis=1), bump=False)
            self.NREC += np.bincount(cat, minlength=len(self.NREC))
        # every row was parked on stopping; its last accepted sample decides RECD
        for rs, flags in parked:
            self.RECD[rs] = flags
        if stops:
            cols = [np.concatenate([st[k] for st in stops], axis=-1) for k in range(10)]
            self._settle(cols[0], *cols[1:], sel)

    def _settle(self, rows, X, t, t_next, h, last, Xn, esc, ev, in_d, sel):
        cfg = self.cfg
        ok = ~esc & ~ev
        if ok.any():
            rk = rows[ok]
            self.X[:, rk] = Xn[:, ok]
            self.T[rk] = t_next[ok]
            self.K[rk] += 1
            self.WID[rk] = in_d[ok]
            self.RECD[rk] = False
            rec = ((self.K[rk] % cfg.record_every) == 0) | last[ok]
            if rec.any():
                rr = rk[rec]
                self._record(rr, self.T[rr], self.J[rr], self.X[:, rr])
            for r in rk[last[ok]]:
                self.MODE[r] = _DISCRETE
                self.pending.append(int(r))

        for i in np.flatnonzero(esc):
            r = int(rows[i])
            if np.all(np.isfinite(Xn[:, i])):
                self._ensure_recorded(r)
                self.X[:, r] = Xn[:, i]
                self.T[r] = t_next[i]
                self.RECD[r] = False
            self._finish(r, Termination.ESCAPE_DETECTED)

        if ev.any():
            self._locate(rows[ev], X[:, ev], t[ev], h[ev], sel)

    def _locate(self, rows: np.ndarray, X0: np.ndarray, t0: np.ndarray, h: np.ndarray, sel: int):
        cfg = self.cfg
        wid = self.WID[rows]
        lo = np.zeros_like(h)
        hi = h.copy()
        with np.errstate(all="ignore"):
            while True:
                m = np.flatnonzero(hi - lo > cfg.event_tol)
                if m.size == 0:
                    break
                mid = 0.5 * (lo[m] + hi[m])
                pm = self._event(_rk4(self.sys, X0[:, m], mid, sel), wid[m])
                hi[m[pm]] = mid[pm]
                lo[m[~pm]] = mid[~pm]
            Xlo = _rk4(self.sys, X0, lo, sel)
            Xhi = _rk4(self.sys, X0, hi, sel)
            if self.C.guard is not None:
                lo, Xlo = self._refine(X0, lo, hi, Xlo, Xhi, sel)

        hi_esc = self._escaped(Xhi)
        Xhs = np.where(hi_esc[None, :], 0.0, Xhi)
        enter_hi = self._in_D_strict(Xhs) & ~wid & ~hi_esc
        in_d_lo = self.D.contains(Xlo, cfg.event_tol)
        for i, r in enumerate(rows):
            r = int(r)
            if in_d_lo[i]:
                s, x = lo[i], Xlo[:, i]
            elif enter_hi[i]:
                s, x = hi[i], Xhi[:, i]
            else:
                s, x = lo[i], Xlo[:, i]
                self._accept_event(r, t0[i] + s, x)
                self._finish(r, Termination.ESCAPE_DETECTED if hi_esc[i] else Termination.LEFT_C_AND_D)
                continue
            self._accept_event(r, t0[i] + s, x)
            self.MUST[r] = True
            self.MODE[r] = _DISCRETE
            self.pending.append(r)

    def _accept_event(self, r: int, t: float, x: np.ndarray):
        if t != self.T[r]:
            self.T[r] = t
            self.X[:, r] = x
            self._record_row(r)
        else:
            self._ensure_recorded(r)

    def _refine(self, X0, lo, hi, Xlo, Xhi, sel):
        """Illinois iterations on the flow-set guard, keeping the inside end."""
        g = self.C.guard_value
        glo = g(Xlo)
        ghi = g(np.where(self._escaped(Xhi)[None, :], 0.0, Xhi))
        act = (glo <= 0) & (ghi > 0) & np.isfinite(glo) & np.isfinite(ghi)
        lo, hi, Xlo = lo.copy(), hi.copy(), Xlo.copy()
        glo_true = glo.copy()
        side = np.zeros(lo.size, dtype=np.int64)
        stop = 1e-3 * self.cfg.event_tol
        for _ in range(60):
            m = np.flatnonzero(act & (glo_true < -stop) & (hi - lo > 4 * np.spacing(hi)))
            if m.size == 0:
                break
            s = hi[m] - ghi[m] * (hi[m] - lo[m]) / (ghi[m] - glo[m])
            bad = ~((s > lo[m]) & (s < hi[m]))
            s[bad] = 0.5 * (lo[m][bad] + hi[m][bad])
            Xs = _rk4(self.sys, X0[:, m], s, sel)
            gs = g(Xs)
            inside = gs <= 0
            a, b = m[inside], m[~inside]
            lo[a], glo[a], glo_true[a] = s[inside], gs[inside], gs[inside]
            Xlo[:, a] = Xs[:, inside]
            ghi[a[side[a] == -1]] *= 0.5
            side[a] = -1
            hi[b], ghi[b] = s[~inside], gs[~inside]
            glo[b[side[b] == 1]] *= 0.5
            side[b] = 1
        return lo, Xlo

    # -- output ---------------------------------------------------------------
    def _assemble(self, n_origins: int) -> List[List[HybridArc]]:
        nrows = len(self.origin)
        rows = np.concatenate([c[0] for c in self.chunks])
        T = np.concatenate([c[1] for c in self.chunks])
        J = np.concatenate([c[2] for c in self.chunks])
        X = np.concatenate([c[3] for c in self.chunks], axis=1)
        order = np.argsort(rows, kind="stable")
        counts = np.bincount(rows, minlength=nrows)
        starts = np.concatenate([[0], np.cumsum(counts)])
        full = []
        out: List[List[HybridArc]] = [[] for _ in range(n_origins)]
        for r in range(nrows):
            idx = order[starts[r]:starts[r + 1]]
            t, j, x = T[idx], J[idx], X[:, idx].T
            p = self.parent[r]
            if p >= 0:
                pt, pj, px = full[p]
                k = self.plen[r]
                t = np.concatenate([pt[:k], t])
                j = np.concatenate([pj[:k], j])
                x = np.concatenate([px[:k], x])
            full.append((t, j, x))
            out[self.origin[r]].append(HybridArc(t, j, x, self.term[r], self.bid[r]))
        for arcs in out:
            arcs.sort(key=lambda a: a.branch_id)
        return out


def _validate_x0(sys: HybridSystem, x0, cfg: SimConfig) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.dim:
        raise ValueError(f"x0 has {x0.size} components, system has dim {sys.dim}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if not (sys.flow_set.contains(x0, cfg.set_tol) or sys.jump_set.contains(x0, cfg.event_tol)):
        raise ValueError(f"x0={x0.tolist()} lies outside C u D")
    return x0


def simulate(sys: HybridSystem, x0, cfg: SimConfig = SimConfig()) -> List[HybridArc]:
    """All explored solutions from ``x0``, one arc per branch."""
    x0 = _validate_x0(sys, x0, cfg)
    return _Engine(sys, cfg).run([x0])[0]


def simulate_batch(sys: HybridSystem, x0s, cfg: SimConfig = SimConfig()) -> List[BatchItem]:
    """Simulate many initial conditions; invalid ones are flagged, not raised."""
    items: List[BatchItem] = []
    valid: List[np.ndarray] = []
    where: List[int] = []
    for x0 in x0s:
        try:
            v = _validate_x0(sys, x0, cfg)
        except ValueError as exc:
            items.append(BatchItem(np.asarray(x0, dtype=float).reshape(-1), [], str(exc)))
            continue
        where.append(len(items))
        items.append(BatchItem(v, []))
        valid.append(v)
    if valid:
        results = _Engine(sys, cfg).run(valid)
        for k, arcs in zip(where, results):
            items[k].arcs = arcs
    log.debug("simulated %d initial conditions (%d invalid)", len(valid), len(items) - len(valid))
    return items
