"""Streaming first- and second-order cross-correlation of HBT records.

Each shot is first brought to baseband and projected onto the temporal
mode with a sliding matched filter, ``y(t) = sum_k conj(f_k) x(t + k) dt``.
At the start of pulse ``p`` this equals the matched-filter outcome of that
pulse; elsewhere it falls off with the mode autocorrelation. Only a small
gate of ``2 g + 1`` samples around every pulse start (the *support*) is
kept, which removes the noise of all samples that carry no signal.

On the filtered, gated traces the accumulator forms, for every lag on the
:class:`LagGrid`,

    Gamma1(tau) = sum_t conj(A(t)) B(t + tau)
    Gamma2(tau) = sum_t P(t) P(t + tau),   P(t) = conj(A(t)) B(t),

with ``t`` and ``t + tau`` both in the support. The same sums over the
noise-reference traces give the backgrounds. Setting ``mode=None`` and
``gate=None`` turns the preprocessing off, so the sums run over the raw
baseband samples.

Background compensation
-----------------------
Write ``A = s_a + w_a`` and ``B = s_b + w_b`` with circular Gaussian noise
independent of the signal. Expanding ``E[P(t) P(t')]`` leaves, besides the
signal term and the pure-noise term (estimated by the noise traces), the
signal x noise cross terms

    X(t, t') = m(t) k(t') + m(t') k(t)
               + M(t, t') K(t', t) + M(t', t) K(t, t')

with ``M(t, t') = E[conj(s_a(t)) s_b(t')]`` (the background-subtracted
first-order integrand), ``K(t, t') = E[conj(w_a(t)) w_b(t')]`` (the same
integrand on the noise traces), ``m(t) = M(t, t)`` and ``k(t) = K(t, t)``.
With ``compensation="full"`` the sum of ``X`` over each lag is removed in
addition to the pure-noise background; ``"noise_only"`` keeps just the
latter. For independent amplifier chains ``K`` vanishes on average and the
two modes agree within errors.

Error bars come from batch means: shots are assigned to ``n_batches``
contiguous batches, each batch keeps its own compensated sums, and merging
two accumulators is a union of batches. The finalized result stacks
batches in index order, so it is bit-identical however the batches were
distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .chain import ChainParams, ShotBlock, ShotRecord, mode_filter, train_geometry
from .emission import PulseTrainSpec, TemporalMode
from .errors import GeometryError, InsufficientData, ValidationError

#: matmul is used for the gated filter when every support segment is at most this wide
_MATMUL_MAX_WIDTH = 64


# ---------------------------------------------------------------------------
# lag grid


@dataclass(frozen=True)
class LagGrid:
    """Sorted, symmetric set of integer sample lags."""

    lags: np.ndarray
    period: int | None = None
    n_pulses: int | None = None
    window: int | None = None

    def __post_init__(self):
        lags = np.unique(np.asarray(self.lags, dtype=np.int64))
        if lags.size == 0 or not np.array_equal(lags, -lags[::-1]):
            raise GeometryError("lag grid must be symmetric about 0")
        if self.period is not None:
            peaks = self.period * np.arange(-(self.n_pulses - 1), self.n_pulses)
            if not np.all(np.isin(peaks, lags)):
                raise GeometryError("lag grid misses a pulse-period multiple")
        lags.setflags(write=False)
        object.__setattr__(self, "lags", lags)

    @classmethod
    def for_train(cls, period: int, n_pulses: int, window: int = 3) -> "LagGrid":
        """Windows of ``+-window`` samples around every ``n * period``, ``|n| < n_pulses``."""
        if window < 0 or period < 1 or n_pulses < 1:
            raise ValidationError("need window >= 0, period >= 1 and n_pulses >= 1")
        if n_pulses > 1 and 2 * window >= period:
            raise GeometryError(f"peak windows of +-{window} overlap at period {period}")
        centers = period * np.arange(-(n_pulses - 1), n_pulses)
        lags = (centers[:, None] + np.arange(-window, window + 1)).ravel()
        return cls(lags, period=period, n_pulses=n_pulses, window=window)

    @classmethod
    def dense(cls, max_lag: int) -> "LagGrid":
        """Every lag in ``[-max_lag, max_lag]``."""
        return cls(np.arange(-max_lag, max_lag + 1))

    def __len__(self):
        return self.lags.size

    @property
    def zero_index(self) -> int:
        return int(np.searchsorted(self.lags, 0))

    def index_of(self, lag: int) -> int:
        k = int(np.searchsorted(self.lags, lag))
        if k >= self.lags.size or self.lags[k] != lag:
            raise KeyError(lag)
        return k

    def peak_numbers(self) -> np.ndarray:
        if self.period is None:
            raise GeometryError("grid has no pulse period")
        return np.arange(-(self.n_pulses - 1), self.n_pulses)

    def peak_mask(self, n: int) -> np.ndarray:
        """Lags within the window of peak ``n``."""
        if self.period is None:
            raise GeometryError("grid has no pulse period")
        return np.abs(self.lags - n * self.period) <= self.window


# ---------------------------------------------------------------------------
# configuration and precomputed plan


@dataclass(frozen=True)
class CorrelatorConfig:
    """Everything that fixes which numbers a shot contributes.

    ``peaks`` are the sample indices of the pulse starts; with a temporal
    ``mode`` these are where the filtered trace equals the pulse outcomes.
    ``gate=None`` keeps all samples.
    """

    trace_len: int
    dt: float
    grid: LagGrid
    mode: TemporalMode | None = None
    peaks: tuple[int, ...] = ()
    gate: int | None = 1
    if_freq: float = 0.0
    compensation: str = "full"
    n_batches: int = 64
    batch_size: int | None = None
    time_resolved: bool = True

    def __post_init__(self):
        if self.compensation not in ("full", "noise_only"):
            raise ValidationError("compensation must be 'full' or 'noise_only'")
        if self.n_batches < 1:
            raise ValidationError("n_batches must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.gate is not None and (self.gate < 0 or not self.peaks):
            raise ValidationError("gating needs gate >= 0 and at least one peak")
        if self.mode is not None and not math.isclose(self.mode.dt, self.dt, rel_tol=1e-9):
            raise GeometryError("mode and trace sample spacing differ")
        if any(p < 0 or p >= self.trace_len for p in self.peaks):
            raise GeometryError("peak position outside the trace")
        if self.gate is not None and (min(self.peaks) - self.gate < 0
                                      or max(self.peaks) + self.gate >= self.trace_len):
            raise GeometryError(f"a +-{self.gate} sample gate around the pulse starts leaves the trace")
        object.__setattr__(self, "peaks", tuple(int(p) for p in self.peaks))

    @classmethod
    def for_train(
        cls,
        mode: TemporalMode,
        spec: PulseTrainSpec,
        chain: ChainParams,
        *,
        window: int = 3,
        gate: int | None = 1,
        prefilter: bool = True,
        compensation: str = "full",
        n_batches: int = 64,
        batch_size: int | None = None,
        time_resolved: bool = True,
    ) -> "CorrelatorConfig":
        geo = train_geometry(mode, spec, chain)
        return cls(
            trace_len=chain.trace_len,
            dt=chain.dt,
            grid=LagGrid.for_train(geo.period, spec.n_pulses, window),
            mode=mode if prefilter else None,
            peaks=tuple(int(p) for p in geo.peaks),
            gate=gate,
            if_freq=chain.carrier_freq,
            compensation=compensation,
            n_batches=n_batches,
            batch_size=batch_size,
            time_resolved=time_resolved,
        )

    def support(self) -> np.ndarray:
        if self.gate is None:
            return np.arange(self.trace_len)
        pts = np.asarray(self.peaks)[:, None] + np.arange(-self.gate, self.gate + 1)
        pts = np.unique(pts.ravel())
        return pts[(pts >= 0) & (pts < self.trace_len)]

    def batch_of(self, shot_index: np.ndarray) -> np.ndarray:
        shot_index = np.asarray(shot_index, dtype=np.int64)
        if self.batch_size is None:
            return shot_index % self.n_batches
        b = shot_index // self.batch_size
        if np.any(b >= self.n_batches):
            raise GeometryError("shot index beyond the configured batches")
        return b

    def same_geometry(self, other: "CorrelatorConfig") -> bool:
        same_mode = (self.mode is None and other.mode is None) or (
            self.mode is not None
            and other.mode is not None
            and np.array_equal(self.mode.samples, other.mode.samples)
        )
        return (
            self.trace_len == other.trace_len
            and self.dt == other.dt
            and np.array_equal(self.grid.lags, other.grid.lags)
            and same_mode
            and self.peaks == other.peaks
            and self.gate == other.gate
            and self.if_freq == other.if_freq
            and self.compensation == other.compensation
            and self.n_batches == other.n_batches
            and self.batch_size == other.batch_size
            and self.time_resolved == other.time_resolved
        )


class _Plan:
    """Index tables derived from a config: support, lag pairs and filter taps."""

    def __init__(self, cfg: CorrelatorConfig):
        T = cfg.trace_len
        self.support = cfg.support()
        ns = self.support.size
        pos = np.full(T, -1, dtype=np.int64)
        pos[self.support] = np.arange(ns)

        lags = cfg.grid.lags
        table = np.full((ns, lags.size), -1, dtype=np.int64)
        I, J, L = [], [], []
        count = 0
        for l, tau in enumerate(lags):
            tj = self.support + tau
            ok = (tj >= 0) & (tj < T)
            i = np.nonzero(ok)[0]
            j = pos[tj[ok]]
            keep = j >= 0
            i, j = i[keep], j[keep]
            I.append(i)
            J.append(j)
            L.append(np.full(i.size, l, dtype=np.int64))
            table[i, l] = count + np.arange(i.size)
            count += i.size
        self.I = np.concatenate(I)
        self.J = np.concatenate(J)
        self.L = np.concatenate(L)
        self.n_pairs = count
        self.n_lags = lags.size
        neg = np.searchsorted(lags, -lags)
        self.reverse = table[self.J, neg[self.L]]
        l0 = cfg.grid.zero_index
        self.zero_pair = table[:, l0]
        self.pair_counts = np.bincount(self.L, minlength=self.n_lags)
        self.peak_support = np.array([pos[p] for p in cfg.peaks], dtype=np.int64)

        self.carrier = None
        if cfg.if_freq:
            self.carrier = np.exp(-2j * np.pi * cfg.if_freq * cfg.dt * np.arange(T))
        self.mode = cfg.mode
        self.segments = []
        if cfg.mode is not None:
            self.segments = self._segments(cfg.mode, T)

    def _segments(self, mode: TemporalMode, T: int):
        s = self.support
        breaks = np.nonzero(np.diff(s) > 1)[0] + 1
        runs = np.split(np.arange(s.size), breaks)
        if max(r.size for r in runs) > _MATMUL_MAX_WIDTH:
            return None
        taps = np.conj(mode.samples) * mode.dt
        out = []
        for r in runs:
            t0, t1 = int(s[r[0]]), int(s[r[-1]])
            hi = min(t1 + mode.n_samples, T)
            W = np.zeros((hi - t0, r.size), dtype=complex)
            for c, t in enumerate(range(t0, t1 + 1)):
                n = min(mode.n_samples, hi - t)
                W[t - t0:t - t0 + n, c] = taps[:n]
            out.append((t0, hi, r[0], r[-1] + 1, W))
        return out

    def baseband(self, x: np.ndarray) -> np.ndarray:
        if x.dtype != np.complex64:
            x = np.asarray(x, dtype=complex)
        if self.carrier is None:
            return x
        return x * self.carrier.astype(x.dtype, copy=False)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Filtered values on the support as complex128, shape ``(n_shots, n_support)``."""
        if self.mode is None:
            return x[:, self.support].astype(complex)
        if self.segments is None:
            return mode_filter(x, self.mode)[:, self.support]
        y = np.empty((x.shape[0], self.support.size), dtype=complex)
        for t0, hi, c0, c1, W in self.segments:
            y[:, c0:c1] = x[:, t0:hi] @ W.astype(x.dtype, copy=False)
        return y


# ---------------------------------------------------------------------------
# accumulator


class _Kahan:
    """Compensated running sum of arrays; the value is ``s - c``."""

    __slots__ = ("s", "c")

    def __init__(self, shape, dtype=complex):
        self.s = np.zeros(shape, dtype=dtype)
        self.c = np.zeros(shape, dtype=dtype)

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t

    def value(self):
        return self.s - self.c

    def merged(self, other: "_Kahan") -> "_Kahan":
        k = _Kahan.__new__(_Kahan)
        k.s = self.s + other.s
        k.c = self.c + other.c
        return k

    def copy(self) -> "_Kahan":
        k = _Kahan.__new__(_Kahan)
        k.s = self.s.copy()
        k.c = self.c.copy()
        return k


_PAIR_FIELDS = ("g1_sig", "g1_bg", "g2_sig", "g2_bg")
_SUPPORT_FIELDS = ("ya", "yb")
_TIME_FIELDS = ("raw_a", "raw_b", "xp_sig", "xp_bg")


class _Batch:
    def __init__(self, plan: _Plan, trace_len: int, time_resolved: bool):
        self.n = 0
        self.sums = {f: _Kahan(plan.n_pairs) for f in _PAIR_FIELDS}
        for f in _SUPPORT_FIELDS:
            self.sums[f] = _Kahan(plan.support.size)
        if time_resolved:
            for f in _TIME_FIELDS:
                self.sums[f] = _Kahan(trace_len)

    def merged(self, other: "_Batch") -> "_Batch":
        b = _Batch.__new__(_Batch)
        b.n = self.n + other.n
        b.sums = {k: v.merged(other.sums[k]) for k, v in self.sums.items()}
        return b

    def copy(self) -> "_Batch":
        b = _Batch.__new__(_Batch)
        b.n = self.n
        b.sums = {k: v.copy() for k, v in self.sums.items()}
        return b

    def value(self, name):
        return self.sums[name].value()


def _pair_sums(ya: np.ndarray, yb: np.ndarray, plan: _Plan):
    """Per-pair sums over shots of the first- and second-order integrands."""
    g1 = np.einsum("sp,sp->p", np.conj(ya[:, plan.I]), yb[:, plan.J])
    P = np.conj(ya) * yb
    g2 = np.einsum("sp,sp->p", P[:, plan.I], P[:, plan.J])
    return g1, g2


class CorrelationAccumulator:
    """Running, mergeable correlation sums for one configuration."""

    def __init__(self, config: CorrelatorConfig, *, like: "CorrelationAccumulator | None" = None):
        self.config = config
        if like is not None and like.config.same_geometry(config):
            self._plan = like._plan
        else:
            self._plan = _Plan(config)
        self._batches: dict[int, _Batch] = {}

    def empty_like(self) -> "CorrelationAccumulator":
        """Fresh accumulator sharing this one's precomputed index tables."""
        return CorrelationAccumulator(self.config, like=self)

    # -- accumulation --------------------------------------------------------

    def accumulate_block(self, block: ShotBlock) -> "CorrelationAccumulator":
        cfg = self.config
        if block.trace_len != cfg.trace_len or not math.isclose(block.dt, cfg.dt, rel_tol=1e-9):
            raise GeometryError(
                f"block has {block.trace_len} samples at dt={block.dt}, "
                f"accumulator expects {cfg.trace_len} at dt={cfg.dt}"
            )
        batch_ids = cfg.batch_of(block.shot_indices)
        for b in np.unique(batch_ids):
            rows = np.nonzero(batch_ids == b)[0]
            sl = slice(rows[0], rows[-1] + 1) if rows.size == rows[-1] - rows[0] + 1 else rows
            self._add(int(b), block.sig_a[sl], block.sig_b[sl], block.noise_a[sl], block.noise_b[sl])
        return self

    def accumulate_shot(self, shot: ShotRecord) -> "CorrelationAccumulator":
        return self.accumulate_block(ShotBlock.from_records([shot]))

    def _add(self, b, sa, sb, na, nb):
        plan = self._plan
        batch = self._batches.get(b)
        if batch is None:
            batch = self._batches[b] = _Batch(plan, self.config.trace_len, self.config.time_resolved)
        sa, sb, na, nb = (plan.baseband(x) for x in (sa, sb, na, nb))
        ya, yb = plan.project(sa), plan.project(sb)
        za, zb = plan.project(na), plan.project(nb)
        g1s, g2s = _pair_sums(ya, yb, plan)
        g1b, g2b = _pair_sums(za, zb, plan)
        s = batch.sums
        s["g1_sig"].add(g1s)
        s["g1_bg"].add(g1b)
        s["g2_sig"].add(g2s)
        s["g2_bg"].add(g2b)
        s["ya"].add(ya.sum(axis=0))
        s["yb"].add(yb.sum(axis=0))
        if self.config.time_resolved:
            s["raw_a"].add(sa.sum(axis=0, dtype=complex))
            s["raw_b"].add(sb.sum(axis=0, dtype=complex))
            s["xp_sig"].add((np.conj(sb) * sa).sum(axis=0, dtype=complex))
            s["xp_bg"].add((np.conj(nb) * na).sum(axis=0, dtype=complex))
        batch.n += sa.shape[0]

    # -- combination ---------------------------------------------------------

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        """New accumulator holding the batches of both operands."""
        if not self.config.same_geometry(other.config):
            raise GeometryError("cannot merge accumulators with different configurations")
        out = CorrelationAccumulator.__new__(CorrelationAccumulator)
        out.config, out._plan = self.config, self._plan
        out._batches = {}
        for b in sorted(set(self._batches) | set(other._batches)):
            x, y = self._batches.get(b), other._batches.get(b)
            if x is not None and y is not None:
                out._batches[b] = x.merged(y)
            else:
                out._batches[b] = (x or y).copy()
        return out

    def copy(self) -> "CorrelationAccumulator":
        return self.merge(self.empty_like())

    # -- totals --------------------------------------------------------------

    @property
    def n_shots(self) -> int:
        return sum(b.n for b in self._batches.values())

    @property
    def batch_counts(self) -> np.ndarray:
        counts = np.zeros(self.config.n_batches, dtype=np.int64)
        for b, v in self._batches.items():
            counts[b] = v.n
        return counts

    def _ordered(self):
        return [self._batches[b] for b in sorted(self._batches)]

    def _total(self, name: str) -> np.ndarray:
        batches = self._ordered()
        if not batches:
            shape = self._plan.n_pairs if name in _PAIR_FIELDS else self._plan.support.size
            if name in _TIME_FIELDS:
                shape = self.config.trace_len
            return np.zeros(shape, dtype=complex)
        return np.sum([b.value(name) for b in batches], axis=0)

    def _per_lag(self, pair_values: np.ndarray) -> np.ndarray:
        p = self._plan
        return np.bincount(p.L, pair_values.real, p.n_lags) + 1j * np.bincount(p.L, pair_values.imag, p.n_lags)

    @property
    def g1_sig(self) -> np.ndarray:
        return self._per_lag(self._total("g1_sig"))

    @property
    def g1_bg(self) -> np.ndarray:
        return self._per_lag(self._total("g1_bg"))

    @property
    def g2_sig(self) -> np.ndarray:
        return self._per_lag(self._total("g2_sig"))

    @property
    def g2_bg(self) -> np.ndarray:
        return self._per_lag(self._total("g2_bg"))

    @property
    def support(self) -> np.ndarray:
        return self._plan.support

    # -- finalization --------------------------------------------------------

    def _compensation_pairs(self, M: np.ndarray, K: np.ndarray) -> np.ndarray:
        p = self._plan
        m = M[p.zero_pair]
        k = K[p.zero_pair]
        return m[p.I] * k[p.J] + m[p.J] * k[p.I] + M * K[p.reverse] + M[p.reverse] * K

    def finalize(self) -> "CorrelationResult":
        batches = self._ordered()
        N = self.n_shots
        nonempty = [b for b in batches if b.n > 0]
        if N < 1 or len(nonempty) < 2:
            raise InsufficientData(
                f"need shots in at least 2 batches for error bars, have {len(nonempty)}"
            )
        p, cfg = self._plan, self.config
        counts = np.array([b.n for b in nonempty], dtype=float)
        w = counts / N

        M = (self._total("g1_sig") - self._total("g1_bg")) / N
        K = self._total("g1_bg") / N
        X = self._compensation_pairs(M, K) if cfg.compensation == "full" else np.zeros_like(M)
        X_lag = self._per_lag(X)

        bG1 = np.array([self._per_lag((b.value("g1_sig") - b.value("g1_bg")) / b.n) for b in nonempty])
        bG2 = np.array([self._per_lag((b.value("g2_sig") - b.value("g2_bg")) / b.n) for b in nonempty]) - X_lag
        G1 = self._per_lag(M)
        G2_raw = self._per_lag((self._total("g2_sig") - self._total("g2_bg")) / N)
        G2c = G2_raw - X_lag

        ya = self._total("ya") / N
        yb = self._total("yb") / N
        b_ya = np.array([b.value("ya") / b.n for b in nonempty])
        power = M[p.zero_pair]
        b_power = np.array([((b.value("g1_sig") - b.value("g1_bg")) / b.n)[p.zero_pair] for b in nonempty])

        res = CorrelationResult(
            lags=cfg.grid.lags.copy(),
            G1=G1,
            G2=G2c.real.copy(),
            G2_complex=G2c,
            G2_noise_only=G2_raw,
            stderr_G1=batch_stderr(bG1.real, w) + 1j * batch_stderr(bG1.imag, w),
            stderr_G2=batch_stderr(bG2.real, w),
            n_shots=N,
            batch_weights=w,
            batch_G1=bG1,
            batch_G2=bG2.real.copy(),
            grid=cfg.grid,
            compensation=cfg.compensation,
            support=p.support.copy(),
            peak_support=p.peak_support.copy(),
            pair_counts=p.pair_counts.copy(),
            support_mean_a=ya,
            support_mean_b=yb,
            support_power=power,
            batch_support_a=b_ya,
            batch_support_power=b_power,
            dt=cfg.dt,
        )
        if cfg.time_resolved:
            res.mean_a = self._total("raw_a") / N
            res.mean_b = self._total("raw_b") / N
            res.cross_power = (self._total("xp_sig") - self._total("xp_bg")) / N
        if cfg.grid.period is not None:
            res.center = {"G1_0": complex(G1[cfg.grid.zero_index]), "G2_0": float(res.G2[cfg.grid.zero_index])}
            res.side_peaks = {
                int(n): float(res.G2[cfg.grid.index_of(int(n) * cfg.grid.period)])
                for n in cfg.grid.peak_numbers() if n != 0
            }
        return res


def batch_stderr(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Standard error of a weighted mean from batch-level estimates (rows)."""
    B = values.shape[0]
    mean = np.tensordot(w, values, axes=1)
    dev = values - mean
    return np.sqrt(np.tensordot(w**2, dev**2, axes=1) * B / (B - 1))


def accumulate_shot(acc: CorrelationAccumulator, shot: ShotRecord) -> CorrelationAccumulator:
    return acc.accumulate_shot(shot)


def merge(a: CorrelationAccumulator, b: CorrelationAccumulator) -> CorrelationAccumulator:
    return a.merge(b)


def merge_all(accs: Sequence[CorrelationAccumulator]) -> CorrelationAccumulator:
    """Ordered binary reduction of per-shard accumulators (list order = shard order)."""
    accs = list(accs)
    if not accs:
        raise InsufficientData("nothing to merge")
    while len(accs) > 1:
        nxt = [accs[i].merge(accs[i + 1]) for i in range(0, len(accs) - 1, 2)]
        if len(accs) % 2:
            nxt.append(accs[-1])
        accs = nxt
    return accs[0]


def finalize(acc: CorrelationAccumulator) -> "CorrelationResult":
    return acc.finalize()


# ---------------------------------------------------------------------------
# results


@dataclass
class CorrelationResult:
    """Background-subtracted correlations per lag, normalized per shot.

    ``G2`` is the real part of the compensated estimate; ``G2_noise_only``
    keeps the version with only the pure-noise background removed. Batch
    rows (``batch_*``) support jackknife errors of derived ratios.
    """

    lags: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G2_complex: np.ndarray
    G2_noise_only: np.ndarray
    stderr_G1: np.ndarray
    stderr_G2: np.ndarray
    n_shots: int
    batch_weights: np.ndarray
    batch_G1: np.ndarray
    batch_G2: np.ndarray
    grid: LagGrid
    compensation: str
    support: np.ndarray
    peak_support: np.ndarray
    pair_counts: np.ndarray
    support_mean_a: np.ndarray
    support_mean_b: np.ndarray
    support_power: np.ndarray
    batch_support_a: np.ndarray
    batch_support_power: np.ndarray
    dt: float
    mean_a: np.ndarray | None = None
    mean_b: np.ndarray | None = None
    cross_power: np.ndarray | None = None
    center: dict = field(default_factory=dict)
    side_peaks: dict = field(default_factory=dict)

    @property
    def n_batches(self) -> int:
        return self.batch_weights.size

    def to_dict(self) -> dict:
        return {
            "n_shots": int(self.n_shots),
            "n_batches": int(self.n_batches),
            "compensation": self.compensation,
            "lags": self.lags.tolist(),
            "G1_real": self.G1.real.tolist(),
            "G1_imag": self.G1.imag.tolist(),
            "G2": self.G2.tolist(),
            "G2_imag": self.G2_complex.imag.tolist(),
            "G2_noise_only": self.G2_noise_only.real.tolist(),
            "stderr_G1_real": self.stderr_G1.real.tolist(),
            "stderr_G1_imag": self.stderr_G1.imag.tolist(),
            "stderr_G2": self.stderr_G2.tolist(),
            "center": {"G1_0_real": self.center["G1_0"].real, "G1_0_imag": self.center["G1_0"].imag,
                       "G2_0": self.center["G2_0"]} if self.center else {},
            "side_peaks": {str(k): v for k, v in self.side_peaks.items()},
        }


@dataclass
class PeakTable:
    """Window-integrated correlation peaks per pulse pair.

    Each peak ``n`` is the sum of the lag window around ``n t_p`` divided by
    the number of pulse pairs ``n_pulses - |n|`` at that separation.
    ``side_*`` are pair-weighted means over all ``n != 0``; ``ratio`` is
    ``G2(center) / G2(side)`` with a jackknife-over-batches error.
    """

    n: np.ndarray
    G1: np.ndarray
    G1_stderr: np.ndarray
    G2: np.ndarray
    G2_stderr: np.ndarray
    pair_counts: np.ndarray
    side_G1: complex
    side_G1_stderr: float
    side_G2: float
    side_G2_stderr: float
    ratio: float
    ratio_stderr: float

    @property
    def center_G1(self) -> complex:
        return complex(self.G1[self.n == 0][0])

    @property
    def center_G2(self) -> float:
        return float(self.G2[self.n == 0][0])

    def rows(self) -> list[dict]:
        return [
            {
                "n": int(n),
                "G1_real": float(g1.real),
                "G1_imag": float(g1.imag),
                "G1_stderr": float(e1),
                "G2": float(g2),
                "G2_stderr": float(e2),
                "pairs": int(c),
            }
            for n, g1, e1, g2, e2, c in zip(self.n, self.G1, self.G1_stderr, self.G2, self.G2_stderr, self.pair_counts)
        ]

    def to_dict(self) -> dict:
        return {
            "center_G1": self.center_G1.real,
            "center_G2": self.center_G2,
            "side_G1": self.side_G1.real,
            "side_G1_stderr": self.side_G1_stderr,
            "side_G2": self.side_G2,
            "side_G2_stderr": self.side_G2_stderr,
            "ratio": self.ratio,
            "ratio_stderr": self.ratio_stderr,
            "peaks": self.rows(),
        }


def _jackknife(values_fn, batch_rows: np.ndarray, w: np.ndarray) -> float:
    """Jackknife standard error of ``values_fn(mean)`` over weighted batch rows."""
    B = batch_rows.shape[0]
    full = np.tensordot(w, batch_rows, axes=1)
    est = np.empty(B)
    for b in range(B):
        loo = (full - w[b] * batch_rows[b]) / (1 - w[b])
        est[b] = values_fn(loo)
    return float(np.sqrt((B - 1) / B * np.sum((est - est.mean()) ** 2)))


def _peak_operator(grid: LagGrid):
    """Matrix mapping per-lag values onto per-pair peak integrals."""
    if grid.period is None:
        raise GeometryError("peak extraction needs a pulse-train lag grid")
    ns = grid.peak_numbers()
    pairs = grid.n_pulses - np.abs(ns)
    S = np.stack([grid.peak_mask(int(n)) for n in ns]).astype(float) / pairs[:, None]
    return ns, pairs, S


def peak_batches(result: CorrelationResult):
    """Per-batch peak integrals: ``(n, pairs, G1 rows, G2 rows, weights)``."""
    ns, pairs, S = _peak_operator(result.grid)
    return ns, pairs, result.batch_G1 @ S.T, result.batch_G2 @ S.T, result.batch_weights


def peak_extract(result: CorrelationResult, spec: PulseTrainSpec | None = None) -> PeakTable:
    grid = result.grid
    if spec is not None and grid.n_pulses is not None and spec.n_pulses != grid.n_pulses:
        raise GeometryError("train spec and lag grid disagree on the number of pulses")
    ns, pairs, S = _peak_operator(grid)
    G1 = S @ result.G1
    G2 = S @ result.G2
    bG1 = result.batch_G1 @ S.T
    bG2 = result.batch_G2 @ S.T
    w = result.batch_weights
    G1_err = batch_stderr(bG1.real, w)
    G2_err = batch_stderr(bG2, w)

    side = ns != 0
    if side.any():
        sw = pairs[side] / pairs[side].sum()
        side_G1 = complex(np.dot(sw, G1[side]))
        side_G2 = float(np.dot(sw, G2[side]))
        side_G1_err = float(batch_stderr((bG1[:, side] @ sw).real[:, None], w)[0])
        side_G2_err = float(batch_stderr((bG2[:, side] @ sw)[:, None], w)[0])
        c = int(np.nonzero(ns == 0)[0][0])
        ratio = G2[c] / side_G2 if side_G2 != 0 else float("nan")

        def _ratio(row):
            return row[c] / np.dot(sw, row[side])

        ratio_err = _jackknife(_ratio, bG2, w)
    else:
        side_G1, side_G2, side_G1_err, side_G2_err = 0j, float("nan"), float("nan"), float("nan")
        ratio, ratio_err = float("nan"), float("nan")
    return PeakTable(ns, G1, G1_err, G2, G2_err, pairs, side_G1, side_G1_err, side_G2,
                     side_G2_err, float(ratio), ratio_err)


# ---------------------------------------------------------------------------
# time-resolved averages for Rabi sweeps


@dataclass
class RabiTrace:
    """Mean quadrature and cross-power traces of one preparation angle.

    ``quadrature`` is the mode-filtered mean of channel a (rotated by
    ``phase``); ``quad_peak`` its mean over pulse starts. ``power_peak`` is
    the background-subtracted zero-lag first-order integrand at the pulse
    starts, proportional to the emitted photon number.
    """

    times: np.ndarray
    quadrature: np.ndarray
    cross_power: np.ndarray
    quad_peak: float
    quad_stderr: float
    power_peak: float
    power_stderr: float
    phase: float


def quadrature_phase(result: CorrelationResult) -> float:
    """Rotation angle (mod pi) making the mean pulse-start quadrature real."""
    q = complex(np.mean(result.support_mean_a[result.peak_support]))
    return float(np.mod(np.angle(q), np.pi)) if q != 0 else 0.0


def rabi_traces(source, mode: TemporalMode | None = None, spec: PulseTrainSpec | None = None,
                chain: ChainParams | None = None, *, phase: float | None = None,
                n_batches: int = 64) -> RabiTrace:
    """Time-resolved averages of one Rabi point.

    ``source`` is a finalized :class:`CorrelationResult`, or shots
    (a :class:`ShotBlock` or ShotRecords) which are then correlated with a
    configuration built from ``mode``, ``spec`` and ``chain``. ``phase``
    should be shared across a sweep; by default it is taken from this
    point (:func:`quadrature_phase`).
    """
    if isinstance(source, CorrelationResult):
        res = source
    else:
        if mode is None or spec is None or chain is None:
            raise ValidationError("mode, spec and chain are needed to correlate raw shots")
        cfg = CorrelatorConfig.for_train(mode, spec, chain, n_batches=n_batches)
        acc = CorrelationAccumulator(cfg)
        blocks = [source] if isinstance(source, ShotBlock) else [ShotBlock.from_records(list(source))]
        for blk in blocks:
            acc.accumulate_block(blk)
        res = acc.finalize()
    if res.mean_a is None:
        raise ValidationError("result was accumulated without time-resolved sums")
    if phase is None:
        phase = quadrature_phase(res)
    rot = np.exp(-1j * phase)
    ps = res.peak_support
    w = res.batch_weights
    quad = (mode_filter(res.mean_a, mode) if mode is not None else res.mean_a) * rot
    bq = (res.batch_support_a[:, ps].mean(axis=1) * rot).real
    bp = res.batch_support_power[:, ps].mean(axis=1).real
    return RabiTrace(
        times=np.arange(res.mean_a.size) * res.dt,
        quadrature=quad,
        cross_power=res.cross_power,
        quad_peak=float((np.mean(res.support_mean_a[ps]) * rot).real),
        quad_stderr=float(batch_stderr(bq[:, None], w)[0]),
        power_peak=float(np.mean(res.support_power[ps]).real),
        power_stderr=float(batch_stderr(bp[:, None], w)[0]),
        phase=float(phase),
    )


# ---------------------------------------------------------------------------
# estimator front end


class HBTCorrelator(BaseEstimator):
    """Estimator wrapper around :class:`CorrelationAccumulator`.

    ``fit`` accumulates a ShotBlock (or a list of ShotRecords) from scratch,
    ``partial_fit`` adds to the running sums. Fitted attributes:
    ``accumulator_``, ``result_`` and ``peaks_``.
    """

    def __init__(self, mode=None, spec=None, chain=None, window=3, gate=1, prefilter=True,
                 compensation="full", n_batches=64, batch_size=None):
        self.mode = mode
        self.spec = spec
        self.chain = chain
        self.window = window
        self.gate = gate
        self.prefilter = prefilter
        self.compensation = compensation
        self.n_batches = n_batches
        self.batch_size = batch_size

    def _config(self) -> CorrelatorConfig:
        if self.mode is None or self.spec is None or self.chain is None:
            raise ValidationError("HBTCorrelator needs mode, spec and chain")
        return CorrelatorConfig.for_train(
            self.mode, self.spec, self.chain, window=self.window, gate=self.gate,
            prefilter=self.prefilter, compensation=self.compensation,
            n_batches=self.n_batches, batch_size=self.batch_size,
        )

    @staticmethod
    def _blocks(X) -> Iterable[ShotBlock]:
        if isinstance(X, ShotBlock):
            return [X]
        X = list(X)
        if X and isinstance(X[0], ShotBlock):
            return X
        return [ShotBlock.from_records(X)]

    def fit(self, X, y=None):
        self.accumulator_ = CorrelationAccumulator(self._config())
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "accumulator_"):
            self.accumulator_ = CorrelationAccumulator(self._config())
        for blk in self._blocks(X):
            self.accumulator_.accumulate_block(blk)
        self.result_ = self.accumulator_.finalize()
        self.peaks_ = peak_extract(self.result_, self.spec)
        return self

    def transform(self, X=None) -> np.ndarray:
        """Peak table as rows ``(n, G1 real, G1 imag, G2)``."""
        if not hasattr(self, "peaks_"):
            raise ValidationError("HBTCorrelator is not fitted")
        p = self.peaks_
        return np.column_stack([p.n, p.G1.real, p.G1.imag, p.G2])
