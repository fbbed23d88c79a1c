"""Per-sample identification of equivalent-circuit parameters.

Every topology turns its circuit law, differentiated a few times, into a
small linear system whose coefficients are the measured signal derivatives
at one sample. Solving that system at each sample gives a parameter trace.

Near-singular samples are masked rather than repaired: a sample is invalid
when the magnitude of the system determinant falls below ``epsilon`` times
the permanent of the matrix of entry RMS values (RMS over the stack's valid
range), a scale with the determinant's units.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import IoFailure, NoValidSamples, StackMismatch
from .fir_diff import DerivativeStack

DEFAULT_EPSILON = 1e-6
DEFAULT_SMOOTH_WINDOW = 500

UNITS = {
    "R": "ohm",
    "L": "H",
    "S": "1/F",
    "C": "F",
    "G": "S",
    "Gamma": "1/H",
    "G_p": "S",
    "R_ser": "ohm",
    "L_ser": "H",
}


class Topology(str, Enum):
    SERIES_RL = "SeriesRL"
    SERIES_RLC = "SeriesRLC"
    PARALLEL_GL = "ParallelGL"
    PARALLEL_GCL = "ParallelGCL"
    PARALLEL_RC = "ParallelRC"
    PARALLEL_R_SERIES_RL = "ParallelR_SeriesRL"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAMS[self]

    @property
    def required_order(self) -> int:
        return _ORDERS[self]

    @classmethod
    def parse(cls, text) -> "Topology":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for t in cls:
            if key in (t.value.lower(), t.name.lower()):
                return t
        raise ValueError(f"unknown topology {text!r}; choose from {[t.value for t in cls]}")


_PARAMS = {
    Topology.SERIES_RL: ("R", "L"),
    Topology.SERIES_RLC: ("S", "R", "L"),
    Topology.PARALLEL_GL: ("G", "Gamma"),
    Topology.PARALLEL_GCL: ("C", "G", "Gamma"),
    Topology.PARALLEL_RC: ("G", "C"),
    Topology.PARALLEL_R_SERIES_RL: ("G_p", "R_ser", "L_ser"),
}

_ORDERS = {
    Topology.SERIES_RL: 3,
    Topology.SERIES_RLC: 4,
    Topology.PARALLEL_GL: 3,
    Topology.PARALLEL_GCL: 4,
    Topology.PARALLEL_RC: 2,
    Topology.PARALLEL_R_SERIES_RL: 3,
}


@dataclass(frozen=True)
class HybridCofactors:
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class ParameterTrace:
    """Per-sample parameter estimates; ``values[n, j]`` is parameter ``names[j]``.

    Invalid samples hold NaN.
    """

    topology: Topology
    names: tuple[str, ...]
    values: np.ndarray
    valid: np.ndarray
    sample_interval_s: float
    start_time_s: float = 0.0
    cofactors: HybridCofactors | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.shape != (self.valid.size, len(self.names)):
            raise ValueError("values must have one row per sample and one column per name")

    def __len__(self) -> int:
        return self.valid.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time_s + self.sample_interval_s * np.arange(len(self))

    @property
    def units(self) -> tuple[str, ...]:
        return tuple(UNITS[n] for n in self.names)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def valid_values(self, name: str) -> np.ndarray:
        return self.column(name)[self.valid]

    def to_csv(self, path) -> None:
        """Write ``time_s,<names...>,valid``; invalid samples are written as ``nan``."""
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["time_s", *self.names, "valid"])
                for t, row, ok in zip(self.times.tolist(), self.values.tolist(), self.valid.tolist()):
                    writer.writerow(
                        [f"{t:.15g}", *(f"{x:.17g}" for x in row), int(ok)]
                    )
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc


@dataclass(frozen=True)
class ParameterStats:
    mean: float
    median: float
    std: float
    nominal: float | None = None
    percent_error: float | None = None


@dataclass
class TraceSummary:
    topology: Topology
    stats: dict[str, ParameterStats]
    valid_fraction: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.value,
            "valid_fraction": self.valid_fraction,
            "parameters": {
                name: {"unit": UNITS[name], **vars(s)} for name, s in self.stats.items()
            },
            "warnings": list(self.warnings),
        }

    def to_json(self, path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _check_stacks(vstack: DerivativeStack, istack: DerivativeStack, v_order: int, i_order: int):
    if len(vstack) != len(istack):
        raise StackMismatch(f"stack lengths differ: {len(vstack)} vs {len(istack)}")
    if vstack.base.sample_interval_s != istack.base.sample_interval_s:
        raise StackMismatch("stacks have different sample intervals")
    if tuple(vstack.valid_range) != tuple(istack.valid_range):
        raise StackMismatch(
            f"stacks have different valid ranges: {vstack.valid_range} vs {istack.valid_range}"
        )
    if vstack.max_order < v_order:
        raise StackMismatch(f"voltage derivatives through order {v_order} are required")
    if istack.max_order < i_order:
        raise StackMismatch(f"current derivatives through order {i_order} are required")


def _rms(x: np.ndarray, mask: np.ndarray) -> float:
    sel = x[mask]
    return float(np.sqrt(np.mean(sel * sel))) if sel.size else 0.0


def _det_scale(matrix, mask) -> float:
    """Permanent of the matrix of entry RMS values.

    It has the units of the determinant and bounds its typical magnitude,
    so ``|det| / scale`` is dimensionless whatever the derivative orders of
    the entries.
    """
    rms = [[_rms(np.asarray(e, dtype=float), mask) for e in row] for row in matrix]
    n = len(rms)
    return float(
        sum(
            math.prod(rms[r][perm[r]] for r in range(n))
            for perm in itertools.permutations(range(n))
        )
    )


def det3(m):
    """Explicit cofactor expansion of per-sample 3x3 determinants.

    ``m`` is a nested 3x3 sequence of equal-length arrays (or scalars).
    """
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def solve3_cramer(m, b):
    """Cramer's rule for per-sample 3x3 systems; returns ``(x, det)``."""
    det = det3(m)
    xs = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(3):
            mj = [[b[r] if c == j else m[r][c] for c in range(3)] for r in range(3)]
            xs.append(det3(mj) / det)
    return xs, det


def _trace(topology, vstack, cols, ok, cofactors=None) -> ParameterTrace:
    values = np.column_stack([np.asarray(c, dtype=float) for c in cols])
    ok = ok & np.all(np.isfinite(values), axis=1)
    values[~ok] = np.nan
    base = vstack.base
    return ParameterTrace(
        topology,
        topology.param_names,
        values,
        ok,
        base.sample_interval_s,
        base.start_time_s,
        cofactors,
    )


def _mask_det(det, scale, epsilon, mask):
    return mask & (np.abs(det) >= epsilon * scale) & (scale > 0)


def estimate_series_rl(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Series R-L from ``v = R i + L i'`` differentiated once and twice.

    ``R = (v' i''' - i'' v'') / D`` and ``L = (i' v'' - v' i'') / D`` with
    ``D = i' i''' - i''**2``.
    """
    _check_stacks(vstack, istack, 2, 3)
    i1, i2, i3 = (istack.get(k) for k in (1, 2, 3))
    v1, v2 = vstack.get(1), vstack.get(2)
    mask = vstack.valid_mask()
    den = i1 * i3 - i2 * i2
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (v1 * i3 - i2 * v2) / den
        ell = (i1 * v2 - v1 * i2) / den
    scale = _det_scale([(i1, i2), (i2, i3)], mask)
    return _trace(Topology.SERIES_RL, vstack, (r, ell), _mask_det(den, scale, epsilon, mask))


def estimate_parallel_gl(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Parallel G-Gamma (``Gamma = 1/L``) from ``i' = Gamma v + G v'``.

    Differentiating once and twice more gives the 2x2 system with rows
    ``(v', v'')`` and ``(v'', v''')`` acting on ``(Gamma, G)``, right-hand
    side ``(i'', i''')``. It is the series R-L solve applied to the pair
    ``(i', v)``, with ``Gamma`` in the ``R`` slot and ``G`` in the ``L`` slot.
    """
    _check_stacks(vstack, istack, 3, 3)
    v1, v2, v3 = (vstack.get(k) for k in (1, 2, 3))
    i2, i3 = istack.get(2), istack.get(3)
    mask = vstack.valid_mask()
    den = v1 * v3 - v2 * v2
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = (i2 * v3 - v2 * i3) / den
        g = (v1 * i3 - i2 * v2) / den
    scale = _det_scale([(v1, v2), (v2, v3)], mask)
    return _trace(Topology.PARALLEL_GL, vstack, (g, gamma), _mask_det(den, scale, epsilon, mask))


def estimate_parallel_rc(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Parallel G-C from ``i = G v + C v'`` and its first derivative."""
    _check_stacks(vstack, istack, 2, 1)
    v, v1, v2 = (vstack.get(k) for k in (0, 1, 2))
    i, i1 = istack.get(0), istack.get(1)
    mask = vstack.valid_mask()
    den = v * v2 - v1 * v1
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (i * v2 - v1 * i1) / den
        c = (v * i1 - i * v1) / den
    scale = _det_scale([(v, v1), (v1, v2)], mask)
    return _trace(Topology.PARALLEL_RC, vstack, (g, c), _mask_det(den, scale, epsilon, mask))


def estimate_series_rlc(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Series S-R-L (``S = 1/C``) from ``v' = S i + R i' + L i''`` and two derivatives.

    Only identifiable under non-sinusoidal excitation; for a single tone the
    third matrix column is ``-w**2`` times the first and every sample is
    masked. A circuit without a capacitor has no finite ``S`` and belongs to
    :func:`estimate_series_rl`.
    """
    _check_stacks(vstack, istack, 3, 4)
    i = [istack.get(k) for k in range(5)]
    v = [vstack.get(k) for k in range(4)]
    m = [[i[r + c] for c in range(3)] for r in range(3)]
    (s, r, ell), det = solve3_cramer(m, [v[1], v[2], v[3]])
    mask = vstack.valid_mask()
    scale = _det_scale(m, mask)
    return _trace(Topology.SERIES_RLC, vstack, (s, r, ell), _mask_det(det, scale, epsilon, mask))


def estimate_parallel_gcl(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Parallel C-G-Gamma from ``i' = Gamma v + G v' + C v''`` and two derivatives.

    The Wronskian-style matrix of ``v`` multiplies ``(Gamma, G, C)`` in
    that order; the trace still lists ``C, G, Gamma``.
    """
    _check_stacks(vstack, istack, 4, 3)
    v = [vstack.get(k) for k in range(5)]
    i = [istack.get(k) for k in range(4)]
    m = [[v[r + c] for c in range(3)] for r in range(3)]
    (gamma, g, c), det = solve3_cramer(m, [i[1], i[2], i[3]])
    mask = vstack.valid_mask()
    scale = _det_scale(m, mask)
    return _trace(
        Topology.PARALLEL_GCL, vstack, (c, g, gamma), _mask_det(det, scale, epsilon, mask)
    )


def hybrid_cofactors(vstack, istack) -> HybridCofactors:
    v, v1, v2, v3 = (vstack.get(k) for k in range(4))
    i, i1, i2, i3 = (istack.get(k) for k in range(4))
    a1 = i2 * (v * i2 - i1 * v1) - i3 * (v * i1 - i * v1) + v2 * (i1 * i1 - i * i2)
    a2 = i2 * (v * v2 - v1 * v1) - v3 * (v * i1 - i * v1) + v2 * (v1 * i1 - i * v2)
    a3 = i2 * (v1 * i2 - i1 * v2) - i3 * (v1 * i1 - i * v2) + v3 * (i1 * i1 - i * i2)
    a4 = i3 * (v * v2 - v1 * v1) - v3 * (v * i2 - i1 * v1) + v2 * (v1 * i2 - i1 * v2)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = a3 / a4
    return HybridCofactors(a1, a2, a3, a4, x)


def estimate_hybrid_r_rl(vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    """Resistor ``R_p = 1/G_p`` in parallel with a series ``R_ser``-``L_ser`` branch.

    ``G_p = a1/a2``, ``x = a3/a4`` (the total low-frequency conductance),
    ``R_ser = 1/(x - G_p)`` and ``L_ser = -R_ser a2/a4``. A sample is masked
    when ``|a2|`` or ``|a4|`` drops below ``epsilon`` times its RMS, or
    ``|x - G_p|`` below ``epsilon (|x| + |G_p|)``.
    """
    _check_stacks(vstack, istack, 3, 3)
    cf = hybrid_cofactors(vstack, istack)
    mask = vstack.valid_mask()
    with np.errstate(divide="ignore", invalid="ignore"):
        gp = cf.a1 / cf.a2
        diff = cf.x - gp
        r_ser = 1.0 / diff
        l_ser = -r_ser * cf.a2 / cf.a4
        ok = (
            mask
            & (np.abs(cf.a2) >= epsilon * _rms(cf.a2, mask))
            & (np.abs(cf.a4) >= epsilon * _rms(cf.a4, mask))
            & (np.abs(diff) >= epsilon * (np.abs(cf.x) + np.abs(gp)))
        )
    return _trace(Topology.PARALLEL_R_SERIES_RL, vstack, (gp, r_ser, l_ser), ok, cf)


ESTIMATORS = {
    Topology.SERIES_RL: estimate_series_rl,
    Topology.SERIES_RLC: estimate_series_rlc,
    Topology.PARALLEL_GL: estimate_parallel_gl,
    Topology.PARALLEL_GCL: estimate_parallel_gcl,
    Topology.PARALLEL_RC: estimate_parallel_rc,
    Topology.PARALLEL_R_SERIES_RL: estimate_hybrid_r_rl,
}


def estimate(topology, vstack, istack, epsilon: float = DEFAULT_EPSILON) -> ParameterTrace:
    return ESTIMATORS[Topology.parse(topology)](vstack, istack, epsilon=epsilon)


def smooth_trace(trace: ParameterTrace, window: int = DEFAULT_SMOOTH_WINDOW) -> ParameterTrace:
    """Centred moving average over valid samples only.

    The window for sample ``n`` spans ``n - window//2`` to
    ``n - window//2 + window - 1``; positions outside the record count as
    invalid. An output sample is valid when at least half of its window is.
    """
    if window < 1:
        raise ValueError(f"smoothing window must be >= 1, got {window}")
    if window == 1:
        return trace
    kernel = np.ones(window)
    lead = window // 2
    n = len(trace)
    weights = trace.valid.astype(float)

    def windowed_sum(x):
        full = np.convolve(x, kernel)
        # full[j] sums x[j - window + 1 .. j]; sample n needs j = n - lead + window - 1
        start = window - 1 - lead
        return full[start : start + n]

    counts = windowed_sum(weights)
    values = np.full(trace.values.shape, np.nan)
    ok = counts >= 0.5 * window
    for j in range(len(trace.names)):
        col = np.where(trace.valid, trace.values[:, j], 0.0)
        sums = windowed_sum(col)
        values[ok, j] = sums[ok] / counts[ok]
    return ParameterTrace(
        trace.topology,
        trace.names,
        values,
        ok,
        trace.sample_interval_s,
        trace.start_time_s,
        trace.cofactors,
    )


def summarize(trace: ParameterTrace, nominal: dict[str, float] | None = None) -> TraceSummary:
    """Mean, median and population standard deviation over valid samples."""
    n_valid = int(trace.valid.sum())
    if n_valid == 0:
        raise NoValidSamples(f"{trace.topology.value}: no valid samples to summarize")
    nominal = nominal or {}
    unknown = set(nominal) - set(trace.names)
    if unknown:
        raise ValueError(f"nominal values for unknown parameters: {sorted(unknown)}")
    stats = {}
    for name in trace.names:
        x = trace.valid_values(name)
        med = float(np.median(x))
        nom = nominal.get(name)
        pct = None
        if nom is not None and nom != 0:
            pct = 100.0 * abs(med - nom) / abs(nom)
        stats[name] = ParameterStats(
            mean=float(np.mean(x)),
            median=med,
            std=float(np.std(x)),
            nominal=None if nom is None else float(nom),
            percent_error=pct,
        )
    return TraceSummary(trace.topology, stats, n_valid / len(trace))
