"""Exponential synaptic traces and their translation to membrane current.

A presynaptic spike train is weighted and accumulated into a dimensionless
trace s(t) with exponential decay; the trace drives the membrane either as
a current (current-based) or as a conductance toward a reversal potential
(conductance-based):

    I = I_hat * s(t)            (cuba, signed by excitatory/inhibitory)
    I = g_hat * s(t) * (E_syn - V)   (coba)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import WindowTooShort

MODE_CUBA = "cuba"
MODE_COBA = "coba"


@dataclass(frozen=True)
class SynapseConfig:
    mode: str
    tau_syn: float
    I_hat: float = 0.0
    g_hat: float = 0.0
    E_syn: float = 0.0
    sign: str = "excitatory"

    def __post_init__(self):
        if self.mode not in (MODE_CUBA, MODE_COBA):
            raise ValueError(f"mode must be '{MODE_CUBA}' or '{MODE_COBA}'")
        if self.sign not in ("excitatory", "inhibitory"):
            raise ValueError("sign must be 'excitatory' or 'inhibitory'")
        if not self.tau_syn > 0:
            raise ValueError("tau_syn must be > 0")
        if self.I_hat < 0 or self.g_hat < 0:
            raise ValueError("gains must be >= 0")

    @property
    def is_excitatory(self) -> bool:
        return self.sign == "excitatory"


@dataclass(frozen=True)
class WeightedSpikeTrain:
    """Ordered (time, weight) events; weights are dimensionless multipliers >= 0."""

    events: tuple

    def __post_init__(self):
        evs = tuple((float(t), float(w)) for t, w in self.events)
        times = [t for t, _ in evs]
        if any(t1 < t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("event times must be non-decreasing")
        if any(w < 0 for _, w in evs):
            raise ValueError("event weights must be >= 0")
        object.__setattr__(self, "events", evs)

    @classmethod
    def single(cls, time: float, weight: float = 1.0) -> "WeightedSpikeTrain":
        return cls(((time, weight),))

    @classmethod
    def regular(cls, start: float, interval: float, count: int,
                weight: float = 1.0) -> "WeightedSpikeTrain":
        return cls(tuple((start + i * interval, weight) for i in range(count)))


def trace_step(s: float, tau_syn: float, dt: float, arriving_weight_sum: float = 0.0) -> float:
    """Exact exponential decay over dt, then the boundary jump."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return s * math.exp(-dt / tau_syn) + arriving_weight_sum


def weights_per_boundary(train: WeightedSpikeTrain, n_steps: int, dt: float):
    """Quantize events onto sample boundaries.

    Events in ((k)dt, (k+1)dt] are applied at boundary k+1 (spikes arriving
    between boundaries take effect at the next one); events at t <= 0 fold
    into the initial trace value.  Returns (s0, per-step arrival sums).
    """
    s0 = 0.0
    arrivals = np.zeros(n_steps)
    for t, wgt in train.events:
        if t <= 0.0:
            s0 += wgt
            continue
        k = int(math.ceil(t / dt - 1e-12)) - 1
        if 0 <= k < n_steps:
            arrivals[k] += wgt
    return s0, arrivals


def synaptic_current(s: float, cfg: SynapseConfig, V_m: float) -> float:
    """Membrane current for trace value s at membrane potential V_m."""
    if cfg.mode == MODE_CUBA:
        current = cfg.I_hat * s
        return current if cfg.is_excitatory else -current
    return cfg.g_hat * s * (cfg.E_syn - V_m)


def psp_metrics(trace, stim_time: float, min_baseline_samples: int = 10):
    """Baseline and signed amplitude of a postsynaptic potential.

    The baseline is the mean membrane potential over the pre-stimulus
    window; the amplitude is the largest post-stimulus excursion from that
    baseline, signed (positive for depolarizing deflections).
    """
    n_pre = int(math.floor(stim_time / trace.dt))
    n_pre = min(n_pre, len(trace.V))
    if n_pre < min_baseline_samples:
        raise WindowTooShort(
            f"only {n_pre} samples before the stimulus, need >= {min_baseline_samples}")
    baseline = float(np.mean(trace.V[:n_pre]))
    post = trace.V[n_pre:]
    if len(post) == 0:
        raise WindowTooShort("no samples after the stimulus")
    idx = int(np.argmax(np.abs(post - baseline)))
    return baseline, float(post[idx] - baseline)
