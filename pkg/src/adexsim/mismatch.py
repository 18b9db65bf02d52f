"""Fixed-pattern device variability sampled into neuron populations.

Mismatch lives on the device constants a calibration loop cannot touch
(transconductance coefficients, the conversion resistor, charge gains,
offsets, the stimulus DAC gain); the bias knobs themselves stay nominal
and are later adjusted per neuron by calibration.  Multiplicative spreads
are lognormal with unit mean so positive constants stay positive; offsets
with zero nominal value get additive normal spreads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitNeuronConfig, derive_effective_adex, get_bias, set_bias, stack_population, unstack_population


@dataclass(frozen=True)
class ParameterRange:
    """Reachable range of an effective parameter with endpoint variability.

    `sigma_lo`/`sigma_hi` are the relative standard deviations observed at
    the measurement endpoints (`meas_lo`/`meas_hi`, defaulting to the range
    bounds); in between they are interpolated on a log axis.  For
    parameters whose quoted minimum is merely the smallest *measured*
    setting rather than a floor (the bias can be reduced further, or the
    circuit disabled), the validation range extends below it.
    """

    lo: float
    hi: float
    sigma_lo: float = 0.0
    sigma_hi: float = 0.0
    meas_lo: float | None = None
    meas_hi: float | None = None

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def sigma_at(self, value: float) -> float:
        if self.sigma_lo == self.sigma_hi:
            return self.sigma_hi
        lo = self.meas_lo if self.meas_lo is not None else self.lo
        hi = self.meas_hi if self.meas_hi is not None else self.hi
        v = min(max(value, lo), hi)
        if lo <= 0:
            return self.sigma_hi
        frac = math.log(v / lo) / math.log(hi / lo)
        return self.sigma_lo + frac * (self.sigma_hi - self.sigma_lo)


# Reachable effective-parameter envelope of the emulated neuron array with
# the neuron-to-neuron variability quoted at the measurement endpoints.
# The subthreshold adaptation strength was characterized down to 30 uS
# only; smaller values remain reachable by reducing the coupling bias, so
# its validation floor is zero.
PARAMETER_RANGES = {
    "tau_m": ParameterRange(0.6e-6, 915e-6, 0.2 / 0.6, 140 / 915),
    "E_l": ParameterRange(0.0, 1.0),
    "V_threshold": ParameterRange(0.2, 1.2),
    "I_stim": ParameterRange(0.0, 121e-9, 14 / 121, 14 / 121),
    "tau_syn": ParameterRange(0.29e-6, 538e-6, 0.03 / 0.29, 98 / 538),
    "I_syn_peak": ParameterRange(0.033e-6, 1.15e-6, 0.003 / 0.033, 0.03 / 1.15),
    "tau_w": ParameterRange(22e-6, 853e-6, 3 / 22, 117 / 853),
    "a": ParameterRange(0.0, 1065e-6, 4 / 30, 114 / 1065,
                        meas_lo=30e-6, meas_hi=1065e-6),
    "b": ParameterRange(0.0, math.inf),
    "delta_t": ParameterRange(13e-3, 91e-3, 2 / 13, 46 / 91),
}

# spreads with no quoted endpoint data; documented defaults
DEFAULT_ONSET_CURRENT_SIGMA = 0.10   # exponential I_0 (shifts the onset)
DEFAULT_FOLLOWER_OFFSET_SIGMA = 5e-3  # additive, volts


@dataclass(frozen=True)
class MismatchModel:
    """Per-constant spreads plus the sampling seed.

    `relative` maps a dotted circuit-constant path to a relative standard
    deviation (lognormal multiplier, unit mean); `additive` maps a path to
    an absolute standard deviation (normal, for zero-nominal offsets).
    """

    relative: dict = field(default_factory=dict)
    additive: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, sigma in {**self.relative, **self.additive}.items():
            if sigma < 0:
                raise ValueError(f"sigma for {name!r} must be >= 0")


@dataclass
class Population:
    """Mismatch-perturbed copies of one nominal neuron."""

    neurons: list

    @property
    def size(self) -> int:
        return len(self.neurons)

    def stacked(self) -> CircuitNeuronConfig:
        return stack_population(self.neurons)

    @classmethod
    def from_stacked(cls, cfg: CircuitNeuronConfig, n: int) -> "Population":
        return cls(unstack_population(cfg, n))


def _lognormal_multiplier(rng, sigma_rel: float, n: int) -> np.ndarray:
    """Unit-mean lognormal samples whose std/mean equals sigma_rel exactly."""
    if sigma_rel == 0.0:
        return np.ones(n)
    s = math.sqrt(math.log1p(sigma_rel ** 2))
    return np.exp(rng.normal(0.0, s, n) - 0.5 * s * s)


def sample_population(nominal: CircuitNeuronConfig, mm: MismatchModel, n: int) -> Population:
    """Draw n independent neurons around the nominal configuration.

    Deterministic for a given seed: paths are visited in sorted order, one
    block of n samples each.
    """
    if n < 1:
        raise ValueError("population size must be >= 1")
    rng = np.random.default_rng(mm.seed)
    cfg = stack_population([nominal] * n)
    for path in sorted(mm.relative):
        mult = _lognormal_multiplier(rng, mm.relative[path], n)
        cfg = set_bias(cfg, path, np.asarray(get_bias(cfg, path)) * mult)
    for path in sorted(mm.additive):
        sigma = mm.additive[path]
        delta = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
        cfg = set_bias(cfg, path, np.asarray(get_bias(cfg, path)) + delta)
    return Population.from_stacked(cfg, n)


def default_mismatch_model(nominal: CircuitNeuronConfig, seed: int = 0) -> MismatchModel:
    """Spreads derived from the documented endpoint variability, evaluated
    at the nominal neuron's operating point.

    Capacitors are treated as matched (their spread is folded into the
    transconductance constants); the mirror ratio of the adaptation output
    stage is likewise treated as exact.
    """
    eff = derive_effective_adex(nominal)
    relative = {
        "leak_ota.g_per_bias": PARAMETER_RANGES["tau_m"].sigma_at(eff.tau_m),
        "stim_gain": PARAMETER_RANGES["I_stim"].sigma_hi,
    }
    if nominal.adaptation.enabled:
        relative["adaptation.ota_tau.g_per_bias"] = \
            PARAMETER_RANGES["tau_w"].sigma_at(eff.tau_w)
        relative["adaptation.ota_a.g_per_bias"] = \
            PARAMETER_RANGES["a"].sigma_at(abs(eff.a))
    if nominal.exponential.enabled:
        relative["exponential.r_conv"] = \
            PARAMETER_RANGES["delta_t"].sigma_at(eff.Delta_T)
        relative["exponential.I_0"] = DEFAULT_ONSET_CURRENT_SIGMA
    additive = {}
    for side in ("syn_exc", "syn_inh"):
        syn = getattr(nominal, side)
        if not syn.enabled:
            continue
        peak = syn.g1_per_bias * syn.I_b_cuba * syn.dv_unit
        relative[f"{side}.q_unit"] = PARAMETER_RANGES["I_syn_peak"].sigma_at(peak)
        relative[f"{side}.leak_gain"] = PARAMETER_RANGES["tau_syn"].sigma_at(syn.tau_syn)
        additive[f"{side}.follower_offset"] = DEFAULT_FOLLOWER_OFFSET_SIGMA
    return MismatchModel(relative=relative, additive=additive, seed=seed)
