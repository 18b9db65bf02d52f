"""Iterative calibration: map per-neuron targets to circuit bias settings.

Every tunable parameter is reached through a measured, monotone
bias-to-parameter map.  A three-point probe asserts monotonicity and
estimates the local power law; refinement then updates each neuron's bias
proportionally (with a guarded bisection fallback) until the measured
value sits within tolerance.  One population-wide measurement serves all
neurons per iteration, so the loop cost is independent of the population
size up to array arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitNeuronConfig, get_bias, set_bias
from .errors import NotConverged, NotMonotone, ValidationError
from .measure import (
    measure_b, measure_delta_t, measure_exp_onset, measure_psp_amplitude,
    measure_resting_offset, measure_stim_gain, measure_subthreshold_a,
    measure_tau_m, measure_tau_syn, measure_tau_w,
)
from .mismatch import PARAMETER_RANGES, Population


@dataclass(frozen=True)
class CalibrationTarget:
    """Desired effective parameters; None leaves a knob untouched.

    `stim_gain` and the two offsets are flags: they calibrate toward unit
    gain and zero baseline shift rather than toward a value.
    """

    tau_m: float | None = None
    stim_gain: bool = False
    delta_t: float | None = None
    v_t: float | None = None
    tau_w: float | None = None
    a: float | None = None
    b: float | None = None
    tau_syn_exc: float | None = None
    tau_syn_inh: float | None = None
    psp_amplitude_exc: float | None = None
    psp_amplitude_inh: float | None = None
    offset_exc: bool = False
    offset_inh: bool = False
    allow_out_of_range: bool = False

    def range_violations(self) -> list:
        """Targets outside the documented reachable ranges."""
        checks = [("tau_m", self.tau_m), ("delta_t", self.delta_t),
                  ("tau_w", self.tau_w), ("tau_syn", self.tau_syn_exc),
                  ("tau_syn", self.tau_syn_inh)]
        if self.a is not None:
            checks.append(("a", abs(self.a)))
        if self.b is not None:
            checks.append(("b", abs(self.b)))
        out = []
        for name, value in checks:
            if value is None:
                continue
            rng = PARAMETER_RANGES[name]
            if not rng.contains(value):
                out.append(f"{name} target {value:.4g} outside [{rng.lo:.4g}, {rng.hi:.4g}]")
        return out

    def __post_init__(self):
        violations = self.range_violations()
        if violations and not self.allow_out_of_range:
            raise ValidationError("; ".join(violations))


# default calibration order: synaptic and membrane time constants first,
# then the stimulus path, the exponential, adaptation, and finally the
# input-circuit offsets and amplitudes which assume everything upstream
DEFAULT_PLAN = (
    "tau_syn_exc", "tau_syn_inh", "tau_m", "stim_gain",
    "delta_t", "v_t", "tau_w", "a", "b",
    "offset_exc", "offset_inh", "psp_amplitude_exc", "psp_amplitude_inh",
)


@dataclass
class ParameterOutcome:
    """Per-neuron outcome of one plan entry."""

    bias_path: str
    biases: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    pre_spread: float
    post_spread: float
    evaluations: int


@dataclass
class CalibrationResult:
    """Per-neuron bias settings, residuals and convergence flags."""

    population: Population
    outcomes: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(bool(np.all(o.converged)) for o in self.outcomes.values())


def _spread(values: np.ndarray) -> float:
    good = values[np.isfinite(values)]
    if len(good) == 0 or np.mean(good) == 0:
        return math.nan
    return float(np.std(good) / abs(np.mean(good)))


def _tune_population(cfg, n, bias_path, measure_fn, targets, bounds,
                     tol=0.02, max_iter=12, tol_abs=None, scale="log"):
    """Probe, then refine per-neuron biases until measurements hit targets.

    Returns (cfg', ParameterOutcome, per-neuron error strings).
    """
    targets = np.broadcast_to(np.asarray(targets, dtype=float), (n,)).copy()
    lo, hi = bounds
    current = np.broadcast_to(np.asarray(get_bias(cfg, bias_path), dtype=float), (n,)).copy()
    current = np.clip(current, lo, hi)
    # the probe midpoint must stay distinct from the endpoints, otherwise
    # the monotonicity differences degenerate to zero
    interior = math.sqrt(lo * hi) if scale == "log" and lo > 0 \
        else 0.5 * (lo + hi)
    margin = 1e-3 * (hi - lo)
    current = np.where((current <= lo + margin) | (current >= hi - margin),
                       interior, current)

    def residual(meas):
        if tol_abs is not None:
            return meas - targets
        return (meas - targets) / np.where(targets != 0, targets, 1.0)

    def within(res):
        return np.abs(res) <= (tol_abs if tol_abs is not None else tol)

    def evaluate(biases):
        nonlocal cfg
        cfg = set_bias(cfg, bias_path, biases)
        return np.asarray(measure_fn(cfg), dtype=float)

    # 3-point probe: bounds plus the current setting
    b_lo = np.full(n, lo)
    b_hi = np.full(n, hi)
    f_lo = evaluate(b_lo)
    f_hi = evaluate(b_hi)
    f_cur = evaluate(current)
    evaluations = 3
    pre_spread = _spread(f_cur)

    d_lo = f_cur - f_lo
    d_hi = f_hi - f_cur
    monotone = np.isfinite(f_lo) & np.isfinite(f_hi) & np.isfinite(f_cur) \
        & (d_lo * d_hi > 0)
    direction = np.sign(f_hi - f_lo)

    f_min = np.minimum(f_lo, f_hi)
    f_max = np.maximum(f_lo, f_hi)
    reachable = (targets >= f_min) & (targets <= f_max)

    errors = [None] * n
    for i in range(n):
        if not monotone[i]:
            errors[i] = (f"bias->parameter map not monotone over [{lo:.4g}, {hi:.4g}] "
                         f"(probe {f_lo[i]:.4g}, {f_cur[i]:.4g}, {f_hi[i]:.4g})")
        elif not reachable[i]:
            errors[i] = (f"target {targets[i]:.4g} outside reachable "
                         f"[{f_min[i]:.4g}, {f_max[i]:.4g}]")

    # bracket around the target for monotone, reachable neurons
    blo = np.where(direction > 0, np.where(f_cur <= targets, current, b_lo),
                   np.where(f_cur >= targets, current, b_lo))
    bhi = np.where(direction > 0, np.where(f_cur <= targets, b_hi, current),
                   np.where(f_cur >= targets, b_hi, current))

    # boundary residual for out-of-range neurons: clamp to the nearer bound
    lower_side = np.where(direction > 0, targets < f_min, targets > f_max)
    clamped = np.where(lower_side, lo, hi)

    best_bias = np.where(reachable & monotone, current, np.where(monotone, clamped, current))
    best_f = np.where(reachable & monotone, f_cur,
                      np.where(monotone, np.where(lower_side, f_lo, f_hi), f_cur))
    best_res = residual(best_f)

    if scale == "log":
        # local power-law exponent from the probe
        with np.errstate(divide="ignore", invalid="ignore"):
            expo = np.log(np.abs(f_hi / np.where(f_lo != 0, f_lo, 1.0))) \
                / math.log(hi / lo)
        expo = np.where(np.isfinite(expo) & (np.abs(expo) > 0.1) & (np.abs(expo) < 10),
                        expo, direction * 1.0)
    else:
        expo = direction * 1.0

    active = monotone & reachable & ~within(best_res)
    bias = best_bias.copy()
    f_val = best_f.copy()
    while evaluations < max_iter + 3 and bool(np.any(active)):
        if scale == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                prop = bias * np.exp(np.log(targets / f_val) / expo)
            fallback = np.sqrt(blo * np.maximum(bhi, 1e-300))
        else:
            span = f_hi - f_lo
            prop = bias + (targets - f_val) * (hi - lo) / np.where(span != 0, span, 1.0)
            fallback = 0.5 * (blo + bhi)
        inside = np.isfinite(prop) & (prop > blo) & (prop < bhi)
        nxt = np.where(active, np.where(inside, prop, fallback), bias)
        f_new = evaluate(nxt)
        evaluations += 1
        ok = np.isfinite(f_new)
        res_new = residual(f_new)
        better = active & ok & (np.abs(res_new) < np.abs(best_res))
        best_res = np.where(better, res_new, best_res)
        best_bias = np.where(better, nxt, best_bias)
        # bracket update
        low_side = np.where(direction > 0, f_new < targets, f_new > targets)
        blo = np.where(active & ok & low_side, nxt, blo)
        bhi = np.where(active & ok & ~low_side, nxt, bhi)
        bias = np.where(active, nxt, bias)
        f_val = np.where(active & ok, f_new, f_val)
        active = active & ~within(best_res)

    # re-measure at the chosen biases; revert any neuron that would end
    # worse than where it started (calibration must never worsen)
    f_final = evaluate(best_bias)
    evaluations += 1
    final_res = residual(f_final)
    worse = monotone & reachable & (np.abs(final_res) > np.abs(residual(f_cur)))
    if bool(np.any(worse)):
        best_bias = np.where(worse, current, best_bias)
        f_final = evaluate(best_bias)
        evaluations += 1
        final_res = residual(f_final)
    cfg = set_bias(cfg, bias_path, best_bias)
    converged = within(final_res) & monotone & reachable
    for i in range(n):
        if errors[i] is None and not converged[i]:
            errors[i] = f"stopped above tolerance (residual {final_res[i]:.4g})"
    outcome = ParameterOutcome(
        bias_path=bias_path, biases=best_bias, residuals=final_res,
        converged=converged, pre_spread=pre_spread,
        post_spread=_spread(f_final), evaluations=evaluations)
    return cfg, outcome, errors


def calibrate_parameter(neuron: CircuitNeuronConfig, target_value: float,
                        bias_name: str, measure, bounds,
                        tol: float = 0.02, max_iter: int = 12,
                        tol_abs: float | None = None, scale: str = "log"):
    """Tune one bias of a single neuron; returns (neuron', bias, residual).

    Raises NotMonotone if the 3-point probe rejects the map and
    NotConverged (carrying the best residual) if the target is
    unreachable or tolerance is not met within max_iter refinements.
    """
    cfg, outcome, errors = _tune_population(
        neuron, 1, bias_name, lambda c: np.atleast_1d(measure(c)),
        target_value, bounds, tol=tol, max_iter=max_iter,
        tol_abs=tol_abs, scale=scale)
    if errors[0] is not None and "not monotone" in errors[0]:
        raise NotMonotone(errors[0])
    if not outcome.converged[0]:
        raise NotConverged(errors[0] or "calibration did not converge",
                           best_bias=float(outcome.biases[0]),
                           best_residual=float(outcome.residuals[0]))
    return cfg, float(outcome.biases[0]), float(outcome.residuals[0])


# ---------------------------------------------------------------------------
# plan entries

def _bounds_around(cfg, path, factor):
    center = float(np.median(np.atleast_1d(np.asarray(get_bias(cfg, path), dtype=float))))
    return center / factor, center * factor


def _entry_tau_syn(line):
    def run(cfg, n, target, tol, max_iter):
        path = f"syn_{line}.g_leak_line"
        syn = getattr(cfg, f"syn_{line}")
        center = float(np.median(np.atleast_1d(np.asarray(syn.C_line, dtype=float)))) / target
        return _tune_population(cfg, n, path,
                                lambda c: measure_tau_syn(c, line),
                                target, (center / 8, center * 8),
                                tol=tol, max_iter=max_iter)
    return run


def _entry_tau_m(cfg, n, target, tol, max_iter):
    path = "leak_ota.I_bias"
    gpb = float(np.median(np.atleast_1d(np.asarray(cfg.leak_ota.g_per_bias, dtype=float))))
    c = float(np.median(np.atleast_1d(np.asarray(cfg.C_mem, dtype=float))))
    center = c / (target * gpb)
    return _tune_population(cfg, n, path, measure_tau_m, target,
                            (center / 8, center * 8), tol=tol, max_iter=max_iter)


def _entry_delta_t(cfg, n, target, tol, max_iter):
    path = "exponential.ota.I_bias"
    ex = cfg.exponential
    med = lambda x: float(np.median(np.atleast_1d(np.asarray(x, dtype=float))))
    from .circuit import EXP_CONVERSION_RATIO
    center = med(ex.n) * med(ex.V_therm) / (
        EXP_CONVERSION_RATIO * med(ex.r_conv) * target * med(ex.ota.g_per_bias))
    return _tune_population(cfg, n, path, measure_delta_t, target,
                            (center / 8, center * 8), tol=tol, max_iter=max_iter)


def _entry_tau_w(cfg, n, target, tol, max_iter):
    path = "adaptation.ota_tau.I_bias"
    ad = cfg.adaptation
    med = lambda x: float(np.median(np.atleast_1d(np.asarray(x, dtype=float))))
    center = med(ad.C_w) / (target * med(ad.ota_tau.g_per_bias))
    return _tune_population(cfg, n, path, measure_tau_w, target,
                            (center / 8, center * 8), tol=tol, max_iter=max_iter)


def _entry_a(cfg, n, target, tol, max_iter):
    path = "adaptation.ota_a.I_bias"
    ad = cfg.adaptation
    med = lambda x: float(np.median(np.atleast_1d(np.asarray(x, dtype=float))))
    sign = 1 if target >= 0 else -1
    cfg = set_bias(cfg, "adaptation.sign", sign)
    center = abs(target) / (med(ad.g_w_factor) * med(ad.ota_a.g_per_bias))
    cfg, outcome, errors = _tune_population(
        cfg, n, path, lambda c: sign * np.asarray(measure_subthreshold_a(c)),
        abs(target), (center / 8, center * 8), tol=tol, max_iter=max_iter)
    return cfg, outcome, errors


def _entry_psp(line):
    def run(cfg, n, target, tol, max_iter):
        path = f"syn_{line}.I_b_cuba"
        sgn = 1.0 if line == "exc" else -1.0
        bounds = _bounds_around(cfg, path, 8)
        return _tune_population(cfg, n, path,
                                lambda c: sgn * np.asarray(measure_psp_amplitude(c, line)),
                                target, bounds, tol=tol, max_iter=max_iter)
    return run


def _entry_offset(line):
    def run(cfg, n, target, tol, max_iter):
        path = f"syn_{line}.offset_trim"
        # additive knob: secant on a linear scale toward zero baseline shift
        return _tune_population(cfg, n, path,
                                lambda c: measure_resting_offset(c, line),
                                0.0, (-0.03, 0.03), tol=tol, max_iter=max_iter,
                                tol_abs=0.5e-3, scale="linear")
    return run


def _oneshot(cfg, n, path, measure_fn, update_fn, tol, verify_tol_abs=None):
    """Measure, apply an analytic correction, verify; used for linear knobs."""
    pre = np.asarray(measure_fn(cfg), dtype=float)
    pre_spread = _spread(pre)
    cfg = set_bias(cfg, path, update_fn(
        np.broadcast_to(np.asarray(get_bias(cfg, path), dtype=float), (n,)).copy(), pre))
    post = np.asarray(measure_fn(cfg), dtype=float)
    if verify_tol_abs is not None:
        residuals = post
        converged = np.isfinite(post) & (np.abs(post) <= verify_tol_abs)
    else:
        residuals = post - 1.0
        converged = np.isfinite(post) & (np.abs(post - 1.0) <= tol)
    errors = [None if c else f"one-shot correction left residual {r:.4g}"
              for c, r in zip(converged, residuals)]
    outcome = ParameterOutcome(
        bias_path=path,
        biases=np.broadcast_to(np.asarray(get_bias(cfg, path), dtype=float), (n,)).copy(),
        residuals=residuals, converged=converged,
        pre_spread=pre_spread, post_spread=_spread(post), evaluations=2)
    return cfg, outcome, errors


def _entry_stim_gain(cfg, n, target, tol, max_iter):
    return _oneshot(cfg, n, "stim_trim", measure_stim_gain,
                    lambda trim, gain: trim / np.where(np.isfinite(gain) & (gain > 0), gain, 1.0),
                    tol)


def _make_entry_v_t(g_l_ref):
    def run(cfg, n, target, tol, max_iter):
        def measure(c):
            return np.asarray(measure_exp_onset(c, g_l_ref), dtype=float) - target
        return _oneshot(cfg, n, "exponential.V_exp", measure,
                        lambda v_exp, err: v_exp - np.where(np.isfinite(err), err, 0.0),
                        tol, verify_tol_abs=2e-3)
    return run


def _entry_b(cfg, n, target, tol, max_iter):
    def measure(c):
        return np.asarray(measure_b(c), dtype=float) / target
    return _oneshot(cfg, n, "adaptation.pulse_amplitude", measure,
                    lambda amp, ratio: amp / np.where(np.isfinite(ratio) & (ratio > 0), ratio, 1.0),
                    tol)


def calibrate_population(pop: Population, target: CalibrationTarget,
                         plan=None, tol: float = 0.02,
                         max_iter: int = 12) -> CalibrationResult:
    """Sequential per-parameter calibration of a whole population.

    Follows the plan order (upstream parameters first); per-neuron
    failures are collected, flagged in the outcome and do not abort the
    rest of the population.
    """
    n = pop.size
    cfg = pop.stacked()

    g_l_ref = None
    if target.v_t is not None:
        tau_ref = target.tau_m or float(np.median(np.atleast_1d(np.asarray(cfg.tau_m, dtype=float))))
        g_l_ref = float(np.median(np.atleast_1d(np.asarray(cfg.C_mem, dtype=float)))) / tau_ref

    entries = {
        "tau_syn_exc": (target.tau_syn_exc, _entry_tau_syn("exc")),
        "tau_syn_inh": (target.tau_syn_inh, _entry_tau_syn("inh")),
        "tau_m": (target.tau_m, _entry_tau_m),
        "stim_gain": (1.0 if target.stim_gain else None, _entry_stim_gain),
        "delta_t": (target.delta_t, _entry_delta_t),
        "v_t": (target.v_t, _make_entry_v_t(g_l_ref) if g_l_ref else None),
        "tau_w": (target.tau_w, _entry_tau_w),
        "a": (target.a, _entry_a),
        "b": (target.b if (target.b or 0) != 0 else None, _entry_b),
        "offset_exc": (0.0 if target.offset_exc else None, _entry_offset("exc")),
        "offset_inh": (0.0 if target.offset_inh else None, _entry_offset("inh")),
        "psp_amplitude_exc": (target.psp_amplitude_exc, _entry_psp("exc")),
        "psp_amplitude_inh": (target.psp_amplitude_inh, _entry_psp("inh")),
    }

    result = CalibrationResult(population=pop)
    for name in (plan or DEFAULT_PLAN):
        if name not in entries:
            raise ValueError(f"unknown plan entry {name!r}")
        value, runner = entries[name]
        if value is None or runner is None:
            continue
        cfg, outcome, errors = runner(cfg, n, value, tol, max_iter)
        result.outcomes[name] = outcome
        for i, err in enumerate(errors):
            if err is not None:
                result.failures.append(f"neuron {i}, {name}: {err}")

    result.population = Population.from_stacked(cfg, n)
    return result
