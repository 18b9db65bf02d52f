"""Measurement routines: extract effective parameters from simulated responses.

Each routine scripts a stimulus/response protocol (release transient,
step response, clamped sweep, single event) and fits the effective
parameter with plain linear least squares on suitably transformed data.
Routines accept an ideal-model parameter set, a single circuit config, or
a stacked population config (array leaves); population calls return arrays
with NaN marking per-neuron fit failures, scalar calls raise FitFailed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .circuit import (
    CircuitNeuronConfig, CircuitState, exponential_current, ota_output,
    quiescent_state, simulate_population,
)
from .errors import FitFailed, InvalidConfig
from .model import AdExParameters, NeuronState, StimulusProgram, simulate
from .synapse import SynapseConfig, WeightedSpikeTrain


@dataclass(frozen=True)
class ReleaseProtocol:
    """Clamp-and-release measurement: offset, fit window and quality gate.

    The default offset stays well inside the linear range of the
    transconductors; the fit runs from release until the deflection has
    decayed to `floor_fraction` of the offset.
    """

    offset: float = 0.05
    floor_fraction: float = 0.02
    r2_min: float = 0.99
    min_samples: int = 12
    dt: float | None = None
    duration: float | None = None


def _population_size(cfg: CircuitNeuronConfig):
    arr = np.asarray(cfg.C_mem)
    return int(arr.shape[0]) if arr.ndim else None


def _scalarize(values, errors, n):
    """Population call -> array; scalar call -> float or FitFailed."""
    if n is not None:
        return values
    if errors and errors[0] is not None:
        raise FitFailed(errors[0])
    return float(values[0])


def log_linear_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares fit of ln(y) = slope * x + intercept; returns (slope, intercept, r2)."""
    ly = np.log(y)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(coef[0]), float(coef[1]), r2


def _fit_decay(times, deflection, offset, proto: ReleaseProtocol):
    """Fit a single-exponential decay; returns (tau, None) or (nan, reason)."""
    if abs(deflection[0]) < 1e-12:
        return math.nan, "nothing to fit (zero release offset)"
    y = deflection / deflection[0]
    floor = proto.floor_fraction
    below = np.nonzero(y <= floor)[0]
    end = int(below[0]) if len(below) else len(y)
    if end < proto.min_samples:
        return math.nan, f"only {end} samples above the fit floor"
    yw = y[:end]
    if np.any(yw <= 0):
        return math.nan, "non-monotone trace (deflection crossed zero)"
    slope, _, r2 = log_linear_fit(times[:end], yw)
    if slope >= 0:
        return math.nan, "deflection did not decay"
    if r2 < proto.r2_min:
        return math.nan, f"fit R^2 = {r2:.4f} below {proto.r2_min}"
    return -1.0 / slope, None


def _disable(cfg: CircuitNeuronConfig, adaptation=False, exponential=False,
             synin=False, spiking=False) -> CircuitNeuronConfig:
    """Copy of cfg with the named sub-circuits digitally disabled."""
    out = cfg
    if adaptation and out.adaptation.enabled:
        out = replace(out, adaptation=replace(out.adaptation, enabled=False))
    if exponential and out.exponential.enabled:
        out = replace(out, exponential=replace(out.exponential, enabled=False))
    if synin:
        out = replace(out,
                      syn_exc=replace(out.syn_exc, enabled=False),
                      syn_inh=replace(out.syn_inh, enabled=False))
    if spiking:
        out = replace(out, V_det=math.inf)
    return out


# ---------------------------------------------------------------------------
# membrane time constant

def measure_tau_m(neuron, protocol: ReleaseProtocol | None = None):
    """Release-from-offset transient of the membrane, single-exponential fit.

    All sub-circuits except the leak are disabled for the measurement.
    """
    proto = protocol or ReleaseProtocol()
    if isinstance(neuron, AdExParameters):
        return _measure_tau_m_ideal(neuron, proto)

    n = _population_size(neuron)
    m = n or 1
    cfg = _disable(neuron, adaptation=True, exponential=True, synin=True, spiking=True)
    tau_nom = np.atleast_1d(np.asarray(cfg.tau_m, dtype=float))
    dt = proto.dt or float(tau_nom.min()) / 150.0
    duration = proto.duration or 7.0 * float(tau_nom.max())
    state = quiescent_state(cfg)
    state = CircuitState(V_m=np.asarray(state.V_m) + proto.offset, V_w=state.V_w,
                         s_exc=state.s_exc, s_inh=state.s_inh)
    run = simulate_population(cfg, m, StimulusProgram.constant(0.0),
                              duration=duration, dt=dt, initial_state=state,
                              record=True)
    times = np.arange(run.V.shape[0]) * dt
    e_l = np.broadcast_to(np.asarray(cfg.E_l, dtype=float), (m,))
    values = np.empty(m)
    errors = []
    for i in range(m):
        values[i], err = _fit_decay(times, run.V[:, i] - e_l[i], proto.offset, proto)
        errors.append(err)
    return _scalarize(values, errors, n)


def _measure_tau_m_ideal(p: AdExParameters, proto: ReleaseProtocol):
    lif = replace(p, a=0.0, b=0.0, exp_enabled=False, t_ref=0.0, V_det=math.inf)
    dt = proto.dt or lif.tau_m / 150.0
    duration = proto.duration or 7.0 * lif.tau_m
    trace = simulate(lif, StimulusProgram.constant(0.0), duration=duration, dt=dt,
                     initial_state=NeuronState(lif.E_l + proto.offset, 0.0))
    tau, err = _fit_decay(trace.times, trace.V - lif.E_l, proto.offset, proto)
    if err is not None:
        raise FitFailed(err)
    return float(tau)


# ---------------------------------------------------------------------------
# adaptation: time constant and subthreshold strength

def measure_tau_w(neuron, protocol: ReleaseProtocol | None = None):
    """Clamp-and-release transient of the adaptation state.

    The membrane is held at the adaptation reference so the subthreshold
    coupling contributes nothing; the filter node relaxes toward V_ref.
    """
    proto = protocol or ReleaseProtocol()
    if isinstance(neuron, AdExParameters):
        return _measure_tau_w_ideal(neuron, proto)

    ad = neuron.adaptation
    if not ad.enabled:
        raise InvalidConfig("adaptation circuit is disabled")
    n = _population_size(neuron)
    m = n or 1
    tau_nom = np.atleast_1d(np.asarray(ad.tau_w, dtype=float))
    dt = proto.dt or float(tau_nom.min()) / 150.0
    duration = proto.duration or 7.0 * float(tau_nom.max())
    n_steps = max(int(round(duration / dt)), proto.min_samples)

    v_ref = np.broadcast_to(np.asarray(ad.V_ref, dtype=float), (m,))
    v_w = v_ref + proto.offset
    lam = np.broadcast_to(np.asarray(ad.g_tau / ad.C_w, dtype=float), (m,))
    decay = np.exp(-lam * dt)
    phi = np.where(lam > 0, -np.expm1(-lam * dt) / np.where(lam > 0, lam, 1.0), dt)
    c_w = np.broadcast_to(np.asarray(ad.C_w, dtype=float), (m,))
    g_tau = np.broadcast_to(np.asarray(ad.g_tau, dtype=float), (m,))

    trace = np.empty((n_steps + 1, m))
    trace[0] = v_w
    for k in range(n_steps):
        out_tau = ota_output(ad.ota_tau, ad.V_ref, v_w)
        resid = (out_tau + g_tau * (v_w - v_ref)) / c_w
        v_w = v_ref + (v_w - v_ref) * decay + resid * phi
        trace[k + 1] = v_w

    times = np.arange(n_steps + 1) * dt
    values = np.empty(m)
    errors = []
    for i in range(m):
        values[i], err = _fit_decay(times, trace[:, i] - v_ref[i], proto.offset, proto)
        errors.append(err)
    return _scalarize(values, errors, n)


def _measure_tau_w_ideal(p: AdExParameters, proto: ReleaseProtocol):
    # membrane held at E_l: w decays exponentially toward zero
    dt = proto.dt or p.tau_w / 150.0
    n_steps = int(round((proto.duration or 7.0 * p.tau_w) / dt))
    w = proto.offset  # arbitrary positive release value (amperes)
    trace = np.empty(n_steps + 1)
    trace[0] = w
    decay = math.exp(-dt / p.tau_w)
    for k in range(n_steps):
        w *= decay
        trace[k + 1] = w
    tau, err = _fit_decay(np.arange(n_steps + 1) * dt, trace, proto.offset, proto)
    if err is not None:
        raise FitFailed(err)
    return float(tau)


def measure_subthreshold_a(neuron, deflection_target: float = 0.03,
                           settle_factor: float = 10.0, dt: float | None = None):
    """Effective subthreshold adaptation strength from two step responses.

    With adaptation disabled the steady deflection gives g_l = dI/dV; with
    adaptation enabled it gives g_l + a.  Spiking, the exponential and the
    synaptic inputs are off throughout.  The coupling is a property of the
    adaptation circuit alone, so for strong negative coupling the leak
    bias is temporarily raised to keep the coupled system stable and fast
    to settle (a <= -g_l has no subthreshold steady state otherwise).
    """
    if isinstance(neuron, AdExParameters):
        return _measure_a_ideal(neuron, deflection_target, settle_factor, dt)

    if not neuron.adaptation.enabled:
        raise InvalidConfig("adaptation circuit is disabled")
    n = _population_size(neuron)
    m = n or 1
    base = _disable(neuron, exponential=True, synin=True, spiking=True)
    a_nom = float(np.median(np.atleast_1d(
        np.asarray(base.adaptation.a_effective, dtype=float))))
    g_nom = float(np.median(np.atleast_1d(np.asarray(base.g_l, dtype=float))))
    boost = max(1.0, 2.5 * abs(a_nom) / g_nom)
    if boost > 1.0:
        base = replace(base, leak_ota=replace(
            base.leak_ota,
            I_bias=np.asarray(base.leak_ota.I_bias, dtype=float) * boost))
    g_meas = g_nom * boost
    tau_m_nom = np.atleast_1d(np.asarray(base.tau_m, dtype=float))
    tau_w_nom = np.atleast_1d(np.asarray(base.adaptation.tau_w, dtype=float))
    stretch = g_meas / max(g_meas + a_nom, 0.2 * g_meas)
    slowest = float(np.maximum(tau_m_nom, tau_w_nom * stretch).max())
    # steady-state readout: the exponential update is exact once settled,
    # so a coarse step suffices
    dt = dt or float(tau_m_nom.min()) / 20.0
    settle = settle_factor * slowest
    d_i = deflection_target * max(g_meas + a_nom, 0.2 * g_meas)

    def steady_deflection(cfg):
        stim = StimulusProgram.step(settle, d_i)
        run = simulate_population(cfg, m, stim, duration=2 * settle, dt=dt, record=True)
        k_on = int(round(settle / dt))
        win = max(int(round(0.1 * settle / dt)), 4)
        before = run.V[k_on - win:k_on].mean(axis=0)
        after = run.V[-win:].mean(axis=0)
        mid = run.V[-2 * win:-win].mean(axis=0)
        settled = np.abs(after - mid) <= 1e-3 * np.maximum(np.abs(after - before), 1e-12) + 1e-9
        return after - before, settled

    dv_off, ok_off = steady_deflection(_disable(base, adaptation=True))
    dv_on, ok_on = steady_deflection(base)

    values = np.empty(m)
    errors = []
    for i in range(m):
        if not (ok_off[i] and ok_on[i]):
            values[i], err = math.nan, "step response did not settle"
        elif dv_off[i] <= 0 or dv_on[i] <= 0:
            values[i], err = math.nan, "non-positive steady deflection"
        else:
            values[i] = d_i / dv_on[i] - d_i / dv_off[i]
            err = None
        errors.append(err)
    return _scalarize(values, errors, n)


def _measure_a_ideal(p: AdExParameters, deflection_target, settle_factor, dt):
    base = replace(p, exp_enabled=False, b=0.0, t_ref=0.0, V_det=math.inf)
    boost = max(1.0, 2.5 * abs(base.a) / base.g_l)
    if boost > 1.0:
        base = replace(base, g_l=base.g_l * boost)
    stretch = base.g_l / max(base.g_l + base.a, 0.2 * base.g_l)
    slowest = max(base.tau_m, base.tau_w * stretch)
    dt = dt or base.tau_m / 20.0
    settle = settle_factor * slowest
    d_i = deflection_target * max(base.g_l + base.a, 0.2 * base.g_l)

    def steady(pp):
        stim = StimulusProgram.step(settle, d_i)
        tr = simulate(pp, stim, duration=2 * settle, dt=dt)
        k_on = int(round(settle / dt))
        win = max(int(round(0.1 * settle / dt)), 4)
        return float(tr.V[-win:].mean() - tr.V[k_on - win:k_on].mean())

    dv_off = steady(replace(base, a=0.0))
    dv_on = steady(base)
    if dv_off <= 0 or dv_on <= 0:
        raise FitFailed("non-positive steady deflection")
    return d_i / dv_on - d_i / dv_off


# ---------------------------------------------------------------------------
# exponential circuit: slope and onset

def exponential_sweep(neuron, v_lo=None, v_hi=None, n_points: int = 100):
    """Clamped I(V) sweep of the exponential branch.

    Returns (V grid, currents).  For a stacked population with no explicit
    range, every neuron is swept over its own slope-scaled window, so the
    grid comes back as a matrix of shape (n_points, n) matching the
    currents; otherwise both are (n_points,) vectors.
    """
    if isinstance(neuron, AdExParameters):
        if not neuron.exp_enabled:
            raise InvalidConfig("exponential term is disabled")
        dt_nom = neuron.Delta_T
        lo = neuron.V_T - 3.5 * dt_nom if v_lo is None else v_lo
        hi = neuron.V_T + 9.0 * dt_nom if v_hi is None else v_hi
        grid = np.linspace(lo, hi, n_points)
        cur = neuron.g_l * neuron.Delta_T * np.exp((grid - neuron.V_T) / neuron.Delta_T)
        return grid, cur
    ex = neuron.exponential
    if not ex.enabled:
        raise InvalidConfig("exponential circuit is disabled")
    n = _population_size(neuron)
    if n is not None and v_lo is None and v_hi is None:
        units = np.linspace(-3.5, 9.0, n_points)
        dt_eff = np.broadcast_to(np.asarray(ex.delta_t_eff, dtype=float), (n,))
        v_exp = np.broadcast_to(np.asarray(ex.V_exp, dtype=float), (n,))
        grid = v_exp + units[:, None] * dt_eff
        return grid, exponential_current(grid, ex, in_refractory=False)
    dt_nom = float(np.median(np.atleast_1d(np.asarray(ex.delta_t_eff))))
    v_exp = float(np.median(np.atleast_1d(np.asarray(ex.V_exp))))
    lo = v_exp - 3.5 * dt_nom if v_lo is None else v_lo
    hi = v_exp + 9.0 * dt_nom if v_hi is None else v_hi
    grid = np.linspace(lo, hi, n_points)
    arg = grid[:, None] if n is not None else grid
    return grid, exponential_current(arg, ex, in_refractory=False)


def fit_exponential_slope(grid: np.ndarray, currents: np.ndarray,
                          i_max: float, r2_min: float = 0.995,
                          min_decades: float = 3.0):
    """Log-linear fit below saturation; returns (delta_t, intercept, decades).

    The fit band excludes powered-down samples and everything at or above
    the saturation shoulder (the output ceiling, or the point where the
    local log slope collapses below half its median).
    """
    peak = float(np.max(currents))
    top = i_max / 10.0 if peak >= 0.9 * i_max else peak
    band = (currents > 0) & (currents <= top)
    idx = np.nonzero(band)[0]
    if len(idx) >= 8:
        seg_v = grid[idx]
        seg_i = np.log(currents[idx])
        local = np.diff(seg_i) / np.diff(seg_v)
        median_slope = float(np.median(local))
        flat = np.nonzero(local < 0.5 * median_slope)[0]
        if len(flat) and median_slope > 0:
            band = band.copy()
            band[idx[flat[0] + 1:]] = False
    if int(np.count_nonzero(band)) < 8:
        raise FitFailed("too few samples below saturation")
    decades = math.log10(float(currents[band].max() / currents[band].min()))
    if decades < min_decades:
        raise FitFailed(f"usable band spans {decades:.2f} decades, need {min_decades}")
    slope, intercept, r2 = log_linear_fit(grid[band], currents[band])
    if slope <= 0 or r2 < r2_min:
        raise FitFailed(f"log-linear fit rejected (slope {slope:.3g}, R^2 {r2:.5f})")
    return 1.0 / slope, intercept, decades


def measure_delta_t(neuron, n_points: int = 100, min_decades: float = 2.5):
    """Effective exponential slope from a three-decade clamped sweep."""
    if isinstance(neuron, AdExParameters):
        grid, cur = exponential_sweep(neuron, n_points=n_points)
        delta_t, _, _ = fit_exponential_slope(grid, cur, math.inf, min_decades=min_decades)
        return float(delta_t)
    n = _population_size(neuron)
    grid, cur = exponential_sweep(neuron, n_points=n_points)
    cur = np.atleast_2d(cur.T).T  # (n_points, m)
    m = cur.shape[1]
    grid = grid if grid.ndim == 2 else np.repeat(grid[:, None], m, axis=1)
    i_max = np.broadcast_to(np.asarray(neuron.exponential.I_max, dtype=float), (m,))
    values = np.empty(m)
    errors = []
    for i in range(m):
        try:
            values[i], _, _ = fit_exponential_slope(grid[:, i], cur[:, i], i_max[i],
                                                    min_decades=min_decades)
            errors.append(None)
        except FitFailed as err:
            values[i] = math.nan
            errors.append(str(err))
    return _scalarize(values, errors, n)


def measure_exp_onset(neuron, g_l_ref, n_points: int = 100, min_decades: float = 2.5):
    """Soft-threshold estimate: the V where the fitted exponential current
    equals g_l_ref * Delta_T_fit."""
    n = _population_size(neuron) if not isinstance(neuron, AdExParameters) else None
    grid, cur = exponential_sweep(neuron, n_points=n_points)
    if isinstance(neuron, AdExParameters):
        delta_t, intercept, _ = fit_exponential_slope(grid, cur, math.inf, min_decades=min_decades)
        return delta_t * (math.log(g_l_ref * delta_t) - intercept)
    cur = np.atleast_2d(cur.T).T
    m = cur.shape[1]
    grid = grid if grid.ndim == 2 else np.repeat(grid[:, None], m, axis=1)
    i_max = np.broadcast_to(np.asarray(neuron.exponential.I_max, dtype=float), (m,))
    g_ref = np.broadcast_to(np.asarray(g_l_ref, dtype=float), (m,))
    values = np.empty(m)
    errors = []
    for i in range(m):
        try:
            delta_t, intercept, _ = fit_exponential_slope(grid[:, i], cur[:, i], i_max[i],
                                                          min_decades=min_decades)
            values[i] = delta_t * (math.log(g_ref[i] * delta_t) - intercept)
            errors.append(None)
        except FitFailed as err:
            values[i] = math.nan
            errors.append(str(err))
    return _scalarize(values, errors, n)


# ---------------------------------------------------------------------------
# synaptic input: time constant, PSP amplitude, resting offset

def measure_tau_syn(neuron, line: str = "exc", protocol: ReleaseProtocol | None = None):
    """Decay fit of the synaptic integrator after a single unit event."""
    proto = protocol or ReleaseProtocol()
    if isinstance(neuron, SynapseConfig):
        tau_true = neuron.tau_syn
        dt = proto.dt or tau_true / 150.0
        n_steps = int(round(7.0 * tau_true / dt))
        s = 1.0
        trace = np.empty(n_steps + 1)
        trace[0] = s
        for k in range(n_steps):
            s *= math.exp(-dt / tau_true)
            trace[k + 1] = s
        tau, err = _fit_decay(np.arange(n_steps + 1) * dt, trace, 1.0, proto)
        if err is not None:
            raise FitFailed(err)
        return float(tau)

    syn = getattr(neuron, f"syn_{line}")
    if not syn.enabled:
        raise InvalidConfig(f"synaptic input '{line}' is disabled")
    n = _population_size(neuron)
    m = n or 1
    tau_nom = np.broadcast_to(np.asarray(syn.tau_syn, dtype=float), (m,))
    dt = proto.dt or float(tau_nom.min()) / 150.0
    n_steps = int(round(7.0 * float(tau_nom.max()) / dt))
    s = np.ones(m)
    decay = np.exp(-dt / tau_nom)
    trace = np.empty((n_steps + 1, m))
    trace[0] = s
    for k in range(n_steps):
        s = s * decay
        trace[k + 1] = s
    times = np.arange(n_steps + 1) * dt
    values = np.empty(m)
    errors = []
    for i in range(m):
        values[i], err = _fit_decay(times, trace[:, i], 1.0, proto)
        errors.append(err)
    return _scalarize(values, errors, n)


def _psp_run(neuron, line, weight, dt):
    """Simulate one PSP; returns (run, onset index, pre-window length, m)."""
    n = _population_size(neuron)
    m = n or 1
    other = "inh" if line == "exc" else "exc"
    cfg = _disable(neuron, adaptation=True, exponential=True, spiking=True)
    cfg = replace(cfg, **{f"syn_{other}": replace(getattr(cfg, f"syn_{other}"), enabled=False)})
    syn = getattr(cfg, f"syn_{line}")
    if not syn.enabled:
        raise InvalidConfig(f"synaptic input '{line}' is disabled")
    tau_m_nom = np.atleast_1d(np.asarray(cfg.tau_m, dtype=float))
    tau_s_nom = np.atleast_1d(np.asarray(syn.tau_syn, dtype=float))
    dt = dt or min(float(tau_m_nom.min()), float(tau_s_nom.min())) / 60.0
    settle = 10.0 * float(tau_m_nom.max())
    tail = 10.0 * max(float(tau_m_nom.max()), float(tau_s_nom.max()))
    train = WeightedSpikeTrain.single(settle, weight)
    run = simulate_population(cfg, m, StimulusProgram.constant(0.0),
                              syn_events={line: train},
                              duration=settle + tail, dt=dt, record=True)
    k_on = int(round(settle / dt))
    win = max(int(round(2.0 * float(tau_m_nom.max()) / dt)), 8)
    return run, k_on, win, m, n


def measure_psp_amplitude(neuron, line: str = "exc", weight: float = 1.0,
                          dt: float | None = None):
    """Signed peak deflection of a single postsynaptic potential.

    `neuron` is a circuit config; the ideal-model route takes an
    (AdExParameters, SynapseConfig) pair instead.
    """
    if isinstance(neuron, tuple):
        return _measure_psp_ideal(*neuron, weight=weight, dt=dt)
    run, k_on, win, m, n = _psp_run(neuron, line, weight, dt)
    baseline = run.V[k_on - win:k_on].mean(axis=0)
    post = run.V[k_on:] - baseline
    idx = np.argmax(np.abs(post), axis=0)
    values = post[idx, np.arange(m)]
    return _scalarize(values, [None] * m, n)


def measure_resting_offset(neuron, line: str = "exc", dt: float | None = None):
    """Baseline shift of the resting potential caused by the input circuit's
    residual offset current (V_rest - E_l)."""
    run, k_on, win, m, n = _psp_run(neuron, line, 0.0, dt)
    e_l = np.broadcast_to(np.asarray(neuron.E_l, dtype=float), (m,))
    values = run.V[k_on - win:k_on].mean(axis=0) - e_l
    return _scalarize(values, [None] * m, n)


def _measure_psp_ideal(p: AdExParameters, syn_cfg: SynapseConfig,
                       weight: float, dt):
    base = replace(p, a=0.0, b=0.0, exp_enabled=False, t_ref=0.0, V_det=math.inf)
    dt = dt or min(base.tau_m, syn_cfg.tau_syn) / 60.0
    settle = 10.0 * base.tau_m
    tail = 10.0 * max(base.tau_m, syn_cfg.tau_syn)
    train = WeightedSpikeTrain.single(settle, weight)
    tr = simulate(base, StimulusProgram.constant(0.0), [(syn_cfg, train)],
                  duration=settle + tail, dt=dt)
    from .synapse import psp_metrics
    _, amplitude = psp_metrics(tr, settle)
    return amplitude


# ---------------------------------------------------------------------------
# stimulus path and spike-triggered increment

def measure_stim_gain(neuron, deflection_target: float = 0.04,
                      tau_m_measured=None, dt: float | None = None):
    """Effective command-to-current gain of the stimulus path.

    A known current command produces a steady deflection dV; with
    g_l = C_mem / tau_m (capacitances are matched) the injected current is
    dV * g_l and the gain follows.  Returns gain * trim as seen end to end.
    """
    if isinstance(neuron, AdExParameters):
        raise InvalidConfig("the stimulus path is a circuit-level property")
    n = _population_size(neuron)
    m = n or 1
    cfg = _disable(neuron, adaptation=True, exponential=True, synin=True, spiking=True)
    tau = np.broadcast_to(np.asarray(
        measure_tau_m(cfg) if tau_m_measured is None else tau_m_measured,
        dtype=float), (m,))
    g_l_meas = np.broadcast_to(np.asarray(cfg.C_mem, dtype=float), (m,)) / tau
    g_nom = float(np.median(np.atleast_1d(np.asarray(cfg.g_l, dtype=float))))
    i_cmd = deflection_target * g_nom
    tau_max = float(np.nanmax(tau))
    dt = dt or float(np.nanmin(tau)) / 20.0
    settle = 10.0 * tau_max
    stim = StimulusProgram.step(settle, i_cmd)
    run = simulate_population(cfg, m, stim, duration=2 * settle, dt=dt, record=True)
    k_on = int(round(settle / dt))
    win = max(int(round(0.1 * settle / dt)), 4)
    dv = run.V[-win:].mean(axis=0) - run.V[k_on - win:k_on].mean(axis=0)
    values = dv * g_l_meas / i_cmd
    return _scalarize(values, [None] * m, n)


def measure_b(neuron, tau_w_measured=None, dt: float | None = None):
    """Spike-triggered adaptation increment from the filter-node jump.

    One spike is forced with a brief strong pulse; the jump of the
    recorded adaptation voltage across the pulse window, scaled by
    g_w = g_w_factor * C_w / tau_w, gives the increment of I_w.
    """
    if isinstance(neuron, AdExParameters):
        raise InvalidConfig("the increment pulse is a circuit-level property")
    ad = neuron.adaptation
    if not ad.enabled:
        raise InvalidConfig("adaptation circuit is disabled")
    n = _population_size(neuron)
    m = n or 1
    cfg = _disable(neuron, exponential=True, synin=True)
    tau_w = np.broadcast_to(np.asarray(
        measure_tau_w(cfg) if tau_w_measured is None else tau_w_measured,
        dtype=float), (m,))
    tau_m_nom = np.atleast_1d(np.asarray(cfg.tau_m, dtype=float))
    dt = dt or min(float(tau_m_nom.min()) / 60.0,
                   float(np.broadcast_to(np.asarray(ad.pulse_width, dtype=float), (m,)).min()) / 5.0)
    g_nom = np.asarray(cfg.g_l, dtype=float)
    drive = 6.0 * float(np.median(np.atleast_1d(
        g_nom * (np.asarray(cfg.V_det) - np.asarray(cfg.E_l)))))
    kick = 4.0 * float(tau_m_nom.max())
    width = float(np.broadcast_to(np.asarray(ad.pulse_width, dtype=float), (m,)).max())
    duration = kick + 3.0 * max(width, float(tau_m_nom.max()))
    stim = StimulusProgram(((0.0, drive), (kick, 0.0)))
    run = simulate_population(cfg, m, stim, duration=duration, dt=dt, record=True)

    g_w = np.broadcast_to(np.asarray(ad.g_w_factor, dtype=float), (m,)) \
        * np.broadcast_to(np.asarray(ad.C_w, dtype=float), (m,)) / tau_w
    values = np.empty(m)
    errors = []
    for i in range(m):
        if len(run.spikes[i]) == 0:
            values[i], err = math.nan, "forcing pulse produced no spike"
        else:
            k_spk = int(round(run.spikes[i][0] / dt))
            k_end = k_spk + int(math.ceil(width / dt)) + 1
            if k_end >= run.V_w.shape[0]:
                values[i], err = math.nan, "pulse window ran past the trace"
            else:
                values[i] = g_w[i] * (run.V_w[k_spk, i] - run.V_w[k_end, i])
                err = None
        errors.append(err)
    return _scalarize(values, errors, n)
