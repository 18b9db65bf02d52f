"""Behavioral model of the silicon neuron's sub-circuits.

The building blocks are composed onto the membrane node as

    C_mem dV_m/dt = I_leak + I_exp - I_w + I_syn_exc - I_syn_inh + I_stim

where every voltage-to-current conversion goes through a saturating OTA
with a tanh envelope.  Deviations from the ideal model (saturation,
offsets, the virtual reversal potential of the conductance-based input)
are explicit and measurable.

All update functions accept either scalar configs/states or stacked
populations whose numeric leaves are numpy arrays of equal length; the
math broadcasts, so a single implementation serves both.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, NonFiniteState
from .model import AdExParameters, SimulationTrace, StimulusProgram

MAX_MEMBRANE_CAPACITANCE = 2.47e-12
THERMAL_VOLTAGE_300K = 25.85e-3
# fixed design ratio of the current-to-voltage conversion stage feeding the
# weak-inversion transistor
EXP_CONVERSION_RATIO = 8.0
# largest x with tanh(x)/x >= 0.95, i.e. the 5%-deviation edge of the
# saturation envelope; V_lin must stay inside it
LINEAR_5PCT_ARG = 0.39945811
# relative floor below which the rectifying mirror powers the exponential
# branch down to zero
EXP_POWER_DOWN_FLOOR = 1e-6


def _all(cond) -> bool:
    return bool(np.all(cond))


@dataclass(frozen=True)
class OtaModel:
    """Saturating transconductor: I = I_sat * tanh(g * dV / I_sat).

    The small-signal transconductance is g = g_per_bias * I_bias and the
    output saturates toward I_sat = min(I_out_max, I_bias).  V_lin is the
    half-width of the input range within which the transfer stays linear
    to 5% or better; by default it is the envelope's own 5%-deviation
    point, an explicit value is validated against it.
    """

    I_bias: float
    g_per_bias: float
    V_lin: float | None = None
    I_out_max: float = math.inf

    def __post_init__(self):
        if not _all(np.asarray(self.I_bias) >= 0):
            raise ValueError("I_bias must be >= 0")
        if not _all(np.asarray(self.g_per_bias) > 0):
            raise ValueError("g_per_bias must be > 0")
        if self.V_lin is not None:
            if not _all(np.asarray(self.V_lin) > 0):
                raise ValueError("V_lin must be > 0")
            if not _all(np.asarray(self.V_lin) <= self._envelope_linear_range() * (1 + 1e-9)):
                raise ValueError(
                    "V_lin exceeds the 5%% linear range of the saturation envelope "
                    "(g * V_lin must be <= %.5f * min(I_out_max, I_bias))" % LINEAR_5PCT_ARG)

    def _envelope_linear_range(self):
        g = self.g
        return LINEAR_5PCT_ARG * self.i_sat / np.where(np.asarray(g) > 0, g, 1.0)

    @property
    def g(self):
        """Small-signal transconductance at zero differential input."""
        return self.g_per_bias * self.I_bias

    @property
    def i_sat(self):
        return np.minimum(self.I_out_max, self.I_bias)

    @property
    def linear_range(self):
        """Half-width of the <=5%-deviation input range."""
        return self.V_lin if self.V_lin is not None else self._envelope_linear_range()


def ota_output(ota: OtaModel, V_plus, V_minus):
    """Saturating odd transfer of dV = V_plus - V_minus with slope g at the origin."""
    dv = np.asarray(V_plus) - np.asarray(V_minus)
    i_sat = ota.i_sat
    live = i_sat > 0
    safe = np.where(live, i_sat, 1.0)
    out = safe * np.tanh(ota.g * dv / safe)
    return np.where(live, out, 0.0)


@dataclass(frozen=True)
class AdaptationCircuitConfig:
    """Low-pass filter on the adaptation voltage V_w plus its output stage.

    ota_tau acts as a pseudo-conductance g_tau pulling V_w toward V_ref
    (tau_w = C_w / g_tau); a g_w_factor-times stronger second output stage
    of the same OTA generates the adaptation current I_w onto the membrane.
    ota_a couples the membrane into the filter with strength g_a; `sign`
    selects the polarity of that coupling (the sign of the effective
    subthreshold adaptation strength).  Spikes trigger a rectangular
    current pulse that discharges the filter node, incrementing I_w by
    b = g_w * pulse_amplitude * pulse_width / C_w.
    """

    C_w: float
    ota_tau: OtaModel
    ota_a: OtaModel
    V_ref: float
    E_l_adapt: float
    sign: int = 1
    g_w_factor: float = 12.0
    pulse_amplitude: float = 0.0
    pulse_width: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if not _all(np.asarray(self.C_w) > 0):
            raise ValueError("C_w must be > 0")
        if not _all(np.abs(np.asarray(self.sign)) == 1):
            raise ValueError("sign must be +1 or -1")
        if not _all(np.asarray(self.g_w_factor) > 0):
            raise ValueError("g_w_factor must be > 0")
        if not _all(np.asarray(self.pulse_width) >= 0):
            raise ValueError("pulse_width must be >= 0")

    @property
    def g_tau(self):
        return self.ota_tau.g

    @property
    def g_a(self):
        return self.ota_a.g

    @property
    def g_w(self):
        return self.g_w_factor * self.g_tau

    @property
    def tau_w(self):
        return self.C_w / self.g_tau

    @property
    def a_effective(self):
        """Small-signal subthreshold adaptation strength a = sign * g_a * g_w / g_tau."""
        return self.sign * self.g_a * self.g_w_factor

    @property
    def b_effective(self):
        """Spike-triggered increment of I_w from one complete pulse."""
        return self.g_w * self.pulse_amplitude * self.pulse_width / self.C_w


def adaptation_dynamics(state, cfg: AdaptationCircuitConfig, spike_pulse_active=False):
    """Filter-node derivative dV_w/dt and the output current I_w.

    Both OTA contributions pass through their saturation envelopes; the
    output stage mirrors the filter OTA's current g_w_factor-fold, so I_w
    equals g_w * (V_ref - V_w) in the linear regime.
    """
    if not cfg.enabled:
        raise InvalidConfig("adaptation circuit is disabled")
    out_tau = ota_output(cfg.ota_tau, cfg.V_ref, state.V_w)
    out_a = ota_output(cfg.ota_a, state.V_m, cfg.E_l_adapt)
    pulse = np.where(spike_pulse_active, cfg.pulse_amplitude, 0.0)
    dv_w = (out_tau - cfg.sign * out_a - pulse) / cfg.C_w
    return dv_w, cfg.g_w_factor * out_tau


@dataclass(frozen=True)
class ExponentialCircuitConfig:
    """Weak-inversion exponential feedback current.

    An OTA senses V_m against the onset reference V_exp; its (rectified,
    saturating) output is converted to a gate voltage across r_conv and
    drives a transistor in weak inversion:

        I_exp = I_0 * exp(8 * g_ota * (V_m - V_exp) * r_conv / (n * V_therm))

    yielding an effective slope Delta_T = n * V_therm / (8 * g_ota * r_conv).
    The output is clipped at I_max and powers down to exactly zero once the
    mirror input falls below a small fraction of I_0.
    """

    I_0: float
    ota: OtaModel
    r_conv: float
    V_exp: float
    n: float = 1.5
    V_therm: float = THERMAL_VOLTAGE_300K
    I_max: float = 2e-6
    enabled: bool = True
    gate_in_refractory: bool = True

    def __post_init__(self):
        if not _all(np.asarray(self.I_0) >= 0):
            raise ValueError("I_0 must be >= 0")
        if not _all(np.asarray(self.r_conv) > 0):
            raise ValueError("r_conv must be > 0")
        if not _all(np.asarray(self.n) > 0) or not _all(np.asarray(self.V_therm) > 0):
            raise ValueError("n and V_therm must be > 0")
        if not _all(np.asarray(self.I_max) > 0):
            raise ValueError("I_max must be > 0")

    @property
    def g_ota(self):
        return self.ota.g

    @property
    def delta_t_eff(self):
        """Effective exponential slope in volts."""
        return self.n * self.V_therm / (EXP_CONVERSION_RATIO * self.g_ota * self.r_conv)


def exponential_current(V_m, cfg: ExponentialCircuitConfig, in_refractory=False):
    """Rectified, saturating exponential current onto the membrane."""
    if not cfg.enabled:
        return np.zeros_like(np.asarray(V_m, dtype=float))
    drive = ota_output(cfg.ota, V_m, cfg.V_exp)
    x = EXP_CONVERSION_RATIO * cfg.r_conv * drive / (cfg.n * cfg.V_therm)
    cap = np.log(np.where(np.isfinite(cfg.I_max), cfg.I_max / np.maximum(cfg.I_0, 1e-300), 1e300))
    raw = cfg.I_0 * np.exp(np.minimum(x, cap))
    out = np.minimum(raw, cfg.I_max)
    out = np.where(out < cfg.I_0 * EXP_POWER_DOWN_FLOOR, 0.0, out)
    if cfg.gate_in_refractory:
        out = np.where(in_refractory, 0.0, out)
    return out


@dataclass(frozen=True)
class SynInCircuitConfig:
    """Synaptic integrator line plus its output OTA.

    Incoming events deposit q_unit coulombs per unit weight onto the line
    capacitance; the deflection decays with tau_syn = C_line / g_leak_line.
    OTA1 converts the deflection into the output current with
    g1 = g1_per_bias * bias, the bias being static (current-based) or
    modulated by OTA2 from the membrane potential (conductance-based),
    which synthesizes a virtual reversal at
    E_syn = E_syn_hat + I_b_cuba / g2.  Inhibitory circuits invert OTA2's
    input pair, represented here by a negative g2.

    `g_leak_line` is the commanded line leak; `leak_gain` is the device's
    gain error on it (mismatch lives here, calibration adjusts the
    command).  `follower_offset` is the residual input offset left by the
    two source followers and `offset_trim` the tunable compensation.
    """

    C_line: float
    g_leak_line: float
    I_b_cuba: float
    q_unit: float
    g1_per_bias: float = 1.2
    g2: float = 0.0
    E_syn_hat: float = 0.0
    follower_offset: float = 0.0
    offset_trim: float = 0.0
    leak_gain: float = 1.0
    coba_enabled: bool = False
    sign: str = "exc"
    enabled: bool = True

    def __post_init__(self):
        if not _all(np.asarray(self.C_line) > 0):
            raise ValueError("C_line must be > 0")
        if not _all(np.asarray(self.g_leak_line) > 0):
            raise ValueError("g_leak_line must be > 0")
        if not _all(np.asarray(self.leak_gain) > 0):
            raise ValueError("leak_gain must be > 0")
        if not _all(np.asarray(self.I_b_cuba) >= 0):
            raise ValueError("I_b_cuba must be >= 0")
        if not _all(np.asarray(self.q_unit) >= 0):
            raise ValueError("q_unit must be >= 0")
        if self.sign not in ("exc", "inh"):
            raise ValueError("sign must be 'exc' or 'inh'")
        if self.coba_enabled and not _all(np.asarray(self.g2) != 0):
            raise ValueError("coba mode requires g2 != 0")

    @property
    def tau_syn(self):
        return self.C_line / (self.g_leak_line * self.leak_gain)

    @property
    def dv_unit(self):
        """Line deflection caused by one unit-weight event."""
        return self.q_unit / self.C_line

    @property
    def virtual_reversal(self):
        if not self.coba_enabled:
            raise InvalidConfig("virtual reversal is only defined in conductance-based mode")
        return self.E_syn_hat + self.I_b_cuba / self.g2


def coba_effective_bias(V_m, cfg: SynInCircuitConfig):
    """Modulated OTA1 bias max(0, I_b_cuba + g2 * (E_syn_hat - V_m)).

    Its zero crossing defines the virtual reversal potential; bias currents
    cannot go negative, hence the clamp.
    """
    if not cfg.coba_enabled:
        raise InvalidConfig("conductance-based feedback is disabled")
    return np.maximum(0.0, cfg.I_b_cuba + cfg.g2 * (cfg.E_syn_hat - np.asarray(V_m)))


def synin_current(s_volts, cfg: SynInCircuitConfig, V_m):
    """Output current of the synaptic input circuit for line deflection s_volts."""
    if not cfg.enabled:
        return np.zeros_like(np.asarray(s_volts, dtype=float))
    if cfg.coba_enabled:
        bias = coba_effective_bias(V_m, cfg)
    else:
        bias = cfg.I_b_cuba
    offset = cfg.follower_offset + cfg.offset_trim
    return cfg.g1_per_bias * bias * (np.asarray(s_volts) - offset)


@dataclass(frozen=True)
class CircuitNeuronConfig:
    """Full behavioral neuron: membrane node plus its four sub-circuits.

    `stim_gain` models the per-neuron gain error of the stimulus DAC;
    `stim_trim` is the commanded-side correction written by calibration
    (injected current = stim_gain * stim_trim * requested current).
    """

    C_mem: float
    leak_ota: OtaModel
    E_l: float
    V_det: float
    V_r: float
    t_ref: float
    adaptation: AdaptationCircuitConfig
    exponential: ExponentialCircuitConfig
    syn_exc: SynInCircuitConfig
    syn_inh: SynInCircuitConfig
    stim_gain: float = 1.0
    stim_trim: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.C_mem)
        if not _all((c > 0) & (c <= MAX_MEMBRANE_CAPACITANCE * (1 + 1e-9))):
            raise ValueError(
                f"C_mem must lie in (0, {MAX_MEMBRANE_CAPACITANCE:.3g}] F")
        if not _all(np.asarray(self.t_ref) >= 0):
            raise ValueError("t_ref must be >= 0")
        if not _all(np.asarray(self.stim_gain) > 0):
            raise ValueError("stim_gain must be > 0")

    @property
    def g_l(self):
        return self.leak_ota.g

    @property
    def tau_m(self):
        return self.C_mem / self.g_l


@dataclass(frozen=True)
class CircuitState:
    """Node voltages plus the refractory and adaptation-pulse timers."""

    V_m: float
    V_w: float
    s_exc: float = 0.0
    s_inh: float = 0.0
    ref_remaining: float = 0.0
    pulse_remaining: float = 0.0

    def __post_init__(self):
        # scalar states are validated here; array states are checked by the
        # stepper itself (cheaper than per-construction full scans)
        for f in (self.V_m, self.V_w, self.s_exc, self.s_inh,
                  self.ref_remaining, self.pulse_remaining):
            if np.ndim(f) == 0 and not np.isfinite(f):
                raise NonFiniteState("non-finite circuit state")


def quiescent_state(cfg: CircuitNeuronConfig) -> CircuitState:
    """Resting state: membrane at E_l, filter node at its linear equilibrium."""
    v_w = np.asarray(cfg.adaptation.V_ref, dtype=float)
    if cfg.adaptation.enabled:
        g_tau = cfg.adaptation.g_tau
        drive = cfg.adaptation.sign * cfg.adaptation.g_a * (
            np.asarray(cfg.E_l) - cfg.adaptation.E_l_adapt)
        v_w = v_w - np.where(g_tau > 0, drive / np.where(g_tau > 0, g_tau, 1.0), 0.0)
    shape = np.broadcast(np.asarray(cfg.C_mem), v_w).shape
    zeros = np.zeros(shape) if shape else 0.0
    return CircuitState(V_m=np.broadcast_to(np.asarray(cfg.E_l, dtype=float), shape).copy() if shape else float(cfg.E_l),
                        V_w=np.broadcast_to(v_w, shape).copy() if shape else float(v_w),
                        s_exc=zeros, s_inh=zeros,
                        ref_remaining=zeros, pulse_remaining=zeros)


def _phi(lam, h):
    """(1 - exp(-lam*h)) / lam, safe at lam -> 0."""
    lam = np.asarray(lam, dtype=float)
    h = np.asarray(h, dtype=float)
    small = lam * h < 1e-12
    safe = np.where(small, 1.0, lam)
    return np.where(small, h, -np.expm1(-safe * h) / safe)


def circuit_step(state: CircuitState, cfg: CircuitNeuronConfig, I_stim,
                 syn_events=(0.0, 0.0), dt: float = 1e-8):
    """One deterministic integration step; returns (new_state, spiked).

    `syn_events` carries the summed weights arriving at this step's end
    boundary for the excitatory and inhibitory lines.  Each node uses an
    exponential-Euler update around its small-signal conductance with the
    saturation residuals and cross couplings as forward terms.  The
    spike-triggered adaptation pulse is spread charge-exactly over the
    steps it overlaps.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    V_m = np.asarray(state.V_m, dtype=float)
    V_w = np.asarray(state.V_w, dtype=float)
    ref = np.asarray(state.ref_remaining, dtype=float)
    pulse_left = np.asarray(state.pulse_remaining, dtype=float)
    in_ref = ref > 0

    ad = cfg.adaptation
    ex = cfg.exponential

    # currents at the start of the step
    I_exp = exponential_current(V_m, ex, in_ref)
    if ad.enabled:
        out_tau = ota_output(ad.ota_tau, ad.V_ref, V_w)
        out_a = ota_output(ad.ota_a, V_m, ad.E_l_adapt)
        I_w = ad.g_w_factor * out_tau
    else:
        out_tau = out_a = I_w = np.zeros_like(V_m)
    I_syn_e = synin_current(state.s_exc, cfg.syn_exc, V_m)
    I_syn_i = synin_current(state.s_inh, cfg.syn_inh, V_m)
    leak_out = ota_output(cfg.leak_ota, cfg.E_l, V_m)
    I_inj = cfg.stim_gain * cfg.stim_trim * np.asarray(I_stim, dtype=float)

    # filter node: pulse current averaged charge-exactly over this step
    pulse_I = ad.pulse_amplitude * np.minimum(pulse_left, dt) / dt
    if ad.enabled:
        node = out_tau - ad.sign * out_a - pulse_I
        lam_w = ad.g_tau / ad.C_w
        resid_w = (node + ad.g_tau * (V_w - ad.V_ref)) / ad.C_w
        V_w1 = ad.V_ref + (V_w - ad.V_ref) * np.exp(-lam_w * dt) + resid_w * _phi(lam_w, dt)
    else:
        V_w1 = V_w

    # membrane node: held at V_r while refractory, integrates the
    # post-release fraction of the step otherwise
    h = np.clip(dt - ref, 0.0, dt)
    forcing = leak_out + I_exp - I_w + I_syn_e - I_syn_i + I_inj
    lam_m = cfg.g_l / cfg.C_mem
    resid_m = (forcing + cfg.g_l * (V_m - cfg.E_l)) / cfg.C_mem
    V_m1 = cfg.E_l + (V_m - cfg.E_l) * np.exp(-lam_m * h) + resid_m * _phi(lam_m, h)

    # synaptic lines: exact decay plus boundary jumps
    exc_w, inh_w = syn_events
    s_exc1 = np.asarray(state.s_exc) * np.exp(-dt / cfg.syn_exc.tau_syn) \
        + np.asarray(exc_w) * cfg.syn_exc.dv_unit
    s_inh1 = np.asarray(state.s_inh) * np.exp(-dt / cfg.syn_inh.tau_syn) \
        + np.asarray(inh_w) * cfg.syn_inh.dv_unit

    ref1 = np.maximum(ref - dt, 0.0)
    pulse1 = np.maximum(pulse_left - dt, 0.0)

    spiked = V_m1 >= cfg.V_det
    V_m1 = np.where(spiked, cfg.V_r, V_m1)
    ref1 = np.where(spiked, cfg.t_ref, ref1)
    pulse1 = np.where(spiked, ad.pulse_width, pulse1)

    if not (_all(np.isfinite(V_m1)) and _all(np.isfinite(V_w1))
            and _all(np.isfinite(s_exc1)) and _all(np.isfinite(s_inh1))):
        raise NonFiniteState("circuit state became non-finite (dt too large?)")

    new = CircuitState(V_m=V_m1, V_w=V_w1, s_exc=s_exc1, s_inh=s_inh1,
                       ref_remaining=ref1, pulse_remaining=pulse1)
    if np.ndim(spiked) == 0:
        return new, bool(spiked)
    return new, spiked


@dataclass
class PopulationRun:
    """Result of a stacked population simulation."""

    dt: float
    spikes: list
    final_state: CircuitState
    V: np.ndarray | None = None
    V_w: np.ndarray | None = None
    s_exc: np.ndarray | None = None
    s_inh: np.ndarray | None = None
    adaptation_gain: np.ndarray | None = None
    adaptation_ref: np.ndarray | None = None

    def trace(self, i: int) -> SimulationTrace:
        if self.V is None:
            raise ValueError("run was not recorded")
        return SimulationTrace(
            dt=self.dt, V=self.V[:, i].copy(), w=self.V_w[:, i].copy(),
            s_exc=self.s_exc[:, i].copy(), s_inh=self.s_inh[:, i].copy(),
            spikes=np.asarray(self.spikes[i]),
            w_is_voltage=True,
            adaptation_gain=float(np.asarray(self.adaptation_gain)[i])
            if self.adaptation_gain is not None else 0.0,
            adaptation_ref=float(np.asarray(self.adaptation_ref)[i])
            if self.adaptation_ref is not None else 0.0)


def _n_steps(duration: float, dt: float) -> int:
    if not duration > 0 or not dt > 0:
        raise ValueError("duration and dt must be > 0")
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration shorter than one step")
    return n


def _ota_consts(ota: OtaModel, n: int):
    g = np.broadcast_to(np.asarray(ota.g, dtype=float), (n,))
    i_sat = np.broadcast_to(np.asarray(ota.i_sat, dtype=float), (n,))
    live = i_sat > 0
    safe = np.where(live, i_sat, 1.0)
    return g, np.where(live, safe, 1.0), live


def _engine(cfg: CircuitNeuronConfig, n: int, currents, arr_exc, arr_inh,
            state: CircuitState, dt: float, n_steps: int, record: bool):
    """Hot loop behind simulate_population: identical math to circuit_step
    with all constants hoisted out of the loop."""
    bc = lambda x: np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()

    V_m, V_w = bc(state.V_m), bc(state.V_w)
    s_exc, s_inh = bc(state.s_exc), bc(state.s_inh)
    ref, pulse_left = bc(state.ref_remaining), bc(state.pulse_remaining)

    ad, ex, se, si = cfg.adaptation, cfg.exponential, cfg.syn_exc, cfg.syn_inh
    E_l, V_det, V_r, t_ref = bc(cfg.E_l), bc(cfg.V_det), bc(cfg.V_r), bc(cfg.t_ref)
    C_mem = bc(cfg.C_mem)
    stim_scale = bc(cfg.stim_gain) * bc(cfg.stim_trim)
    gl_g, gl_safe, gl_live = _ota_consts(cfg.leak_ota, n)
    lam_m = gl_g / C_mem

    if ad.enabled:
        gt_g, gt_safe, gt_live = _ota_consts(ad.ota_tau, n)
        ga_g, ga_safe, ga_live = _ota_consts(ad.ota_a, n)
        C_w, V_ref, E_la = bc(ad.C_w), bc(ad.V_ref), bc(ad.E_l_adapt)
        sign, gw_f = bc(ad.sign), bc(ad.g_w_factor)
        p_amp, p_width = bc(ad.pulse_amplitude), bc(ad.pulse_width)
        lam_w = gt_g / C_w
        decay_w = np.exp(-lam_w * dt)
        phi_w = _phi(lam_w, dt)
    if ex.enabled:
        ex_g, ex_safe, ex_live = _ota_consts(ex.ota, n)
        ex_r = EXP_CONVERSION_RATIO * bc(ex.r_conv)
        ex_nvt = bc(ex.n) * bc(ex.V_therm)
        I_0, I_max = bc(ex.I_0), bc(ex.I_max)
        ex_cap = np.log(np.where(np.isfinite(I_max),
                                 I_max / np.maximum(I_0, 1e-300), 1e300))
        ex_floor = I_0 * EXP_POWER_DOWN_FLOOR
        ex_vexp = bc(ex.V_exp)
        ex_gate = ex.gate_in_refractory
    syn_consts = {}
    for key, syn in (("exc", se), ("inh", si)):
        syn_consts[key] = {
            "decay": np.exp(-dt / bc(syn.tau_syn)),
            "dv": bc(syn.dv_unit),
            "g1pb": bc(syn.g1_per_bias),
            "ib": bc(syn.I_b_cuba),
            "g2": bc(syn.g2),
            "ehat": bc(syn.E_syn_hat),
            "off": bc(syn.follower_offset) + bc(syn.offset_trim),
            "coba": syn.coba_enabled,
            "on": syn.enabled,
        }

    spike_steps = [[] for _ in range(n)]
    if record:
        V_rec = np.empty((n_steps + 1, n))
        Vw_rec = np.empty((n_steps + 1, n))
        se_rec = np.empty((n_steps + 1, n))
        si_rec = np.empty((n_steps + 1, n))
        V_rec[0], Vw_rec[0], se_rec[0], si_rec[0] = V_m, V_w, s_exc, s_inh

    def syn_current(c, s):
        if not c["on"]:
            return 0.0
        if c["coba"]:
            bias = np.maximum(0.0, c["ib"] + c["g2"] * (c["ehat"] - V_m))
        else:
            bias = c["ib"]
        return c["g1pb"] * bias * (s - c["off"])

    for k in range(n_steps):
        in_ref = ref > 0
        # accumulation order matches circuit_step bit for bit:
        # leak + I_exp - I_w + I_syn_exc - I_syn_inh + I_stim
        if ex.enabled:
            drive = np.where(ex_live, ex_safe * np.tanh(ex_g * (V_m - ex_vexp) / ex_safe), 0.0)
            raw = I_0 * np.exp(np.minimum(ex_r * drive / ex_nvt, ex_cap))
            i_exp = np.minimum(raw, I_max)
            i_exp = np.where(i_exp < ex_floor, 0.0, i_exp)
            if ex_gate:
                i_exp = np.where(in_ref, 0.0, i_exp)
        else:
            i_exp = 0.0
        if ad.enabled:
            out_tau = np.where(gt_live, gt_safe * np.tanh(gt_g * (V_ref - V_w) / gt_safe), 0.0)
            out_a = np.where(ga_live, ga_safe * np.tanh(ga_g * (V_m - E_la) / ga_safe), 0.0)
            i_w = gw_f * out_tau
            pulse_i = p_amp * np.minimum(pulse_left, dt) / dt
            node = out_tau - sign * out_a - pulse_i
            resid_w = (node + gt_g * (V_w - V_ref)) / C_w
            V_w = V_ref + (V_w - V_ref) * decay_w + resid_w * phi_w
        else:
            i_w = 0.0
        leak_out = np.where(gl_live, gl_safe * np.tanh(gl_g * (E_l - V_m) / gl_safe), 0.0)
        forcing = leak_out + i_exp - i_w \
            + syn_current(syn_consts["exc"], s_exc) \
            - syn_current(syn_consts["inh"], s_inh) \
            + stim_scale * currents[k]

        h = np.clip(dt - ref, 0.0, dt)
        resid_m = (forcing + gl_g * (V_m - E_l)) / C_mem
        V_m = E_l + (V_m - E_l) * np.exp(-lam_m * h) + resid_m * _phi(lam_m, h)

        s_exc = s_exc * syn_consts["exc"]["decay"] + arr_exc[k] * syn_consts["exc"]["dv"]
        s_inh = s_inh * syn_consts["inh"]["decay"] + arr_inh[k] * syn_consts["inh"]["dv"]
        ref = np.maximum(ref - dt, 0.0)
        pulse_left = np.maximum(pulse_left - dt, 0.0)

        spiked = V_m >= V_det
        if spiked.any():
            V_m = np.where(spiked, V_r, V_m)
            ref = np.where(spiked, t_ref, ref)
            pulse_left = np.where(spiked, p_width if ad.enabled else 0.0, pulse_left)
            for i in np.nonzero(spiked)[0]:
                spike_steps[i].append(k + 1)
        if record:
            V_rec[k + 1], Vw_rec[k + 1] = V_m, V_w
            se_rec[k + 1], si_rec[k + 1] = s_exc, s_inh
        if (k & 0xFF) == 0xFF and not np.all(np.isfinite(V_m)):
            raise NonFiniteState("circuit state became non-finite (dt too large?)",
                                 time=(k + 1) * dt)

    if not (np.all(np.isfinite(V_m)) and np.all(np.isfinite(V_w))):
        raise NonFiniteState("circuit state became non-finite (dt too large?)",
                             time=n_steps * dt)
    final = CircuitState(V_m=V_m, V_w=V_w, s_exc=s_exc, s_inh=s_inh,
                         ref_remaining=ref, pulse_remaining=pulse_left)
    recs = (V_rec, Vw_rec, se_rec, si_rec) if record else None
    return spike_steps, final, recs


def simulate_population(cfg: CircuitNeuronConfig, n: int,
                        stimulus: StimulusProgram,
                        syn_events=None,
                        *,
                        duration: float, dt: float,
                        initial_state: CircuitState | None = None,
                        record: bool = False) -> PopulationRun:
    """Run `n` neurons in lockstep; `cfg` leaves may be arrays of length n.

    `syn_events` maps 'exc'/'inh' to WeightedSpikeTrain objects shared by
    the whole population.  Spike times land on sample boundaries; the run
    is deterministic.
    """
    from .synapse import weights_per_boundary

    n_steps = _n_steps(duration, dt)
    currents = stimulus.per_step_currents(n_steps, dt)

    arrivals = {}
    init_s = {}
    for key in ("exc", "inh"):
        train = (syn_events or {}).get(key)
        if train is None:
            init_s[key], arrivals[key] = 0.0, np.zeros(n_steps)
        else:
            init_s[key], arrivals[key] = weights_per_boundary(train, n_steps, dt)

    state = initial_state or quiescent_state(cfg)
    state = CircuitState(
        V_m=state.V_m, V_w=state.V_w,
        s_exc=np.asarray(state.s_exc, dtype=float)
        + init_s["exc"] * np.asarray(cfg.syn_exc.dv_unit),
        s_inh=np.asarray(state.s_inh, dtype=float)
        + init_s["inh"] * np.asarray(cfg.syn_inh.dv_unit),
        ref_remaining=state.ref_remaining,
        pulse_remaining=state.pulse_remaining)

    spike_steps, final, recs = _engine(
        cfg, n, currents, arrivals["exc"], arrivals["inh"],
        state, dt, n_steps, record)

    spikes = [np.array(s, dtype=float) * dt for s in spike_steps]
    run = PopulationRun(dt=dt, spikes=spikes, final_state=final)
    if record:
        ad = cfg.adaptation
        run.V, run.V_w, run.s_exc, run.s_inh = recs
        run.adaptation_gain = np.broadcast_to(np.asarray(ad.g_w, dtype=float), (n,))
        run.adaptation_ref = np.broadcast_to(np.asarray(ad.V_ref, dtype=float), (n,))
    return run


def simulate_circuit(cfg: CircuitNeuronConfig,
                     stimulus: StimulusProgram,
                     syn_events=None,
                     *,
                     duration: float, dt: float,
                     initial_state: CircuitState | None = None) -> SimulationTrace:
    """Single-neuron circuit simulation; records V_m and the raw V_w."""
    run = simulate_population(cfg, 1, stimulus, syn_events=syn_events,
                              duration=duration, dt=dt,
                              initial_state=initial_state, record=True)
    return run.trace(0)


def derive_effective_adex(cfg: CircuitNeuronConfig) -> AdExParameters:
    """Ideal-model parameters equivalent to the circuit's small-signal limit.

    Disabled sub-circuits map to neutral values (a = b = 0, exponential
    off).  The soft threshold solves I_exp(V_T) = g_l * Delta_T.
    """
    g_l = cfg.g_l
    if not _all(np.asarray(g_l) > 0):
        raise InvalidConfig("leak bias is zero; the effective model is undefined")
    ad = cfg.adaptation
    ex = cfg.exponential
    if ad.enabled:
        tau_w = ad.tau_w
        a = ad.a_effective
        b = ad.b_effective
    else:
        tau_w = np.broadcast_to(1.0, np.shape(np.asarray(cfg.C_mem))) if np.ndim(cfg.C_mem) else 1.0
        a = b = 0.0 * np.asarray(g_l)
    delta_t = ex.delta_t_eff
    if ex.enabled:
        v_t = ex.V_exp + delta_t * np.log(g_l * delta_t / ex.I_0)
    else:
        v_t = np.asarray(cfg.E_l, dtype=float)
    return AdExParameters(
        C=cfg.C_mem, g_l=g_l, E_l=cfg.E_l, V_T=v_t, Delta_T=delta_t,
        tau_w=tau_w, a=a, b=b, V_r=cfg.V_r, V_det=cfg.V_det,
        t_ref=cfg.t_ref, exp_enabled=ex.enabled,
        exp_gated_in_ref=ex.gate_in_refractory)


# ---------------------------------------------------------------------------
# defaults and construction helpers

def default_leak_ota(tau_m: float = 20e-6, C_mem: float = MAX_MEMBRANE_CAPACITANCE,
                     g_per_bias: float = 0.5) -> OtaModel:
    g = C_mem / tau_m
    return OtaModel(I_bias=g / g_per_bias, g_per_bias=g_per_bias)


def default_circuit_config(tau_m: float = 20e-6,
                           E_l: float = 0.5, V_det: float = 0.75, V_r: float = 0.35,
                           t_ref: float = 1e-6,
                           adaptation_enabled: bool = False,
                           exponential_enabled: bool = False,
                           coba: bool = False) -> CircuitNeuronConfig:
    """Nominal neuron with device constants spanning the documented ranges.

    The device constants (g_per_bias, r_conv, I_0, n, V_therm) are not
    measured quantities; they are defaults chosen so the reachable
    effective-parameter ranges cover the documented hardware envelope.
    """
    C_mem = MAX_MEMBRANE_CAPACITANCE
    adaptation = AdaptationCircuitConfig(
        C_w=2e-12,
        ota_tau=OtaModel(I_bias=2e-12 / 100e-6 / 0.5, g_per_bias=0.5),
        ota_a=OtaModel(I_bias=1e-8, g_per_bias=0.5),
        V_ref=0.6, E_l_adapt=E_l, sign=1,
        pulse_amplitude=0.0, pulse_width=0.1e-6,
        enabled=adaptation_enabled)
    exponential = ExponentialCircuitConfig(
        I_0=10e-12,
        ota=OtaModel(I_bias=4.847e-7 / 0.25, g_per_bias=0.25),
        r_conv=500e3, V_exp=0.65,
        enabled=exponential_enabled)
    syn_exc = SynInCircuitConfig(
        C_line=3e-12, g_leak_line=0.3e-6, I_b_cuba=0.5e-6, q_unit=0.18e-12,
        g2=0.5e-6 if coba else 0.0, E_syn_hat=0.7,
        coba_enabled=coba, sign="exc")
    syn_inh = SynInCircuitConfig(
        C_line=3e-12, g_leak_line=0.3e-6, I_b_cuba=0.5e-6, q_unit=0.18e-12,
        g2=-0.5e-6 if coba else 0.0, E_syn_hat=0.45,
        coba_enabled=coba, sign="inh")
    return CircuitNeuronConfig(
        C_mem=C_mem,
        leak_ota=default_leak_ota(tau_m, C_mem),
        E_l=E_l, V_det=V_det, V_r=V_r, t_ref=t_ref,
        adaptation=adaptation, exponential=exponential,
        syn_exc=syn_exc, syn_inh=syn_inh)


def circuit_for_adex(target: AdExParameters,
                     template: CircuitNeuronConfig | None = None,
                     pulse_width: float | None = None) -> CircuitNeuronConfig:
    """Nominal circuit configuration realizing the given ideal parameters.

    Biases follow the small-signal formulas; V_exp is placed so the
    exponential current at V_T equals g_l * Delta_T.  Mismatch-free, this
    round-trips through derive_effective_adex.
    """
    cfg = template or default_circuit_config()
    ad = cfg.adaptation
    ex = cfg.exponential

    leak = replace(cfg.leak_ota, I_bias=target.g_l / cfg.leak_ota.g_per_bias)

    width = pulse_width if pulse_width is not None else (
        ad.pulse_width if ad.pulse_width > 0 else 0.1e-6)
    adapt_on = (target.a != 0.0) or (target.b != 0.0)
    g_tau = ad.C_w / target.tau_w
    ota_tau = replace(ad.ota_tau, I_bias=g_tau / ad.ota_tau.g_per_bias)
    g_a = abs(target.a) / ad.g_w_factor
    ota_a = replace(ad.ota_a, I_bias=g_a / ad.ota_a.g_per_bias)
    g_w = ad.g_w_factor * g_tau
    amplitude = target.b * ad.C_w / (g_w * width)
    adaptation = replace(
        ad, ota_tau=ota_tau, ota_a=ota_a,
        sign=1 if target.a >= 0 else -1,
        E_l_adapt=target.E_l,
        pulse_amplitude=amplitude, pulse_width=width,
        enabled=adapt_on)

    if target.exp_enabled:
        g_ota = ex.n * ex.V_therm / (EXP_CONVERSION_RATIO * ex.r_conv * target.Delta_T)
        v_exp = target.V_T - target.Delta_T * math.log(
            target.g_l * target.Delta_T / ex.I_0)
        exponential = replace(
            ex, ota=replace(ex.ota, I_bias=g_ota / ex.ota.g_per_bias),
            V_exp=v_exp, enabled=True,
            gate_in_refractory=target.exp_gated_in_ref)
    else:
        exponential = replace(ex, enabled=False)

    return replace(
        cfg, C_mem=target.C, leak_ota=leak,
        E_l=target.E_l, V_det=target.V_det, V_r=target.V_r, t_ref=target.t_ref,
        adaptation=adaptation, exponential=exponential)


# ---------------------------------------------------------------------------
# population stacking and bias paths

def stack_population(cfgs: Sequence[CircuitNeuronConfig]) -> CircuitNeuronConfig:
    """Combine per-neuron configs into one config with array leaves.

    Numeric fields become arrays of length len(cfgs); flags and mode
    strings must be uniform across the population.
    """
    if not cfgs:
        raise ValueError("empty population")

    def combine(objs):
        first = objs[0]
        if dataclasses.is_dataclass(first):
            kwargs = {}
            for f in dataclasses.fields(first):
                kwargs[f.name] = combine([getattr(o, f.name) for o in objs])
            return type(first)(**kwargs)
        if first is None or isinstance(first, (bool, str)):
            if any(o != first for o in objs):
                raise ValueError("flags and modes must be uniform across a population")
            return first
        return np.array([float(o) for o in objs])

    return combine(list(cfgs))


def unstack_population(cfg: CircuitNeuronConfig, n: int) -> list:
    """Split a stacked config back into per-neuron scalar configs."""
    def pick(obj, i):
        if dataclasses.is_dataclass(obj):
            return type(obj)(**{f.name: pick(getattr(obj, f.name), i)
                                for f in dataclasses.fields(obj)})
        if obj is None or isinstance(obj, (bool, str)):
            return obj
        arr = np.asarray(obj)
        return float(arr[i]) if arr.ndim else float(arr)

    return [pick(cfg, i) for i in range(n)]


def get_bias(cfg, path: str):
    """Read a numeric knob by dotted path, e.g. 'leak_ota.I_bias'."""
    obj = cfg
    for name in path.split("."):
        obj = getattr(obj, name)
    return obj


def set_bias(cfg, path: str, value):
    """Return a copy of cfg with the knob at the dotted path replaced."""
    names = path.split(".")

    def rec(obj, idx):
        if idx == len(names) - 1:
            return replace(obj, **{names[idx]: value})
        child = getattr(obj, names[idx])
        return replace(obj, **{names[idx]: rec(child, idx + 1)})

    return rec(cfg, 0)
