//! Physical model of a single avalanche photodiode inside a passively
//! quenched single-photon detector circuit.
//!
//! The model covers three regimes:
//!
//! - **Geiger mode**: the APD is biased above breakdown and clicks on
//!   single photons and dark carriers.
//! - **Blinded**: steady dark current drawn through the ballast resistor
//!   pulls the supplied voltage below breakdown. Single-photon sensitivity
//!   and dark counts drop to zero, but the device still responds to
//!   moderately bright pulses with a classical control characteristic.
//! - **Destroyed**: structural damage (open circuit or a resistor-like
//!   remnant) removes all photosensitivity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::SimRng;
use crate::Result;

/// Structural condition of the APD chip and its bonding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StructuralState {
    /// Normal semiconductor structure.
    Intact,
    /// Bonding wires melted off; the device conducts nothing.
    OpenCircuit,
    /// The junction degraded into an ohmic remnant.
    Resistive {
        /// Remnant resistance in ohms, typically 10--100 kOhm.
        ohms: f64,
    },
}

impl StructuralState {
    pub fn is_intact(&self) -> bool {
        matches!(self, StructuralState::Intact)
    }
}

/// One detector's physical condition.
///
/// Permanent fields only ever move in the direction laser damage pushes
/// them; `p_max` is the damage ratchet (the maximum illumination power the
/// device has ever absorbed). The transient dark-count elevation is the
/// only field that recovers, decaying toward 1 with time constant
/// `tau_relax` once the device sits in darkness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApdState {
    /// Current breakdown voltage, volts. Never below `v_br_orig`.
    pub v_br: f64,
    /// As-manufactured breakdown voltage, volts. Fixed at creation.
    pub v_br_orig: f64,
    /// Permanent dark count rate, hertz.
    pub dcr_base: f64,
    /// Transient multiplicative dark-count elevation, >= 1.
    pub dcr_transient_factor: f64,
    /// Time of the last illumination exposure, seconds. The transient
    /// factor is referenced to this instant.
    pub last_exposure_time: f64,
    /// Relaxation time constant of the transient elevation, seconds.
    pub tau_relax: f64,
    /// Steady dark current drawn at operating bias, amperes.
    pub i_dark: f64,
    /// Photoconversion quantum efficiency at 0 V bias, in [0, 1].
    pub qe_linear: f64,
    /// Permanent multiplicative photon-detection-efficiency degradation,
    /// in (0, 1].
    pub pde_scale: f64,
    /// Structural condition.
    pub structural: StructuralState,
    /// Maximum illumination power ever applied, watts. Non-decreasing.
    pub p_max: f64,
}

impl ApdState {
    /// A fresh, undamaged device.
    pub fn fresh(v_br_orig: f64, dcr_base: f64, qe_linear: f64, tau_relax: f64) -> Self {
        ApdState {
            v_br: v_br_orig,
            v_br_orig,
            dcr_base,
            dcr_transient_factor: 1.0,
            last_exposure_time: 0.0,
            tau_relax,
            i_dark: 0.0,
            qe_linear,
            pde_scale: 1.0,
            structural: StructuralState::Intact,
            p_max: 0.0,
        }
    }

    /// Transient dark-count factor evaluated at absolute time `now`.
    ///
    /// The stored factor is referenced to `last_exposure_time`; between
    /// exposures it decays exponentially toward 1.
    pub fn transient_factor_at(&self, now: f64) -> f64 {
        let elapsed = (now - self.last_exposure_time).max(0.0);
        if self.tau_relax <= 0.0 {
            return 1.0;
        }
        1.0 + (self.dcr_transient_factor - 1.0) * (-elapsed / self.tau_relax).exp()
    }

    /// Effective dark count rate at time `now`, hertz. Zero for blinded
    /// and destroyed devices.
    pub fn dark_rate_at(&self, circuit: &DetectorCircuit, now: f64) -> f64 {
        if !self.structural.is_intact() || is_blinded(self, circuit) {
            return 0.0;
        }
        self.dcr_base * self.transient_factor_at(now)
    }
}

/// Bright-pulse control characteristic of a blinded detector.
///
/// Below an overvoltage setpoint of `deterministic_below` the click
/// probability is an exact step at `p_threshold`. Above it the transition
/// softens into a logistic in log-power whose width grows with the
/// setpoint, floored to exactly zero at `p_threshold / 2` so the full
/// 0-to-click transition always fits inside a factor of two in power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCurve {
    /// Click threshold for 10 ns bright pulses, watts.
    pub p_threshold: f64,
    /// Overvoltage setpoint boundary for perfect 0-or-1 control, volts.
    pub deterministic_below: f64,
    /// Logistic-width growth per volt of setpoint above the boundary.
    pub width_per_volt: f64,
}

impl Default for ControlCurve {
    fn default() -> Self {
        ControlCurve {
            p_threshold: 0.5e-3,
            deterministic_below: 11.0,
            width_per_volt: 0.15,
        }
    }
}

/// Offset, in logistic widths, between the soft curve's midpoint and
/// `p_threshold`. Keeps click probability at `p_threshold` above 0.5 for
/// every setpoint up to 15 V with the default width growth.
const LOGISTIC_ANCHOR: f64 = 2.0;

impl ControlCurve {
    /// Click probability for a bright pulse of `power` watts at an
    /// overvoltage `setpoint` (volts).
    pub fn click_probability(&self, power: f64, setpoint: f64) -> f64 {
        if power <= 0.0 {
            return 0.0;
        }
        if setpoint <= self.deterministic_below {
            return if power >= self.p_threshold { 1.0 } else { 0.0 };
        }
        let width = self.width_per_volt * (setpoint - self.deterministic_below);
        if width <= 0.0 {
            return if power >= self.p_threshold { 1.0 } else { 0.0 };
        }
        let cutoff = self.p_threshold / 2.0;
        if power <= cutoff {
            return 0.0;
        }
        let z = (power / self.p_threshold).ln() / width + LOGISTIC_ANCHOR;
        let z_cut = LOGISTIC_ANCHOR - std::f64::consts::LN_2 / width;
        let raw = logistic(z);
        let raw_cut = logistic(z_cut);
        ((raw - raw_cut) / (1.0 - raw_cut)).clamp(0.0, 1.0)
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Passive-quench bias circuit around the APD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCircuit {
    /// High-voltage source setting, volts.
    pub v_bias: f64,
    /// Ballast resistance, ohms.
    pub r_ballast: f64,
    /// Time slot (gate) duration, seconds.
    pub slot_duration: f64,
    /// Dead time after a click, seconds.
    pub dead_time: f64,
    /// Photon detection efficiency at nominal overvoltage.
    pub eta_nominal: f64,
    /// Overvoltage at which `eta_nominal` is reached, volts.
    pub v_ov_nominal: f64,
    /// Bright-pulse control characteristic.
    pub control_curve: ControlCurve,
}

impl DetectorCircuit {
    /// Standard circuit biased `15 V` above the given original breakdown
    /// voltage.
    pub fn standard(v_br_orig: f64) -> Self {
        DetectorCircuit {
            v_bias: v_br_orig + 15.0,
            r_ballast: 400e3,
            slot_duration: 1e-9,
            dead_time: 1e-6,
            eta_nominal: 0.5,
            v_ov_nominal: 15.0,
            control_curve: ControlCurve::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_bias > 0.0) {
            return Err(Error::config("v_bias must be positive"));
        }
        if !(self.r_ballast > 0.0) {
            return Err(Error::config("r_ballast must be positive"));
        }
        if !(self.eta_nominal > 0.0 && self.eta_nominal <= 1.0) {
            return Err(Error::config("eta_nominal must be in (0, 1]"));
        }
        if !(self.slot_duration < self.dead_time) {
            return Err(Error::config("slot_duration must be below dead_time"));
        }
        Ok(())
    }
}

/// Operating overvoltage under dark-current loading, volts.
///
/// One-shot formula: `v_bias - i_dark * r_ballast - v_br`. May be
/// negative; a non-positive value means the circuit can no longer hold the
/// APD above breakdown (the blinded condition).
pub fn overvoltage(state: &ApdState, circuit: &DetectorCircuit) -> Result<f64> {
    if !state.structural.is_intact() {
        return Err(Error::misuse(
            "overvoltage queried on a structurally destroyed APD",
        ));
    }
    Ok(loaded_overvoltage(state, circuit))
}

fn loaded_overvoltage(state: &ApdState, circuit: &DetectorCircuit) -> f64 {
    circuit.v_bias - state.i_dark * circuit.r_ballast - state.v_br
}

/// True iff the device is intact but held below breakdown by its own dark
/// current. Destroyed devices are dead, not blinded.
pub fn is_blinded(state: &ApdState, circuit: &DetectorCircuit) -> bool {
    state.structural.is_intact() && loaded_overvoltage(state, circuit) <= 0.0
}

/// Single-photon detection efficiency at the operating point.
///
/// Linear in overvoltage up to `v_ov_nominal`, scaled by the permanent
/// degradation factor. Zero for blinded and destroyed devices.
pub fn photon_detection_efficiency(state: &ApdState, circuit: &DetectorCircuit) -> f64 {
    if !state.structural.is_intact() {
        return 0.0;
    }
    let ov = loaded_overvoltage(state, circuit);
    if ov <= 0.0 {
        return 0.0;
    }
    circuit.eta_nominal * state.pde_scale * (ov / circuit.v_ov_nominal).clamp(0.0, 1.0)
}

/// Probability of at least one dark count within a slot at time `now`.
pub fn dark_click_probability(state: &ApdState, circuit: &DetectorCircuit, now: f64) -> f64 {
    let rate = state.dark_rate_at(circuit, now);
    if rate <= 0.0 {
        return 0.0;
    }
    1.0 - (-rate * circuit.slot_duration).exp()
}

/// Geiger-mode click decision for a slot carrying `n_photons`, including
/// dark counts. Always false for blinded and destroyed devices.
pub fn geiger_click(
    state: &ApdState,
    circuit: &DetectorCircuit,
    n_photons: u32,
    now: f64,
    rng: &mut SimRng,
) -> bool {
    let eta = photon_detection_efficiency(state, circuit);
    let p_signal = if n_photons == 0 || eta <= 0.0 {
        0.0
    } else {
        1.0 - (1.0 - eta).powi(n_photons as i32)
    };
    let p_dark = dark_click_probability(state, circuit, now);
    let p = 1.0 - (1.0 - p_signal) * (1.0 - p_dark);
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    rng.gen::<f64>() < p
}

/// Click probability of a blinded detector for a 10 ns bright pulse of
/// `pulse_power` watts.
///
/// The curve is evaluated at the operating setpoint `v_bias - v_br`
/// (dark-current loading does not shift it). Querying a detector that is
/// not blinded is a misuse error: the control curve only exists in the
/// blinded regime.
pub fn bright_pulse_click_probability(
    state: &ApdState,
    circuit: &DetectorCircuit,
    pulse_power: f64,
) -> Result<f64> {
    if !is_blinded(state, circuit) {
        return Err(Error::misuse(
            "bright-pulse control curve queried on a detector that is not blinded",
        ));
    }
    let setpoint = circuit.v_bias - state.v_br;
    Ok(circuit.control_curve.click_probability(pulse_power, setpoint))
}

/// Optical power reported by this APD when used as a watchdog power meter.
///
/// Photocurrent-based reading: the responsivity constant is folded into
/// `qe_linear`. Destroyed devices read zero regardless of input.
pub fn watchdog_power_reading(state: &ApdState, incident_power: f64) -> f64 {
    match state.structural {
        StructuralState::Intact => incident_power * state.qe_linear,
        StructuralState::OpenCircuit | StructuralState::Resistive { .. } => 0.0,
    }
}
