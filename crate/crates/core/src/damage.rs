//! Laser-damage state machine.
//!
//! Illumination exposures ratchet an [`ApdState`] through staged effects.
//! With increasing peak power the stages are:
//!
//! - **a** — transient dark-count elevation (the only recovering effect);
//! - **b** — permanent breakdown-voltage rise, in roughly half the
//!   samples, lowering detection efficiency through lost overvoltage;
//! - **c** — permanent dark-count *reduction*, in every sample;
//! - **d** — permanent dark-count blowup;
//! - **e** — large steady dark current that blinds the passively quenched
//!   detector permanently;
//! - **f** — catastrophic structural damage: open circuit or a resistive
//!   remnant, with total loss of photosensitivity.
//!
//! Each sample realizes its own onset threshold per stage, drawn uniformly
//! from the profile's onset band at sample creation. Permanent damage
//! depends only on the maximum power ever applied: re-exposure below the
//! ratchet changes nothing. Effect magnitudes are latent properties of the
//! sample, revealed from a per-sample random stream the first time each
//! threshold is crossed, so the outcome of a damage campaign is a function
//! of the sample alone, not of the exposure schedule. Bias, focus and ramp
//! flags are recorded but have no effect on the outcome.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apd::{ApdState, StructuralState};
use crate::error::Error;
use crate::rng::{self, SimRng};
use crate::Result;

/// Damage stage label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Band {
    pub fn label(&self) -> &'static str {
        match self {
            Band::A => "a",
            Band::B => "b",
            Band::C => "c",
            Band::D => "d",
            Band::E => "e",
            Band::F => "f",
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, x: f64) -> bool {
        self.0 <= x && x <= self.1
    }

    /// Uniform draw from the interval.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        if self.0 == self.1 {
            return self.0;
        }
        rng.gen_range(self.0..=self.1)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::config(format!(
                "range {name} must satisfy lo <= hi with finite bounds, got [{}, {}]",
                self.0, self.1
            )));
        }
        Ok(())
    }
}

/// Baseline parameters given to every freshly drawn sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBaseline {
    /// As-manufactured breakdown voltage, volts.
    pub v_br_orig: f64,
    /// Undamaged dark count rate, hertz.
    pub dcr_base: f64,
    /// Undamaged photoconversion quantum efficiency at 0 V bias.
    pub qe_linear: f64,
}

impl Default for SampleBaseline {
    fn default() -> Self {
        SampleBaseline {
            v_br_orig: 200.0,
            dcr_base: 500.0,
            qe_linear: 0.6,
        }
    }
}

/// Magnitude configuration for each damage effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectMagnitudes {
    /// Transient dark-count factor range (effect a).
    pub transient_factor: Span,
    /// Relaxation time constant of the transient elevation, seconds.
    pub tau_relax: f64,
    /// Breakdown-voltage rise range, volts (effect b).
    pub delta_v_br: Span,
    /// Dark-count division factor range (effect c).
    pub dcr_division: Span,
    /// Dark-count multiplication factor range (effect d).
    pub dcr_multiplier: Span,
    /// Steady dark current range, amperes (effect e).
    pub i_dark: Span,
    /// Probability that structural damage leaves an open circuit rather
    /// than a resistive remnant (effect f).
    pub open_circuit_prob: f64,
    /// Resistive-remnant range, ohms (effect f).
    pub resistance: Span,
}

impl Default for EffectMagnitudes {
    fn default() -> Self {
        EffectMagnitudes {
            transient_factor: Span(2.0, 5.0),
            tau_relax: 4.0 * 3600.0,
            delta_v_br: Span(2.3, 2.5),
            dcr_division: Span(1.7, 5.4),
            dcr_multiplier: Span(100.0, 100.0),
            i_dark: Span(50e-6, 500e-6),
            open_circuit_prob: 1.0 / 3.0,
            resistance: Span(10e3, 100e3),
        }
    }
}

/// Configurable damage-band thresholds and effect-magnitude ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageProfile {
    /// Onset band of the transient effect, watts. Informational: the
    /// transient re-arms on every exposure of any positive power.
    pub onset_a: Span,
    /// Onset band of the breakdown-voltage rise, watts.
    pub onset_b: Span,
    /// Onset band of the dark-count reduction, watts.
    pub onset_c: Span,
    /// Onset band of the dark-count blowup, watts.
    pub onset_d: Span,
    /// Onset band of permanent blinding, watts.
    pub onset_e: Span,
    /// Onset band of structural destruction, watts.
    pub onset_f: Span,
    /// Probability that a sample is susceptible to effect b.
    pub b_susceptible_prob: f64,
    /// Effect magnitudes.
    pub magnitudes: EffectMagnitudes,
    /// Baseline parameters of fresh samples.
    pub baseline: SampleBaseline,
}

impl Default for DamageProfile {
    fn default() -> Self {
        DamageProfile {
            onset_a: Span(0.0, 0.25),
            onset_b: Span(0.30, 0.45),
            onset_c: Span(0.50, 0.80),
            onset_d: Span(0.90, 1.20),
            onset_e: Span(1.20, 1.70),
            onset_f: Span(2.0, 3.0),
            b_susceptible_prob: 0.5,
            magnitudes: EffectMagnitudes::default(),
            baseline: SampleBaseline::default(),
        }
    }
}

impl DamageProfile {
    pub fn validate(&self) -> Result<()> {
        self.onset_a.validate("onset_a")?;
        self.onset_b.validate("onset_b")?;
        self.onset_c.validate("onset_c")?;
        self.onset_d.validate("onset_d")?;
        self.onset_e.validate("onset_e")?;
        self.onset_f.validate("onset_f")?;
        let mids: Vec<f64> = [self.onset_a, self.onset_b, self.onset_c, self.onset_d, self.onset_e, self.onset_f]
            .iter()
            .map(|s| (s.lo() + s.hi()) / 2.0)
            .collect();
        if mids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "onset bands must be ordered a < b < c < d < e < f at their midpoints",
            ));
        }
        if !(0.0..=1.0).contains(&self.b_susceptible_prob) {
            return Err(Error::config("b_susceptible_prob must be in [0, 1]"));
        }
        let m = &self.magnitudes;
        m.transient_factor.validate("transient_factor")?;
        m.delta_v_br.validate("delta_v_br")?;
        m.dcr_division.validate("dcr_division")?;
        m.dcr_multiplier.validate("dcr_multiplier")?;
        m.i_dark.validate("i_dark")?;
        m.resistance.validate("resistance")?;
        if !(0.0..=1.0).contains(&m.open_circuit_prob) {
            return Err(Error::config("open_circuit_prob must be in [0, 1]"));
        }
        if !(m.tau_relax > 0.0) {
            return Err(Error::config("tau_relax must be positive"));
        }
        if !(self.baseline.dcr_base >= 0.0) {
            return Err(Error::config("baseline dcr_base must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.baseline.qe_linear) {
            return Err(Error::config("baseline qe_linear must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-sample realized onset thresholds and latent effect magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleThresholds {
    /// Realized onset power per permanent stage, watts. Strictly
    /// increasing b < c < d < e < f.
    pub onset_b: f64,
    pub onset_c: f64,
    pub onset_d: f64,
    pub onset_e: f64,
    pub onset_f: f64,
    /// Whether this sample exhibits the breakdown-voltage rise at all.
    pub b_susceptible: bool,
    /// Magnitude ranges the realized effects are drawn from.
    pub magnitudes: EffectMagnitudes,
    /// Seed of the sample's private magnitude stream. Realized magnitudes
    /// are drawn from labeled substreams of this seed when a threshold is
    /// first crossed, which makes them a property of the sample rather
    /// than of the exposure schedule.
    pub magnitude_seed: u64,
}

impl SampleThresholds {
    /// Realized onset power of a permanent damage stage.
    pub fn onset(&self, band: Band) -> Option<f64> {
        match band {
            Band::A => None,
            Band::B => Some(self.onset_b),
            Band::C => Some(self.onset_c),
            Band::D => Some(self.onset_d),
            Band::E => Some(self.onset_e),
            Band::F => Some(self.onset_f),
        }
    }

    fn magnitude_stream(&self, band: Band) -> SimRng {
        rng::stream(self.magnitude_seed, band.label())
    }
}

/// A single illumination exposure request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    /// Peak optical power, watts.
    pub power: f64,
    /// Duration, seconds. Recorded but not causal: damage tracks peak
    /// power only.
    pub duration: f64,
    /// Detector bias on during the exposure.
    pub bias_on: bool,
    /// Beam focused onto the photosensitive area.
    pub focused: bool,
    /// Power ramped up and down rather than square-pulsed.
    pub ramped: bool,
    /// Start time of the exposure, seconds.
    pub timestamp: f64,
}

impl Exposure {
    /// A 60-second focused square pulse with bias on, at t = 0.
    pub fn cw(power: f64) -> Self {
        Exposure {
            power,
            duration: 60.0,
            bias_on: true,
            focused: true,
            ramped: false,
            timestamp: 0.0,
        }
    }

    pub fn at(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }
}

/// Outcome record of one exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub power: f64,
    pub duration: f64,
    pub bias_on: bool,
    pub focused: bool,
    pub ramped: bool,
    /// Stages whose realized threshold was newly crossed by this exposure,
    /// plus `a` whenever the transient re-armed.
    pub effects_triggered: Vec<Band>,
    pub timestamp: f64,
}

/// Draw a fresh sample and its realized thresholds from a profile.
///
/// Deterministic given the RNG state. Thresholds are redrawn until
/// strictly increasing; pathological profiles fall back to a sorted draw
/// with a minimal separating jitter.
pub fn draw_sample(profile: &DamageProfile, rng: &mut SimRng) -> Result<(ApdState, SampleThresholds)> {
    profile.validate()?;
    let state = ApdState::fresh(
        profile.baseline.v_br_orig,
        profile.baseline.dcr_base,
        profile.baseline.qe_linear,
        profile.magnitudes.tau_relax,
    );

    let mut onsets = [0.0f64; 5];
    let bands = [profile.onset_b, profile.onset_c, profile.onset_d, profile.onset_e, profile.onset_f];
    let mut ok = false;
    for _ in 0..64 {
        for (slot, span) in onsets.iter_mut().zip(bands.iter()) {
            *slot = span.sample(rng);
        }
        if onsets.windows(2).all(|w| w[0] < w[1]) {
            ok = true;
            break;
        }
    }
    if !ok {
        onsets.sort_by(|a, b| a.partial_cmp(b).expect("finite onsets"));
        for i in 1..onsets.len() {
            if onsets[i] <= onsets[i - 1] {
                onsets[i] = onsets[i - 1] * (1.0 + 1e-9) + 1e-12;
            }
        }
    }

    let b_susceptible = rng.gen::<f64>() < profile.b_susceptible_prob;
    let magnitude_seed = rng.gen::<u64>();

    let thresholds = SampleThresholds {
        onset_b: onsets[0],
        onset_c: onsets[1],
        onset_d: onsets[2],
        onset_e: onsets[3],
        onset_f: onsets[4],
        b_susceptible,
        magnitudes: profile.magnitudes,
        magnitude_seed,
    };
    Ok((state, thresholds))
}

/// Apply one illumination exposure to a detector state.
///
/// Permanent damage depends only on `max(exposure.power, state.p_max)`:
/// every stage whose realized threshold lies in `(p_max, power]` fires
/// once, in order b through f. The transient elevation (effect a) re-arms
/// on every exposure of positive power, drawing from `rng`. Bias, focus
/// and ramp flags are recorded and ignored.
pub fn apply_illumination(
    state: &mut ApdState,
    thresholds: &SampleThresholds,
    exposure: &Exposure,
    rng: &mut SimRng,
) -> ExposureRecord {
    let mut effects = Vec::new();
    let power = exposure.power.max(0.0);
    let prev_max = state.p_max;

    if power > 0.0 {
        state.dcr_transient_factor = thresholds.magnitudes.transient_factor.sample(rng);
        state.last_exposure_time = exposure.timestamp;
        effects.push(Band::A);
    }

    let newly_crossed = |onset: f64| onset > prev_max && onset <= power;

    if newly_crossed(thresholds.onset_b) && thresholds.b_susceptible {
        let delta = thresholds.magnitudes.delta_v_br.sample(&mut thresholds.magnitude_stream(Band::B));
        state.v_br += delta;
        effects.push(Band::B);
    }
    if newly_crossed(thresholds.onset_c) {
        let div = thresholds.magnitudes.dcr_division.sample(&mut thresholds.magnitude_stream(Band::C));
        state.dcr_base /= div;
        effects.push(Band::C);
    }
    if newly_crossed(thresholds.onset_d) {
        let mult = thresholds.magnitudes.dcr_multiplier.sample(&mut thresholds.magnitude_stream(Band::D));
        state.dcr_base *= mult;
        effects.push(Band::D);
    }
    if newly_crossed(thresholds.onset_e) {
        let i_dark = thresholds.magnitudes.i_dark.sample(&mut thresholds.magnitude_stream(Band::E));
        state.i_dark = state.i_dark.max(i_dark);
        effects.push(Band::E);
    }
    if newly_crossed(thresholds.onset_f) {
        let mut mrng = thresholds.magnitude_stream(Band::F);
        let open: f64 = mrng.gen();
        state.structural = if open < thresholds.magnitudes.open_circuit_prob {
            StructuralState::OpenCircuit
        } else {
            StructuralState::Resistive {
                ohms: thresholds.magnitudes.resistance.sample(&mut mrng),
            }
        };
        state.qe_linear = 0.0;
        effects.push(Band::F);
    }

    state.p_max = state.p_max.max(power);

    ExposureRecord {
        power: exposure.power,
        duration: exposure.duration,
        bias_on: exposure.bias_on,
        focused: exposure.focused,
        ramped: exposure.ramped,
        effects_triggered: effects,
        timestamp: exposure.timestamp,
    }
}

/// Let the device sit in darkness for `elapsed` seconds: the transient
/// dark-count elevation decays exponentially; permanent fields are
/// untouched.
pub fn relax(state: &mut ApdState, elapsed: f64) {
    let elapsed = elapsed.max(0.0);
    if state.tau_relax > 0.0 {
        state.dcr_transient_factor =
            1.0 + (state.dcr_transient_factor - 1.0) * (-elapsed / state.tau_relax).exp();
    }
    state.last_exposure_time += elapsed;
}
