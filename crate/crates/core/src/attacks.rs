//! Eve's strategy library.
//!
//! Strategies combine an optional *damage campaign* (high-power
//! illumination of Bob's detectors before the protocol runs) with a
//! per-slot channel behavior (pass, intercept-resend, or bright faked-state
//! pulses). [`run_attack`] executes the campaign, lets the transient
//! effects settle, runs the protocol, and reports deltas against an
//! undamaged no-Eve baseline from the same seed family.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apd;
use crate::damage::{self, Band, DamageProfile, Exposure};
use crate::error::Error;
use crate::qkd::{
    self, detector_index, Basis, BobReceiver, EveModel, ProtocolParams, SimResult, SlotInput,
};
use crate::rng::{self, SimRng};
use crate::Result;

/// Uniform-draw quantile a campaign power is planned at: the realized
/// onset threshold is crossed with this probability per detector.
pub const CAMPAIGN_CROSSING_QUANTILE: f64 = 0.96;

/// Dark settling time between a damage campaign and the next protocol
/// session. Long enough (many relaxation constants) that the transient
/// dark-count elevation is gone; the permanent damage stays by definition.
pub const CAMPAIGN_SETTLING_SECONDS: f64 = 7.0 * 24.0 * 3600.0;

/// Eve's strategy. Serialized by name plus parameters, which is also the
/// configuration-file representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EveStrategy {
    /// Honest channel.
    None,
    /// Classic intercept-resend on a fraction of slots.
    InterceptResend { fraction: f64 },
    /// Bright-pulse faked states on every surviving slot, no damage.
    FakedState { pulse_power: f64 },
    /// Blind all four data detectors by laser damage, then send faked
    /// states.
    DamageThenFakedState { campaign_power: f64, pulse_power: f64 },
    /// Reduce the detectors' dark count rate by laser damage, then hide an
    /// intercept-resend inside the error budget Bob frees by crediting his
    /// stale dark-count calibration.
    SubtractionExploit {
        campaign_power: f64,
        intercept_fraction: f64,
    },
    /// Destroy the watchdog power meter, then run the inner strategy.
    WatchdogKill {
        campaign_power: f64,
        inner: Box<EveStrategy>,
    },
}

impl EveStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            EveStrategy::None => Ok(()),
            EveStrategy::InterceptResend { fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(Error::config("intercept fraction must be in [0, 1]"));
                }
                Ok(())
            }
            EveStrategy::FakedState { pulse_power } => {
                if !(*pulse_power > 0.0) {
                    return Err(Error::config("pulse_power must be positive"));
                }
                Ok(())
            }
            EveStrategy::DamageThenFakedState {
                campaign_power,
                pulse_power,
            } => {
                if !(*campaign_power >= 0.0) || !(*pulse_power > 0.0) {
                    return Err(Error::config(
                        "campaign_power must be >= 0 and pulse_power > 0",
                    ));
                }
                Ok(())
            }
            EveStrategy::SubtractionExploit {
                campaign_power,
                intercept_fraction,
            } => {
                if !(*campaign_power >= 0.0) || !(0.0..=1.0).contains(intercept_fraction) {
                    return Err(Error::config(
                        "campaign_power must be >= 0 and intercept_fraction in [0, 1]",
                    ));
                }
                Ok(())
            }
            EveStrategy::WatchdogKill {
                campaign_power,
                inner,
            } => {
                if !(*campaign_power >= 0.0) {
                    return Err(Error::config("campaign_power must be >= 0"));
                }
                inner.validate()
            }
        }
    }

    /// The per-slot channel behavior once campaigns are done.
    fn slot_behavior(&self) -> SlotBehavior {
        match self {
            EveStrategy::None => SlotBehavior::Honest,
            EveStrategy::InterceptResend { fraction } => SlotBehavior::InterceptResend {
                fraction: *fraction,
            },
            EveStrategy::FakedState { pulse_power }
            | EveStrategy::DamageThenFakedState { pulse_power, .. } => SlotBehavior::FakedState {
                pulse_power: *pulse_power,
            },
            EveStrategy::SubtractionExploit {
                intercept_fraction, ..
            } => SlotBehavior::InterceptResend {
                fraction: *intercept_fraction,
            },
            EveStrategy::WatchdogKill { inner, .. } => inner.slot_behavior(),
        }
    }
}

/// Runtime form of the per-slot behavior.
#[derive(Debug, Clone, Copy)]
enum SlotBehavior {
    Honest,
    InterceptResend { fraction: f64 },
    FakedState { pulse_power: f64 },
}

/// [`EveModel`] adapter for a strategy's slot behavior.
pub struct StrategySlots {
    behavior: SlotBehavior,
}

impl StrategySlots {
    pub fn new(strategy: &EveStrategy) -> Self {
        StrategySlots {
            behavior: strategy.slot_behavior(),
        }
    }
}

impl EveModel for StrategySlots {
    fn act(
        &mut self,
        alice_bit: bool,
        alice_basis: Basis,
        rng: &mut SimRng,
    ) -> (SlotInput, Option<bool>) {
        match self.behavior {
            SlotBehavior::Honest => (
                SlotInput::Photon {
                    basis: alice_basis,
                    bit: alice_bit,
                },
                None,
            ),
            SlotBehavior::InterceptResend { fraction } => {
                let intercept = fraction >= 1.0 || (fraction > 0.0 && rng.gen::<f64>() < fraction);
                if !intercept {
                    return (
                        SlotInput::Photon {
                            basis: alice_basis,
                            bit: alice_bit,
                        },
                        None,
                    );
                }
                let (eve_basis, eve_bit) = eve_measurement(alice_bit, alice_basis, rng);
                (
                    SlotInput::Photon {
                        basis: eve_basis,
                        bit: eve_bit,
                    },
                    Some(eve_bit),
                )
            }
            SlotBehavior::FakedState { pulse_power } => {
                let (eve_basis, eve_bit) = eve_measurement(alice_bit, alice_basis, rng);
                (
                    SlotInput::BrightPulse {
                        basis: eve_basis,
                        bit: eve_bit,
                        power: pulse_power,
                    },
                    Some(eve_bit),
                )
            }
        }
    }
}

/// Eve measures the photon in a uniformly random basis: the true bit when
/// her basis matches Alice's, a uniform outcome otherwise.
fn eve_measurement(alice_bit: bool, alice_basis: Basis, rng: &mut SimRng) -> (Basis, bool) {
    let eve_basis = if rng.gen::<bool>() { Basis::X } else { Basis::Z };
    let eve_bit = if eve_basis == alice_basis {
        alice_bit
    } else {
        rng.gen::<bool>()
    };
    (eve_basis, eve_bit)
}

/// Attack outcome: the report plus the raw baseline and the receiver in
/// its post-campaign condition.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub report: AttackReport,
    pub baseline: SimResult,
    pub receiver: BobReceiver,
}

/// Protocol result of the attack run plus deltas against the undamaged
/// no-Eve baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    #[serde(flatten)]
    pub result: SimResult,
    pub qber_delta_vs_baseline: f64,
    pub bob_rate_ratio_vs_baseline: f64,
    pub alarms_raised: u64,
}

/// Campaign power that crosses a damage band's realized onset threshold
/// with probability [`CAMPAIGN_CROSSING_QUANTILE`] under the profile's
/// uniform per-sample draw.
pub fn plan_campaign(band: Band, profile: &DamageProfile) -> Result<f64> {
    let span = match band {
        Band::B => profile.onset_b,
        Band::C => profile.onset_c,
        Band::D => profile.onset_d,
        Band::E => profile.onset_e,
        Band::F => profile.onset_f,
        Band::A => {
            return Err(Error::domain(
                "band a is transient and has no campaign power",
            ))
        }
    };
    Ok(span.lo() + CAMPAIGN_CROSSING_QUANTILE * (span.hi() - span.lo()))
}

/// Bright-pulse power arriving at each of Bob's four detectors for one
/// faked-state slot.
///
/// When Bob's passive basis matches Eve's, the full pulse reaches the one
/// detector encoding Eve's bit; otherwise the pulse splits evenly between
/// the two detectors of Bob's basis.
pub fn faked_state_slot(
    eve_bit: bool,
    eve_basis: Basis,
    pulse_power: f64,
    bob_basis: Basis,
) -> [f64; 4] {
    let mut powers = [0.0; 4];
    if eve_basis == bob_basis {
        powers[detector_index(eve_basis, eve_bit)] = pulse_power;
    } else {
        powers[detector_index(bob_basis, false)] = pulse_power / 2.0;
        powers[detector_index(bob_basis, true)] = pulse_power / 2.0;
    }
    powers
}

/// Largest intercept-resend fraction whose added error (0.25 per
/// intercepted sifted bit in the signal-dominated regime) hides inside the
/// error budget freed by crediting the pre-damage dark-count calibration.
pub fn subtraction_exploit_fraction(q_expected: f64, q_base_after_damage: f64) -> Result<f64> {
    if q_expected < q_base_after_damage {
        return Err(Error::domain(
            "no error budget: expected QBER below the post-damage baseline",
        ));
    }
    Ok(((q_expected - q_base_after_damage) / 0.25).min(1.0))
}

/// Apply the strategy's damage campaign to a clone of the receiver and let
/// the transient effects settle. Deterministic for a given seed; the same
/// receiver state is reproduced inside [`run_attack`].
pub fn damaged_receiver(strategy: &EveStrategy, bob: &BobReceiver, seed: u64) -> BobReceiver {
    let mut attacked = bob.clone();
    let mut rng = rng::stream(seed, "campaign");
    apply_campaign(strategy, &mut attacked, &mut rng);
    settle(&mut attacked);
    attacked
}

fn apply_campaign(strategy: &EveStrategy, bob: &mut BobReceiver, rng: &mut SimRng) {
    match strategy {
        EveStrategy::None | EveStrategy::InterceptResend { .. } | EveStrategy::FakedState { .. } => {
        }
        EveStrategy::DamageThenFakedState { campaign_power, .. }
        | EveStrategy::SubtractionExploit { campaign_power, .. } => {
            expose_data_detectors(bob, *campaign_power, rng);
        }
        EveStrategy::WatchdogKill {
            campaign_power,
            inner,
        } => {
            if let Some(watchdog) = bob.watchdog.as_mut() {
                damage::apply_illumination(
                    &mut watchdog.state,
                    &watchdog.thresholds,
                    &Exposure::cw(*campaign_power),
                    rng,
                );
            }
            apply_campaign(inner, bob, rng);
        }
    }
}

fn expose_data_detectors(bob: &mut BobReceiver, power: f64, rng: &mut SimRng) {
    for det in bob.detectors.iter_mut() {
        damage::apply_illumination(&mut det.state, &det.thresholds, &Exposure::cw(power), rng);
    }
}

fn settle(bob: &mut BobReceiver) {
    for det in bob.detectors.iter_mut() {
        damage::relax(&mut det.state, CAMPAIGN_SETTLING_SECONDS);
    }
    if let Some(watchdog) = bob.watchdog.as_mut() {
        damage::relax(&mut watchdog.state, CAMPAIGN_SETTLING_SECONDS);
    }
}

/// Execute a strategy end to end.
///
/// Runs the damage campaign (watchdog first for [`EveStrategy::WatchdogKill`],
/// then data detectors), lets the receiver settle in darkness, runs the
/// protocol with Eve's per-slot behavior, and compares against a no-Eve
/// run on the undamaged receiver from the same seed family.
pub fn run_attack(
    strategy: &EveStrategy,
    params: &ProtocolParams,
    bob: &BobReceiver,
    seed: u64,
) -> Result<AttackOutcome> {
    strategy.validate()?;
    let attacked = damaged_receiver(strategy, bob, seed);

    let baseline = qkd::run_bb84(params, bob, &mut qkd::NoEve, rng::subseed(seed, "baseline"))?;
    let mut slots = StrategySlots::new(strategy);
    let result = qkd::run_bb84(params, &attacked, &mut slots, rng::subseed(seed, "attack"))?;

    let bob_rate_ratio_vs_baseline = if baseline.n_sifted == 0 {
        0.0
    } else {
        result.n_sifted as f64 / baseline.n_sifted as f64
    };
    Ok(AttackOutcome {
        report: AttackReport {
            result,
            qber_delta_vs_baseline: result.qber - baseline.qber,
            bob_rate_ratio_vs_baseline,
            alarms_raised: result.watchdog_alarms,
        },
        baseline,
        receiver: attacked,
    })
}

/// Outcome of a selective band-b damage run against one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMismatchOutcome {
    /// Min/max photon-detection-efficiency ratio across the four
    /// detectors after the attack.
    pub mismatch_ratio: f64,
    /// Exposures spent before the effect fired or attempts ran out.
    pub attempts_used: u32,
    /// Whether the breakdown-voltage rise fired on the target.
    pub effect_fired: bool,
}

/// Step increasing band-b powers into one addressable detector until its
/// breakdown voltage shifts (or attempts run out), creating a permanent
/// efficiency mismatch between Bob's detectors.
pub fn selective_efficiency_damage(
    bob: &mut BobReceiver,
    target: usize,
    profile: &DamageProfile,
    rng: &mut SimRng,
    max_attempts: u32,
) -> Result<EfficiencyMismatchOutcome> {
    if target >= 4 {
        return Err(Error::domain(format!(
            "target detector index {target} outside 0..=3"
        )));
    }
    if max_attempts == 0 {
        return Err(Error::domain("max_attempts must be positive"));
    }
    profile.validate()?;

    let lo = profile.onset_b.lo();
    let hi = profile.onset_b.hi();
    let mut attempts_used = 0;
    let mut effect_fired = false;
    for k in 1..=max_attempts {
        let power = lo + (hi - lo) * k as f64 / max_attempts as f64;
        let det = &mut bob.detectors[target];
        let record =
            damage::apply_illumination(&mut det.state, &det.thresholds, &Exposure::cw(power), rng);
        attempts_used = k;
        if record.effects_triggered.contains(&Band::B) {
            effect_fired = true;
            break;
        }
    }
    settle(bob);

    let etas = detector_efficiencies(bob);
    let max = etas.iter().cloned().fold(f64::MIN, f64::max);
    let min = etas.iter().cloned().fold(f64::MAX, f64::min);
    let mismatch_ratio = if max > 0.0 { min / max } else { 1.0 };
    Ok(EfficiencyMismatchOutcome {
        mismatch_ratio,
        attempts_used,
        effect_fired,
    })
}

/// Photon detection efficiency of each receiver detector.
pub fn detector_efficiencies(bob: &BobReceiver) -> [f64; 4] {
    [0, 1, 2, 3].map(|i| {
        apd::photon_detection_efficiency(&bob.detectors[i].state, &bob.detectors[i].circuit)
    })
}
