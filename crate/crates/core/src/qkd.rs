//! BB84 protocol engine.
//!
//! Alice sends one ideal single photon per slot over a lossy channel; Bob
//! receives with a four-detector passive-basis-choice receiver. The engine
//! computes sifted key length, QBER, asymptotic secret key rate, the
//! fraction of the sifted key known to an eavesdropper, and the
//! dark-count-limited maximum transmission distance.
//!
//! Eavesdropping is injected through [`EveModel`]: a per-slot hook that
//! may replace the surviving quantum signal with another photon or with a
//! classical bright pulse (see [`crate::attacks`] for the strategy
//! library).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apd::{self, ApdState, DetectorCircuit};
use crate::damage::{DamageProfile, SampleThresholds};
use crate::error::Error;
use crate::rng::{self, SimRng};
use crate::Result;

/// Default fiber attenuation used by the distance analysis, dB/km.
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

/// Measurement basis of the BB84 alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    fn from_bool(b: bool) -> Self {
        if b {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

/// Index of the receiver detector serving `(basis, bit)`.
///
/// Order: Z/bit0, Z/bit1, X/bit0, X/bit1.
pub fn detector_index(basis: Basis, bit: bool) -> usize {
    (basis == Basis::X) as usize * 2 + bit as usize
}

/// Basis and bit served by detector `index`.
pub fn detector_role(index: usize) -> (Basis, bool) {
    (Basis::from_bool(index >= 2), index % 2 == 1)
}

/// BB84 link configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of transmission slots.
    pub n_slots: u64,
    /// Channel loss, decibels.
    pub channel_loss_db: f64,
    /// Probability that a routed bit is flipped by optical misalignment.
    pub e_misalign: f64,
    /// Error-correction inefficiency, >= 1.
    pub f_ec: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            n_slots: 100_000,
            channel_loss_db: 3.0,
            e_misalign: 0.01,
            f_ec: 1.0,
        }
    }
}

impl ProtocolParams {
    /// Express the channel as a fiber length at `alpha` dB/km.
    pub fn with_distance(mut self, distance_km: f64, alpha_db_per_km: f64) -> Self {
        self.channel_loss_db = distance_km * alpha_db_per_km;
        self
    }

    /// Photon survival probability of the channel.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.channel_loss_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.channel_loss_db >= 0.0) {
            return Err(Error::config("channel_loss_db must be non-negative"));
        }
        if !(0.0..=0.5).contains(&self.e_misalign) {
            return Err(Error::config("e_misalign must be in [0, 0.5]"));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::config("f_ec must be >= 1"));
        }
        Ok(())
    }
}

/// One data detector of the receiver: physical state, bias circuit and the
/// sample's realized damage thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDetector {
    pub state: ApdState,
    pub circuit: DetectorCircuit,
    pub thresholds: SampleThresholds,
}

/// Auxiliary watchdog power meter guarding the receiver entrance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Watchdog {
    pub state: ApdState,
    pub thresholds: SampleThresholds,
    /// Reading above which the watchdog raises an alarm, watts.
    pub alarm_threshold: f64,
}

/// Four-detector passive-basis-choice receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BobReceiver {
    /// Detectors in [Z/bit0, Z/bit1, X/bit0, X/bit1] order.
    pub detectors: [DataDetector; 4],
    pub watchdog: Option<Watchdog>,
    /// Resolve double clicks by a uniform pick instead of discarding the
    /// slot. Discarding is the default squashing convention.
    pub double_click_random: bool,
}

impl BobReceiver {
    /// Draw a four-detector receiver (plus optional watchdog) from a
    /// damage profile.
    pub fn draw(
        profile: &DamageProfile,
        circuit: DetectorCircuit,
        watchdog_alarm_threshold: Option<f64>,
        rng: &mut SimRng,
    ) -> Result<Self> {
        circuit.validate()?;
        if let Some(t) = watchdog_alarm_threshold {
            if !(t > 0.0) {
                return Err(Error::config("watchdog alarm threshold must be positive"));
            }
        }
        let draw_one = |rng: &mut SimRng| -> Result<DataDetector> {
            let (state, thresholds) = crate::damage::draw_sample(profile, rng)?;
            Ok(DataDetector {
                state,
                circuit,
                thresholds,
            })
        };
        let detectors = [
            draw_one(rng)?,
            draw_one(rng)?,
            draw_one(rng)?,
            draw_one(rng)?,
        ];
        let watchdog = match watchdog_alarm_threshold {
            Some(alarm_threshold) => {
                let (state, thresholds) = crate::damage::draw_sample(profile, rng)?;
                Some(Watchdog {
                    state,
                    thresholds,
                    alarm_threshold,
                })
            }
            None => None,
        };
        Ok(BobReceiver {
            detectors,
            watchdog,
            double_click_random: false,
        })
    }
}

/// Aggregate outcome of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n_detected: u64,
    pub n_sifted: u64,
    pub n_errors: u64,
    pub qber: f64,
    pub key_rate_per_sifted_bit: f64,
    /// Fraction of sifted key bits whose value matches Eve's record.
    pub eve_info_fraction: f64,
    pub detection_rate_per_slot: f64,
    pub watchdog_alarms: u64,
}

/// What proceeds toward Bob after Eve's position in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotInput {
    /// Nothing reaches the receiver.
    Nothing,
    /// A single photon in the given basis/bit.
    Photon { basis: Basis, bit: bool },
    /// A classical bright pulse encoding Eve's basis/bit.
    BrightPulse { basis: Basis, bit: bool, power: f64 },
}

/// Per-slot eavesdropper hook.
///
/// Called once for every slot whose photon survived the channel. The
/// returned record, if any, is Eve's guess for the slot's key bit; it is
/// compared against the bit Bob actually registers.
pub trait EveModel {
    fn act(
        &mut self,
        alice_bit: bool,
        alice_basis: Basis,
        rng: &mut SimRng,
    ) -> (SlotInput, Option<bool>);
}

/// Honest channel: the photon passes untouched.
pub struct NoEve;

impl EveModel for NoEve {
    fn act(
        &mut self,
        alice_bit: bool,
        alice_basis: Basis,
        _rng: &mut SimRng,
    ) -> (SlotInput, Option<bool>) {
        (
            SlotInput::Photon {
                basis: alice_basis,
                bit: alice_bit,
            },
            None,
        )
    }
}

/// Binary entropy, bits.
pub fn h2(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("h2 argument {x} outside [0, 1]")));
    }
    Ok(h2_unchecked(x))
}

fn h2_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Asymptotic secret key fraction per sifted bit at the given QBER.
///
/// `max(0, 1 - h2(q) - f_ec * h2(q))`: one entropy term for privacy
/// amplification, one (scaled by the inefficiency) for error correction.
pub fn key_rate(qber: f64, f_ec: f64) -> f64 {
    debug_assert!((0.0..=0.5).contains(&qber), "qber {qber} outside [0, 0.5]");
    let h = h2_unchecked(qber.clamp(0.0, 1.0));
    (1.0 - h - f_ec * h).max(0.0)
}

/// First-order QBER of a sifted slot.
///
/// Within a sifted slot the correct detector clicks with probability
/// `p_sig * (1 - e_det) + d` and the wrong one with `p_sig * e_det + d`,
/// giving `(e_det * p_sig + d) / (p_sig + 2 d)`.
pub fn analytic_qber(p_sig: f64, e_det: f64, d: f64) -> Result<f64> {
    for (name, v) in [("p_sig", p_sig), ("e_det", e_det), ("d", d)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let denom = p_sig + 2.0 * d;
    if denom <= 0.0 {
        return Err(Error::domain(
            "no signal: p_sig + 2 d must be positive".to_string(),
        ));
    }
    Ok((e_det * p_sig + d) / denom)
}

/// Dark-count-limited maximum transmission distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxDistance {
    /// The key rate never crosses zero in this model (dark-count-free link).
    Unbounded,
    /// Largest distance with positive key rate, kilometers.
    Km(f64),
}

/// Largest transmission distance with a positive key rate, by bisection to
/// better than 0.1 km.
///
/// Signal probability is `eta * 10^(-alpha L / 10)`; the dark probability
/// uses the detector's settled dark count rate over one slot.
pub fn max_distance(
    state: &ApdState,
    circuit: &DetectorCircuit,
    e_det: f64,
    alpha_db_per_km: f64,
) -> Result<MaxDistance> {
    if !(alpha_db_per_km > 0.0) {
        return Err(Error::domain("alpha must be positive"));
    }
    let eta = apd::photon_detection_efficiency(state, circuit);
    let d = 1.0 - (-state.dcr_base * circuit.slot_duration).exp();
    let rate_at = |length_km: f64| -> f64 {
        let p_sig = eta * 10f64.powf(-alpha_db_per_km * length_km / 10.0);
        match analytic_qber(p_sig, e_det, d) {
            Ok(q) => key_rate(q.min(0.5), 1.0),
            Err(_) => 0.0,
        }
    };

    if rate_at(0.0) <= 0.0 {
        return Ok(MaxDistance::Km(0.0));
    }
    if d <= 0.0 {
        // QBER is flat in distance without dark counts.
        return Ok(MaxDistance::Unbounded);
    }
    let mut lo = 0.0;
    let mut hi = 50.0;
    while rate_at(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return Ok(MaxDistance::Unbounded);
        }
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxDistance::Km(lo))
}

/// Per-detector click behavior, hoisted out of the slot loop. The receiver
/// state is constant during a run, so efficiency, dark probability and the
/// blinded setpoint can be computed once.
enum DetectorMode {
    Dead,
    Blinded { setpoint: f64 },
    Geiger { eta: f64, p_dark: f64 },
}

fn detector_mode(det: &DataDetector) -> DetectorMode {
    if !det.state.structural.is_intact() {
        return DetectorMode::Dead;
    }
    if apd::is_blinded(&det.state, &det.circuit) {
        return DetectorMode::Blinded {
            setpoint: det.circuit.v_bias - det.state.v_br,
        };
    }
    DetectorMode::Geiger {
        eta: apd::photon_detection_efficiency(&det.state, &det.circuit),
        p_dark: apd::dark_click_probability(&det.state, &det.circuit, det.state.last_exposure_time),
    }
}

fn bernoulli(p: f64, rng: &mut SimRng) -> bool {
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    rng.gen::<f64>() < p
}

/// Run the BB84 protocol. Bit-exact reproducible for a given
/// `(params, bob, eve, seed)`.
pub fn run_bb84<E: EveModel>(
    params: &ProtocolParams,
    bob: &BobReceiver,
    eve: &mut E,
    seed: u64,
) -> Result<SimResult> {
    params.validate()?;
    let mut rng = rng::stream(seed, "slots");
    let transmission = params.transmission();
    let modes = [
        detector_mode(&bob.detectors[0]),
        detector_mode(&bob.detectors[1]),
        detector_mode(&bob.detectors[2]),
        detector_mode(&bob.detectors[3]),
    ];
    let watchdog_gain = bob.watchdog.as_ref().map(|w| {
        // Reading per watt of incident power; zero once destroyed.
        (w.alarm_threshold, apd::watchdog_power_reading(&w.state, 1.0))
    });

    let mut n_detected = 0u64;
    let mut n_sifted = 0u64;
    let mut n_errors = 0u64;
    let mut n_eve_known = 0u64;
    let mut watchdog_alarms = 0u64;

    for _ in 0..params.n_slots {
        let alice_bit = rng.gen::<bool>();
        let alice_basis = Basis::from_bool(rng.gen::<bool>());
        let survived = transmission >= 1.0 || rng.gen::<f64>() < transmission;

        let (input, eve_record) = if survived {
            eve.act(alice_bit, alice_basis, &mut rng)
        } else {
            (SlotInput::Nothing, None)
        };

        let bob_basis = Basis::from_bool(rng.gen::<bool>());

        // Route the slot input onto the four detectors.
        let mut photon_target: Option<usize> = None;
        let mut pulse_powers = [0.0f64; 4];
        match input {
            SlotInput::Nothing => {}
            SlotInput::Photon { basis, bit } => {
                let routed_bit = if basis == bob_basis {
                    if params.e_misalign > 0.0 && rng.gen::<f64>() < params.e_misalign {
                        !bit
                    } else {
                        bit
                    }
                } else {
                    rng.gen::<bool>()
                };
                photon_target = Some(detector_index(bob_basis, routed_bit));
            }
            SlotInput::BrightPulse { basis, bit, power } => {
                if basis == bob_basis {
                    pulse_powers[detector_index(basis, bit)] = power;
                } else {
                    pulse_powers[detector_index(bob_basis, false)] = power / 2.0;
                    pulse_powers[detector_index(bob_basis, true)] = power / 2.0;
                }
                if let Some((alarm_threshold, gain)) = watchdog_gain {
                    if power * gain > alarm_threshold {
                        watchdog_alarms += 1;
                    }
                }
            }
        }

        // Evaluate the pair selected by the passive basis choice; the
        // slot's announced basis is this draw. Dark counts in the
        // unselected pair are sifted out by construction, which is what
        // gives the analytic error model its `2 d` denominator.
        let pair = [
            detector_index(bob_basis, false),
            detector_index(bob_basis, true),
        ];
        let mut clicks = [false; 2];
        for (slot, &i) in pair.iter().enumerate() {
            let clicked = match &modes[i] {
                DetectorMode::Dead => false,
                DetectorMode::Blinded { setpoint } => {
                    // Blinded: zero dark counts, zero single-photon
                    // sensitivity, bright-pulse control curve only.
                    if pulse_powers[i] > 0.0 {
                        let p = bob.detectors[i]
                            .circuit
                            .control_curve
                            .click_probability(pulse_powers[i], *setpoint);
                        bernoulli(p, &mut rng)
                    } else {
                        false
                    }
                }
                DetectorMode::Geiger { eta, p_dark } => {
                    if pulse_powers[i] > 0.0 && *eta > 0.0 {
                        // A bright pulse carries ~1e7 photons: a live
                        // Geiger detector saturates to a certain click.
                        true
                    } else {
                        let p_signal = if photon_target == Some(i) { *eta } else { 0.0 };
                        let p = 1.0 - (1.0 - p_signal) * (1.0 - p_dark);
                        bernoulli(p, &mut rng)
                    }
                }
            };
            clicks[slot] = clicked;
        }

        let winner = match (clicks[0], clicks[1]) {
            (false, false) => continue,
            (true, false) => pair[0],
            (false, true) => pair[1],
            (true, true) => {
                if bob.double_click_random {
                    pair[rng.gen_range(0..2usize)]
                } else {
                    continue; // discard double clicks
                }
            }
        };

        n_detected += 1;
        let (click_basis, click_bit) = detector_role(winner);
        if click_basis == alice_basis {
            n_sifted += 1;
            if click_bit != alice_bit {
                n_errors += 1;
            }
            if eve_record == Some(click_bit) {
                n_eve_known += 1;
            }
        }
    }

    if n_errors > n_sifted || n_sifted > n_detected || n_detected > params.n_slots {
        return Err(Error::Invariant(format!(
            "count ordering violated: errors {n_errors}, sifted {n_sifted}, detected {n_detected}, slots {}",
            params.n_slots
        )));
    }

    let qber = if n_sifted == 0 {
        0.0
    } else {
        n_errors as f64 / n_sifted as f64
    };
    Ok(SimResult {
        n_detected,
        n_sifted,
        n_errors,
        qber,
        key_rate_per_sifted_bit: if n_sifted == 0 {
            0.0
        } else {
            key_rate(qber.min(0.5), params.f_ec)
        },
        eve_info_fraction: if n_sifted == 0 {
            0.0
        } else {
            n_eve_known as f64 / n_sifted as f64
        },
        detection_rate_per_slot: if params.n_slots == 0 {
            0.0
        } else {
            n_detected as f64 / params.n_slots as f64
        },
        watchdog_alarms,
    })
}
