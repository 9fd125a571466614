//! Automated measure-expose-measure loop.
//!
//! Mirrors a detector test bench: the five detector parameters are
//! measured with realistic sampling noise, exposures of increasing power
//! alternate with characterizations, and an operator alarm fires when any
//! measured parameter deviates from its initial value by more than a
//! configured relative tolerance.
//!
//! Dark-count measurements report the settled (permanent) rate: the
//! transient post-exposure elevation decays over hours and is a
//! protocol-level effect, not part of the recorded damage traces.

use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::apd::{self, ApdState, DetectorCircuit};
use crate::damage::{self, Exposure, ExposureRecord, SampleThresholds};
use crate::error::Error;
use crate::rng::SimRng;
use crate::Result;

/// Breakdown-voltage read noise, volts (one sigma).
const V_BR_READ_SIGMA: f64 = 0.05;
/// Relative noise of analog current / quantum-efficiency readings.
const ANALOG_RELATIVE_SIGMA: f64 = 0.02;

/// Calibrated-source settings used by [`characterize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    /// Dark-count integration time, seconds.
    pub count_time: f64,
    /// Number of calibrated test pulses for the efficiency estimate.
    pub n_test_pulses: u64,
    /// Mean photon number per test pulse.
    pub mu: f64,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        MeasurementSettings {
            count_time: 10.0,
            n_test_pulses: 10_000,
            mu: 0.1,
        }
    }
}

impl MeasurementSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.count_time > 0.0 && self.mu > 0.0 && self.n_test_pulses > 0) {
            return Err(Error::config(
                "measurement settings must be positive (count_time, n_test_pulses, mu)",
            ));
        }
        Ok(())
    }
}

/// One snapshot of the five measured detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationRecord {
    /// Dark count rate, hertz.
    pub dcr_measured: f64,
    /// Photon detection efficiency at the operating bias.
    pub pde_measured: f64,
    /// Breakdown voltage, volts.
    pub v_br_measured: f64,
    /// Dark current in linear amplification mode, amperes.
    pub i_dark_measured: f64,
    /// Photoconversion quantum efficiency at 0 V bias.
    pub qe_0v_measured: f64,
    /// Power of the preceding exposure, watts; 0 for the baseline record.
    pub exposure_power: f64,
}

/// Parameter names in the fixed order used by records and CSV columns.
pub const PARAMETER_NAMES: [&str; 5] = ["dcr", "pde", "v_br", "i_dark", "qe_0v"];

/// Per-parameter relative deviation tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTolerances {
    pub dcr: f64,
    pub pde: f64,
    pub v_br: f64,
    pub i_dark: f64,
    pub qe_0v: f64,
}

impl Default for ParamTolerances {
    fn default() -> Self {
        ParamTolerances {
            dcr: 0.2,
            pde: 0.2,
            v_br: 0.2,
            i_dark: 0.2,
            qe_0v: 0.2,
        }
    }
}

impl ParamTolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, tol) in [
            ("dcr", self.dcr),
            ("pde", self.pde),
            ("v_br", self.v_br),
            ("i_dark", self.i_dark),
            ("qe_0v", self.qe_0v),
        ] {
            if !(tol > 0.0) {
                return Err(Error::config(format!("tolerance {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Operator-alarm policy: a baseline record plus relative tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmPolicy {
    pub tolerance: ParamTolerances,
    pub baseline: CharacterizationRecord,
}

/// Measure the five detector parameters with sampling noise.
///
/// Dark counts are a Poisson sample of the settled rate over `count_time`;
/// efficiency comes from binomial click statistics of Poissonian test
/// pulses inverted through `p = 1 - exp(-mu * eta)`; the breakdown voltage
/// reads with 0.05 V additive noise; dark current and 0 V quantum
/// efficiency read with 2% relative noise. Blinded and destroyed detectors
/// yield zero counts and zero efficiency.
pub fn characterize(
    state: &ApdState,
    circuit: &DetectorCircuit,
    meas: &MeasurementSettings,
    rng: &mut SimRng,
) -> CharacterizationRecord {
    let photosensitive = state.structural.is_intact() && !apd::is_blinded(state, circuit);

    let dark_rate = if photosensitive { state.dcr_base } else { 0.0 };
    let dark_counts = sample_poisson(dark_rate * meas.count_time, rng);
    let dcr_measured = dark_counts / meas.count_time;

    let eta = apd::photon_detection_efficiency(state, circuit);
    let p_click = if photosensitive && eta > 0.0 {
        1.0 - (-meas.mu * eta).exp()
    } else {
        0.0
    };
    let clicks = sample_binomial(meas.n_test_pulses, p_click, rng);
    let p_hat = clicks as f64 / meas.n_test_pulses as f64;
    let pde_measured = if p_hat >= 1.0 {
        1.0
    } else {
        (-(1.0 - p_hat).ln() / meas.mu).clamp(0.0, 1.0)
    };

    let v_br_noise = Normal::new(0.0, V_BR_READ_SIGMA).expect("valid sigma");
    let v_br_measured = state.v_br + v_br_noise.sample(rng);

    let analog = Normal::new(1.0, ANALOG_RELATIVE_SIGMA).expect("valid sigma");
    let i_dark_measured = (state.i_dark * analog.sample(rng)).max(0.0);
    let qe_0v_measured = (state.qe_linear * analog.sample(rng)).clamp(0.0, 1.0);

    CharacterizationRecord {
        dcr_measured,
        pde_measured,
        v_br_measured,
        i_dark_measured,
        qe_0v_measured,
        exposure_power: 0.0,
    }
}

fn sample_poisson(lambda: f64, rng: &mut SimRng) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).expect("positive lambda").sample(rng)
}

fn sample_binomial(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if p <= 0.0 || n == 0 {
        return 0;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Names of parameters whose measured value deviates from the baseline by
/// more than the policy tolerance, in the fixed parameter order.
pub fn detect_deviation(record: &CharacterizationRecord, policy: &AlarmPolicy) -> Vec<&'static str> {
    let pairs = [
        ("dcr", record.dcr_measured, policy.baseline.dcr_measured, policy.tolerance.dcr),
        ("pde", record.pde_measured, policy.baseline.pde_measured, policy.tolerance.pde),
        ("v_br", record.v_br_measured, policy.baseline.v_br_measured, policy.tolerance.v_br),
        (
            "i_dark",
            record.i_dark_measured,
            policy.baseline.i_dark_measured,
            policy.tolerance.i_dark,
        ),
        (
            "qe_0v",
            record.qe_0v_measured,
            policy.baseline.qe_0v_measured,
            policy.tolerance.qe_0v,
        ),
    ];
    pairs
        .iter()
        .filter(|(_, value, base, tol)| {
            let scale = base.abs().max(f64::EPSILON);
            (value - base).abs() / scale > *tol
        })
        .map(|(name, ..)| *name)
        .collect()
}

/// One step of a damage sweep: the exposure (absent for the baseline
/// step), the characterization that followed it, and the alarms it raised.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStep {
    pub exposure: Option<ExposureRecord>,
    pub record: CharacterizationRecord,
    pub alarms: Vec<&'static str>,
}

/// Run the full measure-expose-measure loop over a non-decreasing power
/// schedule.
///
/// The first step is the pre-exposure baseline ("the leftmost point on
/// each trace"); it also becomes the alarm baseline. Each subsequent step
/// exposes the detector and re-measures.
pub fn damage_sweep(
    state: &mut ApdState,
    thresholds: &SampleThresholds,
    powers: &[f64],
    circuit: &DetectorCircuit,
    meas: &MeasurementSettings,
    tolerance: &ParamTolerances,
    rng: &mut SimRng,
) -> Result<Vec<SweepStep>> {
    meas.validate()?;
    tolerance.validate()?;
    if powers.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain(
            "damage sweep requires a non-decreasing power schedule",
        ));
    }

    let baseline = characterize(state, circuit, meas, rng);
    let policy = AlarmPolicy {
        tolerance: *tolerance,
        baseline,
    };
    let mut steps = vec![SweepStep {
        exposure: None,
        record: baseline,
        alarms: detect_deviation(&baseline, &policy),
    }];

    for (i, &power) in powers.iter().enumerate() {
        let exposure = Exposure::cw(power).at(i as f64 * 60.0);
        let record = damage::apply_illumination(state, thresholds, &exposure, rng);
        let mut snapshot = characterize(state, circuit, meas, rng);
        snapshot.exposure_power = power;
        let alarms = detect_deviation(&snapshot, &policy);
        steps.push(SweepStep {
            exposure: Some(record),
            record: snapshot,
            alarms,
        });
    }
    Ok(steps)
}

/// Render sweep steps as CSV with the frozen column contract.
pub fn sweep_csv(steps: &[SweepStep]) -> String {
    let mut out = String::from("exposure_power,dcr,pde,v_br,i_dark,qe_0v,alarms\n");
    for step in steps {
        let r = &step.record;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.exposure_power,
            r.dcr_measured,
            r.pde_measured,
            r.v_br_measured,
            r.i_dark_measured,
            r.qe_0v_measured,
            step.alarms.join(";")
        ));
    }
    out
}
