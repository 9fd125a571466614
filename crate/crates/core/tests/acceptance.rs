//! Acceptance gate: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p apdsim-core --test acceptance -- --nocapture`
//! to see the per-criterion lines. Golden files under `tests/golden/` are
//! regenerated by running this suite with `BLESS=1` in the environment.

use std::path::{Path, PathBuf};
use std::time::Instant;

use apdsim_core::apd::{
    self, bright_pulse_click_probability, dark_click_probability, is_blinded,
    photon_detection_efficiency, ApdState, DetectorCircuit, StructuralState,
};
use apdsim_core::attacks::{self, EveStrategy};
use apdsim_core::characterization::{self, MeasurementSettings, ParamTolerances};
use apdsim_core::damage::{self, Band, DamageProfile, Exposure, SampleBaseline};
use apdsim_core::qkd::{self, Basis, BobReceiver, MaxDistance, ProtocolParams};
use apdsim_core::rng::stream;
use apdsim_core::scenario::{
    self, OutputFormat, Scenario, ScenarioConfig, ScenarioResult,
};

fn pass(number: u32, what: &str) {
    println!("ACCEPTANCE {number:02} PASS — {what}");
}

// -------------------------------------------------------------------------
// 1. Damage staging: 0.1 -> 3.0 W sweep at 0.05 W steps over 200 samples.
// -------------------------------------------------------------------------
#[test]
fn criterion_01_damage_staging() {
    let start = Instant::now();
    let profile = DamageProfile::default();
    let circuit = DetectorCircuit::standard(profile.baseline.v_br_orig);
    let powers: Vec<f64> = (2..=60).map(|i| i as f64 * 0.05).collect();
    assert!((powers[0] - 0.1).abs() < 1e-12 && (powers.last().unwrap() - 3.0).abs() < 1e-12);

    let n_samples = 200;
    let mut susceptible = 0usize;
    let mut open_circuit = 0usize;
    let mut sample_rng = stream(2024, "staging");

    for index in 0..n_samples {
        let (mut state, thresholds) = damage::draw_sample(&profile, &mut sample_rng).unwrap();
        let pristine = state.clone();
        let baseline_dcr = state.dcr_base;
        let mut exposure_rng = stream(index as u64, "staging-exposures");

        let mut v_br_before_cross = state.v_br;
        let mut b_checked = false;
        let mut c_checked = false;
        let mut e_crossed = false;

        for &power in &powers {
            let prior_v_br = state.v_br;
            damage::apply_illumination(
                &mut state,
                &thresholds,
                &Exposure::cw(power),
                &mut exposure_rng,
            );

            // Transient elevation 2-5x below 0.25 W.
            if power < 0.25 {
                assert!(
                    (2.0..=5.0).contains(&state.dcr_transient_factor),
                    "transient factor {} at {power} W",
                    state.dcr_transient_factor
                );
            }

            // Breakdown-voltage step of 2.3-2.5 V inside [0.30, 0.45] W
            // with the efficiency ratio in the measured band.
            if !b_checked && power >= thresholds.onset_b {
                if thresholds.b_susceptible {
                    let step = state.v_br - v_br_before_cross;
                    assert!(
                        (2.3..=2.5).contains(&step),
                        "v_br step {step} on susceptible sample"
                    );
                    assert!(
                        (0.30..=0.45).contains(&power),
                        "crossing power {power} outside band b"
                    );
                    let ratio = photon_detection_efficiency(&state, &circuit)
                        / (circuit.eta_nominal);
                    assert!(
                        (0.83..=0.90).contains(&ratio),
                        "efficiency ratio {ratio}"
                    );
                } else {
                    assert_eq!(state.v_br, prior_v_br);
                }
                b_checked = true;
            }
            v_br_before_cross = state.v_br;

            // Permanent dark-count division 1.7-5.4x in [0.5, 0.8] W for
            // every sample, checked before band d multiplies the rate.
            if !c_checked && power >= thresholds.onset_c {
                assert!(power < thresholds.onset_d, "grid must resolve bands c and d");
                let division = baseline_dcr / state.dcr_base;
                assert!(
                    (1.7..=5.4).contains(&division),
                    "dcr division {division}"
                );
                assert!(
                    (0.5..=0.8).contains(&power),
                    "crossing power {power} outside band c"
                );
                c_checked = true;
            }

            // Permanent blinding after band e.
            if power >= thresholds.onset_e {
                e_crossed = true;
                assert!(is_blinded(&state, &circuit) || !state.structural.is_intact());
                assert_eq!(photon_detection_efficiency(&state, &circuit), 0.0);
                assert_eq!(dark_click_probability(&state, &circuit, 0.0), 0.0);
            }
        }

        assert!(b_checked && c_checked && e_crossed);
        assert!(
            !state.structural.is_intact(),
            "3 W must structurally destroy every sample"
        );
        if thresholds.b_susceptible {
            susceptible += 1;
        }
        if state.structural == StructuralState::OpenCircuit {
            open_circuit += 1;
        }

        // The same sample through the measure-expose-measure loop: the
        // recorded traces show the dark-count dip, the alarms fire at the
        // dip, and everything photosensitive reads zero after blinding.
        // Effect magnitudes are latent sample properties, so the recorded
        // trajectory matches the state-level run above exactly.
        let mut fresh = pristine;
        let steps = characterization::damage_sweep(
            &mut fresh,
            &thresholds,
            &powers,
            &circuit,
            &MeasurementSettings::default(),
            &ParamTolerances::default(),
            &mut stream(index as u64, "staging-sweep"),
        )
        .unwrap();
        assert_eq!(steps.len(), powers.len() + 1);
        let baseline_record = &steps[0].record;
        let c_step = powers.iter().position(|&p| p >= thresholds.onset_c).unwrap() + 1;
        let dip = steps[c_step].record.dcr_measured / baseline_record.dcr_measured;
        assert!(dip < 1.0 / 1.6, "recorded dark-count dip {dip} too shallow");
        let first_alarm = steps.iter().position(|s| !s.alarms.is_empty()).unwrap();
        assert_eq!(first_alarm, c_step, "first alarm must fire at the dip");
        assert!(steps[c_step].alarms.contains(&"dcr"));
        let e_step = powers.iter().position(|&p| p >= thresholds.onset_e).unwrap() + 1;
        for step in &steps[e_step..] {
            assert_eq!(step.record.pde_measured, 0.0);
            assert_eq!(step.record.dcr_measured, 0.0);
        }
    }

    let n = n_samples as f64;
    let frac_susceptible = susceptible as f64 / n;
    let sigma_b = (0.25 / n).sqrt();
    assert!(
        (frac_susceptible - 0.5).abs() < 3.0 * sigma_b,
        "susceptible fraction {frac_susceptible}"
    );
    let frac_open = open_circuit as f64 / n;
    let sigma_f = ((1.0 / 3.0) * (2.0 / 3.0) / n).sqrt();
    assert!(
        (frac_open - 1.0 / 3.0).abs() < 3.0 * sigma_f,
        "open-circuit fraction {frac_open}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "staging sweep took {elapsed:?}, budget is 10 s"
    );
    pass(1, &format!(
        "damage staging over 200 samples (susceptible {frac_susceptible:.3}, open-circuit {frac_open:.3}, {elapsed:?})"
    ));
}

// -------------------------------------------------------------------------
// 2. Blinding threshold at exactly 37.5 uA for 15 V / 400 kOhm.
// -------------------------------------------------------------------------
#[test]
fn criterion_02_blinding_threshold() {
    let circuit = DetectorCircuit::standard(200.0);
    let mut state = ApdState::fresh(200.0, 500.0, 0.6, 4.0 * 3600.0);
    let threshold = 15.0 / 400e3; // 37.5 uA

    state.i_dark = threshold * (1.0 - 1e-12);
    assert!(!is_blinded(&state, &circuit));
    state.i_dark = threshold * (1.0 + 1e-12);
    assert!(is_blinded(&state, &circuit));

    // The spec's coarser probes agree.
    state.i_dark = 37.4e-6;
    assert!(!is_blinded(&state, &circuit));
    state.i_dark = 37.6e-6;
    assert!(is_blinded(&state, &circuit));
    pass(2, "blinding flips at 37.5 uA within 1e-12 relative");
}

// -------------------------------------------------------------------------
// 3. Efficiency ratio band over 10^4 breakdown-voltage rises.
// -------------------------------------------------------------------------
#[test]
fn criterion_03_efficiency_overvoltage_consistency() {
    use rand::Rng;
    let circuit = DetectorCircuit::standard(200.0);
    let fresh = ApdState::fresh(200.0, 500.0, 0.6, 4.0 * 3600.0);
    let eta0 = photon_detection_efficiency(&fresh, &circuit);
    let mut rng = stream(3, "delta-vbr");
    for _ in 0..10_000 {
        let delta: f64 = rng.gen_range(2.3..=2.5);
        let mut risen = fresh.clone();
        risen.v_br += delta;
        let ratio = photon_detection_efficiency(&risen, &circuit) / eta0;
        assert!((0.83..=0.90).contains(&ratio), "ratio {ratio}");
    }
    pass(3, "10^4 breakdown rises all map into the 0.83-0.90 efficiency band");
}

// -------------------------------------------------------------------------
// 4. Monte Carlo QBER vs the analytic oracle over p_sig/d in 1e2..1e4.
// -------------------------------------------------------------------------
#[test]
fn criterion_04_qber_oracle_agreement() {
    let start = Instant::now();
    let eta = 0.5;
    let loss_db = 10.0; // p_sig = 0.05
    let p_sig = eta * 10f64.powf(-loss_db / 10.0);
    let ratios = [1e2, 3.16e2, 1e3, 3.16e3, 1e4];

    for (i, ratio) in ratios.iter().enumerate() {
        let d = p_sig / ratio;
        let dcr = -(1.0 - d).ln() / 1e-9;
        let profile = DamageProfile {
            baseline: SampleBaseline {
                v_br_orig: 200.0,
                dcr_base: dcr,
                qe_linear: 0.6,
            },
            ..DamageProfile::default()
        };
        let bob = BobReceiver::draw(
            &profile,
            DetectorCircuit::standard(200.0),
            None,
            &mut stream(i as u64, "oracle-receiver"),
        )
        .unwrap();
        let params = ProtocolParams {
            n_slots: 1_000_000,
            channel_loss_db: loss_db,
            e_misalign: 0.01,
            f_ec: 1.0,
        };
        let result = qkd::run_bb84(&params, &bob, &mut qkd::NoEve, 100 + i as u64).unwrap();
        let expected = qkd::analytic_qber(p_sig, 0.01, d).unwrap();
        let sigma = (expected * (1.0 - expected) / result.n_sifted as f64).sqrt();
        assert!(
            (result.qber - expected).abs() < 3.0 * sigma,
            "ratio {ratio}: qber {} vs {expected} (sigma {sigma})",
            result.qber
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "oracle agreement took {elapsed:?}, budget is 30 s"
    );
    pass(4, &format!(
        "Monte Carlo QBER within 3 sigma of the analytic oracle over five configurations ({elapsed:?})"
    ));
}

// -------------------------------------------------------------------------
// 5. Key-rate zero crossing.
// -------------------------------------------------------------------------
#[test]
fn criterion_05_key_rate_threshold() {
    let mut lo = 0.0;
    let mut hi = 0.5;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if qkd::key_rate(mid, 1.0) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing = 0.5 * (lo + hi);
    assert!(
        (crossing - 0.1100).abs() <= 0.0005,
        "zero crossing {crossing}"
    );
    pass(5, &format!("key rate crosses zero at QBER {crossing:.5}"));
}

// -------------------------------------------------------------------------
// 6. Perfect faked-state attack after blinding.
// -------------------------------------------------------------------------

/// Seed whose blind-and-fake campaign crosses every blinding threshold.
fn blind_and_fake_seed() -> u64 {
    let config = ScenarioConfig::defaults(Scenario::BlindAndFake, 0);
    let campaign = attacks::plan_campaign(Band::E, &config.profile).unwrap();
    for seed in 0..10_000 {
        let mut c = config.clone();
        c.seed = seed;
        let strategy = EveStrategy::DamageThenFakedState {
            campaign_power: campaign,
            pulse_power: 0.75e-3,
        };
        let bob = match build_receiver(&c) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let damaged = attacks::damaged_receiver(&strategy, &bob, seed);
        if damaged
            .detectors
            .iter()
            .all(|d| apd::is_blinded(&d.state, &d.circuit))
        {
            return seed;
        }
    }
    panic!("no fully blinding seed in 10k candidates");
}

/// Reconstruct the receiver exactly as the scenario does.
fn build_receiver(config: &ScenarioConfig) -> apdsim_core::Result<BobReceiver> {
    let mut circuit = DetectorCircuit::standard(config.profile.baseline.v_br_orig);
    circuit.v_bias = config.profile.baseline.v_br_orig + config.receiver.v_ov_setpoint;
    circuit.v_ov_nominal = config.receiver.v_ov_nominal;
    circuit.eta_nominal = config.receiver.eta_nominal;
    BobReceiver::draw(
        &config.profile,
        circuit,
        config.receiver.watchdog_alarm_threshold,
        &mut stream(config.seed, "receiver"),
    )
}

#[test]
fn criterion_06_perfect_faked_state_attack() {
    let seed = blind_and_fake_seed();
    let mut config = ScenarioConfig::defaults(Scenario::BlindAndFake, seed);
    config.protocol.n_slots = 100_000;
    let output = scenario::execute(&config).unwrap();

    let (report, baseline) = match (&output.result, &output.baseline) {
        (ScenarioResult::Attack(report), Some(baseline)) => (report, baseline),
        other => panic!("unexpected scenario result {other:?}"),
    };
    assert_eq!(report.result.eve_info_fraction, 1.0, "Eve must know every sifted bit");
    assert_eq!(report.result.n_errors, 0);
    // Attack-added QBER within 3 sigma of zero.
    let sigma_q = (0.25f64 / report.result.n_sifted as f64).sqrt();
    assert!(
        report.qber_delta_vs_baseline.abs() <= 3.0 * sigma_q,
        "qber delta {}",
        report.qber_delta_vs_baseline
    );
    // Sifted-rate ratio 1/2.
    let n = baseline.n_sifted as f64;
    let sigma_ratio = 1.0 / (config.protocol.n_slots as f64).sqrt();
    assert!(n > 0.0);
    assert!(
        (report.bob_rate_ratio_vs_baseline - 0.5).abs() < 3.0 * sigma_ratio,
        "rate ratio {}",
        report.bob_rate_ratio_vs_baseline
    );
    pass(6, &format!(
        "blind-and-fake at seed {seed}: eve info 1.0, zero added errors, rate ratio {:.4}",
        report.bob_rate_ratio_vs_baseline
    ));
}

#[test]
fn criterion_06_sixteen_case_enumeration() {
    // Independent of the Monte Carlo: enumerate (alice bit, alice basis,
    // eve basis, bob basis) with both branches of Eve's uniform outcome,
    // at a deterministic setpoint and pulse power in [p_th, 2 p_th).
    let p_th = 0.5e-3;
    let pulse = 1.5 * p_th;
    let mut sifted_cases = 0;
    for alice_bit in [false, true] {
        for alice_basis in [Basis::Z, Basis::X] {
            for eve_basis in [Basis::Z, Basis::X] {
                let eve_bits: &[bool] = if eve_basis == alice_basis {
                    &[alice_bit]
                } else {
                    &[false, true]
                };
                for &eve_bit in eve_bits {
                    for bob_basis in [Basis::Z, Basis::X] {
                        let powers =
                            attacks::faked_state_slot(eve_bit, eve_basis, pulse, bob_basis);
                        let clicks: Vec<usize> = powers
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p >= p_th)
                            .map(|(i, _)| i)
                            .collect();
                        match (bob_basis == eve_basis, clicks.len()) {
                            (true, 1) => {
                                let (basis, bit) = qkd::detector_role(clicks[0]);
                                assert_eq!(basis, eve_basis);
                                assert_eq!(bit, eve_bit);
                                if bob_basis == alice_basis {
                                    sifted_cases += 1;
                                    assert_eq!(bit, alice_bit, "sifted bits carry zero error");
                                }
                            }
                            (false, 0) => {}
                            other => panic!("impossible click pattern {other:?}"),
                        }
                    }
                }
            }
        }
    }
    assert_eq!(sifted_cases, 4, "one sifted case per (bit, basis) pair");
    pass(6, "16-case enumeration: sifted bits equal Eve's and Alice's bits exactly");
}

// -------------------------------------------------------------------------
// 7. Intercept-resend baseline.
// -------------------------------------------------------------------------
#[test]
fn criterion_07_intercept_resend_baseline() {
    let mut config = ScenarioConfig::defaults(Scenario::BlindAndFake, 7);
    config.protocol.n_slots = 100_000;
    let bob = build_receiver(&config).unwrap();
    let outcome = attacks::run_attack(
        &EveStrategy::InterceptResend { fraction: 1.0 },
        &config.protocol,
        &bob,
        7,
    )
    .unwrap();
    let r = outcome.report.result;
    let sigma = (0.25 * 0.75 / r.n_sifted as f64).sqrt();
    assert!(
        (r.qber - 0.25).abs() < 3.0 * sigma,
        "intercept-resend qber {}",
        r.qber
    );
    pass(7, &format!("intercept-resend QBER {:.4} (3 sigma of 0.25)", r.qber));
}

// -------------------------------------------------------------------------
// 8. Dark-count-subtraction exploit.
// -------------------------------------------------------------------------

/// Seed whose band-c campaign crosses the threshold on all four detectors.
fn subtraction_seed() -> u64 {
    let config = ScenarioConfig::defaults(Scenario::DarkCountSubtraction, 0);
    let campaign = attacks::plan_campaign(Band::C, &config.profile).unwrap();
    for seed in 0..10_000 {
        let mut c = config.clone();
        c.seed = seed;
        if let Ok(bob) = build_receiver(&c) {
            if bob.detectors.iter().all(|d| d.thresholds.onset_c <= campaign) {
                return seed;
            }
        }
    }
    panic!("no full-campaign seed in 10k candidates");
}

#[test]
fn criterion_08_dark_count_subtraction_exploit() {
    let seed = subtraction_seed();
    let mut config = ScenarioConfig::defaults(Scenario::DarkCountSubtraction, seed);
    config.protocol.n_slots = 40_000_000;
    let output = scenario::execute(&config).unwrap();
    let (report, exploit) = match &output.result {
        ScenarioResult::Subtraction { report, exploit } => (report, exploit),
        other => panic!("unexpected scenario result {other:?}"),
    };

    // The pinned 5x division realized on all four detectors.
    assert!(
        (exploit.dark_prob_after - exploit.dark_prob_before / 5.0).abs()
            < 1e-3 * exploit.dark_prob_before,
        "dark probability not reduced 5x: {} -> {}",
        exploit.dark_prob_before,
        exploit.dark_prob_after
    );
    assert!(
        (exploit.phi_max - 0.0306).abs() < 5e-4,
        "phi_max {}",
        exploit.phi_max
    );

    // Bob's measured QBER stays at or below his stale expectation.
    let sigma_q = (exploit.q_expected * (1.0 - exploit.q_expected)
        / report.result.n_sifted as f64)
        .sqrt();
    assert!(
        report.result.qber <= exploit.q_expected + 3.0 * sigma_q,
        "measured qber {} exceeds expectation {} + 3 sigma",
        report.result.qber,
        exploit.q_expected
    );

    // Eve's take: at least 90% of the enumeration value (0.75 of the
    // intercepted sifted bits).
    let floor = 0.9 * 0.75 * exploit.phi_max;
    assert!(
        report.result.eve_info_fraction >= floor,
        "eve info {} below floor {floor}",
        report.result.eve_info_fraction
    );
    pass(8, &format!(
        "subtraction exploit at seed {seed}: phi {:.4}, measured QBER {:.5} within 3 sigma of the stale expectation {:.5}, eve info {:.5}",
        exploit.phi_max, report.result.qber, exploit.q_expected, report.result.eve_info_fraction
    ));
}

// -------------------------------------------------------------------------
// 9. Watchdog defeat.
// -------------------------------------------------------------------------

fn watchdog_seed() -> u64 {
    let config = ScenarioConfig::defaults(Scenario::WatchdogDefeat, 0);
    let e_power = attacks::plan_campaign(Band::E, &config.profile).unwrap();
    let f_power = attacks::plan_campaign(Band::F, &config.profile).unwrap();
    for seed in 0..10_000 {
        let mut c = config.clone();
        c.seed = seed;
        if let Ok(bob) = build_receiver(&c) {
            let all_blind = bob.detectors.iter().all(|d| d.thresholds.onset_e <= e_power);
            let wd_dead = bob
                .watchdog
                .as_ref()
                .map(|w| w.thresholds.onset_f <= f_power)
                .unwrap_or(false);
            if all_blind && wd_dead {
                return seed;
            }
        }
    }
    panic!("no watchdog-defeat seed in 10k candidates");
}

#[test]
fn criterion_09_watchdog_defeat() {
    let seed = watchdog_seed();
    let mut config = ScenarioConfig::defaults(Scenario::WatchdogDefeat, seed);
    config.protocol.n_slots = 100_000;
    let output = scenario::execute(&config).unwrap();
    let (defeated, control) = match &output.result {
        ScenarioResult::WatchdogDefeat { defeated, control } => (defeated, control),
        other => panic!("unexpected scenario result {other:?}"),
    };
    assert_eq!(defeated.alarms_raised, 0, "destroyed watchdog must stay silent");
    assert!(
        control.alarms_raised > 0,
        "intact watchdog must alarm under bright pulses"
    );
    pass(9, &format!(
        "watchdog defeat at seed {seed}: 0 alarms vs {} with the watchdog intact",
        control.alarms_raised
    ));
}

// -------------------------------------------------------------------------
// 10. Determinism and golden files for all six scenarios.
// -------------------------------------------------------------------------

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn golden_name(scenario: Scenario, format: OutputFormat) -> String {
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    format!("{}.{ext}", scenario.name())
}

#[test]
fn criterion_10_determinism_and_golden_files() {
    let bless = std::env::var("BLESS").is_ok();
    if bless {
        std::fs::create_dir_all(golden_dir()).unwrap();
    }
    for s in Scenario::ALL {
        let config = ScenarioConfig::defaults(s, 42);
        let first = scenario::render(&scenario::execute(&config).unwrap(), config.format).unwrap();
        let second = scenario::render(&scenario::execute(&config).unwrap(), config.format).unwrap();
        assert_eq!(first, second, "scenario {} not reproducible", s.name());

        let path = golden_dir().join(golden_name(s, config.format));
        if bless {
            std::fs::write(&path, first.as_bytes()).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| {
            panic!(
                "golden file missing: {} (regenerate with BLESS=1)",
                path.display()
            )
        });
        assert_eq!(
            first,
            expected,
            "scenario {} deviates from its golden file",
            s.name()
        );
    }
    pass(10, "all six scenarios bit-identical across runs and equal to their golden files");
}

// -------------------------------------------------------------------------
// 11. Max-distance monotonicity and regression constant.
// -------------------------------------------------------------------------
#[test]
fn criterion_11_max_distance_monotonicity() {
    use rand::Rng;
    let circuit = DetectorCircuit::standard(200.0);
    let state = ApdState::fresh(200.0, 500.0, 0.6, 4.0 * 3600.0);
    let base = match qkd::max_distance(&state, &circuit, 0.01, 0.2).unwrap() {
        MaxDistance::Km(km) => km,
        MaxDistance::Unbounded => panic!("dark counts must bound the distance"),
    };
    // Regression constant from the bisection oracle.
    assert!((base - 255.4).abs() <= 0.1, "regression distance {base}");

    let mut rng = stream(11, "divisions");
    let mut divisions = vec![1.7, 5.4];
    divisions.extend((0..20).map(|_| rng.gen_range(1.7..=5.4)));
    for div in divisions {
        let mut improved = state.clone();
        improved.dcr_base /= div;
        match qkd::max_distance(&improved, &circuit, 0.01, 0.2).unwrap() {
            MaxDistance::Km(km) => assert!(
                km > base,
                "division {div} must strictly extend reach: {km} vs {base}"
            ),
            MaxDistance::Unbounded => panic!("reach must stay bounded"),
        }
    }
    pass(11, &format!(
        "max distance {base:.1} km, strictly increasing under dark-count division"
    ));
}

// -------------------------------------------------------------------------
// Scenario-level spot checks shared by several criteria.
// -------------------------------------------------------------------------
#[test]
fn efficiency_mismatch_scenario_reports_the_band() {
    // Not numbered in the gate, but the mismatch scenario underpins
    // criterion 3's physics at receiver level; exercised here end to end.
    let mut seed = 0;
    loop {
        let config = ScenarioConfig::defaults(Scenario::EfficiencyMismatch, seed);
        let output = scenario::execute(&config).unwrap();
        match &output.result {
            ScenarioResult::Mismatch(m) if m.effect_fired => {
                assert!(
                    (0.833..=0.847).contains(&m.mismatch_ratio),
                    "ratio {}",
                    m.mismatch_ratio
                );
                assert!(m.efficiencies.iter().all(|&e| e > 0.0));
                break;
            }
            ScenarioResult::Mismatch(m) => {
                assert_eq!(m.mismatch_ratio, 1.0);
                seed += 1;
            }
            other => panic!("unexpected scenario result {other:?}"),
        }
    }
}
