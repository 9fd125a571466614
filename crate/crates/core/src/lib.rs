//! Monte Carlo simulator of a BB84 quantum key distribution link whose
//! receiver detectors can be permanently altered by an eavesdropper's
//! high-power laser.
//!
//! The crate is organized around the lifecycle of an attack:
//!
//! - [`apd`] models a single avalanche photodiode inside a passively
//!   quenched single-photon detector circuit, in every operating regime
//!   (Geiger mode, blinded, destroyed).
//! - [`damage`] is the laser-damage state machine: illumination exposures
//!   ratchet a detector through staged effects (transient dark-count rise,
//!   breakdown-voltage shift, dark-count reduction, dark-count blowup,
//!   permanent blinding, structural destruction).
//! - [`characterization`] replicates an automated measure-expose-measure
//!   loop with realistic sampling noise and operator alarms.
//! - [`qkd`] is the BB84 protocol engine: sifting, QBER, secret key rate,
//!   and the dark-count-limited maximum distance.
//! - [`attacks`] is Eve's strategy library: damage campaigns plus the
//!   exploit scenarios built on them (faked states after blinding,
//!   dark-count-subtraction abuse, efficiency mismatch, watchdog defeat).
//! - [`scenario`] is the config-driven scenario runner behind the
//!   `simulate` command-line tool.
//!
//! Everything is deterministic given a single 64-bit seed; module RNG
//! streams are derived by labeled sub-seeding (see [`rng`]).

pub mod apd;
pub mod attacks;
pub mod characterization;
pub mod damage;
pub mod error;
pub mod qkd;
pub mod rng;
pub mod scenario;

pub use apd::{ApdState, ControlCurve, DetectorCircuit, StructuralState};
pub use attacks::{AttackReport, EveStrategy};
pub use characterization::{AlarmPolicy, CharacterizationRecord, MeasurementSettings};
pub use damage::{Band, DamageProfile, Exposure, ExposureRecord, SampleThresholds};
pub use error::Error;
pub use qkd::{Basis, BobReceiver, MaxDistance, ProtocolParams, SimResult};
pub use scenario::{Scenario, ScenarioConfig};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
