//! Multi-port resistance modeling of multi-stage 2:1 switched-capacitor
//! converter ladders, a fixed-step implicit transient simulator for the
//! switched network, simulation-based extraction of the port resistance
//! matrix, and measurement of the load-coupling communication channel the
//! shared supply rail creates between stages.
//!
//! The crate is organized along the pipeline:
//!
//! - [`spec`] / [`ladder`]: converter parameterization and the explicit
//!   per-phase switched network.
//! - [`mna`] / [`transient`]: nodal assembly and backward-difference
//!   integration, periodic averaging, steady-state detection.
//! - [`analytical`]: fast- and slow-limit port matrices from linear solves,
//!   plus the three-stage closed forms used as golden references.
//! - [`extraction`]: the N+1-measurement protocol that recovers the matrix
//!   from transient runs.
//! - [`covert`]: bit encoding by load toggling, excursion measurement,
//!   decoding, and the frequency / bit-rate / off-chip-resistance sweeps.
//! - [`config`] / [`units`]: flat key = value config files and SI-suffixed
//!   numbers shared by the CLI.

pub mod analytical;
pub mod config;
pub mod covert;
pub mod error;
pub mod extraction;
pub mod ladder;
pub mod mna;
pub mod spec;
pub mod transient;
pub mod units;

pub use analytical::{
    average_port_currents, fsl_closed_form_3stage, fsl_currents, r_matrix, r_matrix_combined,
    ssl_closed_form, ssl_currents, target_voltages, y_matrix, AdmittanceMatrix, PhaseCurrents,
    RMatrix, Regime,
};
pub use covert::{
    decode_levels, encode_schedule, predict_delta_v, sweep_bit_rate, sweep_offchip,
    sweep_switching_frequency, transmit, BitRateSweep, ChannelConfig, ChannelReport, LoadSegment,
    OffchipSweep, ProbeKind, SweepResult, TransmitOptions, TransmitOutcome,
};
pub use error::{Error, Result, SpecViolation};
pub use extraction::{
    extract_r_column, extract_r_matrix, extract_targets, extract_with_resistors, ExtractionMeta,
    ExtractionOptions, ExtractionOutcome,
};
pub use ladder::{build_ladder, Activation, Branch, BranchKind, NodeId, SwitchedNetwork, GROUND};
pub use mna::{assemble_phase_system, Load, PhaseSystem, PhaseTopology};
pub use spec::ConverterSpec;
pub use transient::{
    detect_steady_state, periodic_average, run_transient, run_transient_probed, InitialState,
    SimState, Simulator, StepPolicy, TransientTrace,
};
