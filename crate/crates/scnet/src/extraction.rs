//! Simulation-based measurement of the port resistance matrix, with the
//! supply connected and filter capacitors in place.
//!
//! Protocol: one steady-state run with all ports unloaded fixes the target
//! voltages, then one run per port with a test current at that port fills a
//! matrix column from the measured droops. N+1 steady-state simulations in
//! total; columns are independent and may run in parallel elsewhere.

use crate::analytical::RMatrix;
use crate::error::{Error, Result};
use crate::ladder::SwitchedNetwork;
use crate::mna::Load;
use crate::transient::{InitialState, Simulator, StepPolicy};

use nalgebra::{DMatrix, DVector};

/// Measurement parameters.
#[derive(Debug, Clone)]
pub struct ExtractionOptions {
    /// Test current drawn out of the probed port, amperes. Positive values
    /// droop the port; pushing current in (negative) raises it, matching the
    /// measurement relation `v_out = v_tr - R * i_drawn`.
    pub i_test: f64,
    /// Settling tolerance on per-period output means, volts.
    pub settle_tolerance: f64,
    /// Averaging window after settling, in switching periods.
    pub window_periods: usize,
    /// Give up if settling takes longer than this.
    pub max_periods: usize,
    pub policy: StepPolicy,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            i_test: 10e-3,
            settle_tolerance: 1e-6,
            window_periods: 8,
            max_periods: 20_000,
            policy: StepPolicy::default(),
        }
    }
}

/// Provenance of one extracted matrix.
#[derive(Debug, Clone)]
pub struct ExtractionMeta {
    pub f_sw: f64,
    pub mode: String,
    pub i_test: f64,
    pub window_periods: usize,
    pub settle_tolerance: f64,
    /// Periods each of the N+1 runs took to settle.
    pub settle_periods: Vec<usize>,
    pub warnings: Vec<String>,
}

impl ExtractionMeta {
    /// Flat key = value sidecar describing how the matrix was measured.
    pub fn to_sidecar(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("f_sw = {}\n", self.f_sw));
        s.push_str(&format!("mode = {}\n", self.mode));
        s.push_str(&format!("i_test = {}\n", self.i_test));
        s.push_str(&format!("window_periods = {}\n", self.window_periods));
        s.push_str(&format!("settle_tolerance = {}\n", self.settle_tolerance));
        let periods: Vec<String> = self.settle_periods.iter().map(|p| p.to_string()).collect();
        s.push_str(&format!("settle_periods = [{}]\n", periods.join(", ")));
        for w in &self.warnings {
            s.push_str(&format!("warning = {w}\n"));
        }
        s
    }
}

/// An extracted matrix together with its measurement provenance.
#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub matrix: RMatrix,
    pub meta: ExtractionMeta,
}

fn settled_window_means(
    net: &SwitchedNetwork,
    loads: &[Load],
    opts: &ExtractionOptions,
) -> Result<(Vec<f64>, usize)> {
    let mut sim = Simulator::new(net, loads, opts.policy, InitialState::Precharged)?;
    let periods = sim.settle(opts.settle_tolerance, opts.max_periods)?;
    let outputs = net.outputs().to_vec();
    let mut acc = vec![0.0; outputs.len()];
    for _ in 0..opts.window_periods {
        let means = sim.run_period_with_means(&outputs)?;
        for (a, m) in acc.iter_mut().zip(&means) {
            *a += m;
        }
    }
    for a in acc.iter_mut() {
        *a /= opts.window_periods as f64;
    }
    Ok((acc, periods))
}

/// Measure the no-load target voltage of every port: steady state with all
/// port currents zero, averaged over the window.
pub fn extract_targets(net: &SwitchedNetwork, opts: &ExtractionOptions) -> Result<Vec<f64>> {
    let loads = vec![Load::Open; net.n_stages()];
    Ok(settled_window_means(net, &loads, opts)?.0)
}

/// Measure column `j` (0-based) of the resistance matrix by drawing the test
/// current at port `j` alone: `R[i][j] = (v_tr[i] - v_out[i]) / i_test`.
/// Returns the column and any warnings (ports pulled below 10% of target are
/// flagged as out of normal operation).
pub fn extract_r_column(
    net: &SwitchedNetwork,
    j: usize,
    v_tr: &[f64],
    opts: &ExtractionOptions,
) -> Result<(Vec<f64>, Vec<String>, usize)> {
    let n = net.n_stages();
    if j >= n {
        return Err(Error::InvalidInput(format!("no port {j} in an {n}-port network")));
    }
    if opts.i_test == 0.0 {
        return Err(Error::InvalidInput("i_test must be non-zero".into()));
    }
    let mut loads = vec![Load::Open; n];
    loads[j] = Load::CurrentSink(opts.i_test);
    let (v_out, periods) = settled_window_means(net, &loads, opts)?;
    let mut warnings = Vec::new();
    for (i, (&v, &target)) in v_out.iter().zip(v_tr).enumerate() {
        if v < 0.1 * target {
            warnings.push(format!(
                "port {} collapsed to {v:.4} V (< 10% of target {target:.4} V) while \
                 probing port {}; entry flagged as outside normal operation",
                i + 1,
                j + 1
            ));
        }
    }
    let column = v_out
        .iter()
        .zip(v_tr)
        .map(|(&v, &target)| (target - v) / opts.i_test)
        .collect();
    Ok((column, warnings, periods))
}

/// Measure the whole matrix with current-sink probing: the target run plus
/// one column run per port.
pub fn extract_r_matrix(net: &SwitchedNetwork, opts: &ExtractionOptions) -> Result<ExtractionOutcome> {
    let n = net.n_stages();
    let loads = vec![Load::Open; n];
    let (v_tr, target_periods) = settled_window_means(net, &loads, opts)?;
    let mut settle_periods = vec![target_periods];
    let mut warnings = Vec::new();
    let mut values = DMatrix::zeros(n, n);
    for j in 0..n {
        let (column, mut w, periods) = extract_r_column(net, j, &v_tr, opts)?;
        warnings.append(&mut w);
        settle_periods.push(periods);
        for i in 0..n {
            values[(i, j)] = column[i];
        }
    }
    Ok(ExtractionOutcome {
        matrix: RMatrix {
            values,
            v_tr: DVector::from_vec(v_tr),
        },
        meta: ExtractionMeta {
            f_sw: 1.0 / net.schedule.period,
            mode: "current".to_string(),
            i_test: opts.i_test,
            window_periods: opts.window_periods,
            settle_tolerance: opts.settle_tolerance,
            settle_periods,
            warnings,
        },
    })
}

/// Measure the matrix with resistors standing in for the current sources:
/// `r_open` emulates zero port current, `r_fixed` sets the test current,
/// and the measured port current `v_out / r_fixed` enters the droop relation.
pub fn extract_with_resistors(
    net: &SwitchedNetwork,
    r_fixed: f64,
    r_open: f64,
    opts: &ExtractionOptions,
) -> Result<ExtractionOutcome> {
    if !(r_fixed > 0.0) {
        return Err(Error::InvalidInput(format!("r_fixed must be positive, got {r_fixed}")));
    }
    if r_open < 1e4 * r_fixed {
        return Err(Error::InvalidInput(format!(
            "r_open must be at least 1e4 * r_fixed ({})",
            1e4 * r_fixed
        )));
    }
    let n = net.n_stages();
    let idle = vec![Load::Resistor(r_open); n];
    let (v_tr, target_periods) = settled_window_means(net, &idle, opts)?;
    let mut settle_periods = vec![target_periods];
    let mut warnings = Vec::new();
    let mut values = DMatrix::zeros(n, n);
    let mut i_tests = Vec::with_capacity(n);
    for j in 0..n {
        let mut loads = idle.clone();
        loads[j] = Load::Resistor(r_fixed);
        let (v_out, periods) = settled_window_means(net, &loads, opts)?;
        settle_periods.push(periods);
        let i_drawn = v_out[j] / r_fixed;
        i_tests.push(i_drawn);
        for (i, (&v, &target)) in v_out.iter().zip(&v_tr).enumerate() {
            if v < 0.1 * target {
                warnings.push(format!(
                    "port {} collapsed below 10% of target while loading port {}",
                    i + 1,
                    j + 1
                ));
            }
            values[(i, j)] = (target - v) / i_drawn;
        }
    }
    let mean_i_test = i_tests.iter().sum::<f64>() / n as f64;
    Ok(ExtractionOutcome {
        matrix: RMatrix {
            values,
            v_tr: DVector::from_vec(v_tr),
        },
        meta: ExtractionMeta {
            f_sw: 1.0 / net.schedule.period,
            mode: format!("resistor(r_fixed={r_fixed}, r_open={r_open})"),
            i_test: mean_i_test,
            window_periods: opts.window_periods,
            settle_tolerance: opts.settle_tolerance,
            settle_periods,
            warnings,
        },
    })
}
