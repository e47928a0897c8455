//! Closed-form and linear-solve computation of the multi-port resistance
//! matrix in the two limiting switching regimes.
//!
//! In the fast limit the flying caps act as constant sources and the per-port
//! loop currents follow from a linear system; in the slow limit the caps
//! fully equilibrate each phase and ports decouple.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spec::ConverterSpec;

/// Switching regime for the analytical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Fast switching limit: resistances dominate.
    Fsl,
    /// Slow switching limit: charge transfer dominates, ports decouple.
    Ssl,
}

/// Constant per-stage loop currents for the two conduction phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCurrents {
    /// Loop current while each flying cap charges from the rail, amperes.
    pub charge: Vec<f64>,
    /// Loop current while each flying cap discharges into its port.
    pub discharge: Vec<f64>,
}

/// Solution of the fast-limit port-excitation system.
#[derive(Debug, Clone)]
pub struct FastLimitSolution {
    pub currents: PhaseCurrents,
    /// Flying-cap voltage per stage, volts.
    pub cap_voltages: Vec<f64>,
}

/// Port admittance matrix, siemens.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub values: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn order(&self) -> usize {
        self.values.nrows()
    }
}

/// Port resistance matrix in ohms with its companion no-load target voltages.
#[derive(Debug, Clone)]
pub struct RMatrix {
    pub values: DMatrix<f64>,
    /// No-load output voltage per port, volts.
    pub v_tr: DVector<f64>,
}

impl RMatrix {
    pub fn order(&self) -> usize {
        self.values.nrows()
    }

    /// Largest |R_ij - R_ji| over all pairs.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.order() {
            for j in (i + 1)..self.order() {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).abs());
            }
        }
        worst
    }

    /// CSV export: N rows of N entries, then a `v_tr` row, full precision.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let n = self.order();
        for i in 0..n {
            for j in 0..n {
                if j > 0 {
                    write!(w, ",")?;
                }
                write!(w, "{}", self.values[(i, j)])?;
            }
            writeln!(w)?;
        }
        for j in 0..n {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", self.v_tr[j])?;
        }
        writeln!(w)?;
        Ok(())
    }
}

/// Rail-sharing coefficient matrix: entry (i, k) is the total resistance of
/// rail pieces that lie on stage i's supply loop and carry stage k's charge
/// current. Segment m is common to stages m..N; each stage adds its own spur.
fn rail_coupling(spec: &ConverterSpec) -> DMatrix<f64> {
    let n = spec.n_stages;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let shared: f64 = spec.r_par[..=i.min(k)].iter().sum();
            a[(i, k)] = spec.r_offchip + shared + if i == k { spec.r_par[i] } else { 0.0 };
        }
    }
    a
}

/// Solve the fast-limit system for given port excitation voltages: one loop
/// equation per stage and phase plus per-stage charge balance, with the
/// supply short-circuited. 3N unknowns: charge currents, discharge currents,
/// cap voltages.
pub fn fsl_currents(spec: &ConverterSpec, v_ports: &[f64]) -> Result<FastLimitSolution> {
    spec.validate().map_err(Error::InvalidSpec)?;
    let n = spec.n_stages;
    if v_ports.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} port voltages, got {}",
            v_ports.len()
        )));
    }
    let a_rail = rail_coupling(spec);
    let r = spec.r_switch;
    let dim = 3 * n;
    let mut m = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        // Charge-phase loop: 2 r i_i + sum_k A[i][k] i_k - v_cap_i = v_port_i.
        m[(i, i)] += 2.0 * r;
        for k in 0..n {
            m[(i, k)] += a_rail[(i, k)];
        }
        m[(i, 2 * n + i)] = -1.0;
        rhs[i] = v_ports[i];
        // Discharge-phase loop: v_cap_i + 2 r i'_i = v_port_i.
        m[(n + i, 2 * n + i)] = 1.0;
        m[(n + i, n + i)] = 2.0 * r;
        rhs[n + i] = v_ports[i];
        // Charge balance over the period: i_i = i'_i.
        m[(2 * n + i, i)] = 1.0;
        m[(2 * n + i, n + i)] = -1.0;
    }
    let lu = m.lu();
    let solution = lu.solve(&rhs).ok_or_else(|| {
        Error::Singular(
            "fast-limit loop system is singular (all loop resistances zero?)".to_string(),
        )
    })?;
    let charge = solution.as_slice()[..n].to_vec();
    let discharge = solution.as_slice()[n..2 * n].to_vec();
    let cap_voltages = solution.as_slice()[2 * n..].to_vec();
    if charge.iter().chain(&discharge).any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "fast-limit loop system is numerically singular".to_string(),
        ));
    }
    Ok(FastLimitSolution {
        currents: PhaseCurrents { charge, discharge },
        cap_voltages,
    })
}

/// Slow-limit phase currents for given port excitations: each flying cap
/// swings rail-to-port, so both half-period average currents are 4 C V f.
pub fn ssl_currents(spec: &ConverterSpec, v_ports: &[f64]) -> Result<PhaseCurrents> {
    spec.validate().map_err(Error::InvalidSpec)?;
    if v_ports.len() != spec.n_stages {
        return Err(Error::InvalidInput(format!(
            "expected {} port voltages, got {}",
            spec.n_stages,
            v_ports.len()
        )));
    }
    let currents: Vec<f64> = spec
        .c_fly
        .iter()
        .zip(v_ports)
        .map(|(&c, &v)| 4.0 * c * v * spec.f_sw)
        .collect();
    Ok(PhaseCurrents {
        charge: currents.clone(),
        discharge: currents,
    })
}

/// Average port current from constant phase currents: each port receives its
/// loop current during both half periods, counted negative when the port
/// sources the charge.
pub fn average_port_currents(currents: &PhaseCurrents) -> Vec<f64> {
    currents
        .charge
        .iter()
        .zip(&currents.discharge)
        .map(|(&i1, &i2)| -(i1 + i2) / 2.0)
        .collect()
}

/// Port admittance matrix: column j is the port-current response to a unit
/// excitation at port j with all other ports held at zero.
pub fn y_matrix(spec: &ConverterSpec, regime: Regime) -> Result<AdmittanceMatrix> {
    spec.validate().map_err(Error::InvalidSpec)?;
    let n = spec.n_stages;
    let mut y = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut excitation = vec![0.0; n];
        excitation[j] = 1.0;
        let currents = match regime {
            Regime::Fsl => fsl_currents(spec, &excitation)?.currents,
            Regime::Ssl => ssl_currents(spec, &excitation)?,
        };
        let i_out = average_port_currents(&currents);
        for i in 0..n {
            y[(i, j)] = -i_out[i];
        }
    }
    Ok(AdmittanceMatrix { values: y })
}

/// Port resistance matrix: inverse of the admittance matrix, with the
/// no-load target voltages attached.
pub fn r_matrix(spec: &ConverterSpec, regime: Regime) -> Result<RMatrix> {
    let y = y_matrix(spec, regime)?;
    let values = y
        .values
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("admittance matrix is not invertible".to_string()))?;
    Ok(RMatrix {
        values,
        v_tr: DVector::from_vec(target_voltages(spec)),
    })
}

/// Convenience finite-frequency estimate: fast-limit matrix plus the
/// slow-limit diagonal. Approximate by construction; the transient engine is
/// the reference between the two limits.
pub fn r_matrix_combined(spec: &ConverterSpec) -> Result<RMatrix> {
    let fsl = r_matrix(spec, Regime::Fsl)?;
    let ssl = r_matrix(spec, Regime::Ssl)?;
    Ok(RMatrix {
        values: fsl.values + ssl.values,
        v_tr: fsl.v_tr,
    })
}

/// No-load output voltage per port: half the input for a 2:1 stage.
pub fn target_voltages(spec: &ConverterSpec) -> Vec<f64> {
    vec![spec.v_in / 2.0; spec.n_stages]
}

/// Golden closed form for the three-stage equal-segment ladder in the fast
/// limit, with the uniform off-chip contribution added to every entry.
pub fn fsl_closed_form_3stage(r_switch: f64, r_par: f64, r_offchip: f64) -> DMatrix<f64> {
    let r = r_switch;
    let p = r_par;
    let o = r_offchip / 2.0;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            p + 2.0 * r + o,
            p / 2.0 + o,
            p / 2.0 + o,
            p / 2.0 + o,
            1.5 * p + 2.0 * r + o,
            p + o,
            p / 2.0 + o,
            p + o,
            2.0 * p + 2.0 * r + o,
        ],
    )
}

/// Golden closed form for the slow limit: decoupled ports at 1/(4 C_i f).
pub fn ssl_closed_form(c_fly: &[f64], f_sw: f64) -> DMatrix<f64> {
    let n = c_fly.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / (4.0 * c_fly[i] * f_sw)
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn case_study_spec() -> ConverterSpec {
        ConverterSpec::symmetric(3, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6)
    }

    #[test]
    fn fast_limit_matches_three_stage_closed_form() {
        let r = r_matrix(&case_study_spec(), Regime::Fsl).unwrap();
        let golden = fsl_closed_form_3stage(0.1, 0.01, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(r.values[(i, j)], golden[(i, j)], max_relative = 1e-12);
            }
        }
        // Spot values in milliohms.
        assert_relative_eq!(r.values[(0, 0)], 0.210, max_relative = 1e-12);
        assert_relative_eq!(r.values[(1, 2)], 0.010, max_relative = 1e-12);
    }

    #[test]
    fn slow_limit_is_decoupled_at_quarter_charge_rate() {
        let r = r_matrix(&case_study_spec(), Regime::Ssl).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_relative_eq!(r.values[(i, j)], 0.025, max_relative = 1e-12);
                } else {
                    assert_eq!(r.values[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn offchip_resistance_shifts_every_entry_by_half() {
        let base = r_matrix(&case_study_spec(), Regime::Fsl).unwrap();
        let mut spec = case_study_spec();
        spec.r_offchip = 0.1;
        let shifted = r_matrix(&spec, Regime::Fsl).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    shifted.values[(i, j)] - base.values[(i, j)],
                    0.05,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn single_stage_fast_limit_is_segment_plus_two_switches() {
        let spec = ConverterSpec::symmetric(1, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6);
        let r = r_matrix(&spec, Regime::Fsl).unwrap();
        assert_relative_eq!(r.values[(0, 0)], 0.01 + 0.2, max_relative = 1e-12);
        // The loop current consistent with that resistance.
        let sol = fsl_currents(&spec, &[1.0]).unwrap();
        assert_relative_eq!(
            sol.currents.charge[0],
            1.0 / (2.0 * 0.1 + 0.01),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            sol.currents.charge[0],
            sol.currents.discharge[0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_excitation_gives_zero_currents() {
        let sol = fsl_currents(&case_study_spec(), &[0.0, 0.0, 0.0]).unwrap();
        assert!(sol.currents.charge.iter().all(|&i| i == 0.0));
        assert!(sol.currents.discharge.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn all_resistances_zero_is_reported_singular() {
        let mut spec = case_study_spec();
        spec.r_switch = 0.0;
        spec.r_par = vec![0.0; 3];
        match fsl_currents(&spec, &[1.0, 0.0, 0.0]) {
            Err(Error::Singular(msg)) => assert!(msg.contains("resistances zero")),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn average_port_current_of_unit_phase_currents_is_minus_one() {
        let currents = PhaseCurrents {
            charge: vec![1.0],
            discharge: vec![1.0],
        };
        assert_eq!(average_port_currents(&currents), vec![-1.0]);
        let zero = PhaseCurrents {
            charge: vec![0.0],
            discharge: vec![0.0],
        };
        assert_eq!(average_port_currents(&zero), vec![0.0]);
    }

    #[test]
    fn slow_limit_port_current_is_quadruple_charge_rate() {
        // One stage driven at V: both phase currents 4 C V f, port sees -4 C V f.
        let spec = ConverterSpec::symmetric(1, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6);
        let currents = ssl_currents(&spec, &[1.0]).unwrap();
        let i_out = average_port_currents(&currents);
        assert_relative_eq!(i_out[0], -4.0 * 1e-6 * 1e7, max_relative = 1e-12);
    }

    #[test]
    fn admittance_columns_scale_linearly() {
        let spec = case_study_spec();
        let base = fsl_currents(&spec, &[1.0, 0.0, 0.0]).unwrap();
        let scaled = fsl_currents(&spec, &[2.5, 0.0, 0.0]).unwrap();
        for (a, b) in base.currents.charge.iter().zip(&scaled.currents.charge) {
            assert_relative_eq!(b / a, 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn slow_limit_admittance_is_diagonal_for_any_order() {
        let spec = ConverterSpec::symmetric(5, 1.0, 0.2, 2e-6, 10e-6, 0.02, 1e6);
        let y = y_matrix(&spec, Regime::Ssl).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    assert_relative_eq!(y.values[(i, j)], 4.0 * 2e-6 * 1e6, max_relative = 1e-12);
                } else {
                    assert_eq!(y.values[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn fast_limit_matrix_is_symmetric_and_coupling_ignores_switches() {
        let mut spec = case_study_spec();
        let r1 = r_matrix(&spec, Regime::Fsl).unwrap();
        assert!(r1.asymmetry() <= 1e-12 * 0.22);
        spec.r_switch *= 3.0;
        let r2 = r_matrix(&spec, Regime::Fsl).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_relative_eq!(
                        r1.values[(i, j)],
                        r2.values[(i, j)],
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn target_voltages_halve_the_input() {
        let mut spec = case_study_spec();
        assert_eq!(target_voltages(&spec), vec![0.5, 0.5, 0.5]);
        spec.v_in = 3.3;
        assert_eq!(target_voltages(&spec), vec![1.65, 1.65, 1.65]);
    }

    #[test]
    fn combined_estimate_adds_slow_diagonal() {
        let spec = case_study_spec();
        let combined = r_matrix_combined(&spec).unwrap();
        let fsl = r_matrix(&spec, Regime::Fsl).unwrap();
        for i in 0..3 {
            assert_relative_eq!(
                combined.values[(i, i)] - fsl.values[(i, i)],
                0.025,
                max_relative = 1e-12
            );
            for j in 0..3 {
                if i != j {
                    assert_relative_eq!(
                        combined.values[(i, j)],
                        fsl.values[(i, j)],
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn rmatrix_csv_round_trips_visually() {
        let r = r_matrix(&case_study_spec(), Regime::Fsl).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().starts_with("0.21"));
        assert!(text.lines().last().unwrap().starts_with("0.5,0.5,0.5"));
    }
}
