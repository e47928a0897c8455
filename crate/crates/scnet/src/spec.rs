//! Converter parameterization and validation.

use crate::error::SpecViolation;

/// Default fraction of the switching period spent with all switches open at
/// each of the two phase transitions.
pub const DEFAULT_DEAD_TIME_FRACTION: f64 = 0.02;

/// Full parameterization of an N-stage 2:1 switched-capacitor ladder.
///
/// Stage `i` (0-based) taps the supply rail after `i + 1` rail segments and
/// reaches its switch network through a spur of the same value, so deeper
/// stages see longer shared supply paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterSpec {
    /// Number of 2:1 stages (= output ports).
    pub n_stages: usize,
    /// Input supply, volts.
    pub v_in: f64,
    /// On-resistance of every switch, ohms.
    pub r_switch: f64,
    /// Flying capacitance per stage, farads.
    pub c_fly: Vec<f64>,
    /// Filter capacitance per output, farads.
    pub c_out: Vec<f64>,
    /// Parasitic rail-segment resistance per stage, ohms.
    pub r_par: Vec<f64>,
    /// Series resistance between the ideal supply and the rail, ohms
    /// (0 = directly driven rail).
    pub r_offchip: f64,
    /// Switching frequency, hertz.
    pub f_sw: f64,
    /// Dead time per phase transition as a fraction of the period.
    pub dead_time_fraction: f64,
}

impl ConverterSpec {
    /// Spec with identical per-stage values, no off-chip resistance and the
    /// default dead time.
    pub fn symmetric(
        n_stages: usize,
        v_in: f64,
        r_switch: f64,
        c_fly: f64,
        c_out: f64,
        r_par: f64,
        f_sw: f64,
    ) -> Self {
        ConverterSpec {
            n_stages,
            v_in,
            r_switch,
            c_fly: vec![c_fly; n_stages],
            c_out: vec![c_out; n_stages],
            r_par: vec![r_par; n_stages],
            r_offchip: 0.0,
            f_sw,
            dead_time_fraction: DEFAULT_DEAD_TIME_FRACTION,
        }
    }

    /// Switching period in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.f_sw
    }

    /// Check every invariant; all violations are reported, none fixed.
    pub fn validate(&self) -> Result<(), Vec<SpecViolation>> {
        let mut v = Vec::new();
        let bad = |field, message: String| SpecViolation { field, message };

        if self.n_stages == 0 {
            v.push(bad("n_stages", "must be at least 1".into()));
        }
        if !(self.v_in.is_finite() && self.v_in > 0.0) {
            v.push(bad("v_in", format!("must be a positive voltage, got {}", self.v_in)));
        }
        if !(self.r_switch.is_finite() && self.r_switch >= 0.0) {
            v.push(bad("r_switch", format!("resistance must be >= 0, got {}", self.r_switch)));
        }
        if !(self.r_offchip.is_finite() && self.r_offchip >= 0.0) {
            v.push(bad("r_offchip", format!("resistance must be >= 0, got {}", self.r_offchip)));
        }
        if !(self.f_sw.is_finite() && self.f_sw > 0.0) {
            v.push(bad("f_sw", format!("switching frequency must be > 0, got {}", self.f_sw)));
        }
        if !(self.dead_time_fraction.is_finite()
            && (0.0..0.5).contains(&self.dead_time_fraction))
        {
            v.push(bad(
                "dead_time_fraction",
                format!("must lie in [0, 0.5), got {}", self.dead_time_fraction),
            ));
        }
        if self.c_fly.len() != self.n_stages {
            v.push(bad(
                "c_fly",
                format!("needs {} entries, got {}", self.n_stages, self.c_fly.len()),
            ));
        }
        if self.c_out.len() != self.n_stages {
            v.push(bad(
                "c_out",
                format!("needs {} entries, got {}", self.n_stages, self.c_out.len()),
            ));
        }
        if self.r_par.len() != self.n_stages {
            v.push(bad(
                "r_par",
                format!(
                    "needs one rail segment per stage ({}), got {}",
                    self.n_stages,
                    self.r_par.len()
                ),
            ));
        }
        for (name, list) in [("c_fly", &self.c_fly), ("c_out", &self.c_out)] {
            for (i, &c) in list.iter().enumerate() {
                if !(c.is_finite() && c > 0.0) {
                    v.push(bad(name, format!("capacitance must be positive, got {c} at index {i}")));
                }
            }
        }
        for (i, &r) in self.r_par.iter().enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                v.push(bad("r_par", format!("resistance must be >= 0, got {r} at index {i}")));
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Case-study parameters used throughout the integration tests:
    /// 3 stages, 1 V in, 0.1 Ω switches, 1 µF / 10 µF capacitors,
    /// 10 mΩ rail segments, 10 MHz.
    pub fn case_study_spec() -> ConverterSpec {
        ConverterSpec::symmetric(3, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6)
    }

    #[test]
    fn case_study_values_are_valid() {
        assert!(case_study_spec().validate().is_ok());
    }

    #[test]
    fn zero_capacitance_is_reported() {
        let mut spec = case_study_spec();
        spec.c_fly[0] = 0.0;
        let errs = spec.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.field == "c_fly" && e.message.contains("positive")));
    }

    #[test]
    fn oversized_dead_time_is_reported() {
        let mut spec = case_study_spec();
        spec.dead_time_fraction = 0.6;
        let errs = spec.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.field == "dead_time_fraction"));
    }

    #[test]
    fn all_violations_are_collected() {
        let mut spec = case_study_spec();
        spec.c_fly[1] = -1.0;
        spec.f_sw = 0.0;
        spec.r_par.pop();
        let errs = spec.validate().unwrap_err();
        assert!(errs.len() >= 3);
    }
}
