//! Flat `key = value` config files with `[section]` headers.
//!
//! Values are SI-suffixed numbers, bracketed or bare comma lists, bit
//! strings, or words. Unknown keys are rejected so typos surface early.

use std::collections::BTreeMap;

use crate::covert::{ChannelConfig, ProbeKind};
use crate::error::{Error, Result};
use crate::spec::{ConverterSpec, DEFAULT_DEAD_TIME_FRACTION};
use crate::units::{format_si, parse_si};

/// Parsed config file: per-section key -> (raw value, line number).
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line: Some(line),
        message: message.into(),
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line_no, "unterminated [section] header"))?
                    .trim();
                if name.is_empty() {
                    return Err(config_err(line_no, "empty section name"));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(config_err(line_no, "empty key"));
            }
            let entry = sections.entry(current.clone()).or_default();
            if entry
                .insert(key.to_string(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(config_err(line_no, format!("duplicate key '{key}'")));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((text, line)) => parse_si(text)
                .map(Some)
                .map_err(|e| config_err(*line, format!("{key}: {e}"))),
        }
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((text, line)) => {
                let v = parse_si(text).map_err(|e| config_err(*line, format!("{key}: {e}")))?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(config_err(*line, format!("{key}: expected a non-negative integer")));
                }
                Ok(Some(v as usize))
            }
        }
    }

    pub fn get_string(&self, section: &str, key: &str) -> Option<String> {
        self.raw(section, key).map(|(v, _)| v.clone())
    }

    /// Comma list, bracketed or bare.
    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((text, line)) => {
                let inner = text
                    .strip_prefix('[')
                    .and_then(|t| t.strip_suffix(']'))
                    .unwrap_or(text);
                let mut values = Vec::new();
                for part in inner.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    values.push(
                        parse_si(part).map_err(|e| config_err(*line, format!("{key}: {e}")))?,
                    );
                }
                Ok(Some(values))
            }
        }
    }

    fn check_known_keys(&self, section: &str, known: &[&str]) -> Result<()> {
        if let Some(entries) = self.sections.get(section) {
            for (key, (_, line)) in entries {
                if !known.contains(&key.as_str()) {
                    return Err(config_err(
                        *line,
                        format!("unknown key '{key}' in [{section}]"),
                    ));
                }
            }
        }
        Ok(())
    }
}

const CONVERTER_KEYS: &[&str] = &[
    "n_stages",
    "v_in",
    "r_switch",
    "c_fly",
    "c_out",
    "r_par",
    "r_offchip",
    "f_sw",
    "dead_time_fraction",
];

const CHANNEL_KEYS: &[&str] = &[
    "source_stage",
    "sink_stages",
    "r_heavy",
    "r_light",
    "idle_load",
    "bit_period",
    "bits",
    "decode_stage",
    "decode_probe",
    "threshold",
];

const SIMULATION_KEYS: &[&str] = &["steps_per_period"];

/// Read the `[converter]` section into a spec. A scalar `c_fly`, `c_out` or
/// `r_par` is broadcast over all stages.
pub fn converter_from_config(cfg: &ConfigFile) -> Result<ConverterSpec> {
    let section = "converter";
    if !cfg.has_section(section) {
        return Err(Error::Config {
            line: None,
            message: "missing [converter] section".to_string(),
        });
    }
    cfg.check_known_keys(section, CONVERTER_KEYS)?;
    let require = |key: &str| -> Result<f64> {
        cfg.get_f64(section, key)?.ok_or_else(|| Error::Config {
            line: None,
            message: format!("missing key '{key}' in [{section}]"),
        })
    };
    let n_stages = cfg.get_usize(section, "n_stages")?.ok_or_else(|| Error::Config {
        line: None,
        message: "missing key 'n_stages' in [converter]".to_string(),
    })?;
    let broadcast = |key: &str| -> Result<Vec<f64>> {
        let list = cfg.get_f64_list(section, key)?.ok_or_else(|| Error::Config {
            line: None,
            message: format!("missing key '{key}' in [{section}]"),
        })?;
        if list.len() == 1 && n_stages > 1 {
            Ok(vec![list[0]; n_stages])
        } else {
            Ok(list)
        }
    };
    let spec = ConverterSpec {
        n_stages,
        v_in: require("v_in")?,
        r_switch: require("r_switch")?,
        c_fly: broadcast("c_fly")?,
        c_out: broadcast("c_out")?,
        r_par: broadcast("r_par")?,
        r_offchip: cfg.get_f64(section, "r_offchip")?.unwrap_or(0.0),
        f_sw: require("f_sw")?,
        dead_time_fraction: cfg
            .get_f64(section, "dead_time_fraction")?
            .unwrap_or(DEFAULT_DEAD_TIME_FRACTION),
    };
    spec.validate().map_err(Error::InvalidSpec)?;
    Ok(spec)
}

/// Read the `[channel]` section. Stage indices are 1-based in the file.
pub fn channel_from_config(cfg: &ConfigFile, n_stages: usize) -> Result<ChannelConfig> {
    let section = "channel";
    if !cfg.has_section(section) {
        return Err(Error::Config {
            line: None,
            message: "missing [channel] section".to_string(),
        });
    }
    cfg.check_known_keys(section, CHANNEL_KEYS)?;
    let stage_index = |raw: usize, what: &str| -> Result<usize> {
        if raw == 0 || raw > n_stages {
            Err(Error::Config {
                line: None,
                message: format!("{what} must be in 1..={n_stages}, got {raw}"),
            })
        } else {
            Ok(raw - 1)
        }
    };
    let source_stage = stage_index(
        cfg.get_usize(section, "source_stage")?.unwrap_or(1),
        "source_stage",
    )?;
    let sink_stages = match cfg.get_f64_list(section, "sink_stages")? {
        Some(list) => list
            .into_iter()
            .map(|v| stage_index(v as usize, "sink_stages entry"))
            .collect::<Result<Vec<_>>>()?,
        None => (0..n_stages).filter(|&s| s != source_stage).collect(),
    };
    let bits_text = cfg.get_string(section, "bits").unwrap_or_else(|| "1010".to_string());
    let bits = parse_bits(&bits_text)?;
    let decode_probe = match cfg.get_string(section, "decode_probe").as_deref() {
        None | Some("output") => ProbeKind::Output,
        Some("input") | Some("input_tap") => ProbeKind::InputTap,
        Some(other) => {
            return Err(Error::Config {
                line: None,
                message: format!("decode_probe must be 'output' or 'input', got '{other}'"),
            })
        }
    };
    Ok(ChannelConfig {
        source_stage,
        sink_stages,
        r_heavy: cfg.get_f64(section, "r_heavy")?.unwrap_or(1.0),
        r_light: cfg.get_f64(section, "r_light")?.unwrap_or(100.0),
        idle_load: cfg.get_f64(section, "idle_load")?.unwrap_or(100.0),
        bit_period: cfg.get_f64(section, "bit_period")?.unwrap_or(25e-6),
        bits,
        decode_stage: match cfg.get_usize(section, "decode_stage")? {
            Some(raw) => Some(stage_index(raw, "decode_stage")?),
            None => None,
        },
        decode_probe,
        threshold: cfg.get_f64(section, "threshold")?,
    })
}

/// Optional `[simulation]` override of the step policy.
pub fn step_policy_from_config(cfg: &ConfigFile) -> Result<crate::transient::StepPolicy> {
    cfg.check_known_keys("simulation", SIMULATION_KEYS)?;
    match cfg.get_usize("simulation", "steps_per_period")? {
        Some(spp) => crate::transient::StepPolicy::new(spp),
        None => Ok(crate::transient::StepPolicy::default()),
    }
}

pub fn parse_bits(text: &str) -> Result<Vec<bool>> {
    text.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Config {
                line: None,
                message: format!("bit pattern may only hold 0 and 1, got '{other}'"),
            }),
        })
        .collect()
}

/// Serialize a spec back to config text (SI-suffixed where lossless).
pub fn spec_to_config(spec: &ConverterSpec) -> String {
    let list = |values: &[f64]| -> String {
        let parts: Vec<String> = values.iter().map(|&v| format_si(v)).collect();
        format!("[{}]", parts.join(", "))
    };
    format!(
        "[converter]\n\
         n_stages = {}\n\
         v_in = {}\n\
         r_switch = {}\n\
         c_fly = {}\n\
         c_out = {}\n\
         r_par = {}\n\
         r_offchip = {}\n\
         f_sw = {}\n\
         dead_time_fraction = {}\n",
        spec.n_stages,
        format_si(spec.v_in),
        format_si(spec.r_switch),
        list(&spec.c_fly),
        list(&spec.c_out),
        list(&spec.r_par),
        format_si(spec.r_offchip),
        format_si(spec.f_sw),
        format_si(spec.dead_time_fraction),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# case-study parameters
[converter]
n_stages = 3
v_in = 1
r_switch = 0.1
c_fly = [1u, 1u, 1u]
c_out = 10u
r_par = [10m, 10m, 10m]
r_offchip = 0
f_sw = 10M
dead_time_fraction = 0.02

[channel]
source_stage = 1
sink_stages = [2, 3]
r_heavy = 1
r_light = 100
idle_load = 100
bit_period = 25u
bits = 1010
";

    #[test]
    fn sample_config_round_trips_to_spec() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        let spec = converter_from_config(&cfg).unwrap();
        assert_eq!(spec.n_stages, 3);
        assert_eq!(spec.c_fly, vec![1e-6; 3]);
        assert_eq!(spec.c_out, vec![10e-6; 3]);
        assert_eq!(spec.r_par, vec![0.01; 3]);
        assert_eq!(spec.f_sw, 10e6);
        let channel = channel_from_config(&cfg, spec.n_stages).unwrap();
        assert_eq!(channel.source_stage, 0);
        assert_eq!(channel.sink_stages, vec![1, 2]);
        assert_eq!(channel.bits, vec![true, false, true, false]);
        assert_eq!(channel.bit_period, 25e-6);
    }

    #[test]
    fn serialized_spec_parses_back_identically() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        let spec = converter_from_config(&cfg).unwrap();
        let text = spec_to_config(&spec);
        let reparsed = converter_from_config(&ConfigFile::parse(&text).unwrap()).unwrap();
        assert_eq!(spec, reparsed);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "[converter]\nn_stages = 3\nv_in 1\n";
        match ConfigFile::parse(bad) {
            Err(Error::Config { line: Some(3), .. }) => {}
            other => panic!("expected line-3 error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let bad = "[converter]\nn_stages = 3\nv_inn = 1\n";
        let cfg = ConfigFile::parse(bad).unwrap();
        match converter_from_config(&cfg) {
            Err(Error::Config { line: Some(3), message }) => assert!(message.contains("v_inn")),
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn bad_numbers_are_rejected_with_their_line() {
        let bad = "[converter]\nn_stages = 3\nv_in = fast\n";
        let cfg = ConfigFile::parse(bad).unwrap();
        match converter_from_config(&cfg) {
            Err(Error::Config { line: Some(3), .. }) => {}
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn bit_patterns_reject_other_symbols() {
        assert!(parse_bits("10 ").is_ok());
        assert!(parse_bits("102").is_err());
    }
}
