//! Implementation of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use scnet::config::{
    channel_from_config, converter_from_config, parse_bits, spec_to_config,
    step_policy_from_config, ConfigFile,
};
use scnet::units::{format_si, parse_si};
use scnet::{
    build_ladder, extract_r_matrix, extract_with_resistors, fsl_closed_form_3stage, r_matrix,
    r_matrix_combined, run_transient, sweep_bit_rate, sweep_offchip, sweep_switching_frequency,
    transmit, ChannelConfig, ConverterSpec, Error, ExtractionOptions, InitialState, Load, RMatrix,
    Regime, Result, TransmitOptions,
};

pub struct Context {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub seed: Option<u64>,
}

impl Context {
    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Frequency,
    BitRate,
    Offchip,
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    ConfigFile::parse(&text)
}

fn parse_arg(name: &str, text: &str) -> Result<f64> {
    parse_si(text).map_err(|e| Error::InvalidInput(format!("--{name}: {e}")))
}

fn parse_list_arg(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_arg(name, s))
        .collect()
}

fn matrix_table(title: &str, matrix: &RMatrix) -> String {
    let n = matrix.order();
    let mut s = format!("{title} (ohms)\n");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:>12.6e}", matrix.values[(i, j)]))
            .collect();
        s.push_str(&format!("  {}\n", row.join(" ")));
    }
    let targets: Vec<String> = (0..n).map(|j| format_si(matrix.v_tr[j])).collect();
    s.push_str(&format!("  targets: {} V\n", targets.join(", ")));
    s
}

fn regime_name(regime: Regime) -> &'static str {
    match regime {
        Regime::Fsl => "fsl",
        Regime::Ssl => "ssl",
    }
}

pub fn analyze(ctx: &Context, config: &Path, fsl: bool, ssl: bool, combined: bool) -> Result<()> {
    let cfg = read_config(config)?;
    let spec = converter_from_config(&cfg)?;
    let mut any = false;
    let mut runs: Vec<(String, RMatrix)> = Vec::new();
    for (enabled, regime) in [(fsl, Regime::Fsl), (ssl, Regime::Ssl)] {
        if enabled || (!fsl && !ssl && !combined && regime == Regime::Fsl) {
            runs.push((
                regime_name(regime).to_string(),
                r_matrix(&spec, regime)?,
            ));
            any = true;
        }
    }
    if combined {
        runs.push(("combined".to_string(), r_matrix_combined(&spec)?));
        any = true;
    }
    debug_assert!(any);
    for (name, matrix) in &runs {
        print!("{}", matrix_table(&format!("{name} port matrix"), matrix));
        if name == "fsl" {
            print_closed_form_check(&spec, matrix);
        }
        let mut csv = Vec::new();
        matrix.write_csv(&mut csv)?;
        let path = ctx.write(&format!("rmatrix_{name}.csv"), &csv)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}

/// For the three-stage equal-rail case the fast-limit matrix has a closed
/// form; report how far the linear solve is from it.
fn print_closed_form_check(spec: &ConverterSpec, matrix: &RMatrix) {
    let equal_rails = spec.r_par.windows(2).all(|w| w[0] == w[1]);
    if spec.n_stages != 3 || !equal_rails {
        return;
    }
    let golden = fsl_closed_form_3stage(spec.r_switch, spec.r_par[0], spec.r_offchip);
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            let err = (matrix.values[(i, j)] - golden[(i, j)]).abs() / golden[(i, j)];
            worst = worst.max(err);
        }
    }
    println!("  closed-form cross-check: max relative deviation {worst:.3e}");
}

#[allow(clippy::too_many_arguments)]
pub fn extract(
    ctx: &Context,
    config: &Path,
    frequency: Option<&str>,
    resistor_mode: bool,
    i_test: &str,
    r_fixed: &str,
    r_open: &str,
) -> Result<()> {
    let cfg = read_config(config)?;
    let mut spec = converter_from_config(&cfg)?;
    if let Some(f) = frequency {
        spec.f_sw = parse_arg("frequency", f)?;
        spec.validate().map_err(Error::InvalidSpec)?;
    }
    let net = build_ladder(&spec)?;
    let mut opts = ExtractionOptions::default();
    opts.policy = step_policy_from_config(&cfg)?;
    opts.i_test = parse_arg("i-test", i_test)?;
    let outcome = if resistor_mode {
        extract_with_resistors(
            &net,
            parse_arg("r-fixed", r_fixed)?,
            parse_arg("r-open", r_open)?,
            &opts,
        )?
    } else {
        extract_r_matrix(&net, &opts)?
    };

    print!("{}", matrix_table("extracted port matrix", &outcome.matrix));
    let analytical = r_matrix(&spec, Regime::Fsl)?;
    println!("comparison against the fast-limit model (relative error):");
    for i in 0..spec.n_stages {
        let row: Vec<String> = (0..spec.n_stages)
            .map(|j| {
                let a = analytical.values[(i, j)];
                let x = outcome.matrix.values[(i, j)];
                format!("{:>9.4}%", 100.0 * (x - a) / a)
            })
            .collect();
        println!("  {}", row.join(" "));
    }
    for warning in &outcome.meta.warnings {
        println!("warning: {warning}");
    }

    let mut csv = Vec::new();
    outcome.matrix.write_csv(&mut csv)?;
    let path = ctx.write("rmatrix_extracted.csv", &csv)?;
    println!("  wrote {}", path.display());
    let meta = ctx.write(
        "rmatrix_extracted_meta.txt",
        outcome.meta.to_sidecar().as_bytes(),
    )?;
    println!("  wrote {}", meta.display());
    Ok(())
}

pub fn transient(ctx: &Context, config: &Path, duration: &str, loads: Option<&str>) -> Result<()> {
    let cfg = read_config(config)?;
    let spec = converter_from_config(&cfg)?;
    let net = build_ladder(&spec)?;
    let duration = parse_arg("duration", duration)?;
    let loads = match loads {
        None => vec![Load::Open; spec.n_stages],
        Some(text) => {
            let values = parse_list_arg("loads", text)?;
            if values.len() > spec.n_stages {
                return Err(Error::InvalidInput(format!(
                    "{} loads for {} stages",
                    values.len(),
                    spec.n_stages
                )));
            }
            let mut loads = vec![Load::Open; spec.n_stages];
            for (slot, value) in values.into_iter().enumerate() {
                loads[slot] = Load::Resistor(value);
            }
            loads
        }
    };
    let policy = step_policy_from_config(&cfg)?;
    let trace = run_transient(&net, &loads, duration, policy, InitialState::Precharged)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    let path = ctx.write("trace.csv", &csv)?;
    println!(
        "simulated {} samples over {} switching periods",
        trace.len(),
        trace.period_markers.len()
    );
    println!("  wrote {}", path.display());
    Ok(())
}

fn channel_report_text(
    spec: &ConverterSpec,
    channel: &ChannelConfig,
    report: &scnet::ChannelReport,
    seed: Option<u64>,
) -> String {
    let mut s = String::new();
    s.push_str("# resolved configuration\n");
    s.push_str(&spec_to_config(spec));
    s.push_str("\n[channel]\n");
    s.push_str(&format!("source_stage = {}\n", channel.source_stage + 1));
    let sinks: Vec<String> = channel.sink_stages.iter().map(|s| (s + 1).to_string()).collect();
    s.push_str(&format!("sink_stages = [{}]\n", sinks.join(", ")));
    s.push_str(&format!("r_heavy = {}\n", format_si(channel.r_heavy)));
    s.push_str(&format!("r_light = {}\n", format_si(channel.r_light)));
    s.push_str(&format!("idle_load = {}\n", format_si(channel.idle_load)));
    s.push_str(&format!("bit_period = {}\n", format_si(channel.bit_period)));
    let pattern: String = channel.bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.push_str(&format!("bits = {pattern}\n"));
    if let Some(seed) = seed {
        s.push_str(&format!("seed = {seed} (reserved; runs are deterministic)\n"));
    }
    s.push_str("\n# excursions\n");
    for (label, dv) in report.probe_labels.iter().zip(&report.delta_v) {
        s.push_str(&format!("{label} = {} V\n", format_si(*dv)));
    }
    s.push_str("\n# decode\n");
    s.push_str(&format!("threshold = {} V\n", report.threshold));
    let decoded: String = report.decoded.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.push_str(&format!("decoded = {decoded}\n"));
    s.push_str(&format!("bit_errors = {}\n", report.bit_errors));
    s.push_str(&format!("ber = {}\n", report.ber));
    let unsettled = report.unsettled.iter().filter(|&&u| u).count();
    s.push_str(&format!("unsettled_bits = {unsettled}\n"));
    for warning in &report.warnings {
        s.push_str(&format!("warning = {warning}\n"));
    }
    s
}

#[allow(clippy::too_many_arguments)]
pub fn covert(
    ctx: &Context,
    config: &Path,
    sweep: Option<Sweep>,
    bits: Option<&str>,
    rate: Option<&str>,
    resolution: &str,
    frequencies: Option<&str>,
    rates: Option<&str>,
    roff: Option<&str>,
) -> Result<()> {
    let cfg = read_config(config)?;
    let spec = converter_from_config(&cfg)?;
    let mut channel = channel_from_config(&cfg, spec.n_stages)?;
    if let Some(bits) = bits {
        channel.bits = parse_bits(bits)?;
    }
    if let Some(rate) = rate {
        let rate = parse_arg("rate", rate)?;
        if !(rate > 0.0) {
            return Err(Error::InvalidInput(format!("--rate must be positive, got {rate}")));
        }
        channel.bit_period = 1.0 / rate;
    }
    let resolution = parse_arg("resolution", resolution)?;
    let mut opts = TransmitOptions::default();
    opts.policy = step_policy_from_config(&cfg)?;

    match sweep {
        None => {
            let net = build_ladder(&spec)?;
            let outcome = transmit(&net, &channel, &opts)?;
            let text = channel_report_text(&spec, &channel, &outcome.report, ctx.seed);
            print!("{text}");
            let path = ctx.write("covert_report.txt", text.as_bytes())?;
            println!("  wrote {}", path.display());
            let mut csv = Vec::new();
            outcome.trace.write_csv(&mut csv)?;
            let trace_path = ctx.write("covert_trace.csv", &csv)?;
            println!("  wrote {}", trace_path.display());
        }
        Some(Sweep::Frequency) => {
            let freqs = match frequencies {
                Some(text) => parse_list_arg("frequencies", text)?,
                None => vec![100e3, 316.3e3, 1e6, 3.163e6, 5.623e6, 10e6],
            };
            let result = sweep_switching_frequency(&spec, &channel, &freqs, &opts, ctx.jobs)?;
            let mut csv = Vec::new();
            result.write_csv(&mut csv)?;
            let path = ctx.write("sweep_freq.csv", &csv)?;
            println!("swept {} switching frequencies", result.points.len());
            println!("  wrote {}", path.display());
        }
        Some(Sweep::BitRate) => {
            let rates = match rates {
                Some(text) => parse_list_arg("rates", text)?,
                None => vec![
                    20e3, 40e3, 60e3, 80e3, 100e3, 120e3, 150e3, 180e3, 220e3, 260e3, 320e3,
                    400e3,
                ],
            };
            let result = sweep_bit_rate(&spec, &channel, &rates, resolution, &opts, ctx.jobs)?;
            let mut csv = Vec::new();
            result.sweep.write_csv(&mut csv)?;
            let path = ctx.write("sweep_rate.csv", &csv)?;
            println!("swept {} bit rates", result.sweep.points.len());
            println!("bandwidth at {} V resolution:", format_si(resolution));
            let mut report = format!("# bandwidth at resolution {} V\n", format_si(resolution));
            for (label, bandwidth) in &result.bandwidth {
                let line = match bandwidth {
                    Some(b) => format!("{label} = {} bit/s", format_si(*b)),
                    None => format!("{label} = below resolution at every swept rate"),
                };
                println!("  {line}");
                report.push_str(&line);
                report.push('\n');
            }
            let report_path = ctx.write("bandwidth_report.txt", report.as_bytes())?;
            println!("  wrote {}", path.display());
            println!("  wrote {}", report_path.display());
        }
        Some(Sweep::Offchip) => {
            let values = match roff {
                Some(text) => parse_list_arg("roff", text)?,
                None => vec![0.0, 0.025, 0.05, 0.075, 0.1],
            };
            let result = sweep_offchip(&spec, &channel, &values, &opts, ctx.jobs)?;
            let mut csv = Vec::new();
            result.sweep.write_csv(&mut csv)?;
            let path = ctx.write("sweep_offchip.csv", &csv)?;
            println!("swept {} off-chip resistances", result.sweep.points.len());
            println!("linear fits (slope V/ohm, max residual / range):");
            let mut report = String::from("# linear fits: node, slope_v_per_ohm, intercept_v, residual_over_range\n");
            for (label, fit) in &result.fits {
                println!(
                    "  {label}: slope {:.4e}, residual {:.3e} of range",
                    fit.slope, fit.residual_over_range
                );
                report.push_str(&format!(
                    "{label},{},{},{}\n",
                    fit.slope, fit.intercept, fit.residual_over_range
                ));
            }
            let report_path = ctx.write("offchip_fits.csv", report.as_bytes())?;
            println!("  wrote {}", path.display());
            println!("  wrote {}", report_path.display());
        }
    }
    Ok(())
}
