//! Batch front-end: a TOML config plus subcommands for mode tables, phase
//! matching, joint spectra, analytic rates, and Monte Carlo counting runs.

mod artifact;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use artifact::{out_path, write_json, write_text, Provenance};
use sfwm_core::config::RunConfig;
use sfwm_core::counting::{
    backout_source_rate, correlate, g2_from_histogram, merge_streams, power_sweep,
    predicted_histogram_g2, simulate_stream, write_histogram_csv, write_tags_binary,
    write_tags_csv, DelayHistogram,
};
use sfwm_core::dispersion::FiberSpec;
use sfwm_core::fibermodes::solve_modes;
use sfwm_core::jsi::{
    compute_jsa, marginal_spectrum, phase_matching_bandwidth, schmidt_diagnostics,
    write_grid_binary, write_grid_csv, write_marginal_csv, MarginalAxis, PumpModel,
};
use sfwm_core::phasematch::solve_phase_matching;

#[derive(Parser)]
#[command(
    name = "sfwm",
    version,
    about = "Photon-pair source design toolkit for birefringent step-index fiber",
    after_help = "Internal parallelism follows RAYON_NUM_THREADS when set."
)]
struct Cli {
    /// TOML run configuration; reference defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Guided modes and effective indices at the configured wavelengths.
    Modes,
    /// Calibrate the birefringence and solve phase matching per process.
    Phasematch,
    /// Joint spectral intensity grid with marginals and Schmidt report.
    Jsi {
        /// Process label; the first configured process when omitted.
        #[arg(long)]
        process: Option<String>,
        /// Pump model override: fast | exact.
        #[arg(long)]
        model: Option<String>,
        /// Square grid size override.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Analytic counting rates over a pump-power sweep.
    Rates {
        /// Comma-separated power list in mW (overrides the config sweep).
        #[arg(long, value_delimiter = ',')]
        power: Option<Vec<f64>>,
        /// Process label supplying the power cap.
        #[arg(long)]
        process: Option<String>,
    },
    /// Monte Carlo time tags, coincidence histogram, and g² extraction.
    Mc {
        /// Run duration in seconds (overrides the config duration).
        #[arg(long)]
        duration: Option<f64>,
        /// Process label supplying the power cap.
        #[arg(long)]
        process: Option<String>,
        /// Also write the simulated time-tag streams.
        #[arg(long)]
        streams: bool,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)
            .map_err(|e| anyhow!("{e}"))
            .with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.run.out_dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }

    // Fold subcommand overrides into the config before hashing so the
    // provenance stamp reflects the effective parameters.
    match &cli.command {
        Command::Jsi { model, n, .. } => {
            if let Some(m) = model {
                config.grid.pump_model = parse_model(m)?;
            }
            if let Some(n) = n {
                config.grid.n_signal = *n;
                config.grid.n_idler = *n;
            }
        }
        Command::Rates { power: Some(p), .. } => {
            config.run.powers_mw = p.clone();
        }
        Command::Mc { duration, streams, .. } => {
            if let Some(d) = duration {
                config.run.duration_s = *d;
            }
            if *streams {
                config.run.write_streams = true;
            }
        }
        _ => {}
    }
    config.validate().map_err(|e| anyhow!("{e}"))?;
    let provenance = Provenance::new(&config)?;

    match cli.command {
        Command::Modes => cmd_modes(&config, &provenance),
        Command::Phasematch => cmd_phasematch(&config, &provenance),
        Command::Jsi { process, .. } => cmd_jsi(&config, &provenance, process.as_deref()),
        Command::Rates { process, .. } => cmd_rates(&config, &provenance, process.as_deref()),
        Command::Mc { process, .. } => cmd_mc(&config, &provenance, process.as_deref()),
    }
}

fn parse_model(text: &str) -> Result<PumpModel> {
    match text {
        "fast" => Ok(PumpModel::Fast),
        "exact" => Ok(PumpModel::Exact),
        other => bail!("grid.pump_model must be 'fast' or 'exact', got '{other}'"),
    }
}

/// Resolve the fiber, printing the calibration summary when one ran.
fn resolved_fiber(config: &RunConfig) -> Result<FiberSpec> {
    let (fiber, calibration) = config.resolve_fiber().map_err(|e| anyhow!("{e}"))?;
    match &calibration {
        Some(cal) => {
            println!(
                "calibrated birefringence: delta_n = {:.6e} (residual {:.4} nm{})",
                cal.delta_n,
                cal.residual_nm,
                if cal.degenerate { ", degenerate-edge target" } else { "" }
            );
            if cal.degenerate {
                eprintln!("warning: calibration target sits at the degenerate edge");
            }
        }
        None => println!("birefringence from config: delta_n = {:.6e}", fiber.delta_n),
    }
    Ok(fiber)
}

fn cmd_modes(config: &RunConfig, provenance: &Provenance) -> Result<()> {
    let fiber = resolved_fiber(config)?;
    let mut rows = Vec::new();
    for &lambda_nm in &config.modes.wavelengths_nm {
        let solutions = solve_modes(&fiber, lambda_nm * 1e-3).map_err(|e| anyhow!("{e}"))?;
        let summary: Vec<String> = solutions
            .iter()
            .map(|s| format!("LP{}{} (n_eff {:.6})", s.mode.l, s.mode.m, s.n_eff))
            .collect();
        println!("{lambda_nm:7.1} nm: {}", summary.join(", "));
        for s in solutions {
            rows.push((lambda_nm, s));
        }
    }
    let path = out_path(config, "modes.csv")?;
    let header = provenance.header(&[format!(
        "fiber: core_radius {} um, NA {}, delta_n {:.6e}",
        fiber.core_radius_um, fiber.numerical_aperture, fiber.delta_n
    )]);
    write_text(&path, |out| {
        for line in &header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "wavelength_nm,mode,n_eff_fast,n_eff_slow")?;
        for (lambda_nm, s) in &rows {
            writeln!(
                out,
                "{lambda_nm},LP{}{},{:.9},{:.9}",
                s.mode.l,
                s.mode.m,
                s.n_eff,
                s.n_eff + fiber.delta_n
            )?;
        }
        Ok(())
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_phasematch(config: &RunConfig, provenance: &Provenance) -> Result<()> {
    let (fiber, calibration) = config.resolve_fiber().map_err(|e| anyhow!("{e}"))?;
    if let Some(cal) = &calibration {
        println!(
            "calibrated birefringence: delta_n = {:.6e} (residual {:.4} nm)",
            cal.delta_n, cal.residual_nm
        );
    }
    let pump_nm = config.pump.wavelength_nm;
    let mut processes = Vec::new();
    for section in &config.processes {
        let spec = section.to_spec().map_err(|e| anyhow!("{e}"))?;
        let solutions = solve_phase_matching(&fiber, &spec, pump_nm).map_err(|e| anyhow!("{e}"))?;
        let mut warnings = Vec::new();
        if solutions.is_empty() {
            let note = format!(
                "process '{}': no phase-matched solution in the scan band at delta_n = {:.3e}",
                section.label, fiber.delta_n
            );
            eprintln!("warning: {note}");
            warnings.push(note);
        }
        for s in &solutions {
            println!(
                "{}: signal {:.3} nm, idler {:.3} nm (|residual| {:.2e} /m)",
                section.label, s.lambda_signal_nm, s.lambda_idler_nm, s.delta_beta_residual
            );
        }
        processes.push(json!({
            "label": section.label,
            "solutions": solutions.iter().map(|s| json!({
                "signal_nm": s.lambda_signal_nm,
                "idler_nm": s.lambda_idler_nm,
                "delta_beta_residual_per_m": s.delta_beta_residual,
                "signal_is_nir": s.signal_is_nir,
            })).collect::<Vec<_>>(),
            "warnings": warnings,
        }));
    }
    let payload = provenance.embed(json!({
        "pump_nm": pump_nm,
        "delta_n": fiber.delta_n,
        "calibration": calibration.map(|c| json!({
            "delta_n": c.delta_n,
            "residual_nm": c.residual_nm,
            "degenerate": c.degenerate,
        })),
        "processes": processes,
    }));
    let path = out_path(config, "phasematch.json")?;
    write_json(&path, &payload)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_jsi(config: &RunConfig, provenance: &Provenance, process: Option<&str>) -> Result<()> {
    let fiber = resolved_fiber(config)?;
    let section = config.process_section(process).map_err(|e| anyhow!("{e}"))?;
    let spec = section.to_spec().map_err(|e| anyhow!("{e}"))?;
    let pump = config.pump_spec();
    if pump.below_transform_limit() {
        eprintln!(
            "warning: pulse duration {} fs is below the transform limit {:.1} fs for a \
             {} nm bandwidth; spectra use the configured bandwidth",
            pump.pulse_duration_fs, pump.transform_limit_fs(), pump.bandwidth_fwhm_nm
        );
    }
    let model = config.grid.pump_model;
    let grid = compute_jsa(&fiber, &pump, &spec, &config.grid_spec(), model)
        .map_err(|e| anyhow!("{e}"))?;
    if !grid.brackets_solution {
        eprintln!("warning: requested grid does not bracket the phase-matched ridge");
    }
    let (peak_s, peak_i) = grid.peak_wavelengths_nm();
    let schmidt = schmidt_diagnostics(&grid).map_err(|e| anyhow!("{e}"))?;
    let bandwidth_nm =
        phase_matching_bandwidth(&fiber, &spec, pump.lambda0_nm).map_err(|e| anyhow!("{e}"))?;
    let model_name = if model == PumpModel::Exact { "exact" } else { "fast" };
    println!(
        "{}: peak ({peak_s:.2}, {peak_i:.2}) nm, Schmidt K {:.3}, purity {:.3}, \
         phase-matching FWHM {:.4} nm ({model_name} model, {}x{} grid)",
        section.label,
        schmidt.schmidt_number,
        schmidt.purity,
        bandwidth_nm,
        grid.n_signal(),
        grid.n_idler()
    );

    let label = &section.label;
    let header = provenance.header(&[
        format!("process: {label}"),
        format!("pump_model: {model_name}"),
        format!("delta_n: {:.6e}", fiber.delta_n),
        format!("length_m: {}", fiber.length_m),
    ]);

    let csv_path = out_path(config, &format!("jsi-{label}.csv"))?;
    write_text(&csv_path, |out| write_grid_csv(&grid, out, &header))?;

    let bin_path = out_path(config, &format!("jsi-{label}.bin"))?;
    write_text(&bin_path, |out| write_grid_binary(&grid, out))?;
    let sidecar = provenance.embed(json!({
        "file": format!("jsi-{label}.bin"),
        "format": "JSIGRID v1: magic 'JSIGRID\\0', u32 version, u64 n_signal, u64 n_idler, \
                   f64-LE signal axis, idler axis, row-major intensity",
        "process": label,
        "pump_model": model_name,
        "n_signal": grid.n_signal(),
        "n_idler": grid.n_idler(),
    }));
    write_json(&out_path(config, &format!("jsi-{label}.bin.json"))?, &sidecar)?;

    for (axis, name) in [(MarginalAxis::Signal, "signal"), (MarginalAxis::Idler, "idler")] {
        let marginal = marginal_spectrum(&grid, axis);
        let path = out_path(config, &format!("marginal-{name}-{label}.csv"))?;
        write_text(&path, |out| write_marginal_csv(&marginal, out, &header))?;
    }

    let report = provenance.embed(json!({
        "process": label,
        "pump_model": model_name,
        "schmidt_number": schmidt.schmidt_number,
        "purity": schmidt.purity,
        "singular_values": schmidt.singular_values,
        "peak_signal_nm": peak_s,
        "peak_idler_nm": peak_i,
        "phase_matching_fwhm_nm": bandwidth_nm,
        "brackets_solution": grid.brackets_solution,
    }));
    write_json(&out_path(config, &format!("schmidt-{label}.json"))?, &report)?;
    println!("wrote {} and companions", csv_path.display());
    Ok(())
}

fn cmd_rates(config: &RunConfig, provenance: &Provenance, process: Option<&str>) -> Result<()> {
    let resolved = config.resolve_source().map_err(|e| anyhow!("{e}"))?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let cap = config.max_power_mw(process).map_err(|e| anyhow!("{e}"))?;
    let label = &config.process_section(process).map_err(|e| anyhow!("{e}"))?.label;
    let sweep = power_sweep(
        &resolved.source,
        &resolved.chain_s,
        &resolved.chain_i,
        &config.run.powers_mw,
        config.counting.window_ns,
        cap,
    )
    .map_err(|e| anyhow!("{e}"))?;

    // Pair rate at the source before losses, from the fitted operating
    // point (or the configured pump power when κ was given directly).
    let (ref_coincidences, ref_power) = match &config.counting.fit {
        Some(fit) => (fit.coincidences_hz, fit.power_mw),
        None => {
            let p = config.pump.average_power_mw;
            let mu = resolved.source.mean_pairs_per_pulse(p);
            let eta = resolved.chain_s.total_efficiency() * resolved.chain_i.total_efficiency();
            (resolved.source.rep_rate_hz * mu * eta, p)
        }
    };
    let backout = backout_source_rate(ref_coincidences, &resolved.chain_s, &resolved.chain_i)
        .map_err(|e| anyhow!("{e}"))?;
    println!(
        "source pair rate before losses: {:.1} kcps ({:.1} kcps coincidences at {ref_power} mW)",
        backout / 1e3,
        ref_coincidences / 1e3
    );
    println!(
        "{label}: coincidences increasing: {}, g2 decreasing: {}",
        sweep.coincidences_increasing, sweep.g2_decreasing
    );
    for r in &sweep.results {
        println!(
            "  {:6.2} mW: singles ({:.1}, {:.1}) kcps, coincidences {:.1} cps, g2 {}",
            r.power_mw,
            r.singles_s_hz / 1e3,
            r.singles_i_hz / 1e3,
            r.coincidences_hz,
            r.g2.map_or("undefined".into(), |g| format!("{g:.2}")),
        );
    }

    let header = provenance.header(&[format!("process: {label}")]);
    let csv_path = out_path(config, "rates.csv")?;
    write_text(&csv_path, |out| {
        for line in &header {
            writeln!(out, "# {line}")?;
        }
        writeln!(
            out,
            "power_mw,mean_pairs_per_pulse,singles_s_hz,singles_i_hz,coincidences_hz,\
             accidentals_hz,g2,car,heralding_s_given_i,heralding_i_given_s"
        )?;
        for r in &sweep.results {
            writeln!(
                out,
                "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{:.6e},{:.6e}",
                r.power_mw,
                r.mean_pairs_per_pulse,
                r.singles_s_hz,
                r.singles_i_hz,
                r.coincidences_hz,
                r.accidentals_hz,
                r.g2.map_or("nan".into(), |g| format!("{g:.6e}")),
                r.car.map_or("nan".into(), |c| format!("{c:.6e}")),
                r.heralding_s_given_i,
                r.heralding_i_given_s,
            )?;
        }
        Ok(())
    })?;

    let payload = provenance.embed(json!({
        "process": label,
        "kappa_pairs_per_pulse_per_mw2": resolved.source.pair_rate_coefficient,
        "backout_source_rate_hz": backout,
        "window_ns": config.counting.window_ns,
        "sweep": serde_json::to_value(&sweep)?,
        "warnings": resolved.warnings,
    }));
    write_json(&out_path(config, "rates.json")?, &payload)?;
    println!("wrote {} and rates.json", csv_path.display());
    Ok(())
}

/// Acquisition block length for Monte Carlo runs. Long acquisitions are
/// simulated and correlated block by block so memory is bounded by one
/// block's tag record rather than the whole run's.
const ACQUISITION_BLOCK_S: f64 = 60.0;

/// Per-block RNG seed: a SplitMix64 step decorrelates the blocks of one run
/// from each other and from the blocks of nearby base seeds.
fn block_seed(seed: u64, block: u64) -> u64 {
    let mut z = seed.wrapping_add((block + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cmd_mc(config: &RunConfig, provenance: &Provenance, process: Option<&str>) -> Result<()> {
    let resolved = config.resolve_source().map_err(|e| anyhow!("{e}"))?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let label = &config.process_section(process).map_err(|e| anyhow!("{e}"))?.label;
    let power = config.pump.average_power_mw;
    if let Some(cap) = config.max_power_mw(process).map_err(|e| anyhow!("{e}"))? {
        if power > cap {
            bail!("pump.average_power_mw {power} exceeds process '{label}' maximum {cap} mW");
        }
    }
    let duration = config.run.duration_s;
    let seed = config.run.seed;
    let n_blocks = (duration / ACQUISITION_BLOCK_S).ceil().max(1.0) as u64;
    println!(
        "simulating {duration} s at {power} mW (seed {seed}, {} pulses{})...",
        (duration * resolved.source.rep_rate_hz) as u64,
        if n_blocks > 1 {
            format!(", {n_blocks} blocks")
        } else {
            String::new()
        }
    );

    // Blocks are disjoint time slices with independently seeded generators,
    // so the summed histogram estimates the full acquisition without bias;
    // only delay pairs straddling a block boundary are lost, a vanishing
    // fraction of the record at any realistic rate.
    let mut counts: Vec<u64> = Vec::new();
    let (mut n_signal, mut n_idler) = (0u64, 0u64);
    let mut merged = Vec::new();
    for k in 0..n_blocks {
        let block_s = (duration - k as f64 * ACQUISITION_BLOCK_S).min(ACQUISITION_BLOCK_S);
        let (signal, idler) = simulate_stream(
            &resolved.source,
            &resolved.chain_s,
            &resolved.chain_i,
            power,
            block_s,
            block_seed(seed, k),
        )
        .map_err(|e| anyhow!("{e}"))?;
        n_signal += signal.len() as u64;
        n_idler += idler.len() as u64;
        let block = correlate(
            &signal,
            &idler,
            config.counting.bin_width_ps,
            config.counting.span_ns,
        )
        .map_err(|e| anyhow!("{e}"))?;
        if counts.is_empty() {
            counts = block.counts;
        } else {
            for (total, c) in counts.iter_mut().zip(&block.counts) {
                *total += c;
            }
        }
        if config.run.write_streams {
            let offset_ps = (k as f64 * ACQUISITION_BLOCK_S * 1e12) as u64;
            let mut tags = merge_streams(&signal, &idler);
            for tag in &mut tags {
                tag.timestamp_ps += offset_ps;
            }
            merged.extend(tags);
        }
    }
    println!(
        "singles: {:.1} kcps signal, {:.1} kcps idler",
        n_signal as f64 / duration / 1e3,
        n_idler as f64 / duration / 1e3
    );

    let hist = DelayHistogram {
        bin_width_ps: config.counting.bin_width_ps,
        counts,
    };
    let rep_period_ns = config.rep_period_ns();
    let g2 = g2_from_histogram(&hist, config.counting.window_ns, rep_period_ns)
        .map_err(|e| anyhow!("{e}"))?;
    let predicted = predicted_histogram_g2(
        &resolved.source,
        &resolved.chain_s,
        &resolved.chain_i,
        power,
        config.counting.window_ns,
    )
    .map_err(|e| anyhow!("{e}"))?;
    match (g2.g2, g2.g2_sigma, predicted.g2) {
        (Some(g), Some(s), Some(p)) => {
            println!("g2 = {g:.2} ± {s:.2} (predicted {p:.2}), CAR {:.2}", g2.car.unwrap())
        }
        _ => println!(
            "g2 undefined: zero-peak counts {} with empty side peaks{}",
            g2.nc,
            if g2.infinite { " (diverging)" } else { "" }
        ),
    }

    let header = provenance.header(&[
        format!("process: {label}"),
        format!("power_mw: {power}"),
        format!("duration_s: {duration}"),
        format!("seed: {seed}"),
    ]);
    let hist_path = out_path(config, &format!("histogram-{label}.csv"))?;
    write_text(&hist_path, |out| write_histogram_csv(&hist, out, &header))?;

    let payload = provenance.embed(json!({
        "process": label,
        "power_mw": power,
        "duration_s": duration,
        "seed": seed,
        "singles_s_hz": n_signal as f64 / duration,
        "singles_i_hz": n_idler as f64 / duration,
        "result": serde_json::to_value(&g2)?,
        "predicted": serde_json::to_value(predicted)?,
        "window_ns": config.counting.window_ns,
        "rep_period_ns": rep_period_ns,
    }));
    write_json(&out_path(config, &format!("g2-{label}.json"))?, &payload)?;

    if config.run.write_streams {
        let csv_path = out_path(config, &format!("tags-{label}.csv"))?;
        write_text(&csv_path, |out| write_tags_csv(&merged, out, &header))?;
        let bin_path = out_path(config, &format!("tags-{label}.bin"))?;
        write_text(&bin_path, |out| write_tags_binary(&merged, out))?;
        let sidecar = provenance.embed(json!({
            "file": format!("tags-{label}.bin"),
            "format": "10-byte LE records: u8 channel, u64 timestamp_ps, \
                       u8 origin (0=pair, 1=background, 2=dark)",
            "records": merged.len(),
        }));
        write_json(&out_path(config, &format!("tags-{label}.bin.json"))?, &sidecar)?;
        println!("wrote {} and stream files", hist_path.display());
    } else {
        println!("wrote {} and g2-{label}.json", hist_path.display());
    }
    Ok(())
}
