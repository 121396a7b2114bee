//! One function per subcommand. Each returns the files it would emit; only
//! [`write_outputs`] touches the filesystem.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;

use spdclab_core::cavity::{cavity_lifetime_ps, mode_comb, output_spectrum, ModeComb};
use spdclab_core::coherence::{analyze_revivals, central_peak_width, delay_grid, g1_from_spectrum};
use spdclab_core::modematch::{match_cavity_length, spectral_overlap, temporal_overlap};
use spdclab_core::phasematch::{
    degeneracy_temperature, fwhm_bandwidth, gain_spectrum, group_index_mismatch, sinc2_envelope, tuning_curve,
};
use spdclab_core::photostat::{g3_exact_at_mu, g3_power_sweep};
use spdclab_core::qdscatter::{fit_double_peak, qd_line_spectrum, scattering_scan};
use spdclab_core::spectrum::{linspace, symmetric_grid, SpectralDensity};
use spdclab_core::temporal::{fit_exp_beat, fit_exponential, lifetime_mismatch_with, natural_linewidth, synth_wavepacket};

use crate::config::SimulationConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Signal/idler spectra versus crystal temperature.
    TuningCurve,
    /// Single-pass phase-matching gain and its bandwidth.
    Gain,
    /// Filtered source spectrum leaving the cavity.
    Spectrum,
    /// First-order coherence with cavity revivals.
    G1,
    /// Synthetic photon arrival histogram and lifetime/beat fits.
    Wavepacket,
    /// Heralded g3 versus pump power (Monte Carlo).
    G3Sweep,
    /// Quantum-dot scattering versus Stark bias.
    QdScan,
    /// Mode overlap with the quantum dot and the lifetime-matching gap.
    Match,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TuningCurve => "tuning-curve",
            Command::Gain => "gain",
            Command::Spectrum => "spectrum",
            Command::G1 => "g1",
            Command::Wavepacket => "wavepacket",
            Command::G3Sweep => "g3-sweep",
            Command::QdScan => "qd-scan",
            Command::Match => "match",
        }
    }

    pub fn is_seeded(self) -> bool {
        matches!(self, Command::Wavepacket | Command::G3Sweep | Command::QdScan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// `#` metadata lines shared by every emitted file.
pub fn header(command: Command, config: &SimulationConfig) -> String {
    let mut h = format!(
        "# spdclab {}\n# command = {}\n# config_sha256 = {}\n",
        env!("CARGO_PKG_VERSION"),
        command.name(),
        config.hash()
    );
    if command.is_seeded() {
        let _ = writeln!(h, "# seed = {}", config.run.seed);
    }
    h
}

struct Emitter {
    header: String,
    files: Vec<OutputFile>,
}

impl Emitter {
    fn new(command: Command, config: &SimulationConfig) -> Self {
        Emitter {
            header: header(command, config),
            files: Vec::new(),
        }
    }

    fn csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut s = self.header.clone();
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push(OutputFile {
            name: name.into(),
            contents: s,
        });
    }

    fn kv(&mut self, name: &str, pairs: &[(&str, String)]) {
        let mut s = self.header.clone();
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        self.files.push(OutputFile {
            name: name.into(),
            contents: s,
        });
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Inclusive grid from `lo` with `step`, ending at or before `hi`.
fn stepped(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

fn model<T>(context: &str, r: spdclab_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::model(context, e))
}

struct Source {
    comb: ModeComb,
    wavelength_nm: f64,
    temperature_c: f64,
}

fn source(config: &SimulationConfig) -> Result<Source, CliError> {
    let cavity = config.cavity()?;
    let wavelength_nm = config.pump().degenerate_wavelength_nm();
    let temperature_c = config.crystal.temperature_c;
    let comb = model("cavity", mode_comb(&cavity, wavelength_nm, temperature_c))?;
    Ok(Source {
        comb,
        wavelength_nm,
        temperature_c,
    })
}

/// Filtered source spectrum on the narrow grid, normalized to unit area.
fn filtered_spectrum(config: &SimulationConfig) -> Result<SpectralDensity, CliError> {
    let src = source(config)?;
    let grid = model(
        "spectrum",
        symmetric_grid(config.spectrum.filtered_half_span_ghz, config.spectrum.step_ghz),
    )?;
    let gain = model("crystal", gain_spectrum(&config.crystal()?, &config.pump(), &grid))?;
    let filter = config.filter();
    let out = model("filter", output_spectrum(&gain, &src.comb, &config.pump(), filter.as_ref()))?;
    model("spectrum", out.normalized_to_area())
}

/// Runs `command` and returns the files it produces.
pub fn run(command: Command, config: &SimulationConfig) -> Result<Vec<OutputFile>, CliError> {
    let mut out = Emitter::new(command, config);
    match command {
        Command::TuningCurve => tuning(config, &mut out)?,
        Command::Gain => gain(config, &mut out)?,
        Command::Spectrum => spectrum(config, &mut out)?,
        Command::G1 => g1(config, &mut out)?,
        Command::Wavepacket => wavepacket(config, &mut out)?,
        Command::G3Sweep => g3_sweep(config, &mut out)?,
        Command::QdScan => qd_scan(config, &mut out)?,
        Command::Match => matching(config, &mut out)?,
    }
    Ok(out.files)
}

pub fn write_outputs(out_dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: out_dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(io)?;
    for file in files {
        let path = out_dir.join(&file.name);
        std::fs::write(&path, &file.contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

fn tuning(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let t = &config.tuning;
    let crystal = config.crystal()?;
    let pump = config.pump();
    let temps = stepped(t.temperature_min_c, t.temperature_max_c, t.temperature_step_c);
    let waves = stepped(t.wavelength_min_nm, t.wavelength_max_nm, t.wavelength_step_nm);
    let curve = model("tuning", tuning_curve(&crystal, &pump, &temps, &waves))?;
    let t_deg = model(
        "crystal",
        degeneracy_temperature(&crystal, &pump, (t.temperature_min_c, t.temperature_max_c)),
    )?;
    let (t_cross, l_cross) = model("tuning", curve.crossing())?;
    let band = model("tuning", curve.overlap_band())?;
    let column_band = model("tuning", curve.temperature_band(pump.degenerate_wavelength_nm()))?;
    let combined = curve.combined();
    let w = waves.len();
    out.csv(
        "tuning_curve.csv",
        &["temperature_c", "wavelength_nm", "signal", "idler", "combined"],
        (0..temps.len() * w).map(|k| {
            vec![
                f(temps[k / w]),
                f(waves[k % w]),
                f(curve.signal[k]),
                f(curve.idler[k]),
                f(combined[k]),
            ]
        }),
    );
    out.csv(
        "tuning_peaks.csv",
        &["temperature_c", "signal_peak_nm", "idler_peak_nm"],
        curve.branch_peaks().into_iter().map(|(t, s, i)| vec![f(t), f(s), f(i)]),
    );
    out.kv(
        "tuning_summary.txt",
        &[
            ("degenerate_wavelength_nm", f(pump.degenerate_wavelength_nm())),
            ("degeneracy_temperature_c", f(t_deg)),
            ("crossing_temperature_c", f(t_cross)),
            ("crossing_wavelength_nm", f(l_cross)),
            ("degeneracy_band_c", f(band)),
            ("signal_half_max_band_c", f(column_band)),
        ],
    );
    Ok(())
}

fn gain(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let crystal = config.crystal()?;
    let pump = config.pump();
    let lambda = pump.degenerate_wavelength_nm();
    let grid = model("spectrum", symmetric_grid(config.spectrum.half_span_ghz, config.spectrum.gain_step_ghz))?;
    let g = model("crystal", gain_spectrum(&crystal, &pump, &grid))?;
    let closed = model("crystal", fwhm_bandwidth(&crystal, lambda))?;
    let numeric = model("spectrum", g.fwhm())?;
    let dng = model("crystal", group_index_mismatch(&crystal, lambda))?;
    out.csv(
        "gain.csv",
        &["detuning_ghz", "gain"],
        g.detuning().iter().zip(g.intensity()).map(|(x, y)| vec![f(*x), f(*y)]),
    );
    out.kv(
        "gain_summary.txt",
        &[
            ("group_index_mismatch", f(dng)),
            ("fwhm_closed_form_ghz", f(closed)),
            ("fwhm_numeric_ghz", f(numeric)),
        ],
    );
    Ok(())
}

fn spectrum(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let src = source(config)?;
    let cavity = config.cavity()?;
    let s = filtered_spectrum(config)?;
    let s = model("spectrum", s.normalized_to_peak())?;
    let peaks: Vec<String> = s
        .local_maxima(0.05)
        .into_iter()
        .map(|i| format!("{:.4}", s.detuning()[i]))
        .collect();
    let lifetime = model("cavity", cavity_lifetime_ps(&cavity, src.wavelength_nm, src.temperature_c))?;
    out.csv(
        "spectrum.csv",
        &["detuning_ghz", "intensity"],
        s.detuning().iter().zip(s.intensity()).map(|(x, y)| vec![f(*x), f(*y)]),
    );
    out.kv(
        "cavity_summary.txt",
        &[
            ("finesse", f(src.comb.finesse())),
            ("fsr_ghz", f(src.comb.fsr_ghz)),
            ("round_trip_ps", f(1e3 / src.comb.fsr_ghz)),
            ("mode_linewidth_ghz", f(src.comb.mode_linewidth_fwhm_ghz)),
            ("signal_idler_fsr_mismatch_ghz", f(src.comb.signal_idler_fsr_mismatch_ghz)),
            ("cavity_lifetime_ps", f(lifetime)),
            ("peaks_ghz", peaks.join(" ")),
        ],
    );
    Ok(())
}

/// Revival-envelope decay time measured on the built source, with its error.
pub const MEASURED_COHERENCE_PS: (f64, f64) = (1681.0, 245.0);

fn g1(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let src = source(config)?;
    let c = &config.coherence;
    let grid = model("spectrum", symmetric_grid(config.spectrum.half_span_ghz, config.spectrum.step_ghz))?;
    let envelope = match c.envelope_fwhm_ghz {
        Some(w) => model("coherence.envelope_fwhm_ghz", sinc2_envelope(w, &grid))?,
        None => model("crystal", gain_spectrum(&config.crystal()?, &config.pump(), &grid))?,
    };
    let filter = if c.use_filter { config.filter() } else { None };
    let s = model("cavity", output_spectrum(&envelope, &src.comb, &config.pump(), filter.as_ref()))?;
    let period = 1e3 / src.comb.fsr_ghz;
    let delays = model(
        "coherence",
        delay_grid(c.max_delay_ps, c.fine_step_ps, c.coarse_step_ps, c.fine_half_width_ps, Some(period)),
    )?;
    let trace = model("coherence", g1_from_spectrum(&s, &delays))?;
    let revivals = model("coherence", analyze_revivals(&trace))?;
    let central = model("coherence", central_peak_width(&trace))?;
    let expected_envelope = 1e3 / (std::f64::consts::PI * src.comb.mode_linewidth_fwhm_ghz);
    out.csv(
        "g1.csv",
        &["delay_ps", "visibility"],
        trace.delays_ps.iter().zip(&trace.visibility).map(|(x, y)| vec![f(*x), f(*y)]),
    );
    out.csv(
        "g1_revivals.csv",
        &["delay_ps", "visibility"],
        revivals.peaks.iter().map(|(x, y)| vec![f(*x), f(*y)]),
    );
    out.kv(
        "g1_summary.txt",
        &[
            ("round_trip_ps", f(period)),
            ("revival_spacing_ps", f(revivals.spacing_ps)),
            ("coherence_time_ps", f(revivals.coherence_time_ps)),
            ("envelope_modulation_ghz", revivals.modulation_ghz.map_or("none".into(), f)),
            ("envelope_from_linewidth_ps", f(expected_envelope)),
            ("measured_coherence_time_ps", format!("{} +- {}", f(MEASURED_COHERENCE_PS.0), f(MEASURED_COHERENCE_PS.1))),
            (
                "coherence_time_sigma_from_measured",
                f((revivals.coherence_time_ps - MEASURED_COHERENCE_PS.0) / MEASURED_COHERENCE_PS.1),
            ),
            ("central_peak_lifetime_ps", f(central)),
        ],
    );
    Ok(())
}

fn wavepacket(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let w = &config.wavepacket;
    let params = config.wavepacket();
    let grid = stepped(0.0, w.duration_ps, w.bin_ps);
    let prof = model("wavepacket", synth_wavepacket(&params, &grid, Some(config.run.seed)))?;
    let exp = model("wavepacket", fit_exponential(&prof))?;
    let beat = model("wavepacket", fit_exp_beat(&prof))?;
    let counts = prof.counts.clone().unwrap_or_default();
    out.csv(
        "wavepacket.csv",
        &["time_ps", "intensity", "counts"],
        (0..grid.len()).map(|i| vec![f(grid[i]), f(prof.intensity[i]), counts[i].to_string()]),
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), f);
    out.kv(
        "wavepacket_fit.txt",
        &[
            ("total_counts", prof.total_counts().unwrap_or(0).to_string()),
            ("exp_lifetime_ps", f(exp.lifetime_ps)),
            ("exp_lifetime_stderr_ps", f(exp.lifetime_stderr_ps)),
            ("beat_lifetime_ps", f(beat.lifetime_ps)),
            ("beat_lifetime_stderr_ps", f(beat.lifetime_stderr_ps)),
            ("beat_frequency_ghz", opt(beat.beat_frequency_ghz)),
            ("beat_frequency_stderr_ghz", opt(beat.beat_frequency_stderr_ghz)),
            ("beat_visibility", opt(beat.beat_visibility)),
            ("reduced_chi2", f(beat.goodness)),
            ("natural_linewidth_mhz", f(model("wavepacket", natural_linewidth(beat.lifetime_ps))?)),
        ],
    );
    Ok(())
}

fn g3_sweep(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let q = &config.source_statistics;
    let m = config.source_model();
    let setup = config.heralded_setup();
    let pts = model(
        "source_statistics",
        g3_power_sweep(&m, &setup, &q.powers_mw, q.pulses_per_point, config.run.seed),
    )?;
    let mut rows = Vec::new();
    let mut tallies = Vec::new();
    for p in &pts {
        let exact = model("source_statistics", g3_exact_at_mu(&m, p.mean_pairs, &setup))?;
        rows.push(vec![f(p.power_mw), f(p.g3), f(p.stderr), f(p.mean_pairs), f(exact)]);
        tallies.push((p.power_mw, p.counts));
    }
    out.csv(
        "g3_sweep.csv",
        &["power_mW", "g3", "stderr", "mean_pairs", "g3_exact"],
        rows,
    );
    let mut s = out.header.clone();
    for (p, c) in tallies {
        let _ = writeln!(s, "[power_mW = {p}]");
        s.push_str(&c.to_key_value());
    }
    out.files.push(OutputFile {
        name: "g3_tallies.txt".into(),
        contents: s,
    });
    Ok(())
}

fn qd_scan(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let sc = &config.qd_scan;
    let spec = filtered_spectrum(config)?;
    let qd = config.qd();
    let biases = linspace(sc.bias_min_v, sc.bias_max_v, sc.points);
    let scan = model(
        "qd_scan",
        scattering_scan(&spec, &qd, &biases, &config.scan_params(), config.run.seed),
    )?;
    out.csv(
        "qd_scan.csv",
        &["bias_V", "detuning_GHz", "counts", "background"],
        (0..biases.len()).map(|i| {
            vec![
                f(scan.biases_v[i]),
                f(scan.detuning_ghz[i]),
                scan.counts[i].to_string(),
                scan.background[i].to_string(),
            ]
        }),
    );
    let total: u64 = scan.counts.iter().sum();
    let mut summary = vec![
        ("qd_enabled", sc.qd_enabled.to_string()),
        ("mean_counts_per_point", f(total as f64 / scan.counts.len() as f64)),
    ];
    if sc.qd_enabled {
        let fit = model("qd_scan", fit_double_peak(&scan))?;
        summary.extend([
            ("separation_ghz", f(fit.separation_ghz)),
            ("separation_stderr_ghz", f(fit.separation_stderr_ghz)),
            ("center_low_ghz", f(fit.centers_ghz.0)),
            ("center_high_ghz", f(fit.centers_ghz.1)),
            ("width_low_ghz", f(fit.widths_ghz.0)),
            ("width_high_ghz", f(fit.widths_ghz.1)),
            ("amplitude_ratio", f(fit.amplitude_ratio)),
            ("background", f(fit.background)),
            ("reduced_chi2", f(fit.reduced_chi2)),
        ]);
    }
    out.kv("qd_fit.txt", &summary);
    Ok(())
}

fn matching(config: &SimulationConfig, out: &mut Emitter) -> Result<(), CliError> {
    let m = &config.matching;
    let src = source(config)?;
    let cavity = config.cavity()?;
    let qd = config.qd();
    let spdc = filtered_spectrum(config)?;
    let line = model("qd", qd_line_spectrum(&qd, spdc.detuning().to_vec()))?;
    let current = model("cavity", cavity_lifetime_ps(&cavity, src.wavelength_nm, src.temperature_c))?;
    out.kv(
        "overlap.txt",
        &[
            ("lifetime_spdc_ps", f(m.spdc_lifetime_ps)),
            ("lifetime_target_ps", f(m.target_lifetime_ps)),
            ("temporal_overlap", f(model("match", temporal_overlap(m.spdc_lifetime_ps, m.target_lifetime_ps))?)),
            ("spectral_overlap", f(model("match", spectral_overlap(&spdc, &line))?)),
            (
                "mismatch",
                f(model(
                    "match",
                    lifetime_mismatch_with(m.spdc_lifetime_ps, m.target_lifetime_ps, m.mismatch_convention),
                )?),
            ),
            ("model_cavity_lifetime_ps", f(current)),
        ],
    );
    let res = model(
        "match.target_lifetime_ps",
        match_cavity_length(
            m.target_lifetime_ps,
            &cavity,
            src.wavelength_nm,
            src.temperature_c,
            (m.gap_min_mm, m.gap_max_mm),
        ),
    )?;
    out.csv(
        "match_trace.csv",
        &["iteration", "gap_mm", "lifetime_ps"],
        res.trace.iter().map(|s| {
            let tau = cavity_lifetime_ps(&cavity.with_air_gap(s.x), src.wavelength_nm, src.temperature_c).unwrap_or(f64::NAN);
            vec![s.iteration.to_string(), f(s.x), f(tau)]
        }),
    );
    out.kv(
        "match.txt",
        &[
            ("gap_mm", f(res.gap_mm)),
            ("achieved_lifetime_ps", f(res.lifetime_ps)),
            ("relative_error", f((res.lifetime_ps - m.target_lifetime_ps).abs() / m.target_lifetime_ps)),
        ],
    );
    Ok(())
}
