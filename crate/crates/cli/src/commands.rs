//! Subcommand implementations. Each returns a report; writing files is done
//! here, printing is left to the binary.

use std::fmt;
use std::path::{Path, PathBuf};

use spde_core::analysis::{
    blowup_threshold, fit_rate, verify_blowup_growth, BlowupThreshold, RateFit,
};
use spde_core::ensemble::{
    run_contractivity_pair, run_coupled_levels, run_ensemble_detailed, EnsembleSummary, Level,
    LevelErrors, RunConfig,
};
use spde_core::fem::{calibrate_inverse_constant, FemMesh};
use spde_core::field::norm_l2_sq;
use spde_core::{InitialDatum, SchemeKind, Space};

use crate::config::{ConfigError, ExperimentConfig};
use crate::csv::{write_records, write_table};
use crate::presets::{figure, FIGURE_IDS, TAUS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] spde_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        use spde_core::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Core(E::NewtonDivergence { .. } | E::SingularPivot { .. }) => 2,
            CliError::Core(_) => 1,
            CliError::Io { .. } | CliError::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.into(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn failure_check(summary: &EnsembleSummary, what: &str) -> CliResult<()> {
    if summary.failed > 0 {
        Err(CliError::Runtime(format!(
            "{what}: {} trial(s) stopped because the implicit solve did not converge",
            summary.failed
        )))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub summary: EnsembleSummary,
    pub csv: String,
}

/// Run the ensemble and write the CSV to the configured output (if any).
/// Trials lost to solver failure make the command fail after writing.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<SimulateOutput> {
    let summary = run_ensemble_detailed(&cfg.run_config())?;
    let csv = write_records(&summary.records);
    if let Some(path) = &cfg.output {
        write_file(path, &csv)?;
    }
    failure_check(&summary, "simulate")?;
    Ok(SimulateOutput { summary, csv })
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutput {
    /// `"tau"` or `"h"`.
    pub parameter: &'static str,
    pub levels: Vec<LevelErrors>,
    /// Fit of the final-time errors.
    pub final_fit: RateFit,
    /// Fit of the sup-over-records errors.
    pub sup_fit: RateFit,
    pub csv: String,
}

impl fmt::Display for ConvergenceOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} rate (final time): {:.4} (log residual {:.2e})",
            self.parameter, self.final_fit.slope, self.final_fit.residual
        )?;
        write!(
            f,
            "{} rate (sup over time): {:.4} (log residual {:.2e})",
            self.parameter, self.sup_fit.slope, self.sup_fit.residual
        )
    }
}

/// Strong-error study against a finer reference on shared noise paths.
///
/// With `taus` set, the levels are those steps on the configured space and
/// the reference uses `tau_ref`; with `sizes` set, the levels are those mesh
/// sizes at the configured step against `n_ref`.
pub fn cmd_convergence(cfg: &ExperimentConfig) -> CliResult<ConvergenceOutput> {
    let space = cfg.problem.space;
    let resize = |n: usize| match space {
        Space::FemDirichlet { .. } => Space::FemDirichlet { n },
        Space::SpectralPeriodic { .. } => Space::SpectralPeriodic { n },
    };
    let mut reference = cfg.run_config();
    let (parameter, levels, record_every) = match (cfg.taus.is_empty(), cfg.sizes.is_empty()) {
        (false, true) => {
            reference.tau = cfg.tau_ref.ok_or(ConfigError::MissingKey {
                key: "tau_ref".into(),
                line: None,
            })?;
            let levels: Vec<Level> = cfg.taus.iter().map(|&tau| Level { space, tau }).collect();
            let coarsest = cfg.taus.iter().fold(0.0f64, |m, &t| m.max(t));
            ("tau", levels, coarsest)
        }
        (true, false) => {
            reference.problem.space = resize(cfg.n_ref.ok_or(ConfigError::MissingKey {
                key: "n_ref".into(),
                line: None,
            })?);
            let levels: Vec<Level> = cfg
                .sizes
                .iter()
                .map(|&n| Level {
                    space: resize(n),
                    tau: cfg.tau,
                })
                .collect();
            ("h", levels, cfg.tau * cfg.stride as f64)
        }
        _ => return Err(ConfigError::Invalid(
            "convergence needs exactly one of `taus` (with `tau_ref`) or `sizes` (with `n_ref`)"
                .into(),
        )
        .into()),
    };
    let results = run_coupled_levels(&reference, &levels, record_every)?;
    let param = |l: &Level| {
        if parameter == "tau" {
            l.tau
        } else {
            l.space.h()
        }
    };
    let final_pairs: Vec<(f64, f64)> = results
        .iter()
        .map(|r| (param(&r.level), r.final_error()))
        .collect();
    let sup_pairs: Vec<(f64, f64)> = results
        .iter()
        .map(|r| (param(&r.level), r.sup_error()))
        .collect();
    let rows: Vec<Vec<f64>> = final_pairs
        .iter()
        .zip(&sup_pairs)
        .map(|(a, b)| vec![a.0, a.1, b.1])
        .collect();
    let csv = write_table(&[parameter, "final_error", "sup_error"], &rows);
    if let Some(path) = &cfg.output {
        write_file(path, &csv)?;
    }
    Ok(ConvergenceOutput {
        parameter,
        final_fit: fit_rate(&final_pairs)?,
        sup_fit: fit_rate(&sup_pairs)?,
        levels: results,
        csv,
    })
}

/// Growth check started above the energy threshold.
#[derive(Debug, Clone)]
pub struct GrowthCheck {
    pub initial_sq_norm: f64,
    pub records: usize,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub tau: f64,
    pub trials: usize,
    /// FEM only: the energy threshold for the calibrated inverse constant.
    pub threshold: Option<BlowupThreshold>,
    pub initial_sq_norm: f64,
    pub blown_up: usize,
    /// First record time with a trial removed.
    pub first_blowup: Option<f64>,
    /// First record time with every trial removed.
    pub all_blown_up: Option<f64>,
    pub growth: Option<GrowthCheck>,
}

impl fmt::Display for BlowupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(th) = &self.threshold {
            writeln!(
                f,
                "threshold: a0 = {:.6e} (C_inv = {:.4}, C0 = {:.4e}, x* = {:.4e})",
                th.a0, th.c_inv, th.c0, th.x_star
            )?;
            writeln!(
                f,
                "initial ||u0||^2 = {:.6e} ({} threshold)",
                self.initial_sq_norm,
                if self.initial_sq_norm >= th.a0 {
                    "above"
                } else {
                    "below"
                }
            )?;
        } else {
            writeln!(f, "initial ||u0||^2 = {:.6e}", self.initial_sq_norm)?;
        }
        match self.first_blowup {
            Some(t) => writeln!(
                f,
                "sie tau = {}: blowup in {}/{} trials, first at t = {t}{}",
                self.tau,
                self.blown_up,
                self.trials,
                self.all_blown_up
                    .map_or(String::new(), |t| format!(", all by t = {t}"))
            )?,
            None => writeln!(
                f,
                "sie tau = {}: no blowup in {} trials",
                self.tau, self.trials
            )?,
        }
        match &self.growth {
            Some(g) => write!(
                f,
                "growth E||u^n||^2 >= E||u^0||^2 + n tau from ||u0||^2 = {:.4e}: {} ({} records)",
                g.initial_sq_norm,
                if g.passed { "PASS" } else { "FAIL" },
                g.records
            ),
            None => write!(f, "growth check: not applicable"),
        }
    }
}

const GROWTH_STEPS: f64 = 10.0;
const GROWTH_TRIALS: usize = 200;
/// Squared-norm detection level for the growth run, just below overflow.
const GROWTH_DETECTION: f64 = 1e300;

/// Semi-implicit Euler from the configured datum, plus (FEM) a growth check
/// started at twice the energy threshold.
pub fn cmd_blowup_demo(cfg: &ExperimentConfig) -> CliResult<BlowupReport> {
    let mut run = cfg.run_config();
    run.scheme = SchemeKind::Sie;
    let space = cfg.problem.space;
    let initial_sq_norm = norm_l2_sq(&cfg.problem.initial_field()?, &space)?;
    let summary = run_ensemble_detailed(&run)?;
    let first_blowup = summary
        .records
        .iter()
        .find(|r| r.alive_count < run.trials)
        .map(|r| r.t);
    let all_blown_up = summary
        .records
        .iter()
        .find(|r| r.alive_count == 0)
        .map(|r| r.t);
    if let Some(path) = &cfg.output {
        write_file(path, &write_records(&summary.records))?;
    }

    let (threshold, growth) = match space {
        Space::FemDirichlet { n } => {
            let mesh = FemMesh::new(n)?;
            let c_inv = calibrate_inverse_constant(&mesh).c_inv;
            let th = blowup_threshold(
                cfg.tau,
                mesh.h(),
                c_inv,
                cfg.problem.covariance.trace(&space),
            )?;
            let unit = norm_l2_sq(&InitialDatum::Constant(1.0).to_field(&space)?, &space)?;
            let c = (2.0 * th.a0 / unit).sqrt();
            let mut g = run.clone();
            g.problem.initial = InitialDatum::Constant(c);
            g.t_final = GROWTH_STEPS * cfg.tau;
            g.trials = cfg.trials.min(GROWTH_TRIALS);
            g.record_stride = 1;
            g.blowup_threshold = GROWTH_DETECTION;
            let records = run_ensemble_detailed(&g)?.records;
            let checked = records
                .iter()
                .skip(1)
                .take_while(|r| r.alive_count == g.trials)
                .count();
            let growth = GrowthCheck {
                initial_sq_norm: records[0].mean_sq_norm,
                records: checked,
                passed: verify_blowup_growth(&records),
            };
            (Some(th), Some(growth))
        }
        Space::SpectralPeriodic { .. } => (None, None),
    };
    Ok(BlowupReport {
        tau: cfg.tau,
        trials: run.trials,
        threshold,
        initial_sq_norm,
        blown_up: summary.blown_up,
        first_blowup,
        all_blown_up,
        growth,
    })
}

#[derive(Debug, Clone)]
pub struct ContractivityOutput {
    pub series: Vec<(f64, f64)>,
    /// Least-squares slope of `log ||u - v||` against `t`.
    pub decay_rate: f64,
    pub csv: String,
}

/// Least-squares slope of `ln d` against `t` over the positive samples.
pub fn log_decay_slope(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, d)| *d > 0.0 && d.is_finite())
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    sxy / sxx
}

/// Distance between trajectories from `initial` and `initial_v` driven by
/// the same noise (first trial of the configured seed).
pub fn cmd_contractivity(cfg: &ExperimentConfig) -> CliResult<ContractivityOutput> {
    let v0 = cfg.initial_v.as_ref().ok_or(ConfigError::MissingKey {
        key: "initial_v".into(),
        line: None,
    })?;
    let space = cfg.problem.space;
    let series = run_contractivity_pair(
        &cfg.problem,
        cfg.scheme,
        cfg.tau,
        cfg.t_final,
        &cfg.problem.initial_field()?,
        &v0.to_field(&space)?,
        cfg.seed,
    )?;
    let rows: Vec<Vec<f64>> = series.iter().map(|&(t, d)| vec![t, d]).collect();
    let csv = write_table(&["t", "distance"], &rows);
    if let Some(path) = &cfg.output {
        write_file(path, &csv)?;
    }
    Ok(ContractivityOutput {
        decay_rate: log_decay_slope(&series),
        series,
        csv,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Replaces the figure's horizon when set.
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub files: Vec<PathBuf>,
    /// `(preset, note)` for presets carrying a caveat.
    pub caveats: Vec<(String, &'static str)>,
    /// `(file, trials blown up)` for runs that lost trials.
    pub blowups: Vec<(PathBuf, usize)>,
}

/// Write one CSV per preset and step of a figure into `out_dir`, named
/// `<figure>-<preset>-tau<tau>.csv`.
pub fn cmd_paper_suite(figure_id: &str, opts: &SuiteOptions) -> CliResult<SuiteOutput> {
    let fig = figure(figure_id).ok_or_else(|| {
        ConfigError::Invalid(format!(
            "unknown figure `{figure_id}`; expected one of {}",
            FIGURE_IDS.join(", ")
        ))
    })?;
    let t_final = opts.t_final.unwrap_or(fig.t_final);
    let mut out = SuiteOutput {
        files: Vec::new(),
        caveats: Vec::new(),
        blowups: Vec::new(),
    };
    let mut failed = 0;
    for preset in &fig.presets {
        if let Some(c) = preset.caveat {
            out.caveats.push((preset.name(), c));
        }
        for tau in TAUS {
            let rc = RunConfig::new(
                preset.problem(),
                preset.scheme_kind(),
                tau,
                t_final,
                opts.trials,
                opts.seed,
            );
            let summary = run_ensemble_detailed(&rc)?;
            let path = opts
                .out_dir
                .join(format!("{}-{}-tau{tau}.csv", fig.id, preset.name()));
            write_file(&path, &write_records(&summary.records))?;
            if summary.blown_up > 0 {
                out.blowups.push((path.clone(), summary.blown_up));
            }
            failed += summary.failed;
            out.files.push(path);
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!(
            "{figure_id}: {failed} trial(s) stopped because the implicit solve did not converge"
        )));
    }
    Ok(out)
}
