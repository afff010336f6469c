//! Monte Carlo drivers: independent ensembles, path-coupled error runs and
//! shared-noise contractivity pairs.
//!
//! Trials are grouped into fixed chunks. Chunks run on the rayon pool, each
//! accumulating its trials in index order, and the chunk partials are merged
//! in chunk order afterwards, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{grad_norm_sq, norm_l2_sq, Field, Problem, Space};
use crate::noise::{FemNoiseRoute, NoiseIncrement, NoiseStream};
use crate::schemes::{SchemeKind, SchemeState, Stepper, DEFAULT_BLOWUP_THRESHOLD};
use crate::spectral::SpectralGrid;

const CHUNK: usize = 64;
const MAX_DEFAULT_RECORDS: u64 = 2000;

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub scheme: SchemeKind,
    pub tau: f64,
    pub t_final: f64,
    pub trials: usize,
    /// Steps between records.
    pub record_stride: u64,
    pub seed: u64,
    pub noise_route: FemNoiseRoute,
    pub blowup_threshold: f64,
}

/// Every step for `T <= 10`, otherwise at most 2000 records.
pub fn default_stride(tau: f64, t_final: f64) -> u64 {
    let steps = (t_final / tau).round().max(1.0) as u64;
    if t_final <= 10.0 {
        1
    } else {
        steps.div_ceil(MAX_DEFAULT_RECORDS).max(1)
    }
}

/// Number of steps `T / tau`, which must be an integer up to 1e-9.
pub fn step_count(tau: f64, t_final: f64) -> Result<u64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidTimeStep(tau));
    }
    let q = t_final / tau;
    if !(q >= 0.5) || (q - q.round()).abs() > 1e-9 * q.max(1.0) || !q.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "T = {t_final} is not a positive integer multiple of tau = {tau}"
        )));
    }
    Ok(q.round() as u64)
}

impl RunConfig {
    pub fn new(
        problem: Problem,
        scheme: SchemeKind,
        tau: f64,
        t_final: f64,
        trials: usize,
        seed: u64,
    ) -> Self {
        RunConfig {
            problem,
            scheme,
            tau,
            t_final,
            trials,
            record_stride: default_stride(tau, t_final),
            seed,
            noise_route: FemNoiseRoute::Eigen,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }

    pub fn steps(&self) -> Result<u64> {
        step_count(self.tau, self.t_final)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.scheme.validate()?;
        self.steps()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig(
                "at least one trial is required".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record stride must be >= 1".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::InvalidConfig("blowup threshold must be > 0".into()));
        }
        Ok(())
    }

    /// Step indices at which records are taken: multiples of the stride and
    /// the final step.
    pub fn record_steps(&self) -> Result<Vec<u64>> {
        let steps = self.steps()?;
        let mut out: Vec<u64> = (0..=steps).step_by(self.record_stride as usize).collect();
        if *out.last().unwrap() != steps {
            out.push(steps);
        }
        Ok(out)
    }

    fn stepper(&self) -> Result<Stepper> {
        Ok(Stepper::new(&self.problem, self.scheme, self.tau)?
            .with_blowup_threshold(self.blowup_threshold))
    }
}

/// Ensemble statistics at one record time, over the trials alive then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleRecord {
    pub t: f64,
    pub mean_norm: f64,
    pub std_norm: f64,
    pub mean_sq_norm: f64,
    /// Sample standard deviation of `||u||^2`.
    pub std_sq_norm: f64,
    pub mean_h1_sq: f64,
    pub mean_inf: f64,
    pub alive_count: usize,
}

/// Outcome of [`run_ensemble_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub records: Vec<EnsembleRecord>,
    /// Trials removed by blowup detection.
    pub blown_up: usize,
    /// Trials whose implicit solve failed.
    pub failed: usize,
}

/// Running mean and sum of squared deviations, merged pairwise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
    }

    /// Sample standard deviation, 0 for fewer than two samples.
    pub fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2.max(0.0) / (self.n - 1) as f64).sqrt()
        }
    }

    pub fn mean_or_zero(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.mean
        }
    }
}

#[derive(Debug, Clone, Default)]
struct RecordAcc {
    norm: Moments,
    sq: Moments,
    h1: Moments,
    inf: Moments,
}

impl RecordAcc {
    fn merge(&mut self, o: &RecordAcc) {
        self.norm.merge(&o.norm);
        self.sq.merge(&o.sq);
        self.h1.merge(&o.h1);
        self.inf.merge(&o.inf);
    }
}

/// Observables of one state, with transforms precomputed.
#[derive(Debug, Clone)]
pub struct Observer {
    space: Space,
    grid: Option<SpectralGrid>,
}

/// `(||u||, ||u||^2, ||u||_{H1}^2, ||u||_inf)`.
pub type Observables = (f64, f64, f64, f64);

impl Observer {
    pub fn new(space: &Space) -> Result<Self> {
        space.validate()?;
        let grid = match *space {
            Space::SpectralPeriodic { n } => Some(SpectralGrid::new(n)?),
            Space::FemDirichlet { .. } => None,
        };
        Ok(Observer {
            space: *space,
            grid,
        })
    }

    pub fn observe(&self, u: &Field) -> Result<Observables> {
        let sq = norm_l2_sq(u, &self.space)?.max(0.0);
        let h1 = sq + grad_norm_sq(u, &self.space)?.max(0.0);
        let inf = match (u, &self.grid) {
            (Field::Nodal(v), _) => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            (Field::Modes(m), Some(g)) => g.inverse(m).iter().fold(0.0f64, |a, x| a.max(x.abs())),
            (Field::Modes(_), None) => unreachable!(),
        };
        Ok((sq.sqrt(), sq, h1, inf))
    }
}

fn chunks(trials: usize) -> Vec<(usize, usize)> {
    (0..trials)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(trials)))
        .collect()
}

/// Independent trials of `config`; see [`run_ensemble_detailed`].
pub fn run_ensemble(config: &RunConfig) -> Result<Vec<EnsembleRecord>> {
    Ok(run_ensemble_detailed(config)?.records)
}

/// Run all trials and reduce to records at `t = 0, stride tau, ..., T`.
/// Dead trials drop out of the means and are reported through `alive_count`.
pub fn run_ensemble_detailed(config: &RunConfig) -> Result<EnsembleSummary> {
    config.validate()?;
    let stepper = config.stepper()?;
    let observer = Observer::new(&config.problem.space)?;
    let u0 = config.problem.initial_field()?;
    let record_steps = config.record_steps()?;
    let steps = config.steps()?;

    let partials: Vec<Result<(Vec<RecordAcc>, usize, usize)>> = chunks(config.trials)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = vec![RecordAcc::default(); record_steps.len()];
            let (mut blown, mut failed) = (0, 0);
            for trial in lo..hi {
                let stream = NoiseStream::new(
                    config.seed,
                    trial as u64,
                    &config.problem.covariance,
                    &config.problem.space,
                    config.noise_route,
                )?;
                let mut state = stepper.initial_state(u0.clone())?;
                let mut next_record = 0;
                let mut record = |state: &SchemeState, idx: &mut usize| -> Result<()> {
                    let (n, sq, h1, inf) = observer.observe(&state.field)?;
                    let a = &mut acc[*idx];
                    a.norm.push(n);
                    a.sq.push(sq);
                    a.h1.push(h1);
                    a.inf.push(inf);
                    *idx += 1;
                    Ok(())
                };
                record(&state, &mut next_record)?;
                for k in 0..steps {
                    let dw = stream.sample_increment(k, config.tau)?;
                    match stepper.step(&mut state, &dw) {
                        Ok(())
                        | Err(Error::NewtonDivergence { .. })
                        | Err(Error::SingularPivot(_)) => {}
                        Err(e) => return Err(e),
                    }
                    if !state.alive() {
                        break;
                    }
                    if record_steps.get(next_record) == Some(&(k + 1)) {
                        record(&state, &mut next_record)?;
                    }
                }
                match state.status {
                    crate::schemes::TrialStatus::Alive => {}
                    crate::schemes::TrialStatus::BlownUp { .. } => blown += 1,
                    crate::schemes::TrialStatus::Failed { .. } => failed += 1,
                }
            }
            Ok((acc, blown, failed))
        })
        .collect();

    let mut total = vec![RecordAcc::default(); record_steps.len()];
    let (mut blown_up, mut failed) = (0, 0);
    for p in partials {
        let (acc, b, f) = p?;
        for (t, a) in total.iter_mut().zip(&acc) {
            t.merge(a);
        }
        blown_up += b;
        failed += f;
    }
    let records = record_steps
        .iter()
        .zip(&total)
        .map(|(&k, a)| EnsembleRecord {
            t: k as f64 * config.tau,
            mean_norm: a.norm.mean_or_zero(),
            std_norm: a.norm.std(),
            mean_sq_norm: a.sq.mean_or_zero(),
            std_sq_norm: a.sq.std(),
            mean_h1_sq: a.h1.mean_or_zero(),
            mean_inf: a.inf.mean_or_zero(),
            alive_count: a.norm.n as usize,
        })
        .collect();
    Ok(EnsembleSummary {
        records,
        blown_up,
        failed,
    })
}

/// A coarse member of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub space: Space,
    pub tau: f64,
}

/// Strong-error estimate at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub t: f64,
    /// Mean over trials of `||u_level - P u_ref||`.
    pub mean_error: f64,
    pub std_error: f64,
    /// Mean over trials of `||u_level - P u_ref||^2`.
    pub mean_sq_error: f64,
    /// Trials where both trajectories are alive.
    pub count: usize,
}

/// Error series of one level against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    pub level: Level,
    pub records: Vec<ErrorRecord>,
}

impl LevelErrors {
    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.mean_error)
    }

    /// `sup_k E ||u_level(t_k) - u(t_k)||` over the recorded times.
    pub fn sup_error(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.mean_error))
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_error).collect()
    }
}

fn integer_ratio(coarse: f64, fine: f64) -> Result<u64> {
    let q = coarse / fine;
    if !(q >= 0.5) || (q - q.round()).abs() > 1e-9 * q {
        return Err(Error::CouplingMismatch(format!(
            "step {coarse} is not an integer multiple of {fine}"
        )));
    }
    Ok(q.round() as u64)
}

fn check_nested(fine: &Space, coarse: &Space) -> Result<()> {
    let ok = match (*fine, *coarse) {
        (Space::FemDirichlet { n: nf }, Space::FemDirichlet { n: nc }) => nc <= nf && nf % nc == 0,
        (Space::SpectralPeriodic { n: nf }, Space::SpectralPeriodic { n: nc }) => nc <= nf,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::CouplingMismatch(format!(
            "{coarse:?} is not nested in {fine:?}"
        )))
    }
}

/// Run `reference` together with coarser `levels` on shared Brownian paths.
///
/// Every level is driven by sums of the reference increments (truncated to
/// its modes), and its error `||u_level - P u_ref||` is measured in the level
/// norm every `record_every` time units. Only `reference.trials`,
/// `reference.seed`, the problem and the scheme of `reference` are used.
pub fn run_coupled_levels(
    reference: &RunConfig,
    levels: &[Level],
    record_every: f64,
) -> Result<Vec<LevelErrors>> {
    reference.validate()?;
    let steps_ref = reference.steps()?;
    let rec_ratio = integer_ratio(record_every, reference.tau)?;
    let n_records = (steps_ref / rec_ratio) as usize + 1;
    if steps_ref % rec_ratio != 0 {
        return Err(Error::CouplingMismatch(
            "record interval must divide the horizon".into(),
        ));
    }
    let ref_space = reference.problem.space;
    let ref_stepper = reference.stepper()?;
    let u0_ref = reference.problem.initial_field()?;

    struct LevelSetup {
        stepper: Stepper,
        ratio: u64,
        u0: Field,
    }
    let mut setups = Vec::with_capacity(levels.len());
    for lv in levels {
        check_nested(&ref_space, &lv.space)?;
        let ratio = integer_ratio(lv.tau, reference.tau)?;
        if rec_ratio % ratio != 0 {
            return Err(Error::CouplingMismatch(format!(
                "record interval is not a multiple of tau = {}",
                lv.tau
            )));
        }
        let mut p = reference.problem.clone();
        p.space = lv.space;
        let stepper = Stepper::new(&p, reference.scheme, lv.tau)?
            .with_blowup_threshold(reference.blowup_threshold);
        setups.push(LevelSetup {
            stepper,
            ratio,
            u0: p.initial_field()?,
        });
    }

    let partials: Vec<Result<Vec<Vec<(Moments, Moments)>>>> = chunks(reference.trials)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc =
                vec![vec![(Moments::default(), Moments::default()); n_records]; levels.len()];
            for trial in lo..hi {
                let stream = NoiseStream::new(
                    reference.seed,
                    trial as u64,
                    &reference.problem.covariance,
                    &ref_space,
                    reference.noise_route,
                )?;
                let mut fine = ref_stepper.initial_state(u0_ref.clone())?;
                let mut states: Vec<SchemeState> = setups
                    .iter()
                    .map(|s| s.stepper.initial_state(s.u0.clone()))
                    .collect::<Result<_>>()?;
                let mut pending: Vec<Option<NoiseIncrement>> = vec![None; levels.len()];
                let measure = |fine: &SchemeState,
                               states: &[SchemeState],
                               r: usize,
                               acc: &mut Vec<Vec<(Moments, Moments)>>|
                 -> Result<()> {
                    if !fine.alive() {
                        return Ok(());
                    }
                    for (i, st) in states.iter().enumerate() {
                        if st.alive() {
                            let p = fine.field.restrict_to(&ref_space, &levels[i].space)?;
                            let e = norm_l2_sq(&st.field.sub(&p)?, &levels[i].space)?;
                            let e = e.max(0.0);
                            acc[i][r].0.push(e.sqrt());
                            acc[i][r].1.push(e);
                        }
                    }
                    Ok(())
                };
                measure(&fine, &states, 0, &mut acc)?;
                for k in 0..steps_ref {
                    let dw = stream.sample_increment(k, reference.tau)?;
                    let _ = ref_stepper.step(&mut fine, &dw);
                    for (i, s) in setups.iter().enumerate() {
                        match &mut pending[i] {
                            Some(p) => p.accumulate(&dw)?,
                            slot => *slot = Some(dw.clone()),
                        }
                        if (k + 1) % s.ratio == 0 {
                            let inc = pending[i].take().unwrap().project(&levels[i].space)?;
                            let _ = s.stepper.step(&mut states[i], &inc);
                        }
                    }
                    if (k + 1) % rec_ratio == 0 {
                        measure(&fine, &states, ((k + 1) / rec_ratio) as usize, &mut acc)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = vec![vec![(Moments::default(), Moments::default()); n_records]; levels.len()];
    for p in partials {
        let acc = p?;
        for (t, a) in total.iter_mut().zip(&acc) {
            for (x, y) in t.iter_mut().zip(a) {
                x.0.merge(&y.0);
                x.1.merge(&y.1);
            }
        }
    }
    Ok(levels
        .iter()
        .zip(total)
        .map(|(lv, m)| LevelErrors {
            level: *lv,
            records: m
                .iter()
                .enumerate()
                .map(|(r, (mo, sq))| ErrorRecord {
                    t: r as f64 * record_every,
                    mean_error: mo.mean_or_zero(),
                    std_error: mo.std(),
                    mean_sq_error: sq.mean_or_zero(),
                    count: mo.n as usize,
                })
                .collect(),
        })
        .collect())
}

/// Strong-error series of `coarse` against `fine` on shared paths; the
/// fine step must be `coarse.tau / ratio` and the fine space a refinement.
/// Errors are reported at the coarse record times.
pub fn run_coupled_pair(
    coarse: &RunConfig,
    fine: &RunConfig,
    ratio: u64,
) -> Result<Vec<ErrorRecord>> {
    if ratio == 0 || integer_ratio(coarse.tau, fine.tau)? != ratio {
        return Err(Error::CouplingMismatch(format!(
            "fine tau {} is not coarse tau {} / {ratio}",
            fine.tau, coarse.tau
        )));
    }
    if coarse.seed != fine.seed || coarse.problem.covariance != fine.problem.covariance {
        return Err(Error::CouplingMismatch(
            "coupled runs need the same seed and covariance".into(),
        ));
    }
    let level = Level {
        space: coarse.problem.space,
        tau: coarse.tau,
    };
    let record_every = coarse.tau * coarse.record_stride as f64;
    let mut out = run_coupled_levels(fine, &[level], record_every)?;
    Ok(out.pop().unwrap().records)
}

/// `||u(t) - v(t)||` for two states driven by the same increments.
pub fn run_contractivity_pair(
    problem: &Problem,
    scheme: SchemeKind,
    tau: f64,
    t_final: f64,
    u0: &Field,
    v0: &Field,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let steps = step_count(tau, t_final)?;
    let stepper = Stepper::new(problem, scheme, tau)?;
    let stream = NoiseStream::new(
        seed,
        0,
        &problem.covariance,
        &problem.space,
        FemNoiseRoute::Eigen,
    )?;
    let mut u = stepper.initial_state(u0.clone())?;
    let mut v = stepper.initial_state(v0.clone())?;
    let dist = |u: &SchemeState, v: &SchemeState| -> Result<f64> {
        Ok(norm_l2_sq(&u.field.sub(&v.field)?, &problem.space)?
            .max(0.0)
            .sqrt())
    };
    let mut out = vec![(0.0, dist(&u, &v)?)];
    for k in 0..steps {
        let dw = stream.sample_increment(k, tau)?;
        stepper.step(&mut u, &dw)?;
        stepper.step(&mut v, &dw)?;
        if !(u.alive() && v.alive()) {
            break;
        }
        out.push(((k + 1) as f64 * tau, dist(&u, &v)?));
    }
    Ok(out)
}
