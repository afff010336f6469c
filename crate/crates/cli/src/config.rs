//! Line-oriented `key = value` experiment configuration.

use std::collections::HashMap;
use std::path::PathBuf;

use spde_core::ensemble::{default_stride, RunConfig};
use spde_core::schemes::{DEFAULT_BLOWUP_THRESHOLD, DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL};
use spde_core::{
    CovarianceSpec, FemNoiseRoute, InitialDatum, Nonlinearity, Problem, SchemeKind, Space,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("{}", missing_message(.key, *.line))]
    MissingKey { key: String, line: Option<usize> },

    #[error("line {line}: `{key} = {value}` is not a valid {expected}")]
    TypeError {
        line: usize,
        key: String,
        value: String,
        expected: String,
    },

    #[error("line {line}: `{key}` is set twice")]
    DuplicateKey { line: usize, key: String },

    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn missing_message(key: &str, line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: required key `{key}` has an empty value"),
        None => format!("missing required key `{key}`"),
    }
}

pub const REQUIRED_KEYS: [&str; 6] = ["space", "N", "scheme", "tau", "T", "trials"];

pub const OPTIONAL_KEYS: [&str; 17] = [
    "nonlinearity",
    "covariance",
    "noise",
    "noise_amplitude",
    "initial",
    "initial_v",
    "seed",
    "stride",
    "output",
    "alpha",
    "blowup_threshold",
    "newton_tol",
    "newton_max_iter",
    "taus",
    "tau_ref",
    "sizes",
    "n_ref",
];

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub scheme: SchemeKind,
    pub tau: f64,
    pub t_final: f64,
    pub trials: usize,
    pub seed: u64,
    pub stride: u64,
    pub output: Option<PathBuf>,
    pub noise_route: FemNoiseRoute,
    pub blowup_threshold: f64,
    /// Second initial datum for contractivity runs.
    pub initial_v: Option<InitialDatum>,
    /// Coarse steps of a time-convergence study.
    pub taus: Vec<f64>,
    pub tau_ref: Option<f64>,
    /// Coarse mesh sizes of a space-convergence study.
    pub sizes: Vec<usize>,
    pub n_ref: Option<usize>,
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        let mut rc = RunConfig::new(
            self.problem.clone(),
            self.scheme,
            self.tau,
            self.t_final,
            self.trials,
            self.seed,
        );
        rc.record_stride = self.stride;
        rc.noise_route = self.noise_route;
        rc.blowup_threshold = self.blowup_threshold;
        rc
    }
}

struct Entries<'a> {
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn get(&self, key: &str) -> Option<(usize, &'a str)> {
        self.map.get(key).copied()
    }

    fn required(&self, key: &str) -> Result<(usize, &'a str), ConfigError> {
        match self.get(key) {
            None => Err(ConfigError::MissingKey {
                key: key.into(),
                line: None,
            }),
            Some((line, "")) => Err(ConfigError::MissingKey {
                key: key.into(),
                line: Some(line),
            }),
            Some(e) => Ok(e),
        }
    }

    /// Optional key; an empty value counts as unset.
    fn optional(&self, key: &str) -> Option<(usize, &'a str)> {
        self.get(key).filter(|(_, v)| !v.is_empty())
    }
}

fn type_error(line: usize, key: &str, value: &str, expected: &str) -> ConfigError {
    ConfigError::TypeError {
        line,
        key: key.into(),
        value: value.into(),
        expected: expected.into(),
    }
}

fn parse_num<T: std::str::FromStr>(
    (line, v): (usize, &str),
    key: &str,
    expected: &str,
) -> Result<T, ConfigError> {
    v.parse().map_err(|_| type_error(line, key, v, expected))
}

fn parse_list(
    (line, v): (usize, &str),
    key: &str,
    expected: &str,
) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| type_error(line, key, v, expected))
}

fn parse_nonlinearity((line, v): (usize, &str)) -> Result<Nonlinearity, ConfigError> {
    let err = || {
        type_error(
            line,
            "nonlinearity",
            v,
            "nonlinearity (cubic | allen-cahn:b2,b3 | power:q | poly:c0,c1,... | zero)",
        )
    };
    let (head, args) = v.split_once(':').unwrap_or((v, ""));
    let nums = || -> Result<Vec<f64>, ConfigError> {
        args.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| err()))
            .collect()
    };
    match head.trim() {
        "cubic" if args.is_empty() => Ok(Nonlinearity::Cubic),
        "zero" if args.is_empty() => Ok(Nonlinearity::zero()),
        "allen-cahn" => match nums()?.as_slice() {
            [b2, b3] => Ok(Nonlinearity::AllenCahn { b2: *b2, b3: *b3 }),
            _ => Err(err()),
        },
        "power" => match nums()?.as_slice() {
            [q] if *q >= 2.0 => Ok(Nonlinearity::PowerLaw { q: *q }),
            _ => Err(err()),
        },
        "poly" => Ok(Nonlinearity::Polynomial(nums()?)),
        _ => Err(err()),
    }
}

fn parse_covariance(
    (line, v): (usize, &str),
    space: &Space,
) -> Result<CovarianceSpec, ConfigError> {
    let err = || {
        type_error(
            line,
            "covariance",
            v,
            "covariance (default | inverse-laplacian | inverse-helmholtz | diagonal:g0,g1,... | zero)",
        )
    };
    let (head, args) = v.split_once(':').unwrap_or((v, ""));
    match head.trim() {
        "default" => Ok(default_covariance(space)),
        "inverse-laplacian" => Ok(CovarianceSpec::InverseDirichletLaplacian),
        "inverse-helmholtz" => Ok(CovarianceSpec::InversePeriodicHelmholtz),
        "zero" => Ok(CovarianceSpec::zero()),
        "diagonal" => args
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()
            .map(CovarianceSpec::Diagonal),
        _ => Err(err()),
    }
}

pub fn default_covariance(space: &Space) -> CovarianceSpec {
    match space {
        Space::FemDirichlet { .. } => CovarianceSpec::InverseDirichletLaplacian,
        Space::SpectralPeriodic { .. } => CovarianceSpec::InversePeriodicHelmholtz,
    }
}

fn parse_initial(
    (line, v): (usize, &str),
    key: &str,
    space: &Space,
) -> Result<InitialDatum, ConfigError> {
    let err = || type_error(line, key, v, "initial datum (zero | constant:c | sine:A,k)");
    let (head, args) = v.split_once(':').unwrap_or((v, ""));
    let nums: Vec<&str> = args.split(',').map(str::trim).collect();
    match (head.trim(), nums.as_slice()) {
        ("zero", _) if args.is_empty() => Ok(InitialDatum::Constant(0.0)),
        ("constant", [c]) => c.parse().map(InitialDatum::Constant).map_err(|_| err()),
        ("sine", [a, k]) => {
            let amplitude: f64 = a.parse().map_err(|_| err())?;
            let frequency: u32 = k.parse().map_err(|_| err())?;
            Ok(match space {
                Space::FemDirichlet { .. } => InitialDatum::SineDirichlet {
                    amplitude,
                    frequency,
                },
                Space::SpectralPeriodic { .. } => InitialDatum::SinePeriodic {
                    amplitude,
                    frequency,
                },
            })
        }
        _ => Err(err()),
    }
}

/// Parse and validate a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !REQUIRED_KEYS.contains(&k) && !OPTIONAL_KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey {
                line,
                key: k.into(),
            });
        }
        if map.insert(k, (line, v)).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: k.into(),
            });
        }
    }
    let e = Entries { map };
    for key in REQUIRED_KEYS {
        e.required(key)?;
    }

    let n_entry = e.required("N")?;
    let n: usize = parse_num(n_entry, "N", "positive integer")?;
    let space_entry = e.required("space")?;
    let space = match space_entry.1 {
        "fem" => Space::FemDirichlet { n },
        "spectral" => Space::SpectralPeriodic { n },
        other => {
            return Err(type_error(
                space_entry.0,
                "space",
                other,
                "space (fem | spectral)",
            ))
        }
    };
    space
        .validate()
        .map_err(|err| type_error(n_entry.0, "N", n_entry.1, &format!("size: {err}")))?;

    let tau: f64 = parse_num(e.required("tau")?, "tau", "positive number")?;
    let t_final: f64 = parse_num(e.required("T")?, "T", "positive number")?;
    let trials: usize = parse_num(e.required("trials")?, "trials", "positive integer")?;
    if !(tau > 0.0) {
        let (l, v) = e.required("tau")?;
        return Err(type_error(l, "tau", v, "positive number"));
    }
    if !(t_final > 0.0) {
        let (l, v) = e.required("T")?;
        return Err(type_error(l, "T", v, "positive number"));
    }
    if trials == 0 {
        let (l, v) = e.required("trials")?;
        return Err(type_error(l, "trials", v, "positive integer"));
    }

    let nonlinearity = match e.optional("nonlinearity") {
        Some(x) => parse_nonlinearity(x)?,
        None => Nonlinearity::Cubic,
    };
    let covariance = match e.optional("covariance") {
        Some(x) => parse_covariance(x, &space)?,
        None => default_covariance(&space),
    };
    let noise_route = match e.optional("noise") {
        None | Some((_, "eigen")) => FemNoiseRoute::Eigen,
        Some((_, "cholesky")) => FemNoiseRoute::Cholesky,
        Some((l, v)) => return Err(type_error(l, "noise", v, "noise route (eigen | cholesky)")),
    };
    let initial = match e.optional("initial") {
        Some(x) => parse_initial(x, "initial", &space)?,
        None => InitialDatum::Constant(0.0),
    };
    let initial_v = e
        .optional("initial_v")
        .map(|x| parse_initial(x, "initial_v", &space))
        .transpose()?;
    let alpha: Option<f64> = e
        .optional("alpha")
        .map(|x| parse_num(x, "alpha", "positive number"))
        .transpose()?;
    if let (Some(a), Some((l, v))) = (alpha, e.optional("alpha")) {
        if !(a > 0.0) {
            return Err(type_error(l, "alpha", v, "positive number"));
        }
    }

    let mut problem = Problem::new(nonlinearity, covariance, space, initial);
    problem.taming_alpha = alpha;
    if let Some(x) = e.optional("noise_amplitude") {
        problem.noise_amplitude = parse_num(x, "noise_amplitude", "number")?;
    }

    let scheme_entry = e.required("scheme")?;
    let mut scheme = SchemeKind::from_name(scheme_entry.1, problem.alpha()).ok_or_else(|| {
        type_error(
            scheme_entry.0,
            "scheme",
            scheme_entry.1,
            "scheme (sie | fie | gyongy | tame-pointwise | tame-global | gtem | tame-gradient)",
        )
    })?;
    if let SchemeKind::Fie {
        newton_tol,
        newton_max_iter,
    } = &mut scheme
    {
        *newton_tol = e
            .optional("newton_tol")
            .map(|x| parse_num(x, "newton_tol", "positive number"))
            .transpose()?
            .unwrap_or(DEFAULT_NEWTON_TOL);
        *newton_max_iter = e
            .optional("newton_max_iter")
            .map(|x| parse_num(x, "newton_max_iter", "positive integer"))
            .transpose()?
            .unwrap_or(DEFAULT_NEWTON_MAX_ITER);
    }

    let stride = match e.optional("stride") {
        Some(x) => {
            let s: u64 = parse_num(x, "stride", "positive integer")?;
            if s == 0 {
                return Err(type_error(x.0, "stride", x.1, "positive integer"));
            }
            s
        }
        None => default_stride(tau, t_final),
    };
    let seed = e
        .optional("seed")
        .map(|x| parse_num(x, "seed", "unsigned integer"))
        .transpose()?
        .unwrap_or(0);
    let blowup_threshold = e
        .optional("blowup_threshold")
        .map(|x| parse_num(x, "blowup_threshold", "positive number"))
        .transpose()?
        .unwrap_or(DEFAULT_BLOWUP_THRESHOLD);
    let taus = e
        .optional("taus")
        .map(|x| parse_list(x, "taus", "comma separated list of numbers"))
        .transpose()?
        .unwrap_or_default();
    let tau_ref = e
        .optional("tau_ref")
        .map(|x| parse_num(x, "tau_ref", "positive number"))
        .transpose()?;
    let sizes = match e.optional("sizes") {
        Some(x) => {
            x.1.split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| type_error(x.0, "sizes", x.1, "comma separated list of integers"))?
        }
        None => Vec::new(),
    };
    let n_ref = e
        .optional("n_ref")
        .map(|x| parse_num(x, "n_ref", "positive integer"))
        .transpose()?;

    let cfg = ExperimentConfig {
        problem,
        scheme,
        tau,
        t_final,
        trials,
        seed,
        stride,
        output: e.optional("output").map(|(_, v)| PathBuf::from(v)),
        noise_route,
        blowup_threshold,
        initial_v,
        taus,
        tau_ref,
        sizes,
        n_ref,
    };
    cfg.run_config()
        .validate()
        .map_err(|err| ConfigError::Invalid(err.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG5: &str =
        "scheme = gtem\nspace = spectral\nN = 256\ntau = 0.1\nT = 100\ntrials = 10000\n";

    #[test]
    fn spectral_gtem_setup() {
        let c = parse_config(FIG5).unwrap();
        assert_eq!(c.problem.space, Space::SpectralPeriodic { n: 256 });
        assert_eq!(c.scheme, SchemeKind::Gtem);
        assert_eq!(
            c.problem.covariance,
            CovarianceSpec::InversePeriodicHelmholtz
        );
        assert_eq!(c.trials, 10000);
        assert_eq!(c.stride, 1);
        assert_eq!(c.blowup_threshold, 1e12);
    }

    #[test]
    fn fem_setup_with_comments() {
        let text = "# FEM, large data\nspace = fem   # P1\nN = 100\nscheme = tame-gradient\n\
                    tau = 0.001\nT = 100\ntrials = 10\ninitial = constant:100\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.problem.space, Space::FemDirichlet { n: 100 });
        assert_eq!(c.scheme, SchemeKind::GradientGlobal { alpha: 3.0 });
        assert_eq!(c.stride, 50);
        assert_eq!(c.problem.initial, InitialDatum::Constant(100.0));
    }

    #[test]
    fn empty_required_value_is_missing() {
        let err = parse_config(&FIG5.replace("tau = 0.1", "tau =")).unwrap_err();
        assert_eq!(
            err,
            ConfigError::MissingKey {
                key: "tau".into(),
                line: Some(4)
            }
        );
        let err = parse_config(&FIG5.replace("trials = 10000\n", "")).unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey { line: None, .. }));
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_line() {
        let err = parse_config(&format!("{FIG5}colour = blue\n")).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 7,
                key: "colour".into()
            }
        );
        let err = parse_config(&FIG5.replace("N = 256", "N = many")).unwrap_err();
        assert!(matches!(err, ConfigError::TypeError { line: 3, .. }));
        assert!(err.to_string().starts_with("line 3"));
        let err = parse_config(&FIG5.replace("gtem", "euler")).unwrap_err();
        assert!(matches!(err, ConfigError::TypeError { line: 1, .. }));
    }

    #[test]
    fn inconsistent_horizon_is_rejected() {
        let err = parse_config(&FIG5.replace("T = 100", "T = 0.25")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn optional_keys() {
        let text = format!(
            "{FIG5}nonlinearity = allen-cahn:1,2\ncovariance = diagonal:1,0.5\nseed = 9\n\
             initial = sine:10,10\nnoise_amplitude = 1.5\nalpha = 2\n"
        )
        .replace("gtem", "tame-gradient");
        let c = parse_config(&text).unwrap();
        assert_eq!(
            c.problem.nonlinearity,
            Nonlinearity::AllenCahn { b2: 1.0, b3: 2.0 }
        );
        assert_eq!(
            c.problem.covariance,
            CovarianceSpec::Diagonal(vec![1.0, 0.5])
        );
        assert_eq!(c.seed, 9);
        assert_eq!(c.problem.noise_amplitude, 1.5);
        assert_eq!(c.scheme, SchemeKind::GradientGlobal { alpha: 2.0 });
        assert_eq!(
            c.problem.initial,
            InitialDatum::SinePeriodic {
                amplitude: 10.0,
                frequency: 10
            }
        );
    }
}
