//! The seven time-stepping schemes, each a step map `(u^k, dW) -> u^{k+1}`.
//!
//! Every scheme treats the Laplacian implicitly. They differ only in the
//! drift: SIE uses `f(u^k)` as is, FIE solves for `f(u^{k+1})` with Newton's
//! method, and the five tamed schemes divide `f(u^k)` by a denominator that is
//! at least one and keeps a single explicit step from overshooting.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, FemMesh, GradNormVariant, SineBasis, ThomasFactor,
    TridiagonalMatrix,
};
use crate::field::{norm_l2_sq, Field, Problem, Space};
use crate::noise::NoiseIncrement;
use crate::nonlinearity::Nonlinearity;
use crate::spectral::SpectralGrid;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e12;

const MAX_DAMPING_HALVINGS: usize = 5;
const CG_MAX_ITER: usize = 500;
const CG_REL_TOL: f64 = 1e-6;

/// One row of the scheme table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    /// Semi-implicit Euler: explicit `f(u^k)`.
    Sie,
    /// Fully implicit Euler solved by damped Newton.
    Fie {
        newton_tol: f64,
        newton_max_iter: usize,
    },
    /// `f(u) / (1 + tau |f'(u)|)` pointwise.
    TruncatedPointwise,
    /// `f(u) / (1 + tau ||f'(u)||)` with one global factor.
    TruncatedGlobal,
    /// `f(u) / sqrt(1 + tau f'(u)^2)` pointwise.
    Gtem,
    /// `f(u) / (1 + alpha tau ||grad f(u)||^2)` with one global factor.
    GradientGlobal { alpha: f64 },
    /// `f(u) / (1 + tau |f(u)|)` pointwise.
    Gyongy,
}

/// Command line names, one per scheme.
pub const SCHEME_NAMES: [&str; 7] = [
    "sie",
    "fie",
    "gyongy",
    "tame-pointwise",
    "tame-global",
    "gtem",
    "tame-gradient",
];

impl SchemeKind {
    pub fn fie() -> Self {
        SchemeKind::Fie {
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Sie => "sie",
            SchemeKind::Fie { .. } => "fie",
            SchemeKind::Gyongy => "gyongy",
            SchemeKind::TruncatedPointwise => "tame-pointwise",
            SchemeKind::TruncatedGlobal => "tame-global",
            SchemeKind::Gtem => "gtem",
            SchemeKind::GradientGlobal { .. } => "tame-gradient",
        }
    }

    /// Scheme for a command line name; `alpha` is used by `tame-gradient`.
    pub fn from_name(name: &str, alpha: f64) -> Option<Self> {
        Some(match name {
            "sie" => SchemeKind::Sie,
            "fie" => SchemeKind::fie(),
            "gyongy" => SchemeKind::Gyongy,
            "tame-pointwise" => SchemeKind::TruncatedPointwise,
            "tame-global" => SchemeKind::TruncatedGlobal,
            "gtem" => SchemeKind::Gtem,
            "tame-gradient" => SchemeKind::GradientGlobal { alpha },
            _ => return None,
        })
    }

    /// The scheme with its defaults filled in from `problem`.
    pub fn all(problem: &Problem) -> Vec<SchemeKind> {
        SCHEME_NAMES
            .iter()
            .map(|n| SchemeKind::from_name(n, problem.alpha()).unwrap())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeKind::Fie {
                newton_tol,
                newton_max_iter,
            } if !(newton_tol > 0.0) || newton_max_iter == 0 => Err(Error::InvalidConfig(
                "Newton tolerance and iteration budget must be positive".into(),
            )),
            SchemeKind::GradientGlobal { alpha } if !(alpha > 0.0) || !alpha.is_finite() => Err(
                Error::InvalidConfig(format!("taming alpha must be > 0, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_tamed(&self) -> bool {
        !matches!(self, SchemeKind::Sie | SchemeKind::Fie { .. })
    }
}

/// Drift of a pointwise scheme at one point. `None` for the global schemes,
/// whose factor depends on the whole field.
pub fn pointwise_drift(kind: &SchemeKind, nl: &Nonlinearity, u: f64, tau: f64) -> Option<f64> {
    let f = nl.eval(u);
    match kind {
        SchemeKind::Sie | SchemeKind::Fie { .. } => Some(f),
        SchemeKind::TruncatedPointwise => Some(f / (1.0 + tau * nl.eval_prime(u).abs())),
        SchemeKind::Gtem => {
            let d = nl.eval_prime(u);
            Some(f / (1.0 + tau * d * d).sqrt())
        }
        SchemeKind::Gyongy => Some(f / (1.0 + tau * f.abs())),
        SchemeKind::TruncatedGlobal | SchemeKind::GradientGlobal { .. } => None,
    }
}

/// Global taming factor from the squared norm the scheme tames by:
/// `||f'(u)||^2` for truncated-global, `||grad f(u)||^2` for gradient-global.
pub fn global_factor(kind: &SchemeKind, tau: f64, norm_sq: f64) -> f64 {
    match *kind {
        SchemeKind::TruncatedGlobal => 1.0 / (1.0 + tau * norm_sq.max(0.0).sqrt()),
        SchemeKind::GradientGlobal { alpha } => 1.0 / (1.0 + alpha * tau * norm_sq.max(0.0)),
        _ => 1.0,
    }
}

/// Life cycle of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Alive,
    /// Non-finite values or `||u||^2` above the detection threshold.
    BlownUp {
        step: u64,
    },
    /// The implicit solve did not converge.
    Failed {
        step: u64,
    },
}

/// State of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub field: Field,
    /// Index `k` of the current time level.
    pub step: u64,
    pub tau: f64,
    pub status: TrialStatus,
}

impl SchemeState {
    pub fn new(field: Field, tau: f64) -> Self {
        SchemeState {
            field,
            step: 0,
            tau,
            status: TrialStatus::Alive,
        }
    }

    pub fn alive(&self) -> bool {
        self.status == TrialStatus::Alive
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.tau
    }
}

/// Operators shared by every trajectory of one discretization.
#[derive(Debug, Clone)]
enum Operators {
    Fem {
        mesh: FemMesh,
        mass: TridiagonalMatrix,
        /// `M + tau K`.
        shifted: TridiagonalMatrix,
        factor: ThomasFactor,
        basis: SineBasis,
    },
    Spectral {
        grid: SpectralGrid,
        /// `1 + tau j^2` in FFT order.
        symbol: Vec<f64>,
    },
}

/// Diagnostics of one implicit solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `||R(v)||_inf` at the accepted iterate.
    pub residual: f64,
}

/// Read-only stepping machinery for one `(problem, scheme, tau)`.
#[derive(Debug, Clone)]
pub struct Stepper {
    kind: SchemeKind,
    nonlinearity: Nonlinearity,
    space: Space,
    tau: f64,
    sigma: f64,
    blowup_threshold: f64,
    ops: Operators,
}

impl Stepper {
    pub fn new(problem: &Problem, kind: SchemeKind, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidTimeStep(tau));
        }
        kind.validate()?;
        problem.space.validate()?;
        let ops = match problem.space {
            Space::FemDirichlet { n } => {
                let mesh = FemMesh::new(n)?;
                let mass = assemble_mass(&mesh);
                let shifted = mass.add_scaled(tau, &assemble_stiffness(&mesh));
                let factor = shifted.factor()?;
                let basis = SineBasis::new(&mesh, mesh.dofs());
                Operators::Fem {
                    mesh,
                    mass,
                    shifted,
                    factor,
                    basis,
                }
            }
            Space::SpectralPeriodic { n } => {
                let grid = SpectralGrid::new(n)?;
                let symbol = (0..n)
                    .map(|k| {
                        let j = grid.wavenumber(k) as f64;
                        1.0 + tau * j * j
                    })
                    .collect();
                Operators::Spectral { grid, symbol }
            }
        };
        Ok(Stepper {
            kind,
            nonlinearity: problem.nonlinearity.clone(),
            space: problem.space,
            tau,
            sigma: problem.noise_amplitude,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            ops,
        })
    }

    pub fn with_blowup_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = threshold;
        self
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn blowup_threshold(&self) -> f64 {
        self.blowup_threshold
    }

    pub fn initial_state(&self, field: Field) -> Result<SchemeState> {
        field.check(&self.space)?;
        Ok(SchemeState::new(field, self.tau))
    }

    pub fn sine_basis(&self) -> Option<&SineBasis> {
        match &self.ops {
            Operators::Fem { basis, .. } => Some(basis),
            Operators::Spectral { .. } => None,
        }
    }

    /// `sigma dW` as nodal values or Fourier modes of this discretization.
    pub fn noise_field(&self, dw: &NoiseIncrement) -> Result<Field> {
        let mut w = match (dw, &self.ops) {
            (NoiseIncrement::Sine(c), Operators::Fem { basis, mesh, .. }) => {
                let mut out = vec![0.0; mesh.dofs()];
                basis.synthesize(c, &mut out);
                Field::Nodal(out)
            }
            _ => dw.to_field(&self.space, None)?,
        };
        w.scale(self.sigma);
        Ok(w)
    }

    /// Advance `state` by one step. Blowup is recorded in the state; a failed
    /// implicit solve marks the trial failed and is also returned as an error.
    /// Dead states are left untouched.
    pub fn step(&self, state: &mut SchemeState, dw: &NoiseIncrement) -> Result<()> {
        if !state.alive() {
            return Ok(());
        }
        let w = self.noise_field(dw)?;
        let next = match self.advance(&state.field, &w) {
            Ok((next, _)) => next,
            Err(e @ Error::NewtonDivergence { .. }) | Err(e @ Error::SingularPivot(_)) => {
                state.step += 1;
                state.status = TrialStatus::Failed { step: state.step };
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        state.step += 1;
        state.field = next;
        if !state.field.is_finite()
            || !(norm_l2_sq(&state.field, &self.space)? <= self.blowup_threshold)
        {
            state.status = TrialStatus::BlownUp { step: state.step };
        }
        Ok(())
    }

    /// One step from `u` with noise field `w` (already scaled by sigma).
    /// Returns the new field and, for FIE, the Newton diagnostics.
    pub fn advance(&self, u: &Field, w: &Field) -> Result<(Field, Option<NewtonReport>)> {
        u.check(&self.space)?;
        w.check(&self.space)?;
        match (&self.ops, u, w) {
            (Operators::Fem { .. }, Field::Nodal(u), Field::Nodal(w)) => {
                if let SchemeKind::Fie { .. } = self.kind {
                    let (v, rep) = self.fie_fem(u, w)?;
                    Ok((Field::Nodal(v), Some(rep)))
                } else {
                    Ok((Field::Nodal(self.explicit_fem(u, w)?), None))
                }
            }
            (Operators::Spectral { .. }, Field::Modes(u), Field::Modes(w)) => {
                if let SchemeKind::Fie { .. } = self.kind {
                    let (v, rep) = self.fie_spectral(u, w)?;
                    Ok((Field::Modes(v), Some(rep)))
                } else {
                    Ok((Field::Modes(self.explicit_spectral(u, w)), None))
                }
            }
            _ => Err(Error::BasisMismatch(
                "field does not match the stepper".into(),
            )),
        }
    }

    /// Nodal drift of an explicit scheme (FEM).
    pub fn drift_fem(&self, u: &[f64]) -> Result<Vec<f64>> {
        let Operators::Fem { mesh, .. } = &self.ops else {
            return Err(Error::BasisMismatch(
                "drift_fem on a spectral stepper".into(),
            ));
        };
        let nl = &self.nonlinearity;
        Ok(match self.kind {
            SchemeKind::TruncatedGlobal | SchemeKind::GradientGlobal { .. } => {
                let variant = match self.kind {
                    SchemeKind::TruncatedGlobal => GradNormVariant::DerivativeL2,
                    _ => GradNormVariant::GradientOfF,
                };
                let norm_sq = crate::fem::gradnorm_sq_of_f(mesh, nl, u, variant);
                let s = global_factor(&self.kind, self.tau, norm_sq);
                u.iter().map(|&x| s * nl.eval(x)).collect()
            }
            _ => u
                .iter()
                .map(|&x| pointwise_drift(&self.kind, nl, x, self.tau).unwrap())
                .collect(),
        })
    }

    /// Dealiased Fourier coefficients of the drift of an explicit scheme.
    pub fn drift_spectral(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let Operators::Spectral { grid, .. } = &self.ops else {
            return Err(Error::BasisMismatch(
                "drift_spectral on a FEM stepper".into(),
            ));
        };
        let nl = &self.nonlinearity;
        let vals = grid.to_padded(u);
        Ok(match self.kind {
            SchemeKind::TruncatedGlobal => {
                let norm_sq = crate::spectral::derivative_l2_sq(nl, &vals);
                let s = global_factor(&self.kind, self.tau, norm_sq);
                let d: Vec<f64> = vals.iter().map(|&x| s * nl.eval(x)).collect();
                grid.from_padded(&d)
            }
            SchemeKind::GradientGlobal { .. } => {
                let fv: Vec<f64> = vals.iter().map(|&x| nl.eval(x)).collect();
                let mut fhat = grid.from_padded(&fv);
                let s = global_factor(&self.kind, self.tau, grid.grad_norm_sq(&fhat));
                fhat.iter_mut().for_each(|c| *c *= s);
                fhat
            }
            _ => {
                let d: Vec<f64> = vals
                    .iter()
                    .map(|&x| pointwise_drift(&self.kind, nl, x, self.tau).unwrap())
                    .collect();
                grid.from_padded(&d)
            }
        })
    }

    fn explicit_fem(&self, u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let Operators::Fem { mass, factor, .. } = &self.ops else {
            unreachable!()
        };
        let d = self.drift_fem(u)?;
        let v: Vec<f64> = (0..u.len())
            .map(|i| u[i] + self.tau * d[i] + w[i])
            .collect();
        let mut rhs = mass.matvec(&v);
        factor.solve_in_place(&mut rhs);
        Ok(rhs)
    }

    fn explicit_spectral(&self, u: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
        let Operators::Spectral { symbol, .. } = &self.ops else {
            unreachable!()
        };
        let d = self.drift_spectral(u).expect("spectral stepper");
        (0..u.len())
            .map(|k| (u[k] + self.tau * d[k] + w[k]) / symbol[k])
            .collect()
    }

    fn newton_params(&self) -> (f64, usize) {
        match self.kind {
            SchemeKind::Fie {
                newton_tol,
                newton_max_iter,
            } => (newton_tol, newton_max_iter),
            _ => (DEFAULT_NEWTON_TOL, DEFAULT_NEWTON_MAX_ITER),
        }
    }

    /// Weak-form FIE residual `(M + tau K) v - tau M f(v) - M (u + w)` and
    /// the magnitude of its largest term.
    pub fn fie_residual_fem(&self, v: &[f64], u: &[f64], w: &[f64]) -> Result<(Vec<f64>, f64)> {
        let Operators::Fem { mass, shifted, .. } = &self.ops else {
            return Err(Error::BasisMismatch(
                "FEM residual on a spectral stepper".into(),
            ));
        };
        let nl = &self.nonlinearity;
        let av = shifted.matvec(v);
        let fv: Vec<f64> = v.iter().map(|&x| self.tau * nl.eval(x)).collect();
        let mf = mass.matvec(&fv);
        let uw: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + b).collect();
        let rhs = mass.matvec(&uw);
        let scale = inf_norm(&av).max(inf_norm(&mf)).max(inf_norm(&rhs));
        let r = (0..v.len()).map(|i| av[i] - mf[i] - rhs[i]).collect();
        Ok((r, scale))
    }

    fn fie_fem(&self, u: &[f64], w: &[f64]) -> Result<(Vec<f64>, NewtonReport)> {
        let Operators::Fem {
            mass,
            shifted,
            factor,
            ..
        } = &self.ops
        else {
            unreachable!()
        };
        let (tol, max_iter) = self.newton_params();
        let nl = &self.nonlinearity;
        let tau = self.tau;
        // start from the linear implicit step
        let uw: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + b).collect();
        let mut v = mass.matvec(&uw);
        factor.solve_in_place(&mut v);
        let (mut r, mut scale) = self.fie_residual_fem(&v, u, w)?;
        let mut rn = inf_norm(&r);
        for it in 0..max_iter {
            if rn <= tol * scale.max(1.0) {
                return Ok((
                    v,
                    NewtonReport {
                        iterations: it,
                        residual: rn,
                    },
                ));
            }
            // J = (M + tau K) - tau M diag(f'(v))
            let fp: Vec<f64> = v.iter().map(|&x| tau * nl.eval_prime(x)).collect();
            let n = v.len();
            let jac = TridiagonalMatrix {
                sub: (0..n - 1)
                    .map(|i| shifted.sub[i] - mass.sub[i] * fp[i])
                    .collect(),
                diag: (0..n)
                    .map(|i| shifted.diag[i] - mass.diag[i] * fp[i])
                    .collect(),
                sup: (0..n - 1)
                    .map(|i| shifted.sup[i] - mass.sup[i] * fp[i + 1])
                    .collect(),
            };
            let delta = jac.solve(&r)?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_DAMPING_HALVINGS {
                let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a - lambda * d).collect();
                let (tr, ts) = self.fie_residual_fem(&trial, u, w)?;
                let tn = inf_norm(&tr);
                let keep = tn < rn;
                accepted = Some((trial, tr, ts, tn));
                if keep {
                    break;
                }
                lambda *= 0.5;
            }
            let (nv, nr, ns, nn) = accepted.unwrap();
            if !nn.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations: it + 1,
                    residual: nn,
                });
            }
            v = nv;
            r = nr;
            scale = ns;
            rn = nn;
        }
        if rn <= tol * scale.max(1.0) {
            return Ok((
                v,
                NewtonReport {
                    iterations: max_iter,
                    residual: rn,
                },
            ));
        }
        Err(Error::NewtonDivergence {
            iterations: max_iter,
            residual: rn,
        })
    }

    /// Spectral FIE residual `D v - tau P f(v) - (u + w)` with its scale.
    pub fn fie_residual_spectral(
        &self,
        v: &[Complex64],
        u: &[Complex64],
        w: &[Complex64],
    ) -> Result<(Vec<Complex64>, f64)> {
        let Operators::Spectral { grid, symbol } = &self.ops else {
            return Err(Error::BasisMismatch(
                "spectral residual on a FEM stepper".into(),
            ));
        };
        let fhat = grid.apply_nonlinearity_dealiased(&self.nonlinearity, v);
        let mut scale = 0.0f64;
        let r = (0..v.len())
            .map(|k| {
                let a = symbol[k] * v[k];
                let b = self.tau * fhat[k];
                let c = u[k] + w[k];
                scale = scale.max(a.norm()).max(b.norm()).max(c.norm());
                a - b - c
            })
            .collect();
        Ok((r, scale))
    }

    fn fie_spectral(
        &self,
        u: &[Complex64],
        w: &[Complex64],
    ) -> Result<(Vec<Complex64>, NewtonReport)> {
        let Operators::Spectral { grid, symbol } = &self.ops else {
            unreachable!()
        };
        let (tol, max_iter) = self.newton_params();
        let nl = &self.nonlinearity;
        let tau = self.tau;
        // start from the linear implicit step
        let mut v: Vec<Complex64> = (0..u.len()).map(|k| (u[k] + w[k]) / symbol[k]).collect();
        let (mut r, mut scale) = self.fie_residual_spectral(&v, u, w)?;
        let mut rn = cinf_norm(&r);
        for it in 0..max_iter {
            if rn <= tol * scale.max(1.0) {
                return Ok((
                    v,
                    NewtonReport {
                        iterations: it,
                        residual: rn,
                    },
                ));
            }
            // J d = D d - tau P[f'(v) d], Hermitian and positive when f' <= 0
            let g: Vec<f64> = grid
                .to_padded(&v)
                .iter()
                .map(|&x| tau * nl.eval_prime(x))
                .collect();
            let mean_g = g.iter().sum::<f64>() / g.len() as f64;
            let shift = (-mean_g).max(0.0);
            let precond: Vec<f64> = symbol.iter().map(|d| d + shift).collect();
            let apply = |d: &[Complex64]| -> Vec<Complex64> {
                let dv = grid.to_padded(d);
                let prod: Vec<f64> = dv.iter().zip(&g).map(|(a, b)| a * b).collect();
                let p = grid.from_padded(&prod);
                (0..d.len()).map(|k| symbol[k] * d[k] - p[k]).collect()
            };
            let delta = pcg(apply, &precond, &r).ok_or(Error::NewtonDivergence {
                iterations: it + 1,
                residual: rn,
            })?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_DAMPING_HALVINGS {
                let trial: Vec<Complex64> =
                    v.iter().zip(&delta).map(|(a, d)| a - lambda * d).collect();
                let (tr, ts) = self.fie_residual_spectral(&trial, u, w)?;
                let tn = cinf_norm(&tr);
                let keep = tn < rn;
                accepted = Some((trial, tr, ts, tn));
                if keep {
                    break;
                }
                lambda *= 0.5;
            }
            let (nv, nr, ns, nn) = accepted.unwrap();
            if !nn.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations: it + 1,
                    residual: nn,
                });
            }
            v = nv;
            r = nr;
            scale = ns;
            rn = nn;
        }
        if rn <= tol * scale.max(1.0) {
            return Ok((
                v,
                NewtonReport {
                    iterations: max_iter,
                    residual: rn,
                },
            ));
        }
        Err(Error::NewtonDivergence {
            iterations: max_iter,
            residual: rn,
        })
    }
}

/// Preconditioned conjugate gradients for a Hermitian positive definite
/// operator with a diagonal preconditioner. `None` on breakdown or when the
/// iteration budget runs out.
fn pcg(
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    precond: &[f64],
    b: &[Complex64],
) -> Option<Vec<Complex64>> {
    let dot = |a: &[Complex64], c: &[Complex64]| -> Complex64 {
        a.iter().zip(c).map(|(x, y)| x.conj() * y).sum()
    };
    let n = b.len();
    let bnorm = dot(b, b).re.sqrt();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return Some(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<Complex64> = r.iter().zip(precond).map(|(a, p)| a / p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    for _ in 0..CG_MAX_ITER {
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).re.sqrt() <= CG_REL_TOL * bnorm {
            return Some(x);
        }
        z = r.iter().zip(precond).map(|(a, p)| a / p).collect();
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    None
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn cinf_norm(x: &[Complex64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{norm_l2, InitialDatum};
    use crate::noise::CovarianceSpec;
    use approx::assert_relative_eq;

    fn fem_problem(n: usize, nl: Nonlinearity) -> Problem {
        Problem::new(
            nl,
            CovarianceSpec::InverseDirichletLaplacian,
            Space::FemDirichlet { n },
            InitialDatum::Constant(0.0),
        )
    }

    fn spectral_problem(n: usize, nl: Nonlinearity) -> Problem {
        Problem::new(
            nl,
            CovarianceSpec::InversePeriodicHelmholtz,
            Space::SpectralPeriodic { n },
            InitialDatum::Constant(0.0),
        )
    }

    fn zero_noise(space: &Space) -> Field {
        space.zero_field()
    }

    #[test]
    fn names_round_trip() {
        for name in SCHEME_NAMES {
            assert_eq!(SchemeKind::from_name(name, 3.0).unwrap().name(), name);
        }
        assert!(SchemeKind::from_name("euler", 1.0).is_none());
        assert!(SchemeKind::GradientGlobal { alpha: 0.0 }
            .validate()
            .is_err());
        assert!(SchemeKind::Fie {
            newton_tol: -1.0,
            newton_max_iter: 5
        }
        .validate()
        .is_err());
    }

    #[test]
    fn hand_drifts() {
        let ac = Nonlinearity::AllenCahn { b2: 1.0, b3: 1.0 };
        let d = |k| pointwise_drift(&k, &ac, 2.0, 0.1).unwrap();
        assert_relative_eq!(
            d(SchemeKind::TruncatedPointwise),
            -6.0 / 2.1,
            epsilon = 1e-14
        );
        assert_relative_eq!(d(SchemeKind::Gtem), -6.0 / 13.1f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(d(SchemeKind::Gyongy), -3.75, epsilon = 1e-14);
        assert_relative_eq!(d(SchemeKind::Sie), -6.0);
        for k in [
            SchemeKind::TruncatedPointwise,
            SchemeKind::Gtem,
            SchemeKind::Gyongy,
        ] {
            assert_eq!(
                pointwise_drift(&k, &Nonlinearity::Cubic, 0.0, 0.1),
                Some(0.0)
            );
        }
        let big = pointwise_drift(
            &SchemeKind::TruncatedPointwise,
            &Nonlinearity::Cubic,
            1e6,
            0.1,
        )
        .unwrap();
        assert!((big.abs() * 3.0 * 0.1 / 1e6 - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn sie_heat_step_and_mean_map() {
        // f = 0, no noise: constant spectral field is fixed
        let p = spectral_problem(16, Nonlinearity::zero());
        let st = Stepper::new(&p, SchemeKind::Sie, 0.1).unwrap();
        let u = InitialDatum::Constant(3.0).to_field(&p.space).unwrap();
        let (v, _) = st.advance(&u, &zero_noise(&p.space)).unwrap();
        assert_eq!(v, u);

        // cubic mean map: 10 -> -90 -> 72810
        let p = spectral_problem(16, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::Sie, 0.1).unwrap();
        let mut u = InitialDatum::Constant(10.0).to_field(&p.space).unwrap();
        for expect in [-90.0, 72810.0] {
            u = st.advance(&u, &zero_noise(&p.space)).unwrap().0;
            let Field::Modes(m) = &u else { unreachable!() };
            assert_relative_eq!(m[0].re, expect, max_relative = 1e-12);
            assert!(m[1..].iter().all(|c| c.norm() < 1e-9 * expect.abs()));
        }
    }

    #[test]
    fn fie_scalar_analog() {
        let p = fem_problem(2, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::fie(), 0.1).unwrap();
        let (v, rep) = st
            .advance(&Field::Nodal(vec![1.0]), &Field::Nodal(vec![0.0]))
            .unwrap();
        let Field::Nodal(v) = v else { unreachable!() };
        // bisection oracle for (1/3 + 0.4) v + (0.1/3) v^3 = 1/3
        let g = |x: f64| (1.0 / 3.0 + 0.4) * x + 0.1 / 3.0 * x * x * x - 1.0 / 3.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(v[0], lo, epsilon = 1e-10);
        assert!((v[0] - 0.450393).abs() < 1e-6);
        assert!(rep.unwrap().residual <= 1e-10);
    }

    #[test]
    fn fie_origin_is_a_fixed_point() {
        for p in [
            fem_problem(10, Nonlinearity::Cubic),
            spectral_problem(16, Nonlinearity::Cubic),
        ] {
            let st = Stepper::new(&p, SchemeKind::fie(), 0.1).unwrap();
            let z = p.space.zero_field();
            let (v, rep) = st.advance(&z, &z).unwrap();
            assert_eq!(v, z);
            assert!(rep.unwrap().iterations <= 1);
        }
    }

    #[test]
    fn fie_converges_for_large_data() {
        for p in [
            fem_problem(100, Nonlinearity::Cubic),
            spectral_problem(64, Nonlinearity::Cubic),
        ] {
            let st = Stepper::new(&p, SchemeKind::fie(), 0.1).unwrap();
            let u = InitialDatum::Constant(100.0).to_field(&p.space).unwrap();
            let (v, _) = st.advance(&u, &p.space.zero_field()).unwrap();
            assert!(norm_l2(&v, &p.space).unwrap() < norm_l2(&u, &p.space).unwrap());
        }
    }

    #[test]
    fn spectral_fie_residual_is_small() {
        let p = spectral_problem(32, Nonlinearity::AllenCahn { b2: 1.0, b3: 1.0 });
        let st = Stepper::new(&p, SchemeKind::fie(), 0.05).unwrap();
        let grid = SpectralGrid::new(32).unwrap();
        let vals: Vec<f64> = grid
            .points()
            .iter()
            .map(|x| 3.0 * x.sin() + (2.0 * x).cos())
            .collect();
        let u = grid.forward(&vals).unwrap();
        let w: Vec<Complex64> = u.iter().map(|c| c * 0.1).collect();
        let (v, _) = st
            .advance(&Field::Modes(u.clone()), &Field::Modes(w.clone()))
            .unwrap();
        let Field::Modes(v) = v else { unreachable!() };
        let (r, _) = st.fie_residual_spectral(&v, &u, &w).unwrap();
        assert!(cinf_norm(&r) <= 1e-9);
    }

    #[test]
    fn truncated_global_constant_field() {
        let p = fem_problem(2, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::TruncatedGlobal, 0.1).unwrap();
        let d = st.drift_fem(&[2.0]).unwrap();
        let s = 1.0 / (1.0 + 0.1 * (144.0f64 / 3.0).sqrt());
        assert_relative_eq!(d[0], -8.0 * s, epsilon = 1e-12);
        assert!((d[0] + 4.7258).abs() < 1e-4);
    }

    #[test]
    fn gradient_global_constant_fields() {
        // FEM constant field: ||grad f||^2 = 2 f(A)^2 / h
        let p = fem_problem(10, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::GradientGlobal { alpha: 3.0 }, 0.1).unwrap();
        let d = st.drift_fem(&[2.0; 9]).unwrap();
        let s = 1.0 / (1.0 + 3.0 * 0.1 * 2.0 * 64.0 / 0.1);
        assert_relative_eq!(d[4], -8.0 * s, epsilon = 1e-12);
        // spectral constant field is not tamed at all
        let p = spectral_problem(16, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::GradientGlobal { alpha: 3.0 }, 0.1).unwrap();
        let Field::Modes(u) = InitialDatum::Constant(2.0).to_field(&p.space).unwrap() else {
            unreachable!()
        };
        let d = st.drift_spectral(&u).unwrap();
        assert_relative_eq!(d[0].re, -8.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_state_is_fixed_by_every_scheme() {
        for p in [
            fem_problem(8, Nonlinearity::Cubic),
            spectral_problem(8, Nonlinearity::Cubic),
        ] {
            for kind in SchemeKind::all(&p) {
                let st = Stepper::new(&p, kind, 0.1).unwrap();
                let z = p.space.zero_field();
                assert_eq!(st.advance(&z, &z).unwrap().0, z, "{}", kind.name());
            }
        }
    }

    #[test]
    fn blowup_is_detected_and_absorbing() {
        let p = fem_problem(10, Nonlinearity::Cubic);
        let st = Stepper::new(&p, SchemeKind::Sie, 0.1).unwrap();
        let mut s = st.initial_state(Field::Nodal(vec![100.0; 9])).unwrap();
        let dw = NoiseIncrement::Sine(vec![0.0; 9]);
        for _ in 0..10 {
            st.step(&mut s, &dw).unwrap();
        }
        let TrialStatus::BlownUp { step } = s.status else {
            panic!("no blowup: {:?}", s.status)
        };
        assert!(step <= 3);
        let frozen = s.clone();
        st.step(&mut s, &dw).unwrap();
        assert_eq!(s, frozen);
    }

    #[test]
    fn tamed_steps_agree_with_sie_for_small_data() {
        let p = fem_problem(32, Nonlinearity::Cubic);
        let mesh = FemMesh::new(32).unwrap();
        let u = Field::Nodal(
            mesh.nodes()
                .iter()
                .map(|x| 0.01 * (std::f64::consts::PI * x).sin())
                .collect(),
        );
        let z = p.space.zero_field();
        let tau = 1e-4;
        let sie = Stepper::new(&p, SchemeKind::Sie, tau)
            .unwrap()
            .advance(&u, &z)
            .unwrap()
            .0;
        for kind in SchemeKind::all(&p).into_iter().filter(|k| k.is_tamed()) {
            let v = Stepper::new(&p, kind, tau)
                .unwrap()
                .advance(&u, &z)
                .unwrap()
                .0;
            let diff = norm_l2(&v.sub(&sie).unwrap(), &p.space).unwrap();
            // |f f'| ~ 3e-8 at amplitude 0.01, plus slack for the global norms
            assert!(diff <= 10.0 * tau * tau * 3e-6, "{}: {diff}", kind.name());
        }
    }
}
