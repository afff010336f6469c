//! Q-Wiener increments with trace-class covariance.
//!
//! Every Gaussian draw is a pure function of `(seed, trial, step, mode)`: the
//! `(seed, trial)` pair keys a ChaCha8 generator, the step index selects its
//! stream and modes are drawn in increasing wavenumber order. Replaying a
//! stream therefore reproduces increments bit for bit, trials can run in any
//! order, and a coarser grid sees exactly the leading draws of a finer one.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, FemMesh, SineBasis};
use crate::field::{Field, Space};

const DOMAIN_TAG: [u8; 16] = *b"q-wiener/incr/v1";

/// Covariance operator `Q`, diagonal in the eigenbasis of the Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// `Q = (-Delta)^-1` with Dirichlet conditions on `[0, 1]`:
    /// `gamma_j = (j pi)^-2` on `sqrt(2) sin(j pi x)`, `j >= 1`.
    InverseDirichletLaplacian,
    /// `Q = (I - Delta)^-1` on the torus: `gamma_j = 1 / (1 + j^2)` on `e^{ijx}`.
    InversePeriodicHelmholtz,
    /// Explicit eigenvalues. Entry `i` belongs to sine mode `i + 1` on the
    /// Dirichlet interval and to wavenumbers `+-i` on the torus.
    Diagonal(Vec<f64>),
}

impl CovarianceSpec {
    pub fn zero() -> Self {
        CovarianceSpec::Diagonal(Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if let CovarianceSpec::Diagonal(g) = self {
            if g.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidConfig(
                    "covariance eigenvalues must be finite and >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Eigenvalue of sine mode `j >= 1` (Dirichlet interval).
    pub fn sine_eigenvalue(&self, j: usize) -> f64 {
        match self {
            CovarianceSpec::InverseDirichletLaplacian => {
                let a = j as f64 * std::f64::consts::PI;
                1.0 / (a * a)
            }
            CovarianceSpec::InversePeriodicHelmholtz => 1.0 / (1.0 + (j * j) as f64),
            CovarianceSpec::Diagonal(g) => g.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    /// Eigenvalue of wavenumber `j` (torus).
    pub fn fourier_eigenvalue(&self, j: i64) -> f64 {
        let a = j.unsigned_abs() as usize;
        match self {
            CovarianceSpec::InverseDirichletLaplacian => {
                if a == 0 {
                    0.0
                } else {
                    let x = a as f64 * std::f64::consts::PI;
                    1.0 / (x * x)
                }
            }
            CovarianceSpec::InversePeriodicHelmholtz => 1.0 / (1.0 + (a * a) as f64),
            CovarianceSpec::Diagonal(g) => g.get(a).copied().unwrap_or(0.0),
        }
    }

    /// Sum of the eigenvalues of the modes represented on `space`.
    pub fn trace(&self, space: &Space) -> f64 {
        match *space {
            Space::FemDirichlet { n } => (1..n).map(|j| self.sine_eigenvalue(j)).sum(),
            Space::SpectralPeriodic { n } => {
                let half = (n / 2) as i64;
                self.fourier_eigenvalue(0)
                    + 2.0 * (1..half).map(|j| self.fourier_eigenvalue(j)).sum::<f64>()
            }
        }
    }

    /// `sum_j lambda_j gamma_j`, the squared Hilbert-Schmidt norm of
    /// `(-Delta)^{1/2} Q^{1/2}` over the represented modes.
    pub fn hs_gradient_sq(&self, space: &Space) -> f64 {
        match *space {
            Space::FemDirichlet { n } => (1..n)
                .map(|j| (j as f64 * std::f64::consts::PI).powi(2) * self.sine_eigenvalue(j))
                .sum(),
            Space::SpectralPeriodic { n } => {
                2.0 * (1..(n / 2) as i64)
                    .map(|j| (j * j) as f64 * self.fourier_eigenvalue(j))
                    .sum::<f64>()
            }
        }
    }
}

/// How FEM noise is represented on the nodal basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FemNoiseRoute {
    /// Truncated sine expansion with `N - 1` modes; couplable across meshes.
    #[default]
    Eigen,
    /// `w` with `L^T w = z`, `K = L L^T`; only couplable in time.
    Cholesky,
}

/// One increment `delta W` in the representation of its stream.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseIncrement {
    /// Coefficients of `sqrt(2) sin(j pi x)`, `j = 1, 2, ...`.
    Sine(Vec<f64>),
    /// Nodal values at the interior FEM nodes.
    Nodal(Vec<f64>),
    /// Fourier coefficients in FFT order.
    Fourier(Vec<Complex64>),
}

impl NoiseIncrement {
    /// Sum of squared coefficients in the covariance eigenbasis. For
    /// eigenbasis increments `E[energy] = tau * trace`.
    pub fn energy(&self) -> f64 {
        match self {
            NoiseIncrement::Sine(c) | NoiseIncrement::Nodal(c) => c.iter().map(|x| x * x).sum(),
            NoiseIncrement::Fourier(m) => m.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    pub fn zero_like(&self) -> NoiseIncrement {
        match self {
            NoiseIncrement::Sine(c) => NoiseIncrement::Sine(vec![0.0; c.len()]),
            NoiseIncrement::Nodal(c) => NoiseIncrement::Nodal(vec![0.0; c.len()]),
            NoiseIncrement::Fourier(m) => {
                NoiseIncrement::Fourier(vec![Complex64::new(0.0, 0.0); m.len()])
            }
        }
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &NoiseIncrement) -> Result<()> {
        match (self, other) {
            (NoiseIncrement::Sine(a), NoiseIncrement::Sine(b))
            | (NoiseIncrement::Nodal(a), NoiseIncrement::Nodal(b))
                if a.len() == b.len() =>
            {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(())
            }
            (NoiseIncrement::Fourier(a), NoiseIncrement::Fourier(b)) if a.len() == b.len() => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(())
            }
            _ => Err(Error::CouplingMismatch(
                "increments have different representations".into(),
            )),
        }
    }

    /// Representation of the same increment on a coarser (or equal) `space`:
    /// sine coefficients are truncated, Fourier modes restricted.
    pub fn project(&self, space: &Space) -> Result<NoiseIncrement> {
        match (self, space) {
            (NoiseIncrement::Sine(c), Space::FemDirichlet { n }) => {
                let m = (n - 1).min(c.len());
                Ok(NoiseIncrement::Sine(c[..m].to_vec()))
            }
            (NoiseIncrement::Nodal(c), Space::FemDirichlet { n }) if c.len() == n - 1 => {
                Ok(self.clone())
            }
            (NoiseIncrement::Fourier(m), Space::SpectralPeriodic { n }) if m.len() >= *n => {
                let fine = Space::SpectralPeriodic { n: m.len() };
                match Field::Modes(m.clone()).restrict_to(&fine, space)? {
                    Field::Modes(r) => Ok(NoiseIncrement::Fourier(r)),
                    Field::Nodal(_) => unreachable!(),
                }
            }
            _ => Err(Error::CouplingMismatch(format!(
                "cannot project increment onto {space:?}"
            ))),
        }
    }

    /// The increment as a field on `space` (nodal values or Fourier modes).
    pub fn to_field(&self, space: &Space, basis: Option<&SineBasis>) -> Result<Field> {
        match (self, space) {
            (NoiseIncrement::Sine(c), Space::FemDirichlet { n }) => {
                let mut out = vec![0.0; n - 1];
                match basis {
                    Some(b) => b.synthesize(c, &mut out),
                    None => SineBasis::new(&FemMesh::new(*n)?, c.len().min(n - 1))
                        .synthesize(c, &mut out),
                }
                Ok(Field::Nodal(out))
            }
            (NoiseIncrement::Nodal(c), Space::FemDirichlet { n }) if c.len() == n - 1 => {
                Ok(Field::Nodal(c.clone()))
            }
            (NoiseIncrement::Fourier(m), Space::SpectralPeriodic { n }) if m.len() == *n => {
                Ok(Field::Modes(m.clone()))
            }
            _ => Err(Error::BasisMismatch(format!(
                "increment does not live on {space:?}"
            ))),
        }
    }
}

/// Sum of `r` consecutive fine increments: the coarse-step increment of the
/// same Brownian path.
pub fn coarsen_increments(fine: &[NoiseIncrement]) -> Result<NoiseIncrement> {
    let first = fine
        .first()
        .ok_or_else(|| Error::CouplingMismatch("no increments to coarsen".into()))?;
    let mut acc = first.clone();
    for inc in &fine[1..] {
        acc.accumulate(inc)?;
    }
    Ok(acc)
}

/// Deterministic source of increments for one Monte Carlo trial.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: [u8; 32],
    space: Space,
    route: FemNoiseRoute,
    /// `sqrt(gamma_j)` per drawn mode.
    std_dev: Vec<f64>,
    /// Cholesky factor of the stiffness matrix (diagonal, sub-diagonal).
    chol: Option<(Vec<f64>, Vec<f64>)>,
}

impl NoiseStream {
    pub fn new(
        seed: u64,
        trial: u64,
        covariance: &CovarianceSpec,
        space: &Space,
        route: FemNoiseRoute,
    ) -> Result<Self> {
        covariance.validate()?;
        space.validate()?;
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&trial.to_le_bytes());
        key[16..].copy_from_slice(&DOMAIN_TAG);
        let mut chol = None;
        let std_dev = match (*space, route) {
            (Space::FemDirichlet { n }, FemNoiseRoute::Eigen) => (1..n)
                .map(|j| covariance.sine_eigenvalue(j).sqrt())
                .collect(),
            (Space::FemDirichlet { n }, FemNoiseRoute::Cholesky) => {
                if *covariance != CovarianceSpec::InverseDirichletLaplacian {
                    return Err(Error::InvalidConfig(
                        "the Cholesky noise route realizes Q = (-Delta)^-1 only".into(),
                    ));
                }
                chol = Some(cholesky_tridiag(&assemble_stiffness(&FemMesh::new(n)?)));
                vec![1.0; n - 1]
            }
            (Space::SpectralPeriodic { n }, _) => (0..(n / 2) as i64)
                .map(|j| covariance.fourier_eigenvalue(j).sqrt())
                .collect(),
        };
        Ok(NoiseStream {
            key,
            space: *space,
            route,
            std_dev,
            chol,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn route(&self) -> FemNoiseRoute {
        self.route
    }

    fn rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(step);
        rng
    }

    /// Increment over `[t_k, t_k + tau]`.
    pub fn sample_increment(&self, step: u64, tau: f64) -> Result<NoiseIncrement> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidTimeStep(tau));
        }
        let mut rng = self.rng(step);
        let sq = tau.sqrt();
        match self.space {
            Space::FemDirichlet { .. } => {
                let mut c: Vec<f64> = self
                    .std_dev
                    .iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sq * s * z
                    })
                    .collect();
                if let Some((diag, sub)) = &self.chol {
                    // back substitution L^T w = z
                    let n = c.len();
                    c[n - 1] /= diag[n - 1];
                    for i in (0..n - 1).rev() {
                        c[i] = (c[i] - sub[i] * c[i + 1]) / diag[i];
                    }
                    Ok(NoiseIncrement::Nodal(c))
                } else {
                    Ok(NoiseIncrement::Sine(c))
                }
            }
            Space::SpectralPeriodic { n } => {
                let mut m = vec![Complex64::new(0.0, 0.0); n];
                let z0: f64 = StandardNormal.sample(&mut rng);
                m[0] = Complex64::new(sq * self.std_dev[0] * z0, 0.0);
                let half = std::f64::consts::FRAC_1_SQRT_2;
                for j in 1..n / 2 {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    let z = Complex64::new(re * half, im * half) * (sq * self.std_dev[j]);
                    m[j] = z;
                    m[n - j] = z.conj();
                }
                Ok(NoiseIncrement::Fourier(m))
            }
        }
    }
}

/// `K = L L^T` for a symmetric positive definite tridiagonal `K`; returns the
/// diagonal and sub-diagonal of `L`.
fn cholesky_tridiag(k: &crate::fem::TridiagonalMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = k.len();
    let mut d = vec![0.0; n];
    let mut s = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        let mut a = k.diag[i];
        if i > 0 {
            s[i - 1] = k.sub[i - 1] / d[i - 1];
            a -= s[i - 1] * s[i - 1];
        }
        d[i] = a.sqrt();
    }
    (d, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_covariance_gives_zero_increment() {
        for space in [
            Space::FemDirichlet { n: 10 },
            Space::SpectralPeriodic { n: 16 },
        ] {
            let s = NoiseStream::new(1, 2, &CovarianceSpec::zero(), &space, FemNoiseRoute::Eigen)
                .unwrap();
            assert_eq!(s.sample_increment(3, 0.1).unwrap().energy(), 0.0);
        }
    }

    #[test]
    fn rejects_nonpositive_tau() {
        let s = NoiseStream::new(
            0,
            0,
            &CovarianceSpec::InverseDirichletLaplacian,
            &Space::FemDirichlet { n: 4 },
            FemNoiseRoute::Eigen,
        )
        .unwrap();
        assert!(s.sample_increment(0, 0.0).is_err());
        assert!(s.sample_increment(0, -1.0).is_err());
    }

    #[test]
    fn replay_is_bit_exact() {
        let space = Space::SpectralPeriodic { n: 32 };
        let cov = CovarianceSpec::InversePeriodicHelmholtz;
        let a = NoiseStream::new(9, 4, &cov, &space, FemNoiseRoute::Eigen).unwrap();
        let b = NoiseStream::new(9, 4, &cov, &space, FemNoiseRoute::Eigen).unwrap();
        for k in [0u64, 1, 17, 1 << 40] {
            assert_eq!(
                a.sample_increment(k, 0.01).unwrap(),
                b.sample_increment(k, 0.01).unwrap()
            );
        }
        let c = NoiseStream::new(9, 5, &cov, &space, FemNoiseRoute::Eigen).unwrap();
        assert_ne!(
            a.sample_increment(0, 0.01).unwrap(),
            c.sample_increment(0, 0.01).unwrap()
        );
    }

    #[test]
    fn coarse_mesh_sees_leading_draws() {
        let cov = CovarianceSpec::InverseDirichletLaplacian;
        let fine = NoiseStream::new(
            3,
            1,
            &cov,
            &Space::FemDirichlet { n: 64 },
            FemNoiseRoute::Eigen,
        )
        .unwrap();
        let coarse = NoiseStream::new(
            3,
            1,
            &cov,
            &Space::FemDirichlet { n: 16 },
            FemNoiseRoute::Eigen,
        )
        .unwrap();
        let f = fine.sample_increment(5, 0.1).unwrap();
        let c = coarse.sample_increment(5, 0.1).unwrap();
        assert_eq!(f.project(&Space::FemDirichlet { n: 16 }).unwrap(), c);

        let cov = CovarianceSpec::InversePeriodicHelmholtz;
        let fine = NoiseStream::new(
            3,
            1,
            &cov,
            &Space::SpectralPeriodic { n: 64 },
            FemNoiseRoute::Eigen,
        )
        .unwrap();
        let coarse = NoiseStream::new(
            3,
            1,
            &cov,
            &Space::SpectralPeriodic { n: 16 },
            FemNoiseRoute::Eigen,
        )
        .unwrap();
        let f = fine.sample_increment(5, 0.1).unwrap();
        let c = coarse.sample_increment(5, 0.1).unwrap();
        assert_eq!(f.project(&Space::SpectralPeriodic { n: 16 }).unwrap(), c);
    }

    #[test]
    fn coarsen_examples() {
        let a = NoiseIncrement::Sine(vec![1.0, 2.0]);
        assert_eq!(coarsen_increments(std::slice::from_ref(&a)).unwrap(), a);
        let z = a.zero_like();
        assert_eq!(coarsen_increments(&[z.clone(), z.clone()]).unwrap(), z);
        let b = NoiseIncrement::Sine(vec![0.5, -1.0]);
        assert_eq!(
            coarsen_increments(&[a.clone(), b]).unwrap(),
            NoiseIncrement::Sine(vec![1.5, 1.0])
        );
        assert!(coarsen_increments(&[a, NoiseIncrement::Nodal(vec![0.0, 0.0])]).is_err());
        assert!(coarsen_increments(&[]).is_err());
    }

    #[test]
    fn traces() {
        assert_eq!(
            CovarianceSpec::zero().trace(&Space::FemDirichlet { n: 10 }),
            0.0
        );
        let big = Space::FemDirichlet { n: 1 << 20 };
        let t = CovarianceSpec::InverseDirichletLaplacian.trace(&big);
        // tail of sum 1/(j pi)^2 beyond J is about 1/(pi^2 J)
        assert!((t - 1.0 / 6.0).abs() < 1e-6 && t < 1.0 / 6.0);
        let t =
            CovarianceSpec::InversePeriodicHelmholtz.trace(&Space::SpectralPeriodic { n: 1 << 20 });
        let pi = std::f64::consts::PI;
        let exact = pi / pi.tanh();
        assert!((t - exact).abs() < 1e-5 && t < exact);
    }

    #[test]
    fn cholesky_route_factor() {
        let mesh = FemMesh::new(8).unwrap();
        let k = assemble_stiffness(&mesh);
        let (d, s) = cholesky_tridiag(&k);
        // reconstruct L L^T
        for i in 0..7 {
            let diag = d[i] * d[i] + if i > 0 { s[i - 1] * s[i - 1] } else { 0.0 };
            assert!((diag - k.diag[i]).abs() < 1e-12);
            if i > 0 {
                assert!((s[i - 1] * d[i - 1] - k.sub[i - 1]).abs() < 1e-12);
            }
        }
    }
}
