//! Discrete fields, spatial discretizations and problem definitions.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::{self, FemMesh};
use crate::noise::CovarianceSpec;
use crate::nonlinearity::Nonlinearity;
use crate::spectral::SpectralGrid;

/// Spatial discretization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// P1 finite elements on `[0, 1]` with `N` cells, Dirichlet conditions.
    FemDirichlet { n: usize },
    /// Pseudo-spectral Galerkin on `[0, 2 pi]` with `N = 2^k` modes.
    SpectralPeriodic { n: usize },
}

impl Space {
    pub fn n(&self) -> usize {
        match *self {
            Space::FemDirichlet { n } | Space::SpectralPeriodic { n } => n,
        }
    }

    /// Mesh size: `1/N` or `2 pi / N`.
    pub fn h(&self) -> f64 {
        match *self {
            Space::FemDirichlet { n } => 1.0 / n as f64,
            Space::SpectralPeriodic { n } => 2.0 * std::f64::consts::PI / n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Space::FemDirichlet { n } => FemMesh::new(n).map(|_| ()),
            Space::SpectralPeriodic { n } => SpectralGrid::new(n).map(|_| ()),
        }
    }

    pub fn zero_field(&self) -> Field {
        match *self {
            Space::FemDirichlet { n } => Field::Nodal(vec![0.0; n - 1]),
            Space::SpectralPeriodic { n } => Field::Modes(vec![Complex64::new(0.0, 0.0); n]),
        }
    }
}

/// Solution state in the coefficient basis of one discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    /// Interior nodal values of a P1 function (length `N - 1`).
    Nodal(Vec<f64>),
    /// Fourier coefficients in FFT order (length `N`, conjugate symmetric).
    Modes(Vec<Complex64>),
}

impl Field {
    pub fn len(&self) -> usize {
        match self {
            Field::Nodal(v) => v.len(),
            Field::Modes(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Field::Nodal(v) => v.iter().all(|x| x.is_finite()),
            Field::Modes(m) => m.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            Field::Nodal(v) => v.iter_mut().for_each(|x| *x *= s),
            Field::Modes(m) => m.iter_mut().for_each(|z| *z *= s),
        }
    }

    /// `self - other`, both in the same basis.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        match (self, other) {
            (Field::Nodal(a), Field::Nodal(b)) if a.len() == b.len() => {
                Ok(Field::Nodal(a.iter().zip(b).map(|(x, y)| x - y).collect()))
            }
            (Field::Modes(a), Field::Modes(b)) if a.len() == b.len() => {
                Ok(Field::Modes(a.iter().zip(b).map(|(x, y)| x - y).collect()))
            }
            _ => Err(Error::BasisMismatch(
                "cannot subtract fields of different bases".into(),
            )),
        }
    }

    /// Check the field belongs to `space`.
    pub fn check(&self, space: &Space) -> Result<()> {
        match (self, space) {
            (Field::Nodal(v), Space::FemDirichlet { n }) if v.len() == n - 1 => Ok(()),
            (Field::Modes(m), Space::SpectralPeriodic { n }) if m.len() == *n => Ok(()),
            _ => Err(Error::BasisMismatch(format!(
                "field of length {} does not belong to {:?}",
                self.len(),
                space
            ))),
        }
    }

    /// Restrict a field on a refined discretization to a coarser one: nodal
    /// restriction for FEM, mode truncation for Fourier.
    pub fn restrict_to(&self, fine: &Space, coarse: &Space) -> Result<Field> {
        self.check(fine)?;
        match (self, fine, coarse) {
            (Field::Nodal(v), Space::FemDirichlet { n: nf }, Space::FemDirichlet { n: nc })
                if nf % nc == 0 =>
            {
                let r = nf / nc;
                Ok(Field::Nodal((1..*nc).map(|i| v[i * r - 1]).collect()))
            }
            (
                Field::Modes(m),
                Space::SpectralPeriodic { n: nf },
                Space::SpectralPeriodic { n: nc },
            ) if nf >= nc => {
                let mut out = vec![Complex64::new(0.0, 0.0); *nc];
                for j in 0..nc / 2 {
                    out[j] = m[j];
                }
                for j in 1..nc / 2 {
                    out[nc - j] = m[nf - j];
                }
                Ok(Field::Modes(out))
            }
            _ => Err(Error::BasisMismatch(format!(
                "{fine:?} is not a refinement of {coarse:?}"
            ))),
        }
    }
}

/// Squared L2 norm: `u^T M u` for FEM, `2 pi sum |u_hat|^2` for Fourier.
pub fn norm_l2_sq(field: &Field, space: &Space) -> Result<f64> {
    field.check(space)?;
    Ok(match field {
        Field::Nodal(v) => {
            let h = space.h();
            fem::tridiag_const_quad(v, 2.0 * h / 3.0, h / 6.0)
        }
        Field::Modes(m) => 2.0 * std::f64::consts::PI * m.iter().map(|z| z.norm_sqr()).sum::<f64>(),
    })
}

/// Squared L2 norm of the gradient: `u^T K u` or `2 pi sum j^2 |u_hat|^2`.
pub fn grad_norm_sq(field: &Field, space: &Space) -> Result<f64> {
    field.check(space)?;
    Ok(match field {
        Field::Nodal(v) => {
            let h = space.h();
            fem::tridiag_const_quad(v, 2.0 / h, -1.0 / h)
        }
        Field::Modes(m) => {
            let n = m.len();
            2.0 * std::f64::consts::PI
                * m.iter()
                    .enumerate()
                    .map(|(k, z)| {
                        let j = crate::spectral::wavenumber(n, k) as f64;
                        j * j * z.norm_sqr()
                    })
                    .sum::<f64>()
        }
    })
}

pub fn norm_l2(field: &Field, space: &Space) -> Result<f64> {
    Ok(norm_l2_sq(field, space)?.max(0.0).sqrt())
}

/// `sqrt(||u||^2 + ||grad u||^2)`.
pub fn norm_h1(field: &Field, space: &Space) -> Result<f64> {
    Ok((norm_l2_sq(field, space)? + grad_norm_sq(field, space)?)
        .max(0.0)
        .sqrt())
}

/// Max absolute nodal value, or max over the collocation points for Fourier.
pub fn norm_inf(field: &Field, space: &Space) -> Result<f64> {
    field.check(space)?;
    Ok(match field {
        Field::Nodal(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        Field::Modes(m) => {
            let grid = SpectralGrid::new(m.len())?;
            grid.inverse(m).iter().fold(0.0, |a, x| a.max(x.abs()))
        }
    })
}

/// Initial condition `u_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    Constant(f64),
    /// `a sin(k pi x)` on `[0, 1]`.
    SineDirichlet {
        amplitude: f64,
        frequency: u32,
    },
    /// `a sin(k x)` on `[0, 2 pi]`.
    SinePeriodic {
        amplitude: f64,
        frequency: u32,
    },
    /// Samples at the interior nodes (FEM) or collocation points (Fourier).
    Custom(Vec<f64>),
}

impl InitialDatum {
    pub fn to_field(&self, space: &Space) -> Result<Field> {
        space.validate()?;
        match (self, space) {
            (InitialDatum::Constant(c), Space::FemDirichlet { n }) => {
                Ok(Field::Nodal(vec![*c; n - 1]))
            }
            (InitialDatum::Constant(c), Space::SpectralPeriodic { n }) => {
                let mut m = vec![Complex64::new(0.0, 0.0); *n];
                m[0] = Complex64::new(*c, 0.0);
                Ok(Field::Modes(m))
            }
            (
                InitialDatum::SineDirichlet {
                    amplitude,
                    frequency,
                },
                Space::FemDirichlet { n },
            ) => {
                let mesh = FemMesh::new(*n)?;
                Ok(Field::Nodal(
                    mesh.nodes()
                        .iter()
                        .map(|x| amplitude * (*frequency as f64 * std::f64::consts::PI * x).sin())
                        .collect(),
                ))
            }
            (
                InitialDatum::SinePeriodic {
                    amplitude,
                    frequency,
                },
                Space::SpectralPeriodic { n },
            ) => {
                let grid = SpectralGrid::new(*n)?;
                let k = *frequency as i64;
                let (Some(pos), Some(neg)) = (grid.index_of(k), grid.index_of(-k)) else {
                    return Err(Error::InvalidConfig(format!(
                        "frequency {k} is not resolved on N = {n}"
                    )));
                };
                let mut m = vec![Complex64::new(0.0, 0.0); *n];
                // a sin(kx) = (a / 2i) e^{ikx} - (a / 2i) e^{-ikx}
                m[pos] += Complex64::new(0.0, -amplitude / 2.0);
                m[neg] += Complex64::new(0.0, amplitude / 2.0);
                Ok(Field::Modes(m))
            }
            (InitialDatum::Custom(v), Space::FemDirichlet { n }) if v.len() == n - 1 => {
                Ok(Field::Nodal(v.clone()))
            }
            (InitialDatum::Custom(v), Space::SpectralPeriodic { n }) if v.len() == *n => {
                Ok(Field::Modes(SpectralGrid::new(*n)?.forward(v)?))
            }
            _ => Err(Error::InvalidConfig(format!(
                "initial datum {self:?} is not representable on {space:?}"
            ))),
        }
    }
}

/// A stochastic PDE instance `du = (Delta u + f(u)) dt + sigma dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub nonlinearity: Nonlinearity,
    pub covariance: CovarianceSpec,
    pub space: Space,
    pub initial: InitialDatum,
    /// Taming strength of the gradient-global scheme; `None` means `p |a_p|`.
    pub taming_alpha: Option<f64>,
    /// Multiplier `sigma` of the noise increments.
    pub noise_amplitude: f64,
}

impl Problem {
    pub fn new(
        nonlinearity: Nonlinearity,
        covariance: CovarianceSpec,
        space: Space,
        initial: InitialDatum,
    ) -> Self {
        Problem {
            nonlinearity,
            covariance,
            space,
            initial,
            taming_alpha: None,
            noise_amplitude: 1.0,
        }
    }

    /// Cubic reaction `-u^3` with the default covariance of the space.
    pub fn cubic(space: Space, initial: InitialDatum) -> Self {
        let cov = match space {
            Space::FemDirichlet { .. } => CovarianceSpec::InverseDirichletLaplacian,
            Space::SpectralPeriodic { .. } => CovarianceSpec::InversePeriodicHelmholtz,
        };
        Problem::new(Nonlinearity::Cubic, cov, space, initial)
    }

    pub fn alpha(&self) -> f64 {
        self.taming_alpha
            .unwrap_or_else(|| self.nonlinearity.default_alpha())
    }

    pub fn initial_field(&self) -> Result<Field> {
        self.initial.to_field(&self.space)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if let Some(a) = self.taming_alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "taming alpha must be > 0, got {a}"
                )));
            }
        }
        if !self.noise_amplitude.is_finite() {
            return Err(Error::InvalidConfig(
                "noise amplitude must be finite".into(),
            ));
        }
        self.covariance.validate()?;
        self.initial_field().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn l2_examples() {
        let s = Space::SpectralPeriodic { n: 8 };
        assert_eq!(norm_l2(&s.zero_field(), &s).unwrap(), 0.0);
        let mut m = vec![Complex64::new(0.0, 0.0); 8];
        m[0] = Complex64::new(1.0, 0.0);
        assert_relative_eq!(
            norm_l2(&Field::Modes(m), &s).unwrap(),
            (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-14
        );
        let f = Space::FemDirichlet { n: 2 };
        assert_relative_eq!(
            norm_l2(&Field::Nodal(vec![1.0]), &f).unwrap(),
            (1.0f64 / 3.0).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn h1_examples() {
        let s = Space::SpectralPeriodic { n: 8 };
        assert_eq!(norm_h1(&s.zero_field(), &s).unwrap(), 0.0);
        let mut m = vec![Complex64::new(0.0, 0.0); 8];
        m[1] = Complex64::new(0.5, 0.0);
        m[7] = Complex64::new(0.5, 0.0);
        assert_relative_eq!(
            norm_h1(&Field::Modes(m), &s).unwrap(),
            (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-14
        );
        let f = Space::FemDirichlet { n: 2 };
        assert_relative_eq!(
            norm_h1(&Field::Nodal(vec![1.0]), &f).unwrap(),
            (1.0f64 / 3.0 + 4.0).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn inf_examples() {
        let f = Space::FemDirichlet { n: 4 };
        assert_eq!(norm_inf(&f.zero_field(), &f).unwrap(), 0.0);
        assert_eq!(
            norm_inf(&Field::Nodal(vec![1.0, -3.0, 2.0]), &f).unwrap(),
            3.0
        );
        let s = Space::SpectralPeriodic { n: 16 };
        let c = InitialDatum::Constant(5.0).to_field(&s).unwrap();
        assert_relative_eq!(norm_inf(&c, &s).unwrap(), 5.0, epsilon = 1e-13);
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let f = Space::FemDirichlet { n: 4 };
        let s = Space::SpectralPeriodic { n: 4 };
        assert!(norm_l2(&s.zero_field(), &f).is_err());
        assert!(norm_h1(&Field::Nodal(vec![0.0; 5]), &f).is_err());
        assert!(norm_inf(&f.zero_field(), &s).is_err());
    }

    #[test]
    fn initial_data_representability() {
        let f = Space::FemDirichlet { n: 10 };
        let s = Space::SpectralPeriodic { n: 16 };
        let sd = InitialDatum::SineDirichlet {
            amplitude: 10.0,
            frequency: 10,
        };
        let sp = InitialDatum::SinePeriodic {
            amplitude: 10.0,
            frequency: 3,
        };
        assert!(sd.to_field(&f).is_ok());
        assert!(sd.to_field(&s).is_err());
        assert!(sp.to_field(&f).is_err());
        let field = sp.to_field(&s).unwrap();
        let grid = SpectralGrid::new(16).unwrap();
        let vals = grid.inverse(match &field {
            Field::Modes(m) => m,
            _ => unreachable!(),
        });
        for (x, v) in grid.points().iter().zip(vals) {
            assert!((10.0 * (3.0 * x).sin() - v).abs() < 1e-12);
        }
        assert!(InitialDatum::SinePeriodic {
            amplitude: 1.0,
            frequency: 8
        }
        .to_field(&s)
        .is_err());
    }

    #[test]
    fn restriction() {
        let fine = Space::FemDirichlet { n: 8 };
        let coarse = Space::FemDirichlet { n: 4 };
        let v = Field::Nodal((1..8).map(|i| i as f64).collect());
        assert_eq!(
            v.restrict_to(&fine, &coarse).unwrap(),
            Field::Nodal(vec![2.0, 4.0, 6.0])
        );
        assert!(v.restrict_to(&fine, &Space::FemDirichlet { n: 3 }).is_err());
        let sf = Space::SpectralPeriodic { n: 16 };
        let sc = Space::SpectralPeriodic { n: 8 };
        let m = InitialDatum::SinePeriodic {
            amplitude: 1.0,
            frequency: 2,
        }
        .to_field(&sf)
        .unwrap();
        let r = m.restrict_to(&sf, &sc).unwrap();
        assert_eq!(
            r,
            InitialDatum::SinePeriodic {
                amplitude: 1.0,
                frequency: 2
            }
            .to_field(&sc)
            .unwrap()
        );
    }

    #[test]
    fn default_alpha() {
        let p = Problem::cubic(Space::FemDirichlet { n: 10 }, InitialDatum::Constant(0.0));
        assert_eq!(p.alpha(), 3.0);
        assert!(p.validate().is_ok());
    }
}
