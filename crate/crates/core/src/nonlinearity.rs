//! Reaction terms `f(u)` of the semilinear equation and their derivatives.

/// A scalar reaction term applied pointwise (Nemytskii operator).
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `f(u) = b2 u - b3 u^3`.
    AllenCahn { b2: f64, b3: f64 },
    /// `f(u) = -u^3`.
    Cubic,
    /// `f(u) = -u |u|^(q-2)` with `q >= 2`.
    PowerLaw { q: f64 },
    /// `f(u) = c0 + c1 u + c2 u^2 + ...`, evaluated by Horner's rule.
    Polynomial(Vec<f64>),
}

impl Nonlinearity {
    /// The identically zero reaction term (pure stochastic heat equation).
    pub fn zero() -> Self {
        Nonlinearity::Polynomial(Vec::new())
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn { b2, b3 } => b2 * u - b3 * u * u * u,
            Nonlinearity::Cubic => -u * u * u,
            Nonlinearity::PowerLaw { q } => -u * u.abs().powf(q - 2.0),
            Nonlinearity::Polynomial(c) => horner(c, u),
        }
    }

    pub fn eval_prime(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn { b2, b3 } => b2 - 3.0 * b3 * u * u,
            Nonlinearity::Cubic => -3.0 * u * u,
            Nonlinearity::PowerLaw { q } => -(q - 1.0) * u.abs().powf(q - 2.0),
            Nonlinearity::Polynomial(c) => {
                // Horner on the derivative coefficients k * c_k.
                let mut acc = 0.0;
                for (k, ck) in c.iter().enumerate().skip(1).rev() {
                    acc = acc * u + k as f64 * ck;
                }
                acc
            }
        }
    }

    /// Polynomial degree, or the growth exponent `q - 1` for power laws.
    pub fn degree(&self) -> f64 {
        match self {
            Nonlinearity::AllenCahn { b3, .. } if *b3 == 0.0 => 1.0,
            Nonlinearity::AllenCahn { .. } | Nonlinearity::Cubic => 3.0,
            Nonlinearity::PowerLaw { q } => q - 1.0,
            Nonlinearity::Polynomial(c) => match trimmed(c).len() {
                0 => 0.0,
                n => (n - 1) as f64,
            },
        }
    }

    /// Coefficient of the highest-order term.
    pub fn leading_coeff(&self) -> f64 {
        match self {
            Nonlinearity::AllenCahn { b2, b3 } => {
                if *b3 == 0.0 {
                    *b2
                } else {
                    -b3
                }
            }
            Nonlinearity::Cubic | Nonlinearity::PowerLaw { .. } => -1.0,
            Nonlinearity::Polynomial(c) => trimmed(c).last().copied().unwrap_or(0.0),
        }
    }

    /// Default taming strength `alpha = p |a_p|`.
    pub fn default_alpha(&self) -> f64 {
        let a = self.degree() * self.leading_coeff().abs();
        if a > 0.0 {
            a
        } else {
            1.0
        }
    }
}

fn trimmed(c: &[f64]) -> &[f64] {
    let n = c.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
    &c[..n]
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
}
