//! P1 finite elements on the uniform mesh of `[0, 1]` with homogeneous
//! Dirichlet conditions.
//!
//! Fields store the `N - 1` interior nodal values; the two boundary values are
//! structurally zero. Mass and stiffness matrices are tridiagonal and every
//! implicit solve goes through the Thomas algorithm.

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;

/// Which squared norm of the nonlinearity a global taming factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradNormVariant {
    /// `||f'(u)||^2`, the squared L2 norm of the function `f'(u)`.
    DerivativeL2,
    /// `||grad f(u)||^2`, the squared L2 norm of the gradient of `f(u)`.
    GradientOfF,
}

/// Uniform mesh `0 = x_0 < x_1 < ... < x_N = 1`, `h = 1/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FemMesh {
    n: usize,
}

impl FemMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "FEM mesh needs N >= 2 cells, got {n}"
            )));
        }
        Ok(FemMesh { n })
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.n
    }

    /// Number of interior nodes `N - 1`.
    pub fn dofs(&self) -> usize {
        self.n - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Interior node coordinates `x_j = j h`, `j = 1..N-1`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.n).map(|j| j as f64 * self.h()).collect()
    }
}

/// Tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn constant(n: usize, off: f64, diag: f64) -> Self {
        TridiagonalMatrix {
            sub: vec![off; n.saturating_sub(1)],
            diag: vec![diag; n],
            sup: vec![off; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.sub == self.sup
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &TridiagonalMatrix) -> TridiagonalMatrix {
        let comb = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect();
        TridiagonalMatrix {
            sub: comb(&self.sub, &other.sub),
            diag: comb(&self.diag, &other.diag),
            sup: comb(&self.sup, &other.sup),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = self.diag[i] * y[i];
            if i > 0 {
                row += self.sub[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                row += self.sup[i] * y[i + 1];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// LU factorization without pivoting (Thomas algorithm).
    pub fn factor(&self) -> Result<ThomasFactor> {
        let n = self.len();
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut pivots = vec![0.0; n];
        for i in 0..n {
            let p = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.sub[i - 1] * upper[i - 1]
            };
            if p == 0.0 || !p.is_finite() {
                return Err(Error::SingularPivot(i));
            }
            pivots[i] = p;
            if i + 1 < n {
                upper[i] = self.sup[i] / p;
            }
        }
        Ok(ThomasFactor {
            sub: self.sub.clone(),
            upper,
            pivots,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.factor()?.solve_in_place(&mut x);
        Ok(x)
    }
}

/// A factored tridiagonal matrix, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct ThomasFactor {
    sub: Vec<f64>,
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl ThomasFactor {
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.pivots.len();
        debug_assert_eq!(x.len(), n);
        if n == 0 {
            return;
        }
        x[0] /= self.pivots[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i - 1] * x[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }
}

/// Consistent P1 mass matrix: diagonal `2h/3`, off-diagonal `h/6`.
pub fn assemble_mass(mesh: &FemMesh) -> TridiagonalMatrix {
    let h = mesh.h();
    TridiagonalMatrix::constant(mesh.dofs(), h / 6.0, 2.0 * h / 3.0)
}

/// P1 stiffness matrix: diagonal `2/h`, off-diagonal `-1/h`.
pub fn assemble_stiffness(mesh: &FemMesh) -> TridiagonalMatrix {
    let h = mesh.h();
    TridiagonalMatrix::constant(mesh.dofs(), -1.0 / h, 2.0 / h)
}

/// Solve `(M + tau K) u = rhs`.
pub fn solve_shifted(mesh: &FemMesh, tau: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidTimeStep(tau));
    }
    if rhs.len() != mesh.dofs() {
        return Err(Error::BasisMismatch(format!(
            "rhs has {} entries, mesh has {} interior nodes",
            rhs.len(),
            mesh.dofs()
        )));
    }
    assemble_mass(mesh)
        .add_scaled(tau, &assemble_stiffness(mesh))
        .solve(rhs)
}

/// Nodal interpolant `I_h f(u_h)`.
pub fn interp_nonlinearity(nl: &Nonlinearity, values: &[f64]) -> Vec<f64> {
    values.iter().map(|&u| nl.eval(u)).collect()
}

/// `f'(u)^T M f'(u)` or `f(u)^T K f(u)` over the interior nodes.
pub fn gradnorm_sq_of_f(
    mesh: &FemMesh,
    nl: &Nonlinearity,
    values: &[f64],
    variant: GradNormVariant,
) -> f64 {
    let h = mesh.h();
    match variant {
        GradNormVariant::DerivativeL2 => {
            let g: Vec<f64> = values.iter().map(|&u| nl.eval_prime(u)).collect();
            tridiag_const_quad(&g, 2.0 * h / 3.0, h / 6.0)
        }
        GradNormVariant::GradientOfF => {
            let g: Vec<f64> = values.iter().map(|&u| nl.eval(u)).collect();
            tridiag_const_quad(&g, 2.0 / h, -1.0 / h)
        }
    }
}

/// Quadratic form of a constant-coefficient symmetric tridiagonal matrix.
pub(crate) fn tridiag_const_quad(x: &[f64], diag: f64, off: f64) -> f64 {
    let mut d = 0.0;
    let mut o = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        d += xi * xi;
        if i + 1 < x.len() {
            o += xi * x[i + 1];
        }
    }
    diag * d + 2.0 * off * o
}

/// Nodal values of the orthonormal sine eigenfunctions `sqrt(2) sin(j pi x)`.
///
/// Stored by mode: column `j - 1` holds mode `j` at the interior nodes.
#[derive(Debug, Clone)]
pub struct SineBasis {
    dofs: usize,
    modes: usize,
    table: Vec<f64>,
}

impl SineBasis {
    pub fn new(mesh: &FemMesh, modes: usize) -> Self {
        let dofs = mesh.dofs();
        let n = mesh.cells() as f64;
        let mut table = Vec::with_capacity(dofs * modes);
        for j in 1..=modes {
            for i in 1..=dofs {
                // reduce the angle before sin() so that symmetric entries agree
                let k = (i * j) % (2 * mesh.cells());
                table.push(std::f64::consts::SQRT_2 * (std::f64::consts::PI * k as f64 / n).sin());
            }
        }
        SineBasis { dofs, modes, table }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Nodal values of `sum_j c_j sqrt(2) sin(j pi x)`; extra coefficients
    /// beyond the table are ignored.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        let out = &mut out[..self.dofs];
        out.fill(0.0);
        for (col, &c) in self.table.chunks_exact(self.dofs).zip(coeffs) {
            for (o, s) in out.iter_mut().zip(col) {
                *o += c * s;
            }
        }
    }
}

/// Calibrated constants of the P1 inverse inequality on one mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseConstant {
    /// `sup u^T K u / u^T M u` times `h^2`.
    pub ratio: f64,
    /// Constant valid in both `||u'|| <= C h^-1 ||u||` and
    /// `||Delta_h u|| <= C h^-2 ||u||`: `max(sqrt(ratio), ratio)`.
    pub c_inv: f64,
}

/// Largest generalized eigenvalue of `(K, M)` by power iteration.
pub fn max_generalized_eigenvalue(mesh: &FemMesh) -> f64 {
    let m = assemble_mass(mesh);
    let k = assemble_stiffness(mesh);
    let mf = m.factor().expect("mass matrix is SPD");
    let n = mesh.dofs();
    // Start near the highest mode with a smooth envelope.
    let mut x: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + 0.1 * ((i as f64) * 0.37).sin()))
        .collect();
    rayleigh_iterate(&mut x, |x| {
        let mut y = k.matvec(x);
        mf.solve_in_place(&mut y);
        y
    });
    k.quad_form(&x) / m.quad_form(&x)
}

/// Smallest generalized eigenvalue of `(K, M)` by inverse power iteration.
pub fn min_generalized_eigenvalue(mesh: &FemMesh) -> f64 {
    let m = assemble_mass(mesh);
    let k = assemble_stiffness(mesh);
    let kf = k.factor().expect("stiffness matrix is SPD");
    let n = mesh.dofs();
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.01 * (i as f64 * 0.71).cos())
        .collect();
    rayleigh_iterate(&mut x, |x| {
        let mut y = m.matvec(x);
        kf.solve_in_place(&mut y);
        y
    });
    k.quad_form(&x) / m.quad_form(&x)
}

fn rayleigh_iterate(x: &mut Vec<f64>, apply: impl Fn(&[f64]) -> Vec<f64>) {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut prev = f64::NAN;
    for _ in 0..200_000 {
        let y = apply(x);
        let ny = norm(&y);
        let est = ny / norm(x);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if (est - prev).abs() <= 1e-14 * est {
            break;
        }
        prev = est;
    }
}

/// Measure the inverse-inequality constant on `mesh`.
pub fn calibrate_inverse_constant(mesh: &FemMesh) -> InverseConstant {
    let h = mesh.h();
    let ratio = max_generalized_eigenvalue(mesh) * h * h;
    InverseConstant {
        ratio,
        c_inv: ratio.sqrt().max(ratio),
    }
}
