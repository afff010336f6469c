//! Fourier pseudo-spectral Galerkin discretization on the periodic interval
//! `[0, 2 pi]`.
//!
//! Modes are stored in FFT order: index `k < N/2` holds wavenumber `k`, index
//! `k > N/2` holds `k - N`. The Nyquist slot `N/2` is always zero, leaving
//! `N/2 - 1` resolved positive wavenumbers. Coefficients follow
//! `u(x) = sum_j u_hat(j) e^{i j x}`, so a constant field `c` has `u_hat(0) = c`.
//!
//! Pointwise nonlinearities are dealiased by zero-padding to `2N` modes.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fem::GradNormVariant;
use crate::nonlinearity::Nonlinearity;

/// Complex FFT of a fixed power-of-two length, backed by `rustfft`.
#[derive(Clone)]
pub struct Fft {
    n: usize,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    inv: Arc<dyn rustfft::Fft<f64>>,
}

impl std::fmt::Debug for Fft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft").field("n", &self.n).finish()
    }
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length must be a power of two");
        let mut planner = FftPlanner::new();
        Fft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X_k = sum_m x_m e^{-2 pi i k m / n}` (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n);
        self.fwd.process(data);
    }

    /// `x_m = sum_k X_k e^{+2 pi i k m / n}` (unnormalized).
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n);
        self.inv.process(data);
    }
}

/// Collocation grid `x_i = 2 pi i / N` with its transforms.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    n: usize,
    fft: Fft,
    padded: Fft,
}

impl SpectralGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "spectral grid needs N = 2^k >= 4, got {n}"
            )));
        }
        Ok(SpectralGrid {
            n,
            fft: Fft::new(n),
            padded: Fft::new(2 * n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n as f64
    }

    /// Number of fully resolved positive wavenumbers, `N/2 - 1`.
    pub fn resolved_modes(&self) -> usize {
        self.n / 2 - 1
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| i as f64 * self.h()).collect()
    }

    /// Signed wavenumber stored at FFT index `k`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        wavenumber(self.n, k)
    }

    /// FFT index of wavenumber `j`, or `None` if `|j| >= N/2`.
    pub fn index_of(&self, j: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if j.abs() >= half {
            None
        } else if j >= 0 {
            Some(j as usize)
        } else {
            Some((self.n as i64 + j) as usize)
        }
    }

    /// Fourier coefficients of real samples, Nyquist mode zeroed.
    pub fn forward(&self, values: &[f64]) -> Result<Vec<Complex64>> {
        if values.len() != self.n {
            return Err(Error::BasisMismatch(format!(
                "{} samples on a grid of {}",
                values.len(),
                self.n
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        let scale = 1.0 / self.n as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf[self.n / 2] = Complex64::new(0.0, 0.0);
        Ok(buf)
    }

    /// Real-space values on the collocation points.
    pub fn inverse(&self, modes: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(modes)
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Inverse transform keeping the (round-off) imaginary part.
    pub fn inverse_complex(&self, modes: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(modes.len(), self.n);
        let mut buf = modes.to_vec();
        self.fft.inverse(&mut buf);
        buf
    }

    /// Values on the `2N` padded grid `x_i = pi i / N`.
    pub fn to_padded(&self, modes: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        for j in 0..n / 2 {
            buf[j] = modes[j];
        }
        for j in 1..n / 2 {
            buf[2 * n - j] = modes[n - j];
        }
        self.padded.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Coefficients of `2N` padded samples, truncated to the resolved modes.
    pub fn from_padded(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        debug_assert_eq!(values.len(), 2 * n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.padded.forward(&mut buf);
        let scale = 1.0 / (2 * n) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n / 2 {
            out[j] = buf[j] * scale;
        }
        for j in 1..n / 2 {
            out[n - j] = buf[2 * n - j] * scale;
        }
        out
    }

    /// Apply a pointwise map with 2x zero-padding dealiasing.
    pub fn apply_pointwise_dealiased(
        &self,
        modes: &[Complex64],
        g: impl Fn(f64) -> f64,
    ) -> Vec<Complex64> {
        let vals: Vec<f64> = self.to_padded(modes).into_iter().map(g).collect();
        self.from_padded(&vals)
    }

    /// Same pipeline without padding: evaluate on the `N` grid directly.
    pub fn apply_pointwise_aliased(
        &self,
        modes: &[Complex64],
        g: impl Fn(f64) -> f64,
    ) -> Vec<Complex64> {
        let vals: Vec<f64> = self.inverse(modes).into_iter().map(g).collect();
        self.forward(&vals).expect("grid length")
    }

    pub fn apply_nonlinearity_dealiased(
        &self,
        nl: &Nonlinearity,
        modes: &[Complex64],
    ) -> Vec<Complex64> {
        self.apply_pointwise_dealiased(modes, |u| nl.eval(u))
    }

    /// Divide mode `j` by `1 + tau j^2`, the symbol of `I - tau Delta`.
    pub fn solve_implicit_diag(&self, modes: &mut [Complex64], tau: f64) {
        for (k, c) in modes.iter_mut().enumerate() {
            let j = self.wavenumber(k) as f64;
            *c /= 1.0 + tau * j * j;
        }
    }

    /// `2 pi sum_j |u_hat(j)|^2`.
    pub fn l2_norm_sq(&self, modes: &[Complex64]) -> f64 {
        2.0 * std::f64::consts::PI * modes.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `2 pi sum_j j^2 |u_hat(j)|^2`.
    pub fn grad_norm_sq(&self, modes: &[Complex64]) -> f64 {
        2.0 * std::f64::consts::PI
            * modes
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let j = self.wavenumber(k) as f64;
                    j * j * c.norm_sqr()
                })
                .sum::<f64>()
    }

    /// Squared norm of `f'(u)` (quadrature on the padded grid) or of
    /// `grad f(u)` (Parseval on the dealiased coefficients of `f(u)`).
    pub fn gradnorm_sq_of_f(
        &self,
        nl: &Nonlinearity,
        modes: &[Complex64],
        variant: GradNormVariant,
    ) -> f64 {
        match variant {
            GradNormVariant::DerivativeL2 => {
                let vals = self.to_padded(modes);
                derivative_l2_sq(nl, &vals)
            }
            GradNormVariant::GradientOfF => {
                let fhat = self.apply_nonlinearity_dealiased(nl, modes);
                self.grad_norm_sq(&fhat)
            }
        }
    }
}

/// `(2 pi / n) sum_i |f'(u_i)|^2` over equispaced samples of the period.
pub(crate) fn derivative_l2_sq(nl: &Nonlinearity, vals: &[f64]) -> f64 {
    let s: f64 = vals.iter().map(|&u| nl.eval_prime(u).powi(2)).sum();
    2.0 * std::f64::consts::PI / vals.len() as f64 * s
}

pub(crate) fn wavenumber(n: usize, k: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
