//! Post-processing: rate fits, uniform-in-time certificates, the SIE blowup
//! threshold and closed-form oracles for the linear equation.

use crate::ensemble::EnsembleRecord;
use crate::error::{Error, Result};

/// Least-squares fit of `log(error) = slope log(param) + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidRateData(format!("{} pairs", pairs.len())));
    }
    if let Some(p) = pairs
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::InvalidRateData(format!("non-positive pair {p:?}")));
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidRateData("all parameters are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(RateFit {
        pairs: pairs.to_vec(),
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Early and late maxima of an error series over `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UitCertificate {
    /// Max over `t <= T/2`.
    pub early_max: f64,
    /// Max over `t >= T/2`.
    pub late_max: f64,
    /// `late_max / early_max`; 1 for an identically zero series.
    pub ratio: f64,
}

impl UitCertificate {
    /// Uniform-in-time behaviour up to statistical noise.
    pub fn passes(&self) -> bool {
        self.ratio <= 2.0
    }
}

/// Certificate for a series of `(t, error)` samples with `T` the last time.
pub fn uit_certificate(series: &[(f64, f64)]) -> Result<UitCertificate> {
    let Some(&(t_end, _)) = series.last() else {
        return Err(Error::InvalidRateData("empty error series".into()));
    };
    let t0 = series[0].0;
    let mid = t0 + 0.5 * (t_end - t0);
    let max_over = |keep: &dyn Fn(f64) -> bool| {
        series
            .iter()
            .filter(|(t, _)| keep(*t))
            .fold(0.0f64, |m, (_, e)| m.max(*e))
    };
    let early_max = max_over(&|t| t <= mid);
    let late_max = max_over(&|t| t >= mid);
    let ratio = if early_max > 0.0 {
        late_max / early_max
    } else if late_max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(UitCertificate {
        early_max,
        late_max,
        ratio,
    })
}

/// Initial energy level above which SIE provably grows in mean square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupThreshold {
    pub tau: f64,
    pub h: f64,
    pub c_inv: f64,
    pub trace_q: f64,
    pub c0: f64,
    pub x_star: f64,
    pub a0: f64,
}

impl BlowupThreshold {
    /// `s(x) = C0 tau^2 x^{3/2} - (2 tau C0 + 1 - C0) x + 2 Tr(Q) C0 tau - tau`.
    pub fn s(&self, x: f64) -> f64 {
        threshold_poly(self.c0, self.tau, self.trace_q, x)
    }
}

fn threshold_poly(c0: f64, tau: f64, trace_q: f64, x: f64) -> f64 {
    c0 * tau * tau * x.powf(1.5) - (2.0 * tau * c0 + (1.0 - c0)) * x + 2.0 * trace_q * c0 * tau
        - tau
}

const BISECTION_HI: f64 = 1e30;

pub fn blowup_threshold(tau: f64, h: f64, c_inv: f64, trace_q: f64) -> Result<BlowupThreshold> {
    for (name, v) in [("tau", tau), ("h", h), ("C_inv", c_inv), ("Tr(Q)", trace_q)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
        }
    }
    let c2 = c_inv * c_inv;
    let c0 = 1.0 / (1.0 + 2.0 * c2 * tau / (h * h) + c2 * tau * tau / h.powi(4));
    let x_star = ((4.0 * c0 * tau + 2.0 * (1.0 - c0)) / (3.0 * c0 * tau * tau)).powi(2);
    let s = |x: f64| threshold_poly(c0, tau, trace_q, x);
    let x0 = if s(x_star) >= 0.0 {
        x_star
    } else {
        let (mut lo, mut hi) = (x_star, BISECTION_HI.max(2.0 * x_star));
        if s(hi) < 0.0 {
            return Err(Error::NoSignChange { lo, hi });
        }
        while hi - lo > 1e-10 * hi {
            let mid = 0.5 * (lo + hi);
            if s(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(BlowupThreshold {
        tau,
        h,
        c_inv,
        trace_q,
        c0,
        x_star,
        a0: x0.max(1.0),
    })
}

/// Check `E||u^n||^2 >= E||u^0||^2 + n tau` at every record taken while all
/// trials are alive, with slack of three standard errors. Needs at least one
/// record after `t = 0`.
pub fn verify_blowup_growth(records: &[EnsembleRecord]) -> bool {
    let Some(first) = records.first() else {
        return false;
    };
    let m = first.alive_count;
    if m == 0 {
        return false;
    }
    let se = |r: &EnsembleRecord| r.std_sq_norm / (r.alive_count as f64).sqrt();
    let mut checked = 0;
    for r in records.iter().skip(1) {
        if r.alive_count < m {
            break;
        }
        let t = r.t - first.t;
        let slack = 3.0 * (se(r).powi(2) + se(first).powi(2)).sqrt();
        if !(r.mean_sq_norm >= first.mean_sq_norm + t - slack) {
            return false;
        }
        checked += 1;
    }
    checked > 0
}

/// `E|X(t)|^2` for the scalar OU mode `dX = -lambda X dt + sqrt(gamma) dB`
/// with deterministic `X(0) = x0` (complex modes: `gamma = E|dB|^2 / dt`).
pub fn ou_second_moment(lambda: f64, gamma: f64, x0_sq: f64, t: f64) -> f64 {
    let decay = (-2.0 * lambda * t).exp();
    let noise = if lambda == 0.0 {
        gamma * t
    } else {
        gamma * (1.0 - decay) / (2.0 * lambda)
    };
    decay * x0_sq + noise
}

/// Exact `E|x_c^K - x_f^{Kr}|^2` for one linear mode advanced by the implicit
/// step `x <- (x + xi) / (1 + dt lambda)`, coarse step `r tau_f` against fine
/// step `tau_f`, driven by the same path (`E|xi_m|^2 = tau_f gamma`).
pub fn linear_mode_coupled_error_sq(
    lambda: f64,
    gamma: f64,
    x0_sq: f64,
    tau_fine: f64,
    ratio: u64,
    coarse_steps: u64,
) -> f64 {
    let ac = 1.0 / (1.0 + ratio as f64 * tau_fine * lambda);
    let af = 1.0 / (1.0 + tau_fine * lambda);
    let k = coarse_steps as i32;
    let fine_steps = coarse_steps * ratio;
    let init = (ac.powi(k) - af.powi(fine_steps as i32)).powi(2) * x0_sq;
    let mut acc = 0.0;
    for m in 0..fine_steps {
        let i = (m / ratio) as i32;
        let wc = ac.powi(k - i);
        let wf = af.powi((fine_steps - m) as i32);
        acc += (wc - wf).powi(2);
    }
    init + tau_fine * gamma * acc
}
