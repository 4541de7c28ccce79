//! Fourier–Galerkin truncation of the generator
//! `A_a = [[0, Id], [d^2/dx^2, -2a]]` on `H^1 x L^2` and the quantities read
//! off its spectrum.
//!
//! Unknowns are ordered mode-major: `u_hat[k][i]` sits at `(k + K) n + i`,
//! followed by the same layout for `v_hat`.

use serde::{Deserialize, Serialize};

use crate::cocycle::{c_infinity, NormConvention, DEFAULT_STEP};
use crate::damping::{wrap_angle, DampingProfile, ProfileKind, TWO_PI};
use crate::error::{Error, Result};
use crate::matrix::{eigenvalues, ComplexMatrix, C64};
use crate::quadrature::GaussLegendre;

pub const MIN_CUTOFF: usize = 4;
pub const DEFAULT_CUTOFF: usize = 48;

/// Eigenvalues with `|Re| <= IMAGINARY_AXIS_TOL` count as undamped.
pub const IMAGINARY_AXIS_TOL: f64 = 1e-6;

/// Fraction of the spectrum, ordered by modulus, used by the high-frequency estimate.
pub const DINF_BAND: f64 = 0.25;
/// Outermost fraction discarded as truncation-polluted.
pub const DINF_EXCLUDED: f64 = 0.10;

#[derive(Clone, Debug)]
pub struct GalerkinOperator {
    pub cutoff: usize,
    pub n: usize,
    pub matrix: ComplexMatrix,
    /// `a_hat[m + 2K]` for `m` in `-2K..=2K`.
    pub fourier_coeffs: Vec<ComplexMatrix>,
}

impl GalerkinOperator {
    pub fn fourier_coeff(&self, m: i64) -> &ComplexMatrix {
        &self.fourier_coeffs[(m + 2 * self.cutoff as i64) as usize]
    }

    pub fn modes(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Number of unknowns in each of the `u` and `v` blocks.
    pub fn block_len(&self) -> usize {
        self.n * self.modes()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted by increasing modulus.
    pub eigenvalues: Vec<C64>,
    pub cutoff: usize,
    pub zero_tol: f64,
    /// Spectral abscissa of the nonzero spectrum.
    pub d0: f64,
    pub dinf_estimate: Option<f64>,
    /// No nonzero eigenvalue on the imaginary axis.
    pub weak_stab: bool,
    pub conjugation_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub c_infinity: f64,
    /// `2 c_infinity`, the rate of `||G||^2`.
    pub c_infinity_squared_norm: f64,
    pub d0: f64,
    pub alpha: f64,
    pub gcc: bool,
    pub gcc_lambda_min: f64,
    pub weak_stab: bool,
    pub cutoff: usize,
    pub convention: NormConvention,
}

/// `(1 / 2 pi) int_0^{2 pi} a(x) e^{-i m x} dx` for `m` in `0..=max_mode`.
fn nonnegative_coefficients(profile: &DampingProfile, max_mode: usize) -> Result<Vec<ComplexMatrix>> {
    let n = profile.dim();
    let modes = 0..=max_mode as i64;
    match profile.kind() {
        ProfileKind::Constant { value } => Ok(modes
            .map(|m| {
                if m == 0 {
                    value.as_matrix().clone()
                } else {
                    ComplexMatrix::zeros(n)
                }
            })
            .collect()),
        ProfileKind::PiecewiseConstant { breakpoints, values } => {
            let arcs = breakpoints.len();
            Ok(modes
                .map(|m| {
                    let mut acc = ComplexMatrix::zeros(n);
                    for (i, v) in values.iter().enumerate() {
                        let lo = breakpoints[i];
                        let hi = if i + 1 < arcs { breakpoints[i + 1] } else { breakpoints[0] + TWO_PI };
                        let w = if m == 0 {
                            C64::new((hi - lo) / TWO_PI, 0.0)
                        } else {
                            let mf = m as f64;
                            (C64::from_polar(1.0, -mf * lo) - C64::from_polar(1.0, -mf * hi)) / C64::new(0.0, TWO_PI * mf)
                        };
                        acc += &v.as_matrix().scale(w);
                    }
                    acc
                })
                .collect())
        }
        ProfileKind::Bumps {
            bumps,
            width,
            mollifier,
        } => {
            let rule = GaussLegendre::standard();
            let mut out = Vec::with_capacity(max_mode + 1);
            for m in modes {
                let mf = m as f64;
                // enough panels to resolve the oscillation across the support
                let panels = (64.0f64).max(2.0 * mf * width).ceil() as usize;
                let mut shape = C64::new(0.0, 0.0);
                rule.for_each_node(0.0, 1.0, panels, |s, wt| {
                    shape += C64::from_polar(wt * mollifier.density(s), -mf * width * s);
                });
                let mut acc = ComplexMatrix::zeros(n);
                for b in bumps {
                    let start = wrap_angle(b.center - 0.5 * width);
                    let phase = C64::from_polar(1.0 / TWO_PI, -mf * start);
                    acc += &b.matrix.as_matrix().scale(shape * phase);
                }
                out.push(acc);
            }
            Ok(out)
        }
        ProfileKind::Projector { .. } => {
            // smooth and periodic: the trapezoidal DFT converges geometrically
            let samples = (16 * max_mode).max(1024);
            let values = (0..samples)
                .map(|j| profile.evaluate(TWO_PI * j as f64 / samples as f64))
                .collect::<Result<Vec<_>>>()?;
            Ok(modes
                .map(|m| {
                    let mut acc = ComplexMatrix::zeros(n);
                    for (j, v) in values.iter().enumerate() {
                        let x = TWO_PI * j as f64 / samples as f64;
                        acc += &v.as_matrix().scale(C64::from_polar(1.0 / samples as f64, -(m as f64) * x));
                    }
                    acc
                })
                .collect())
        }
        ProfileKind::Sum(parts) => {
            let mut acc = vec![ComplexMatrix::zeros(n); max_mode + 1];
            for p in parts {
                for (a, c) in acc.iter_mut().zip(nonnegative_coefficients(p, max_mode)?) {
                    *a += &c;
                }
            }
            Ok(acc)
        }
    }
}

/// Fourier coefficients `a_hat_m`, `|m| <= max_mode`, indexed by `m + max_mode`.
pub fn fourier_coefficients(profile: &DampingProfile, max_mode: usize) -> Result<Vec<ComplexMatrix>> {
    let pos = nonnegative_coefficients(profile, max_mode)?;
    let mut out: Vec<ComplexMatrix> = pos[1..].iter().rev().map(|c| c.adjoint()).collect();
    out.extend(pos);
    Ok(out)
}

pub fn assemble(profile: &DampingProfile, cutoff: usize) -> Result<GalerkinOperator> {
    if cutoff < MIN_CUTOFF {
        return Err(Error::invalid(format!("cutoff K = {cutoff} must be at least {MIN_CUTOFF}")));
    }
    let n = profile.dim();
    let modes = 2 * cutoff + 1;
    let half = n * modes;
    let coeffs = fourier_coefficients(profile, 2 * cutoff)?;
    let mut a = ComplexMatrix::zeros(2 * half);
    for j in 0..modes {
        let k = j as f64 - cutoff as f64;
        for i in 0..n {
            let row = j * n + i;
            a[(row, half + row)] = C64::new(1.0, 0.0);
            a[(half + row, row)] = C64::new(-k * k, 0.0);
        }
        for l in 0..modes {
            let c = &coeffs[j + 2 * cutoff - l];
            for i in 0..n {
                for p in 0..n {
                    a[(half + j * n + i, half + l * n + p)] = c[(i, p)] * -2.0;
                }
            }
        }
    }
    Ok(GalerkinOperator {
        cutoff,
        n,
        matrix: a,
        fourier_coeffs: coeffs,
    })
}

pub fn default_zero_tol(op: &GalerkinOperator) -> f64 {
    1e-8 * (1.0 + op.matrix.norm_inf())
}

pub fn spectrum(op: &GalerkinOperator, zero_tol: f64) -> Result<SpectrumReport> {
    let mut eig = eigenvalues(&op.matrix)?;
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    let nonzero = || eig.iter().filter(|z| z.norm() > zero_tol);
    let d0 = nonzero().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let weak_stab = !nonzero().any(|z| z.re.abs() <= IMAGINARY_AXIS_TOL);
    let conjugation_defect = eig
        .iter()
        .map(|z| eig.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let mut report = SpectrumReport {
        eigenvalues: eig,
        cutoff: op.cutoff,
        zero_tol,
        d0,
        dinf_estimate: None,
        weak_stab,
        conjugation_defect,
    };
    report.dinf_estimate = dinf_estimate(&report, DINF_BAND).ok();
    Ok(report)
}

/// `D(R)`: largest real part among eigenvalues with `|lambda| > R`.
pub fn d_of_r(report: &SpectrumReport, r: f64) -> Option<f64> {
    report
        .eigenvalues
        .iter()
        .filter(|z| z.norm() > r)
        .map(|z| z.re)
        .reduce(f64::max)
}

/// Estimate of `D_inf = lim D(R)`: the largest real part within the band of
/// the `fraction` largest eigenvalues by modulus, after discarding the
/// outermost `DINF_EXCLUDED` of the spectrum. Not a limit; only an estimate.
pub fn dinf_estimate(report: &SpectrumReport, fraction: f64) -> Result<f64> {
    let count = report.eigenvalues.len();
    if count < 40 {
        return Err(Error::invalid(format!("{count} eigenvalues are too few for a high-frequency estimate")));
    }
    if !(fraction > 0.0 && fraction < 1.0 - DINF_EXCLUDED) {
        return Err(Error::invalid(format!("band fraction {fraction} out of range")));
    }
    let end = count - (DINF_EXCLUDED * count as f64).ceil() as usize;
    let start = end.saturating_sub((fraction * count as f64).ceil() as usize);
    Ok(report.eigenvalues[start..end]
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Best decay rate `alpha = 2 min(-D0, C_inf)`.
pub fn alpha(profile: &DampingProfile, cutoff: usize) -> Result<DecayReport> {
    let op = assemble(profile, cutoff)?;
    let report = spectrum(&op, default_zero_tol(&op))?;
    decay_report(profile, &report)
}

pub fn decay_report(profile: &DampingProfile, report: &SpectrumReport) -> Result<DecayReport> {
    let c_inf = c_infinity(profile, NormConvention::Norm, DEFAULT_STEP)?;
    let gcc = profile.gcc_check(1e-12)?;
    Ok(DecayReport {
        c_infinity: c_inf,
        c_infinity_squared_norm: 2.0 * c_inf,
        d0: report.d0,
        alpha: 2.0 * (-report.d0).min(c_inf),
        gcc: gcc.holds,
        gcc_lambda_min: gcc.lambda_min,
        weak_stab: report.weak_stab,
        cutoff: report.cutoff,
        convention: NormConvention::Norm,
    })
}
