//! Time-domain evolution of the truncated damped wave equation, energy
//! traces and Gaussian-beam transport.
//!
//! States hold Fourier coefficients `u(x) = sum_k u_hat_k e^{ikx}` in the
//! mode-major layout of [`crate::spectrum`]; the energy is
//! `E = pi sum_k (|v_hat_k|^2 + k^2 |u_hat_k|^2)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cocycle::{transfer, Direction, DEFAULT_STEP};
use crate::damping::DampingProfile;
use crate::error::{Error, Result};
use crate::matrix::{eigen, matrix_exp, ComplexMatrix, HermitianMatrix, C64};
use crate::spectrum::{assemble, GalerkinOperator};

/// Eigenbases with a larger (1-norm) condition number are not used for propagation.
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e8;
/// Above this matrix size `Auto` integrates in time instead of diagonalising.
pub const SPECTRAL_MAX_DIM: usize = 1200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub cutoff: usize,
    pub n: usize,
    pub u_hat: Vec<C64>,
    pub v_hat: Vec<C64>,
    pub t: f64,
}

impl WaveState {
    pub fn zeros(cutoff: usize, n: usize) -> Self {
        let len = n * (2 * cutoff + 1);
        Self {
            cutoff,
            n,
            u_hat: vec![C64::new(0.0, 0.0); len],
            v_hat: vec![C64::new(0.0, 0.0); len],
            t: 0.0,
        }
    }

    #[inline]
    pub fn index(&self, k: i64, i: usize) -> usize {
        (k + self.cutoff as i64) as usize * self.n + i
    }

    fn from_vector(cutoff: usize, n: usize, z: &[C64], t: f64) -> Self {
        let half = z.len() / 2;
        Self {
            cutoff,
            n,
            u_hat: z[..half].to_vec(),
            v_hat: z[half..].to_vec(),
            t,
        }
    }

    fn to_vector(&self) -> Vec<C64> {
        self.u_hat.iter().chain(&self.v_hat).copied().collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.u_hat.iter_mut().chain(self.v_hat.iter_mut()).for_each(|z| *z *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.u_hat.iter().chain(&self.v_hat).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub fn energy(state: &WaveState) -> f64 {
    let mut acc = 0.0;
    for j in 0..2 * state.cutoff + 1 {
        let k = j as f64 - state.cutoff as f64;
        for i in 0..state.n {
            let idx = j * state.n + i;
            acc += state.v_hat[idx].norm_sqr() + k * k * state.u_hat[idx].norm_sqr();
        }
    }
    PI * acc
}

/// `-dE/dt = 2 int <a u_t, u_t> dx = 4 pi Re <v_hat, A_hat v_hat>`.
pub fn dissipation_rate(conv: &DampingConvolution, state: &WaveState) -> f64 {
    let av = conv.apply(&state.v_hat);
    let s: C64 = state.v_hat.iter().zip(&av).map(|(v, w)| v.conj() * w).sum();
    4.0 * PI * s.re
}

/// `v_hat -> A_hat v_hat` with `(A_hat v)_j = sum_l a_hat_{j-l} v_l`, done by
/// zero-padded FFT convolution (no aliasing for padding >= 6K + 1).
pub struct DampingConvolution {
    n: usize,
    cutoff: usize,
    size: usize,
    /// Spectrum of each entry sequence `a_hat[.](i, p)`, row-major in `(i, p)`.
    coeffs: Vec<Vec<C64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    zero: bool,
}

impl DampingConvolution {
    pub fn new(op: &GalerkinOperator) -> Self {
        Self::build(op, false)
    }

    /// Convolution with the mean `a_hat_0` removed.
    pub fn fluctuation(op: &GalerkinOperator) -> Self {
        Self::build(op, true)
    }

    fn build(op: &GalerkinOperator, skip_mean: bool) -> Self {
        let (n, cutoff) = (op.n, op.cutoff);
        let size = (6 * cutoff + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let max_mode = 2 * cutoff as i64;
        let kept = |m: i64| !(skip_mean && m == 0);
        let zero = (-max_mode..=max_mode).all(|m| !kept(m) || op.fourier_coeff(m).norm_max() == 0.0);
        let mut coeffs = Vec::with_capacity(n * n);
        for i in 0..n {
            for p in 0..n {
                let mut seq = vec![C64::new(0.0, 0.0); size];
                for m in (-max_mode..=max_mode).filter(|&m| kept(m)) {
                    seq[m.rem_euclid(size as i64) as usize] = op.fourier_coeff(m)[(i, p)];
                }
                forward.process(&mut seq);
                coeffs.push(seq);
            }
        }
        Self {
            n,
            cutoff,
            size,
            coeffs,
            forward,
            inverse,
            zero,
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let (n, k) = (self.n, self.cutoff as i64);
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        if self.zero {
            return out;
        }
        let spectra: Vec<Vec<C64>> = (0..n)
            .map(|p| {
                let mut seq = vec![C64::new(0.0, 0.0); self.size];
                for l in -k..=k {
                    seq[l.rem_euclid(self.size as i64) as usize] = v[(l + k) as usize * n + p];
                }
                self.forward.process(&mut seq);
                seq
            })
            .collect();
        let scale = 1.0 / self.size as f64;
        for i in 0..n {
            let mut acc = vec![C64::new(0.0, 0.0); self.size];
            for p in 0..n {
                let c = &self.coeffs[i * n + p];
                for (a, (x, y)) in acc.iter_mut().zip(c.iter().zip(&spectra[p])) {
                    *a += x * y;
                }
            }
            self.inverse.process(&mut acc);
            for j in -k..=k {
                out[(j + k) as usize * n + i] = acc[j.rem_euclid(self.size as i64) as usize] * scale;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Spectral when the eigenbasis is small and well conditioned, Lawson otherwise.
    #[default]
    Auto,
    /// `exp(tA)` through the eigendecomposition of the Galerkin matrix.
    Spectral,
    /// Fourth-order Lawson Runge–Kutta; the mean-damped wave group is integrated exactly.
    Lawson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub integrator: Integrator,
    /// Keep every `record_every`-th step (the initial and final states are always kept).
    pub record_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Auto,
            record_every: 1,
        }
    }
}

/// Largest admissible step for cutoff `K`.
pub fn max_step(cutoff: usize) -> f64 {
    (0.5 / cutoff as f64).min(0.1)
}

pub fn evolve(profile: &DampingProfile, state: &WaveState, duration: f64, dt: f64) -> Result<Vec<WaveState>> {
    let op = assemble(profile, state.cutoff)?;
    evolve_with(&op, state, duration, dt, EvolveOptions::default())
}

pub fn evolve_with(
    op: &GalerkinOperator,
    state: &WaveState,
    duration: f64,
    dt: f64,
    opts: EvolveOptions,
) -> Result<Vec<WaveState>> {
    if state.cutoff != op.cutoff || state.n != op.n {
        return Err(Error::invalid("state and operator dimensions differ"));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration must be finite and non-negative"));
    }
    if !(dt > 0.0 && dt <= max_step(op.cutoff) * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "dt = {dt} must lie in (0, {}] for K = {}",
            max_step(op.cutoff),
            op.cutoff
        )));
    }
    if !state.is_finite() {
        return Err(Error::invalid("initial state has non-finite entries"));
    }
    let steps = (duration / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { duration / steps as f64 };
    let every = opts.record_every.max(1);
    let record = |i: usize| i == 0 || i == steps || i % every == 0;

    let spectral = match opts.integrator {
        Integrator::Lawson => None,
        Integrator::Spectral => Some(SpectralPropagator::new(op)?.ok_or_else(|| Error::NumericalFailure {
            context: format!("eigenbasis condition exceeds {MAX_EIGENBASIS_CONDITION:e}"),
            iterations: None,
        })?),
        Integrator::Auto if op.matrix.dim() > SPECTRAL_MAX_DIM => None,
        Integrator::Auto => SpectralPropagator::new(op)?,
    };
    let mut out = Vec::new();
    match spectral {
        Some(prop) => {
            let coeffs = prop.coordinates(&state.to_vector())?;
            for i in 0..=steps {
                if record(i) {
                    let t = i as f64 * h;
                    let z = prop.at(&coeffs, t);
                    let s = WaveState::from_vector(op.cutoff, op.n, &z, state.t + t);
                    if !s.is_finite() {
                        return Err(Error::numerical("spectral propagation overflowed"));
                    }
                    out.push(s);
                }
            }
        }
        None => {
            let lawson = Lawson::new(op, h)?;
            let mut z = state.to_vector();
            out.push(state.clone());
            for i in 1..=steps {
                z = lawson.step(&z, h);
                if record(i) {
                    let s = WaveState::from_vector(op.cutoff, op.n, &z, state.t + i as f64 * h);
                    if !s.is_finite() {
                        return Err(Error::numerical("time integration diverged"));
                    }
                    out.push(s);
                }
            }
        }
    }
    Ok(out)
}

struct SpectralPropagator {
    values: Vec<C64>,
    vectors: ComplexMatrix,
}

impl SpectralPropagator {
    /// `None` when the eigenbasis is too ill-conditioned to be trusted.
    fn new(op: &GalerkinOperator) -> Result<Option<Self>> {
        let dec = eigen(&op.matrix)?;
        let inv = match dec.vectors.inverse() {
            Ok(inv) => inv,
            Err(_) => return Ok(None),
        };
        let cond = dec.vectors.norm_one() * inv.norm_one();
        if !(cond.is_finite() && cond <= MAX_EIGENBASIS_CONDITION) {
            log::debug!("eigenbasis condition {cond:e}; using time stepping");
            return Ok(None);
        }
        Ok(Some(Self {
            values: dec.values,
            vectors: dec.vectors,
        }))
    }

    fn coordinates(&self, z: &[C64]) -> Result<Vec<C64>> {
        let rhs = ComplexMatrix::from_fn(z.len(), |i, j| if j == 0 { z[i] } else { C64::new(0.0, 0.0) });
        let sol = self.vectors.solve(&rhs)?;
        Ok((0..z.len()).map(|i| sol[(i, 0)]).collect())
    }

    fn at(&self, coeffs: &[C64], t: f64) -> Vec<C64> {
        let scaled: Vec<C64> = coeffs.iter().zip(&self.values).map(|(c, l)| c * (l * t).exp()).collect();
        self.vectors.mul_vec(&scaled)
    }
}

/// Lawson RK4 for `z' = L z + N(z)`, where `L` is the wave operator damped
/// by the mean `a_hat_0` (exact per-mode exponentials) and `N` carries the
/// fluctuation `a - a_hat_0`. Constant damping is therefore integrated exactly.
struct Lawson {
    n: usize,
    conv: DampingConvolution,
    /// `exp(h L / 2)` and `exp(h L)` for each mode, `2n x 2n`.
    half: Vec<ComplexMatrix>,
    full: Vec<ComplexMatrix>,
}

impl Lawson {
    fn new(op: &GalerkinOperator, h: f64) -> Result<Self> {
        let n = op.n;
        let mean = op.fourier_coeff(0);
        let block = |k: f64, t: f64| -> Result<ComplexMatrix> {
            // balanced coordinates (k u, v) keep the exponent's norm near k t
            let s = if k == 0.0 { 1.0 } else { k };
            let gen = ComplexMatrix::from_fn(2 * n, |r, c| match (r < n, c < n) {
                (true, false) if r == c - n => C64::new(s * t, 0.0),
                (false, true) if r - n == c && k != 0.0 => C64::new(-k * t, 0.0),
                (false, false) => mean[(r - n, c - n)] * (-2.0 * t),
                _ => C64::new(0.0, 0.0),
            });
            let e = matrix_exp(&gen)?;
            Ok(ComplexMatrix::from_fn(2 * n, |r, c| {
                let row = if r < n { 1.0 / s } else { 1.0 };
                let col = if c < n { s } else { 1.0 };
                e[(r, c)] * (row * col)
            }))
        };
        let modes: Vec<f64> = (0..op.modes())
            .map(|j| (j as f64 - op.cutoff as f64).abs())
            .collect();
        Ok(Self {
            n,
            conv: DampingConvolution::fluctuation(op),
            half: modes.iter().map(|&k| block(k, 0.5 * h)).collect::<Result<_>>()?,
            full: modes.iter().map(|&k| block(k, h)).collect::<Result<_>>()?,
        })
    }

    fn linear(&self, z: &[C64], blocks: &[ComplexMatrix]) -> Vec<C64> {
        let n = self.n;
        let half = z.len() / 2;
        let mut out = vec![C64::new(0.0, 0.0); z.len()];
        for (j, b) in blocks.iter().enumerate() {
            let idx = |r: usize| if r < n { j * n + r } else { half + j * n + r - n };
            for r in 0..2 * n {
                out[idx(r)] = (0..2 * n).map(|c| b[(r, c)] * z[idx(c)]).sum();
            }
        }
        out
    }

    /// `N(z) = [0; -2 (A_hat - a_hat_0) v]`.
    fn damping(&self, z: &[C64]) -> Vec<C64> {
        let half = z.len() / 2;
        let mut out = vec![C64::new(0.0, 0.0); z.len()];
        for (o, w) in out[half..].iter_mut().zip(self.conv.apply(&z[half..])) {
            *o = w * -2.0;
        }
        out
    }

    fn step(&self, z: &[C64], h: f64) -> Vec<C64> {
        let axpy = |x: &[C64], a: f64, y: &[C64]| -> Vec<C64> { x.iter().zip(y).map(|(p, q)| p + q * a).collect() };
        let z_full = self.linear(z, &self.full);
        if self.conv.zero {
            return z_full;
        }
        let k1 = self.damping(z);
        let k2 = self.damping(&self.linear(&axpy(z, 0.5 * h, &k1), &self.half));
        let z_half = self.linear(z, &self.half);
        let k3 = self.damping(&axpy(&z_half, 0.5 * h, &k2));
        let k4 = self.damping(&axpy(&z_full, h, &self.linear(&k3, &self.half)));
        let k1h = self.linear(&k1, &self.full);
        let k23 = self.linear(&axpy(&k2, 1.0, &k3), &self.half);
        z_full
            .iter()
            .enumerate()
            .map(|(i, zi)| zi + (k1h[i] + k23[i] * 2.0 + k4[i]) * (h / 6.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
}

impl EnergyTrace {
    pub fn from_states(states: &[WaveState]) -> Self {
        Self {
            times: states.iter().map(|s| s.t).collect(),
            energies: states.iter().map(energy).collect(),
            fitted_rate: None,
            fit_window: None,
        }
    }

    /// Largest relative increase between consecutive samples (0 for a non-increasing trace).
    pub fn max_relative_increase(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        self.energies
            .windows(2)
            .map(|w| (w[1] - w[0]) / e0)
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,E,logE`, shortest round-trip decimals, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E,logE\n");
        for (t, e) in self.times.iter().zip(&self.energies) {
            let _ = writeln!(out, "{t:?},{e:?},{:?}", e.ln());
        }
        out
    }
}

/// Least-squares slope of `ln E` over `window`, sign flipped.
pub fn fit_decay_rate(trace: &EnergyTrace, window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.energies)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &e)| (t, e))
        .collect();
    if pts.len() < 20 {
        return Err(Error::invalid(format!("{} samples in the fit window, need at least 20", pts.len())));
    }
    if pts.iter().any(|p| !(p.1 > 1e-30)) {
        return Err(Error::invalid("energy below 1e-30 in the fit window"));
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, e) in &pts {
        sxy += (t - tm) * (e.ln() - lm);
        sxx += (t - tm) * (t - tm);
    }
    let slope = sxy / sxx;
    let residual = (pts
        .iter()
        .map(|&(t, e)| (e.ln() - lm - slope * (t - tm)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        residual,
        samples: pts.len(),
    })
}

/// Evolves and records the energy; fits a rate when `fit_window` is given.
pub fn energy_trace(
    op: &GalerkinOperator,
    state: &WaveState,
    duration: f64,
    dt: f64,
    opts: EvolveOptions,
    fit_window: Option<(f64, f64)>,
) -> Result<EnergyTrace> {
    let states = evolve_with(op, state, duration, dt, opts)?;
    let mut trace = EnergyTrace::from_states(&states);
    if let Some(w) = fit_window {
        trace.fitted_rate = Some(fit_decay_rate(&trace, w)?.rate);
        trace.fit_window = Some(w);
    }
    Ok(trace)
}

/// Seeded random data with `|u_hat_k|, |v_hat_k| ~ (1 + k^2)^{-1}`.
pub fn generic_initial(cutoff: usize, n: usize, seed: u64) -> WaveState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = WaveState::zeros(cutoff, n);
    let draw = |rng: &mut ChaCha8Rng| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    };
    for j in 0..2 * cutoff + 1 {
        let k = j as f64 - cutoff as f64;
        let w = 1.0 / (1.0 + k * k);
        for i in 0..n {
            s.u_hat[j * n + i] = draw(&mut rng) * w;
            s.v_hat[j * n + i] = draw(&mut rng) * w;
        }
    }
    s
}

/// Initial data along the eigenvector with eigenvalue closest to `target`.
pub fn eigenmode_initial(op: &GalerkinOperator, target: C64) -> Result<(WaveState, C64)> {
    let dec = eigen(&op.matrix)?;
    let (best, &lambda) = dec
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
        .ok_or_else(|| Error::numerical("empty spectrum"))?;
    let z = dec.vectors.column(best);
    Ok((WaveState::from_vector(op.cutoff, op.n, &z, 0.0), lambda))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub k: u32,
    pub x0: f64,
    pub direction: Direction,
    pub sigma: f64,
    pub omega: Vec<C64>,
}

impl BeamSpec {
    pub fn new(k: u32, x0: f64, direction: Direction, omega: Vec<C64>) -> Self {
        Self {
            k,
            x0,
            direction,
            sigma: 1.0,
            omega,
        }
    }

    /// Cutoff that holds the beam spectrum down to `exp(-40)`.
    pub fn auto_cutoff(&self) -> usize {
        let kf = self.k as f64;
        self.k as usize + (9.0 * (kf * self.sigma).sqrt()).ceil() as usize + 1
    }
}

/// `u(0, x) = exp(i k dir (x - x0) - k sigma (x - x0)^2 / 2) omega` and
/// `v(0) = -a(x0) u - dir u_x`, scaled to unit energy.
pub fn gaussian_beam_initial(profile: &DampingProfile, spec: &BeamSpec) -> Result<WaveState> {
    if spec.k < 8 {
        return Err(Error::invalid(format!("beam frequency k = {} must be at least 8", spec.k)));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let n = profile.dim();
    if spec.omega.len() != n {
        return Err(Error::invalid("omega has the wrong dimension"));
    }
    let norm = spec.omega.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("omega must be a unit vector"));
    }
    let ks = spec.k as f64 * spec.sigma;
    // |u|^2 at the antipode relative to the peak
    let wraparound = (-ks * PI * PI).exp();
    if wraparound >= 1e-10 {
        return Err(Error::invalid(format!(
            "beam wraps around the circle (mass ratio {wraparound:e}); increase k"
        )));
    }
    let cutoff = spec.auto_cutoff();
    let dir = spec.direction.sign();
    let a0 = profile.evaluate(spec.x0)?;
    let a_omega = a0.as_matrix().mul_vec(&spec.omega);
    let mut s = WaveState::zeros(cutoff, n);
    let k0 = dir * spec.k as f64;
    for j in 0..2 * cutoff + 1 {
        let m = j as f64 - cutoff as f64;
        // Fourier transform of the Gaussian, exact up to the wraparound tail
        let amp = (2.0 * PI / ks).sqrt() / (2.0 * PI) * (-(m - k0).powi(2) / (2.0 * ks)).exp();
        let g = C64::from_polar(amp, -m * spec.x0);
        for i in 0..n {
            let u = g * spec.omega[i];
            s.u_hat[j * n + i] = u;
            s.v_hat[j * n + i] = -g * a_omega[i] - C64::new(0.0, dir * m) * u;
        }
    }
    let e = energy(&s);
    s.scale(1.0 / e.sqrt());
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamCheck {
    /// `E(T) / E(0)`.
    pub ratio: f64,
    /// `||G_T(x0, dir)||_2^2`.
    pub predicted: f64,
    pub gap: f64,
    pub cutoff: usize,
}

/// `spec` with `omega` replaced by the top right singular vector of
/// `G_T(x0, dir)`, together with `||G_T||_2^2`.
pub fn least_damped_beam(profile: &DampingProfile, spec: &BeamSpec, duration: f64) -> Result<(BeamSpec, f64)> {
    let g = transfer(profile, spec.x0, spec.direction, duration, DEFAULT_STEP)?;
    let gram = HermitianMatrix::symmetrized(&(&g.adjoint() * &g)).eigh()?;
    let n = profile.dim();
    let omega: Vec<C64> = (0..n).map(|i| gram.vectors[(i, n - 1)]).collect();
    Ok((BeamSpec { omega, ..spec.clone() }, gram.values[n - 1]))
}

/// Evolves a beam launched along the top right singular vector of the
/// cocycle and compares its energy loss with `||G_T||^2`.
pub fn beam_transport_check(profile: &DampingProfile, spec: &BeamSpec, duration: f64) -> Result<BeamCheck> {
    let (spec, predicted) = least_damped_beam(profile, spec, duration)?;
    let state = gaussian_beam_initial(profile, &spec)?;
    let op = assemble(profile, state.cutoff)?;
    let dt = max_step(op.cutoff);
    let states = evolve_with(
        &op,
        &state,
        duration,
        dt,
        EvolveOptions {
            integrator: Integrator::Lawson,
            record_every: usize::MAX,
        },
    )?;
    let last = states.last().expect("initial state is always recorded");
    let ratio = energy(last) / energy(&state);
    Ok(BeamCheck {
        ratio,
        predicted,
        gap: (ratio - predicted).abs(),
        cutoff: op.cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::{Bump, Mollifier};

    fn single_mode(cutoff: usize, n: usize, k: i64) -> WaveState {
        let mut s = WaveState::zeros(cutoff, n);
        let idx = s.index(k, 0);
        s.u_hat[idx] = C64::new(1.0, 0.0);
        s
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&WaveState::zeros(4, 2)), 0.0);
        let mut c = WaveState::zeros(4, 2);
        let idx = c.index(0, 1);
        c.u_hat[idx] = C64::new(3.0, 1.0);
        assert_eq!(energy(&c), 0.0);
        assert!((energy(&single_mode(4, 2, 1)) - PI).abs() < 1e-15);
    }

    #[test]
    fn free_single_mode_rotates() {
        let op = assemble(&DampingProfile::zero(1), 6).unwrap();
        let mut s = single_mode(6, 1, 3);
        let idx = s.index(3, 0);
        s.v_hat[idx] = C64::new(0.0, 3.0);
        let states = evolve_with(&op, &s, 2.0, 0.05, EvolveOptions::default()).unwrap();
        for st in &states {
            let expect = C64::from_polar(1.0, 3.0 * st.t);
            assert!((st.u_hat[idx] - expect).norm() < 1e-12);
            assert!((energy(st) - energy(&s)).abs() < 1e-9 * energy(&s));
        }
    }

    #[test]
    fn dt_bound_is_enforced() {
        let op = assemble(&DampingProfile::zero(1), 8).unwrap();
        let s = WaveState::zeros(8, 1);
        assert!(evolve_with(&op, &s, 1.0, 0.1, EvolveOptions::default()).is_err());
    }

    #[test]
    fn convolution_matches_galerkin_block() {
        let p = DampingProfile::projector(2, 0.7).unwrap();
        let op = assemble(&p, 6).unwrap();
        let conv = DampingConvolution::new(&op);
        let s = generic_initial(6, 2, 7);
        let fast = conv.apply(&s.v_hat);
        let half = op.block_len();
        for r in 0..half {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..half {
                acc += op.matrix[(half + r, half + c)] * s.v_hat[c];
            }
            assert!((fast[r] * -2.0 - acc).norm() < 1e-13);
        }
    }

    #[test]
    fn lawson_and_spectral_agree() {
        let p = DampingProfile::projector(3, 1.1).unwrap().add(&DampingProfile::scalar_constant(2, 0.1)).unwrap();
        let op = assemble(&p, 8).unwrap();
        let s = generic_initial(8, 2, 3);
        let opts = |integrator| EvolveOptions { integrator, record_every: 50 };
        let a = evolve_with(&op, &s, 5.0, 0.01, opts(Integrator::Spectral)).unwrap();
        let b = evolve_with(&op, &s, 5.0, 0.01, opts(Integrator::Lawson)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let d = x.to_vector().iter().zip(y.to_vector()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            assert!(d < 1e-8, "t = {}: {d}", x.t);
        }
    }

    #[test]
    fn energy_balance_and_monotonicity() {
        let p = DampingProfile::bumps(
            vec![Bump { center: 2.0, matrix: HermitianMatrix::from_real_diagonal(&[0.8, 0.3]) }],
            1.5,
            Mollifier::Exponential,
        )
        .unwrap();
        let op = assemble(&p, 10).unwrap();
        let conv = DampingConvolution::new(&op);
        let s = generic_initial(10, 2, 11);
        let states = evolve_with(&op, &s, 4.0, 0.01, EvolveOptions::default()).unwrap();
        let trace = EnergyTrace::from_states(&states);
        assert!(trace.max_relative_increase() <= 1e-9);
        // Simpson over the recorded states
        let rates: Vec<f64> = states.iter().map(|st| dissipation_rate(&conv, st)).collect();
        let h = states[1].t - states[0].t;
        let m = rates.len() - 1;
        assert_eq!(m % 2, 0);
        let mut integral = rates[0] + rates[m];
        for (i, r) in rates.iter().enumerate().take(m).skip(1) {
            integral += if i % 2 == 1 { 4.0 * r } else { 2.0 * r };
        }
        integral *= h / 3.0;
        let loss = trace.energies[0] - trace.energies[m];
        assert!((loss - integral).abs() <= 1e-4 * loss, "{loss} vs {integral}");
    }

    #[test]
    fn synthetic_fit_is_exact() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let trace = EnergyTrace {
            energies: times.iter().map(|t| (-1.3 * t).exp()).collect(),
            times,
            fitted_rate: None,
            fit_window: None,
        };
        let fit = fit_decay_rate(&trace, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 1.3).abs() < 1e-9);
        assert!(fit_decay_rate(&trace, (0.0, 1.0)).is_err());
    }

    #[test]
    fn eigenmode_energy_follows_its_eigenvalue() {
        let p = DampingProfile::projector(2, 0.5).unwrap();
        let op = assemble(&p, 8).unwrap();
        let (s, lambda) = eigenmode_initial(&op, C64::new(-0.2, 3.0)).unwrap();
        let states = evolve_with(&op, &s, 10.0, 0.05, EvolveOptions { integrator: Integrator::Spectral, record_every: 10 }).unwrap();
        let e0 = energy(&s);
        for st in &states {
            let expect = (2.0 * lambda.re * st.t).exp() * e0;
            assert!((energy(st) - expect).abs() <= 1e-6 * expect);
        }
    }

    #[test]
    fn beam_has_unit_energy_and_narrows_with_k() {
        let p = DampingProfile::zero(1);
        let second_moment = |k: u32| {
            let spec = BeamSpec::new(k, 1.0, Direction::Forward, vec![C64::new(1.0, 0.0)]);
            let s = gaussian_beam_initial(&p, &spec).unwrap();
            assert!((energy(&s) - 1.0).abs() < 1e-12);
            // Parseval: int |u|^2 (x - x0)^2 from samples of u
            let samples = 4096;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..samples {
                let x = 1.0 - PI + 2.0 * PI * j as f64 / samples as f64;
                let u: C64 = (0..2 * s.cutoff + 1)
                    .map(|i| s.u_hat[i] * C64::from_polar(1.0, (i as f64 - s.cutoff as f64) * x))
                    .sum();
                num += u.norm_sqr() * (x - 1.0).powi(2);
                den += u.norm_sqr();
            }
            num / den
        };
        let (a, b) = (second_moment(32), second_moment(64));
        assert!((a / b - 2.0).abs() < 1e-6, "{a} / {b}");
    }

    #[test]
    fn beam_rejects_low_frequency() {
        let spec = BeamSpec::new(4, 0.0, Direction::Forward, vec![C64::new(1.0, 0.0)]);
        assert!(gaussian_beam_initial(&DampingProfile::zero(1), &spec).is_err());
    }

    #[test]
    fn undamped_beam_keeps_energy() {
        let spec = BeamSpec::new(16, 0.5, Direction::Backward, vec![C64::new(1.0, 0.0)]);
        let chk = beam_transport_check(&DampingProfile::zero(1), &spec, 1.0).unwrap();
        assert!((chk.ratio - 1.0).abs() < 1e-6 && chk.predicted == 1.0);
    }
}
