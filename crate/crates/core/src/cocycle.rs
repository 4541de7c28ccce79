//! The damping cocycle along characteristics.
//!
//! For a phase-space point `(x0, dir)` the characteristic is `x_t = x0 + dir t`
//! and `G_t` solves `dG/dt = -a(x_t) G`, `G_0 = Id`. Then
//! `G_{t+s}(x0) = G_s(x_t) G_t(x0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::damping::{wrap_angle, DampingProfile, ProfileKind, TWO_PI};
use crate::error::{Error, Result};
use crate::matrix::{matrix_exp, spectral_norm, spectral_radius, ComplexMatrix, HermitianMatrix, C64};
use crate::quadrature::GaussLegendre;

/// Magnus step for profiles without exact segment factors.
pub const DEFAULT_STEP: f64 = TWO_PI / 4096.0;

pub const DEFAULT_BASE_GRID: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x0: f64,
    pub direction: Direction,
}

impl PhasePoint {
    pub fn new(x0: f64, direction: Direction) -> Self {
        Self { x0, direction }
    }

    pub fn position(&self, t: f64) -> f64 {
        self.x0 + self.direction.sign() * t
    }
}

/// How decay rates are normalised. `Norm` measures `||G_t||`, `SquaredNorm`
/// measures `||G_t||^2` (energy-like quantities) and is exactly twice `Norm`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormConvention {
    #[default]
    Norm,
    SquaredNorm,
}

impl NormConvention {
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            NormConvention::Norm => 1.0,
            NormConvention::SquaredNorm => 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CocyclePath {
    pub point: PhasePoint,
    pub times: Vec<f64>,
    pub matrices: Vec<ComplexMatrix>,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CEstimate {
    pub t: f64,
    pub value: f64,
    pub sup_log_norm: f64,
    pub argmax: PhasePoint,
    pub grid: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    /// `||G_T G_T^*||_2`.
    pub gamma_norm: f64,
    /// `exp(-2 int_0^T <a(x_t) y_t, y_t> dt)` along the unit dominant direction `y_t`.
    pub integral_form: f64,
    pub relative_error: f64,
}

/// `int_{xl}^{xr} a` for a stretch on which all values of `a` commute
/// (one arc of a piecewise profile or at most one bump).
fn commuting_integral(profile: &DampingProfile, xl: f64, xr: f64) -> Option<HermitianMatrix> {
    let len = xr - xl;
    let xm = wrap_angle(0.5 * (xl + xr));
    match profile.kind() {
        ProfileKind::Constant { value } => Some(value.scale(len)),
        ProfileKind::PiecewiseConstant { .. } => Some(profile.evaluate(xm).ok()?.scale(len)),
        ProfileKind::Bumps {
            bumps,
            width,
            mollifier,
        } => {
            for b in bumps {
                let sm = wrap_angle(xm - b.center + 0.5 * width) / width;
                if sm < 1.0 {
                    let sl = sm - 0.5 * len / width;
                    let sr = sm + 0.5 * len / width;
                    let mass = mollifier.cumulative(sr) - mollifier.cumulative(sl);
                    return Some(b.matrix.scale(mass));
                }
            }
            Some(HermitianMatrix::zeros(profile.dim()))
        }
        _ => None,
    }
}

/// Times in `(0, duration)` at which the characteristic crosses a kink.
fn cut_times(profile: &DampingProfile, x_start: f64, dir: Direction, duration: f64) -> Vec<f64> {
    let kinks = profile.kinks();
    let mut cuts = vec![0.0];
    if !kinks.is_empty() {
        let mut offsets: Vec<f64> = kinks
            .iter()
            .map(|&k| match dir {
                Direction::Forward => wrap_angle(k - x_start),
                Direction::Backward => wrap_angle(x_start - k),
            })
            .collect();
        offsets.sort_by(f64::total_cmp);
        let mut base = 0.0;
        'outer: loop {
            for &o in &offsets {
                let t = base + o;
                if t >= duration {
                    break 'outer;
                }
                if t > 0.0 {
                    cuts.push(t);
                }
            }
            base += TWO_PI;
        }
    }
    cuts.push(duration);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    cuts
}

/// One fourth-order Magnus step for `dG/dt = -a(x_t) G` over `[t, t + h]`.
fn magnus_step(profile: &DampingProfile, point: &PhasePoint, t: f64, h: f64) -> Result<ComplexMatrix> {
    const OFFSET: f64 = 0.288_675_134_594_812_9; // sqrt(3) / 6
    let a1 = profile.evaluate(point.position(t + (0.5 - OFFSET) * h))?;
    let a2 = profile.evaluate(point.position(t + (0.5 + OFFSET) * h))?;
    let (a1, a2) = (a1.as_matrix(), a2.as_matrix());
    // with A_i = -a_i: Omega = h/2 (A1 + A2) + sqrt(3)/12 h^2 [A2, A1]
    let omega = &(a1 + a2).scale_real(-0.5 * h) + &a2.commutator(a1).scale_real(0.5 * OFFSET * h * h);
    matrix_exp(&omega)
}

/// `G_duration` for the characteristic starting at `x_start`.
pub fn transfer(
    profile: &DampingProfile,
    x_start: f64,
    dir: Direction,
    duration: f64,
    step: f64,
) -> Result<ComplexMatrix> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!("duration {duration} must be finite and >= 0")));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    let point = PhasePoint::new(x_start, dir);
    let cuts = cut_times(profile, x_start, dir, duration);
    let mut g = ComplexMatrix::identity(profile.dim());
    for w in cuts.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        if tb <= ta {
            continue;
        }
        let (xa, xb) = (point.position(ta), point.position(tb));
        let (xl, xr) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        let factor = match commuting_integral(profile, xl, xr) {
            Some(gen) => gen.exp_scaled(-1.0)?,
            None => {
                let steps = ((tb - ta) / step).ceil().max(1.0) as usize;
                let h = (tb - ta) / steps as f64;
                let mut f = ComplexMatrix::identity(profile.dim());
                for i in 0..steps {
                    f = &magnus_step(profile, &point, ta + i as f64 * h, h)? * &f;
                }
                f
            }
        };
        g = &factor * &g;
    }
    if !g.is_finite() {
        return Err(Error::numerical("cocycle transfer produced non-finite entries"));
    }
    Ok(g)
}

/// `G_t(point)` at each of the non-decreasing `times`.
pub fn propagate(profile: &DampingProfile, point: PhasePoint, times: &[f64], step: f64) -> Result<CocyclePath> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("times must be non-negative and non-decreasing"));
    }
    let mut matrices = Vec::with_capacity(times.len());
    let mut g = ComplexMatrix::identity(profile.dim());
    let mut t_prev = 0.0;
    for &t in times {
        let f = transfer(profile, point.position(t_prev), point.direction, t - t_prev, step)?;
        g = &f * &g;
        matrices.push(g.clone());
        t_prev = t;
    }
    Ok(CocyclePath {
        point,
        times: times.to_vec(),
        matrices,
        step,
    })
}

/// `G_{2 pi}(x0, dir)`.
pub fn period_map(profile: &DampingProfile, x0: f64, dir: Direction, step: f64) -> Result<ComplexMatrix> {
    transfer(profile, x0, dir, TWO_PI, step)
}

/// `ln ||tail M^p||_2`, rescaling as it goes so long powers do not underflow.
fn log_norm_of_power(tail: &ComplexMatrix, m: &ComplexMatrix, mut p: u64) -> Result<f64> {
    let normalize = |x: ComplexMatrix, log: &mut f64| {
        let s = x.norm_max();
        if s > 0.0 && s.is_finite() {
            *log += s.ln();
            x.scale_real(1.0 / s)
        } else {
            x
        }
    };
    let mut log_acc = 0.0;
    let mut acc = normalize(tail.clone(), &mut log_acc);
    let mut log_base = 0.0;
    let mut base = normalize(m.clone(), &mut log_base);
    while p > 0 {
        if p & 1 == 1 {
            acc = &acc * &base;
            log_acc += log_base;
            acc = normalize(acc, &mut log_acc);
        }
        p >>= 1;
        if p > 0 {
            base = &base * &base;
            log_base *= 2.0;
            base = normalize(base, &mut log_base);
        }
    }
    let n = spectral_norm(&acc)?;
    Ok(if n > 0.0 { log_acc + n.ln() } else { f64::NEG_INFINITY })
}

/// `ln ||G_t(point)||_2`, built as `G_r(x0) G_{2 pi}(x0)^p` with `t = 2 pi p + r`.
pub fn log_norm(profile: &DampingProfile, point: PhasePoint, t: f64, step: f64) -> Result<f64> {
    let periods = (t / TWO_PI).floor();
    let rest = t - periods * TWO_PI;
    let periods = periods as u64;
    if periods == 0 {
        let g = transfer(profile, point.x0, point.direction, rest, step)?;
        let n = spectral_norm(&g)?;
        return Ok(n.ln());
    }
    let full = period_map(profile, point.x0, point.direction, step)?;
    let tail = transfer(profile, point.x0, point.direction, rest, step)?;
    log_norm_of_power(&tail, &full, periods)
}

/// `C(t) = -(1/t) sup_{x0, dir} ln ||G_t(x0, dir)||`, the sup taken over
/// `base_grid` equispaced starting points in both directions.
pub fn c_of_t(
    profile: &DampingProfile,
    t: f64,
    base_grid: usize,
    convention: NormConvention,
    step: f64,
) -> Result<CEstimate> {
    Ok(c_of_t_many(profile, &[t], base_grid, convention, step)?.remove(0))
}

/// `c_of_t` at several times, sharing one period map per starting point.
pub fn c_of_t_many(
    profile: &DampingProfile,
    times: &[f64],
    base_grid: usize,
    convention: NormConvention,
    step: f64,
) -> Result<Vec<CEstimate>> {
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::invalid(format!("t = {t} must be positive")));
    }
    if base_grid == 0 {
        return Err(Error::invalid("grid must be non-empty"));
    }
    let points: Vec<PhasePoint> = (0..base_grid)
        .flat_map(|i| {
            let x0 = TWO_PI * i as f64 / base_grid as f64;
            Direction::BOTH.map(|d| PhasePoint::new(x0, d))
        })
        .collect();
    // logs[point][time]
    let logs = points
        .par_iter()
        .map(|p| {
            let full = if times.iter().any(|&t| t >= TWO_PI) {
                Some(period_map(profile, p.x0, p.direction, step)?)
            } else {
                None
            };
            times
                .iter()
                .map(|&t| {
                    let periods = (t / TWO_PI).floor();
                    let rest = t - periods * TWO_PI;
                    let tail = transfer(profile, p.x0, p.direction, rest, step)?;
                    match (&full, periods as u64) {
                        (Some(m), k) if k > 0 => log_norm_of_power(&tail, m, k),
                        _ => Ok(spectral_norm(&tail)?.ln()),
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (best, sup) = logs
                .iter()
                .map(|row| row[j])
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("grid is non-empty");
            CEstimate {
                t,
                value: -convention.factor() * sup / t,
                sup_log_norm: sup,
                argmax: points[best],
                grid: base_grid,
            }
        })
        .collect())
}

/// `C_inf = -(1/2 pi) ln rho(G_{2 pi}(0, +))`.
pub fn c_infinity(profile: &DampingProfile, convention: NormConvention, step: f64) -> Result<f64> {
    let g = period_map(profile, 0.0, Direction::Forward, step)?;
    rate_from_period_map(&g, convention)
}

/// `C_inf` for a period map given as an ordered product of factors.
pub fn c_infinity_of_factors(factors: &[ComplexMatrix], convention: NormConvention) -> Result<f64> {
    let Some(first) = factors.first() else {
        return Err(Error::invalid("at least one factor required"));
    };
    let mut g = first.clone();
    for f in &factors[1..] {
        if f.dim() != g.dim() {
            return Err(Error::invalid("factor dimensions differ"));
        }
        g = &g * f;
    }
    rate_from_period_map(&g, convention)
}

fn rate_from_period_map(g: &ComplexMatrix, convention: NormConvention) -> Result<f64> {
    let rho = spectral_radius(g)?;
    if rho <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-convention.factor() * rho.ln() / TWO_PI)
}

/// Checks `||Gamma_T|| = exp(-2 int <a y, y>)` for `Gamma = G G^*`, where
/// `y_t = G_t w / |G_t w|` and `w` is the top right singular vector of `G_T`.
pub fn gamma_norm_check(profile: &DampingProfile, point: PhasePoint, duration: f64, step: f64) -> Result<GammaCheck> {
    let g_end = transfer(profile, point.x0, point.direction, duration, step)?;
    let gram = HermitianMatrix::symmetrized(&(&g_end.adjoint() * &g_end));
    let eig = gram.eigh()?;
    let n = profile.dim();
    let top = eig.values[n - 1];
    let mut y: Vec<C64> = (0..n).map(|i| eig.vectors[(i, n - 1)]).collect();

    let rule = GaussLegendre::new(8);
    let cuts = cut_times(profile, point.x0, point.direction, duration);
    let mut integral = 0.0;
    let mut t_prev = 0.0;
    for w in cuts.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        if tb <= ta {
            continue;
        }
        let panels = ((tb - ta) / step).ceil().max(1.0) as usize;
        let mut nodes = Vec::with_capacity(panels * rule.nodes.len());
        rule.for_each_node(ta, tb, panels, |t, wt| nodes.push((t, wt)));
        for (t, wt) in nodes {
            let f = transfer(profile, point.position(t_prev), point.direction, t - t_prev, step)?;
            y = f.mul_vec(&y);
            let len = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            y.iter_mut().for_each(|z| *z /= len);
            t_prev = t;
            let ay = profile.evaluate(point.position(t))?.as_matrix().mul_vec(&y);
            let quad: f64 = y.iter().zip(&ay).map(|(a, b)| (a.conj() * b).re).sum();
            integral += wt * quad;
        }
    }
    let integral_form = (-2.0 * integral).exp();
    Ok(GammaCheck {
        gamma_norm: top,
        integral_form,
        relative_error: (top - integral_form).abs() / top.abs().max(f64::MIN_POSITIVE),
    })
}
