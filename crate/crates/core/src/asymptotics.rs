//! Behaviour of `C_inf(lambda a) / lambda` as `lambda -> infinity` and `lambda -> 0+`
//! for profiles whose period map is an ordered product of exponentials.
//!
//! With generators `g_i` the period map of `lambda a` is `prod_i exp(-lambda g_i)`;
//! powers are taken on the factors, never by integrating `lambda a`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::NormConvention;
use crate::damping::{DampingProfile, TWO_PI};
use crate::error::{Error, Result};
use crate::matrix::{spectral_radius, ComplexMatrix, HermitianEigen, HermitianMatrix, C64};

pub const MIN_SCHEDULE_LEN: usize = 6;
pub const MIN_SCHEDULE_MAX: f64 = 50.0;

/// The product is rescaled to unit max-entry; below this radius its
/// eigenvalues carry fewer than eight correct digits and the point is
/// flagged instead of used.
const SINGULAR_RADIUS: f64 = 1e-8;

/// Ordered factors `A_1 ... A_m` of a period map, stored as `A_i = exp(-g_i)`.
#[derive(Clone, Debug)]
pub struct FactorChain {
    n: usize,
    generators: Vec<HermitianMatrix>,
    spectra: Vec<HermitianEigen>,
    expansion: Option<Expansion>,
}

/// Characteristic-polynomial coefficients of the period map of `lambda a` as
/// exponential sums: `b_m(lambda) = sum_g c_g exp(-lambda e_g)`, groups sorted
/// by exponent, vanishing groups removed.
#[derive(Clone, Debug)]
struct Expansion {
    coefficients: Vec<Vec<(f64, C64)>>,
    /// Two distinct exponents of some `b_m` are too close to tell apart.
    ambiguous: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRadius {
    /// `ln rho(prod A_i^lambda)`.
    pub log_radius: f64,
    pub underflow: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub slope_infinity: f64,
    pub slope_zero: f64,
    /// `lambda_min` of the average of `a`, the first-order value of `slope_zero`.
    pub slope_zero_first_order: f64,
    /// Compound-matrix value of `slope_infinity` when it is well separated.
    pub slope_infinity_exact: Option<f64>,
    pub lambda_schedule: Vec<f64>,
    /// `C_inf(lambda a) / lambda` on the schedule.
    pub ratios: Vec<f64>,
    /// Distance of each running extrapolant from the final one.
    pub residuals: Vec<f64>,
    pub ordering_observed: bool,
    pub underflow: bool,
    pub continuity_ok: bool,
    pub convention: NormConvention,
}

impl FactorChain {
    pub fn from_generators(generators: Vec<HermitianMatrix>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::invalid("factor chain needs at least one generator"));
        };
        let n = first.dim();
        if generators.iter().any(|g| g.dim() != n) {
            return Err(Error::invalid("generator dimensions differ"));
        }
        let spectra = generators.iter().map(|g| g.eigh()).collect::<Result<Vec<_>>>()?;
        let expansion = expand(n, &spectra);
        Ok(Self {
            n,
            generators,
            spectra,
            expansion,
        })
    }

    pub fn from_profile(profile: &DampingProfile) -> Result<Self> {
        let gens = profile.period_generators().ok_or_else(|| {
            Error::invalid("slopes need a bump or piecewise-constant profile (exact period factors)")
        })?;
        Self::from_generators(gens)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[HermitianMatrix] {
        &self.generators
    }

    /// `ln rho(prod_i exp(-lambda g_i))`, computed on rescaled factors.
    pub fn log_radius(&self, lambda: f64) -> Result<ChainRadius> {
        let mut log_scale = 0.0;
        let mut prod = ComplexMatrix::identity(self.n);
        for eig in &self.spectra {
            let shift = eig.values[0];
            log_scale -= lambda * shift;
            // largest eigenvalue of each rescaled factor is exactly 1
            let f = eig.reassemble(|mu| C64::new((-lambda * (mu - shift)).exp(), 0.0));
            prod = &prod * &f;
            let s = prod.norm_max();
            if s == 0.0 {
                return Ok(ChainRadius {
                    log_radius: f64::NEG_INFINITY,
                    underflow: true,
                });
            }
            log_scale += s.ln();
            prod = prod.scale_real(1.0 / s);
        }
        let rho = spectral_radius(&prod)?;
        if rho < SINGULAR_RADIUS {
            // nearly nilpotent product: fall back to the exponential sums
            return match &self.expansion {
                Some(e) => e.log_radius(lambda),
                None => Ok(ChainRadius {
                    log_radius: f64::NEG_INFINITY,
                    underflow: true,
                }),
            };
        }
        Ok(ChainRadius {
            log_radius: log_scale + rho.ln(),
            underflow: false,
        })
    }

    /// `ln rho` from the exponential sums alone; `None` when `n > 4`.
    pub fn log_radius_expanded(&self, lambda: f64) -> Option<Result<ChainRadius>> {
        self.expansion.as_ref().map(|e| e.log_radius(lambda))
    }

    /// `C_inf(lambda a)`.
    pub fn c_infinity(&self, lambda: f64, convention: NormConvention) -> Result<f64> {
        let r = self.log_radius(lambda)?;
        Ok(-convention.factor() * r.log_radius / TWO_PI)
    }

    /// `C_inf(lambda a) / lambda` on `schedule`, in parallel.
    pub fn ratios(&self, schedule: &[f64]) -> Result<Vec<(f64, bool)>> {
        schedule
            .par_iter()
            .map(|&l| {
                let r = self.log_radius(l)?;
                Ok((-r.log_radius / (TWO_PI * l), r.underflow))
            })
            .collect()
    }

    /// `lambda_min(sum g_i) / 2 pi`: the slope at zero to first order in `lambda`.
    pub fn first_order_slope(&self) -> Result<f64> {
        let mut sum = HermitianMatrix::zeros(self.n);
        for g in &self.generators {
            sum = sum.add(g);
        }
        Ok(sum.min_eigenvalue()? / TWO_PI)
    }
}

/// `2^2, 2^3, ..., 2^8`.
pub fn default_schedule() -> Vec<f64> {
    (2..=8).map(|j| f64::powi(2.0, j)).collect()
}

/// Extrapolates `s(lambda) = C_inf(lambda a) / lambda` to `lambda -> infinity`
/// with a Richardson secant in `1 / lambda` and collects diagnostics.
pub fn slope_infinity(chain: &FactorChain, schedule: &[f64]) -> Result<SlopeReport> {
    if schedule.len() < MIN_SCHEDULE_LEN {
        return Err(Error::invalid(format!(
            "schedule needs at least {MIN_SCHEDULE_LEN} points, got {}",
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] <= 0.0 {
        return Err(Error::invalid("schedule must be positive and strictly increasing"));
    }
    if *schedule.last().unwrap() < MIN_SCHEDULE_MAX {
        return Err(Error::invalid(format!("schedule must reach lambda >= {MIN_SCHEDULE_MAX}")));
    }
    let values = chain.ratios(schedule)?;
    let underflow = values.iter().any(|v| v.1);
    let usable: Vec<(f64, f64)> = schedule
        .iter()
        .zip(&values)
        .filter(|(_, v)| !v.1)
        .map(|(&l, v)| (l, v.0))
        .collect();
    if usable.len() < 2 {
        return Err(Error::NumericalFailure {
            context: "period map underflows on the whole schedule".into(),
            iterations: None,
        });
    }
    let secant = |(l1, s1): (f64, f64), (l2, s2): (f64, f64)| (l2 * s2 - l1 * s1) / (l2 - l1);
    let k = usable.len();
    let slope = secant(usable[k - 2], usable[k - 1]);
    let mut residuals = Vec::with_capacity(schedule.len());
    let mut prev: Option<(f64, f64)> = None;
    for (&l, v) in schedule.iter().zip(&values) {
        let r = if v.1 {
            f64::INFINITY
        } else {
            let estimate = match prev {
                Some(p) => secant(p, (l, v.0)),
                None => v.0,
            };
            prev = Some((l, v.0));
            (estimate - slope).abs()
        };
        residuals.push(r);
    }
    let ratios: Vec<f64> = values.iter().map(|v| v.0).collect();
    let continuity_ok = continuity_ok(schedule, &ratios);
    let slope_zero = slope_zero(chain)?;
    let exact = exact_slope_infinity(chain);
    Ok(SlopeReport {
        slope_infinity: slope,
        slope_zero,
        slope_zero_first_order: chain.first_order_slope()?,
        slope_infinity_exact: exact,
        lambda_schedule: schedule.to_vec(),
        ratios,
        residuals,
        ordering_observed: slope <= slope_zero + 1e-6,
        underflow,
        continuity_ok,
        convention: NormConvention::Norm,
    })
}

/// No step of `s` on the schedule exceeds ten times the median local slope
/// (plus a floor), which would indicate an eigenvalue branch flip.
fn continuity_ok(schedule: &[f64], ratios: &[f64]) -> bool {
    let mut slopes: Vec<f64> = schedule
        .windows(2)
        .zip(ratios.windows(2))
        .filter(|(_, r)| r[0].is_finite() && r[1].is_finite())
        .map(|(l, r)| ((r[1] - r[0]) / (l[1] - l[0])).abs())
        .collect();
    if slopes.is_empty() {
        return true;
    }
    let lipschitz: Vec<f64> = slopes.clone();
    slopes.sort_by(f64::total_cmp);
    let median = slopes[slopes.len() / 2];
    let scale = ratios.iter().filter(|r| r.is_finite()).fold(0.0f64, |m, r| m.max(r.abs()));
    lipschitz.iter().zip(schedule.windows(2)).all(|(&s, l)| {
        let step = l[1] - l[0];
        s * step <= 10.0 * median * step + 1e-9 * (1.0 + scale) || s <= 1e-9
    })
}

/// Richardson extrapolation of `s(lambda)` over `lambda = 1, 1/2, 1/4, ...`
/// (error expansion in integer powers of `lambda`).
pub fn slope_zero(chain: &FactorChain) -> Result<f64> {
    const LEVELS: usize = 12;
    const DEPTH: usize = 4;
    let schedule: Vec<f64> = (0..LEVELS).map(|j| f64::powi(0.5, j as i32)).collect();
    let values = chain.ratios(&schedule)?;
    if values.iter().any(|v| v.1) {
        return Err(Error::numerical("period map underflows at small lambda"));
    }
    // Neville table on the smallest lambdas
    let mut row: Vec<f64> = values[LEVELS - DEPTH - 1..].iter().map(|v| v.0).collect();
    for level in 1..row.len() {
        let factor = f64::powi(2.0, level as i32);
        row = row.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        if row.len() == 1 {
            break;
        }
    }
    Ok(row[0])
}

/// Logs and returns whether `slope_infinity <= slope_zero + 1e-6`.
pub fn ordering_probe(profile: &DampingProfile) -> Result<bool> {
    let chain = FactorChain::from_profile(profile)?;
    let report = slope_infinity(&chain, &default_schedule())?;
    log::info!(
        "ordering probe: slope_infinity = {:.9}, slope_zero = {:.9}, ordered = {}",
        report.slope_infinity,
        report.slope_zero,
        report.ordering_observed
    );
    Ok(report.ordering_observed)
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::new(), &mut out);
    out
}

fn small_det(mut a: Vec<Vec<C64>>) -> C64 {
    let n = a.len();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        if a[pivot][col].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
        }
    }
    det
}

/// `m`-th compound of `v`: the matrix of `m x m` minors.
fn compound(v: &ComplexMatrix, sets: &[Vec<usize>]) -> Vec<Vec<C64>> {
    sets.iter()
        .map(|rows| {
            sets.iter()
                .map(|cols| small_det(rows.iter().map(|&r| cols.iter().map(|&c| v[(r, c)]).collect()).collect()))
                .collect()
        })
        .collect()
}

const MAX_EXPANSION_TERMS: usize = 1 << 16;

fn expand(n: usize, spectra: &[HermitianEigen]) -> Option<Expansion> {
    const MERGE: f64 = 1e-9;
    const SEPARATION: f64 = 1e-6;
    const VANISHING: f64 = 1e-10;
    if n > 4 {
        return None;
    }
    let mut coefficients = Vec::with_capacity(n);
    let mut ambiguous = false;
    for m in 1..=n {
        let sets = subsets(n, m);
        let dim = sets.len();
        let j = spectra.len();
        if (dim as f64).powi(j as i32) > MAX_EXPANSION_TERMS as f64 {
            return None;
        }
        // columns of the m-th compound of each eigenvector matrix and the matching exponents
        let factors: Vec<(Vec<Vec<C64>>, Vec<f64>)> = spectra
            .iter()
            .map(|eig| {
                let c = compound(&eig.vectors, &sets);
                let columns = (0..dim).map(|s| (0..dim).map(|r| c[r][s]).collect()).collect();
                let exps = sets.iter().map(|s| s.iter().map(|&i| eig.values[i]).sum()).collect();
                (columns, exps)
            })
            .collect();
        // tr(c_1 c_1* c_2 c_2* ... c_J c_J*) = prod_i <c_i, c_{i+1}> cyclically
        let mut terms: Vec<(f64, C64)> = Vec::new();
        let mut idx = vec![0usize; j];
        loop {
            let exponent: f64 = idx.iter().enumerate().map(|(i, &k)| factors[i].1[k]).sum();
            let mut coeff = C64::new(1.0, 0.0);
            for i in 0..j {
                let a = &factors[i].0[idx[i]];
                let b = &factors[(i + 1) % j].0[idx[(i + 1) % j]];
                coeff *= a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>();
            }
            terms.push((exponent, coeff));
            let mut pos = 0;
            while pos < j {
                idx[pos] += 1;
                if idx[pos] < dim {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == j {
                break;
            }
        }
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, C64)> = Vec::new();
        for (e, c) in terms {
            match groups.last_mut() {
                Some(g) if (e - g.0).abs() <= MERGE * (1.0 + e.abs()) => g.1 += c,
                Some(g) => {
                    if (e - g.0).abs() <= SEPARATION * (1.0 + e.abs()) {
                        ambiguous = true;
                    }
                    groups.push((e, c));
                }
                None => groups.push((e, c)),
            }
        }
        groups.retain(|g| g.1.norm() > VANISHING);
        coefficients.push(groups);
    }
    Some(Expansion { coefficients, ambiguous })
}

impl Expansion {
    /// Largest root of `z^n - b_1 z^{n-1} + b_2 z^{n-2} - ...`, with the
    /// variable rescaled by the Newton-polygon size of the coefficients.
    fn log_radius(&self, lambda: f64) -> Result<ChainRadius> {
        let n = self.coefficients.len();
        // (ln |b_m|, b_m / |b_m|)
        let logs: Vec<Option<(f64, C64)>> = self
            .coefficients
            .iter()
            .map(|groups| {
                let (e0, _) = *groups.first()?;
                let sum: C64 = groups.iter().map(|&(e, c)| c * (-lambda * (e - e0)).exp()).sum();
                let norm = sum.norm();
                (norm > 0.0).then(|| (-lambda * e0 + norm.ln(), sum / norm))
            })
            .collect();
        let Some(log_sigma) = logs
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|(v, _)| v / (i + 1) as f64))
            .reduce(f64::max)
        else {
            return Ok(ChainRadius {
                log_radius: f64::NEG_INFINITY,
                underflow: true,
            });
        };
        // companion matrix of w^n + beta_1 w^{n-1} + ... + beta_n, beta_m = (-1)^m b_m / sigma^m
        let companion = ComplexMatrix::from_fn(n, |i, j| {
            if i == 0 {
                match logs[j] {
                    Some((v, phase)) => {
                        let sign = if (j + 1) % 2 == 1 { 1.0 } else { -1.0 };
                        // first row holds -beta_{j+1}
                        phase * (sign * (v - (j + 1) as f64 * log_sigma).exp())
                    }
                    None => C64::new(0.0, 0.0),
                }
            } else if i == j + 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let w = spectral_radius(&companion)?;
        Ok(ChainRadius {
            log_radius: log_sigma + w.ln(),
            underflow: w == 0.0,
        })
    }
}

/// Exact `lim C_inf(lambda a) / lambda` from the exponential sums.
///
/// `b_m(lambda)` decays like `exp(-lambda E_m)` with `E_m` its smallest
/// surviving exponent, and the Newton polygon of the characteristic
/// polynomial gives `ln rho ~ -lambda min_m E_m / m`.
///
/// Returns `None` if `n > 4` or two distinct exponents are too close to be
/// told apart from a coincidence.
pub fn exact_slope_infinity(chain: &FactorChain) -> Option<f64> {
    let e = chain.expansion.as_ref()?;
    if e.ambiguous {
        return None;
    }
    let best = e
        .coefficients
        .iter()
        .enumerate()
        .filter_map(|(i, groups)| groups.first().map(|g| g.0 / (i + 1) as f64))
        .reduce(f64::min)?;
    Some(best / TWO_PI)
}
