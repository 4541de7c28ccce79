//! Randomised search for period factors on which `C_inf` fails to be
//! homogeneous, monotone or additive.
//!
//! Every trial draws its own ChaCha8 stream (seed fixed, stream = trial
//! index), so parallel and serial runs produce identical findings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{interleaved_profiles, product_profile};
use crate::cocycle::{c_infinity, c_infinity_of_factors, NormConvention, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HermitianMatrix, C64};

pub const EIGENVALUE_FLOOR: f64 = 0.02;
pub const MIN_MARGIN: f64 = 1e-6;
/// Agreement required between the factor product and the bump-profile cocycle.
pub const REVERIFY_TOL: f64 = 1e-10;
pub const MAX_HUNT_DIM: usize = 4;
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9)";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `U diag(l) U^*` with `U` orthonormalised from a complex Gaussian matrix
/// and `l` uniform in `[EIGENVALUE_FLOOR, 1]`.
pub fn random_hpd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(n);
    while columns.len() < n {
        let mut v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for q in &columns {
            let proj: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // Degenerate draws have probability zero; redraw rather than divide by ~0.
        if norm > 1e-8 {
            v.iter_mut().for_each(|z| *z /= norm);
            columns.push(v);
        }
    }
    let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(EIGENVALUE_FLOOR..=1.0)).collect();
    let m = ComplexMatrix::from_fn(n, |i, j| {
        (0..n).map(|k| columns[k][i] * lambdas[k] * columns[k][j].conj()).sum()
    });
    Ok(HermitianMatrix::symmetrized(&m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// `C_inf(2a) > 2 C_inf(a)`.
    ScalingSuper,
    /// `C_inf(2a) < C_inf(a)`.
    ScalingSub,
    /// `C_inf(a + b) > C_inf(a) + C_inf(b)`.
    AdditivitySuper,
    /// `C_inf(a + b) < C_inf(a) + C_inf(b)`.
    AdditivitySub,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::ScalingSuper,
        Property::ScalingSub,
        Property::AdditivitySuper,
        Property::AdditivitySub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::ScalingSuper => "scaling_super",
            Property::ScalingSub => "scaling_sub",
            Property::AdditivitySuper => "additivity_super",
            Property::AdditivitySub => "additivity_sub",
        }
    }

    /// Factors per witness: `A1 A2 A3` for scaling, `A1 A2 B1 B2` for additivity.
    pub fn witness_len(self) -> usize {
        match self {
            Property::ScalingSuper | Property::ScalingSub => 3,
            Property::AdditivitySuper | Property::AdditivitySub => 4,
        }
    }

    fn margin(self, values: &BTreeMap<String, f64>) -> f64 {
        let v = |k: &str| values[k];
        match self {
            Property::ScalingSuper => v("c_2a") - 2.0 * v("c_a"),
            Property::ScalingSub => v("c_a") - v("c_2a"),
            Property::AdditivitySuper => v("c_a_plus_b") - v("c_a") - v("c_b"),
            Property::AdditivitySub => v("c_a") + v("c_b") - v("c_a_plus_b"),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown property `{s}`")))
    }
}

/// A strict witness. `values` hold `C_inf` in the `Norm` convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub property: Property,
    /// Factor matrices as rows of `[re, im]` pairs.
    pub witness: Vec<Vec<Vec<[f64; 2]>>>,
    pub values: BTreeMap<String, f64>,
    pub margin: f64,
    pub seed: u64,
    pub trial: usize,
    pub generator: String,
    pub version: String,
}

impl Finding {
    pub fn witness_matrices(&self) -> Result<Vec<HermitianMatrix>> {
        self.witness
            .iter()
            .map(|rows| {
                let rows = rows
                    .iter()
                    .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
                    .collect();
                HermitianMatrix::new(ComplexMatrix::from_rows(rows)?)
            })
            .collect()
    }

    /// Values recomputed from the stored witness.
    pub fn recompute(&self) -> Result<BTreeMap<String, f64>> {
        factor_values(self.property, &self.witness_matrices()?)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("finding is plain data")
    }
}

#[derive(Debug, Clone)]
pub struct HuntConfig {
    pub property: Property,
    pub trials: usize,
    pub seed: u64,
    pub n: usize,
    /// Witnesses evaluated as trials `0, 1, ...` ahead of the random draws.
    pub injected: Vec<Vec<HermitianMatrix>>,
}

impl HuntConfig {
    pub fn new(property: Property, trials: usize, seed: u64, n: usize) -> Self {
        Self { property, trials, seed, n, injected: Vec::new() }
    }

    pub fn with_injected(mut self, witness: Vec<HermitianMatrix>) -> Self {
        self.injected.push(witness);
        self
    }
}

fn square(m: &HermitianMatrix) -> ComplexMatrix {
    m.as_matrix() * m.as_matrix()
}

fn factor_values(property: Property, w: &[HermitianMatrix]) -> Result<BTreeMap<String, f64>> {
    let conv = NormConvention::Norm;
    let m = |h: &HermitianMatrix| h.as_matrix().clone();
    let mut values = BTreeMap::new();
    match property {
        Property::ScalingSuper | Property::ScalingSub => {
            values.insert("c_a".into(), c_infinity_of_factors(&[m(&w[0]), m(&w[1]), m(&w[2])], conv)?);
            values.insert(
                "c_2a".into(),
                c_infinity_of_factors(&[square(&w[0]), square(&w[1]), square(&w[2])], conv)?,
            );
        }
        Property::AdditivitySuper | Property::AdditivitySub => {
            values.insert("c_a".into(), c_infinity_of_factors(&[m(&w[0]), m(&w[1])], conv)?);
            values.insert("c_b".into(), c_infinity_of_factors(&[m(&w[2]), m(&w[3])], conv)?);
            values.insert(
                "c_a_plus_b".into(),
                c_infinity_of_factors(&[m(&w[0]), m(&w[2]), m(&w[1]), m(&w[3])], conv)?,
            );
        }
    }
    Ok(values)
}

/// The same values through bump profiles and the cocycle.
fn profile_values(property: Property, w: &[HermitianMatrix]) -> Result<BTreeMap<String, f64>> {
    let conv = NormConvention::Norm;
    let mut values = BTreeMap::new();
    match property {
        Property::ScalingSuper | Property::ScalingSub => {
            let p = product_profile(w)?;
            values.insert("c_a".into(), c_infinity(&p, conv, DEFAULT_STEP)?);
            values.insert("c_2a".into(), c_infinity(&p.scale(2.0)?, conv, DEFAULT_STEP)?);
        }
        Property::AdditivitySuper | Property::AdditivitySub => {
            let (pa, pb) = interleaved_profiles(&[w[0].clone(), w[1].clone()], &[w[2].clone(), w[3].clone()])?;
            values.insert("c_a".into(), c_infinity(&pa, conv, DEFAULT_STEP)?);
            values.insert("c_b".into(), c_infinity(&pb, conv, DEFAULT_STEP)?);
            values.insert("c_a_plus_b".into(), c_infinity(&pa.add(&pb)?, conv, DEFAULT_STEP)?);
        }
    }
    Ok(values)
}

/// Evaluates one witness; `Some` only for a strict, re-verified witness.
pub fn evaluate(property: Property, witness: &[HermitianMatrix], seed: u64, trial: usize) -> Result<Option<Finding>> {
    if witness.len() != property.witness_len() {
        return Err(Error::invalid(format!(
            "{property} needs {} factors, got {}",
            property.witness_len(),
            witness.len()
        )));
    }
    let values = factor_values(property, witness)?;
    let margin = property.margin(&values);
    if !(margin > MIN_MARGIN) {
        return Ok(None);
    }
    let check = profile_values(property, witness)?;
    let agree = values.iter().all(|(k, v)| (check[k] - v).abs() <= REVERIFY_TOL * (1.0 + v.abs()));
    if !agree || !(property.margin(&check) > MIN_MARGIN) {
        log::warn!("trial {trial}: {property} witness failed re-verification ({values:?} vs {check:?})");
        return Ok(None);
    }
    let witness = witness
        .iter()
        .map(|h| {
            h.as_matrix()
                .rows()
                .into_iter()
                .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
                .collect()
        })
        .collect();
    Ok(Some(Finding {
        property,
        witness,
        values,
        margin,
        seed,
        trial,
        generator: GENERATOR.into(),
        version: VERSION.into(),
    }))
}

/// Trial `t` draws its factors from stream `t` of `ChaCha8Rng::seed_from_u64(seed)`.
pub fn trial_witness(property: Property, n: usize, seed: u64, trial: usize) -> Result<Vec<HermitianMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    (0..property.witness_len()).map(|_| random_hpd(n, &mut rng)).collect()
}

/// Findings sorted by margin (descending), ties broken by trial index.
pub fn hunt(config: &HuntConfig) -> Result<Vec<Finding>> {
    if config.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if config.n == 0 || config.n > MAX_HUNT_DIM {
        return Err(Error::invalid(format!("hunt dimension must lie in 1..={MAX_HUNT_DIM}")));
    }
    if let Some(bad) = config.injected.iter().flatten().find(|h| h.dim() != config.n) {
        return Err(Error::invalid(format!("injected factor of dimension {} in a hunt with n = {}", bad.dim(), config.n)));
    }
    let total = config.trials.max(config.injected.len());
    let outcomes: Vec<Option<Finding>> = (0..total)
        .into_par_iter()
        .map(|t| {
            let witness = match config.injected.get(t) {
                Some(w) => w.clone(),
                None => trial_witness(config.property, config.n, config.seed, t)?,
            };
            evaluate(config.property, &witness, config.seed, t)
        })
        .collect::<Result<_>>()?;
    let mut findings: Vec<Finding> = outcomes.into_iter().flatten().collect();
    findings.sort_by(|a, b| b.margin.total_cmp(&a.margin).then(a.trial.cmp(&b.trial)));
    if findings.is_empty() {
        log::info!("{} over {total} trials (n = {}): no witness", config.property, config.n);
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn random_hpd_spectrum_lies_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=4 {
            for _ in 0..250 {
                let h = random_hpd(n, &mut rng).unwrap();
                let ev = h.eigenvalues().unwrap();
                assert!(ev[0] >= EIGENVALUE_FLOOR - 1e-10 && ev[n - 1] <= 1.0 + 1e-10, "{ev:?}");
            }
        }
    }

    #[test]
    fn random_hpd_is_reproducible() {
        let a = random_hpd(3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = random_hpd(3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.as_matrix().rows(), b.as_matrix().rows());
    }

    #[test]
    fn property_names_round_trip() {
        for p in Property::ALL {
            assert_eq!(p.to_string().parse::<Property>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("scaling".parse::<Property>().is_err());
    }

    #[test]
    fn printed_triples_are_witnesses() {
        let t1 = catalog::clamped(&catalog::superhomogeneous_triple()).unwrap();
        let f = evaluate(Property::ScalingSuper, &t1, 0, 0).unwrap().expect("super witness");
        assert!(f.values["c_2a"] > 2.0 * f.values["c_a"]);
        let t2 = catalog::clamped(&catalog::decreasing_triple()).unwrap();
        let f = evaluate(Property::ScalingSub, &t2, 0, 0).unwrap().expect("sub witness");
        assert!(f.values["c_2a"] < f.values["c_a"]);
        assert!(evaluate(Property::ScalingSub, &t1, 0, 0).unwrap().is_none());
    }

    #[test]
    fn injected_witness_is_trial_zero() {
        let t1 = catalog::clamped(&catalog::superhomogeneous_triple()).unwrap();
        let cfg = HuntConfig::new(Property::ScalingSuper, 1, 3, 2).with_injected(t1);
        let found = hunt(&cfg).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].trial, 0);
    }

    #[test]
    fn scalar_scaling_hunts_are_empty() {
        for p in [Property::ScalingSuper, Property::ScalingSub] {
            assert!(hunt(&HuntConfig::new(p, 300, 11, 1)).unwrap().is_empty());
        }
    }

    #[test]
    fn hunt_is_deterministic_and_sorted() {
        let cfg = HuntConfig::new(Property::AdditivitySub, 400, 2024, 2);
        let a = hunt(&cfg).unwrap();
        let b = hunt(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert!(a.windows(2).all(|w| w[0].margin >= w[1].margin));
        let serial: Vec<Finding> = (0..cfg.trials)
            .filter_map(|t| {
                let w = trial_witness(cfg.property, cfg.n, cfg.seed, t).unwrap();
                evaluate(cfg.property, &w, cfg.seed, t).unwrap()
            })
            .collect();
        assert_eq!(serial.len(), a.len());
    }

    #[test]
    fn findings_survive_json_and_recompute_exactly() {
        let found = hunt(&HuntConfig::new(Property::AdditivitySub, 200, 5, 2)).unwrap();
        for f in found.iter().take(5) {
            let back: Finding = serde_json::from_str(&f.to_json_line()).unwrap();
            assert_eq!(&back, f);
            assert_eq!(back.recompute().unwrap(), f.values);
        }
    }

    #[test]
    fn wrong_witness_length_is_rejected() {
        let t = catalog::clamped(&catalog::superhomogeneous_triple()).unwrap();
        assert!(evaluate(Property::AdditivitySub, &t, 0, 0).is_err());
        assert!(hunt(&HuntConfig::new(Property::ScalingSub, 0, 0, 2)).is_err());
        assert!(hunt(&HuntConfig::new(Property::ScalingSub, 1, 0, 5)).is_err());
    }
}
