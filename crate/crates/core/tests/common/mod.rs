#![allow(dead_code)]

use std::f64::consts::TAU;

use decayscope::damping::{Bump, DampingProfile, Mollifier};
use decayscope::search::random_hpd;
use decayscope::HermitianMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hpd(rng: &mut ChaCha8Rng, n: usize, max_scale: f64) -> HermitianMatrix {
    let s = rng.random_range(0.2..max_scale);
    random_hpd(n, rng).unwrap().scale(s)
}

/// `count` disjoint bumps at evenly spaced, randomly rotated centres.
pub fn random_bumps(rng: &mut ChaCha8Rng, n: usize, count: usize) -> DampingProfile {
    let slot = TAU / count as f64;
    let width = slot * rng.random_range(0.5..0.95);
    let phase = rng.random_range(0.0..TAU);
    let bumps = (0..count)
        .map(|j| Bump {
            center: (phase + slot * j as f64) % TAU,
            matrix: hpd(rng, n, 1.5),
        })
        .collect();
    DampingProfile::bumps(bumps, width, Mollifier::Exponential).unwrap()
}

/// Cycles through exact-factor and Magnus-integrated profile families.
pub fn random_profile(rng: &mut ChaCha8Rng, index: usize) -> DampingProfile {
    let n = rng.random_range(1..=3);
    match index % 5 {
        0 => {
            let count = rng.random_range(1..=4);
            random_bumps(rng, n, count)
        }
        1 => {
            let m = rng.random_range(2..=4);
            let mut bp: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
            bp.sort_by(f64::total_cmp);
            let values = (0..m).map(|_| hpd(rng, n, 1.0)).collect();
            DampingProfile::piecewise_constant(bp, values).unwrap()
        }
        2 => {
            // overlapping, non-commuting supports
            let a = random_bumps(rng, n, 2);
            let b = random_bumps(rng, n, 2);
            a.add(&b).unwrap()
        }
        3 => {
            let k = rng.random_range(1..=3);
            let phase = rng.random_range(0.4..2.7);
            let s = rng.random_range(0.2..1.2);
            DampingProfile::projector(k, phase).unwrap().scale(s).unwrap()
        }
        _ => DampingProfile::constant(hpd(rng, n, 1.0)),
    }
}
