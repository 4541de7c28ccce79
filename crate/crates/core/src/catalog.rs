//! Reference 2x2 period factors with known qualitative behaviour, and the
//! bump profiles realising them.
//!
//! Entries are given to two decimals, so a few factors are not positive
//! definite as printed. Profiles are built from factors projected onto
//! `FACTOR_FLOOR <= A <= Id`.

use crate::damping::{factor_generator, DampingProfile, Mollifier};
use crate::error::Result;
use crate::matrix::{clamp_spectrum, ComplexMatrix, HermitianMatrix, C64};

pub const FACTOR_FLOOR: f64 = 1e-3;
/// Bump width as a fraction of the arc each bump occupies.
pub const WIDTH_FRACTION: f64 = 0.9;

fn h(a: f64, b: (f64, f64), d: f64) -> HermitianMatrix {
    let m = ComplexMatrix::from_rows(vec![
        vec![C64::new(a, 0.0), C64::new(b.0, b.1)],
        vec![C64::new(b.0, -b.1), C64::new(d, 0.0)],
    ])
    .expect("2x2 rows");
    HermitianMatrix::new(m).expect("Hermitian by construction")
}

/// `C_inf(2a) > 2 C_inf(a)` for the profile with period map `A1 A2 A3`.
pub fn superhomogeneous_triple() -> [HermitianMatrix; 3] {
    [
        h(0.87, (0.21, 0.09), 0.51),
        h(0.35, (-0.23, 0.08), 0.61),
        h(0.23, (0.11, -0.21), 0.25),
    ]
}

/// `C_inf(2a) < C_inf(a)` for the profile with period map `A1 A2 A3`.
pub fn decreasing_triple() -> [HermitianMatrix; 3] {
    [
        h(0.49, (0.46, -0.11), 0.52),
        h(0.49, (-0.02, 0.3), 0.58),
        h(0.52, (-0.3, -0.33), 0.37),
    ]
}

/// `([A1, A2], [B1, B2])` with `C_inf(a + b) < C_inf(a) + C_inf(b)`.
pub fn subadditive_pair() -> ([HermitianMatrix; 2], [HermitianMatrix; 2]) {
    (
        [h(0.27, (-0.15, -0.15), 0.18), h(0.31, (0.25, 0.3), 0.54)],
        [h(0.65, (0.35, -0.28), 0.38), h(0.05, (-0.04, 0.05), 0.08)],
    )
}

/// `([A1, A2], [B1, B2])` with `C_inf(a + b) > C_inf(a) + C_inf(b)`.
pub fn superadditive_pair() -> ([HermitianMatrix; 2], [HermitianMatrix; 2]) {
    (
        [h(0.17, (0.07, -0.11), 0.12), h(0.32, (-0.09, -0.35), 0.61)],
        [h(0.13, (-0.19, 0.04), 0.4), h(0.18, (0.01, 0.13), 0.23)],
    )
}

/// Factors projected onto `FACTOR_FLOOR <= A <= Id`.
pub fn clamped(factors: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
    factors.iter().map(|f| clamp_spectrum(f, FACTOR_FLOOR, 1.0)).collect()
}

/// Bump profile with period map `factors[0] factors[1] ...`.
pub fn product_profile(factors: &[HermitianMatrix]) -> Result<DampingProfile> {
    DampingProfile::from_period_factors(factors, FACTOR_FLOOR, WIDTH_FRACTION, Mollifier::Exponential)
}

/// Profiles `a` (bumps on the second and fourth quarter arcs) and `b`
/// (first and third), arranged so that the period maps are `A1 A2`,
/// `B1 B2` and, for `a + b`, `A1 B1 A2 B2`.
pub fn interleaved_profiles(a: &[HermitianMatrix; 2], b: &[HermitianMatrix; 2]) -> Result<(DampingProfile, DampingProfile)> {
    let g = |m: &HermitianMatrix| factor_generator(m, FACTOR_FLOOR);
    let pa = DampingProfile::bumps_on_arcs(4, &[(1, g(&a[1])?), (3, g(&a[0])?)], WIDTH_FRACTION, Mollifier::Exponential)?;
    let pb = DampingProfile::bumps_on_arcs(4, &[(0, g(&b[1])?), (2, g(&b[0])?)], WIDTH_FRACTION, Mollifier::Exponential)?;
    Ok((pa, pb))
}
