//! Matrix-valued damping profiles `a: S^1 -> H_n^+`.
//!
//! Four parametric families are supported plus a generic sum used when two
//! profiles cannot be merged into one family (e.g. overlapping bumps).

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{clamp_spectrum, principal_log_hpd, ComplexMatrix, HermitianMatrix, C64};
use crate::quadrature::GaussLegendre;

pub const TWO_PI: f64 = 2.0 * PI;

/// Quadrature points used for averages of profiles without a closed form.
const AVERAGE_QUADRATURE_POINTS: usize = 1024;

pub const HERMITIAN_DEFECT_LIMIT: f64 = 1e-10;
pub const PSD_LIMIT: f64 = -1e-8;

/// Reduces an angle to `[0, 2 pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Shape of a single bump: a probability density on `[0, 1]` that is
/// rescaled to the bump width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// `c exp(-1 / (s (1 - s)))`, smooth with all derivatives vanishing at the ends.
    #[default]
    Exponential,
    /// `1 - cos(2 pi s)`.
    RaisedCosine,
}

fn exponential_bump_raw(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn exponential_bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| GaussLegendre::standard().integrate(0.0, 1.0, 64, exponential_bump_raw))
}

impl Mollifier {
    /// Density on `[0, 1]`, zero outside, integrating to one.
    pub fn density(self, s: f64) -> f64 {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        match self {
            Mollifier::Exponential => exponential_bump_raw(s) / exponential_bump_mass(),
            Mollifier::RaisedCosine => 1.0 - (TWO_PI * s).cos(),
        }
    }

    /// `int_0^s density`.
    pub fn cumulative(self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        match self {
            Mollifier::Exponential => {
                let rule = GaussLegendre::standard();
                if s <= 0.5 {
                    rule.integrate(0.0, s, 8, exponential_bump_raw) / exponential_bump_mass()
                } else {
                    1.0 - rule.integrate(s, 1.0, 8, exponential_bump_raw) / exponential_bump_mass()
                }
            }
            Mollifier::RaisedCosine => s - (TWO_PI * s).sin() / TWO_PI,
        }
    }

    /// `max density`.
    pub fn peak(self) -> f64 {
        self.density(0.5)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub matrix: HermitianMatrix,
}

#[derive(Clone, Debug)]
pub enum ProfileKind {
    Constant {
        value: HermitianMatrix,
    },
    /// `values[i]` on `[breakpoints[i], breakpoints[i + 1])`; the last arc wraps around.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<HermitianMatrix>,
    },
    /// `sum_j a_j psi(x - c_j + w / 2)` with `psi` supported in `(0, w)` and of unit mass.
    Bumps {
        bumps: Vec<Bump>,
        width: f64,
        mollifier: Mollifier,
    },
    /// `amplitude (Id - v v* / |v|^2)` with `v(x) = (sin kx, sin(kx + phase))`.
    Projector { k: u32, phase: f64, amplitude: f64 },
    Sum(Vec<DampingProfile>),
}

#[derive(Clone, Debug)]
pub struct DampingProfile {
    n: usize,
    kind: ProfileKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub hermitian_defect: f64,
    pub min_eigenvalue_over_grid: f64,
    pub grid_size: usize,
    pub ok: bool,
    /// Set when the profile could not be evaluated somewhere on the grid.
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GccVerdict {
    pub holds: bool,
    /// Smallest eigenvalue of the average of `a` over the circle.
    pub lambda_min: f64,
}

impl DampingProfile {
    pub fn constant(value: HermitianMatrix) -> Self {
        Self {
            n: value.dim(),
            kind: ProfileKind::Constant { value },
        }
    }

    /// `a(x) = a0 Id_n`.
    pub fn scalar_constant(n: usize, a0: f64) -> Self {
        Self::constant(HermitianMatrix::identity(n).scale(a0))
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(HermitianMatrix::zeros(n))
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<HermitianMatrix>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::invalid(
                "piecewise profile needs one value per breakpoint and at least one arc",
            ));
        }
        if breakpoints.iter().any(|&b| !(0.0..TWO_PI).contains(&b)) {
            return Err(Error::invalid("breakpoints must lie in [0, 2 pi)"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        let n = values[0].dim();
        if values.iter().any(|v| v.dim() != n) {
            return Err(Error::invalid("all arc values must have the same dimension"));
        }
        Ok(Self {
            n,
            kind: ProfileKind::PiecewiseConstant { breakpoints, values },
        })
    }

    pub fn bumps(bumps: Vec<Bump>, width: f64, mollifier: Mollifier) -> Result<Self> {
        if bumps.is_empty() {
            return Err(Error::invalid("bump profile needs at least one bump"));
        }
        let count = bumps.len() as f64;
        if !(width > 0.0 && width < TWO_PI / count + 1e-12) {
            return Err(Error::invalid(format!(
                "bump width {width} must lie in (0, 2 pi / {count})"
            )));
        }
        let n = bumps[0].matrix.dim();
        if bumps.iter().any(|b| b.matrix.dim() != n) {
            return Err(Error::invalid("all bump matrices must have the same dimension"));
        }
        let bumps: Vec<Bump> = bumps
            .into_iter()
            .map(|b| Bump {
                center: wrap_angle(b.center),
                matrix: b.matrix,
            })
            .collect();
        if !supports_disjoint(&bumps.iter().map(|b| b.center).collect::<Vec<_>>(), width) {
            return Err(Error::invalid("bump supports overlap"));
        }
        Ok(Self {
            n,
            kind: ProfileKind::Bumps {
                bumps,
                width,
                mollifier,
            },
        })
    }

    pub fn projector(k: u32, phase: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("projector frequency must be positive"));
        }
        if phase.sin().abs() < 1e-12 {
            return Err(Error::DegenerateProfile {
                x: 0.0,
                reason: "phase in pi Z makes v(x) vanish".into(),
            });
        }
        Ok(Self {
            n: 2,
            kind: ProfileKind::Projector {
                k,
                phase,
                amplitude: 1.0,
            },
        })
    }

    /// Bumps placed on `arcs` equal arcs of the circle; arc `i` is
    /// `[2 pi i / arcs, 2 pi (i + 1) / arcs)` and carries the bump centred in it.
    pub fn bumps_on_arcs(
        arcs: usize,
        entries: &[(usize, HermitianMatrix)],
        width_fraction: f64,
        mollifier: Mollifier,
    ) -> Result<Self> {
        if arcs == 0 || entries.iter().any(|(i, _)| *i >= arcs) {
            return Err(Error::invalid("arc index out of range"));
        }
        if !(width_fraction > 0.0 && width_fraction < 1.0) {
            return Err(Error::invalid("width fraction must lie in (0, 1)"));
        }
        let arc = TWO_PI / arcs as f64;
        let bumps = entries
            .iter()
            .map(|(i, m)| Bump {
                center: (*i as f64 + 0.5) * arc,
                matrix: m.clone(),
            })
            .collect();
        Self::bumps(bumps, width_fraction * arc, mollifier)
    }

    /// Bump profile whose forward period map `G(2 pi; 0, +1)` is the ordered
    /// product `factors[0] factors[1] ... factors[m-1]`.
    ///
    /// Each factor is first projected onto `floor <= A <= Id` (rounded input
    /// data is not always positive definite), then `a_j = -log A_j`.
    pub fn from_period_factors(
        factors: &[HermitianMatrix],
        floor: f64,
        width_fraction: f64,
        mollifier: Mollifier,
    ) -> Result<Self> {
        let m = factors.len();
        // traversal from x = 0 meets the last factor first
        let entries = factors
            .iter()
            .enumerate()
            .map(|(j, f)| Ok((m - 1 - j, factor_generator(f, floor)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::bumps_on_arcs(m, &entries, width_fraction, mollifier)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn evaluate(&self, x: f64) -> Result<HermitianMatrix> {
        match &self.kind {
            ProfileKind::Constant { value } => Ok(value.clone()),
            ProfileKind::PiecewiseConstant { breakpoints, values } => {
                Ok(values[arc_index(breakpoints, wrap_angle(x))].clone())
            }
            ProfileKind::Bumps {
                bumps,
                width,
                mollifier,
            } => {
                let x = wrap_angle(x);
                let mut acc = ComplexMatrix::zeros(self.n);
                for b in bumps {
                    let s = wrap_angle(x - b.center + 0.5 * width) / width;
                    let d = mollifier.density(s);
                    if d != 0.0 {
                        acc += &b.matrix.as_matrix().scale_real(d / width);
                    }
                }
                Ok(HermitianMatrix::symmetrized(&acc))
            }
            ProfileKind::Projector { k, phase, amplitude } => {
                let kx = *k as f64 * x;
                let v = [kx.sin(), (kx + phase).sin()];
                let norm2 = v[0] * v[0] + v[1] * v[1];
                if norm2.sqrt() < 1e-12 {
                    return Err(Error::DegenerateProfile {
                        x,
                        reason: "v(x) vanishes".into(),
                    });
                }
                let m = ComplexMatrix::from_fn(2, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    C64::new(amplitude * (id - v[i] * v[j] / norm2), 0.0)
                });
                Ok(HermitianMatrix::symmetrized(&m))
            }
            ProfileKind::Sum(parts) => {
                let mut acc = ComplexMatrix::zeros(self.n);
                for p in parts {
                    acc += p.evaluate(x)?.as_matrix();
                }
                Ok(HermitianMatrix::symmetrized(&acc))
            }
        }
    }

    /// Samples the profile on a uniform grid and reports the worst Hermitian
    /// defect and smallest eigenvalue. Stored matrices are checked too, so
    /// bumps narrower than the grid spacing are not missed.
    pub fn validate(&self, grid: usize) -> ValidationReport {
        let grid = grid.max(16);
        let mut defect = 0.0f64;
        let mut min_eig = f64::INFINITY;
        let mut error = None;
        let mut visit = |m: &ComplexMatrix| {
            defect = defect.max(m.hermitian_defect());
            min_eig = min_eig.min(
                HermitianMatrix::symmetrized(m)
                    .min_eigenvalue()
                    .unwrap_or(f64::NEG_INFINITY),
            );
        };
        for stored in self.stored_matrices() {
            visit(stored.as_matrix());
        }
        for i in 0..grid {
            let x = TWO_PI * i as f64 / grid as f64;
            match self.evaluate(x) {
                Ok(h) => visit(h.as_matrix()),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let ok = error.is_none() && defect <= HERMITIAN_DEFECT_LIMIT && min_eig >= PSD_LIMIT;
        ValidationReport {
            hermitian_defect: defect,
            min_eigenvalue_over_grid: min_eig,
            grid_size: grid,
            ok,
            error,
        }
    }

    fn stored_matrices(&self) -> Vec<&HermitianMatrix> {
        match &self.kind {
            ProfileKind::Constant { value } => vec![value],
            ProfileKind::PiecewiseConstant { values, .. } => values.iter().collect(),
            ProfileKind::Bumps { bumps, .. } => bumps.iter().map(|b| &b.matrix).collect(),
            ProfileKind::Projector { .. } => vec![],
            ProfileKind::Sum(parts) => parts.iter().flat_map(|p| p.stored_matrices()).collect(),
        }
    }

    /// `(1 / 2 pi) int_0^{2 pi} a(x) dx`.
    pub fn average_matrix(&self) -> Result<HermitianMatrix> {
        match &self.kind {
            ProfileKind::Constant { value } => Ok(value.clone()),
            ProfileKind::PiecewiseConstant { breakpoints, values } => {
                let mut acc = ComplexMatrix::zeros(self.n);
                for (i, v) in values.iter().enumerate() {
                    acc += &v.as_matrix().scale_real(arc_length(breakpoints, i) / TWO_PI);
                }
                Ok(HermitianMatrix::symmetrized(&acc))
            }
            ProfileKind::Bumps { bumps, .. } => {
                let mut acc = ComplexMatrix::zeros(self.n);
                for b in bumps {
                    acc += b.matrix.as_matrix();
                }
                Ok(HermitianMatrix::symmetrized(&acc.scale_real(1.0 / TWO_PI)))
            }
            ProfileKind::Projector { .. } => self.average_by_quadrature(AVERAGE_QUADRATURE_POINTS),
            ProfileKind::Sum(parts) => {
                let mut acc = ComplexMatrix::zeros(self.n);
                for p in parts {
                    acc += p.average_matrix()?.as_matrix();
                }
                Ok(HermitianMatrix::symmetrized(&acc))
            }
        }
    }

    /// Trapezoidal average on `points` uniform nodes (spectrally accurate for
    /// smooth periodic profiles).
    pub fn average_by_quadrature(&self, points: usize) -> Result<HermitianMatrix> {
        let mut acc = ComplexMatrix::zeros(self.n);
        for i in 0..points {
            acc += self.evaluate(TWO_PI * i as f64 / points as f64)?.as_matrix();
        }
        Ok(HermitianMatrix::symmetrized(&acc.scale_real(1.0 / points as f64)))
    }

    /// On the circle every maximal geodesic sweeps the whole circle, so the
    /// kernels of `a(x)` intersect trivially iff `int a` is positive definite.
    pub fn gcc_check(&self, tol: f64) -> Result<GccVerdict> {
        let lambda_min = self.average_matrix()?.min_eigenvalue()?;
        Ok(GccVerdict {
            holds: lambda_min > tol,
            lambda_min,
        })
    }

    /// Upper bound for `sup_x ||a(x)||_2`.
    pub fn sup_norm_bound(&self) -> Result<f64> {
        let norm = |h: &HermitianMatrix| -> Result<f64> {
            let e = h.eigenvalues()?;
            Ok(e[0].abs().max(e[e.len() - 1].abs()))
        };
        Ok(match &self.kind {
            ProfileKind::Constant { value } => norm(value)?,
            ProfileKind::PiecewiseConstant { values, .. } => {
                values.iter().map(norm).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max)
            }
            ProfileKind::Bumps {
                bumps,
                width,
                mollifier,
            } => {
                let peak = mollifier.peak() / width;
                bumps
                    .iter()
                    .map(|b| norm(&b.matrix))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max)
                    * peak
            }
            ProfileKind::Projector { amplitude, .. } => amplitude.abs(),
            ProfileKind::Sum(parts) => parts
                .iter()
                .map(|p| p.sup_norm_bound())
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum(),
        })
    }

    /// Angles in `[0, 2 pi)` where the profile is not smooth or changes regime.
    pub fn kinks(&self) -> Vec<f64> {
        let mut out = match &self.kind {
            ProfileKind::Constant { .. } | ProfileKind::Projector { .. } => vec![],
            ProfileKind::PiecewiseConstant { breakpoints, .. } => breakpoints.clone(),
            ProfileKind::Bumps { bumps, width, .. } => bumps
                .iter()
                .flat_map(|b| [wrap_angle(b.center - 0.5 * width), wrap_angle(b.center + 0.5 * width)])
                .collect(),
            ProfileKind::Sum(parts) => parts.iter().flat_map(|p| p.kinks()).collect(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("scale factor {lambda} must be finite and >= 0")));
        }
        let kind = match &self.kind {
            ProfileKind::Constant { value } => ProfileKind::Constant {
                value: value.scale(lambda),
            },
            ProfileKind::PiecewiseConstant { breakpoints, values } => ProfileKind::PiecewiseConstant {
                breakpoints: breakpoints.clone(),
                values: values.iter().map(|v| v.scale(lambda)).collect(),
            },
            ProfileKind::Bumps {
                bumps,
                width,
                mollifier,
            } => ProfileKind::Bumps {
                bumps: bumps
                    .iter()
                    .map(|b| Bump {
                        center: b.center,
                        matrix: b.matrix.scale(lambda),
                    })
                    .collect(),
                width: *width,
                mollifier: *mollifier,
            },
            ProfileKind::Projector { k, phase, amplitude } => ProfileKind::Projector {
                k: *k,
                phase: *phase,
                amplitude: amplitude * lambda,
            },
            ProfileKind::Sum(parts) => {
                ProfileKind::Sum(parts.iter().map(|p| p.scale(lambda)).collect::<Result<_>>()?)
            }
        };
        Ok(Self { n: self.n, kind })
    }

    /// Pointwise sum. Stays inside a parametric family when possible and falls
    /// back to a generic sum otherwise.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::invalid(format!(
                "cannot add profiles of dimensions {} and {}",
                self.n, other.n
            )));
        }
        use ProfileKind::*;
        match (&self.kind, &other.kind) {
            (Constant { value: a }, Constant { value: b }) => Ok(Self::constant(a.add(b))),
            (Constant { .. } | PiecewiseConstant { .. }, Constant { .. } | PiecewiseConstant { .. }) => {
                let (ba, va) = self.as_piecewise();
                let (bb, vb) = other.as_piecewise();
                let mut cuts: Vec<f64> = ba.iter().chain(&bb).copied().collect();
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let values = cuts
                    .iter()
                    .map(|&c| va[arc_index(&ba, c)].add(&vb[arc_index(&bb, c)]))
                    .collect();
                Self::piecewise_constant(cuts, values)
            }
            (
                Bumps {
                    bumps: ba,
                    width: wa,
                    mollifier: ma,
                },
                Bumps {
                    bumps: bb,
                    width: wb,
                    mollifier: mb,
                },
            ) if wa == wb && ma == mb => {
                let all: Vec<Bump> = ba.iter().chain(bb).cloned().collect();
                let centers: Vec<f64> = all.iter().map(|b| b.center).collect();
                if supports_disjoint(&centers, *wa) && *wa < TWO_PI / all.len() as f64 + 1e-12 {
                    Self::bumps(all, *wa, *ma)
                } else {
                    Ok(self.generic_sum(other))
                }
            }
            _ => Ok(self.generic_sum(other)),
        }
    }

    fn generic_sum(&self, other: &Self) -> Self {
        let mut parts = Vec::new();
        for p in [self, other] {
            match &p.kind {
                ProfileKind::Sum(inner) => parts.extend(inner.iter().cloned()),
                _ => parts.push(p.clone()),
            }
        }
        Self {
            n: self.n,
            kind: ProfileKind::Sum(parts),
        }
    }

    fn as_piecewise(&self) -> (Vec<f64>, Vec<HermitianMatrix>) {
        match &self.kind {
            ProfileKind::Constant { value } => (vec![0.0], vec![value.clone()]),
            ProfileKind::PiecewiseConstant { breakpoints, values } => (breakpoints.clone(), values.clone()),
            _ => unreachable!("not a piecewise-constant profile"),
        }
    }

    /// True when `a(x)` commutes with `a(y)` along every stretch the cocycle
    /// code integrates in one piece (constant arcs, single bumps).
    pub fn has_exact_factors(&self) -> bool {
        matches!(
            self.kind,
            ProfileKind::Constant { .. } | ProfileKind::PiecewiseConstant { .. } | ProfileKind::Bumps { .. }
        )
    }

    /// Generators `g_i` such that the forward period map from `x = 0` is
    /// `exp(-g_1) exp(-g_2) ... exp(-g_m)` and the one of `lambda a` is
    /// `exp(-lambda g_1) ... exp(-lambda g_m)`. `None` for profiles whose
    /// propagation requires integrating a non-commuting ODE.
    pub fn period_generators(&self) -> Option<Vec<HermitianMatrix>> {
        let mut traversal: Vec<HermitianMatrix> = match &self.kind {
            ProfileKind::Constant { value } => vec![value.scale(TWO_PI)],
            ProfileKind::PiecewiseConstant { breakpoints, values } => {
                // arcs in traversal order starting from the one containing 0
                let start = arc_index(breakpoints, 0.0);
                let m = values.len();
                let mut out = Vec::with_capacity(m + 1);
                let first = breakpoints[0];
                if start == m - 1 && first > 0.0 {
                    // [0, b_0) is the tail of the wrapping arc; the rest of it is met last.
                    out.push(values[m - 1].scale(first));
                    for i in 0..m - 1 {
                        out.push(values[i].scale(arc_length(breakpoints, i)));
                    }
                    out.push(values[m - 1].scale(arc_length(breakpoints, m - 1) - first));
                } else {
                    for i in 0..m {
                        out.push(values[i].scale(arc_length(breakpoints, i)));
                    }
                }
                out
            }
            ProfileKind::Bumps {
                bumps,
                width,
                mollifier,
            } => {
                let start = |b: &Bump| wrap_angle(b.center - 0.5 * width);
                let mut order: Vec<&Bump> = bumps.iter().collect();
                order.sort_by(|a, b| start(a).total_cmp(&start(b)));
                let mut out = Vec::with_capacity(order.len() + 1);
                // a bump straddling 0 contributes its tail first and its head last;
                // both pieces are multiples of the same matrix, hence commute
                let mut head = None;
                for b in order {
                    let s = start(b);
                    if s + width > TWO_PI {
                        let before_zero = mollifier.cumulative((TWO_PI - s) / width);
                        out.insert(0, b.matrix.scale(1.0 - before_zero));
                        head = Some(b.matrix.scale(before_zero));
                    } else {
                        out.push(b.matrix.clone());
                    }
                }
                out.extend(head);
                out
            }
            _ => return None,
        };
        // product order is reverse traversal order
        traversal.reverse();
        Some(traversal)
    }

    pub fn to_config(&self) -> Option<ProfileConfig> {
        let mats = |ms: &[&HermitianMatrix]| -> Vec<Vec<Vec<[f64; 2]>>> {
            ms.iter()
                .map(|m| {
                    m.as_matrix()
                        .rows()
                        .into_iter()
                        .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                })
                .collect()
        };
        let mut cfg = ProfileConfig {
            n: self.n,
            kind: ConfigKind::Constant,
            matrices: vec![],
            breakpoints: None,
            centers: None,
            width: None,
            k: None,
            phase: None,
        };
        match &self.kind {
            ProfileKind::Constant { value } => cfg.matrices = mats(&[value]),
            ProfileKind::PiecewiseConstant { breakpoints, values } => {
                cfg.kind = ConfigKind::Piecewise;
                cfg.matrices = mats(&values.iter().collect::<Vec<_>>());
                cfg.breakpoints = Some(breakpoints.clone());
            }
            ProfileKind::Bumps {
                bumps,
                width,
                mollifier: Mollifier::Exponential,
            } => {
                cfg.kind = ConfigKind::Bumps;
                cfg.matrices = mats(&bumps.iter().map(|b| &b.matrix).collect::<Vec<_>>());
                cfg.centers = Some(bumps.iter().map(|b| b.center).collect());
                cfg.width = Some(*width);
            }
            ProfileKind::Projector { k, phase, amplitude } if *amplitude == 1.0 => {
                cfg.kind = ConfigKind::Projector;
                cfg.k = Some(*k);
                cfg.phase = Some(*phase);
            }
            _ => return None,
        }
        Some(cfg)
    }
}

/// `-log A` for a factor projected onto `floor <= A <= Id`.
pub fn factor_generator(factor: &HermitianMatrix, floor: f64) -> Result<HermitianMatrix> {
    let clamped = clamp_spectrum(factor, floor, 1.0)?;
    Ok(principal_log_hpd(&clamped)?.scale(-1.0))
}

fn arc_index(breakpoints: &[f64], x: f64) -> usize {
    // number of breakpoints <= x, minus one, wrapping to the last arc
    let count = breakpoints.partition_point(|&b| b <= x);
    if count == 0 {
        breakpoints.len() - 1
    } else {
        count - 1
    }
}

fn arc_length(breakpoints: &[f64], i: usize) -> f64 {
    let m = breakpoints.len();
    if i + 1 < m {
        breakpoints[i + 1] - breakpoints[i]
    } else {
        breakpoints[0] + TWO_PI - breakpoints[m - 1]
    }
}

fn supports_disjoint(centers: &[f64], width: f64) -> bool {
    if centers.len() < 2 {
        return true;
    }
    let mut c: Vec<f64> = centers.iter().map(|&x| wrap_angle(x)).collect();
    c.sort_by(f64::total_cmp);
    let tol = 1e-12;
    let gaps_ok = c.windows(2).all(|w| w[1] - w[0] >= width - tol);
    gaps_ok && c[0] + TWO_PI - c[c.len() - 1] >= width - tol
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigKind {
    Constant,
    Piecewise,
    Bumps,
    Projector,
}

/// On-disk JSON form of a profile. Matrices are Hermitian, row-major, with
/// entries written as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub n: usize,
    pub kind: ConfigKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

impl ProfileConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    fn hermitian_matrices(&self) -> Result<Vec<HermitianMatrix>> {
        self.matrices
            .iter()
            .enumerate()
            .map(|(idx, rows)| {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(Error::Config(format!("matrix {idx} is not {0}x{0}", self.n)));
                }
                let m = ComplexMatrix::from_rows(
                    rows.iter()
                        .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
                        .collect(),
                )
                .map_err(|e| Error::Config(format!("matrix {idx}: {e}")))?;
                HermitianMatrix::new(m).map_err(|e| Error::Config(format!("matrix {idx}: {e}")))
            })
            .collect()
    }

    pub fn to_profile(&self) -> Result<DampingProfile> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        let forbid = |present: bool, field: &str| {
            if present {
                Err(Error::Config(format!("field `{field}` not allowed for kind {:?}", self.kind)))
            } else {
                Ok(())
            }
        };
        let matrices = self.hermitian_matrices()?;
        match self.kind {
            ConfigKind::Constant => {
                forbid(self.breakpoints.is_some(), "breakpoints")?;
                forbid(self.centers.is_some() || self.width.is_some(), "centers/width")?;
                forbid(self.k.is_some() || self.phase.is_some(), "k/phase")?;
                if matrices.len() != 1 {
                    return Err(Error::Config("constant profile needs exactly one matrix".into()));
                }
                Ok(DampingProfile::constant(matrices.into_iter().next().unwrap()))
            }
            ConfigKind::Piecewise => {
                forbid(self.centers.is_some() || self.width.is_some(), "centers/width")?;
                forbid(self.k.is_some() || self.phase.is_some(), "k/phase")?;
                let bp = self
                    .breakpoints
                    .clone()
                    .ok_or_else(|| Error::Config("piecewise profile needs `breakpoints`".into()))?;
                DampingProfile::piecewise_constant(bp, matrices).map_err(cfg_err)
            }
            ConfigKind::Bumps => {
                forbid(self.breakpoints.is_some(), "breakpoints")?;
                forbid(self.k.is_some() || self.phase.is_some(), "k/phase")?;
                let centers = self
                    .centers
                    .clone()
                    .ok_or_else(|| Error::Config("bump profile needs `centers`".into()))?;
                let width = self
                    .width
                    .ok_or_else(|| Error::Config("bump profile needs `width`".into()))?;
                if centers.len() != matrices.len() {
                    return Err(Error::Config("one center per bump matrix required".into()));
                }
                let bumps = centers
                    .into_iter()
                    .zip(matrices)
                    .map(|(center, matrix)| Bump { center, matrix })
                    .collect();
                DampingProfile::bumps(bumps, width, Mollifier::Exponential).map_err(cfg_err)
            }
            ConfigKind::Projector => {
                forbid(!self.matrices.is_empty(), "matrices")?;
                forbid(self.breakpoints.is_some(), "breakpoints")?;
                forbid(self.centers.is_some() || self.width.is_some(), "centers/width")?;
                if self.n != 2 {
                    return Err(Error::Config("projector profile requires n = 2".into()));
                }
                let k = self.k.ok_or_else(|| Error::Config("projector needs `k`".into()))?;
                let phase = self.phase.ok_or_else(|| Error::Config("projector needs `phase`".into()))?;
                DampingProfile::projector(k, phase).map_err(cfg_err)
            }
        }
    }
}
