//! Bath correlation functions on the unfolded contour.
//!
//! The discrete-mode form is the closed-form thermal correlation of a set of
//! harmonic modes; tabulated correlations come from CSV grids with bilinear
//! interpolation; differences support perturbation studies.

use std::path::Path;

use num_complex::Complex64 as C64;

use crate::model::BathSpec;
use crate::quad::{triangle, triangle_with_error, GaussRule};
use crate::Error;

/// Thermal bath correlation of discrete modes on the unfolded contour,
/// `sum_l (c_l^2 / 2 omega_l) [coth(beta omega_l / 2) cos(omega_l theta)
///  - i sin(omega_l theta)]` with `theta = |tau1 - t| - |tau2 - t|`.
pub fn spin_boson_correlation(bath: &BathSpec, t: f64, tau1: f64, tau2: f64) -> C64 {
    let theta = (tau1 - t).abs() - (tau2 - t).abs();
    let mut acc = C64::new(0.0, 0.0);
    for mode in &bath.modes {
        let amp = mode.c * mode.c / (2.0 * mode.omega);
        let coth = 1.0 / (bath.beta * mode.omega / 2.0).tanh();
        let phase = mode.omega * theta;
        acc += C64::new(amp * coth * phase.cos(), -amp * phase.sin());
    }
    acc
}

/// Rectangular tabulated correlation with bilinear interpolation.
#[derive(Debug, Clone)]
pub struct TabulatedCorrelation {
    tau1_axis: Vec<f64>,
    tau2_axis: Vec<f64>,
    /// Row-major over (tau1 index, tau2 index).
    values: Vec<C64>,
}

impl TabulatedCorrelation {
    pub fn new(tau1_axis: Vec<f64>, tau2_axis: Vec<f64>, values: Vec<C64>) -> Result<Self, Error> {
        for axis in [&tau1_axis, &tau2_axis] {
            if axis.len() < 2 {
                return Err(Error::Tabulated(
                    "each axis needs at least two points".into(),
                ));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Tabulated("axes must be strictly increasing".into()));
            }
        }
        if values.len() != tau1_axis.len() * tau2_axis.len() {
            return Err(Error::Tabulated(format!(
                "expected {} values for a {}x{} grid, got {}",
                tau1_axis.len() * tau2_axis.len(),
                tau1_axis.len(),
                tau2_axis.len(),
                values.len()
            )));
        }
        Ok(Self {
            tau1_axis,
            tau2_axis,
            values,
        })
    }

    /// Parse the CSV format `tau1,tau2,re,im` over a full rectangular grid.
    pub fn from_csv(path: &Path) -> Result<Self, Error> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Tabulated(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Tabulated(e.to_string()))?
            .clone();
        let expected = ["tau1", "tau2", "re", "im"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Tabulated(format!(
                "header must be `tau1,tau2,re,im`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: Vec<(f64, f64, C64)> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Tabulated(e.to_string()))?;
            let field = |i: usize| -> Result<f64, Error> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Tabulated(format!("row {}: missing field", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Tabulated(format!("row {}: {e}", line + 2)))
            };
            rows.push((field(0)?, field(1)?, C64::new(field(2)?, field(3)?)));
        }
        let mut tau1_axis: Vec<f64> = rows.iter().map(|r| r.0).collect();
        tau1_axis.sort_by(f64::total_cmp);
        tau1_axis.dedup();
        let mut tau2_axis: Vec<f64> = rows.iter().map(|r| r.1).collect();
        tau2_axis.sort_by(f64::total_cmp);
        tau2_axis.dedup();
        let n1 = tau1_axis.len();
        let n2 = tau2_axis.len();
        if rows.len() != n1 * n2 {
            return Err(Error::Tabulated(format!(
                "grid not rectangular: {} rows but {n1} x {n2} axis points",
                rows.len()
            )));
        }
        let mut values = vec![None; n1 * n2];
        for (t1, t2, v) in rows {
            let i = tau1_axis.partition_point(|&x| x < t1);
            let j = tau2_axis.partition_point(|&x| x < t2);
            if values[i * n2 + j].replace(v).is_some() {
                return Err(Error::Tabulated(format!(
                    "duplicate grid point ({t1}, {t2})"
                )));
            }
        }
        let values = values
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Tabulated("grid has missing points".into()))?;
        Self::new(tau1_axis, tau2_axis, values)
    }

    fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
        if x <= axis[0] {
            return (0, 0.0);
        }
        if x >= axis[axis.len() - 1] {
            return (axis.len() - 2, 1.0);
        }
        let i = axis.partition_point(|&a| a <= x) - 1;
        let i = i.min(axis.len() - 2);
        (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
    }

    pub fn eval(&self, tau1: f64, tau2: f64) -> C64 {
        let (i, u) = Self::bracket(&self.tau1_axis, tau1);
        let (j, v) = Self::bracket(&self.tau2_axis, tau2);
        let n2 = self.tau2_axis.len();
        let g = |a: usize, b: usize| self.values[a * n2 + b];
        g(i, j) * ((1.0 - u) * (1.0 - v))
            + g(i + 1, j) * (u * (1.0 - v))
            + g(i, j + 1) * ((1.0 - u) * v)
            + g(i + 1, j + 1) * (u * v)
    }

    fn sup_on_grid(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// A bounded correlation function evaluable on `[0, 2t]^2`.
#[derive(Debug, Clone)]
pub enum CorrelationFn {
    DiscreteModes { bath: BathSpec, pivot: f64 },
    Tabulated(TabulatedCorrelation),
    Constant(C64),
    Difference(Box<CorrelationFn>, Box<CorrelationFn>),
    Sum(Box<CorrelationFn>, Box<CorrelationFn>),
    Scaled(f64, Box<CorrelationFn>),
}

impl CorrelationFn {
    pub fn discrete(bath: BathSpec, pivot: f64) -> Self {
        Self::DiscreteModes { bath, pivot }
    }

    pub fn eval(&self, tau1: f64, tau2: f64) -> C64 {
        match self {
            Self::DiscreteModes { bath, pivot } => spin_boson_correlation(bath, *pivot, tau1, tau2),
            Self::Tabulated(table) => table.eval(tau1, tau2),
            Self::Constant(c) => *c,
            Self::Difference(a, b) => a.eval(tau1, tau2) - b.eval(tau1, tau2),
            Self::Sum(a, b) => a.eval(tau1, tau2) + b.eval(tau1, tau2),
            Self::Scaled(alpha, inner) => inner.eval(tau1, tau2) * *alpha,
        }
    }

    /// An upper bound on `sup |B|`: term-wise
    /// `sum_l (c_l^2 / 2 omega_l)(coth(beta omega_l / 2) + 1)` for discrete
    /// modes, the grid maximum for tables, the sum of bounds for differences.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::DiscreteModes { bath, .. } => bath
                .modes
                .iter()
                .map(|mode| {
                    let amp = mode.c * mode.c / (2.0 * mode.omega);
                    amp * (1.0 / (bath.beta * mode.omega / 2.0).tanh() + 1.0)
                })
                .sum(),
            Self::Tabulated(table) => table.sup_on_grid(),
            Self::Constant(c) => c.norm(),
            Self::Difference(a, b) => a.sup_bound() + b.sup_bound(),
            Self::Sum(a, b) => a.sup_bound() + b.sup_bound(),
            Self::Scaled(alpha, inner) => alpha.abs() * inner.sup_bound(),
        }
    }
}

/// A pair of correlation functions: reference bath and perturbed bath.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub base: CorrelationFn,
    pub perturbed: CorrelationFn,
}

impl PerturbationSpec {
    pub fn new(base: CorrelationFn, perturbed: CorrelationFn) -> Self {
        Self { base, perturbed }
    }

    pub fn from_baths(base: BathSpec, perturbed: BathSpec, t: f64) -> Self {
        Self {
            base: CorrelationFn::discrete(base, t),
            perturbed: CorrelationFn::discrete(perturbed, t),
        }
    }
}

/// The pointwise difference `Delta B = B_perturbed - B_base`.
pub fn delta_correlation(p: &PerturbationSpec) -> CorrelationFn {
    CorrelationFn::Difference(Box::new(p.perturbed.clone()), Box::new(p.base.clone()))
}

/// `int_0^{2t} int_0^{s2} |Delta B(s1, s2)| ds1 ds2` by nested Gauss-Legendre
/// with panels split at the pivot, plus a doubling error estimate.
pub fn abs_delta_double_integral(
    db: &CorrelationFn,
    t: f64,
    quad_points: usize,
) -> Result<(f64, f64), Error> {
    abs_delta_integral_over(db, 0.0, 2.0 * t, t, quad_points)
}

/// Same integral restricted to `[si, sf]`, used for the forward-branch form.
pub fn abs_delta_integral_over(
    db: &CorrelationFn,
    si: f64,
    sf: f64,
    pivot: f64,
    quad_points: usize,
) -> Result<(f64, f64), Error> {
    if quad_points < 2 {
        return Err(Error::Quadrature("quad_points must be at least 2".into()));
    }
    let (value, err) =
        triangle_with_error(si, sf, pivot, quad_points, |s1, s2| db.eval(s1, s2).norm());
    if !value.is_finite() {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok((value, err))
}

/// Complex triangle integral `int_{sf > s2 > s1 > si} B(s1, s2)`.
pub fn correlation_triangle_integral(
    b: &CorrelationFn,
    si: f64,
    sf: f64,
    pivot: f64,
    quad_points: usize,
) -> C64 {
    let rule = GaussRule::new(quad_points);
    triangle(si, sf, pivot, &rule, |s1, s2| b.eval(s1, s2))
}

/// Sample random contour-time pairs together with their reflections about the
/// pivot and report the largest deviation of `B` between partners that share
/// the same `|tau1 - t| - |tau2 - t|`.
pub fn unfolded_symmetry_check(b: &CorrelationFn, t: f64, samples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let tau1: f64 = rng.gen::<f64>() * 2.0 * t;
        let tau2: f64 = rng.gen::<f64>() * 2.0 * t;
        let reference = b.eval(tau1, tau2);
        // Reflecting both arguments about the pivot preserves
        // |tau1 - t| - |tau2 - t|.
        let reflected = b.eval(2.0 * t - tau1, 2.0 * t - tau2);
        worst = worst.max((reflected - reference).norm());
    }
    worst
}
