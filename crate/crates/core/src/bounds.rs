//! Bath-perturbation error bound, the combinatorial simplex identity for
//! Wick sums, and the two sides of the diagrammatic perturbation identity.

use num_complex::Complex64 as C64;

use crate::bathcorr::{
    abs_delta_double_integral, abs_delta_integral_over, correlation_triangle_integral,
    delta_correlation, CorrelationFn, PerturbationSpec,
};
use crate::contour::{dyson_weight, TimeSequence};
use crate::dyson::{monte_carlo_simplex, OrderContribution};
use crate::model::{operator_norm, sigma_z, DysonConfig, Integrator, SystemSpec};
use crate::oracle::FullSystem;
use crate::pairings::{wick_sum, wick_sum_times};
use crate::quad::{simplex_gauss, triangle, GaussRule};
use crate::Error;

/// Outcome of a perturbation-bound evaluation.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// `||O_s|| (exp(||W_s||^2 integral_abs_db) - 1)`.
    pub bound_value: f64,
    /// `int_0^{2t} int_0^{s2} |Delta B|` (or its factor-4 forward form).
    pub integral_abs_db: f64,
    /// Doubling estimate of the quadrature error in `integral_abs_db`.
    pub quad_error: f64,
    pub norm_o: f64,
    pub norm_w: f64,
    /// Observed difference of observables, when the caller supplied one.
    pub observed_delta: Option<C64>,
    /// Whether `|observed_delta| <= bound_value + slack`.
    pub satisfied: Option<bool>,
}

impl BoundReport {
    fn from_integral(norm_o: f64, norm_w: f64, integral: f64, quad_error: f64) -> Self {
        Self {
            bound_value: norm_o * ((norm_w * norm_w * integral).exp() - 1.0),
            integral_abs_db: integral,
            quad_error,
            norm_o,
            norm_w,
            observed_delta: None,
            satisfied: None,
        }
    }

    /// Record an observed observable difference and judge it against the
    /// bound with the given numerical slack.
    pub fn with_observed(mut self, delta: C64, slack: f64) -> Self {
        self.satisfied = Some(delta.norm() <= self.bound_value + slack);
        self.observed_delta = Some(delta);
        self
    }
}

/// Upper bound on the observable shift induced by perturbing the bath
/// correlation, `||O_s|| (exp(||W_s||^2 int int |Delta B|) - 1)`.
pub fn observable_error_bound(
    sys: &SystemSpec,
    p: &PerturbationSpec,
    t: f64,
    quad_points: usize,
) -> Result<BoundReport, Error> {
    let db = delta_correlation(p);
    let (integral, quad_error) = abs_delta_double_integral(&db, t, quad_points)?;
    Ok(BoundReport::from_integral(
        operator_norm(&sys.o_s)?,
        operator_norm(&sys.w_s)?,
        integral,
        quad_error,
    ))
}

/// Same bound in the forward-branch form `4 int_0^t int_0^{s2} |Delta B|`,
/// valid when the coupling factor is `sigma_z` so its norm is one and the
/// correlation has the reflection symmetry of the unfolded contour.
pub fn corollary_bound_spin_boson(
    sys: &SystemSpec,
    p: &PerturbationSpec,
    t: f64,
    quad_points: usize,
) -> Result<BoundReport, Error> {
    let defect: f64 = (&sys.w_s - sigma_z())
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    if defect > 1e-12 {
        return Err(Error::InvalidOperator(
            "the forward-branch bound requires the sigma_z coupling factor".into(),
        ));
    }
    let db = delta_correlation(p);
    let (forward, quad_error) = abs_delta_integral_over(&db, 0.0, t, t, quad_points)?;
    Ok(BoundReport::from_integral(
        operator_norm(&sys.o_s)?,
        1.0,
        4.0 * forward,
        4.0 * quad_error,
    ))
}

/// How to evaluate the simplex side of [`comb_identity_check`].
#[derive(Debug, Clone, Copy)]
pub enum CombMethod {
    /// Nested Gauss rules, cost `(2 points)^m`; meant for `m <= 4`.
    Gauss {
        points: usize,
    },
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

/// Both sides of the simplex identity for Wick sums.
#[derive(Debug, Clone, Copy)]
pub struct CombCheck {
    pub m: usize,
    /// `int_simplex sum_q prod_(j,k) B(s_j, s_k)`.
    pub lhs: C64,
    /// One-sigma error of `lhs` (zero on the deterministic path).
    pub lhs_error: f64,
    /// `(1 / (m/2)!) (int int_(triangle) B)^(m/2)`.
    pub rhs: C64,
    pub discrepancy: f64,
}

/// Check `int_simplex sum_q L_B(q) = (1/(m/2)!) (int int B)^(m/2)` on
/// `[si, sf]` with the pivot marking where `B` may lose smoothness.
pub fn comb_identity_check(
    m: usize,
    corr: &CorrelationFn,
    si: f64,
    sf: f64,
    pivot: f64,
    method: CombMethod,
) -> Result<CombCheck, Error> {
    if !m.is_multiple_of(2) || m == 0 {
        return Err(Error::OddOrder(m));
    }
    if si >= sf {
        return Err(Error::ContourOrdering(format!("si = {si} >= sf = {sf}")));
    }
    let rhs_points = match method {
        CombMethod::Gauss { points } => points,
        CombMethod::MonteCarlo { .. } => 32,
    };
    let pair_integral = correlation_triangle_integral(corr, si, sf, pivot, rhs_points);
    let half = m / 2;
    let half_factorial: f64 = (1..=half).map(|k| k as f64).product();
    let rhs = pair_integral.powu(half as u32) / half_factorial;

    let (lhs, lhs_error) = match method {
        CombMethod::Gauss { points } => {
            let rule = GaussRule::new(points);
            let value = simplex_gauss(m, si, sf, pivot, &rule, &|times: &[f64]| {
                wick_sum_times(times, |a, b| corr.eval(a, b))
            });
            (value, 0.0)
        }
        CombMethod::MonteCarlo { samples, seed } => {
            // Shift the unit machinery onto [si, sf].
            let half_width = 0.5 * (sf - si);
            let (value, sigma) =
                monte_carlo_simplex(m, half_width, samples, seed, m as u64, |times| {
                    let shifted: Vec<f64> = times.iter().map(|&x| x + si).collect();
                    Ok(wick_sum_times(&shifted, |a, b| corr.eval(a, b)))
                })?;
            (value, sigma)
        }
    };
    Ok(CombCheck {
        m,
        lhs,
        lhs_error,
        rhs,
        discrepancy: (lhs - rhs).norm(),
    })
}

/// One truncated series side of the perturbation identity.
#[derive(Debug, Clone)]
pub struct IdentitySide {
    pub value: C64,
    pub per_order: Vec<OrderContribution>,
    /// Sum of per-order one-sigma statistical errors.
    pub stat_error: f64,
    /// Envelope bound on the orders beyond the truncation.
    pub tail_bound: f64,
}

/// One even-order simplex integral with the configured integrator: nested
/// Gauss rules up to order six, Monte Carlo otherwise. Mirrors the series
/// evaluator so shared seeds and grids give identical evaluations.
fn integrate_identity_order(
    m: usize,
    cfg: &DysonConfig,
    integrand: impl Fn(&TimeSequence) -> Result<C64, Error> + Sync,
) -> Result<(C64, f64), Error> {
    let t = cfg.t;
    if m == 2 && cfg.integrator == Integrator::Gauss {
        let mut failure = None;
        let eval = |s1: f64, s2: f64, failure: &mut Option<Error>| -> C64 {
            match TimeSequence::new(vec![s1, s2], t).and_then(|s| integrand(&s)) {
                Ok(v) => v,
                Err(e) => {
                    *failure = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        };
        let coarse = triangle(
            0.0,
            2.0 * t,
            t,
            &GaussRule::new(cfg.gauss_points),
            |a, b| eval(a, b, &mut failure),
        );
        let fine = triangle(
            0.0,
            2.0 * t,
            t,
            &GaussRule::new(2 * cfg.gauss_points),
            |a, b| eval(a, b, &mut failure),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        return Ok((fine, (fine - coarse).norm()));
    }
    if (m == 4 || m == 6) && cfg.integrator == Integrator::Gauss {
        // Same point-count policy as the series evaluator, so the two
        // expansions share quadrature grids exactly.
        let points = if m == 4 {
            cfg.gauss_points.min(8)
        } else {
            cfg.gauss_points.min(5)
        };
        let failure = std::cell::RefCell::new(None);
        let eval = |times: &[f64]| -> C64 {
            match TimeSequence::new(times.to_vec(), t).and_then(|s| integrand(&s)) {
                Ok(v) => v,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        };
        let coarse = simplex_gauss(m, 0.0, 2.0 * t, t, &GaussRule::new(points), &eval);
        let fine = simplex_gauss(m, 0.0, 2.0 * t, t, &GaussRule::new(points + 2), &eval);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        return Ok((fine, (fine - coarse).norm()));
    }
    monte_carlo_simplex(m, t, cfg.samples_per_order, cfg.seed, m as u64, |times| {
        integrand(&TimeSequence::new(times.to_vec(), t)?)
    })
}

/// Tail of the left identity series beyond `max_order`: difference of two
/// Wick products of `m/2` factors bounded by `(m/2) c_max^(m/2-1) delta_c`.
pub fn identity_lhs_tail(
    norm_o: f64,
    norm_w: f64,
    interval: f64,
    max_order: usize,
    c_max: f64,
    delta_c: f64,
) -> f64 {
    let lambda = norm_w * norm_w * interval * interval / 2.0;
    let mut tail = 0.0f64;
    let mut lambda_pow_over_fact = 1.0f64;
    for k in 1..=1000usize {
        lambda_pow_over_fact *= lambda / k as f64;
        if k > max_order / 2 {
            let c_pow = if k >= 2 {
                c_max.powi(k as i32 - 1)
            } else {
                1.0
            };
            let term = norm_o * lambda_pow_over_fact * k as f64 * c_pow * delta_c;
            let before = tail;
            tail += term;
            if term < 1e-300 || tail == before {
                break;
            }
        }
    }
    tail
}

/// Tail of the right identity series beyond `max_order`:
/// `||O|| sum_(k > M/2) (||W||^2 I_delta)^k / k!` with
/// `I_delta = int int |Delta B|`.
pub fn identity_rhs_tail(norm_o: f64, norm_w: f64, i_delta: f64, max_order: usize) -> f64 {
    let lambda = norm_w * norm_w * i_delta;
    let mut tail = 0.0f64;
    let mut term = 1.0f64;
    for k in 1..=1000usize {
        term *= lambda / k as f64;
        if k > max_order / 2 {
            let before = tail;
            tail += term;
            if term < 1e-300 || tail == before {
                break;
            }
        }
    }
    norm_o * tail
}

/// Left side of the perturbation identity: the term-by-term difference of
/// the two truncated series, evaluated on shared sample streams so the
/// difference estimator has collapsed variance.
pub fn identity_lhs(
    sys: &SystemSpec,
    p: &PerturbationSpec,
    cfg: &DysonConfig,
) -> Result<IdentitySide, Error> {
    cfg.validate()?;
    let mut per_order = Vec::new();
    let mut value = C64::new(0.0, 0.0);
    for m in (2..=cfg.max_order).step_by(2) {
        let (contribution, stat_error) = integrate_identity_order(m, cfg, |s| {
            let weight = dyson_weight(s, sys)?;
            let pert = wick_sum(s, |a, b| p.perturbed.eval(a, b));
            let base = wick_sum(s, |a, b| p.base.eval(a, b));
            Ok(weight * (pert - base))
        })?;
        value += contribution;
        per_order.push(OrderContribution {
            order: m,
            value: contribution,
            stat_error,
        });
    }
    let norm_o = operator_norm(&sys.o_s)?;
    let norm_w = operator_norm(&sys.w_s)?;
    let c_max = p.base.sup_bound().max(p.perturbed.sup_bound());
    let delta_c = delta_correlation(p).sup_bound();
    let tail_bound = identity_lhs_tail(norm_o, norm_w, 2.0 * cfg.t, cfg.max_order, c_max, delta_c);
    let stat_error = per_order.iter().map(|c| c.stat_error).sum();
    Ok(IdentitySide {
        value,
        per_order,
        stat_error,
        tail_bound,
    })
}

/// One order of the right side: the auxiliary full-propagator trace against
/// the Wick sum of the correlation difference.
pub fn identity_rhs_order(
    full: &FullSystem,
    db: &CorrelationFn,
    m: usize,
    cfg: &DysonConfig,
) -> Result<(C64, f64), Error> {
    if !m.is_multiple_of(2) || m == 0 {
        return Err(Error::OddOrder(m));
    }
    integrate_identity_order(m, cfg, |s| {
        let trace = full.u_ring_trace(s)?;
        let sign = if crate::contour::count_forward(s).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let wick = wick_sum(s, |a, b| db.eval(a, b));
        Ok(C64::i().powu(m as u32) * sign * trace * wick)
    })
}

/// Right side of the perturbation identity: the expansion in the correlation
/// difference around the full interacting propagator of the reference bath.
pub fn identity_rhs(
    sys: &SystemSpec,
    full: &FullSystem,
    p: &PerturbationSpec,
    cfg: &DysonConfig,
) -> Result<IdentitySide, Error> {
    cfg.validate()?;
    let db = delta_correlation(p);
    let mut per_order = Vec::new();
    let mut value = C64::new(0.0, 0.0);
    for m in (2..=cfg.max_order).step_by(2) {
        let (contribution, stat_error) = identity_rhs_order(full, &db, m, cfg)?;
        value += contribution;
        per_order.push(OrderContribution {
            order: m,
            value: contribution,
            stat_error,
        });
    }
    let norm_o = operator_norm(&sys.o_s)?;
    let norm_w = operator_norm(&sys.w_s)?;
    let (i_delta, quad_error) = abs_delta_double_integral(&db, cfg.t, cfg.gauss_points)?;
    let tail_bound = identity_rhs_tail(norm_o, norm_w, i_delta + quad_error, cfg.max_order);
    let stat_error = per_order.iter().map(|c| c.stat_error).sum();
    Ok(IdentitySide {
        value,
        per_order,
        stat_error,
        tail_bound,
    })
}

/// First-order scaling diagnostic: for the family `B + eps dB`, the left
/// side over `eps` tends to the order-two right-side term with `dB` alone.
/// Returns the complex ratio of the two, which should approach one.
pub fn first_order_ratio(
    sys: &SystemSpec,
    full: &FullSystem,
    base: &CorrelationFn,
    direction: &CorrelationFn,
    eps: f64,
    cfg: &DysonConfig,
) -> Result<C64, Error> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let perturbed = CorrelationFn::Sum(
        Box::new(base.clone()),
        Box::new(CorrelationFn::Scaled(eps, Box::new(direction.clone()))),
    );
    let p = PerturbationSpec::new(base.clone(), perturbed);
    let lhs = identity_lhs(sys, &p, cfg)?;
    let (limit, _) = identity_rhs_order(full, direction, 2, cfg)?;
    if limit.norm() < 1e-300 {
        return Err(Error::Quadrature(
            "vanishing first-order reference term".into(),
        ));
    }
    Ok(lhs.value / eps / limit)
}
