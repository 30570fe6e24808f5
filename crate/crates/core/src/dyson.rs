//! Evaluation of `⟨O(t)⟩` by the truncated diagrammatic series with simplex
//! integration, plus the absolute-convergence envelope.
//!
//! Simplex integrals are estimated by sorting i.i.d. uniform tuples with the
//! Jacobian `(2t)^m / m!`. Every sample owns a counter-based random stream
//! keyed by `(seed, order, sample index)`, and block sums are reduced in a
//! fixed order, so results are bit-identical regardless of worker count.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bathcorr::CorrelationFn;
use crate::contour::{dyson_weight, TimeSequence};
use crate::model::{operator_norm, DysonConfig, Integrator, SystemSpec};
use crate::pairings::wick_sum;
use crate::quad::{simplex_gauss, triangle, GaussRule};
use crate::Error;

/// Contribution of one expansion order.
#[derive(Debug, Clone, Copy)]
pub struct OrderContribution {
    pub order: usize,
    pub value: C64,
    /// One-sigma statistical error of the estimator; zero on the
    /// deterministic path.
    pub stat_error: f64,
}

/// Result of a truncated-series evaluation.
#[derive(Debug, Clone)]
pub struct DysonResult {
    pub value: C64,
    pub per_order: Vec<OrderContribution>,
    /// Envelope bound on everything beyond the truncation order.
    pub truncation_tail_bound: f64,
    pub config: DysonConfig,
}

impl DysonResult {
    pub fn total_stat_error(&self) -> f64 {
        self.per_order.iter().map(|c| c.stat_error).sum()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Independent stream for one sample, keyed by seed, order and sample index.
pub fn sample_rng(seed: u64, order: usize, index: u64, salt: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(order as u64 ^ splitmix64(index ^ splitmix64(salt))));
    ChaCha8Rng::seed_from_u64(key)
}

fn draw_sorted_times(rng: &mut ChaCha8Rng, m: usize, upper: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * upper).collect();
    times.sort_by(f64::total_cmp);
    times
}

fn has_tie(times: &[f64]) -> bool {
    times.windows(2).any(|w| w[0] == w[1])
}

const BLOCK: u64 = 4096;

/// Monte Carlo estimate of a simplex integral of order `m` over `[0, 2t]`.
///
/// Returns the estimate and its one-sigma statistical error. The reduction
/// order over samples is fixed by index, independent of scheduling.
pub fn monte_carlo_simplex(
    m: usize,
    t: f64,
    samples: usize,
    seed: u64,
    salt: u64,
    integrand: impl Fn(&[f64]) -> Result<C64, Error> + Sync,
) -> Result<(C64, f64), Error> {
    assert!(m >= 1);
    let upper = 2.0 * t;
    let n = samples as u64;
    let blocks: u64 = n.div_ceil(BLOCK);
    let partials: Vec<Result<(C64, f64), Error>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut sum = C64::new(0.0, 0.0);
            let mut sum_sq = 0.0f64;
            let lo = block * BLOCK;
            let hi = (lo + BLOCK).min(n);
            for index in lo..hi {
                let mut rng = sample_rng(seed, m, index, salt);
                let mut times = draw_sorted_times(&mut rng, m, upper);
                if has_tie(&times) {
                    // Probability zero; one fresh redraw, then give up.
                    let mut retry = sample_rng(seed, m, index, salt ^ 0x7e1d);
                    times = draw_sorted_times(&mut retry, m, upper);
                    if has_tie(&times) {
                        return Err(Error::Quadrature(format!(
                            "tied sample at order {m}, index {index}"
                        )));
                    }
                }
                let value = integrand(&times)?;
                sum += value;
                sum_sq += value.norm_sqr();
            }
            Ok((sum, sum_sq))
        })
        .collect();

    let mut sum = C64::new(0.0, 0.0);
    let mut sum_sq = 0.0f64;
    for partial in partials {
        let (s, s2) = partial?;
        sum += s;
        sum_sq += s2;
    }

    // Jacobian of sorted-uniform sampling on the simplex.
    let mut jacobian = 1.0f64;
    for k in 1..=m {
        jacobian *= upper / k as f64;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let variance = (sum_sq / nf - mean.norm_sqr()).max(0.0);
    let sigma = jacobian * (variance / nf).sqrt();
    Ok((mean * jacobian, sigma))
}

/// Integrand of the order-`m` term: system weight times the Wick sum.
pub fn order_m_integrand(
    s: &TimeSequence,
    sys: &SystemSpec,
    corr: &CorrelationFn,
) -> Result<C64, Error> {
    if !s.len().is_multiple_of(2) {
        return Err(Error::OddOrder(s.len()));
    }
    Ok(dyson_weight(s, sys)? * wick_sum(s, |a, b| corr.eval(a, b)))
}

/// One term of the series: exact for `m = 0`, nested Gauss rules for
/// `m <= 6` under the `gauss` integrator, Monte Carlo otherwise.
pub fn integrate_order(
    m: usize,
    sys: &SystemSpec,
    corr: &CorrelationFn,
    cfg: &DysonConfig,
) -> Result<(C64, f64), Error> {
    if !m.is_multiple_of(2) {
        return Err(Error::OddOrder(m));
    }
    if m > cfg.max_order {
        return Err(Error::InvalidConfig(format!(
            "order {m} exceeds max_order {}",
            cfg.max_order
        )));
    }
    let t = cfg.t;
    if m == 0 {
        let s = TimeSequence::empty(t)?;
        return Ok((dyson_weight(&s, sys)?, 0.0));
    }
    if m == 2 && cfg.integrator == Integrator::Gauss {
        let eval = |s1: f64, s2: f64, rule_err: &mut Option<Error>| -> C64 {
            match TimeSequence::new(vec![s1, s2], t).and_then(|s| order_m_integrand(&s, sys, corr))
            {
                Ok(v) => v,
                Err(e) => {
                    *rule_err = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        };
        let mut failure = None;
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
        // Nested simplex rules cost (2 panels * points)^m evaluations, so the
        // per-level point count shrinks with the order; the higher orders are
        // also the smallest terms, which keeps the accuracy ample.
        let points = if m == 4 {
            cfg.gauss_points.min(8)
        } else {
            cfg.gauss_points.min(5)
        };
        let failure = std::cell::RefCell::new(None);
        let integrand = |times: &[f64]| -> C64 {
            match TimeSequence::new(times.to_vec(), t)
                .and_then(|s| order_m_integrand(&s, sys, corr))
            {
                Ok(v) => v,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        };
        let coarse = simplex_gauss(m, 0.0, 2.0 * t, t, &GaussRule::new(points), &integrand);
        let fine = simplex_gauss(m, 0.0, 2.0 * t, t, &GaussRule::new(points + 2), &integrand);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        return Ok((fine, (fine - coarse).norm()));
    }
    monte_carlo_simplex(m, t, cfg.samples_per_order, cfg.seed, m as u64, |times| {
        let s = TimeSequence::new(times.to_vec(), t)?;
        order_m_integrand(&s, sys, corr)
    })
}

/// Tail of the envelope series beyond order `max_order`:
/// `||O|| sum_{even m > M} ((2t)^m / m!!)(C ||W||^2)^{m/2}`.
pub fn truncation_tail_bound(
    norm_o: f64,
    norm_w: f64,
    sup_b: f64,
    interval: f64,
    max_order: usize,
) -> f64 {
    // Terms are lambda^k / k! with lambda = C ||W||^2 (Sf-Si)^2 / 2, k = m/2.
    let lambda = sup_b * norm_w * norm_w * interval * interval / 2.0;
    let mut term = 1.0f64;
    for k in 1..=(max_order / 2) {
        term *= lambda / k as f64;
    }
    let mut tail = 0.0f64;
    let mut k = max_order / 2;
    loop {
        k += 1;
        term *= lambda / k as f64;
        let before = tail;
        tail += term;
        if tail == before || term < 1e-300 {
            break;
        }
    }
    norm_o * tail
}

/// The absolute-convergence envelope
/// `||O_s|| exp(C ||W_s||^2 (Sf - Si)^2 / 2)`.
pub fn convergence_bound(sys: &SystemSpec, sup_b: f64, interval: f64) -> Result<f64, Error> {
    let norm_o = operator_norm(&sys.o_s)?;
    let norm_w = operator_norm(&sys.w_s)?;
    Ok(norm_o * (sup_b * norm_w * norm_w * interval * interval / 2.0).exp())
}

/// Sum the series over even orders up to `cfg.max_order`.
pub fn observable(
    sys: &SystemSpec,
    corr: &CorrelationFn,
    cfg: &DysonConfig,
) -> Result<DysonResult, Error> {
    cfg.validate()?;
    let sup_b = corr.sup_bound();
    if !sup_b.is_finite() {
        return Err(Error::InvalidConfig(
            "correlation function is unbounded".into(),
        ));
    }
    let mut per_order = Vec::new();
    let mut value = C64::new(0.0, 0.0);
    for m in (0..=cfg.max_order).step_by(2) {
        let (contribution, stat_error) = integrate_order(m, sys, corr, cfg)?;
        value += contribution;
        per_order.push(OrderContribution {
            order: m,
            value: contribution,
            stat_error,
        });
    }
    let tail = truncation_tail_bound(
        operator_norm(&sys.o_s)?,
        operator_norm(&sys.w_s)?,
        sup_b,
        2.0 * cfg.t,
        cfg.max_order,
    );
    Ok(DysonResult {
        value,
        per_order,
        truncation_tail_bound: tail,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bathcorr::PerturbationSpec;
    use crate::model::{spin_boson_system, BathMode, BathSpec, SpinObservable, Tolerances};
    use crate::CMat;
    use approx::assert_abs_diff_eq;

    fn config(t: f64, max_order: usize) -> DysonConfig {
        DysonConfig {
            t,
            max_order,
            integrator: Integrator::Gauss,
            samples_per_order: 20_000,
            gauss_points: 24,
            seed: 42,
            tol: Tolerances::default(),
        }
    }

    fn single_mode_corr(omega: f64, c: f64, beta: f64, t: f64) -> CorrelationFn {
        CorrelationFn::discrete(BathSpec::new(vec![BathMode { omega, c }], beta).unwrap(), t)
    }

    #[test]
    fn zeroth_order_at_t_zero_is_initial_expectation() {
        let sys = spin_boson_system(1.0, 0.4, SpinObservable::SigmaZ);
        // t must stay positive; shrink instead of hitting zero.
        let cfg = config(1e-9, 0);
        let (value, err) =
            integrate_order(0, &sys, &single_mode_corr(1.0, 0.2, 2.0, cfg.t), &cfg).unwrap();
        assert_eq!(err, 0.0);
        let expected = (&sys.rho_s * &sys.o_s).trace();
        assert_abs_diff_eq!(value.re, expected.re, epsilon = 1e-8);
    }

    #[test]
    fn order_two_vanishes_for_zero_correlation() {
        let sys = spin_boson_system(1.0, 0.4, SpinObservable::SigmaZ);
        let cfg = config(1.0, 2);
        let corr = CorrelationFn::Constant(C64::new(0.0, 0.0));
        let (value, _) = integrate_order(2, &sys, &corr, &cfg).unwrap();
        assert_abs_diff_eq!(value.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn odd_order_is_error() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        let cfg = config(1.0, 4);
        assert!(integrate_order(3, &sys, &single_mode_corr(1.0, 0.2, 2.0, 1.0), &cfg).is_err());
    }

    /// Order-2 deterministic value against a brute-force 2-D quadrature with a
    /// trivial system: `H_s = 0`, `W_s = sigma_z`, `O_s = I`, `B = c`.
    ///
    /// The weight is `i^2 (-1)^{#{s<t}} tr(rho W W) = -(+-1)` so the integrand
    /// is `-+ c`, constant per branch pattern.
    #[test]
    fn order_two_constant_correlation_against_quadrature_oracle() {
        let mut sys = spin_boson_system(0.0, 0.0, SpinObservable::Identity);
        sys.h_s = CMat::zeros(2, 2);
        let t = 1.0;
        let c = 0.37;
        let corr = CorrelationFn::Constant(C64::new(c, 0.0));
        let cfg = config(t, 2);
        let (value, err) = integrate_order(2, &sys, &corr, &cfg).unwrap();

        // Brute-force midpoint oracle at 64^2 points on the full square,
        // restricted to the ordered triangle.
        let n = 64;
        let h = 2.0 * t / n as f64;
        let mut oracle = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let s1 = (i as f64 + 0.5) * h;
                let s2 = (j as f64 + 0.5) * h;
                if s1 >= s2 {
                    continue;
                }
                let s = TimeSequence::new(vec![s1, s2], t).unwrap();
                oracle += order_m_integrand(&s, &sys, &corr).unwrap() * h * h;
            }
        }
        // Midpoint on a sign-discontinuous integrand is only O(h) accurate.
        assert!((value - oracle).norm() < 5e-2 + err);

        // Closed form: sign is -1 for both-forward and both-backward
        // (i^2 * (+1)), +1 for the split branch, times c and the region area.
        // Areas: forward triangle t^2/2, backward t^2/2, cross t^2.
        let expected = -c * (t * t / 2.0 + t * t / 2.0) + c * t * t;
        assert_abs_diff_eq!(value.re, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(value.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_matches_gauss_at_order_two() {
        let sys = spin_boson_system(1.0, 0.3, SpinObservable::SigmaZ);
        let t = 1.0;
        let corr = single_mode_corr(1.0, 0.4, 2.0, t);
        let mut cfg = config(t, 2);
        let (gauss, gauss_err) = integrate_order(2, &sys, &corr, &cfg).unwrap();
        let mut agreements = 0;
        for seed in 0..20 {
            cfg.seed = seed;
            cfg.integrator = Integrator::MonteCarlo;
            let (mc, sigma) = integrate_order(2, &sys, &corr, &cfg).unwrap();
            if (mc - gauss).norm() <= 3.0 * (sigma + gauss_err) {
                agreements += 1;
            }
        }
        assert!(
            agreements >= 19,
            "only {agreements}/20 seeds within 3 sigma"
        );
    }

    #[test]
    fn zero_coupling_gives_exact_free_evolution() {
        let mut sys = spin_boson_system(0.8, 0.5, SpinObservable::SigmaZ);
        sys.w_s = CMat::zeros(2, 2);
        let t = 1.0;
        let corr = single_mode_corr(1.0, 0.4, 2.0, t);
        let result = observable(&sys, &corr, &config(t, 4)).unwrap();
        assert_eq!(result.truncation_tail_bound, 0.0);
        let eig = sys.h_eig();
        let expected = (&sys.rho_s * (eig.propagator(-t) * &sys.o_s * eig.propagator(t))).trace();
        assert_abs_diff_eq!(result.value.re, expected.re, epsilon = 1e-10);
        assert_abs_diff_eq!(result.value.im, expected.im, epsilon = 1e-10);
    }

    #[test]
    fn result_is_sum_of_orders_and_nearly_real() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        let t = 1.0;
        let corr = single_mode_corr(1.0, 0.2, 2.0, t);
        let cfg = config(t, 4);
        let result = observable(&sys, &corr, &cfg).unwrap();
        let sum: C64 = result.per_order.iter().map(|c| c.value).sum();
        assert_abs_diff_eq!(result.value.re, sum.re, epsilon = 1e-14);
        assert!(result.value.im.abs() <= cfg.tol.imag + 3.0 * result.total_stat_error());
    }

    #[test]
    fn partial_sums_dominated_by_envelope() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        let t = 1.0;
        let corr = single_mode_corr(1.0, 0.2, 2.0, t);
        let result = observable(&sys, &corr, &config(t, 6)).unwrap();
        let absolute_sum: f64 = result.per_order.iter().map(|c| c.value.norm()).sum();
        let envelope = convergence_bound(&sys, corr.sup_bound(), 2.0 * t).unwrap();
        assert!(absolute_sum <= envelope + 3.0 * result.total_stat_error());
    }

    #[test]
    fn convergence_bound_values() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        assert_abs_diff_eq!(convergence_bound(&sys, 0.0, 2.0).unwrap(), 1.0);
        // ||O|| = ||W|| = 1, C = 1, interval 2 -> e^2.
        assert_abs_diff_eq!(
            convergence_bound(&sys, 1.0, 2.0).unwrap(),
            std::f64::consts::E.powi(2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn tail_bound_is_series_remainder() {
        let (norm_o, norm_w, sup_b, interval) = (1.0, 1.0, 0.3, 2.0);
        let lambda: f64 = sup_b * interval * interval / 2.0;
        let full: f64 = lambda.exp();
        let head: f64 = (0..=2)
            .map(|k| lambda.powi(k) / (1..=k).product::<i32>() as f64)
            .sum();
        let tail = truncation_tail_bound(norm_o, norm_w, sup_b, interval, 4);
        assert_abs_diff_eq!(tail, full - head, epsilon = 1e-12);
    }

    #[test]
    fn fixed_seed_reproducible_across_thread_counts() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        let t = 1.0;
        let corr = single_mode_corr(1.0, 0.2, 2.0, t);
        let mut cfg = config(t, 4);
        cfg.integrator = Integrator::MonteCarlo;
        cfg.samples_per_order = 30_000;

        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| observable(&sys, &corr, &cfg).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        for (a, b) in single.per_order.iter().zip(&multi.per_order) {
            assert_eq!(
                a.value, b.value,
                "order {} differs across thread counts",
                a.order
            );
            assert_eq!(a.stat_error, b.stat_error);
        }
    }

    /// Cross-check the perturbation plumbing: the difference of observables
    /// under two baths has the same value as a single pass with shared
    /// samples, which the identity checker relies on.
    #[test]
    fn difference_with_common_random_numbers() {
        let sys = spin_boson_system(1.0, 0.0, SpinObservable::SigmaZ);
        let t = 1.0;
        let base = single_mode_corr(1.0, 0.2, 2.0, t);
        let pert = single_mode_corr(1.0, 0.21, 2.0, t);
        let p = PerturbationSpec::new(base.clone(), pert.clone());
        let mut cfg = config(t, 2);
        cfg.integrator = Integrator::MonteCarlo;
        cfg.samples_per_order = 5_000;

        let (a, _) = integrate_order(2, &sys, &p.perturbed, &cfg).unwrap();
        let (b, _) = integrate_order(2, &sys, &p.base, &cfg).unwrap();
        let (diff, _) = monte_carlo_simplex(2, t, cfg.samples_per_order, cfg.seed, 2, |times| {
            let s = TimeSequence::new(times.to_vec(), t)?;
            let w = dyson_weight(&s, &sys)?;
            Ok(w * (wick_sum(&s, |x, y| pert.eval(x, y)) - wick_sum(&s, |x, y| base.eval(x, y))))
        })
        .unwrap();
        assert!((diff - (a - b)).norm() < 1e-12 * a.norm().max(1.0));
    }
}
