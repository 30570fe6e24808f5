//! Unfolded Keldysh contour algebra: branch bookkeeping, the sign factor and
//! the system propagator with the observable inserted at the pivot.
//!
//! The contour runs over `[0, 2t]` with pivot `t`; times below `t` sit on the
//! forward branch, times at or above `t` on the backward branch.

use num_complex::Complex64 as C64;

use crate::model::SystemSpec;
use crate::{CMat, Error};

/// Strictly increasing contour times `s_1 < ... < s_m` inside `(0, 2t)`.
///
/// Ties are rejected: the simplex integrand is only needed on the open
/// simplex, and coincident times have no well-defined pairing semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSequence {
    times: Vec<f64>,
    pivot: f64,
}

impl TimeSequence {
    pub fn new(times: Vec<f64>, pivot: f64) -> Result<Self, Error> {
        if !pivot.is_finite() || pivot <= 0.0 {
            return Err(Error::TimeSequence(format!(
                "pivot must be positive, got {pivot}"
            )));
        }
        let end = 2.0 * pivot;
        for (k, &s) in times.iter().enumerate() {
            if !(s > 0.0 && s < end) {
                return Err(Error::TimeSequence(format!(
                    "s_{} = {s} outside (0, {end})",
                    k + 1
                )));
            }
            if k > 0 && s <= times[k - 1] {
                return Err(Error::TimeSequence(format!(
                    "times not strictly increasing at index {}",
                    k + 1
                )));
            }
        }
        Ok(Self { times, pivot })
    }

    pub fn empty(pivot: f64) -> Result<Self, Error> {
        Self::new(Vec::new(), pivot)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn pivot(&self) -> f64 {
        self.pivot
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of contour times on the forward branch, `#{s < t}`.
///
/// The branch sign factor of the expansion is `(-1)^count_forward`.
pub fn count_forward(s: &TimeSequence) -> usize {
    s.times.iter().filter(|&&x| x < s.pivot).count()
}

/// System propagator `G_s(sf, si)` on the unfolded contour.
///
/// The boundary `s = t` belongs to the backward branch, so `sf = si = t`
/// returns the identity and does not insert the observable.
pub fn system_propagator(sf: f64, si: f64, sys: &SystemSpec, t: f64) -> Result<CMat, Error> {
    if si > sf {
        return Err(Error::ContourOrdering(format!("si = {si} > sf = {sf}")));
    }
    let eig = sys.h_eig();
    if sf < t {
        Ok(eig.propagator(sf - si))
    } else if si >= t {
        Ok(eig.propagator(si - sf))
    } else {
        // si < t <= sf: observable inserted at the pivot.
        Ok(eig.propagator(t - sf) * &sys.o_s * eig.propagator(t - si))
    }
}

/// Alternating product `G_s(sf, s_m) W_s ... W_s G_s(s_1, si)`.
pub fn u_s(sf: f64, s: &TimeSequence, si: f64, sys: &SystemSpec) -> Result<CMat, Error> {
    let times = s.times();
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        if si >= first || last >= sf {
            return Err(Error::ContourOrdering(format!(
                "need si < s_1 and s_m < sf, got si = {si}, s_1 = {first}, s_m = {last}, sf = {sf}"
            )));
        }
    }
    let t = s.pivot();
    let mut acc = system_propagator(times.first().copied().unwrap_or(sf), si, sys, t)?;
    if times.is_empty() {
        return Ok(acc);
    }
    for k in 0..times.len() {
        let upper = times.get(k + 1).copied().unwrap_or(sf);
        acc = system_propagator(upper, times[k], sys, t)? * &sys.w_s * acc;
    }
    Ok(acc)
}

/// Full system-side integrand factor
/// `(-1)^{#{s<t}} i^m tr_s(rho_s U_s(2t, s, 0))`.
pub fn dyson_weight(s: &TimeSequence, sys: &SystemSpec) -> Result<C64, Error> {
    let m = s.len();
    let u = u_s(2.0 * s.pivot(), s, 0.0, sys)?;
    let trace = (&sys.rho_s * u).trace();
    let sign = if count_forward(s).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    Ok(C64::i().powu(m as u32) * sign * trace)
}
