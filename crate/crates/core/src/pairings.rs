//! Enumeration and evaluation of ordered pairings and Wick sums.
//!
//! An ordered pairing of `m` (even) points is a partition of `{0, ..., m-1}`
//! into `m/2` pairs `(j, k)` with `j < k`; there are `(m-1)!!` of them.
//! Enumeration is streaming and follows a fixed canonical order: the smallest
//! unpaired index is matched with each larger unpaired index in turn, so runs
//! are reproducible and test vectors stable.

use num_complex::Complex64 as C64;

use crate::contour::TimeSequence;
use crate::Error;

/// A set of ordered index pairs covering `{0, ..., m-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// Build from an explicit pair list, validating the covering and ordering
    /// invariants.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, Error> {
        let m = 2 * pairs.len();
        let mut seen = vec![false; m];
        for &(j, k) in &pairs {
            if j >= k {
                return Err(Error::InvalidConfig(format!("pair ({j}, {k}) not ordered")));
            }
            for idx in [j, k] {
                if idx >= m || seen[idx] {
                    return Err(Error::InvalidConfig(format!(
                        "indices do not cover 0..{m} exactly"
                    )));
                }
                seen[idx] = true;
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn order(&self) -> usize {
        2 * self.pairs.len()
    }
}

/// `(m-1)!!` with `(-1)!! = 1`.
pub fn pairing_count(m: usize) -> Result<u64, Error> {
    if !m.is_multiple_of(2) {
        return Err(Error::OddOrder(m));
    }
    let mut count = 1u64;
    let mut k = m as u64;
    while k > 1 {
        count *= k - 1;
        k -= 2;
    }
    Ok(count)
}

/// Streaming enumerator over all ordered pairings of `m` points.
///
/// Internally a mixed-radix counter: digit `i` selects the partner of the
/// smallest free index among the remaining ones, with radix `m - 2i - 1`.
pub struct PairingIter {
    m: usize,
    digits: Vec<usize>,
    done: bool,
}

impl PairingIter {
    fn current(&self) -> Pairing {
        let half = self.m / 2;
        let mut free: Vec<usize> = (0..self.m).collect();
        let mut pairs = Vec::with_capacity(half);
        for &d in &self.digits {
            let j = free.remove(0);
            let k = free.remove(d);
            pairs.push((j, k));
        }
        Pairing { pairs }
    }

    fn advance(&mut self) {
        // Odometer increment, least-significant digit last.
        for i in (0..self.digits.len()).rev() {
            let radix = self.m - 2 * i - 1;
            self.digits[i] += 1;
            if self.digits[i] < radix {
                return;
            }
            self.digits[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for PairingIter {
    type Item = Pairing;

    fn next(&mut self) -> Option<Pairing> {
        if self.done {
            return None;
        }
        let pairing = self.current();
        if self.digits.is_empty() {
            self.done = true;
        } else {
            self.advance();
        }
        Some(pairing)
    }
}

/// Yield every ordered pairing of `m` points exactly once.
///
/// `m = 0` yields the single empty pairing.
pub fn enumerate_pairings(m: usize) -> Result<PairingIter, Error> {
    if !m.is_multiple_of(2) {
        return Err(Error::OddOrder(m));
    }
    Ok(PairingIter {
        m,
        digits: vec![0; m / 2],
        done: false,
    })
}

/// Wick product `prod_{(j,k) in q} B(s_j, s_k)`; the empty pairing gives 1.
pub fn wick_product(q: &Pairing, s: &TimeSequence, corr: impl Fn(f64, f64) -> C64) -> C64 {
    let times = s.times();
    q.pairs
        .iter()
        .map(|&(j, k)| corr(times[j], times[k]))
        .product()
}

/// Wick sum over all ordered pairings: zero for odd `m`, the sum of
/// [`wick_product`] over every pairing otherwise.
pub fn wick_sum(s: &TimeSequence, corr: impl Fn(f64, f64) -> C64) -> C64 {
    wick_sum_times(s.times(), corr)
}

/// [`wick_sum`] on a raw ascending slice of times.
///
/// Correlation values for the `m(m-1)/2` index pairs are tabulated once, so a
/// full sum at order `m` costs `(m-1)!!` products of table lookups instead of
/// repeated correlation evaluations.
pub fn wick_sum_times(times: &[f64], corr: impl Fn(f64, f64) -> C64) -> C64 {
    let m = times.len();
    if !m.is_multiple_of(2) {
        return C64::new(0.0, 0.0);
    }
    if m == 0 {
        return C64::new(1.0, 0.0);
    }
    let mut table = vec![C64::new(0.0, 0.0); m * m];
    for j in 0..m {
        for k in (j + 1)..m {
            table[j * m + k] = corr(times[j], times[k]);
        }
    }
    let mut total = C64::new(0.0, 0.0);
    for q in enumerate_pairings(m).expect("m is even") {
        let mut prod = C64::new(1.0, 0.0);
        for &(j, k) in q.pairs() {
            prod *= table[j * m + k];
        }
        total += prod;
    }
    total
}

/// One term of the pairing-splitting decomposition: an even-size subset `c`
/// of `{0, ..., m-1}`, a pairing of the complement and a pairing of `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPairing {
    /// Ascending selected indices.
    pub subset: Vec<usize>,
    /// Pairing of the subset, in global indices.
    pub on_subset: Pairing,
    /// Pairing of the complement, in global indices.
    pub on_complement: Pairing,
}

fn relabel(local: &Pairing, indices: &[usize]) -> Pairing {
    Pairing {
        pairs: local
            .pairs
            .iter()
            .map(|&(j, k)| (indices[j], indices[k]))
            .collect(),
    }
}

/// Yield every (subset, subset-pairing, complement-pairing) triple exactly
/// once for subsets of the given even size.
pub fn split_pairings(
    m: usize,
    subset_size: usize,
) -> Result<impl Iterator<Item = SplitPairing>, Error> {
    if !m.is_multiple_of(2) {
        return Err(Error::OddOrder(m));
    }
    if !subset_size.is_multiple_of(2) {
        return Err(Error::OddOrder(subset_size));
    }
    if subset_size > m {
        return Err(Error::InvalidConfig(format!(
            "subset_size {subset_size} exceeds m = {m}"
        )));
    }
    use itertools::Itertools;
    let iter = (0..m).combinations(subset_size).flat_map(move |subset| {
        let complement: Vec<usize> = (0..m).filter(|i| !subset.contains(i)).collect();
        enumerate_pairings(subset_size)
            .expect("even")
            .flat_map(move |q_sub| {
                let subset = subset.clone();
                let complement = complement.clone();
                let q_sub_global = relabel(&q_sub, &subset);
                enumerate_pairings(m - subset_size)
                    .expect("even")
                    .map(move |q_comp| SplitPairing {
                        subset: subset.clone(),
                        on_subset: q_sub_global.clone(),
                        on_complement: relabel(&q_comp, &complement),
                    })
            })
    });
    Ok(iter)
}
