//! Brute-force ground truth on a truncated Fock space: exact evolution of the
//! coupled system, direct bath traces, and the full interacting propagator.
//!
//! Wick's theorem is exact only on the untruncated space. The truncation
//! defect is surfaced as diagnostics and gates acceptance instead of being
//! silently absorbed.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bathcorr::spin_boson_correlation;
use crate::contour::TimeSequence;
use crate::model::{BathSpec, HermitianEig, SystemSpec};
use crate::pairings::wick_sum;
use crate::{CMat, Error};

/// Per-mode occupancy cutoff and acceptance thresholds for the oracle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockTruncation {
    /// Occupancies `0..=n_max` are kept per mode.
    pub n_max: usize,
    /// Hard cap on the total Hilbert-space dimension.
    pub memory_ceiling: usize,
    /// Largest admissible thermal mass outside the truncated space.
    pub tail_threshold: f64,
}

impl Default for FockTruncation {
    fn default() -> Self {
        Self {
            n_max: 20,
            memory_ceiling: 4096,
            tail_threshold: 1e-8,
        }
    }
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Self {
        Self {
            n_max,
            ..Self::default()
        }
    }
}

/// Truncated bath operators and thermal state.
#[derive(Debug, Clone)]
pub struct BathOperators {
    pub dim: usize,
    /// Diagonal of `H_b` (mode energies summed per Fock state).
    pub energies: Vec<f64>,
    /// Coupling operator `W_b = sum_l c_l/sqrt(2 omega_l) (a_l + a_l^dag)`.
    pub w_b: CMat,
    /// Diagonal of the renormalized thermal state.
    pub rho_diag: Vec<f64>,
    /// Thermal mass cut away before renormalization.
    pub thermal_tail_mass: f64,
    /// Marks states with any mode at the occupancy cutoff.
    edge_state: Vec<bool>,
}

/// Truncated ladder operator, `a |n> = sqrt(n) |n-1>`.
pub fn annihilation(n_max: usize) -> CMat {
    let dim = n_max + 1;
    CMat::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn kron_list(ops: &[CMat]) -> CMat {
    let mut acc = CMat::identity(1, 1);
    for op in ops {
        acc = acc.kronecker(op);
    }
    acc
}

/// Build truncated `H_b`, `W_b` and the renormalized thermal state.
pub fn build_bath_operators(
    bath: &BathSpec,
    trunc: &FockTruncation,
) -> Result<BathOperators, Error> {
    let per_mode = trunc.n_max + 1;
    let modes = bath.modes.len();
    let dim = per_mode.checked_pow(modes as u32).unwrap_or(usize::MAX);
    if dim > trunc.memory_ceiling {
        return Err(Error::Truncation(format!(
            "bath dimension {dim} exceeds memory ceiling {}",
            trunc.memory_ceiling
        )));
    }

    // Occupancies of a composite Fock index, most significant mode first.
    let occupancy = |state: usize, mode: usize| -> usize {
        (state / per_mode.pow((modes - 1 - mode) as u32)) % per_mode
    };

    let mut energies = vec![0.0f64; dim];
    let mut edge_state = vec![false; dim];
    for state in 0..dim {
        for (l, mode) in bath.modes.iter().enumerate() {
            let n = occupancy(state, l);
            energies[state] += mode.omega * n as f64;
            edge_state[state] |= n == trunc.n_max;
        }
    }

    let mut w_b = CMat::zeros(dim, dim);
    for (l, mode) in bath.modes.iter().enumerate() {
        let a = annihilation(trunc.n_max);
        let x = (&a + a.adjoint()) * C64::new(mode.c / (2.0 * mode.omega).sqrt(), 0.0);
        let ops: Vec<CMat> = (0..modes)
            .map(|k| {
                if k == l {
                    x.clone()
                } else {
                    CMat::identity(per_mode, per_mode)
                }
            })
            .collect();
        w_b += kron_list(&ops);
    }

    let z_trunc: f64 = energies.iter().map(|e| (-bath.beta * e).exp()).sum();
    let z_full: f64 = bath
        .modes
        .iter()
        .map(|mode| 1.0 / (1.0 - (-bath.beta * mode.omega).exp()))
        .product();
    let thermal_tail_mass = (1.0 - z_trunc / z_full).max(0.0);
    if thermal_tail_mass >= trunc.tail_threshold {
        return Err(Error::Truncation(format!(
            "thermal tail mass {thermal_tail_mass:.3e} >= {:.3e}; raise n_max",
            trunc.tail_threshold
        )));
    }
    let rho_diag: Vec<f64> = energies
        .iter()
        .map(|e| (-bath.beta * e).exp() / z_trunc)
        .collect();

    Ok(BathOperators {
        dim,
        energies,
        w_b,
        rho_diag,
        thermal_tail_mass,
        edge_state,
    })
}

/// Bath propagator phase for one contour interval (diagonal in Fock space).
fn bath_phase_exponent(sf: f64, si: f64, t: f64) -> Result<f64, Error> {
    if si > sf {
        return Err(Error::ContourOrdering(format!("si = {si} > sf = {sf}")));
    }
    Ok(if sf < t {
        sf - si
    } else if si >= t {
        si - sf
    } else {
        2.0 * t - si - sf
    })
}

/// Direct evaluation of the bath trace
/// `L_b(s) = tr_b(rho_b G_b(2t, s_m) W_b ... W_b G_b(s_1, 0))`.
pub fn direct_bath_trace(s: &TimeSequence, bath: &BathOperators, t: f64) -> Result<C64, Error> {
    let times = s.times();
    if times.is_empty() {
        // tr rho_b = 1 after renormalization.
        return Ok(C64::new(bath.rho_diag.iter().sum(), 0.0));
    }
    let dim = bath.dim;
    let apply_phase = |m: &mut CMat, theta: f64, energies: &[f64]| {
        for i in 0..dim {
            let phase = C64::from_polar(1.0, -theta * energies[i]);
            for j in 0..dim {
                m[(i, j)] *= phase;
            }
        }
    };

    // Chain right-to-left: M = G_b(s_1, 0), then W_b and the next interval.
    let theta = bath_phase_exponent(times[0], 0.0, t)?;
    let mut m = CMat::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::from_polar(1.0, -theta * bath.energies[i])
        } else {
            C64::new(0.0, 0.0)
        }
    });
    for k in 0..times.len() {
        let upper = times.get(k + 1).copied().unwrap_or(2.0 * t);
        let mut next = &bath.w_b * m;
        apply_phase(
            &mut next,
            bath_phase_exponent(upper, times[k], t)?,
            &bath.energies,
        );
        m = next;
    }
    let mut trace = C64::new(0.0, 0.0);
    for i in 0..dim {
        trace += m[(i, i)] * bath.rho_diag[i];
    }
    Ok(trace)
}

/// Compare [`direct_bath_trace`] with the Wick sum of the analytic
/// correlation over random time sequences; returns the worst relative
/// deviation.
pub fn wick_verification(
    m: usize,
    bath_spec: &BathSpec,
    trunc: &FockTruncation,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, Error> {
    use rand::{Rng, SeedableRng};
    let bath = build_bath_operators(bath_spec, trunc)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < samples {
        let mut times: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 2.0 * t).collect();
        times.sort_by(f64::total_cmp);
        let s = match TimeSequence::new(times, t) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let direct = direct_bath_trace(&s, &bath, t)?;
        let wick = wick_sum(&s, |a, b| spin_boson_correlation(bath_spec, t, a, b));
        let scale = direct.norm().max(wick.norm()).max(1e-30);
        worst = worst.max((direct - wick).norm() / scale);
        done += 1;
    }
    Ok(worst)
}

/// The coupled system realized on the truncated space, held in the
/// eigenbasis of the full Hamiltonian so propagators are diagonal phases.
#[derive(Debug, Clone)]
pub struct FullSystem {
    pub dim: usize,
    pub pivot: f64,
    eig: HermitianEig,
    /// `rho(0)`, `O_s x Id` and `W_s x Id` rotated into the eigenbasis.
    rho0_e: CMat,
    o_e: CMat,
    wring_e: CMat,
    /// Original-basis projector onto cutoff-edge states, for diagnostics.
    edge_mask: Vec<bool>,
    pub bath: BathOperators,
    sys_dim: usize,
}

impl FullSystem {
    pub fn new(
        sys: &SystemSpec,
        bath_spec: &BathSpec,
        trunc: &FockTruncation,
        t: f64,
    ) -> Result<Self, Error> {
        let bath = build_bath_operators(bath_spec, trunc)?;
        let dim = sys.dim * bath.dim;
        if dim > trunc.memory_ceiling {
            return Err(Error::Truncation(format!(
                "total dimension {dim} exceeds memory ceiling {}",
                trunc.memory_ceiling
            )));
        }
        let id_b = CMat::identity(bath.dim, bath.dim);
        let h_b = CMat::from_fn(bath.dim, bath.dim, |i, j| {
            if i == j {
                C64::new(bath.energies[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let h = sys.h_s.kronecker(&id_b)
            + CMat::identity(sys.dim, sys.dim).kronecker(&h_b)
            + sys.w_s.kronecker(&bath.w_b);
        let eig = HermitianEig::new(&h);

        let rho_b = CMat::from_fn(bath.dim, bath.dim, |i, j| {
            if i == j {
                C64::new(bath.rho_diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let rho0 = sys.rho_s.kronecker(&rho_b);
        let o_full = sys.o_s.kronecker(&id_b);
        let wring = sys.w_s.kronecker(&id_b);

        let v = &eig.vectors;
        let vh = v.adjoint();
        let rho0_e = &vh * rho0 * v;
        let o_e = &vh * o_full * v;
        let wring_e = &vh * wring * v;

        let edge_mask: Vec<bool> = (0..dim).map(|i| bath.edge_state[i % bath.dim]).collect();

        Ok(Self {
            dim,
            pivot: t,
            eig,
            rho0_e,
            o_e,
            wring_e,
            edge_mask,
            bath,
            sys_dim: sys.dim,
        })
    }

    /// Diagonal of `exp(-i theta H)` in the eigenbasis.
    fn phases(&self, theta: f64) -> DVector<C64> {
        DVector::from_iterator(
            self.dim,
            self.eig
                .values
                .iter()
                .map(|&lam| C64::from_polar(1.0, -theta * lam)),
        )
    }

    fn scale_rows(&self, m: &mut CMat, phases: &DVector<C64>) {
        for i in 0..self.dim {
            let p = phases[i];
            for j in 0..self.dim {
                m[(i, j)] *= p;
            }
        }
    }

    /// Eigenbasis representation of the contour propagator `G(sf, si)`, with
    /// the full observable inserted when the interval crosses the pivot.
    fn propagator_eig(&self, sf: f64, si: f64) -> Result<CMat, Error> {
        if si > sf {
            return Err(Error::ContourOrdering(format!("si = {si} > sf = {sf}")));
        }
        let t = self.pivot;
        if sf < t {
            Ok(CMat::from_diagonal(&self.phases(sf - si)))
        } else if si >= t {
            Ok(CMat::from_diagonal(&self.phases(si - sf)))
        } else {
            let mut m = self.o_e.clone();
            self.scale_rows(&mut m, &self.phases(t - sf));
            let right = self.phases(t - si);
            for j in 0..self.dim {
                let p = right[j];
                for i in 0..self.dim {
                    m[(i, j)] *= p;
                }
            }
            Ok(m)
        }
    }

    /// Full interacting propagator `G(sf, si)` in the original basis.
    pub fn full_propagator(&self, sf: f64, si: f64) -> Result<CMat, Error> {
        let m = self.propagator_eig(sf, si)?;
        Ok(&self.eig.vectors * m * self.eig.vectors.adjoint())
    }

    /// `G W_ring G ... W_ring G` in the original basis.
    pub fn u_ring(&self, sf: f64, s: &TimeSequence, si: f64) -> Result<CMat, Error> {
        let times = s.times();
        let mut acc = self.propagator_eig(times.first().copied().unwrap_or(sf), si)?;
        for k in 0..times.len() {
            let upper = times.get(k + 1).copied().unwrap_or(sf);
            acc = self.propagator_eig(upper, times[k])? * &self.wring_e * acc;
        }
        Ok(&self.eig.vectors * acc * self.eig.vectors.adjoint())
    }

    /// `tr(rho(0) U_ring(2t, s, 0))`, kept in the eigenbasis so off-pivot
    /// propagators cost only diagonal phase scalings.
    pub fn u_ring_trace(&self, s: &TimeSequence) -> Result<C64, Error> {
        let t = self.pivot;
        let times = s.times();
        let mut acc = self.propagator_eig(times.first().copied().unwrap_or(2.0 * t), 0.0)?;
        for k in 0..times.len() {
            let upper = times.get(k + 1).copied().unwrap_or(2.0 * t);
            let g = self.propagator_eig(upper, times[k])?;
            acc = g * &self.wring_e * acc;
        }
        // tr(rho0 U) without forming the product.
        let mut trace = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                trace += self.rho0_e[(i, j)] * acc[(j, i)];
            }
        }
        Ok(trace)
    }

    /// Exact density matrix at physical time `t`, in the eigenbasis.
    fn rho_t_eig(&self, t: f64) -> CMat {
        let phases = self.phases(t);
        let mut rho = self.rho0_e.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                rho[(i, j)] *= phases[i] * phases[j].conj();
            }
        }
        rho
    }

    /// Exact expectation `tr(O_s x Id rho(t))` plus truncation diagnostics.
    pub fn exact_observable(&self, t: f64, tol_imag: f64) -> Result<ExactObservable, Error> {
        let rho = self.rho_t_eig(t);
        let mut value = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                value += self.o_e[(i, j)] * rho[(j, i)];
            }
        }
        if value.im.abs() > tol_imag {
            return Err(Error::Truncation(format!(
                "imaginary part {:.3e} of a Hermitian expectation exceeds {tol_imag:.3e}",
                value.im
            )));
        }
        // Population of cutoff-edge bath states after evolution.
        let rho_orig = &self.eig.vectors * &rho * self.eig.vectors.adjoint();
        let mut edge_population = 0.0f64;
        for i in 0..self.dim {
            if self.edge_mask[i] {
                edge_population += rho_orig[(i, i)].re;
            }
        }
        Ok(ExactObservable {
            value: value.re,
            imag_defect: value.im.abs(),
            thermal_tail_mass: self.bath.thermal_tail_mass,
            edge_population: edge_population.max(0.0),
        })
    }

    /// Total energy `tr(H rho(t))`; constant in `t` for this closed evolution.
    pub fn energy(&self, t: f64) -> f64 {
        let rho = self.rho_t_eig(t);
        (0..self.dim)
            .map(|i| self.eig.values[i] * rho[(i, i)].re)
            .sum()
    }

    pub fn trace_rho(&self, t: f64) -> f64 {
        let rho = self.rho_t_eig(t);
        (0..self.dim).map(|i| rho[(i, i)].re).sum()
    }

    pub fn system_dim(&self) -> usize {
        self.sys_dim
    }
}

/// Exact observable value with truncation diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ExactObservable {
    pub value: f64,
    pub imag_defect: f64,
    pub thermal_tail_mass: f64,
    pub edge_population: f64,
}

/// Convenience wrapper building the coupled system and returning the exact
/// observable at time `t`.
pub fn exact_observable(
    sys: &SystemSpec,
    bath_spec: &BathSpec,
    trunc: &FockTruncation,
    t: f64,
    tol_imag: f64,
) -> Result<ExactObservable, Error> {
    FullSystem::new(sys, bath_spec, trunc, t)?.exact_observable(t, tol_imag)
}
