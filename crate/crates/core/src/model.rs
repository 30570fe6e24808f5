//! Domain types shared by all modules: system, bath and run configuration.

use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{CMat, Error};

/// Numerical tolerances used when validating operators and results.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Hermiticity defect allowed in `h_s`, `w_s`, `o_s`, `rho_s`.
    pub herm: f64,
    /// Allowed negative eigenvalue of the initial state.
    pub psd: f64,
    /// Allowed deviation of `tr rho_s` from one.
    pub trace: f64,
    /// Allowed imaginary part of a Hermitian expectation value.
    pub imag: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            herm: 1e-10,
            psd: 1e-10,
            trace: 1e-10,
            imag: 1e-8,
        }
    }
}

/// Eigendecomposition of a Hermitian operator, cached so that the thousands of
/// propagator evaluations in a Monte Carlo run share one factorization.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

impl HermitianEig {
    pub fn new(a: &CMat) -> Self {
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    /// `exp(-i theta A)` from the cached factorization.
    pub fn propagator(&self, theta: f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, lam) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -theta * lam);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Finite-dimensional system: Hamiltonian, coupling factor, observable and
/// initial state, all dense Hermitian operators.
#[derive(Debug)]
pub struct SystemSpec {
    pub dim: usize,
    pub h_s: CMat,
    pub w_s: CMat,
    pub o_s: CMat,
    pub rho_s: CMat,
    h_eig: OnceLock<HermitianEig>,
}

impl Clone for SystemSpec {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            h_s: self.h_s.clone(),
            w_s: self.w_s.clone(),
            o_s: self.o_s.clone(),
            rho_s: self.rho_s.clone(),
            h_eig: OnceLock::new(),
        }
    }
}

fn hermiticity_defect(a: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

impl SystemSpec {
    pub fn new(
        h_s: CMat,
        w_s: CMat,
        o_s: CMat,
        rho_s: CMat,
        tol: &Tolerances,
    ) -> Result<Self, Error> {
        let dim = h_s.nrows();
        for (name, op) in [
            ("h_s", &h_s),
            ("w_s", &w_s),
            ("o_s", &o_s),
            ("rho_s", &rho_s),
        ] {
            if op.nrows() != dim || op.ncols() != dim {
                return Err(Error::InvalidOperator(format!(
                    "{name} is {}x{}, expected {dim}x{dim}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            if op.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidOperator(format!(
                    "{name} has non-finite entries"
                )));
            }
            let defect = hermiticity_defect(op);
            if defect > tol.herm {
                return Err(Error::InvalidOperator(format!(
                    "{name} not Hermitian: defect {defect:.3e} > {:.3e}",
                    tol.herm
                )));
            }
        }
        let trace: C64 = rho_s.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(Error::InvalidOperator(format!(
                "tr rho_s = {trace} differs from 1 beyond {:.3e}",
                tol.trace
            )));
        }
        let eig = nalgebra::SymmetricEigen::new(rho_s.clone());
        if let Some(lam) = eig.eigenvalues.iter().copied().find(|&l| l < -tol.psd) {
            return Err(Error::InvalidOperator(format!(
                "rho_s has eigenvalue {lam:.3e} below -{:.3e}",
                tol.psd
            )));
        }
        Ok(Self {
            dim,
            h_s,
            w_s,
            o_s,
            rho_s,
            h_eig: OnceLock::new(),
        })
    }

    /// Cached eigendecomposition of `h_s`.
    pub fn h_eig(&self) -> &HermitianEig {
        self.h_eig.get_or_init(|| HermitianEig::new(&self.h_s))
    }
}

/// Named observable choice for the spin-boson preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinObservable {
    SigmaZ,
    SigmaX,
    Identity,
}

/// Pauli-matrix helpers on the convention `sigma_z |1> = |1>`.
pub fn sigma_z() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[
            C64::new(1.0, 0.0),
            C64::ZERO,
            C64::ZERO,
            C64::new(-1.0, 0.0),
        ],
    )
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[C64::ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::ZERO],
    )
}

/// Spin-boson system preset: `H_s = epsilon sigma_z + delta sigma_x`,
/// `W_s = sigma_z`, initial state `|1><1|`.
pub fn spin_boson_system(epsilon: f64, delta: f64, observable: SpinObservable) -> SystemSpec {
    let h_s = sigma_z() * C64::new(epsilon, 0.0) + sigma_x() * C64::new(delta, 0.0);
    let o_s = match observable {
        SpinObservable::SigmaZ => sigma_z(),
        SpinObservable::SigmaX => sigma_x(),
        SpinObservable::Identity => CMat::identity(2, 2),
    };
    let mut rho_s = CMat::zeros(2, 2);
    rho_s[(0, 0)] = C64::new(1.0, 0.0);
    SystemSpec::new(h_s, sigma_z(), o_s, rho_s, &Tolerances::default())
        .expect("spin-boson preset operators are Hermitian by construction")
}

/// Spectral norm (largest singular value).
///
/// Exact closed form for `d <= 2`; power iteration on `a^dagger a` otherwise.
pub fn operator_norm(a: &CMat) -> Result<f64, Error> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidOperator("non-finite entries".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let gram = a.adjoint() * a;
    if n == 1 {
        return Ok(gram[(0, 0)].re.max(0.0).sqrt());
    }
    if n == 2 {
        // Largest eigenvalue of the 2x2 Hermitian Gram matrix.
        let p = gram[(0, 0)].re;
        let q = gram[(1, 1)].re;
        let b = gram[(0, 1)].norm_sqr();
        let lam = 0.5 * (p + q) + (0.25 * (p - q) * (p - q) + b).sqrt();
        return Ok(lam.max(0.0).sqrt());
    }
    // Power iteration with a deterministic start vector.
    let mut v = DVector::<C64>::from_fn(n, |i, _| C64::new(1.0 + (i as f64) * 0.37, 0.19));
    v /= C64::new(v.norm(), 0.0);
    let mut lam = 0.0f64;
    for _ in 0..10_000 {
        let w = &gram * &v;
        let next = w.norm();
        if next == 0.0 {
            return Ok(0.0);
        }
        v = w / C64::new(next, 0.0);
        if (next - lam).abs() <= 1e-12 * next.max(1.0) {
            lam = next;
            break;
        }
        lam = next;
    }
    Ok(lam.max(0.0).sqrt())
}

/// One harmonic mode of the bath.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathMode {
    /// Angular frequency, strictly positive.
    pub omega: f64,
    /// Linear coupling strength.
    pub c: f64,
}

/// Discrete bosonic bath: mode list and inverse temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub modes: Vec<BathMode>,
    pub beta: f64,
}

impl BathSpec {
    pub fn new(modes: Vec<BathMode>, beta: f64) -> Result<Self, Error> {
        if beta <= 0.0 || !beta.is_finite() {
            return Err(Error::InvalidBath(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if modes.is_empty() {
            return Err(Error::InvalidBath("at least one mode required".into()));
        }
        for (l, mode) in modes.iter().enumerate() {
            if mode.omega <= 0.0 || !mode.omega.is_finite() {
                return Err(Error::InvalidBath(format!(
                    "mode {l}: omega must be positive, got {}",
                    mode.omega
                )));
            }
            if !mode.c.is_finite() {
                return Err(Error::InvalidBath(format!("mode {l}: non-finite coupling")));
            }
        }
        Ok(Self { modes, beta })
    }

    /// Discretize a continuum spectral density `J(omega)` into modes by the
    /// midpoint rule on the given frequency grid: `c_l^2 = 2 omega_l J(omega_l)
    /// d omega / pi`.
    pub fn from_spectral_density(
        j: impl Fn(f64) -> f64,
        omega_grid: &[f64],
        beta: f64,
    ) -> Result<Self, Error> {
        if omega_grid.len() < 2 {
            return Err(Error::InvalidBath(
                "spectral grid needs at least two points".into(),
            ));
        }
        let mut modes = Vec::with_capacity(omega_grid.len() - 1);
        for pair in omega_grid.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo {
                return Err(Error::InvalidBath(
                    "spectral grid must be strictly increasing".into(),
                ));
            }
            let omega = 0.5 * (lo + hi);
            let c2 = 2.0 * omega * j(omega) * (hi - lo) / std::f64::consts::PI;
            if c2 < 0.0 {
                return Err(Error::InvalidBath(
                    "spectral density must be nonnegative".into(),
                ));
            }
            modes.push(BathMode {
                omega,
                c: c2.sqrt(),
            });
        }
        Self::new(modes, beta)
    }
}

/// Choice of integrator for simplex integrals.
///
/// `Gauss` uses deterministic nested quadrature for orders 0 and 2 and falls
/// back to Monte Carlo above; `MonteCarlo` samples every positive order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Gauss,
    MonteCarlo,
}

/// Run configuration for the truncated Dyson series.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DysonConfig {
    /// Physical final time; the unfolded contour runs over `[0, 2t]`.
    pub t: f64,
    /// Even truncation order `M`.
    pub max_order: usize,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default = "default_samples")]
    pub samples_per_order: usize,
    #[serde(default = "default_gauss_points")]
    pub gauss_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tol: Tolerances,
}

fn default_integrator() -> Integrator {
    Integrator::Gauss
}

fn default_samples() -> usize {
    200_000
}

fn default_gauss_points() -> usize {
    32
}

impl DysonConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.t.is_nan() || self.t <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "t must be positive, got {}",
                self.t
            )));
        }
        if !self.max_order.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "max_order must be even, got {}",
                self.max_order
            )));
        }
        if self.samples_per_order == 0 {
            return Err(Error::InvalidConfig(
                "samples_per_order must be at least 1".into(),
            ));
        }
        if self.gauss_points < 2 {
            return Err(Error::InvalidConfig(
                "gauss_points must be at least 2".into(),
            ));
        }
        Ok(())
    }
}
