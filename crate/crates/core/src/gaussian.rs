//! Covariance-matrix engine for zero-mean Gaussian probes.
//!
//! Quadratures are ordered `(x_0, p_0, x_1, p_1, ...)` and both carry vacuum
//! variance 1/4. The Fock kernel uses the same `x` but `p_fock = 2 p`, so
//! p-variances convert with [`FOCK_P_SCALE`]².

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{domain, Result};
use crate::fock::splitter_angles;

pub const VACUUM_VARIANCE: f64 = 0.25;

/// `p_fock = FOCK_P_SCALE · p`.
pub const FOCK_P_SCALE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn vacuum(modes: usize) -> Result<Self> {
        if modes < 1 {
            return Err(domain("a state needs at least one mode"));
        }
        Ok(GaussianState {
            mean: DVector::zeros(2 * modes),
            cov: DMatrix::identity(2 * modes, 2 * modes) * VACUUM_VARIANCE,
        })
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) || cov.nrows() != n || cov.ncols() != n {
            return Err(domain("mean must have even length 2M and cov must be 2M x 2M"));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(domain("covariance matrix is not symmetric"));
        }
        Ok(GaussianState { mean, cov })
    }

    pub fn mode_count(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn x_variance(&self, mode: usize) -> f64 {
        self.cov[(2 * mode, 2 * mode)]
    }

    pub fn p_variance(&self, mode: usize) -> f64 {
        self.cov[(2 * mode + 1, 2 * mode + 1)]
    }

    /// Direct sum with `other`, whose modes are appended.
    pub fn tensor(&self, other: &GaussianState) -> Self {
        let (a, b) = (self.mean.len(), other.mean.len());
        let mut mean = DVector::zeros(a + b);
        mean.rows_mut(0, a).copy_from(&self.mean);
        mean.rows_mut(a, b).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(a + b, a + b);
        cov.view_mut((0, 0), (a, a)).copy_from(&self.cov);
        cov.view_mut((a, a), (b, b)).copy_from(&other.cov);
        GaussianState { mean, cov }
    }

    /// Pads with vacuum modes up to `modes` in total.
    pub fn with_vacuum_modes(&self, modes: usize) -> Result<Self> {
        let have = self.mode_count();
        if modes < have {
            return Err(domain(format!("cannot shrink a {have}-mode state to {modes} modes")));
        }
        if modes == have {
            return Ok(self.clone());
        }
        Ok(self.tensor(&GaussianState::vacuum(modes - have)?))
    }

    /// Applies a symplectic matrix `S`: `mean -> S mean`, `cov -> S cov Sᵀ`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.mean.len() || s.ncols() != self.mean.len() {
            return Err(domain("symplectic matrix has the wrong size"));
        }
        let cov = s * &self.cov * s.transpose();
        // re-symmetrize round-off
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(GaussianState {
            mean: s * &self.mean,
            cov,
        })
    }

    /// Same mixing as `fock::beamsplitter(theta, a, b)`.
    pub fn beamsplitter(&self, theta: f64, a: usize, b: usize) -> Result<Self> {
        let m = self.mode_count();
        if a == b || a >= m || b >= m {
            return Err(domain(format!("invalid beamsplitter modes ({a}, {b}) for {m} modes")));
        }
        self.transform(&beamsplitter_symplectic(theta, a, b, m))
    }

    pub fn balanced_splitter(&self) -> Result<Self> {
        let m = self.mode_count();
        let mut out = self.clone();
        for (k, theta) in splitter_angles(m).into_iter().enumerate() {
            out = out.beamsplitter(theta, k, k + 1)?;
        }
        Ok(out)
    }

    /// Pure loss on one mode.
    pub fn loss_mode(&self, eta: f64, mode: usize) -> Result<Self> {
        check_eta(eta)?;
        if mode >= self.mode_count() {
            return Err(domain(format!("mode {mode} out of range")));
        }
        let mut g = DMatrix::identity(self.mean.len(), self.mean.len());
        g[(2 * mode, 2 * mode)] = eta.sqrt();
        g[(2 * mode + 1, 2 * mode + 1)] = eta.sqrt();
        let mut cov = &g * &self.cov * &g;
        cov[(2 * mode, 2 * mode)] += (1.0 - eta) * VACUUM_VARIANCE;
        cov[(2 * mode + 1, 2 * mode + 1)] += (1.0 - eta) * VACUUM_VARIANCE;
        Ok(GaussianState {
            mean: &g * &self.mean,
            cov,
        })
    }

    /// Adds `dx` to every x-quadrature mean.
    pub fn displace_x(&self, dx: f64) -> Self {
        let mut out = self.clone();
        for m in 0..self.mode_count() {
            out.mean[2 * m] += dx;
        }
        out
    }

    /// `Var(w · Σ_m q_m)` where `q` is x (`offset = 0`) or p (`offset = 1`).
    fn sum_variance(&self, offset: usize, weight: f64) -> f64 {
        let m = self.mode_count();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                total += self.cov[(2 * i + offset, 2 * j + offset)];
            }
        }
        weight * weight * total
    }

    /// Variance of the homodyne estimator `x̄ = (1/M) Σ x_m`.
    pub fn avg_x_variance(&self) -> f64 {
        self.sum_variance(0, 1.0 / self.mode_count() as f64)
    }

    /// `Var(Σ_m p_m)` in the Fock kernel's p convention.
    pub fn sum_p_variance_fock(&self) -> f64 {
        FOCK_P_SCALE * FOCK_P_SCALE * self.sum_variance(1, 1.0)
    }

    /// `1/√det(cov / VACUUM_VARIANCE)`.
    pub fn purity(&self) -> f64 {
        let scaled = &self.cov / VACUUM_VARIANCE;
        1.0 / scaled.determinant().sqrt()
    }

    /// Smallest eigenvalue of `cov + iΩ/4`; non-negative for physical states.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let n = self.mean.len();
        let omega = symplectic_form(n / 2);
        let h = DMatrix::from_fn(n, n, |r, c| {
            C64::new(self.cov[(r, c)], VACUUM_VARIANCE * omega[(r, c)])
        });
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("transmissivity must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// `Ω = ⊕ [[0, 1], [-1, 0]]`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for m in 0..modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

/// Heisenberg action of `exp(θ(a†b - ab†))`:
/// `q_a -> cos θ q_a + sin θ q_b`, `q_b -> cos θ q_b - sin θ q_a`.
pub fn beamsplitter_symplectic(theta: f64, a: usize, b: usize, modes: usize) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let mut m = DMatrix::identity(2 * modes, 2 * modes);
    for q in 0..2 {
        let (ia, ib) = (2 * a + q, 2 * b + q);
        m[(ia, ia)] = c;
        m[(ia, ib)] = s;
        m[(ib, ia)] = -s;
        m[(ib, ib)] = c;
    }
    m
}

/// Squeezed vacuum with mean photon number `n_s`: `cov = diag(e^{-2r}, e^{2r})/4`.
pub fn sv_gaussian(n_s: f64) -> Result<GaussianState> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return Err(domain(format!("mean photon number must be >= 0, got {n_s}")));
    }
    // e^{r} = √(N+1) + √N
    let er = (n_s + 1.0).sqrt() + n_s.sqrt();
    let mut cov = DMatrix::zeros(2, 2);
    cov[(0, 0)] = VACUUM_VARIANCE / (er * er);
    cov[(1, 1)] = VACUUM_VARIANCE * er * er;
    Ok(GaussianState {
        mean: DVector::zeros(2),
        cov,
    })
}

/// Identical pure loss `eta` on every mode.
pub fn loss_gaussian(state: &GaussianState, eta: f64) -> Result<GaussianState> {
    check_eta(eta)?;
    let n = state.mean.len();
    Ok(GaussianState {
        mean: &state.mean * eta.sqrt(),
        cov: &state.cov * eta + DMatrix::identity(n, n) * ((1.0 - eta) * VACUUM_VARIANCE),
    })
}

/// Pads `state` with vacuum to `m` modes and runs the balanced splitter.
pub fn splitter_gaussian(state: &GaussianState, m: usize) -> Result<GaussianState> {
    if m < 1 {
        return Err(domain("balanced splitter needs at least one mode"));
    }
    state.with_vacuum_modes(m)?.balanced_splitter()
}

/// Standard deviation of `x̄ = (1/M) Σ x_m`, the rms error of the unbiased
/// homodyne estimate.
pub fn avg_x_std(state: &GaussianState) -> f64 {
    state.avg_x_variance().sqrt()
}
