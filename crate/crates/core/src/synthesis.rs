//! Gain synthesis and the Lyapunov stability certificate.
//!
//! Controller and observer gains come from Ackermann's formula on the
//! integrator chain `(A, b, c)`. The concatenated error matrix
//!
//! ```text
//! Ã = [A + bφᵀ   bφᵀ     ]
//!     [0         A + θcᵀ ]
//! ```
//!
//! is block upper-triangular, so its spectrum is the union of the two placed
//! spectra. The certificate solves `ÃᵀPÃ − P = −Q` and evaluates the
//! ultimate-bound constants; matrix norms are spectral norms throughout.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::Kernel;
use crate::krr::KrrModel;
use crate::linalg::{
    complex_eigenvalues, max_abs, multiset_distance, spectral_norm, spectral_radius, symmetric_eigenvalues,
};
use crate::plant::BoxSet;

/// Largest concatenated dimension the Kronecker Lyapunov solver accepts.
pub const MAX_LYAPUNOV_DIM: usize = 20;

/// Tolerance used to decide that two poles are complex conjugates.
const CONJUGATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

/// `A` has unit diagonal except `A[n][n] = 0` and superdiagonal `T`;
/// `b = eₙ`, `c = e₁`.
pub fn build_matrices(order: usize, step: f64) -> Result<SystemMatrices> {
    if order == 0 {
        return Err(Error::Input("order must be at least 1".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Input(format!("step must be positive, got {step}")));
    }
    let a = DMatrix::from_fn(order, order, |i, j| {
        if i == j && i + 1 < order {
            1.0
        } else if j == i + 1 {
            step
        } else {
            0.0
        }
    });
    let mut b = DVector::zeros(order);
    b[order - 1] = 1.0;
    let mut c = DVector::zeros(order);
    c[0] = 1.0;
    Ok(SystemMatrices { a, b, c })
}

/// `[b, Ab, …, A^{n−1}b]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        m.set_column(j, &col);
        col = a * col;
    }
    m
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    if top == 0.0 {
        return 0;
    }
    let tol = top * m.nrows().max(m.ncols()) as f64 * f64::EPSILON * 16.0;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn is_controllable(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
    numerical_rank(&controllability_matrix(a, b)) == a.nrows()
}

pub fn is_observable(a: &DMatrix<f64>, c: &DVector<f64>) -> bool {
    is_controllable(&a.transpose(), c)
}

/// Monic characteristic polynomial coefficients, highest degree first,
/// from a conjugate-closed pole multiset.
pub fn characteristic_polynomial(poles: &[Complex64]) -> Result<Vec<f64>> {
    check_conjugate_closed(poles)?;
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &p in poles {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * p;
        }
        coeffs = next;
    }
    Ok(coeffs.iter().map(|c| c.re).collect())
}

fn check_conjugate_closed(poles: &[Complex64]) -> Result<()> {
    let mut used = vec![false; poles.len()];
    for i in 0..poles.len() {
        if used[i] {
            continue;
        }
        let p = poles[i];
        if p.im.abs() <= CONJUGATE_TOL {
            used[i] = true;
            continue;
        }
        let partner = (0..poles.len()).find(|&j| j != i && !used[j] && (poles[j] - p.conj()).norm() <= CONJUGATE_TOL);
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return Err(Error::Synthesis(format!("pole {p} has no complex-conjugate partner"))),
        }
    }
    Ok(())
}

/// `p(A) = Aⁿ + c_{n−1}A^{n−1} + … + c₀I` by Horner's scheme.
fn polynomial_of_matrix(coeffs: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for &c in coeffs {
        acc = &acc * a + DMatrix::<f64>::identity(n, n) * c;
    }
    acc
}

/// Ackermann's formula: `φ` such that `spectrum(A + bφᵀ) = poles`.
pub fn place_controller(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[Complex64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    check_dim("system matrix (square)", n, a.ncols())?;
    check_dim("input vector", n, b.len())?;
    check_dim("pole count", n, poles.len())?;
    if let Some(p) = poles.iter().find(|p| p.norm() >= 1.0) {
        warn!("requested pole {p} is not strictly inside the unit circle");
    }
    let ctrb = controllability_matrix(a, b);
    if numerical_rank(&ctrb) < n {
        return Err(Error::Synthesis("pair (A, b) is not controllable".into()));
    }
    let coeffs = characteristic_polynomial(poles)?;
    let p_of_a = polynomial_of_matrix(&coeffs, a);
    // Row eₙᵀ C⁻¹, obtained by solving Cᵀ w = eₙ.
    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = 1.0;
    let w = ctrb
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or_else(|| Error::Synthesis("singular controllability matrix".into()))?;
    let k = p_of_a.transpose() * w;
    Ok(-k)
}

/// `θ` such that `spectrum(A + θcᵀ) = poles` (Ackermann on `(Aᵀ, c)`).
pub fn place_observer(a: &DMatrix<f64>, c: &DVector<f64>, poles: &[Complex64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    check_dim("output vector", n, c.len())?;
    let ctrb = controllability_matrix(&a.transpose(), c);
    if numerical_rank(&ctrb) < n {
        return Err(Error::Synthesis("pair (A, cᵀ) is not observable".into()));
    }
    place_controller(&a.transpose(), c, poles)
}

/// Returns `(Ã, b̃, θ̃)` with `b̃ = (b; −b)` and `θ̃ = (0; θ)`.
pub fn assemble_concatenated(
    sys: &SystemMatrices,
    phi: &DVector<f64>,
    theta: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = sys.a.nrows();
    let b_phi = &sys.b * phi.transpose();
    let closed = &sys.a + &b_phi;
    let observer = &sys.a + theta * sys.c.transpose();
    let mut a_tilde = DMatrix::zeros(2 * n, 2 * n);
    a_tilde.view_mut((0, 0), (n, n)).copy_from(&closed);
    a_tilde.view_mut((0, n), (n, n)).copy_from(&b_phi);
    a_tilde.view_mut((n, n), (n, n)).copy_from(&observer);
    let mut b_tilde = DVector::zeros(2 * n);
    b_tilde.rows_mut(0, n).copy_from(&sys.b);
    b_tilde.rows_mut(n, n).copy_from(&(-&sys.b));
    let mut theta_tilde = DVector::zeros(2 * n);
    theta_tilde.rows_mut(n, n).copy_from(theta);
    (a_tilde, b_tilde, theta_tilde)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub system: SystemMatrices,
    pub phi: DVector<f64>,
    pub theta: DVector<f64>,
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DVector<f64>,
    pub theta_tilde: DVector<f64>,
    pub controller_poles: Vec<Complex64>,
    pub observer_poles: Vec<Complex64>,
}

/// Distances between requested and realized spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleErrors {
    pub controller: f64,
    pub observer: f64,
    pub concatenated: f64,
}

impl GainSet {
    pub fn synthesize(
        order: usize,
        step: f64,
        controller_poles: &[Complex64],
        observer_poles: &[Complex64],
    ) -> Result<Self> {
        let system = build_matrices(order, step)?;
        let phi = place_controller(&system.a, &system.b, controller_poles)?;
        let theta = place_observer(&system.a, &system.c, observer_poles)?;
        Ok(Self::from_gains(system, phi, theta, controller_poles, observer_poles))
    }

    pub fn from_gains(
        system: SystemMatrices,
        phi: DVector<f64>,
        theta: DVector<f64>,
        controller_poles: &[Complex64],
        observer_poles: &[Complex64],
    ) -> Self {
        let (a_tilde, b_tilde, theta_tilde) = assemble_concatenated(&system, &phi, &theta);
        Self {
            system,
            phi,
            theta,
            a_tilde,
            b_tilde,
            theta_tilde,
            controller_poles: controller_poles.to_vec(),
            observer_poles: observer_poles.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.system.a.nrows()
    }

    /// `A + bφᵀ`.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.system.a + &self.system.b * self.phi.transpose()
    }

    /// `A + θcᵀ`.
    pub fn observer_matrix(&self) -> DMatrix<f64> {
        &self.system.a + &self.theta * self.system.c.transpose()
    }

    pub fn pole_errors(&self) -> PoleErrors {
        let mut union = self.controller_poles.clone();
        union.extend_from_slice(&self.observer_poles);
        PoleErrors {
            controller: multiset_distance(&complex_eigenvalues(&self.closed_loop()), &self.controller_poles),
            observer: multiset_distance(&complex_eigenvalues(&self.observer_matrix()), &self.observer_poles),
            concatenated: multiset_distance(&complex_eigenvalues(&self.a_tilde), &union),
        }
    }

    pub fn is_schur(&self) -> bool {
        spectral_radius(&self.a_tilde) < 1.0
    }
}

/// Unique `P` with `ÃᵀPÃ − P = −Q`, via `(I − Ãᵀ ⊗ Ãᵀ) vec(P) = vec(Q)`.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    check_dim("Lyapunov matrix (square)", m, a.ncols())?;
    check_dim("Q rows", m, q.nrows())?;
    check_dim("Q cols", m, q.ncols())?;
    if m > MAX_LYAPUNOV_DIM {
        return Err(Error::Input(format!(
            "Kronecker Lyapunov solver limited to dimension {MAX_LYAPUNOV_DIM}, got {m}"
        )));
    }
    let q_scale = max_abs(q).max(1.0);
    if max_abs(&(q - q.transpose())) > 1e-12 * q_scale {
        return Err(Error::Input("Q must be symmetric".into()));
    }
    if symmetric_eigenvalues(q).first().is_none_or(|&l| l <= 0.0) {
        return Err(Error::Input("Q must be positive definite".into()));
    }
    let rho = spectral_radius(a);
    if !(rho < 1.0) {
        return Err(Error::Infeasible(format!(
            "matrix is not Schur stable (spectral radius {rho})"
        )));
    }

    let at = a.transpose();
    let system = DMatrix::<f64>::identity(m * m, m * m) - at.kronecker(&at);
    let lu = system.lu();
    let rhs = DVector::from_column_slice(q.as_slice());
    let mut vec_p = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system".into()))?;
    // One step of iterative refinement.
    let residual = &rhs - vectorized_operator(a, &vec_p, m);
    if let Some(delta) = lu.solve(&residual) {
        vec_p += delta;
    }
    let p = DMatrix::from_column_slice(m, m, vec_p.as_slice());

    let p_scale = max_abs(&p).max(1.0);
    let asymmetry = max_abs(&(&p - p.transpose()));
    if asymmetry > 1e-10 * p_scale {
        return Err(Error::Numerical(format!(
            "Lyapunov solution asymmetric by {asymmetry:e}"
        )));
    }
    let p = (&p + p.transpose()) * 0.5;
    let res = lyapunov_residual(a, &p, q);
    if res > 1e-9 * q_scale {
        return Err(Error::Numerical(format!("Lyapunov residual {res:e} exceeds 1e-9")));
    }
    if symmetric_eigenvalues(&p).first().is_none_or(|&l| l <= 0.0) {
        return Err(Error::Numerical("Lyapunov solution is not positive definite".into()));
    }
    Ok(p)
}

fn vectorized_operator(a: &DMatrix<f64>, vec_p: &DVector<f64>, m: usize) -> DVector<f64> {
    let p = DMatrix::from_column_slice(m, m, vec_p.as_slice());
    let out = &p - a.transpose() * &p * a;
    DVector::from_column_slice(out.as_slice())
}

/// `‖ÃᵀPÃ − P + Q‖_max`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    max_abs(&(a.transpose() * p * a - p + q))
}

/// Inputs of the ultimate-bound certificate besides the gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub f_lipschitz: f64,
    pub beta: f64,
    pub v_bar: f64,
    pub p_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub inputs: CertificateInputs,
    /// Row-major.
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub lyapunov_residual: f64,
    pub lambda_min_q: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub norm_at_p: f64,
    pub norm_theta: f64,
    pub xi0: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// `ξ₀⁻¹(ξ₁ + √(ξ₁² + ξ₀ξ₂))`, the form the bound is derived with.
    pub xi: Option<f64>,
    /// `ξ₀⁻¹ξ₁ + √(1 + ξ₀⁻¹ξ₂)`.
    pub xi_statement: Option<f64>,
    pub chi: f64,
    pub tracking_bound: Option<f64>,
    pub observation_bound: Option<f64>,
    /// Bound evaluated with the larger of the two `ξ` forms.
    pub conservative_bound: Option<f64>,
    pub feasible: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Evaluates the ultimate-bound constants. An infeasible certificate
/// (`ξ₀ ≤ 0`) is returned with `feasible = false` and no bounds.
pub fn certificate(gains: &GainSet, q: &DMatrix<f64>, inputs: CertificateInputs) -> Result<StabilityCertificate> {
    let CertificateInputs {
        f_lipschitz: lf,
        beta,
        v_bar,
        p_bar,
    } = inputs;
    for (name, v) in [("L_f", lf), ("beta", beta), ("v_bar", v_bar), ("P_bar", p_bar)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Input(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let a = &gains.a_tilde;
    let p = solve_discrete_lyapunov(a, q)?;
    let residual = lyapunov_residual(a, &p, q);
    let q_eigs = symmetric_eigenvalues(q);
    let p_eigs = symmetric_eigenvalues(&p);
    let lambda_min_q = q_eigs[0];
    let lambda_min_p = p_eigs[0];
    let lambda_max_p = *p_eigs.last().expect("non-empty spectrum");
    let norm_at_p = spectral_norm(&(a.transpose() * &p));
    let norm_p = lambda_max_p;
    let norm_theta = gains.theta.norm();
    let sqrt2 = std::f64::consts::SQRT_2;

    let xi0 = lambda_min_q - 2.0 * sqrt2 * lf * norm_at_p - 2.0 * lf * lf * norm_p;
    let xi1 = norm_at_p + 2.0 * beta * lf * norm_p * p_bar + sqrt2 * lf * norm_p * norm_theta * v_bar;
    let xi2 = norm_p;
    let chi = (lambda_max_p / lambda_min_p).sqrt();
    let feasible = xi0 > 0.0;
    let perturbation = sqrt2 * beta * p_bar + norm_theta * v_bar;

    let (xi, xi_statement, bound, conservative) = if feasible {
        let xi = (xi1 + (xi1 * xi1 + xi0 * xi2).sqrt()) / xi0;
        let xs = xi1 / xi0 + (1.0 + xi2 / xi0).sqrt();
        (
            Some(xi),
            Some(xs),
            Some(chi * xi * perturbation),
            Some(chi * xi.max(xs) * perturbation),
        )
    } else {
        warn!("certificate infeasible: xi0 = {xi0:.6} <= 0");
        (None, None, None, None)
    };

    Ok(StabilityCertificate {
        inputs,
        p: rows(&p),
        q: rows(q),
        lyapunov_residual: residual,
        lambda_min_q,
        lambda_min_p,
        lambda_max_p,
        norm_at_p,
        norm_theta,
        xi0,
        xi1,
        xi2,
        xi,
        xi_statement,
        chi,
        tracking_bound: bound,
        observation_bound: bound,
        conservative_bound: conservative,
        feasible,
    })
}

impl StabilityCertificate {
    pub fn p_matrix(&self) -> DMatrix<f64> {
        let n = self.p.len();
        DMatrix::from_fn(n, n, |i, j| self.p[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSup {
    /// Maximum of `P(x)` over the tensor grid.
    pub grid_max: f64,
    /// `sup_x √κ(x, x)`, which no power value can exceed.
    pub ceiling: f64,
    pub grid_per_dim: usize,
    /// Value used as `P̄` (grid maximum, inflation factor 1).
    pub p_bar: f64,
}

/// `P̄ ≈ sup_{x∈X} P(x)` by exhaustive evaluation on a tensor grid.
pub fn power_sup<K: Kernel + Clone>(model: &KrrModel<K>, domain: &BoxSet, grid_per_dim: usize) -> Result<PowerSup> {
    if grid_per_dim < 2 {
        return Err(Error::Input("grid_per_dim must be at least 2".into()));
    }
    check_dim("power grid domain", model.kernel().input_dim(), domain.dim())?;
    let mut grid_max: f64 = 0.0;
    for x in domain.grid(grid_per_dim) {
        grid_max = grid_max.max(model.power(&x)?);
    }
    Ok(PowerSup {
        grid_max,
        ceiling: model.kernel().max_variance().sqrt(),
        grid_per_dim,
        p_bar: grid_max,
    })
}
