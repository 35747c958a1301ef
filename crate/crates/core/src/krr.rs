//! Kernel ridge regression with a deterministic prediction-error bound.
//!
//! The regularized Gram matrix `K + N w̄² I` is factorized once at fit time;
//! both the representer coefficients `α*` and every power-function query go
//! through that factor. No inverse is formed.
//!
//! A model fitted on zero samples is valid: it predicts `μ ≡ 0`, has
//! `P(x) = √κ(x, x)` and `β = √(B² + 1)`.

use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{gram_matrix, kernel_vector, Kernel, KernelSpec};
use crate::linalg::Cholesky;

/// Slack below zero tolerated in the power-function radicand before it is
/// treated as a numerical inconsistency.
pub const POWER_RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    input_dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    noise_bound: f64,
}

impl Dataset {
    pub fn new(input_dim: usize, inputs: Vec<Vec<f64>>, targets: Vec<f64>, noise_bound: f64) -> Result<Self> {
        check_dim("dataset targets", inputs.len(), targets.len())?;
        for row in &inputs {
            check_dim("dataset input row", input_dim, row.len())?;
        }
        if !(noise_bound >= 0.0) || !noise_bound.is_finite() {
            return Err(Error::Input(format!(
                "noise bound must be non-negative, got {noise_bound}"
            )));
        }
        Ok(Self {
            input_dim,
            inputs,
            targets,
            noise_bound,
        })
    }

    pub fn empty(input_dim: usize, noise_bound: f64) -> Result<Self> {
        Self::new(input_dim, Vec::new(), Vec::new(), noise_bound)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    /// Appends another dataset's pairs; the noise bound becomes the larger
    /// of the two.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        check_dim("dataset concatenation", self.input_dim, other.input_dim)?;
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.noise_bound = self.noise_bound.max(other.noise_bound);
        Ok(())
    }

    pub fn truncate(&mut self, len: usize) {
        self.inputs.truncate(len);
        self.targets.truncate(len);
    }

    pub fn regularizer(&self) -> f64 {
        self.len() as f64 * self.noise_bound * self.noise_bound
    }
}

#[derive(Debug, Clone)]
pub struct KrrModel<K = KernelSpec> {
    kernel: K,
    dataset: Dataset,
    alpha: Vec<f64>,
    factor: Option<Cholesky>,
    quadratic_form: f64,
    beta: f64,
    beta_clamped: bool,
    rkhs_bound: f64,
}

pub fn fit<K: Kernel + Clone>(kernel: &K, data: &Dataset, rkhs_bound: f64) -> Result<KrrModel<K>> {
    KrrModel::fit(kernel, data, rkhs_bound)
}

impl<K: Kernel + Clone> KrrModel<K> {
    pub fn fit(kernel: &K, data: &Dataset, rkhs_bound: f64) -> Result<Self> {
        check_dim("dataset input dimension", kernel.input_dim(), data.input_dim())?;
        if !(rkhs_bound > 0.0) || !rkhs_bound.is_finite() {
            return Err(Error::Input(format!(
                "RKHS norm bound must be positive, got {rkhs_bound}"
            )));
        }
        let b2 = rkhs_bound * rkhs_bound;
        if data.is_empty() {
            warn!("fitting on an empty dataset: prediction is identically zero");
            return Ok(Self {
                kernel: kernel.clone(),
                dataset: data.clone(),
                alpha: Vec::new(),
                factor: None,
                quadratic_form: 0.0,
                beta: (b2 + 1.0).sqrt(),
                beta_clamped: false,
                rkhs_bound,
            });
        }
        if !(data.noise_bound() > 0.0) {
            return Err(Error::Input(
                "noise bound must be positive to fit a non-empty dataset".into(),
            ));
        }

        let mut regularized = gram_matrix(kernel, data.inputs())?;
        let lambda = data.regularizer();
        for i in 0..data.len() {
            regularized[(i, i)] += lambda;
        }
        let factor = Cholesky::factor(&regularized)?;
        let alpha = factor.solve(data.targets());
        let quadratic_form: f64 = data.targets().iter().zip(&alpha).map(|(z, a)| z * a).sum();

        let radicand = b2 - quadratic_form + 1.0;
        let (beta, beta_clamped) = if radicand < 0.0 {
            warn!(
                "beta radicand {radicand:.6} is negative; the RKHS bound B = {rkhs_bound} is \
                 inconsistent with the data, clamping beta to 0"
            );
            (0.0, true)
        } else {
            (radicand.sqrt(), false)
        };

        Ok(Self {
            kernel: kernel.clone(),
            dataset: data.clone(),
            alpha,
            factor: Some(factor),
            quadratic_form,
            beta,
            beta_clamped,
            rkhs_bound,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn rkhs_bound(&self) -> f64 {
        self.rkhs_bound
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// `μ(x) = k(x)ᵀ α*`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim("prediction input", self.kernel.input_dim(), x.len())?;
        Ok(self
            .dataset
            .inputs()
            .iter()
            .zip(&self.alpha)
            .map(|(xi, a)| a * self.kernel.eval_unchecked(xi, x))
            .sum())
    }

    /// `P²(x) = κ(x, x) − k(x)ᵀ (K + N w̄² I)⁻¹ k(x)`, unclamped.
    pub fn power_squared(&self, x: &[f64]) -> Result<f64> {
        check_dim("power-function input", self.kernel.input_dim(), x.len())?;
        let prior = self.kernel.eval_unchecked(x, x);
        Ok(match &self.factor {
            None => prior,
            Some(factor) => {
                let k = kernel_vector(&self.kernel, self.dataset.inputs(), x);
                prior - factor.inverse_quadratic_form(&k)
            }
        })
    }

    pub fn power(&self, x: &[f64]) -> Result<f64> {
        let p2 = self.power_squared(x)?;
        if p2 < -POWER_RADICAND_SLACK {
            return Err(Error::Numerical(format!(
                "power-function radicand {p2:e} below tolerance at {x:?}"
            )));
        }
        Ok(p2.max(0.0).sqrt())
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_clamped(&self) -> bool {
        self.beta_clamped
    }

    /// `zᵀ (K + N w̄² I)⁻¹ z`.
    pub fn quadratic_form(&self) -> f64 {
        self.quadratic_form
    }

    /// `√(B² + 1)`, valid for any dataset.
    pub fn data_independent_beta(&self) -> f64 {
        (self.rkhs_bound * self.rkhs_bound + 1.0).sqrt()
    }

    /// `β · P(x)`, the bound on `|μ(x) − f(x)|`.
    pub fn error_envelope(&self, x: &[f64]) -> Result<f64> {
        Ok(self.beta * self.power(x)?)
    }

    /// `‖(K + N w̄² I) α − z‖_∞`.
    pub fn fit_residual(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let Ok(mut m) = gram_matrix(&self.kernel, self.dataset.inputs()) else {
            return f64::NAN;
        };
        let lambda = self.dataset.regularizer();
        for i in 0..self.len() {
            m[(i, i)] += lambda;
        }
        let alpha = nalgebra::DVector::from_column_slice(&self.alpha);
        let z = nalgebra::DVector::from_column_slice(self.dataset.targets());
        (m * alpha - z).amax()
    }

    pub fn regularized_gram(&self) -> Result<DMatrix<f64>> {
        let mut m = gram_matrix(&self.kernel, self.dataset.inputs())?;
        let lambda = self.dataset.regularizer();
        for i in 0..self.len() {
            m[(i, i)] += lambda;
        }
        Ok(m)
    }
}

/// On-disk form of a fitted squared-exponential model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kernel: KernelSpec,
    pub rkhs_bound: f64,
    pub noise_bound: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub beta_clamped: bool,
}

impl KrrModel<KernelSpec> {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            kernel: self.kernel,
            rkhs_bound: self.rkhs_bound,
            noise_bound: self.dataset.noise_bound(),
            inputs: self.dataset.inputs().to_vec(),
            targets: self.dataset.targets().to_vec(),
            alpha: self.alpha.clone(),
            beta: self.beta,
            beta_clamped: self.beta_clamped,
        }
    }

    /// Refits from the stored data and checks the coefficients agree with the
    /// stored `α*`.
    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let data = Dataset::new(
            doc.kernel.input_dim(),
            doc.inputs.clone(),
            doc.targets.clone(),
            doc.noise_bound,
        )?;
        let model = Self::fit(&doc.kernel, &data, doc.rkhs_bound)?;
        check_dim("stored alpha", model.alpha.len(), doc.alpha.len())?;
        let scale = doc.alpha.iter().fold(1.0_f64, |m, a| m.max(a.abs()));
        let drift = model
            .alpha
            .iter()
            .zip(&doc.alpha)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if drift > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "stored coefficients differ from refit by {drift:e}"
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_kernel() -> KernelSpec {
        KernelSpec::new(0.5, 5.0, 2).unwrap()
    }

    fn single_point() -> KrrModel {
        let data = Dataset::new(2, vec![vec![0.0, 0.0]], vec![1.0], 0.1).unwrap();
        KrrModel::fit(&paper_kernel(), &data, 0.3).unwrap()
    }

    /// Dense Gaussian elimination with partial pivoting, independent of the
    /// Cholesky path.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in (col + 1)..n {
                let f = a[row][col] / a[col][col];
                let pivot = a[col].clone();
                for (dst, src) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                    *dst -= f * src;
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn single_point_closed_form() {
        let m = single_point();
        assert_relative_eq!(m.alpha()[0], 1.0 / 0.26, epsilon = 1e-12);
        assert_relative_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0.25 / 0.26, epsilon = 1e-12);
        assert_relative_eq!(
            m.predict(&[0.0, 0.0]).unwrap(),
            0.961_538_461_538_461_5,
            epsilon = 1e-12
        );
        let p2: f64 = 0.25 * 0.01 / 0.26;
        assert_relative_eq!(m.power(&[0.0, 0.0]).unwrap(), p2.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(m.power(&[0.0, 0.0]).unwrap(), 0.098_058_067_569_092, epsilon = 1e-12);
    }

    #[test]
    fn single_point_beta_is_clamped() {
        let m = single_point();
        assert!(m.beta_clamped());
        assert_eq!(m.beta(), 0.0);
        assert_eq!(m.error_envelope(&[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn far_field_decay() {
        let m = single_point();
        let far = [500.0, -300.0];
        assert!(m.predict(&far).unwrap().abs() < 1e-300);
        assert_relative_eq!(m.power(&far).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn empty_model_convention() {
        let data = Dataset::empty(2, 0.0).unwrap();
        let m = KrrModel::fit(&paper_kernel(), &data, 0.3).unwrap();
        assert_eq!(m.predict(&[3.0, -1.0]).unwrap(), 0.0);
        assert_eq!(m.power(&[3.0, -1.0]).unwrap(), 0.5);
        assert_relative_eq!(m.beta(), 1.044_030_650_891_055, epsilon = 1e-12);
        assert_eq!(m.beta(), m.data_independent_beta());
    }

    #[test]
    fn zero_targets_give_data_independent_beta() {
        let data = Dataset::new(
            2,
            vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-4.0, 0.5]],
            vec![0.0; 3],
            0.05,
        )
        .unwrap();
        let m = KrrModel::fit(&paper_kernel(), &data, 0.3).unwrap();
        assert_eq!(m.beta(), (0.09f64 + 1.0).sqrt());
        assert!(!m.beta_clamped());
    }

    #[test]
    fn fit_preconditions() {
        let k = paper_kernel();
        let data = Dataset::new(2, vec![vec![0.0, 0.0]], vec![1.0], 0.0).unwrap();
        assert!(matches!(KrrModel::fit(&k, &data, 0.3), Err(Error::Input(_))));
        let data = Dataset::new(2, vec![vec![0.0, 0.0]], vec![1.0], 0.1).unwrap();
        assert!(KrrModel::fit(&k, &data, 0.0).is_err());
        let wrong = Dataset::new(3, vec![vec![0.0; 3]], vec![1.0], 0.1).unwrap();
        assert!(matches!(KrrModel::fit(&k, &wrong, 0.3), Err(Error::Dimension { .. })));
        assert!(Dataset::new(2, vec![vec![0.0, 0.0]], vec![1.0, 2.0], 0.1).is_err());
        assert!(Dataset::new(2, vec![], vec![], -0.1).is_err());
    }

    #[test]
    fn matches_gaussian_elimination_oracle() {
        let k = paper_kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=10 {
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-12.0..12.0), rng.random_range(-6.0..6.0)])
                .collect();
            let zs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = 0.05;
            let data = Dataset::new(2, xs.clone(), zs.clone(), w).unwrap();
            let m = KrrModel::fit(&k, &data, 0.3).unwrap();

            let mut a = vec![vec![0.0; n]; n];
            for p in 0..n {
                for q in 0..n {
                    let d2 = (xs[p][0] - xs[q][0]).powi(2) + (xs[p][1] - xs[q][1]).powi(2);
                    a[p][q] = 0.25 * (-0.5 * d2 / 25.0).exp();
                }
                a[p][p] += n as f64 * w * w;
            }
            let oracle = gauss_solve(a, zs);
            for (x, y) in m.alpha().iter().zip(&oracle) {
                assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
            }
            assert!(m.fit_residual() <= 1e-8);
        }
    }

    #[test]
    fn power_invariants_on_random_queries() {
        let k = paper_kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-12.0..12.0), rng.random_range(-6.0..6.0)])
            .collect();
        let zs: Vec<f64> = (0..40).map(|_| rng.random_range(-0.5..0.5)).collect();
        let m = KrrModel::fit(&k, &Dataset::new(2, xs, zs, 0.02).unwrap(), 0.3).unwrap();
        for _ in 0..2000 {
            let x = [rng.random_range(-15.0..15.0), rng.random_range(-8.0..8.0)];
            let p2 = m.power_squared(&x).unwrap();
            assert!(p2 >= -1e-12);
            let p = m.power(&x).unwrap();
            assert!(p <= 0.5 + 1e-12);
            let env = m.error_envelope(&x).unwrap();
            assert!(env >= 0.0 && env <= m.beta() * 0.5 + 1e-12);
        }
        assert!(m.beta() <= m.data_independent_beta());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let k = paper_kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.random_range(-12.0..12.0), rng.random_range(-6.0..6.0)])
            .collect();
        let zs: Vec<f64> = (0..12).map(|_| rng.random_range(-0.5..0.5)).collect();
        let m = KrrModel::fit(&k, &Dataset::new(2, xs, zs, 0.1).unwrap(), 0.3).unwrap();
        let s = m.to_json().unwrap();
        let back = KrrModel::from_json(&s).unwrap();
        assert_eq!(back.alpha(), m.alpha());
        assert_eq!(back.to_json().unwrap(), s);

        let mut doc = m.to_document();
        doc.alpha[0] += 1.0;
        assert!(matches!(KrrModel::from_document(&doc), Err(Error::Numerical(_))));
    }
}
