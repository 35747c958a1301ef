//! Positive-definite kernels and the Lipschitz constants they induce on
//! functions in their RKHS.
//!
//! The gradient-based constant `L_κ` is taken as the supremum over `x` of
//! `‖∂κ(x, x′)/∂x‖`, uniformly in the second argument `x′`. For a function
//! `f` with `‖f‖_κ ≤ B` this gives the Lipschitz constant
//! `L_f = √(2 L_κ) · B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A positive-definite kernel on `R^n`.
///
/// Implementors provide their own Lipschitz constant; there is no generic
/// fallback.
pub trait Kernel {
    fn input_dim(&self) -> usize;

    /// Evaluates `κ(x, x′)` without dimension checks.
    fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64;

    /// Gradient of `κ(x, x′)` with respect to `x`.
    fn gradient(&self, x: &[f64], x_prime: &[f64]) -> Vec<f64>;

    /// `sup_x ‖∂κ(x, x′)/∂x‖`, uniformly in `x′`.
    fn lipschitz(&self) -> f64;

    /// Upper bound on `κ(x, x)` over all `x`.
    fn max_variance(&self) -> f64;

    fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        check_dim("kernel input x", self.input_dim(), x.len())?;
        check_dim("kernel input x'", self.input_dim(), x_prime.len())?;
        Ok(self.eval_unchecked(x, x_prime))
    }
}

/// Squared-exponential kernel `σ_f² exp(−‖x − x′‖² / (2 l²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    sigma_f: f64,
    length_scale: f64,
    input_dim: usize,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    sigma_f: f64,
    length_scale: f64,
    input_dim: usize,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.sigma_f, raw.length_scale, raw.input_dim)
    }
}

impl KernelSpec {
    pub fn new(sigma_f: f64, length_scale: f64, input_dim: usize) -> Result<Self> {
        if !(sigma_f.is_finite() && sigma_f > 0.0) {
            return Err(Error::Input(format!("sigma_f must be positive, got {sigma_f}")));
        }
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(Error::Input(format!(
                "length_scale must be positive, got {length_scale}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::Input("input_dim must be at least 1".into()));
        }
        Ok(Self {
            sigma_f,
            length_scale,
            input_dim,
        })
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    fn squared_distance(x: &[f64], x_prime: &[f64]) -> f64 {
        x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl Kernel for KernelSpec {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        let r2 = Self::squared_distance(x, x_prime);
        let l2 = self.length_scale * self.length_scale;
        self.sigma_f * self.sigma_f * (-0.5 * r2 / l2).exp()
    }

    fn gradient(&self, x: &[f64], x_prime: &[f64]) -> Vec<f64> {
        let k = self.eval_unchecked(x, x_prime);
        let l2 = self.length_scale * self.length_scale;
        x.iter().zip(x_prime).map(|(a, b)| -k * (a - b) / l2).collect()
    }

    /// `‖∇κ‖ = σ_f² r/l² · exp(−r²/(2l²))`, maximized at `r = l`.
    fn lipschitz(&self) -> f64 {
        self.sigma_f * self.sigma_f / (self.length_scale * std::f64::consts::E.sqrt())
    }

    fn max_variance(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }
}

pub fn kernel_eval<K: Kernel>(kernel: &K, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    kernel.eval(x, x_prime)
}

/// `K[p][q] = κ(x⁽ᵖ⁾, x⁽q⁾)`.
pub fn gram_matrix<K: Kernel>(kernel: &K, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    for x in inputs {
        check_dim("gram matrix row", kernel.input_dim(), x.len())?;
    }
    let n = inputs.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for p in 0..n {
        k[(p, p)] = kernel.eval_unchecked(&inputs[p], &inputs[p]);
        for q in 0..p {
            let v = kernel.eval_unchecked(&inputs[p], &inputs[q]);
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
    }
    Ok(k)
}

/// `k(x) = [κ(x⁽¹⁾, x), …, κ(x⁽ᴺ⁾, x)]`.
pub fn kernel_vector<K: Kernel>(kernel: &K, inputs: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    inputs.iter().map(|xi| kernel.eval_unchecked(xi, x)).collect()
}

pub fn kernel_lipschitz<K: Kernel>(kernel: &K) -> f64 {
    kernel.lipschitz()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzInfo {
    pub kappa_lipschitz: f64,
    pub rkhs_bound: f64,
    pub f_lipschitz: f64,
}

impl LipschitzInfo {
    pub fn from_kappa(kappa_lipschitz: f64, rkhs_bound: f64) -> Result<Self> {
        if !(rkhs_bound >= 0.0) || !rkhs_bound.is_finite() {
            return Err(Error::Input(format!(
                "RKHS norm bound must be non-negative, got {rkhs_bound}"
            )));
        }
        if !(kappa_lipschitz >= 0.0) {
            return Err(Error::Input(format!(
                "kernel Lipschitz constant must be non-negative, got {kappa_lipschitz}"
            )));
        }
        Ok(Self {
            kappa_lipschitz,
            rkhs_bound,
            f_lipschitz: (2.0 * kappa_lipschitz).sqrt() * rkhs_bound,
        })
    }
}

pub fn f_lipschitz<K: Kernel>(kernel: &K, rkhs_bound: f64) -> Result<LipschitzInfo> {
    LipschitzInfo::from_kappa(kernel.lipschitz(), rkhs_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper() -> KernelSpec {
        KernelSpec::new(0.5, 5.0, 2).unwrap()
    }

    /// 1-D grid search of `σ_f² r/l² exp(−r²/(2l²))` over `r ∈ [0, 10 l]`.
    fn grid_lipschitz(sigma_f: f64, l: f64) -> f64 {
        let m = 200_000;
        (0..=m)
            .map(|i| {
                let r = 10.0 * l * i as f64 / m as f64;
                sigma_f * sigma_f * r / (l * l) * (-r * r / (2.0 * l * l)).exp()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn eval_examples() {
        let k = paper();
        assert_eq!(k.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.25);
        assert_relative_eq!(
            k.eval(&[0.0, 0.0], &[5.0, 0.0]).unwrap(),
            0.151_632_664_928_158_1,
            epsilon = 1e-12
        );
        let unit = KernelSpec::new(1.0, 1.0, 1).unwrap();
        assert_eq!(unit.eval(&[1.0], &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        assert!(matches!(
            paper().eval(&[0.0], &[0.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn degenerate_hyperparameters_rejected() {
        assert!(KernelSpec::new(0.0, 1.0, 1).is_err());
        assert!(KernelSpec::new(1.0, 0.0, 1).is_err());
        assert!(KernelSpec::new(1.0, 1.0, 0).is_err());
        assert!(KernelSpec::new(f64::NAN, 1.0, 1).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"sigma_f":1.0,"length_scale":-1.0,"input_dim":1}"#).is_err());
    }

    #[test]
    fn gram_single_and_duplicate() {
        let k = paper();
        let g = gram_matrix(&k, &[vec![1.0, 2.0]]).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], 0.25);

        let g = gram_matrix(&k, &[vec![1.0, 2.0], vec![-3.0, 0.5], vec![1.0, 2.0]]).unwrap();
        for j in 0..3 {
            assert_eq!(g[(0, j)], g[(2, j)]);
        }
        let smallest = crate::linalg::symmetric_eigenvalues(&g)[0];
        assert!(smallest.abs() < 1e-12);
    }

    #[test]
    fn gram_matches_elementwise_loop() {
        let k = paper();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![rng.random_range(-10.0..10.0), rng.random_range(-5.0..5.0)])
            .collect();
        let g = gram_matrix(&k, &xs).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let d2 = (xs[p][0] - xs[q][0]).powi(2) + (xs[p][1] - xs[q][1]).powi(2);
                let oracle = 0.25 * (-d2 / 50.0).exp();
                assert_relative_eq!(g[(p, q)], oracle, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn lipschitz_matches_grid_oracle() {
        let k = paper();
        assert_relative_eq!(k.lipschitz(), 0.030_326_532_985_631_67, epsilon = 1e-12);
        assert_relative_eq!(k.lipschitz(), grid_lipschitz(0.5, 5.0), epsilon = 1e-9);
        let unit = KernelSpec::new(1.0, 1.0, 3).unwrap();
        assert_relative_eq!(unit.lipschitz(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(unit.lipschitz(), grid_lipschitz(1.0, 1.0), epsilon = 1e-9);
        let doubled = KernelSpec::new(1.0, 5.0, 2).unwrap();
        assert_relative_eq!(doubled.lipschitz(), 4.0 * k.lipschitz(), epsilon = 1e-15);
    }

    #[test]
    fn f_lipschitz_examples() {
        let info = f_lipschitz(&paper(), 0.3).unwrap();
        assert_relative_eq!(info.f_lipschitz, 0.073_883_529_540_850_3, epsilon = 1e-12);
        assert_relative_eq!(
            info.f_lipschitz,
            (2.0 * info.kappa_lipschitz).sqrt() * 0.3,
            epsilon = 0.0
        );
        assert_eq!(f_lipschitz(&paper(), 0.0).unwrap().f_lipschitz, 0.0);
        assert_eq!(LipschitzInfo::from_kappa(0.5, 1.0).unwrap().f_lipschitz, 1.0);
        assert!(f_lipschitz(&paper(), -1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let k = KernelSpec::new(0.7, 1.3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = k.gradient(&x, &z);
            let h = 1e-6;
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (k.eval_unchecked(&xp, &z) - k.eval_unchecked(&xm, &z)) / (2.0 * h);
                let scale = g[i].abs().max(1e-3);
                assert!((fd - g[i]).abs() / scale < 1e-6, "fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn lipschitz_certificate_holds_on_random_pairs() {
        let k = KernelSpec::new(0.5, 5.0, 2).unwrap();
        let lk = k.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw = |r: &mut ChaCha8Rng| -> Vec<f64> { vec![r.random_range(-12.0..12.0), r.random_range(-6.0..6.0)] };
        for _ in 0..10_000 {
            let x = draw(&mut rng);
            let xp = draw(&mut rng);
            let z = draw(&mut rng);
            let d = ((x[0] - xp[0]).powi(2) + (x[1] - xp[1]).powi(2)).sqrt();
            let diff = (k.eval_unchecked(&x, &z) - k.eval_unchecked(&xp, &z)).abs();
            assert!(diff <= lk * d + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            a in prop::collection::vec(-20.0f64..20.0, 3),
            b in prop::collection::vec(-20.0f64..20.0, 3),
            sigma in 0.1f64..3.0,
            l in 0.2f64..10.0,
        ) {
            let k = KernelSpec::new(sigma, l, 3).unwrap();
            let ab = k.eval(&a, &b).unwrap();
            prop_assert_eq!(ab, k.eval(&b, &a).unwrap());
            prop_assert!(ab <= sigma * sigma);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(k.eval(&a, &a).unwrap(), sigma * sigma);
        }

        #[test]
        fn gram_is_psd(seed in any::<u64>(), n in 1usize..50) {
            let k = KernelSpec::new(0.5, 5.0, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-12.0..12.0), rng.random_range(-6.0..6.0)])
                .collect();
            let g = gram_matrix(&k, &xs).unwrap();
            let ev = crate::linalg::symmetric_eigenvalues(&g);
            prop_assert!(ev[0] >= -1e-10);
        }
    }
}
