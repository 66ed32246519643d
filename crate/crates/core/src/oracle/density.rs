//! Densities with analytic first and second derivatives.

use nalgebra::{DMatrix, DVector};

use super::hermite::hermite_polynomials;
use super::OracleError;
use crate::basis::CoeffVector;
use crate::moments::{extract_moments, GaussianMixtureSpec};

/// A density `f` on `ℝ^d` whose value, gradient and Hessian can be evaluated
/// pointwise.
pub trait Density: Sync {
    fn dimension(&self) -> usize;

    /// Returns `f(v)`, writing `∇f(v)` into `grad` and the row-major Hessian
    /// into `hess`.
    fn jet(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64;

    /// `∫ f v vᵀ`.
    fn second_moments(&self) -> DMatrix<f64>;

    fn value(&self, v: &[f64]) -> f64 {
        let d = self.dimension();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.jet(v, &mut g, &mut h)
    }
}

#[derive(Clone, Debug)]
struct Component {
    weight: f64,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    normalizer: f64,
}

/// Gaussian mixture with cached precisions and normalizers.
#[derive(Clone, Debug)]
pub struct MixtureDensity {
    dimension: usize,
    components: Vec<Component>,
    second: DMatrix<f64>,
}

impl MixtureDensity {
    pub fn new(spec: &GaussianMixtureSpec) -> Result<Self, OracleError> {
        spec.validate()?;
        let d = spec.dimension();
        let components = spec
            .components
            .iter()
            .map(|c| {
                let cov = c.covariance_matrix();
                let chol = cov.clone().cholesky().expect("validated covariance");
                let det = chol.l().diagonal().product().powi(2);
                Component {
                    weight: c.weight,
                    mean: c.mean_vector(),
                    precision: chol.inverse(),
                    normalizer: (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) / det.sqrt(),
                }
            })
            .collect();
        Ok(MixtureDensity {
            dimension: d,
            components,
            second: spec.raw_moments().second,
        })
    }
}

impl Density for MixtureDensity {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn jet(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = self.dimension;
        grad.iter_mut().for_each(|x| *x = 0.0);
        hess.iter_mut().for_each(|x| *x = 0.0);
        let v = DVector::from_column_slice(v);
        let mut f = 0.0;
        for c in &self.components {
            let r = &v - &c.mean;
            let pr = &c.precision * &r;
            let phi = c.weight * c.normalizer * (-0.5 * r.dot(&pr)).exp();
            f += phi;
            for i in 0..d {
                grad[i] -= phi * pr[i];
                for k in 0..d {
                    hess[i * d + k] += phi * (pr[i] * pr[k] - c.precision[(i, k)]);
                }
            }
        }
        f
    }

    fn second_moments(&self) -> DMatrix<f64> {
        self.second.clone()
    }
}

/// `f = μ + √μ g` for a truncated Hermite expansion `g`, written as
/// `f = μ (1 + Σ_α c_α p_α)`.
#[derive(Clone, Debug)]
pub struct FluctuationDensity {
    dimension: usize,
    max_degree: usize,
    terms: Vec<(Vec<u32>, f64)>,
    second: DMatrix<f64>,
}

impl FluctuationDensity {
    pub fn new(g: &CoeffVector) -> Result<Self, OracleError> {
        let basis = g.basis();
        let d = basis.dimension();
        let terms = basis
            .ordering()
            .iter()
            .zip(g.values())
            .filter(|(_, &c)| c != 0.0)
            .map(|(a, &c)| (a.entries().to_vec(), c))
            .collect();
        let m = extract_moments(g)?;
        let mut second = DMatrix::identity(d, d);
        let mut p = 0;
        for j in 0..d {
            second[(j, j)] += m.alpha[j];
            for k in j + 1..d {
                second[(j, k)] = m.off_diagonal[p];
                second[(k, j)] = m.off_diagonal[p];
                p += 1;
            }
        }
        Ok(FluctuationDensity {
            dimension: d,
            max_degree: basis.max_degree(),
            terms,
            second,
        })
    }
}

impl Density for FluctuationDensity {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn jet(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = self.dimension;
        let n = self.max_degree;
        let p: Vec<Vec<f64>> = v.iter().map(|&x| hermite_polynomials(x, n)).collect();
        // p_n' = √n p_{n−1}
        let dp = |j: usize, k: u32, order: u32| -> f64 {
            if k < order {
                return 0.0;
            }
            let mut factor = 1.0;
            for s in 0..order {
                factor *= ((k - s) as f64).sqrt();
            }
            factor * p[j][(k - order) as usize]
        };
        let mut q = 1.0;
        let mut gq = vec![0.0; d];
        let mut hq = vec![0.0; d * d];
        for (alpha, c) in &self.terms {
            q += c * (0..d).map(|j| p[j][alpha[j] as usize]).product::<f64>();
            for i in 0..d {
                gq[i] += c * (0..d).map(|j| dp(j, alpha[j], (j == i) as u32)).product::<f64>();
                for k in 0..d {
                    let prod: f64 = (0..d)
                        .map(|j| dp(j, alpha[j], (j == i) as u32 + (j == k) as u32))
                        .product();
                    hq[i * d + k] += c * prod;
                }
            }
        }
        let r2: f64 = v.iter().map(|x| x * x).sum();
        let mu = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * (-0.5 * r2).exp();
        for i in 0..d {
            grad[i] = mu * (gq[i] - v[i] * q);
            for k in 0..d {
                let delta = if i == k { 1.0 } else { 0.0 };
                hess[i * d + k] =
                    mu * (hq[i * d + k] - v[i] * gq[k] - gq[i] * v[k] + (v[i] * v[k] - delta) * q);
            }
        }
        mu * q
    }

    fn second_moments(&self) -> DMatrix<f64> {
        self.second.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::moments::GaussianComponent;
    use approx::assert_abs_diff_eq;

    fn check_jet(f: &dyn Density, v: &[f64]) {
        let d = f.dimension();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        f.jet(v, &mut g, &mut h);
        let eps = 1e-5;
        for i in 0..d {
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[i] += eps;
            vm[i] -= eps;
            let mut gp = vec![0.0; d];
            let mut gm = vec![0.0; d];
            let mut scratch = vec![0.0; d * d];
            let fp = f.jet(&vp, &mut gp, &mut scratch);
            let fm = f.jet(&vm, &mut gm, &mut scratch);
            assert_abs_diff_eq!(g[i], (fp - fm) / (2.0 * eps), epsilon = 1e-9);
            for k in 0..d {
                assert_abs_diff_eq!(h[k * d + i], (gp[k] - gm[k]) / (2.0 * eps), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mixture_derivatives() {
        let spec = GaussianMixtureSpec::new(vec![
            GaussianComponent {
                weight: 0.7,
                mean: vec![0.3, -0.2],
                covariance: vec![vec![1.2, 0.1], vec![0.1, 0.8]],
            },
            GaussianComponent::isotropic(0.3, vec![-0.5, 0.4], 0.6),
        ])
        .unwrap();
        let f = MixtureDensity::new(&spec).unwrap();
        for v in [[0.0, 0.0], [1.3, -0.7], [-2.0, 0.4]] {
            check_jet(&f, &v);
        }
        let mu = MixtureDensity::new(&GaussianMixtureSpec::maxwellian(2)).unwrap();
        assert_abs_diff_eq!(mu.value(&[0.0, 0.0]), 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-16);
    }

    #[test]
    fn fluctuation_derivatives_and_value() {
        let b = enumerate_basis(3, 4).unwrap();
        let g = CoeffVector::new(b.clone(), (0..b.len()).map(|i| 0.05 * ((i as f64) * 0.9).cos()).collect()).unwrap();
        let f = FluctuationDensity::new(&g).unwrap();
        let v = [0.4, -1.1, 0.7];
        check_jet(&f, &v);
        let psi0 = super::super::hermite::psi(&[0, 0, 0], &v);
        let gv = super::super::hermite::synthesize(&g, [&v[..]])[0];
        assert_abs_diff_eq!(f.value(&v), psi0 * psi0 + psi0 * gv, epsilon = 1e-15);
    }
}
