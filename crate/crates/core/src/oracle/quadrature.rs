//! Tensor Gauss–Hermite quadrature.
//!
//! A grid of variance `σ²` integrates `p(v) e^{−|v|²/(2σ²)}` exactly for
//! polynomials `p` of degree at most `2n−1` per axis. Plain weights (the
//! Gaussian folded back in) are stored alongside, so smooth integrands that
//! decay like a Gaussian can be integrated directly.

use super::OracleError;

/// Nodes and weights for `∫ p(x) e^{−x²} dx`, ascending, together with the
/// plain weights `w_i e^{x_i²}`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // π^{−1/4}
    const PIM4: f64 = 0.751_125_544_464_942_5;
    const MAX_ITER: usize = 100;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut plain = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_ITER {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
        let scaled = pp * (-0.5 * z * z).exp();
        plain[i] = 2.0 / (scaled * scaled);
        plain[n - 1 - i] = plain[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    x.reverse();
    w.reverse();
    plain.reverse();
    (x, w, plain)
}

/// Tensor grid for the weight `e^{−|v|²/(2σ²)}`.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    dimension: usize,
    nodes_per_axis: usize,
    variance: f64,
    nodes_1d: Vec<f64>,
    gaussian_weights_1d: Vec<f64>,
    plain_weights_1d: Vec<f64>,
    points: Vec<f64>,
    gaussian_weights: Vec<f64>,
    plain_weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(dimension: usize, nodes_per_axis: usize, variance: f64) -> Result<Self, OracleError> {
        if dimension == 0 {
            return Err(OracleError::Dimension(dimension));
        }
        if nodes_per_axis == 0 {
            return Err(OracleError::TooFewNodes {
                nodes: 0,
                required: 1,
            });
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(OracleError::InvalidVariance(variance));
        }
        let (x, w, plain) = gauss_hermite(nodes_per_axis);
        let s = (2.0 * variance).sqrt();
        let nodes_1d: Vec<f64> = x.iter().map(|xi| s * xi).collect();
        let gaussian_weights_1d: Vec<f64> = w.iter().map(|wi| s * wi).collect();
        let plain_weights_1d: Vec<f64> = plain.iter().map(|wi| s * wi).collect();
        let total = nodes_per_axis.pow(dimension as u32);
        let mut points = Vec::with_capacity(total * dimension);
        let mut gaussian_weights = Vec::with_capacity(total);
        let mut plain_weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dimension];
        for _ in 0..total {
            let (mut gw, mut pw) = (1.0, 1.0);
            for &i in &idx {
                points.push(nodes_1d[i]);
                gw *= gaussian_weights_1d[i];
                pw *= plain_weights_1d[i];
            }
            gaussian_weights.push(gw);
            plain_weights.push(pw);
            // last axis varies fastest
            for a in (0..dimension).rev() {
                idx[a] += 1;
                if idx[a] < nodes_per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(QuadratureGrid {
            dimension,
            nodes_per_axis,
            variance,
            nodes_1d,
            gaussian_weights_1d,
            plain_weights_1d,
            points,
            gaussian_weights,
            plain_weights,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn len(&self) -> usize {
        self.plain_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plain_weights.is_empty()
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn gaussian_weights_1d(&self) -> &[f64] {
        &self.gaussian_weights_1d
    }

    pub fn plain_weights_1d(&self) -> &[f64] {
        &self.plain_weights_1d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dimension)
    }

    /// Weights for `∫ p(v) e^{−|v|²/(2σ²)} dv`.
    pub fn gaussian_weights(&self) -> &[f64] {
        &self.gaussian_weights
    }

    /// Weights for `∫ F(v) dv`.
    pub fn plain_weights(&self) -> &[f64] {
        &self.plain_weights
    }

    /// `Σ_i W_i F(v_i)` with plain weights.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points().zip(&self.plain_weights).map(|(v, w)| w * f(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_moments() {
        for n in [1usize, 2, 5, 20, 64, 72] {
            let (x, w, plain) = gauss_hermite(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            assert_relative_eq!(w.iter().sum::<f64>(), PI.sqrt(), max_relative = 1e-14);
            for (xi, (wi, pi)) in x.iter().zip(w.iter().zip(&plain)) {
                assert_relative_eq!(wi * (xi * xi).exp(), *pi, max_relative = 1e-9);
            }
            if n >= 2 {
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert_relative_eq!(m2, PI.sqrt() / 2.0, max_relative = 1e-14);
            }
            // exact to degree 2n−1
            let top = 2 * n - 2;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(top as i32)).sum();
            let mut exact = PI.sqrt();
            for k in 0..top / 2 {
                exact *= (2 * k + 1) as f64 / 2.0;
            }
            assert_relative_eq!(m, exact, max_relative = 1e-11);
        }
    }

    #[test]
    fn plain_weights_integrate_gaussians() {
        let g = QuadratureGrid::new(1, 64, 2.0).unwrap();
        let val = g.integrate(|v| (-0.5 * v[0] * v[0] / 1.3).exp());
        assert_relative_eq!(val, (2.0 * PI * 1.3).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn tensor_grid_layout() {
        let g = QuadratureGrid::new(2, 3, 1.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(1)[0], g.nodes_1d()[0]);
        assert_eq!(g.point(1)[1], g.nodes_1d()[1]);
        assert_relative_eq!(g.gaussian_weights().iter().sum::<f64>(), 2.0 * PI, max_relative = 1e-14);
        assert!(QuadratureGrid::new(2, 0, 1.0).is_err());
        assert!(QuadratureGrid::new(2, 4, -1.0).is_err());
    }
}
