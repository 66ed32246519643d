use std::sync::Arc;

use landau_core::basis::{enumerate_basis, BasisTruncation, CoeffVector};
use landau_core::operators::OperatorSet;
use landau_core::oracle::{hermite_transform, synthesize, QuadratureGrid};
use proptest::prelude::*;

fn basis_and_values() -> impl Strategy<Value = (Arc<BasisTruncation>, Vec<f64>)> {
    (2usize..=3, 1usize..=6).prop_flat_map(|(d, n)| {
        let b = enumerate_basis(d, n).unwrap();
        let len = b.len();
        (Just(b), prop::collection::vec(-1.0f64..1.0, len))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_by_quadrature((b, values) in basis_and_values()) {
        let c = CoeffVector::new(b.clone(), values).unwrap();
        let grid = QuadratureGrid::new(b.dimension(), b.max_degree() + 1, 1.0).unwrap();
        let s = synthesize(&c, grid.points());
        let quad: f64 = s.iter().zip(grid.plain_weights()).map(|(g, w)| w * g * g).sum();
        prop_assert!((quad - c.norm().powi(2)).abs() <= 1e-12 * (1.0 + quad));
    }

    #[test]
    fn transform_inverts_synthesis((b, values) in basis_and_values()) {
        let c = CoeffVector::new(b.clone(), values).unwrap();
        let grid = QuadratureGrid::new(b.dimension(), b.max_degree() + 1, 1.0).unwrap();
        let back = hermite_transform(&synthesize(&c, grid.points()), &grid, &b).unwrap();
        prop_assert!(back.coefficients.sub(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn level_projections_partition((b, values) in basis_and_values()) {
        let c = CoeffVector::new(b.clone(), values).unwrap();
        let n = b.max_degree();
        let mut sum = CoeffVector::zeros(b.clone());
        for k in 0..=n {
            let p = c.project_level(k).unwrap();
            prop_assert_eq!(p.project_level(k).unwrap(), p.clone());
            for j in 0..k {
                prop_assert_eq!(c.project_level(j).unwrap().dot(&p).unwrap(), 0.0);
            }
            sum.axpy(1.0, &p).unwrap();
        }
        prop_assert_eq!(&sum, &c);
        let total: f64 = c.level_norms().iter().map(|x| x * x).sum();
        prop_assert!((total - c.norm().powi(2)).abs() < 1e-12);
        prop_assert_eq!(c.project_cumulative(n).unwrap(), c);
    }

    #[test]
    fn ladder_and_generator_symmetry((b, values) in basis_and_values()) {
        let c = CoeffVector::new(b.clone(), values).unwrap();
        let ops = OperatorSet::assemble(&b).unwrap();
        for j in 0..b.dimension() {
            // ⟨A⁺c, c⟩ = ⟨c, A⁻c⟩
            let up = ops.raise[j].apply(&c).unwrap().dot(&c).unwrap();
            let down = c.dot(&ops.lower[j].apply(&c).unwrap()).unwrap();
            prop_assert!((up - down).abs() < 1e-12);
        }
        // K is positive semidefinite
        let k = ops.reduced_generator.apply(&c).unwrap().dot(&c).unwrap();
        prop_assert!(k >= -1e-12);
    }
}
