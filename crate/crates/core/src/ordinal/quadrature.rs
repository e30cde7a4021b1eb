//! Gauss–Hermite rules for the weight `exp(-x^2)` via the Golub–Welsch
//! eigenvalue method.

use nalgebra::DMatrix;

use crate::linalg::symmetric_eigen;

/// Nodes (ascending) and weights of the `q`-point rule.
pub fn gauss_hermite(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "need at least one node");
    let mut jacobi = DMatrix::zeros(q, q);
    for i in 1..q {
        let off = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = off;
        jacobi[(i - 1, i)] = off;
    }
    let eig = symmetric_eigen(&jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|k| {
            let v0 = eig.vectors[(0, k)];
            (eig.values[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_point_rule_integrates_polynomials() {
        let (x, w) = gauss_hermite(7);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        // ∫ x^{2m} e^{-x^2} = Γ(m + 1/2)
        let exact = [sqrt_pi, sqrt_pi / 2.0, 3.0 * sqrt_pi / 4.0, 15.0 * sqrt_pi / 8.0];
        for (m, &e) in exact.iter().enumerate() {
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(2 * m as i32)).sum();
            assert!((s - e).abs() < 1e-12, "moment {m}: {s} vs {e}");
        }
        let odd: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(5)).sum();
        assert!(odd.abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn one_point_rule() {
        let (x, w) = gauss_hermite(1);
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }
}
