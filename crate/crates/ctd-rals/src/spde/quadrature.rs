//! Gauss-Legendre quadrature nodes and weights on `[-1, 1]`.

/// Legendre polynomial `P_m` and its derivative at `x`, via the three-term
/// recurrence.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 1..m {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = m as f64 * (p_prev - x * p) / (1.0 - x * x);
    (p, dp)
}

/// Nodes (ascending) and weights of the `m`-point Gauss-Legendre rule.
/// Weights sum to 2 and nodes are symmetric about 0.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    // Newton iteration from the Chebyshev-like initial guess; roots come in
    // symmetric pairs, so only the upper half is computed.
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        if 2 * i + 1 == m {
            x = 0.0; // middle root of an odd rule is exactly zero
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[m - 1 - i] = x;
        nodes[i] = -x;
        weights[m - 1 - i] = w;
        weights[i] = w;
    }
    (nodes, weights)
}

/// The same rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(m);
    (
        nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights.iter().map(|w| 0.5 * w).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_point_rule() {
        let (nodes, weights) = gauss_legendre(1);
        assert_eq!(nodes, vec![0.0]);
        assert_eq!(weights, vec![2.0]);
    }

    #[test]
    fn two_point_rule_hits_legendre_roots() {
        let (nodes, _) = gauss_legendre(2);
        // Roots of the degree-2 Legendre polynomial: +-1/sqrt(3).
        let root = 1.0 / 3.0_f64.sqrt();
        assert_abs_diff_eq!(nodes[0], -root, epsilon = 1e-12);
        assert_abs_diff_eq!(nodes[1], root, epsilon = 1e-12);
        assert_abs_diff_eq!(nodes[1], 0.5773502692, epsilon = 1e-9);
    }

    #[test]
    fn eight_point_rule_integrates_degree_fifteen() {
        let (nodes, weights) = gauss_legendre(8);
        assert_abs_diff_eq!(weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        for degree in 0..=15 {
            let quad: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| w * x.powi(degree))
                .sum();
            let exact = if degree % 2 == 0 {
                2.0 / (degree as f64 + 1.0)
            } else {
                0.0
            };
            assert_abs_diff_eq!(quad, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        for m in [3, 5, 8, 64, 512] {
            let (nodes, weights) = gauss_legendre(m);
            for i in 0..m {
                assert_abs_diff_eq!(nodes[i], -nodes[m - 1 - i], epsilon = 0.0);
                assert_abs_diff_eq!(weights[i], weights[m - 1 - i], epsilon = 0.0);
            }
            assert!(nodes.windows(2).all(|p| p[0] < p[1]));
            assert_abs_diff_eq!(weights.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        }
    }
}
