//! B-spline bases on an open uniform knot vector over `[0, 1]`.

/// Nonzero basis values at `u` for `count` degree-`degree` basis functions.
///
/// Returns `(index, weight)` pairs with strictly positive weights, at most
/// `degree + 1` of them; the weights sum to one.
pub fn bspline_basis(u: f64, degree: usize, count: usize) -> Vec<(usize, f64)> {
    assert!(count > degree, "need at least degree + 1 basis functions");
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&u), "u = {u} outside [0, 1]");
    let u = u.clamp(0.0, 1.0);
    let spans = count - degree;
    let knot = |i: usize| -> f64 {
        if i <= degree {
            0.0
        } else if i >= count {
            1.0
        } else {
            (i - degree) as f64 / spans as f64
        }
    };
    let span = (degree + (u * spans as f64).floor() as usize).min(count - 1);
    // Interior knots are j / spans; the floor can land one span too far when
    // u sits on a knot that rounds down.
    let span = if u < knot(span) { span - 1 } else { span };

    let mut values = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    values[0] = 1.0;
    for j in 1..=degree {
        left[j] = u - knot(span + 1 - j);
        right[j] = knot(span + j) - u;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    values
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w > 0.0)
        .map(|(r, w)| (span - degree + r, w))
        .collect()
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Direct Cox–de Boor recursion evaluating every basis function; the
    /// right end is closed on the last function.
    pub fn cox_de_boor_all(u: f64, degree: usize, count: usize) -> Vec<f64> {
        let spans = count - degree;
        let knots: Vec<f64> = (0..count + degree + 1)
            .map(|i| {
                if i <= degree {
                    0.0
                } else if i >= count {
                    1.0
                } else {
                    (i - degree) as f64 / spans as f64
                }
            })
            .collect();
        fn n(i: usize, p: usize, u: f64, t: &[f64], count: usize) -> f64 {
            if p == 0 {
                let last = t[i + 1] == 1.0 && t[i] < 1.0 && i + 1 >= count;
                return if (t[i] <= u && u < t[i + 1]) || (u == 1.0 && last) { 1.0 } else { 0.0 };
            }
            let mut acc = 0.0;
            let d1 = t[i + p] - t[i];
            if d1 > 0.0 {
                acc += (u - t[i]) / d1 * n(i, p - 1, u, t, count);
            }
            let d2 = t[i + p + 1] - t[i + 1];
            if d2 > 0.0 {
                acc += (t[i + p + 1] - u) / d2 * n(i + 1, p - 1, u, t, count);
            }
            acc
        }
        (0..count).map(|i| n(i, degree, u, &knots, count)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::cox_de_boor_all;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_endpoints() {
        assert_eq!(bspline_basis(0.0, 1, 5), vec![(0, 1.0)]);
        assert_eq!(bspline_basis(1.0, 1, 5), vec![(4, 1.0)]);
    }

    #[test]
    fn linear_midpoint_between_first_knots() {
        assert_eq!(bspline_basis(0.125, 1, 5), vec![(0, 0.5), (1, 0.5)]);
        let dense = cox_de_boor_all(0.125, 1, 5);
        assert_eq!(dense, vec![0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn interior_knot_hits_single_basis() {
        assert_eq!(bspline_basis(0.5, 1, 5), vec![(2, 1.0)]);
    }

    #[test]
    fn partition_of_unity_and_oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(m, k) in &[(1, 5), (1, 2), (2, 5), (3, 7), (0, 4), (2, 3)] {
            for i in 0..10_000 {
                let u = if i < 3 { [0.0, 1.0, 0.5][i] } else { rng.random_range(0.0..=1.0) };
                let sparse = bspline_basis(u, m, k);
                assert!(sparse.len() <= m + 1);
                let total: f64 = sparse.iter().map(|p| p.1).sum();
                assert!((total - 1.0).abs() < 1e-12, "m={m} k={k} u={u}: {total}");
                assert!(sparse.iter().all(|p| p.1 > 0.0));
                let mut dense = vec![0.0; k];
                for (idx, w) in sparse {
                    dense[idx] = w;
                }
                let oracle = cox_de_boor_all(u, m, k);
                for (a, b) in dense.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-12, "m={m} k={k} u={u}: {dense:?} vs {oracle:?}");
                }
            }
        }
    }
}
