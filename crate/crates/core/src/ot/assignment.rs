use super::{CostMatrix, Permutation};

/// Exact minimum-cost assignment of documents (rows) to positions
/// (columns) by the Hungarian method with shortest augmenting paths.
///
/// Runs in `O(n³)`. Negative costs are fine. On ties the permutation is
/// whatever the deterministic row-by-row augmentation order produces.
pub fn solve_assignment(cost: &CostMatrix) -> (Permutation, f64) {
    let n = cost.n();
    if n == 0 {
        return (Permutation::identity(0), 0.0);
    }
    let c = cost.as_matrix();

    // 1-based arrays; column 0 is the virtual root of each search tree.
    let mut row_pot = vec![0.0f64; n + 1];
    let mut col_pot = vec![0.0f64; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_match[0] = row;
        let mut j0 = 0usize;
        min_slack.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c[(i0 - 1, j - 1)] - row_pot[i0] - col_pot[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    row_pot[col_match[j]] += delta;
                    col_pot[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_match[j] - 1] = j - 1;
    }
    let value = assignment.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
    let perm = Permutation::new(assignment).expect("hungarian produced a bijection");
    (perm, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if prefix.len() == used.len() {
                out.push(prefix.clone());
                return;
            }
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    prefix.push(j);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[j] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }

    fn brute_force_min(c: &Matrix) -> f64 {
        all_permutations(c.rows())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn distance_cost_gives_identity() {
        let n = 6;
        let c = CostMatrix::new(Matrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs())).unwrap();
        let (perm, value) = solve_assignment(&c);
        assert_eq!(perm, Permutation::identity(n));
        assert_eq!(value, 0.0);
    }

    #[test]
    fn two_by_two() {
        let c = CostMatrix::new(Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]])).unwrap();
        let (perm, value) = solve_assignment(&c);
        assert_eq!(perm, Permutation::identity(2));
        assert_eq!(value, 2.0);
    }

    #[test]
    fn matches_brute_force_with_negative_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c = Matrix::from_fn(4, 4, |_, _| rng.random_range(-3.0..3.0));
            let (perm, value) = solve_assignment(&CostMatrix::new(c.clone()).unwrap());
            assert!(perm.is_valid());
            assert!((value - brute_force_min(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn column_shift_changes_cost_by_shift_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let c = Matrix::from_fn(4, 4, |_, _| rng.random::<f64>());
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shifted = Matrix::from_fn(4, 4, |i, j| c[(i, j)] + h[j]);
            let (p0, v0) = solve_assignment(&CostMatrix::new(c.clone()).unwrap());
            let (p1, v1) = solve_assignment(&CostMatrix::new(shifted.clone()).unwrap());
            assert!((v1 - v0 - h.iter().sum::<f64>()).abs() < 1e-12);
            // each argmin stays optimal under the other cost
            let eval =
                |m: &Matrix, p: &Permutation| (0..4).map(|i| m[(i, p.position_of(i))]).sum::<f64>();
            assert!((eval(&shifted, &p0) - brute_force_min(&shifted)).abs() < 1e-12);
            assert!((eval(&c, &p1) - brute_force_min(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_and_empty() {
        let c = CostMatrix::new(Matrix::from_rows(&[vec![-4.0]])).unwrap();
        assert_eq!(solve_assignment(&c).1, -4.0);
        let c = CostMatrix::new(Matrix::zeros(0, 0)).unwrap();
        assert!(solve_assignment(&c).0.is_empty());
    }
}
