//! k-means++ seeding and Lloyd refinement used to initialize EM.

use rand::Rng;

use crate::descriptor::DescriptorSet;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Picks `k` centers by D² sampling. Returns `None` when the data holds
/// fewer than `k` distinct points.
pub fn plus_plus<R: Rng>(set: &DescriptorSet, k: usize, rng: &mut R) -> Option<Vec<f64>> {
    let n = set.len();
    if n == 0 || k == 0 {
        return None;
    }
    let dim = set.dim();
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(set.row(rng.random_range(0..n)));

    let mut nearest: Vec<f64> = set.rows().map(|x| sq_dist(x, &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // fall back to the last positive-distance point if rounding overshoots
        let mut chosen = None;
        for (t, d) in nearest.iter().enumerate() {
            if *d > 0.0 {
                chosen = Some(t);
                acc += d;
                if acc > target {
                    break;
                }
            }
        }
        let chosen = chosen?;
        let start = centers.len();
        centers.extend_from_slice(set.row(chosen));
        let c = &centers[start..];
        for (x, best) in set.rows().zip(nearest.iter_mut()) {
            let d = sq_dist(x, c);
            if d < *best {
                *best = d;
            }
        }
    }
    Some(centers)
}

/// Index of the closest center to `x`; ties go to the lower index.
pub fn nearest_center(x: &[f64], centers: &[f64], dim: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Runs up to `iters` Lloyd iterations in place and returns the final
/// assignment. Empty clusters keep their previous center.
pub fn lloyd(set: &DescriptorSet, centers: &mut [f64], iters: usize) -> Vec<usize> {
    let dim = set.dim();
    let k = centers.len() / dim;
    let mut assign: Vec<usize> = set.rows().map(|x| nearest_center(x, centers, dim)).collect();
    for _ in 0..iters {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &c) in set.rows().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
        let next: Vec<usize> = set.rows().map(|x| nearest_center(x, centers, dim)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_distinct_centers() {
        let set = DescriptorSet::from_rows("k", &[vec![0.0], vec![0.0], vec![10.0], vec![10.0], vec![20.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut centers = plus_plus(&set, 3, &mut rng).unwrap();
        centers.sort_by(f64::total_cmp);
        assert_eq!(centers, vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn too_few_distinct_points() {
        let set = DescriptorSet::from_rows("k", &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(plus_plus(&set, 2, &mut rng).is_none());
    }

    #[test]
    fn lloyd_separates_two_groups() {
        let set = DescriptorSet::from_rows("k", &[vec![0.0], vec![1.0], vec![9.0], vec![10.0]]).unwrap();
        let mut centers = vec![0.0, 1.0];
        let assign = lloyd(&set, &mut centers, 10);
        assert_eq!(assign, vec![0, 0, 1, 1]);
        assert_eq!(centers, vec![0.5, 9.5]);
    }
}
