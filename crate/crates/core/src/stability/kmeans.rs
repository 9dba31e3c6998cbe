use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub means: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], means: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, m) in means.iter().enumerate() {
        let d = dist_sq(x, m);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`KMEANS_MAX_ITER`] rounds have run. A cluster that empties is
/// reseeded at the point farthest from its current center.
pub fn kmeans_init(data: &[Vec<f64>], m: usize, seed: u64) -> Result<KMeans> {
    if m == 0 {
        return Err(Error::Data("k-means needs at least one cluster".into()));
    }
    if data.len() < m {
        return Err(Error::Data(format!(
            "k-means with {m} clusters needs at least {m} points, got {}",
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..data.len())];
    let mut d2: Vec<f64> = data.iter().map(|x| dist_sq(x, &data[chosen[0]])).collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if u < *w {
                        break;
                    }
                    u -= w;
                }
            }
            pick.expect("some point has positive distance")
        } else {
            // every point coincides with a chosen center
            (0..data.len()).find(|i| !chosen.contains(i)).expect("n >= m")
        };
        chosen.push(next);
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(dist_sq(x, &data[next]));
        }
    }
    let mut means: Vec<Vec<f64>> = chosen.iter().map(|&i| data[i].clone()).collect();

    let dim = data[0].len();
    let mut assignments = vec![usize::MAX; data.len()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let (k, _) = nearest(x, &means);
            if assignments[i] != k {
                assignments[i] = k;
                changed = true;
            }
        }
        let mut counts = vec![0usize; m];
        let mut sums = vec![vec![0.0; dim]; m];
        for (x, &k) in data.iter().zip(&assignments) {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(x) {
                *s += v;
            }
        }
        for k in 0..m {
            if counts[k] == 0 {
                let far = (0..data.len())
                    .max_by(|&a, &b| {
                        let da = dist_sq(&data[a], &means[assignments[a]]);
                        let db = dist_sq(&data[b], &means[assignments[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty data");
                means[k] = data[far].clone();
                assignments[far] = k;
                changed = true;
            } else {
                means[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        means,
        assignments,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_sample_mean() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let km = kmeans_init(&data, 1, 4).unwrap();
        assert!((km.means[0][0] - 4.5).abs() < 1e-12);
        assert!((km.means[0][1] - 28.5).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_recover_blob_means() {
        let mut data = Vec::new();
        for i in 0..20 {
            data.push(vec![(i as f64 * 0.37).sin()]);
            data.push(vec![100.0 + (i as f64 * 0.91).cos()]);
        }
        let low: Vec<f64> = data.iter().map(|x| x[0]).filter(|v| *v < 50.0).collect();
        let high: Vec<f64> = data.iter().map(|x| x[0]).filter(|v| *v > 50.0).collect();
        let low_mean = low.iter().sum::<f64>() / low.len() as f64;
        let high_mean = high.iter().sum::<f64>() / high.len() as f64;
        let km = kmeans_init(&data, 2, 11).unwrap();
        let mut got: Vec<f64> = km.means.iter().map(|m| m[0]).collect();
        got.sort_by(f64::total_cmp);
        assert!((got[0] - low_mean).abs() < 1e-9);
        assert!((got[1] - high_mean).abs() < 1e-9);
    }

    #[test]
    fn one_center_per_point() {
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let km = kmeans_init(&data, 6, 2).unwrap();
        let distortion: f64 = data
            .iter()
            .zip(&km.assignments)
            .map(|(x, &k)| dist_sq(x, &km.means[k]))
            .sum();
        assert_eq!(distortion, 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(kmeans_init(&[vec![1.0]], 2, 0), Err(Error::Data(_))));
    }
}
