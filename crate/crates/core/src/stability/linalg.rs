//! Dense symmetric helpers for the mixture model. Matrices are `d × d`
//! row-major slices.

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// `None` if a pivot is not strictly positive.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `log |Σ|` from its Cholesky factor.
pub(crate) fn log_det(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

/// Squared Mahalanobis norm `rᵀ Σ⁻¹ r` via forward substitution `L z = r`.
pub(crate) fn mahalanobis_sq(l: &[f64], d: usize, r: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.resize(d, 0.0);
    let mut total = 0.0;
    for i in 0..d {
        let mut s = r[i];
        let row = &l[i * d..i * d + i];
        for (k, lv) in row.iter().enumerate() {
            s -= lv * scratch[k];
        }
        let z = s / l[i * d + i];
        scratch[i] = z;
        total += z * z;
    }
    total
}

/// `L Lᵀ`
pub(crate) fn from_cholesky(l: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..=j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            out[i * d + j] = s;
            out[j * d + i] = s;
        }
    }
    out
}
