use crate::error::{Error, Result};

/// `L = 1/(2N) Σ (pred - target)²` and its gradient `(pred - target) / N`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() {
        return Err(Error::Contract("mse_loss on empty input".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::dim(
            "mse_loss",
            format!("pred has {} entries, target {}", pred.len(), target.len()),
        ));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            e / n
        })
        .collect();
    Ok((loss / (2.0 * n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = mse_loss(&[2.0], &[0.0]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g, vec![2.0]);
        assert_eq!(mse_loss(&[1.0, -1.0], &[0.0, 0.0]).unwrap().0, 0.5);
        assert!(matches!(mse_loss(&[], &[]), Err(Error::Contract(_))));
    }
}
