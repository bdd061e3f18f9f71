use nalgebra::DMatrix;

use super::NeuralError;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy per label, each averaged over the batch. Positive
/// terms of label `m` are scaled by `pos_weight[m]`.
pub fn per_label_bce(
    logits: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    pos_weight: &[f64],
) -> Result<Vec<f64>, NeuralError> {
    check(logits, labels, pos_weight)?;
    let n = logits.nrows() as f64;
    Ok((0..logits.ncols())
        .map(|m| {
            let w = pos_weight[m];
            logits
                .column(m)
                .iter()
                .zip(labels.column(m).iter())
                .map(|(&z, &y)| w * y * softplus(-z) + (1.0 - y) * softplus(z))
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Summed per-label loss and its gradient with respect to the logits.
pub fn bce_with_logits(
    logits: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    pos_weight: &[f64],
) -> Result<(f64, DMatrix<f64>), NeuralError> {
    let loss = per_label_bce(logits, labels, pos_weight)?.iter().sum();
    let n = logits.nrows() as f64;
    let grad = DMatrix::from_fn(logits.nrows(), logits.ncols(), |i, m| {
        let (z, y) = (logits[(i, m)], labels[(i, m)]);
        (-pos_weight[m] * y * sigmoid(-z) + (1.0 - y) * sigmoid(z)) / n
    });
    Ok((loss, grad))
}

fn check(
    logits: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    pos_weight: &[f64],
) -> Result<(), NeuralError> {
    if logits.shape() != labels.shape() || pos_weight.len() != logits.ncols() {
        return Err(NeuralError::Shape(format!(
            "logits {:?}, labels {:?}, {} weights",
            logits.shape(),
            labels.shape(),
            pos_weight.len()
        )));
    }
    if logits.nrows() == 0 {
        return Err(NeuralError::Shape("empty batch".into()));
    }
    Ok(())
}
