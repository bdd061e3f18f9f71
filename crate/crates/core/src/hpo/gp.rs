use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::HpoError;

/// Gaussian process with an isotropic squared-exponential kernel, fitted to
/// standardised targets. `amplitude` and `noise` are on the standardised
/// scale; [`GpModel::posterior`] returns values on the original scale.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub lengthscale: f64,
    pub amplitude: f64,
    pub noise: f64,
    /// Diagonal jitter that was needed on top of `noise`.
    pub nugget: f64,
    pub log_marginal_likelihood: f64,
    inputs: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(a: &[f64], b: &[f64], lengthscale: f64, amplitude: f64) -> f64 {
    amplitude * (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp()
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
}

const LENGTHSCALES: (f64, f64, usize) = (-2.0, 1.0, 31);
const AMPLITUDES: (f64, f64, usize) = (-2.0, 2.0, 17);

/// Fits by maximising the log marginal likelihood over a log-spaced grid of
/// lengthscales and amplitudes. `noise` is the observation variance on the
/// original target scale.
pub fn gp_fit(inputs: &[Vec<f64>], targets: &[f64], noise: f64) -> Result<GpModel, HpoError> {
    let mut best: Option<GpModel> = None;
    for l in logspace(LENGTHSCALES.0, LENGTHSCALES.1, LENGTHSCALES.2) {
        for a in logspace(AMPLITUDES.0, AMPLITUDES.1, AMPLITUDES.2) {
            let m = gp_fit_fixed(inputs, targets, noise, l, a)?;
            if best.as_ref().map_or(true, |b| {
                m.log_marginal_likelihood > b.log_marginal_likelihood
            }) {
                best = Some(m);
            }
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Fit with fixed kernel hyperparameters (amplitude on the standardised
/// scale).
pub fn gp_fit_fixed(
    inputs: &[Vec<f64>],
    targets: &[f64],
    noise: f64,
    lengthscale: f64,
    amplitude: f64,
) -> Result<GpModel, HpoError> {
    let n = inputs.len();
    if n != targets.len() || n == 0 {
        return Err(HpoError::Data(format!(
            "{n} inputs and {} targets",
            targets.len()
        )));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|x| x.len() != d) || targets.iter().any(|t| !t.is_finite()) {
        return Err(HpoError::Data(
            "inputs must share a dimension and targets be finite".into(),
        ));
    }
    if inputs.iter().all(|x| x == &inputs[0]) {
        return Err(HpoError::Degenerate);
    }
    if !(noise >= 0.0 && lengthscale > 0.0 && amplitude > 0.0) {
        return Err(HpoError::Data(
            "noise must be non-negative and kernel parameters positive".into(),
        ));
    }
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let var = targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let z = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_scale));
    let noise_z = noise / (y_scale * y_scale);
    let base = DMatrix::from_fn(n, n, |i, j| {
        kernel(&inputs[i], &inputs[j], lengthscale, amplitude)
    });
    let mut nugget = 0.0;
    let chol = loop {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += noise_z + nugget;
        }
        if let Some(c) = Cholesky::new(k) {
            break c;
        }
        nugget = if nugget == 0.0 {
            1e-12 * amplitude
        } else {
            nugget * 10.0
        };
        if nugget > amplitude {
            return Err(HpoError::Degenerate);
        }
    };
    let alpha = chol.solve(&z);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * z.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(GpModel {
        lengthscale,
        amplitude,
        noise: noise_z,
        nugget,
        log_marginal_likelihood: lml,
        inputs: inputs.to_vec(),
        y_mean,
        y_scale,
        chol,
        alpha,
    })
}

impl GpModel {
    /// Predictive mean and standard deviation of the latent function.
    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let kq = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|x| kernel(x, q, self.lengthscale, self.amplitude)),
        );
        let mean = kq.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kq)
            .expect("factor is nonsingular");
        let var = (self.amplitude - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Kernel amplitude on the original target scale.
    pub fn prior_variance(&self) -> f64 {
        self.amplitude * self.y_scale * self.y_scale
    }
}
