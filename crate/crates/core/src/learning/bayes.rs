//! Gaussian Naive Bayes for binary labels.

/// Fraction of the largest feature variance added to every class variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    /// log prior per class (index = label)
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
    present: [bool; 2],
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], y: &[u8]) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;

        // global variance drives the smoothing term
        let mut epsilon = 0.0_f64;
        for f in 0..n_features {
            let mean = x.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            epsilon = epsilon.max(var);
        }
        epsilon *= VAR_SMOOTHING;

        let mut model = GaussianNb {
            log_prior: [f64::NEG_INFINITY; 2],
            mean: [vec![0.0; n_features], vec![0.0; n_features]],
            var: [vec![1.0; n_features], vec![1.0; n_features]],
            present: [false; 2],
        };
        for class in 0..2u8 {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == class).map(|(r, _)| r).collect();
            if rows.is_empty() {
                continue;
            }
            let k = class as usize;
            let m = rows.len() as f64;
            model.present[k] = true;
            model.log_prior[k] = (m / n).ln();
            for f in 0..n_features {
                let mean = rows.iter().map(|r| r[f]).sum::<f64>() / m;
                let var = rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / m;
                model.mean[k][f] = mean;
                model.var[k][f] = var + epsilon;
            }
        }
        model
    }

    fn joint_log_likelihood(&self, class: usize, x: &[f64]) -> f64 {
        let mut ll = self.log_prior[class];
        for (f, &v) in x.iter().enumerate() {
            let var = self.var[class][f];
            if var <= 0.0 {
                // zero variance everywhere: the feature is uninformative
                continue;
            }
            ll += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - self.mean[class][f]).powi(2) / (2.0 * var);
        }
        ll
    }

    /// Posterior probability of label 1.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self.present {
            [false, false] => 0.5,
            [true, false] => 0.0,
            [false, true] => 1.0,
            [true, true] => {
                let l0 = self.joint_log_likelihood(0, x);
                let l1 = self.joint_log_likelihood(1, x);
                let m = l0.max(l1);
                let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                (e1 / (e0 + e1)).clamp(0.0, 1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn matches_closed_form_two_gaussian_posterior() {
        let neg = [0.0, 1.0, 2.0, 1.0, 0.5, 1.5];
        let pos = [6.0, 7.0, 8.0, 7.5];
        let x: Vec<Vec<f64>> = neg.iter().chain(pos.iter()).map(|&v| vec![v]).collect();
        let y: Vec<u8> = neg.iter().map(|_| 0).chain(pos.iter().map(|_| 1)).collect();
        let model = GaussianNb::fit(&x, &y);

        let stats = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let v = s.iter().map(|a| (a - m).powi(2)).sum::<f64>() / s.len() as f64;
            (m, v)
        };
        let all: Vec<f64> = neg.iter().chain(pos.iter()).copied().collect();
        let eps = VAR_SMOOTHING * stats(&all).1;
        let (m0, v0) = stats(&neg);
        let (m1, v1) = stats(&pos);
        let (p0, p1) = (0.6, 0.4);
        for probe in [-1.0, 1.0, 3.5, 4.0, 5.0, 9.0] {
            let a = p0 * normal_pdf(probe, m0, v0 + eps);
            let b = p1 * normal_pdf(probe, m1, v1 + eps);
            let expected = b / (a + b);
            assert!((model.predict_proba(&[probe]) - expected).abs() < 1e-6, "probe {probe}");
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let model = GaussianNb::fit(&[vec![1.0], vec![2.0]], &[0, 0]);
        assert_eq!(model.predict_proba(&[1.5]), 0.0);
    }
}
