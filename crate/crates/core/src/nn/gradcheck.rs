//! Central finite-difference gradient checker.

use rand::seq::index::sample;

use crate::nn::params::ParamSet;
use crate::rng;

pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn flagged(&self) -> Vec<&GradCheckEntry> {
        self.entries
            .iter()
            .filter(|e| e.rel_err > self.tolerance)
            .collect()
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.flagged().is_empty()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }
}

/// Compare an analytic gradient against central finite differences on a
/// random coordinate subset.
pub fn grad_check(
    loss: impl Fn(&ParamSet) -> f64,
    at: &ParamSet,
    analytic: &ParamSet,
    n_coords: usize,
    seed: u64,
    tolerance: f64,
) -> GradCheckReport {
    assert!(at.compatible(analytic), "gradient shape mismatch");
    let n = at.len().min(n_coords.max(1));
    let mut rng = rng::stream(seed, "grad-check", &[]);
    let coords = sample(&mut rng, at.len(), n).into_vec();

    let mut entries = Vec::with_capacity(n);
    for idx in coords {
        let mut plus = at.clone();
        plus.data_mut()[idx] += FD_STEP;
        let mut minus = at.clone();
        minus.data_mut()[idx] -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        let a = analytic.data()[idx];
        let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        entries.push(GradCheckEntry {
            index: idx,
            analytic: a,
            numeric,
            rel_err,
        });
    }
    GradCheckReport { tolerance, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{ShapeTable, TensorShape};

    fn params(data: Vec<f64>) -> ParamSet {
        let n = data.len();
        ParamSet::new(
            ShapeTable::new(vec![TensorShape {
                name: "x".into(),
                dims: vec![n],
            }]),
            data,
        )
        .unwrap()
    }

    fn quad_loss(p: &ParamSet) -> f64 {
        0.5 * p.data().iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn correct_gradient_passes() {
        let at = params(vec![0.3, -1.2, 2.0, 0.7]);
        let grad = at.clone(); // gradient of ||x||^2/2 is x
        let report = grad_check(quad_loss, &at, &grad, 4, 1, 1e-3);
        assert!(report.all_within_tolerance(), "{:?}", report.entries);
    }

    #[test]
    fn corrupted_coordinate_is_flagged() {
        let at = params(vec![0.3, -1.2, 2.0, 0.7]);
        let mut grad = at.clone();
        grad.data_mut()[2] += 0.5;
        let report = grad_check(quad_loss, &at, &grad, 4, 1, 1e-3);
        let flagged = report.flagged();
        assert_eq!(flagged.len(), 1);
        assert_eq!(flagged[0].index, 2);
    }

    #[test]
    fn zero_tolerance_flags_everything() {
        // transcendental loss: finite differences are never exact
        let exp_loss = |p: &ParamSet| p.data().iter().map(|v| v.exp()).sum::<f64>();
        let at = params(vec![0.31, -1.27, 0.93]);
        let grad = params(at.data().iter().map(|v| v.exp()).collect());
        let report = grad_check(exp_loss, &at, &grad, 3, 1, 0.0);
        assert_eq!(report.flagged().len(), 3);
    }
}
