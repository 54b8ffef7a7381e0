//! Linear regression, the ZeroR baseline, and the averaging combiner.

use serde::{Deserialize, Serialize};

use crate::dataset::Fingerprint;
use crate::error::{Error, Result};
use crate::linalg;
use crate::preprocess::{Axis, FeatureView, NormalizationParams};

/// Ridge strength used when the normal equations are rank-deficient
/// (172 features can exceed small training sets).
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Set when the plain least-squares system was rank-deficient and the
    /// ridge fallback produced this fit.
    pub ridge_used: bool,
    pub axis: Axis,
    pub norm: NormalizationParams,
}

impl LinearModel {
    /// Least-squares fit with intercept; falls back to ridge when the
    /// normal equations are rank-deficient.
    pub fn train(view: &FeatureView) -> Result<Self> {
        let n = view.n_points();
        let d = view.n_features();
        if n == 0 {
            return Err(Error::train("linear regression needs a non-empty view"));
        }
        // design matrix with trailing 1s column for the intercept
        let mut design = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            design.extend_from_slice(view.features.row(i));
            design.push(1.0);
        }
        let (solution, ridge_used) =
            match linalg::least_squares(&design, &view.targets, n, d + 1, 0.0) {
                Ok(w) => (w, false),
                Err(_) => (
                    linalg::least_squares(&design, &view.targets, n, d + 1, RIDGE_FALLBACK)
                        .map_err(|e| Error::train(format!("ridge fallback failed: {e}")))?,
                    true,
                ),
            };
        let intercept = solution[d];
        let coefficients = solution[..d].to_vec();
        Ok(LinearModel {
            coefficients,
            intercept,
            ridge_used,
            axis: view.axis,
            norm: view.norm.clone(),
        })
    }

    pub fn predict_normalized(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.coefficients.len() {
            return Err(Error::predict(format!(
                "query has {} attributes, model expects {}",
                query.len(),
                self.coefficients.len()
            )));
        }
        Ok(self.intercept + self.coefficients.iter().zip(query).map(|(c, q)| c * q).sum::<f64>())
    }

    pub fn predict(&self, fp: &Fingerprint) -> Result<f64> {
        let q = self.norm.apply(fp)?;
        self.predict_normalized(&q)
    }
}

/// Baseline predicting the training-target mean regardless of input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroRModel {
    pub constant: f64,
    pub axis: Axis,
}

impl ZeroRModel {
    pub fn train(view: &FeatureView) -> Result<Self> {
        if view.targets.is_empty() {
            return Err(Error::train("ZeroR needs a non-empty view"));
        }
        let constant = view.targets.iter().sum::<f64>() / view.targets.len() as f64;
        if !constant.is_finite() {
            return Err(Error::train("ZeroR mean is not finite"));
        }
        Ok(ZeroRModel { constant, axis: view.axis })
    }

    pub fn predict(&self) -> f64 {
        self.constant
    }
}

/// Unweighted mean of member predictions ("voting" combiner).
pub fn vote_predict(member_predictions: &[f64]) -> Result<f64> {
    if member_predictions.is_empty() {
        return Err(Error::predict("voting needs at least one member"));
    }
    Ok(member_predictions.iter().sum::<f64>() / member_predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::FeatureMatrix;
    use crate::preprocess::{AttrNorm, NormMethod};

    fn view(xs: &[f64], ys: &[f64]) -> FeatureView {
        FeatureView {
            features: FeatureMatrix::from_rows(xs.iter().map(|&x| vec![x]).collect()),
            targets: ys.to_vec(),
            axis: Axis::X,
            norm: NormalizationParams {
                method: NormMethod::None,
                per_attr: vec![AttrNorm { shift: 0.0, scale: 1.0 }],
            },
        }
    }

    #[test]
    fn zeror_predicts_the_mean() {
        let m = ZeroRModel::train(&view(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(m.predict(), 2.0);
    }

    #[test]
    fn exact_line_recovered() {
        let m = LinearModel::train(&view(&[0.0, 1.0, 2.0], &[1.0, 4.0, 7.0])).unwrap();
        assert!(!m.ridge_used);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn three_point_fit_matches_normal_equations_hand_solve() {
        // x in {0,1,2}, y = {0, 1, 3}: XtX = [[5,3],[3,3]], Xty = [7,4]
        // slope = (3*7-3*4)/(3*5-9) = 9/6 = 1.5, intercept = (4-3*1.5)/3 = -1/6
        let m = LinearModel::train(&view(&[0.0, 1.0, 2.0], &[0.0, 1.0, 3.0])).unwrap();
        assert!((m.coefficients[0] - 1.5).abs() < 1e-10);
        assert!((m.intercept + 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn residuals_orthogonal_to_features_on_full_rank_data() {
        let xs = [0.0, 1.0, 2.0, 3.5, -1.0];
        let ys = [0.3, 0.9, 2.5, 3.1, -0.7];
        let m = LinearModel::train(&view(&xs, &ys)).unwrap();
        let dot: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = y - (m.intercept + m.coefficients[0] * x);
                r * x
            })
            .sum();
        assert!(dot.abs() < 1e-8, "{dot}");
    }

    #[test]
    fn rank_deficient_data_flags_ridge() {
        // one point, two unknowns (slope + intercept)
        let m = LinearModel::train(&view(&[1.0], &[2.0])).unwrap();
        assert!(m.ridge_used);
        let p = m.predict_normalized(&[1.0]).unwrap();
        assert!((p - 2.0).abs() < 1e-3);
    }

    #[test]
    fn vote_averages_members() {
        assert_eq!(vote_predict(&[10.0, 12.0]).unwrap(), 11.0);
        assert_eq!(vote_predict(&[0.0, 3.0, 9.0]).unwrap(), 4.0);
        assert_eq!(vote_predict(&[7.5, 7.5]).unwrap(), 7.5);
        assert!(vote_predict(&[]).is_err());
    }

    #[test]
    fn vote_is_permutation_invariant_and_bounded() {
        let a = vote_predict(&[1.0, 5.0, 2.0]).unwrap();
        let b = vote_predict(&[5.0, 2.0, 1.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 1.0 && a <= 5.0);
    }
}
