//! Assessment metrics: anthropomorphism (R², RMSE), intent accuracy, grasp
//! success rate and grasp duration statistics.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::{eval_gesture, GestureFunction};
use crate::kinematics::AngleVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("reference values for DOF {0} are constant over the samples")]
    ZeroReferenceVariance(usize),
    #[error("no trials")]
    EmptyTrials,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnthropomorphismReport {
    pub r2_per_dof: [f64; 6],
    pub rmse_per_dof: [f64; 6],
    pub r2_mean: f64,
    pub rmse_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub intended_target: String,
    pub estimated_target: Option<String>,
    pub grasp_success: bool,
    /// Seconds from first motion to all DOFs locked.
    pub duration: f64,
    pub object_spacing: Option<f64>,
}

impl TrialRecord {
    pub fn intent_ok(&self) -> bool {
        self.estimated_target.as_deref() == Some(self.intended_target.as_str())
    }
}

/// R² and RMSE of executed angles against the reference gesture function
/// sampled at the same distances. R² uses the reference variance.
pub fn anthropomorphism(actual: &[(f64, AngleVector)], reference: &GestureFunction) -> Result<AnthropomorphismReport> {
    let n = actual.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let refs: Vec<AngleVector> = actual.iter().map(|(d, _)| eval_gesture(reference, *d)).collect();
    let mut r2 = [0.0; 6];
    let mut rmse = [0.0; 6];
    for j in 0..6 {
        let mean = refs.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let ss_tot: f64 = refs.iter().map(|r| (r[j] - mean).powi(2)).sum();
        let ss_res: f64 = actual.iter().zip(&refs).map(|((_, a), r)| (a[j] - r[j]).powi(2)).sum();
        // relative floor so rounding noise in a flat reference is not mistaken for variance
        let scale = refs.iter().map(|r| r[j].abs()).fold(1.0, f64::max);
        if ss_tot <= (1e-12 * scale).powi(2) * n as f64 {
            return Err(MetricsError::ZeroReferenceVariance(j));
        }
        r2[j] = 1.0 - ss_res / ss_tot;
        rmse[j] = (ss_res / n as f64).sqrt();
    }
    Ok(AnthropomorphismReport {
        r2_per_dof: r2,
        rmse_per_dof: rmse,
        r2_mean: r2.iter().sum::<f64>() / 6.0,
        rmse_mean: rmse.iter().sum::<f64>() / 6.0,
    })
}

fn percent(hits: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(MetricsError::EmptyTrials);
    }
    Ok(100.0 * hits as f64 / total as f64)
}

pub fn intent_accuracy(trials: &[TrialRecord]) -> Result<f64> {
    percent(trials.iter().filter(|t| t.intent_ok()).count(), trials.len())
}

/// A trial with the wrong intent counts as a failed grasp.
pub fn grasp_success_rate(trials: &[TrialRecord]) -> Result<f64> {
    percent(
        trials.iter().filter(|t| t.intent_ok() && t.grasp_success).count(),
        trials.len(),
    )
}

/// Mean and sample standard deviation, displayed as `mean±std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(MetricsError::EmptyTrials);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.*}±{:.*}", p, self.mean, p, self.std)
    }
}

pub fn duration_stats(trials: &[TrialRecord]) -> Result<MeanStd> {
    let d: Vec<f64> = trials.iter().map(|t| t.duration).collect();
    MeanStd::of(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear() -> GestureFunction {
        let mut c = [[0.0; 5]; 6];
        for (j, row) in c.iter_mut().enumerate() {
            *row = [0.0, 0.0, 50.0, -120.0, 70.0 + j as f64];
        }
        GestureFunction::new(c, 0.05, 0.45).unwrap()
    }

    fn trace(f: &GestureFunction, offset: f64) -> Vec<(f64, AngleVector)> {
        (0..=40)
            .map(|k| {
                let d = 0.05 + 0.01 * k as f64;
                (d, eval_gesture(f, d).map(|a| a + offset))
            })
            .collect()
    }

    fn trial(intended: &str, estimated: &str, ok: bool) -> TrialRecord {
        TrialRecord {
            intended_target: intended.into(),
            estimated_target: Some(estimated.into()),
            grasp_success: ok,
            duration: 3.0,
            object_spacing: None,
        }
    }

    #[test]
    fn perfect_trace() {
        let f = linear();
        let r = anthropomorphism(&trace(&f, 0.0), &f).unwrap();
        assert_eq!(r.r2_mean, 1.0);
        assert_eq!(r.rmse_mean, 0.0);
    }

    #[test]
    fn constant_offset_rmse() {
        let f = linear();
        let r = anthropomorphism(&trace(&f, 2.0), &f).unwrap();
        for j in 0..6 {
            assert_relative_eq!(r.rmse_per_dof[j], 2.0, epsilon = 1e-9);
        }
        assert!(r.r2_mean < 1.0);
    }

    #[test]
    fn r2_matches_hand_computation() {
        // reference 10, 20, 30; actual 12, 20, 27
        let f = GestureFunction::new([[0.0, 0.0, 0.0, -100.0, 40.0]; 6], 0.1, 0.3).unwrap();
        let actual = [(0.3, 12.0), (0.2, 20.0), (0.1, 27.0)].map(|(d, a)| (d, AngleVector::splat(a)));
        let r = anthropomorphism(&actual, &f).unwrap();
        assert_relative_eq!(r.r2_per_dof[0], 1.0 - 13.0 / 200.0, epsilon = 1e-9);
        assert_relative_eq!(r.rmse_per_dof[0], (13.0f64 / 3.0).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn flat_reference_rejected() {
        let f = GestureFunction::new([[0.0, 0.0, 0.0, 0.0, 30.0]; 6], 0.05, 0.45).unwrap();
        assert_eq!(
            anthropomorphism(&trace(&f, 0.0), &f),
            Err(MetricsError::ZeroReferenceVariance(0))
        );
        assert_eq!(
            anthropomorphism(&trace(&f, 0.0)[..1], &f),
            Err(MetricsError::TooFewSamples(1))
        );
    }

    #[test]
    fn accuracy_ratios() {
        let mut t: Vec<_> = (0..38).map(|_| trial("cup", "cup", true)).collect();
        t.extend((0..2).map(|_| trial("cup", "bowl", true)));
        assert_eq!(intent_accuracy(&t).unwrap(), 95.0);
        assert_eq!(grasp_success_rate(&t).unwrap(), 95.0);
        assert_eq!(intent_accuracy(&[]), Err(MetricsError::EmptyTrials));
        assert_eq!(grasp_success_rate(&[]), Err(MetricsError::EmptyTrials));

        let mut t: Vec<_> = (0..37).map(|_| trial("a", "a", true)).collect();
        t.extend((0..3).map(|_| trial("a", "a", false)));
        assert_eq!(grasp_success_rate(&t).unwrap(), 92.5);
        assert_eq!(intent_accuracy(&t).unwrap(), 100.0);
    }

    #[test]
    fn duration_formatting() {
        let mut t = vec![trial("a", "a", true); 3];
        let s = duration_stats(&t).unwrap();
        assert_eq!(s.to_string(), "3.00±0.00");
        t[0].duration = 2.0;
        t[1].duration = 4.0;
        let s = duration_stats(&t[..2]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_relative_eq!(s.std, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(format!("{s:.3}"), "3.000±1.414");
        let rounded = MeanStd { mean: 3.07, std: 0.41 };
        assert_eq!(rounded.to_string(), "3.07±0.41");
    }

    proptest! {
        #[test]
        fn r2_never_exceeds_one(noise in prop::collection::vec(-5.0f64..5.0, 41)) {
            let f = linear();
            let t: Vec<_> = trace(&f, 0.0)
                .into_iter()
                .zip(&noise)
                .map(|((d, a), n)| (d, a.map(|x| x + n)))
                .collect();
            let r = anthropomorphism(&t, &f).unwrap();
            for j in 0..6 {
                prop_assert!(r.r2_per_dof[j] <= 1.0);
                prop_assert!(r.rmse_per_dof[j] >= 0.0);
            }
        }

        #[test]
        fn rates_bounded(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
            let t: Vec<_> = flags
                .iter()
                .map(|&(hit, ok)| trial("a", if hit { "a" } else { "b" }, ok))
                .collect();
            let acc = intent_accuracy(&t).unwrap();
            let suc = grasp_success_rate(&t).unwrap();
            prop_assert!((0.0..=100.0).contains(&acc));
            prop_assert!(suc <= acc);
        }
    }
}
