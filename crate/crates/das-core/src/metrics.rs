//! Scoring trained models on labeled sets.

use crate::audit::{Phase, PhaseGuard};
use crate::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::model::{bce_loss, forward, ModelParams};
use crate::parallel;

/// Fraction of correct hard predictions. Errors on an empty set.
pub fn evaluate(params: &ModelParams, data: &SampleSet) -> Result<f64> {
    Ok(eval_loss_acc(params, data)?.1)
}

/// Mean binary cross-entropy and accuracy in one pass.
pub fn eval_loss_acc(params: &ModelParams, data: &SampleSet) -> Result<(f64, f64)> {
    let _g = PhaseGuard::enter(Phase::Evaluation);
    let samples = data.samples();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes = parallel::map_indexed(samples.len(), |i| {
        let s = &samples[i];
        forward(params, &s.window).map(|y_hat| {
            let predicted = u8::from(y_hat >= 0.5);
            (bce_loss(y_hat, s.label), predicted == s.label)
        })
    });
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for o in outcomes {
        let (loss, ok) = o?;
        loss_sum += loss;
        correct += usize::from(ok);
    }
    let n = samples.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabeledSample, SampleSet};
    use crate::model::ArchitectureConfig;
    use crate::window::PhaseWindow;

    fn tiny_arch() -> ArchitectureConfig {
        ArchitectureConfig {
            input_h: 4,
            input_w: 8,
            stem_channels: 2,
            stem_stride: (1, 2),
            stem_pool: (1, 1),
            block_channels: vec![2],
            convs_per_block: 2,
            kernel: 3,
        }
    }

    fn set(labels: &[u8]) -> SampleSet {
        SampleSet::new(
            labels
                .iter()
                .map(|&l| LabeledSample {
                    window: PhaseWindow::from_data(4, 8, vec![0.1; 32], 0, 0.0, "t").unwrap(),
                    label: l,
                })
                .collect(),
        )
    }

    #[test]
    fn zero_model_scores_the_tie_class() {
        // Zero params predict 1 everywhere; accuracy equals the label-1 share.
        let p = ModelParams::zeros(&tiny_arch()).unwrap();
        assert_eq!(evaluate(&p, &set(&[1, 1, 1, 1])).unwrap(), 1.0);
        assert_eq!(evaluate(&p, &set(&[1, 1, 1, 0])).unwrap(), 0.75);
        assert_eq!(evaluate(&p, &set(&[0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let p = ModelParams::zeros(&tiny_arch()).unwrap();
        assert!(matches!(
            evaluate(&p, &SampleSet::new(Vec::new())),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn evaluation_reads_count_under_evaluation_phase() {
        let p = ModelParams::zeros(&tiny_arch()).unwrap();
        let d = set(&[0, 1]);
        let _ = evaluate(&p, &d).unwrap();
        assert_eq!(d.counters().reads(Phase::Evaluation), 2);
        assert_eq!(d.counters().learning_reads(), 0);
    }
}
