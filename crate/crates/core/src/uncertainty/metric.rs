use std::fmt;
use std::str::FromStr;

use super::{
    averaged_entropy, averaged_margin, averaged_vr, bald, class_variance, entropy,
    probability_margin, scharr_magnitude, variation_ratio, GrayImage, VarianceReduction,
};
use crate::error::{Error, Result};
use crate::tensor_io::{PredictionStack, UncertaintyMap};

/// Every uncertainty map the pipeline can produce, keyed by its CLI name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    VariationRatio,
    ProbabilityMargin,
    Entropy,
    AveragedVr,
    AveragedMargin,
    AveragedEntropy,
    VarianceMean,
    VarianceMax,
    Bald,
    Scharr,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::VariationRatio,
        Metric::ProbabilityMargin,
        Metric::Entropy,
        Metric::AveragedVr,
        Metric::AveragedMargin,
        Metric::AveragedEntropy,
        Metric::VarianceMean,
        Metric::VarianceMax,
        Metric::Bald,
        Metric::Scharr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::VariationRatio => "vr",
            Metric::ProbabilityMargin => "pm",
            Metric::Entropy => "entropy",
            Metric::AveragedVr => "avg-vr",
            Metric::AveragedMargin => "avg-pm",
            Metric::AveragedEntropy => "avg-entropy",
            Metric::VarianceMean => "var-mean",
            Metric::VarianceMax => "var-max",
            Metric::Bald => "bald",
            Metric::Scharr => "scharr",
        }
    }

    /// Smallest stack size the metric is meaningful for.
    pub fn min_predictions(self) -> usize {
        match self {
            Metric::VarianceMean | Metric::VarianceMax | Metric::Bald => 2,
            _ => 1,
        }
    }

    pub fn needs_image(self) -> bool {
        self == Metric::Scharr
    }

    /// Computes the raw (unnormalized) map. Single-pass metrics applied to a
    /// stack with several predictions use the mean prediction, which makes
    /// them identical to their averaged variants.
    pub fn compute(
        self,
        stack: &PredictionStack,
        image: Option<&GrayImage>,
    ) -> Result<UncertaintyMap> {
        if stack.len() < self.min_predictions() {
            return Err(Error::EnsembleSize {
                required: self.min_predictions(),
                actual: stack.len(),
            });
        }
        let single = stack.len() == 1;
        Ok(match self {
            Metric::VariationRatio if single => variation_ratio(&stack.predictions()[0]),
            Metric::ProbabilityMargin if single => probability_margin(&stack.predictions()[0]),
            Metric::Entropy if single => entropy(&stack.predictions()[0]),
            Metric::VariationRatio | Metric::AveragedVr => averaged_vr(stack),
            Metric::ProbabilityMargin | Metric::AveragedMargin => averaged_margin(stack),
            Metric::Entropy | Metric::AveragedEntropy => averaged_entropy(stack),
            Metric::VarianceMean => class_variance(stack, VarianceReduction::MeanOverClasses)?,
            Metric::VarianceMax => class_variance(stack, VarianceReduction::MaxOverClasses)?,
            Metric::Bald => bald(stack)?,
            Metric::Scharr => {
                let image = image.ok_or_else(|| {
                    Error::Config("the scharr metric needs an image_path in the manifest".into())
                })?;
                if (image.height(), image.width()) != (stack.height(), stack.width()) {
                    return Err(Error::Shape {
                        expected: (stack.height(), stack.width()),
                        actual: (image.height(), image.width()),
                    });
                }
                scharr_magnitude(image)
            }
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Metric::ALL.iter().map(|m| m.name()).collect();
                Error::usage(
                    "--metric",
                    format!("unknown metric `{s}`; expected one of {}", names.join(", ")),
                )
            })
    }
}
