//! Statistical-moment features of accelerometer windows and a
//! nearest-centroid activity classifier.
//!
//! Moments are population (biased) central moments: `std = sqrt(m2)`,
//! `skewness = m3 / m2^1.5`, `kurtosis_excess = m4 / m2^2 - 3` with
//! `mk = mean((x - mean)^k)`. The mean is computed but excluded from the
//! classification features: activity level shows in the dispersion and
//! shape of the acceleration distribution, not its offset. Classes are
//! ordered `passive < moderate < active` and distance ties resolve toward
//! the lower class.

use crate::model::{is_positive_finite, AccelWindow};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivityError {
    #[error("all samples are equal; skewness and kurtosis are undefined")]
    ZeroVariance,
    #[error("need at least 8 samples, got {0}")]
    TooFewSamples(usize),
    #[error("training set has no {0} samples")]
    MissingClass(ActivityClass),
    #[error("feature {0} is constant across the training set")]
    DegenerateFeature(&'static str),
    #[error("model is invalid: {0}")]
    BadModel(&'static str),
}

/// Activity level, ordered from least to most movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityClass {
    Passive,
    Moderate,
    Active,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 3] =
        [ActivityClass::Passive, ActivityClass::Moderate, ActivityClass::Active];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActivityClass::Passive => "passive",
            ActivityClass::Moderate => "moderate",
            ActivityClass::Active => "active",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "passive" => Some(ActivityClass::Passive),
            "moderate" => Some(ActivityClass::Moderate),
            "active" => Some(ActivityClass::Active),
            _ => None,
        }
    }
}

impl std::fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Population moments of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis_excess: f64,
}

impl MomentVector {
    /// The classification features, in model order.
    pub fn features(&self) -> [f64; 3] {
        [self.std, self.skewness, self.kurtosis_excess]
    }
}

/// Moments of a raw sample slice.
pub fn moments(samples: &[f64]) -> Result<MomentVector, ActivityError> {
    if samples.len() < 8 {
        return Err(ActivityError::TooFewSamples(samples.len()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(ActivityError::ZeroVariance);
    }
    Ok(MomentVector {
        mean,
        std: m2.sqrt(),
        skewness: m3 / m2.powf(1.5),
        kurtosis_excess: m4 / (m2 * m2) - 3.0,
    })
}

/// Moments of an accelerometer window.
pub fn compute_moments(window: &AccelWindow) -> Result<MomentVector, ActivityError> {
    moments(&window.samples)
}

/// Z-normalization parameters over (std, skewness, kurtosis_excess).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Per-class centroids in normalized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub passive: [f64; 3],
    pub moderate: [f64; 3],
    pub active: [f64; 3],
}

impl Centroids {
    fn get(&self, class: ActivityClass) -> &[f64; 3] {
        match class {
            ActivityClass::Passive => &self.passive,
            ActivityClass::Moderate => &self.moderate,
            ActivityClass::Active => &self.active,
        }
    }
}

/// Trained nearest-centroid model. Serializes to the persisted JSON shape
/// `{norm:{mean,std}, centroids:{passive,moderate,active}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityModel {
    pub norm: Normalization,
    pub centroids: Centroids,
}

impl ActivityModel {
    /// Check the invariants of a deserialized model.
    pub fn validate(&self) -> Result<(), ActivityError> {
        if self.norm.std.iter().any(|&s| !is_positive_finite(s)) {
            return Err(ActivityError::BadModel("normalization stds must be positive"));
        }
        let all = [&self.centroids.passive, &self.centroids.moderate, &self.centroids.active];
        if all.iter().any(|c| c.iter().any(|v| !v.is_finite()))
            || self.norm.mean.iter().any(|v| !v.is_finite())
        {
            return Err(ActivityError::BadModel("non-finite model coefficients"));
        }
        Ok(())
    }

    fn normalize(&self, v: &MomentVector) -> [f64; 3] {
        let f = v.features();
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = (f[i] - self.norm.mean[i]) / self.norm.std[i];
        }
        out
    }
}

const FEATURE_NAMES: [&str; 3] = ["std", "skewness", "kurtosis_excess"];

/// Train a model: pooled z-normalization over all samples, then each
/// centroid is the mean of its class's normalized vectors. Every class
/// needs at least one sample.
pub fn train_model(labeled: &[(MomentVector, ActivityClass)]) -> Result<ActivityModel, ActivityError> {
    for class in ActivityClass::ALL {
        if !labeled.iter().any(|(_, c)| *c == class) {
            return Err(ActivityError::MissingClass(class));
        }
    }
    let n = labeled.len() as f64;
    let mut mean = [0.0; 3];
    for (v, _) in labeled {
        let f = v.features();
        for i in 0..3 {
            mean[i] += f[i] / n;
        }
    }
    let mut std = [0.0; 3];
    for (v, _) in labeled {
        let f = v.features();
        for i in 0..3 {
            std[i] += (f[i] - mean[i]).powi(2) / n;
        }
    }
    for i in 0..3 {
        std[i] = std[i].sqrt();
        if std[i] == 0.0 {
            return Err(ActivityError::DegenerateFeature(FEATURE_NAMES[i]));
        }
    }
    let mut sums = [[0.0; 3]; 3];
    let mut counts = [0usize; 3];
    for (v, class) in labeled {
        let f = v.features();
        let k = *class as usize;
        counts[k] += 1;
        for i in 0..3 {
            sums[k][i] += (f[i] - mean[i]) / std[i];
        }
    }
    let centroid = |k: usize| -> [f64; 3] {
        let mut c = [0.0; 3];
        for i in 0..3 {
            c[i] = sums[k][i] / counts[k] as f64;
        }
        c
    };
    Ok(ActivityModel {
        norm: Normalization { mean, std },
        centroids: Centroids { passive: centroid(0), moderate: centroid(1), active: centroid(2) },
    })
}

/// Nearest centroid by Euclidean distance in normalized feature space;
/// ties break toward the lower class.
pub fn classify(model: &ActivityModel, v: &MomentVector) -> ActivityClass {
    let z = model.normalize(v);
    let mut best = ActivityClass::Passive;
    let mut best_d2 = f64::INFINITY;
    for class in ActivityClass::ALL {
        let c = model.centroids.get(class);
        let d2: f64 = (0..3).map(|i| (z[i] - c[i]).powi(2)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = class;
        }
    }
    best
}
