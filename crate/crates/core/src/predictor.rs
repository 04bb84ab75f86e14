//! Aging-based bandwidth prediction and alert classification.
//!
//! The predictor keeps an exponentially aged estimate of a VM's load:
//! `S = x*S_prev + (1-x)*T_prev`, where `T` is the observed load percentage
//! and `x` weights history against the latest measurement. The estimate
//! seeds itself with the first observation. A ring of recent observations
//! provides the sample standard deviation used to size alert bands.
//!
//! Alert bands sit at `alpha + beta`, `alpha + 2*beta`, `alpha + 3*beta`,
//! with `beta = min((100 - alpha) / 3, sigma)` so that the third band never
//! leaves the 0..=100 load scale.

use std::collections::VecDeque;

pub const DEFAULT_X: f64 = 0.5;
pub const DEFAULT_WINDOW: usize = 60;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PredictorError {
    #[error("load {0} outside 0..=100")]
    DomainError(f64),
    #[error("no observation applied yet")]
    Unseeded,
    #[error("need at least two observations for sigma")]
    InsufficientData,
    #[error("no snapshot to restore")]
    NoSnapshot,
    #[error("invalid parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("beta {beta} exceeds (100 - alpha) / 3 for alpha {alpha}")]
    InvalidThresholds { alpha: f64, beta: f64 },
}

/// Severity of a load observation relative to the current thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlertLevel {
    Normal = 0,
    Level1 = 1,
    Level2 = 2,
    Level3 = 3,
}

impl AlertLevel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Validated `(alpha, beta)` pair defining the three alert bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertThresholds {
    alpha: f64,
    beta: f64,
}

impl AlertThresholds {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, PredictorError> {
        if !(0.0..=100.0).contains(&alpha) || !alpha.is_finite() {
            return Err(PredictorError::InvalidParam { name: "alpha", value: alpha });
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(PredictorError::InvalidParam { name: "beta", value: beta });
        }
        if beta > (100.0 - alpha) / 3.0 {
            return Err(PredictorError::InvalidThresholds { alpha, beta });
        }
        Ok(AlertThresholds { alpha, beta })
    }

    /// Builds thresholds from a prediction and observed deviation, applying
    /// the `(100 - alpha) / 3` cap.
    pub fn derive(alpha: f64, sigma: f64) -> Result<Self, PredictorError> {
        Self::new(alpha, compute_beta(alpha, sigma))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Band width: the observed deviation, capped so `alpha + 3*beta <= 100`.
pub fn compute_beta(alpha: f64, sigma: f64) -> f64 {
    ((100.0 - alpha) / 3.0).min(sigma).max(0.0)
}

/// One load observation against the thresholds. Bands are inclusive at the
/// lower edge. A degenerate zero-width band cannot grade severity, so any
/// excursion above the prediction is treated as critical.
pub fn classify(load: f64, t: &AlertThresholds) -> AlertLevel {
    if t.beta == 0.0 {
        return if load > t.alpha { AlertLevel::Level3 } else { AlertLevel::Normal };
    }
    if load >= t.alpha + 3.0 * t.beta {
        AlertLevel::Level3
    } else if load >= t.alpha + 2.0 * t.beta {
        AlertLevel::Level2
    } else if load >= t.alpha + t.beta {
        AlertLevel::Level1
    } else {
        AlertLevel::Normal
    }
}

/// Exponentially aged load estimator with a deviation window and an optional
/// saved state for post-incident restore.
#[derive(Debug, Clone, PartialEq)]
pub struct AgingPredictor {
    x: f64,
    s: Option<f64>,
    window_cap: usize,
    window: VecDeque<f64>,
    snapshot: Option<(f64, VecDeque<f64>)>,
}

impl AgingPredictor {
    pub fn new(x: f64, window_cap: usize) -> Result<Self, PredictorError> {
        if !(0.0..=1.0).contains(&x) || !x.is_finite() {
            return Err(PredictorError::InvalidParam { name: "x", value: x });
        }
        if window_cap < 2 {
            return Err(PredictorError::InvalidParam { name: "window", value: window_cap as f64 });
        }
        Ok(AgingPredictor {
            x,
            s: None,
            window_cap,
            window: VecDeque::with_capacity(window_cap),
            snapshot: None,
        })
    }

    /// Feeds one observed load percentage. The first observation seeds the
    /// estimate; later ones age it.
    pub fn update(&mut self, load: f64) -> Result<(), PredictorError> {
        if !(0.0..=100.0).contains(&load) || !load.is_finite() {
            return Err(PredictorError::DomainError(load));
        }
        self.s = Some(match self.s {
            None => load,
            Some(s) => self.x * s + (1.0 - self.x) * load,
        });
        if self.window.len() == self.window_cap {
            self.window.pop_front();
        }
        self.window.push_back(load);
        Ok(())
    }

    /// Current prediction for the next interval.
    pub fn alpha(&self) -> Result<f64, PredictorError> {
        self.s.ok_or(PredictorError::Unseeded)
    }

    /// Sample standard deviation over the observation window.
    pub fn sigma(&self) -> Result<f64, PredictorError> {
        let n = self.window.len();
        if n < 2 {
            return Err(PredictorError::InsufficientData);
        }
        let mean = self.window.iter().sum::<f64>() / n as f64;
        let ss = self.window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        Ok((ss / (n - 1) as f64).sqrt())
    }

    /// Saves the current estimate and window so they can be reinstated once
    /// an incident is resolved.
    pub fn snapshot_alpha(&mut self) -> Result<(), PredictorError> {
        let s = self.s.ok_or(PredictorError::Unseeded)?;
        self.snapshot = Some((s, self.window.clone()));
        Ok(())
    }

    /// Reinstates the saved state, consuming the snapshot.
    pub fn restore_alpha(&mut self) -> Result<(), PredictorError> {
        let (s, window) = self.snapshot.take().ok_or(PredictorError::NoSnapshot)?;
        self.s = Some(s);
        self.window = window;
        Ok(())
    }

    pub fn has_snapshot(&self) -> bool {
        self.snapshot.is_some()
    }

    pub fn x(&self) -> f64 {
        self.x
    }
}

impl Default for AgingPredictor {
    fn default() -> Self {
        AgingPredictor::new(DEFAULT_X, DEFAULT_WINDOW).unwrap()
    }
}
