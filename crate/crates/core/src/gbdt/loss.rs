use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary log-loss on a raw log-odds score.
    Logistic,
    Squared,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Squared => "squared",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "squared" => Ok(LossKind::Squared),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// First and second derivative of the loss with respect to the raw score.
#[inline]
pub fn loss_grad_hess(kind: LossKind, raw: f64, target: f64) -> (f64, f64) {
    match kind {
        LossKind::Squared => (raw - target, 1.0),
        LossKind::Logistic => {
            let p = sigmoid(raw);
            (p - target, p * (1.0 - p))
        }
    }
}

/// Per-row loss: `(raw - y)^2 / 2` or `-[y ln p + (1 - y) ln(1 - p)]`.
pub fn point_loss(kind: LossKind, raw: f64, target: f64) -> f64 {
    match kind {
        LossKind::Squared => 0.5 * (raw - target) * (raw - target),
        // ln(1 + e^raw) - y * raw, computed without overflow
        LossKind::Logistic => raw.max(0.0) + (-raw.abs()).exp().ln_1p() - target * raw,
    }
}

/// Validation metric: RMSE for squared loss, mean log-loss for logistic.
pub fn metric(kind: LossKind, raw: &[f64], targets: &[f64]) -> f64 {
    let n = raw.len().max(1) as f64;
    match kind {
        LossKind::Squared => {
            let sse: f64 = raw.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
            (sse / n).sqrt()
        }
        LossKind::Logistic => {
            raw.iter()
                .zip(targets)
                .map(|(&r, &y)| point_loss(kind, r, y))
                .sum::<f64>()
                / n
        }
    }
}

/// Mean per-row training loss.
pub fn mean_loss(kind: LossKind, raw: &[f64], targets: &[f64]) -> f64 {
    raw.iter()
        .zip(targets)
        .map(|(&r, &y)| point_loss(kind, r, y))
        .sum::<f64>()
        / raw.len().max(1) as f64
}
