//! Correlation and significance machinery: Pearson, Spearman, Kendall tau-b,
//! the contrastive tau-like ratio, the Fisher r-to-z transform and Williams'
//! test for comparing two dependent correlations that share a variable.

use serde::Serialize;
use thiserror::Error;

/// Default significance threshold for correlation comparisons.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired scores need equal lengths of at least 2 (got {predicted} and {gold})")]
    BadPairing { predicted: usize, gold: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
}

/// Predicted scores paired with gold judgments, equal lengths >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    predicted: Vec<f64>,
    gold: Vec<f64>,
}

impl PairedScores {
    pub fn new(predicted: Vec<f64>, gold: Vec<f64>) -> Result<Self, StatsError> {
        if predicted.len() != gold.len() || predicted.len() < 2 {
            return Err(StatsError::BadPairing {
                predicted: predicted.len(),
                gold: gold.len(),
            });
        }
        Ok(Self { predicted, gold })
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn gold(&self) -> &[f64] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Outcome counts of good/bad contrast comparisons. Ties are tracked but
/// excluded from the tau-like ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ContrastCounts {
    pub concordant: usize,
    pub discordant: usize,
    pub ties: usize,
}

impl ContrastCounts {
    pub fn total_decided(&self) -> usize {
        self.concordant + self.discordant
    }

    pub fn merge(&mut self, other: &ContrastCounts) {
        self.concordant += other.concordant;
        self.discordant += other.discordant;
        self.ties += other.ties;
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Product-moment correlation.
pub fn pearson(p: &PairedScores) -> Result<f64, StatsError> {
    pearson_slices(p.predicted(), p.gold())
}

fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput("zero variance vector"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional ranks with average ranks for ties.
fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("scores must not be NaN"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Average of 1-based ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation over fractional ranks.
pub fn spearman(p: &PairedScores) -> Result<f64, StatsError> {
    let rx = fractional_ranks(p.predicted());
    let ry = fractional_ranks(p.gold());
    pearson_slices(&rx, &ry)
}

/// Kendall tau-b with tie correction, via exhaustive pair classification.
pub fn kendall_tau_b(p: &PairedScores) -> Result<f64, StatsError> {
    let x = p.predicted();
    let y = p.gold();
    let n = x.len();
    let mut concordant = 0usize;
    let mut discordant = 0usize;
    let mut ties_x = 0usize;
    let mut ties_y = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let decided = (concordant + discordant) as f64;
    let denom_x = decided + ties_x as f64;
    let denom_y = decided + ties_y as f64;
    if denom_x == 0.0 || denom_y == 0.0 {
        return Err(StatsError::DegenerateInput("all pairs tied"));
    }
    let tau = (concordant as f64 - discordant as f64) / (denom_x * denom_y).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// The contrastive tau-like ratio (concordant - discordant) over
/// (concordant + discordant); ties appear in neither term.
pub fn kendall_tau_like(counts: &ContrastCounts) -> Result<f64, StatsError> {
    let decided = counts.total_decided();
    if decided == 0 {
        return Err(StatsError::DegenerateInput(
            "no concordant or discordant contrasts",
        ));
    }
    Ok((counts.concordant as f64 - counts.discordant as f64) / decided as f64)
}

/// Fisher r-to-z transform: f(r) = (1/2) ln((1 + r) / (1 - r)).
pub fn fisher_z(r: f64) -> Result<f64, StatsError> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(StatsError::OutOfDomain(format!(
            "fisher_z requires |r| < 1, got {r}"
        )));
    }
    Ok(0.5 * ((1.0 + r) / (1.0 - r)).ln())
}

fn inverse_fisher_z(z: f64) -> f64 {
    z.tanh()
}

/// How macro-averaged correlations are combined with the Fisher transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroAveraging {
    /// Transform every correlation, average in z-space, map back.
    TransformThenAverage,
    /// Average the raw correlations, then transform the mean.
    AverageThenTransform,
}

/// Macro-average of correlations under the chosen Fisher-transform protocol.
/// Returns the averaged value back on the correlation scale.
pub fn fisher_macro_average(rs: &[f64], mode: MacroAveraging) -> Result<f64, StatsError> {
    if rs.is_empty() {
        return Err(StatsError::DegenerateInput("no correlations to average"));
    }
    match mode {
        MacroAveraging::TransformThenAverage => {
            let zs: Vec<f64> = rs.iter().map(|&r| fisher_z(r)).collect::<Result<_, _>>()?;
            Ok(inverse_fisher_z(mean(&zs)))
        }
        MacroAveraging::AverageThenTransform => {
            let m = mean(rs);
            fisher_z(m)?;
            Ok(m)
        }
    }
}

/// Result of a Williams t-test for H0: r12 = r13 given r23.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilliamsResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

impl WilliamsResult {
    pub fn significant_at(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Williams' test for two dependent correlations sharing variable 1:
/// r12 and r13 are each predictor's correlation with the shared variable and
/// r23 the correlation between the predictors; n is the sample size.
pub fn williams_test(r12: f64, r13: f64, r23: f64, n: usize) -> Result<WilliamsResult, StatsError> {
    for (name, r) in [("r12", r12), ("r13", r13), ("r23", r23)] {
        if r.is_nan() || r.abs() >= 1.0 {
            return Err(StatsError::OutOfDomain(format!(
                "{name} must satisfy |r| < 1, got {r}"
            )));
        }
    }
    if n < 4 {
        return Err(StatsError::OutOfDomain(format!(
            "williams_test requires n >= 4, got {n}"
        )));
    }
    let df = n - 3;
    if r12 == r13 {
        return Ok(WilliamsResult {
            t_stat: 0.0,
            p_value: 1.0,
            degrees_of_freedom: df,
        });
    }

    let nf = n as f64;
    let k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
    let r_bar = (r12 + r13) / 2.0;
    let denom_sq =
        2.0 * k * (nf - 1.0) / (nf - 3.0) + r_bar * r_bar * (1.0 - r23).powi(3);
    if denom_sq <= 0.0 {
        return Err(StatsError::OutOfDomain(
            "correlation triple is not jointly feasible".into(),
        ));
    }
    let t = (r12 - r13) * ((nf - 1.0) * (1.0 + r23)).sqrt() / denom_sq.sqrt();
    let p = student_t_two_sided_p(t, df as f64);
    Ok(WilliamsResult {
        t_stat: t,
        p_value: p,
        degrees_of_freedom: df,
    })
}

/// Two-sided p-value for a Student-t statistic with `df` degrees of freedom,
/// via the identity p = I_{df/(df + t^2)}(df/2, 1/2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Special functions: log-gamma and the regularized incomplete beta.
// ---------------------------------------------------------------------------

/// Lanczos approximation of ln Gamma(x) for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 14] = [
        57.156_235_665_862_92,
        -59.597_960_355_475_49,
        14.136_097_974_741_746,
        -0.491_913_816_097_620_2,
        3.399_464_998_481_189e-5,
        4.652_362_892_704_858e-5,
        -9.837_447_530_487_956e-5,
        1.580_887_032_249_125e-4,
        -2.102_644_417_241_049e-4,
        2.174_396_181_152_126e-4,
        -1.643_181_065_367_639e-4,
        8.441_822_398_385_275e-5,
        -2.619_083_840_158_341e-5,
        3.689_918_265_953_162e-6,
    ];
    let mut y = x;
    let tmp = x + 5.242_187_5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_1;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Continued-fraction evaluation for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}
