//! Fuzzy rules with Gaussian memberships and softmin conjunction.
//!
//! Rule `i` reads "if x_1 is CLOSE TO v_i1 AND ... AND x_p is CLOSE TO v_ip
//! then class is k". Each clause is a Gaussian `exp(-(x - v)^2 / sigma^2)` and
//! the clauses are joined by the soft-match operator
//! `((sum mu_j^q) / p)^(1/q)` with a strongly negative `q`, which behaves like
//! `min` while staying differentiable.
//!
//! All soft-match arithmetic happens in log space: `ln mu_j` is the negated
//! scaled squared distance, so no membership is ever exponentiated before it
//! is combined.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::prototypes::partition;
use crate::raster::LabeledSample;
use crate::scalar::{argmax, Scalar};
use crate::sofm::PrototypeSet;

/// Memberships are clamped below at this value before soft-matching.
pub const MEMBERSHIP_FLOOR: f64 = 1e-15;

const FORMAT_MAGIC: &str = "fuzzy-rulebase";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum RulebaseError {
    #[error("spread must be positive, got {0}")]
    NonPositiveSpread(String),
    #[error("soft-match needs strictly positive inputs, got {0}")]
    NonPositiveValue(String),
    #[error("soft-match exponent must be non-zero")]
    ZeroExponent,
    #[error("soft-match of an empty list")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("prototype {0} has no nearest training samples")]
    EmptyPrototype(usize),
    #[error("prototype {0} has no class label")]
    UnlabeledPrototype(usize),
    #[error("rule consequent {class} is not below class count {classes}")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("invalid rulebase configuration: {0}")]
    Config(String),
    #[error("malformed rulebase file (line {line}): {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported rulebase format version {0}")]
    Version(u32),
    #[error("{0}")]
    Io(String),
}

/// How initial spreads are derived from a prototype's nearest samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpreadInit {
    /// `k_w * sqrt(sum (x_kj - v_ij)^2) / |X_i|`. Shrinks with the member
    /// count, so large training sets give very narrow rules.
    AsPrinted,
    /// `k_w * sqrt(sum (x_kj - v_ij)^2 / |X_i|)`, the root mean square.
    #[default]
    Rms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulebaseConfig<T> {
    /// Initial width multiplier `k_w`.
    pub kw: T,
    /// Soft-match exponent.
    pub q: T,
    /// Firing strengths below this count as "not fired".
    pub epsilon: T,
    pub learning_rate: T,
    pub max_tune_epochs: usize,
    /// Tuning stops once the relative per-epoch decrease of E drops below this.
    pub min_improvement: T,
    pub spread_floor: T,
    pub spread_init: SpreadInit,
}

impl<T: Scalar> Default for RulebaseConfig<T> {
    fn default() -> Self {
        Self {
            kw: T::lit(4.0),
            q: T::lit(-10.0),
            epsilon: T::lit(0.01),
            learning_rate: T::lit(30.0),
            max_tune_epochs: 100,
            min_improvement: T::lit(1e-4),
            spread_floor: T::lit(1e-3),
            spread_init: SpreadInit::Rms,
        }
    }
}

impl<T: Scalar> RulebaseConfig<T> {
    pub fn validate(&self) -> Result<(), RulebaseError> {
        let fail = |m: &str| Err(RulebaseError::Config(m.into()));
        if !(self.kw > T::zero()) {
            return fail("k_w must be positive");
        }
        if !(self.q <= -T::one()) {
            return fail("q must be <= -1");
        }
        if !(self.epsilon >= T::zero() && self.epsilon < T::one()) {
            return fail("epsilon must lie in [0, 1)");
        }
        if !(self.learning_rate > T::zero()) {
            return fail("learning rate must be positive");
        }
        if !(self.min_improvement >= T::zero()) {
            return fail("minimum improvement must be non-negative");
        }
        if !(self.spread_floor > T::zero()) {
            return fail("spread floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule<T> {
    pub center: Vec<T>,
    pub spread: Vec<T>,
    pub class: usize,
}

impl<T: Scalar> FuzzyRule<T> {
    pub fn new(center: Vec<T>, spread: Vec<T>, class: usize) -> Result<Self, RulebaseError> {
        if center.len() != spread.len() {
            return Err(RulebaseError::Dimension {
                expected: center.len(),
                actual: spread.len(),
            });
        }
        if let Some(s) = spread.iter().find(|s| !(**s > T::zero())) {
            return Err(RulebaseError::NonPositiveSpread(s.to_string()));
        }
        Ok(Self { center, spread, class })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Possibilistic class-confidence vector in `[0, 1]^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector<T> {
    pub alpha: Vec<T>,
}

impl<T: Scalar> LabelVector<T> {
    pub fn is_zero(&self) -> bool {
        self.alpha.iter().all(|a| *a == T::zero())
    }
}

/// A hard decision: a class index, or no rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Class(usize),
    Outlier,
}

impl Decision {
    /// Argmax with lowest-index tie-break; all-zero (or empty) is an outlier.
    pub fn from_scores<T: Scalar>(scores: &[T]) -> Self {
        match argmax(scores) {
            Some(k) if scores[k] > T::zero() => Decision::Class(k),
            _ => Decision::Outlier,
        }
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Decision::Class(k) => Some(k),
            Decision::Outlier => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rulebase<T> {
    pub dim: usize,
    pub class_count: usize,
    pub q: T,
    pub epsilon: T,
    pub rules: Vec<FuzzyRule<T>>,
}

/// `exp(-(x - v)^2 / sigma^2)`.
pub fn gaussian_membership<T: Scalar>(x: T, v: T, sigma: T) -> Result<T, RulebaseError> {
    if !(sigma > T::zero()) {
        return Err(RulebaseError::NonPositiveSpread(sigma.to_string()));
    }
    let d = (x - v) / sigma;
    Ok((-d * d).exp())
}

/// `ln(sum exp(t_i))` with the max shifted out.
fn log_sum_exp<T: Scalar>(terms: impl Iterator<Item = T> + Clone) -> T {
    let m = terms.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<T>().ln()
}

/// Soft-match from already-logged inputs.
#[inline]
fn soft_match_ln<T: Scalar>(ln_values: &[T], q: T) -> T {
    let n = T::from_count(ln_values.len());
    ((log_sum_exp(ln_values.iter().map(|&l| q * l)) - n.ln()) / q).exp()
}

/// `((sum x_i^q) / n)^(1/q)` for strictly positive `x_i`.
pub fn soft_match<T: Scalar>(values: &[T], q: T) -> Result<T, RulebaseError> {
    if values.is_empty() {
        return Err(RulebaseError::EmptyInput);
    }
    if q == T::zero() {
        return Err(RulebaseError::ZeroExponent);
    }
    if let Some(v) = values.iter().find(|v| !(**v > T::zero())) {
        return Err(RulebaseError::NonPositiveValue(v.to_string()));
    }
    let logs: Vec<T> = values.iter().map(|v| v.ln()).collect();
    let sm = soft_match_ln(&logs, q);
    // Rounding in the log domain can step just outside [min, max].
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(sm.max(lo).min(hi))
}

impl<T: Scalar> FuzzyRule<T> {
    /// Log-memberships, clamped at the membership floor.
    #[inline]
    fn ln_memberships_into(&self, x: &[T], out: &mut Vec<T>) {
        let floor = T::lit(MEMBERSHIP_FLOOR.ln());
        out.clear();
        out.extend(x.iter().zip(&self.center).zip(&self.spread).map(|((&xi, &v), &s)| {
            let d = (xi - v) / s;
            (-d * d).max(floor)
        }));
    }

    #[inline]
    fn strength_with(&self, x: &[T], q: T, scratch: &mut Vec<T>) -> T {
        self.ln_memberships_into(x, scratch);
        soft_match_ln(scratch, q).min(T::one())
    }
}

/// Softmin of the rule's per-dimension memberships at `x`.
pub fn firing_strength<T: Scalar>(rule: &FuzzyRule<T>, x: &[T], q: T) -> Result<T, RulebaseError> {
    if x.len() != rule.dim() {
        return Err(RulebaseError::Dimension {
            expected: rule.dim(),
            actual: x.len(),
        });
    }
    Ok(rule.strength_with(x, q, &mut Vec::with_capacity(x.len())))
}

fn spreads_for<T: Scalar>(
    center: &[T],
    members: &[usize],
    samples: &[LabeledSample<T>],
    config: &RulebaseConfig<T>,
) -> Vec<T> {
    let count = T::from_count(members.len());
    (0..center.len())
        .map(|j| {
            let ss: T = members
                .iter()
                .map(|&m| {
                    let d = samples[m].features[j] - center[j];
                    d * d
                })
                .sum();
            let raw = match config.spread_init {
                SpreadInit::AsPrinted => config.kw * ss.sqrt() / count,
                SpreadInit::Rms => config.kw * (ss / count).sqrt(),
            };
            raw.max(config.spread_floor)
        })
        .collect()
}

/// One rule per labeled prototype; spreads from the prototype's nearest
/// training samples.
pub fn build_rules<T: Scalar>(
    prototypes: &PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    config: &RulebaseConfig<T>,
) -> Result<Rulebase<T>, RulebaseError> {
    config.validate()?;
    let dim = prototypes
        .dim()
        .unwrap_or_else(|| samples.first().map_or(0, |s| s.features.len()));
    if let Some(s) = samples.iter().find(|s| s.features.len() != dim) {
        return Err(RulebaseError::Dimension {
            expected: dim,
            actual: s.features.len(),
        });
    }
    let class_count = samples
        .iter()
        .map(|s| s.label + 1)
        .chain(prototypes.labels.iter().flatten().map(|l| l + 1))
        .max()
        .unwrap_or(0);
    let stats = partition(prototypes, samples, class_count);
    let mut rules = Vec::with_capacity(prototypes.len());
    for (i, center) in prototypes.vectors.iter().enumerate() {
        let class = prototypes.labels[i].ok_or(RulebaseError::UnlabeledPrototype(i))?;
        if stats.members[i].is_empty() {
            return Err(RulebaseError::EmptyPrototype(i));
        }
        let spread = spreads_for(center, &stats.members[i], samples, config);
        rules.push(FuzzyRule::new(center.clone(), spread, class)?);
    }
    Ok(Rulebase {
        dim,
        class_count,
        q: config.q,
        epsilon: config.epsilon,
        rules,
    })
}

impl<T: Scalar> Rulebase<T> {
    pub fn new(
        dim: usize,
        class_count: usize,
        q: T,
        epsilon: T,
        rules: Vec<FuzzyRule<T>>,
    ) -> Result<Self, RulebaseError> {
        let rb = Self {
            dim,
            class_count,
            q,
            epsilon,
            rules,
        };
        rb.validate()?;
        Ok(rb)
    }

    pub fn validate(&self) -> Result<(), RulebaseError> {
        if !(self.q < T::zero()) {
            return Err(RulebaseError::Config("q must be negative".into()));
        }
        if !(self.epsilon >= T::zero() && self.epsilon < T::one()) {
            return Err(RulebaseError::Config("epsilon must lie in [0, 1)".into()));
        }
        for r in &self.rules {
            if r.center.len() != self.dim || r.spread.len() != self.dim {
                return Err(RulebaseError::Dimension {
                    expected: self.dim,
                    actual: r.center.len().max(r.spread.len()),
                });
            }
            if let Some(s) = r.spread.iter().find(|s| !(**s > T::zero())) {
                return Err(RulebaseError::NonPositiveSpread(s.to_string()));
            }
            if r.class >= self.class_count {
                return Err(RulebaseError::ClassOutOfRange {
                    class: r.class,
                    classes: self.class_count,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Writes the possibilistic label vector of `x` into `out` (length `c`).
    /// Per-class maxima below epsilon are zeroed.
    pub fn label_vector_into(&self, x: &[T], out: &mut [T], scratch: &mut Vec<T>) {
        out.iter_mut().for_each(|a| *a = T::zero());
        for rule in &self.rules {
            let s = rule.strength_with(x, self.q, scratch);
            if s > out[rule.class] {
                out[rule.class] = s;
            }
        }
        for a in out.iter_mut() {
            if *a < self.epsilon {
                *a = T::zero();
            }
        }
    }

    pub fn label_vector(&self, x: &[T]) -> Result<LabelVector<T>, RulebaseError> {
        self.check_dim(x)?;
        let mut alpha = vec![T::zero(); self.class_count];
        self.label_vector_into(x, &mut alpha, &mut Vec::with_capacity(self.dim));
        Ok(LabelVector { alpha })
    }

    /// Class of the strongest firing rule, or `Outlier` when nothing fires.
    pub fn classify(&self, x: &[T]) -> Result<Decision, RulebaseError> {
        Ok(Decision::from_scores(&self.label_vector(x)?.alpha))
    }

    fn check_dim(&self, x: &[T]) -> Result<(), RulebaseError> {
        if x.len() != self.dim {
            return Err(RulebaseError::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Best own-class and best other-class rule for a sample, from raw
    /// (un-thresholded) firing strengths.
    fn competitors(&self, s: &LabeledSample<T>, scratch: &mut Vec<T>) -> Competitors<T> {
        let mut c = Competitors { own: None, other: None };
        for (i, rule) in self.rules.iter().enumerate() {
            let st = rule.strength_with(&s.features, self.q, scratch);
            let slot = if rule.class == s.label {
                &mut c.own
            } else {
                &mut c.other
            };
            if slot.is_none_or(|(_, b)| st > b) {
                *slot = Some((i, st));
            }
        }
        c
    }

    /// Fraction of samples whose noncontextual decision differs from their label.
    pub fn error_rate(&self, samples: &[LabeledSample<T>]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let wrong = samples
            .iter()
            .filter(|s| self.classify(&s.features).ok().and_then(Decision::class) != Some(s.label))
            .count();
        wrong as f64 / samples.len() as f64
    }
}

struct Competitors<T> {
    own: Option<(usize, T)>,
    other: Option<(usize, T)>,
}

impl<T: Scalar> Competitors<T> {
    fn strengths(&self) -> (T, T) {
        (
            self.own.map_or(T::zero(), |(_, s)| s),
            self.other.map_or(T::zero(), |(_, s)| s),
        )
    }
}

/// Tuning error `E = sum (1 - alpha_c + alpha_not_c)^2` from raw firing
/// strengths, where `alpha_c` is the best own-class rule and `alpha_not_c`
/// the best rule of any other class.
pub fn tuning_error<T: Scalar>(rb: &Rulebase<T>, samples: &[LabeledSample<T>]) -> T {
    let mut scratch = Vec::with_capacity(rb.dim);
    samples
        .iter()
        .map(|s| {
            let (own, other) = rb.competitors(s, &mut scratch).strengths();
            let e = T::one() - own + other;
            e * e
        })
        .sum()
}

/// Gradient of the tuning error with respect to every center and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleGradient<T> {
    pub center: Vec<Vec<T>>,
    pub spread: Vec<Vec<T>>,
}

impl<T: Scalar> RuleGradient<T> {
    fn zeros(rb: &Rulebase<T>) -> Self {
        Self {
            center: vec![vec![T::zero(); rb.dim]; rb.len()],
            spread: vec![vec![T::zero(); rb.dim]; rb.len()],
        }
    }
}

/// Adds `weight * d(strength)/d(params)` of `rule` at `x` into the gradient row.
fn accumulate_strength_gradient<T: Scalar>(
    rule: &FuzzyRule<T>,
    x: &[T],
    q: T,
    weight: T,
    center_grad: &mut [T],
    spread_grad: &mut [T],
    scratch: &mut Vec<T>,
) {
    rule.ln_memberships_into(x, scratch);
    let strength = soft_match_ln(scratch, q);
    // d strength / d ln(mu_j) = strength * softmax_j(q ln mu).
    let lse = log_sum_exp(scratch.iter().map(|&l| q * l));
    let floor = T::lit(MEMBERSHIP_FLOOR.ln());
    let two = T::lit(2.0);
    for j in 0..x.len() {
        let ln_mu = scratch[j];
        if ln_mu <= floor {
            continue;
        }
        let share = (q * ln_mu - lse).exp();
        let g = weight * strength * share;
        let s = rule.spread[j];
        let d = x[j] - rule.center[j];
        center_grad[j] += g * two * d / (s * s);
        spread_grad[j] += g * two * d * d / (s * s * s);
    }
}

fn gradient_over<T: Scalar>(
    rb: &Rulebase<T>,
    samples: &[LabeledSample<T>],
    fired_only: bool,
) -> (T, RuleGradient<T>, usize) {
    let mut grad = RuleGradient::zeros(rb);
    let mut scratch = Vec::with_capacity(rb.dim);
    let mut err = T::zero();
    let mut active = 0;
    let two = T::lit(2.0);
    for s in samples {
        let comp = rb.competitors(s, &mut scratch);
        let (own, other) = comp.strengths();
        let e = T::one() - own + other;
        err += e * e;
        if fired_only && (own < rb.epsilon || other < rb.epsilon || comp.own.is_none() || comp.other.is_none()) {
            continue;
        }
        active += 1;
        if let Some((i, _)) = comp.own {
            accumulate_strength_gradient(
                &rb.rules[i],
                &s.features,
                rb.q,
                -two * e,
                &mut grad.center[i],
                &mut grad.spread[i],
                &mut scratch,
            );
        }
        if let Some((i, _)) = comp.other {
            accumulate_strength_gradient(
                &rb.rules[i],
                &s.features,
                rb.q,
                two * e,
                &mut grad.center[i],
                &mut grad.spread[i],
                &mut scratch,
            );
        }
    }
    (err, grad, active)
}

/// Tuning error and its exact gradient over all samples.
pub fn error_gradient<T: Scalar>(rb: &Rulebase<T>, samples: &[LabeledSample<T>]) -> (T, RuleGradient<T>) {
    let (e, g, _) = gradient_over(rb, samples, false);
    (e, g)
}

/// Per-epoch record of a tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport<T> {
    /// E before tuning, then after every accepted epoch.
    pub error_history: Vec<T>,
    pub rejected_steps: usize,
    pub final_learning_rate: T,
}

/// Gradient descent on the centers and spreads of the competing rules.
///
/// Each epoch recomputes, for every sample, the best own-class rule and the
/// best other-class rule, and takes one batch step of size
/// `learning_rate / active_samples`. Samples that do not fire both an
/// own-class and an other-class rule above epsilon contribute no gradient.
/// A step that raises E is discarded and retried with half the rate, at most
/// ten times. Spreads are projected onto `[spread_floor, inf)`.
pub fn tune_rules<T: Scalar>(
    rb: &Rulebase<T>,
    samples: &[LabeledSample<T>],
    config: &RulebaseConfig<T>,
) -> Result<(Rulebase<T>, TuneReport<T>), RulebaseError> {
    config.validate()?;
    let mut current = rb.clone();
    let mut lr = config.learning_rate;
    let mut history = vec![tuning_error(&current, samples)];
    let mut rejected = 0;
    for _ in 0..config.max_tune_epochs {
        let (e_old, grad, active) = gradient_over(&current, samples, true);
        if active == 0 || e_old == T::zero() {
            break;
        }
        let scale = T::one() / T::from_count(active);
        let mut accepted = None;
        for _ in 0..=10 {
            let step = lr * scale;
            let mut trial = current.clone();
            for (i, rule) in trial.rules.iter_mut().enumerate() {
                for j in 0..rule.dim() {
                    rule.center[j] -= step * grad.center[i][j];
                    rule.spread[j] = (rule.spread[j] - step * grad.spread[i][j]).max(config.spread_floor);
                }
            }
            let e_new = tuning_error(&trial, samples);
            if e_new <= e_old {
                accepted = Some((trial, e_new));
                break;
            }
            rejected += 1;
            lr /= T::lit(2.0);
        }
        let Some((trial, e_new)) = accepted else { break };
        current = trial;
        history.push(e_new);
        if (e_old - e_new) < config.min_improvement * e_old {
            break;
        }
    }
    Ok((
        current,
        TuneReport {
            error_history: history,
            rejected_steps: rejected,
            final_learning_rate: lr,
        },
    ))
}

fn fmt_num<T: Scalar>(x: T) -> String {
    format!("{:.17e}", x)
}

/// Text form: a header line, then one line per rule holding the class, the
/// `p` centers and the `p` spreads.
///
/// ```text
/// fuzzy-rulebase 1 p=2 c=2 rules=1 q=-1.00000000000000000e1 epsilon=1.00000000000000002e-2
/// 0 1.0e1 2.0e1 3.5e0 4.0e0
/// ```
pub fn rulebase_to_string<T: Scalar>(rb: &Rulebase<T>) -> String {
    let mut s = format!(
        "{FORMAT_MAGIC} {FORMAT_VERSION} p={} c={} rules={} q={} epsilon={}\n",
        rb.dim,
        rb.class_count,
        rb.rules.len(),
        fmt_num(rb.q),
        fmt_num(rb.epsilon)
    );
    for r in &rb.rules {
        s.push_str(&r.class.to_string());
        for v in r.center.iter().chain(&r.spread) {
            let _ = write!(s, " {}", fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

pub fn rulebase_from_str<T: Scalar>(text: &str) -> Result<Rulebase<T>, RulebaseError> {
    let malformed = |line: usize, reason: String| RulebaseError::Malformed { line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file".into()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(FORMAT_MAGIC) {
        return Err(malformed(1, format!("expected `{FORMAT_MAGIC}` header")));
    }
    let version: u32 = tokens
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| malformed(1, "missing version".into()))?;
    if version != FORMAT_VERSION {
        return Err(RulebaseError::Version(version));
    }
    let mut kv = std::collections::BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| malformed(1, format!("bad field `{t}`")))?;
        kv.insert(k, v);
    }
    let field = |k: &str| kv.get(k).copied().ok_or_else(|| malformed(1, format!("missing `{k}`")));
    let count = |k: &str| -> Result<usize, RulebaseError> {
        field(k)?
            .parse()
            .map_err(|_| malformed(1, format!("`{k}` is not a count")))
    };
    let real = |k: &str| -> Result<T, RulebaseError> {
        field(k)?
            .parse()
            .map_err(|_| malformed(1, format!("`{k}` is not a number")))
    };
    let (dim, classes, n_rules) = (count("p")?, count("c")?, count("rules")?);
    let (q, epsilon) = (real("q")?, real("epsilon")?);
    let mut rules = Vec::with_capacity(n_rules);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let class: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| malformed(lineno, "bad class index".into()))?;
        let values: Vec<T> = parts
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| malformed(lineno, format!("bad number `{v}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 2 * dim {
            return Err(malformed(
                lineno,
                format!("expected {} values, found {}", 2 * dim, values.len()),
            ));
        }
        let (center, spread) = values.split_at(dim);
        rules.push(FuzzyRule::new(center.to_vec(), spread.to_vec(), class)?);
    }
    if rules.len() != n_rules {
        return Err(malformed(
            1,
            format!("header declares {n_rules} rules, found {}", rules.len()),
        ));
    }
    Rulebase::new(dim, classes, q, epsilon, rules)
}

pub fn save_rulebase<T: Scalar>(rb: &Rulebase<T>, path: impl AsRef<Path>) -> Result<(), RulebaseError> {
    fs::write(path.as_ref(), rulebase_to_string(rb))
        .map_err(|e| RulebaseError::Io(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_rulebase<T: Scalar>(path: impl AsRef<Path>) -> Result<Rulebase<T>, RulebaseError> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| RulebaseError::Io(format!("{}: {e}", path.as_ref().display())))?;
    rulebase_from_str(&text)
}
