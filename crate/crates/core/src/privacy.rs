//! Gaussian noise calibration, zero-concentrated composition accounting and
//! per-iteration budget schedules.
//!
//! Budgets compose linearly in ρ (zCDP) and are converted to `(ε, δ)` only at
//! the edges via `ε = ρ + 2·sqrt(ρ·ln(1/δ))`. Neighbouring datasets differ by
//! replacing one record.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// ℓ2 sensitivity of a one-vote-per-record histogram under replace-one.
pub const HISTOGRAM_SENSITIVITY: f64 = std::f64::consts::SQRT_2;

/// `ε` of a ρ-zCDP guarantee at failure probability `δ`.
pub fn epsilon_from_rho(rho: f64, delta: f64) -> f64 {
    if rho.is_infinite() {
        return f64::INFINITY;
    }
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

/// Inverts [`epsilon_from_rho`] by bisection to full precision. The lower
/// bracket end is returned, so `epsilon_from_rho` of the result never
/// exceeds `epsilon`.
pub fn rho_from_epsilon(epsilon: f64, delta: f64) -> f64 {
    if epsilon.is_infinite() {
        return f64::INFINITY;
    }
    // epsilon_from_rho(epsilon) >= epsilon, so [0, epsilon] brackets the root
    let (mut lo, mut hi) = (0.0_f64, epsilon);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if epsilon_from_rho(mid, delta) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Total privacy budget of a run. `epsilon = ∞` is the non-private mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidBudget(format!("delta {delta} not in (0, 1)")));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidBudget(format!("epsilon {epsilon} must be positive")));
        }
        Ok(PrivacyBudget { epsilon, delta, rho: rho_from_epsilon(epsilon, delta) })
    }

    pub fn infinite(delta: f64) -> Result<Self> {
        Self::new(f64::INFINITY, delta)
    }

    pub fn from_rho(rho: f64, delta: f64) -> Result<Self> {
        if rho.is_nan() || rho <= 0.0 {
            return Err(Error::InvalidBudget(format!("rho {rho} must be positive")));
        }
        let mut b = Self::new(epsilon_from_rho(rho, delta), delta)?;
        b.rho = rho;
        Ok(b)
    }

    pub fn is_infinite(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// Fresh ledger capped at this budget.
    pub fn ledger(&self) -> AccountantLedger {
        AccountantLedger::new(self.rho, self.delta)
    }
}

/// Gaussian noise scale for a statistic of the given ℓ2 sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    /// Standard deviation; zero only in the non-private mode.
    pub sigma: f64,
    pub sensitivity: f64,
}

impl NoiseSpec {
    pub fn none(sensitivity: f64) -> Self {
        NoiseSpec { sigma: 0.0, sensitivity }
    }

    /// ρ this release costs; infinite when σ = 0.
    pub fn rho(&self) -> f64 {
        if self.sigma == 0.0 {
            f64::INFINITY
        } else {
            self.sensitivity * self.sensitivity / (2.0 * self.sigma * self.sigma)
        }
    }
}

/// σ such that a Gaussian release of the given sensitivity costs the whole budget.
pub fn calibrate(budget: &PrivacyBudget, sensitivity: f64) -> Result<NoiseSpec> {
    if budget.is_infinite() {
        return Err(Error::InfiniteBudget);
    }
    calibrate_rho(budget.rho, sensitivity)
}

pub fn calibrate_rho(rho: f64, sensitivity: f64) -> Result<NoiseSpec> {
    if sensitivity.is_nan() || sensitivity <= 0.0 {
        return Err(Error::NonPositiveSensitivity(sensitivity));
    }
    if rho.is_infinite() {
        return Err(Error::InfiniteBudget);
    }
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::InvalidBudget(format!("rho {rho} must be positive")));
    }
    Ok(NoiseSpec { sigma: sensitivity / (2.0 * rho).sqrt(), sensitivity })
}

/// Like [`calibrate_rho`] but maps an infinite ρ to σ = 0 explicitly.
pub fn noise_for_rho(rho: f64, sensitivity: f64) -> Result<NoiseSpec> {
    if rho.is_infinite() {
        if sensitivity.is_nan() || sensitivity <= 0.0 {
            return Err(Error::NonPositiveSensitivity(sensitivity));
        }
        Ok(NoiseSpec::none(sensitivity))
    } else {
        calibrate_rho(rho, sensitivity)
    }
}

pub fn add_gaussian<R: Rng + ?Sized>(values: &[f64], spec: &NoiseSpec, rng: &mut R) -> Vec<f64> {
    if spec.sigma == 0.0 {
        return values.to_vec();
    }
    let normal = Normal::new(0.0, spec.sigma).expect("finite sigma");
    values.iter().map(|v| v + normal.sample(rng)).collect()
}

/// Zeroes negatives and normalizes; an all-zero vector becomes uniform.
pub fn clamp_normalize(values: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Even,
    Increasing,
    Decreasing,
}

/// Fractions of the total ρ spent in each iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetSchedule {
    pub kind: ScheduleKind,
    pub shares: Vec<f64>,
}

impl BudgetSchedule {
    pub fn iterations(&self) -> usize {
        self.shares.len()
    }
}

pub fn make_schedule(kind: ScheduleKind, iterations: usize) -> Result<BudgetSchedule> {
    if iterations == 0 {
        return Err(Error::ZeroIterations);
    }
    let t = iterations as f64;
    let triangular = t * (t + 1.0) / 2.0;
    let shares = match kind {
        ScheduleKind::Even => vec![1.0 / t; iterations],
        ScheduleKind::Increasing => (1..=iterations).map(|s| s as f64 / triangular).collect(),
        ScheduleKind::Decreasing => (1..=iterations).rev().map(|s| s as f64 / triangular).collect(),
    };
    Ok(BudgetSchedule { kind, shares })
}

/// σ of each iteration's vote histogram when the total budget is split evenly.
pub fn sigma_per_iteration(budget: &PrivacyBudget, iterations: usize) -> Result<f64> {
    let schedule = make_schedule(ScheduleKind::Even, iterations)?;
    Ok(calibrate_rho(budget.rho * schedule.shares[0], HISTOGRAM_SENSITIVITY)?.sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Charge {
    pub label: String,
    pub rho: f64,
}

/// Append-only record of ρ spent, capped at the configured budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantLedger {
    charges: Vec<Charge>,
    total_rho: f64,
    cap: f64,
    delta: f64,
}

impl AccountantLedger {
    pub fn new(cap: f64, delta: f64) -> Self {
        AccountantLedger { charges: Vec::new(), total_rho: 0.0, cap, delta }
    }

    pub fn charge(&mut self, label: impl Into<String>, rho: f64) -> Result<()> {
        let label = label.into();
        if rho.is_nan() || rho < 0.0 {
            return Err(Error::InvalidBudget(format!("charge `{label}` has invalid rho {rho}")));
        }
        let total = self.total_rho + rho;
        // summing schedule shares may overshoot the cap by rounding only
        let slack = 1e-12 * self.cap.max(1.0);
        if total > self.cap + slack {
            return Err(Error::BudgetExceeded { label, rho, total, cap: self.cap });
        }
        self.charges.push(Charge { label, rho });
        self.total_rho = total;
        Ok(())
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    pub fn total_rho(&self) -> f64 {
        self.total_rho
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn remaining(&self) -> f64 {
        (self.cap - self.total_rho).max(0.0)
    }

    /// ε of everything charged so far.
    pub fn epsilon_spent(&self) -> f64 {
        if self.total_rho == 0.0 {
            0.0
        } else {
            epsilon_from_rho(self.total_rho, self.delta)
        }
    }

    /// JSON dump: charges with cumulative ρ plus the final `(ε, δ)`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut cumulative = 0.0;
        let charges: Vec<serde_json::Value> = self
            .charges
            .iter()
            .map(|c| {
                cumulative += c.rho;
                serde_json::json!({
                    "label": c.label,
                    "rho": json_real(c.rho),
                    "cumulative": json_real(cumulative),
                })
            })
            .collect();
        serde_json::json!({
            "charges": charges,
            "total_rho": json_real(self.total_rho),
            "cap_rho": json_real(self.cap),
            "final_epsilon": json_real(self.epsilon_spent()),
            "final_delta": self.delta,
        })
    }
}

/// Reals in JSON, with infinities spelled `"inf"`.
pub fn json_real(v: f64) -> serde_json::Value {
    if v.is_infinite() {
        serde_json::Value::String(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        serde_json::json!(v)
    }
}

/// Text form of a real for CSV files, with `inf` for the non-private mode.
pub fn format_real(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// One root seed per run; each mechanism invocation draws from an
/// independent stream derived from a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, label: &str) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update(label.as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }

    /// Child tree for a nested component.
    pub fn child(&self, label: &str) -> SeedTree {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update(b"/");
        h.update(label.as_bytes());
        let digest = h.finalize();
        SeedTree { root: u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrate_examples() {
        let b = PrivacyBudget::from_rho(1.0, 1e-6).unwrap();
        let spec = calibrate(&b, 2f64.sqrt()).unwrap();
        assert!((spec.sigma - 1.0).abs() < 1e-12);
        let doubled = calibrate(&b, 2.0 * 2f64.sqrt()).unwrap();
        assert!((doubled.sigma - 2.0 * spec.sigma).abs() < 1e-12);
        assert!((spec.rho() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_bisection_solves_forward_formula() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let forward = b.rho + 2.0 * (b.rho * (1e6f64).ln()).sqrt();
        assert!((forward - 1.0).abs() < 1e-9);
        // closed form: sqrt(rho) = sqrt(L + eps) - sqrt(L)
        let l = (1e6f64).ln();
        let closed = ((l + 1.0).sqrt() - l.sqrt()).powi(2);
        assert!((b.rho - closed).abs() < 1e-12);
    }

    #[test]
    fn calibrate_errors() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert!(matches!(calibrate(&b, 0.0), Err(Error::NonPositiveSensitivity(_))));
        assert!(matches!(calibrate(&b, -1.0), Err(Error::NonPositiveSensitivity(_))));
        let inf = PrivacyBudget::infinite(1e-6).unwrap();
        assert!(matches!(calibrate(&inf, 1.0), Err(Error::InfiniteBudget)));
        assert_eq!(noise_for_rho(inf.rho, 1.0).unwrap().sigma, 0.0);
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(0.0, 1e-6).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 1e-6).is_err());
    }

    #[test]
    fn gaussian_identity_and_determinism() {
        let v = vec![1.0, -2.0, 3.5];
        let mut rng = SeedTree::new(1).stream("x");
        assert_eq!(add_gaussian(&v, &NoiseSpec::none(1.0), &mut rng), v);
        let spec = NoiseSpec { sigma: 2.0, sensitivity: 1.0 };
        let a = add_gaussian(&v, &spec, &mut SeedTree::new(9).stream("n"));
        let b = add_gaussian(&v, &spec, &mut SeedTree::new(9).stream("n"));
        assert_eq!(a, b);
        let c = add_gaussian(&v, &spec, &mut SeedTree::new(9).stream("m"));
        assert_ne!(a, c);
    }

    #[test]
    fn clamp_normalize_examples() {
        let p = clamp_normalize(&[3.0, -1.0, 2.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && p[1] == 0.0 && (p[2] - 0.4).abs() < 1e-15);
        assert_eq!(clamp_normalize(&[0.25, 0.75]), vec![0.25, 0.75]);
        assert_eq!(clamp_normalize(&[-5.0, -2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn schedules() {
        let inc = make_schedule(ScheduleKind::Increasing, 3).unwrap();
        for (s, e) in inc.shares.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((s - e).abs() < 1e-15);
        }
        assert_eq!(make_schedule(ScheduleKind::Even, 1).unwrap().shares, vec![1.0]);
        let dec = make_schedule(ScheduleKind::Decreasing, 2).unwrap();
        assert!((dec.shares[0] - 2.0 / 3.0).abs() < 1e-15 && (dec.shares[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(make_schedule(ScheduleKind::Even, 0), Err(Error::ZeroIterations)));
    }

    #[test]
    fn ledger_cap() {
        let mut ledger = AccountantLedger::new(1.0, 1e-6);
        assert_eq!(ledger.total_rho(), 0.0);
        ledger.charge("a", 0.5).unwrap();
        ledger.charge("b", 0.5).unwrap();
        assert_eq!(ledger.total_rho(), 1.0);
        let before = ledger.clone();
        assert!(matches!(ledger.charge("c", 0.01), Err(Error::BudgetExceeded { .. })));
        assert_eq!(ledger, before);
        assert!(ledger.charge("neg", -1.0).is_err());
        let dump = ledger.to_json();
        assert_eq!(dump["charges"][1]["cumulative"], serde_json::json!(1.0));
    }

    #[test]
    fn infinite_ledger_accepts_infinite_charges() {
        let b = PrivacyBudget::infinite(1e-6).unwrap();
        let mut ledger = b.ledger();
        ledger.charge("x", f64::INFINITY).unwrap();
        assert!(ledger.epsilon_spent().is_infinite());
        assert_eq!(ledger.to_json()["final_epsilon"], "inf");
    }

    #[test]
    fn seed_streams_are_labelled() {
        let t = SeedTree::new(7);
        let a: u64 = t.stream("a").random();
        let a2: u64 = t.stream("a").random();
        let b: u64 = t.stream("b").random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(t.child("x").root(), t.child("y").root());
    }
}
