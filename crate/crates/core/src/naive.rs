//! Baseline stock-out predictors that look only at a node's own inventory
//! position, plus the closed-form single-stage predictor they approximate.

use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum NaiveError {
    #[error("cannot fit a normal distribution to an empty list")]
    Empty,
    #[error("probability {0} not in (0, 1)")]
    Probability(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFit {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator), 0 for one value.
    pub std: f64,
    pub count: usize,
}

pub fn fit_normal(values: &[f64]) -> Result<NormalFit, NaiveError> {
    if values.is_empty() {
        return Err(NaiveError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(NormalFit {
        mean,
        std,
        count: values.len(),
    })
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn inv_norm_cdf(p: f64) -> Result<f64, NaiveError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NaiveError::Probability(p));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Algorithm 1: threshold at a quantile of the positions that preceded a
/// stock-out.
#[derive(Debug, Clone, PartialEq)]
pub struct Naive1Model {
    /// `None` when training held no stock-out; the model then never fires.
    pub fit: Option<NormalFit>,
    pub alpha: f64,
    pub eta: f64,
}

impl Naive1Model {
    pub fn fit(pairs: &[(f64, u8)], alpha: f64) -> Result<Self, NaiveError> {
        let s: Vec<f64> = pairs.iter().filter(|p| p.1 == 1).map(|p| p.0).collect();
        let fit = if s.is_empty() {
            None
        } else {
            Some(fit_normal(&s)?)
        };
        Self::from_fit(fit, alpha)
    }

    pub fn from_fit(fit: Option<NormalFit>, alpha: f64) -> Result<Self, NaiveError> {
        let z = inv_norm_cdf(alpha)?;
        let eta = fit.map_or(f64::NEG_INFINITY, |f| f.mean + z * f.std);
        Ok(Naive1Model { fit, alpha, eta })
    }

    pub fn no_stockouts(&self) -> bool {
        self.fit.is_none()
    }

    pub fn predict(&self, ip: f64) -> u8 {
        u8::from(ip < self.eta)
    }
}

/// Algorithm 2: per-bin stock-out and no-stock-out counts over equal-width
/// bins of the observed position range.
#[derive(Debug, Clone, PartialEq)]
pub struct Naive2Model {
    pub lower: f64,
    pub upper: f64,
    pub so: Vec<u64>,
    pub nso: Vec<u64>,
    pub gamma: f64,
}

impl Naive2Model {
    pub fn fit(pairs: &[(f64, u8)], bins: usize, gamma: f64) -> Result<Self, NaiveError> {
        if pairs.is_empty() {
            return Err(NaiveError::Empty);
        }
        if bins == 0 {
            return Err(NaiveError::InvalidParameter(
                "bin count must be positive".into(),
            ));
        }
        let lower = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let upper = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let mut model = Naive2Model {
            lower,
            upper,
            so: vec![0; bins],
            nso: vec![0; bins],
            gamma: 1.0,
        };
        for &(ip, y) in pairs {
            let b = model.bin(ip);
            if y == 1 {
                model.so[b] += 1;
            } else {
                model.nso[b] += 1;
            }
        }
        model.with_gamma(gamma)
    }

    pub fn from_counts(
        lower: f64,
        upper: f64,
        so: Vec<u64>,
        nso: Vec<u64>,
        gamma: f64,
    ) -> Result<Self, NaiveError> {
        if so.is_empty() || so.len() != nso.len() {
            return Err(NaiveError::InvalidParameter(
                "counter lengths differ".into(),
            ));
        }
        Naive2Model {
            lower,
            upper,
            so,
            nso,
            gamma: 1.0,
        }
        .with_gamma(gamma)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, NaiveError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(NaiveError::InvalidParameter(format!(
                "gamma {gamma} must be positive"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Out-of-range positions fall into the nearest end bin.
    pub fn bin(&self, ip: f64) -> usize {
        let k = self.so.len();
        let width = (self.upper - self.lower) / k as f64;
        if !(width > 0.0) {
            return 0;
        }
        let idx = ((ip - self.lower) / width).floor();
        if idx < 0.0 {
            0
        } else {
            (idx as usize).min(k - 1)
        }
    }

    pub fn predict(&self, ip: f64) -> u8 {
        let b = self.bin(ip);
        u8::from(self.so[b] as f64 * self.gamma > self.nso[b] as f64)
    }
}

/// Maps a probability-like grid value to Naive-2's ratio so that a larger
/// value fires more often: `gamma = a / (1 - a)`.
pub fn gamma_for_alpha(alpha: f64) -> f64 {
    alpha / (1.0 - alpha)
}

/// Algorithm 3: threshold at a quantile of the lead-time demand, taken as
/// the `L`-fold sum of independent per-period demands.
#[derive(Debug, Clone, PartialEq)]
pub struct Naive3Model {
    pub demand: NormalFit,
    pub lead_time: u32,
    pub alpha: f64,
    /// Labels mark `IL < level`; zero for plain stock-outs.
    pub level: f64,
    pub eta: f64,
}

impl Naive3Model {
    pub fn fit(demands: &[f64], lead_time: u32, alpha: f64) -> Result<Self, NaiveError> {
        Self::from_fit(fit_normal(demands)?, lead_time, alpha, 0.0)
    }

    pub fn from_fit(
        demand: NormalFit,
        lead_time: u32,
        alpha: f64,
        level: f64,
    ) -> Result<Self, NaiveError> {
        if lead_time == 0 {
            return Err(NaiveError::InvalidParameter(
                "lead time must be at least 1".into(),
            ));
        }
        let l = f64::from(lead_time);
        let eta = l * demand.mean + inv_norm_cdf(alpha)? * l.sqrt() * demand.std;
        Ok(Naive3Model {
            demand,
            lead_time,
            alpha,
            level,
            eta,
        })
    }

    /// Mean and standard deviation of the lead-time demand.
    pub fn lead_time_demand(&self) -> (f64, f64) {
        let l = f64::from(self.lead_time);
        (l * self.demand.mean, l.sqrt() * self.demand.std)
    }

    pub fn predict(&self, ip: f64) -> u8 {
        u8::from(ip < self.eta + self.level)
    }
}

/// `P(IL_{t+L} < 0)` for a single stage with known normal demand, and the
/// decision `P > alpha`.
pub fn analytic_single_stage(
    ip: f64,
    mean: f64,
    std: f64,
    lead_time: u32,
    alpha: f64,
) -> Result<(u8, f64), NaiveError> {
    if !(std > 0.0) {
        return Err(NaiveError::InvalidParameter(format!(
            "demand std {std} must be positive"
        )));
    }
    if lead_time == 0 {
        return Err(NaiveError::InvalidParameter(
            "lead time must be at least 1".into(),
        ));
    }
    let l = f64::from(lead_time);
    let p = norm_cdf((l * mean - ip) / (l.sqrt() * std));
    Ok((u8::from(p > alpha), p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// CDF by composite Simpson integration of the density from 0.
    fn simpson_cdf(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 8.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if simpson_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_quadrature_oracle() {
        let oracle = bisect_quantile(0.975);
        assert!((oracle - 1.959963984540054).abs() < 1e-10);
        assert!((inv_norm_cdf(0.975).unwrap() - oracle).abs() < 1e-8);
        for p in [0.6, 0.8, 0.9, 0.99, 0.999] {
            assert!(
                (inv_norm_cdf(p).unwrap() - bisect_quantile(p)).abs() < 1e-8,
                "p={p}"
            );
        }
        assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
        assert!(inv_norm_cdf(0.0).is_err() && inv_norm_cdf(1.0).is_err());
    }

    #[test]
    fn cdf_matches_quadrature_oracle() {
        for x in [0.1, 0.5, 1.0, 2.0, 3.5] {
            assert!((norm_cdf(x) - simpson_cdf(x)).abs() < 1e-10, "x={x}");
            assert!((norm_cdf(-x) - (1.0 - simpson_cdf(x))).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_fit_examples() {
        let f = fit_normal(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!((f.mean, f.std, f.count), (4.0, 2.0, 3));
        let one = fit_normal(&[5.0]).unwrap();
        assert_eq!((one.mean, one.std), (5.0, 0.0));
        assert_eq!(fit_normal(&[]), Err(NaiveError::Empty));
    }

    #[test]
    fn naive1_examples() {
        let pairs = [(5.0, 1), (7.0, 1), (9.0, 1), (30.0, 0)];
        let m = Naive1Model::fit(&pairs, 0.5).unwrap();
        assert_eq!(m.eta, 7.0);
        assert_eq!(m.predict(6.0), 1);
        assert_eq!(m.predict(7.0), 0);
        let none = Naive1Model::fit(&[(3.0, 0)], 0.5).unwrap();
        assert!(none.no_stockouts());
        assert_eq!(none.predict(-1e9), 0);
    }

    #[test]
    fn naive2_examples() {
        let m = Naive2Model::from_counts(0.0, 1.0, vec![3], vec![5], 2.0).unwrap();
        assert_eq!(m.predict(-4.0), 1);
        assert_eq!(m.predict(100.0), 1);
        let empty = Naive2Model::from_counts(0.0, 2.0, vec![0, 1], vec![0, 1], 5.0).unwrap();
        assert_eq!(empty.predict(0.5), 0);
        let tiny = Naive2Model::from_counts(0.0, 1.0, vec![100], vec![1], 1e-9).unwrap();
        assert_eq!(tiny.predict(0.5), 0);
        let fitted = Naive2Model::fit(&[(0.0, 1), (10.0, 0), (4.0, 1)], 2, 1.0).unwrap();
        assert_eq!(
            (fitted.so.clone(), fitted.nso.clone()),
            (vec![2, 0], vec![0, 1])
        );
        assert_eq!(fitted.bin(5.0), 1);
    }

    #[test]
    fn naive3_examples() {
        let fit = NormalFit {
            mean: 10.0,
            std: 2.0,
            count: 100,
        };
        let m = Naive3Model::from_fit(fit, 1, 0.5, 0.0).unwrap();
        assert_eq!(m.eta, 10.0);
        assert_eq!(m.predict(9.0), 1);
        assert_eq!(m.predict(10.0), 0);
        let four = Naive3Model::from_fit(fit, 4, 0.5, 0.0).unwrap();
        assert_eq!(four.lead_time_demand(), (40.0, 4.0));
    }

    #[test]
    fn analytic_examples() {
        let (d, p) = analytic_single_stage(20.0, 10.0, 2.0, 2, 0.4).unwrap();
        assert_eq!((d, p), (1, 0.5));
        assert_eq!(analytic_single_stage(20.0, 10.0, 2.0, 2, 0.5).unwrap().0, 0);
        assert_eq!(
            analytic_single_stage(1e9, 10.0, 2.0, 2, 0.01).unwrap(),
            (0, 0.0)
        );
        assert!(analytic_single_stage(20.0, 10.0, 0.0, 2, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn quantile_is_antisymmetric(p in 1e-6f64..0.999999) {
            let a = inv_norm_cdf(p).unwrap();
            let b = inv_norm_cdf(1.0 - p).unwrap();
            prop_assert!((a + b).abs() < 1e-9);
        }

        #[test]
        fn quantile_inverts_cdf(p in 1e-6f64..0.999999) {
            prop_assert!((norm_cdf(inv_norm_cdf(p).unwrap()) - p).abs() < 1e-10);
        }

        #[test]
        fn naive1_and_naive3_grow_with_alpha(
            s in prop::collection::vec(-50f64..50.0, 1..40),
            ip in -80f64..80.0,
            a1 in 0.01f64..0.99,
            a2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let pairs: Vec<(f64, u8)> = s.iter().map(|&v| (v, 1)).collect();
            let n1 = (Naive1Model::fit(&pairs, lo).unwrap(), Naive1Model::fit(&pairs, hi).unwrap());
            prop_assert!(n1.0.predict(ip) <= n1.1.predict(ip));
            let n3 = (Naive3Model::fit(&s, 2, lo).unwrap(), Naive3Model::fit(&s, 2, hi).unwrap());
            prop_assert!(n3.0.predict(ip) <= n3.1.predict(ip));
        }

        #[test]
        fn naive2_grows_with_gamma(
            pairs in prop::collection::vec((-50f64..50.0, 0u8..2), 1..60),
            ip in -80f64..80.0,
            g1 in 0.01f64..100.0,
            g2 in 0.01f64..100.0,
        ) {
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let m = Naive2Model::fit(&pairs, DEFAULT_BINS, lo).unwrap();
            let a = m.predict(ip);
            let b = m.with_gamma(hi).unwrap().predict(ip);
            prop_assert!(a <= b);
        }

        #[test]
        fn naive3_matches_analytic_at_complementary_threshold(
            ip in 0f64..60.0,
            alpha in 0.01f64..0.99,
            lead in 1u32..5,
        ) {
            let fit = NormalFit { mean: 10.0, std: 2.0, count: 2 };
            let m = Naive3Model::from_fit(fit, lead, alpha, 0.0).unwrap();
            let (d, _) = analytic_single_stage(ip, 10.0, 2.0, lead, 1.0 - alpha).unwrap();
            let margin = (ip - m.eta).abs();
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(m.predict(ip), d);
        }
    }
}
