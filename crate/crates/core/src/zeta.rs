//! Exact-rational rank-n zeta invariants of an elliptic curve over F_q.
//!
//! Everything here is determined by (q, a, n): the beta recursion
//!
//! ```text
//! (q^n - 1) b_n = (q^n + q^(n-1) - a) b_(n-1) - (q^(n-1) - q) b_(n-2),
//! b_0 = 1, b_(-1) = 0,
//! ```
//!
//! the a-invariant in rank n defined through the beta ratio,
//!
//! ```text
//! a_n = (Q_n + 1) - (Q_n - 1) b_n / b_(n-1),   Q_n = q^n,
//! ```
//!
//! and the equivalent structural recursion
//!
//! ```text
//! a_(n+1) = 1 - q^n + a + (q^n - q)(q^n - 1) / (q^n + 1 - a_n),  a_1 = a.
//! ```
//!
//! The two a_n routes are kept independent and compared exactly in tests and
//! in [`verify_sweep`]. No floating arithmetic appears on any of these paths;
//! comparisons against 2*sqrt(Q_n) are resolved by exact squaring with sign
//! analysis.

use crate::primes::{primes_up_to, require_prime_power};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

/// Exact beta values b_0 .. b_n for a fixed (q, a).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSequence {
    pub q: u64,
    pub a: i64,
    values: Vec<BigRational>,
}

impl BetaSequence {
    /// b_k, panicking past the computed range.
    pub fn beta(&self, k: u32) -> &BigRational {
        &self.values[k as usize]
    }

    pub fn max_rank(&self) -> u32 {
        (self.values.len() - 1) as u32
    }

    pub fn values(&self) -> &[BigRational] {
        &self.values
    }
}

fn check_entry(q: u64, a: i64) -> Result<()> {
    require_prime_power(q)?;
    if (a as i128) * (a as i128) > 4 * q as i128 {
        return Err(Error::HasseViolation { a, q });
    }
    Ok(())
}

/// Run the beta recursion up to index n_max. Exact rationals throughout.
pub fn beta_sequence(q: u64, a: i64, n_max: u32) -> Result<BetaSequence> {
    check_entry(q, a)?;
    let qb = BigInt::from(q);
    let ab = BigInt::from(a);
    let mut values: Vec<BigRational> = Vec::with_capacity(n_max as usize + 1);
    values.push(BigRational::one());
    let mut beta_prev2 = BigRational::zero(); // b_(-1)
    let mut q_nm1 = BigInt::one();
    for _ in 1..=n_max {
        let q_n = &q_nm1 * &qb;
        let c1 = BigRational::from(&q_n + &q_nm1 - &ab);
        let c2 = BigRational::from(&q_nm1 - &qb);
        let den = BigRational::from(&q_n - BigInt::one());
        let beta_prev = values.last().unwrap().clone();
        let beta = (c1 * &beta_prev - c2 * &beta_prev2) / den;
        debug_assert!(beta.is_positive());
        beta_prev2 = beta_prev;
        values.push(beta);
        q_nm1 = q_n;
    }
    Ok(BetaSequence { q, a, values })
}

/// a_n from the beta ratio: (Q_n + 1) - (Q_n - 1) b_n / b_(n-1).
pub fn rank_a_via_beta(bs: &BetaSequence, n: u32) -> Result<BigRational> {
    if n < 1 || n > bs.max_rank() {
        return Err(Error::RankDomain { n, what: "rank_a_via_beta" });
    }
    let q_n = BigInt::from(bs.q).pow(n);
    let ratio = bs.beta(n) / bs.beta(n - 1);
    Ok(BigRational::from(&q_n + 1) - BigRational::from(&q_n - 1) * ratio)
}

/// a_n from the structural recursion, independent of the beta path.
pub fn rank_a_recursive(q: u64, a: i64, n: u32) -> Result<BigRational> {
    check_entry(q, a)?;
    if n < 1 {
        return Err(Error::RankDomain { n, what: "rank_a_recursive" });
    }
    let qb = BigInt::from(q);
    let ab = BigRational::from(BigInt::from(a));
    let mut a_k = ab.clone(); // a_1 = a
    let mut q_k = qb.clone(); // q^k for the step k -> k+1
    for _ in 1..n {
        let den = BigRational::from(&q_k + 1) - &a_k;
        if den.is_zero() {
            // Impossible while a_k < 2 holds (the Eq-80 region).
            return Err(Error::InternalInvariant(format!(
                "q^k + 1 - a_k vanished at q = {q}, a = {a}"
            )));
        }
        let num = BigRational::from((&q_k - &qb) * (&q_k - BigInt::one()));
        a_k = BigRational::from(BigInt::one() - &q_k) + &ab + num / den;
        q_k *= &qb;
    }
    Ok(a_k)
}

/// a_n together with its float view and Q_n.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInvariant {
    pub q: u64,
    pub n: u32,
    pub a_n_exact: BigRational,
    pub a_n_float: f64,
    pub q_n: BigInt,
}

pub fn rank_invariant(q: u64, a: i64, n: u32) -> Result<RankInvariant> {
    let a_n_exact = rank_a_recursive(q, a, n)?;
    let a_n_float = rat_to_f64(&a_n_exact);
    Ok(RankInvariant {
        q,
        n,
        a_n_exact,
        a_n_float,
        q_n: BigInt::from(q).pow(n),
    })
}

/// Derived float view of an exact rational.
pub fn rat_to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("finite rational")
}

/// The rank-n zeta numerator P(T) = alpha (1 - a_n T + Q_n T^2).
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaPoly {
    pub q: u64,
    pub n: u32,
    /// alpha_n(0) = b_(n-1)(0), by the counting miracle.
    pub alpha: BigRational,
    pub a_n: BigRational,
    pub q_n: BigInt,
}

impl ZetaPoly {
    /// Coefficients (c0, c1, c2) of P(T) = c0 + c1 T + c2 T^2.
    pub fn coefficients(&self) -> (BigRational, BigRational, BigRational) {
        let c0 = self.alpha.clone();
        let c1 = -&self.alpha * &self.a_n;
        let c2 = &self.alpha * BigRational::from(self.q_n.clone());
        (c0, c1, c2)
    }

    /// Q_n T^2 P(1/(Q_n T)) = P(T) holds iff c2 == c0 * Q_n, exactly.
    pub fn functional_equation_holds(&self) -> bool {
        let (c0, _, c2) = self.coefficients();
        c2 == c0 * BigRational::from(self.q_n.clone())
    }
}

pub fn zeta_polynomial(q: u64, a: i64, n: u32) -> Result<ZetaPoly> {
    if n < 1 {
        return Err(Error::RankDomain { n, what: "zeta_polynomial" });
    }
    let bs = beta_sequence(q, a, n)?;
    let a_n = rank_a_via_beta(&bs, n)?;
    Ok(ZetaPoly {
        q,
        n,
        alpha: bs.beta(n - 1).clone(),
        a_n,
        q_n: BigInt::from(q).pow(n),
    })
}

/// Outcome of the exact bound checks on one (q, a, n).
///
/// `eq80_ok` and `eq7_ok` are None at n = 1, where those bounds do not apply
/// and the RH check reduces to the Hasse bound.
#[derive(Debug, Clone)]
pub struct RhReport {
    pub q: u64,
    pub n: u32,
    pub a_n: BigRational,
    pub q_n: BigInt,
    /// a_n^2 <= 4 Q_n (zero discriminant boundary included).
    pub rh_ok: bool,
    /// a_n^2 < 4 Q_n.
    pub rh_strict: bool,
    /// 2 > a_n > -2 sqrt(Q_n), by exact squaring (n >= 2).
    pub eq80_ok: Option<bool>,
    /// 1 < b_n/b_(n-1) < (sqrt(Q_n)+1)/(sqrt(Q_n)-1), squared form (n >= 2).
    pub eq7_ok: Option<bool>,
}

impl RhReport {
    pub fn all_ok(&self) -> bool {
        self.rh_ok && self.eq80_ok.unwrap_or(true) && self.eq7_ok.unwrap_or(true)
    }
}

/// x > -2 sqrt(m), resolved exactly: nonnegative x passes, negative x needs
/// x^2 < 4m.
fn gt_neg_two_sqrt(x: &BigRational, m: &BigInt) -> bool {
    if !x.is_negative() {
        return true;
    }
    let four_m = BigRational::from(4 * m);
    x * x < four_m
}

pub fn check_rank_rh(q: u64, a: i64, n: u32) -> Result<RhReport> {
    if n < 1 {
        return Err(Error::RankDomain { n, what: "check_rank_rh" });
    }
    let bs = beta_sequence(q, a, n)?;
    let a_n = rank_a_via_beta(&bs, n)?;
    let q_n = BigInt::from(q).pow(n);
    let four_q_n = BigRational::from(4 * &q_n);
    let sq = &a_n * &a_n;
    let rh_ok = sq <= four_q_n;
    let rh_strict = sq < four_q_n;
    let (eq80_ok, eq7_ok) = if n >= 2 {
        let two = BigRational::from(BigInt::from(2));
        let eq80 = a_n < two && gt_neg_two_sqrt(&a_n, &q_n);
        let (bn, bn1) = (bs.beta(n), bs.beta(n - 1));
        // ratio > 1 and sqrt(Q_n)(b_n - b_(n-1)) < b_n + b_(n-1), squared.
        let diff = bn - bn1;
        let sum = bn + bn1;
        let eq7 = diff.is_positive()
            && BigRational::from(q_n.clone()) * &diff * &diff < &sum * &sum;
        (Some(eq80), Some(eq7))
    } else {
        (None, None)
    };
    Ok(RhReport {
        q,
        n,
        a_n,
        q_n,
        rh_ok,
        rh_strict,
        eq80_ok,
        eq7_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionOrder {
    First,
    Second,
}

/// Truncated asymptotic prediction of a_n for n >= 3:
/// (5-n) + (n-1)a - (n-1)q, with -3a/q appended at second order.
pub fn asymptotic_prediction(q: u64, a: i64, n: u32, order: ExpansionOrder) -> Result<f64> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "asymptotic_prediction" });
    }
    check_entry(q, a)?;
    let first = (5.0 - n as f64) + (n - 1) as f64 * a as f64 - (n - 1) as f64 * q as f64;
    Ok(match order {
        ExpansionOrder::First => first,
        ExpansionOrder::Second => first - 3.0 * a as f64 / q as f64,
    })
}

/// Exact first-order residual R = a_n - [(5-n) + (n-1)a - (n-1)q].
pub fn residual_exact(q: u64, a: i64, n: u32) -> Result<BigRational> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "residual_exact" });
    }
    let a_n = rank_a_recursive(q, a, n)?;
    Ok(residual_from_a_n(&a_n, q, a, n))
}

/// Same residual, reusing an already-computed a_n.
pub fn residual_from_a_n(a_n: &BigRational, q: u64, a: i64, n: u32) -> BigRational {
    let linear: i128 =
        (5 - n as i128) + (n as i128 - 1) * a as i128 - (n as i128 - 1) * q as i128;
    a_n - BigRational::from(BigInt::from(linear))
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// All integers a with a^2 <= 4q (the Hasse-admissible traces).
pub fn admissible_traces(q: u64) -> impl Iterator<Item = i64> {
    let m = isqrt(4 * q) as i64;
    -m..=m
}

/// Result of an exhaustive exact sweep (see [`verify_sweep`]).
#[derive(Debug, Default)]
pub struct SweepReport {
    /// Number of (q, a) pairs visited.
    pub pairs: u64,
    /// Number of (q, a, n) triples whose full check set ran.
    pub triples: u64,
    pub violations: Vec<String>,
}

impl SweepReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Smallest q at which a_n < 0 holds for every admissible a and every
/// n >= 3 (calibrated exactly on the sweep; q = 3 admits a = 3 with
/// a_3 = 1/3 > 0).
pub const NEGATIVITY_THRESHOLD_Q: u64 = 5;

/// Exhaustively verify, in exact arithmetic, for every prime q <= q_max,
/// every admissible a and every 1 <= n <= n_max:
///
/// - both a_n routes agree exactly,
/// - strict RH: a_n^2 < 4 Q_n,
/// - Eq-80 bounds and the squared beta-ratio sandwich (n >= 2),
/// - beta positivity and strict growth from index 2,
/// - a_2 = 1 + a - q,
/// - a_n < 0 for n >= 3 once q >= [`NEGATIVITY_THRESHOLD_Q`].
pub fn verify_sweep(q_max: u64, n_max: u32) -> SweepReport {
    let primes = primes_up_to(q_max);
    let per_prime: Vec<(u64, u64, Vec<String>)> = primes
        .par_iter()
        .map(|&q| {
            let mut pairs = 0u64;
            let mut triples = 0u64;
            let mut bad = Vec::new();
            for a in admissible_traces(q) {
                pairs += 1;
                let bs = match beta_sequence(q, a, n_max) {
                    Ok(bs) => bs,
                    Err(e) => {
                        bad.push(format!("q={q} a={a}: beta failed: {e}"));
                        continue;
                    }
                };
                for k in 0..=n_max {
                    if !bs.beta(k).is_positive() {
                        bad.push(format!("q={q} a={a}: beta_{k} <= 0"));
                    }
                    if k >= 2 && bs.beta(k) <= bs.beta(k - 1) {
                        bad.push(format!("q={q} a={a}: beta_{k} <= beta_{}", k - 1));
                    }
                }
                for n in 1..=n_max {
                    triples += 1;
                    let via_beta = rank_a_via_beta(&bs, n).unwrap();
                    let via_rec = rank_a_recursive(q, a, n).unwrap();
                    if via_beta != via_rec {
                        bad.push(format!("q={q} a={a} n={n}: path mismatch"));
                    }
                    let report = check_rank_rh(q, a, n).unwrap();
                    if !report.rh_strict {
                        bad.push(format!("q={q} a={a} n={n}: RH not strict"));
                    }
                    if report.eq80_ok == Some(false) {
                        bad.push(format!("q={q} a={a} n={n}: Eq-80 failed"));
                    }
                    if report.eq7_ok == Some(false) {
                        bad.push(format!("q={q} a={a} n={n}: Eq-7 failed"));
                    }
                    if n == 2 {
                        let expect =
                            BigRational::from(BigInt::from(1 + a as i128 - q as i128));
                        if via_rec != expect {
                            bad.push(format!("q={q} a={a}: a_2 != 1 + a - q"));
                        }
                    }
                    if n >= 3 && q >= NEGATIVITY_THRESHOLD_Q && !via_rec.is_negative() {
                        bad.push(format!("q={q} a={a} n={n}: a_n >= 0"));
                    }
                }
            }
            (pairs, triples, bad)
        })
        .collect();

    let mut report = SweepReport::default();
    for (pairs, triples, mut bad) in per_prime {
        report.pairs += pairs;
        report.triples += triples;
        report.violations.append(&mut bad);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn beta_initial_and_small_values() {
        let bs = beta_sequence(5, 2, 0).unwrap();
        assert_eq!(bs.values(), &[BigRational::one()]);

        let bs = beta_sequence(5, 2, 2).unwrap();
        assert_eq!(bs.beta(1), &rat(1, 1)); // (q+1-a)/(q-1) = 4/4
        assert_eq!(bs.beta(2), &rat(7, 6)); // 28/24, the q^(n-1)-q term vanishing
    }

    #[test]
    fn beta_rejects_bad_inputs() {
        assert!(matches!(beta_sequence(1, 0, 3), Err(Error::InvalidQ(1))));
        assert!(matches!(beta_sequence(6, 0, 3), Err(Error::InvalidQ(6))));
        assert!(matches!(
            beta_sequence(5, 5, 3),
            Err(Error::HasseViolation { .. })
        ));
    }

    #[test]
    fn rank_a_recovers_classical_trace() {
        for (q, a) in [(5u64, 2i64), (7, -3), (11, 6), (9, 4), (1009, -60)] {
            let bs = beta_sequence(q, a, 1).unwrap();
            assert_eq!(
                rank_a_via_beta(&bs, 1).unwrap(),
                BigRational::from(BigInt::from(a))
            );
        }
    }

    #[test]
    fn rank_a_known_values() {
        let bs = beta_sequence(5, 2, 4).unwrap();
        assert_eq!(rank_a_via_beta(&bs, 2).unwrap(), rat(-2, 1)); // 1 + a - q
        assert_eq!(rank_a_via_beta(&bs, 3).unwrap(), rat(-34, 7));
        assert_eq!(rank_a_recursive(5, 2, 2).unwrap(), rat(-2, 1));
        assert_eq!(rank_a_recursive(5, 2, 3).unwrap(), rat(-34, 7));
        // Path equality at the next rank.
        assert_eq!(
            rank_a_via_beta(&bs, 4).unwrap(),
            rank_a_recursive(5, 2, 4).unwrap()
        );
    }

    #[test]
    fn a2_identity_holds_generally() {
        for q in [2u64, 3, 5, 49, 101, 1009] {
            for a in admissible_traces(q) {
                let got = rank_a_recursive(q, a, 2).unwrap();
                let expect = BigRational::from(BigInt::from(1 + a as i128 - q as i128));
                assert_eq!(got, expect, "q={q} a={a}");
            }
        }
    }

    #[test]
    fn zeta_polynomial_shapes() {
        // n = 1: alpha = 1, the Artin numerator 1 - aT + qT^2.
        let z = zeta_polynomial(5, 2, 1).unwrap();
        assert_eq!(z.alpha, BigRational::one());
        let (c0, c1, c2) = z.coefficients();
        assert_eq!(c0, rat(1, 1));
        assert_eq!(c1, rat(-2, 1));
        assert_eq!(c2, rat(5, 1));
        assert!(z.functional_equation_holds());

        // n = 2 at (5, 2): alpha = b_1 = 1, P = 1 + 2T + 25T^2.
        let z2 = zeta_polynomial(5, 2, 2).unwrap();
        assert_eq!(z2.alpha, BigRational::one());
        let (d0, d1, d2) = z2.coefficients();
        assert_eq!((d0, d1, d2), (rat(1, 1), rat(2, 1), rat(25, 1)));
        assert!(z2.functional_equation_holds());
    }

    #[test]
    fn rh_report_examples() {
        // (5, 2, 3): (34/7)^2 = 1156/49 < 500.
        let r = check_rank_rh(5, 2, 3).unwrap();
        assert!(r.rh_strict && r.all_ok());

        // n = 1 reduces to Hasse.
        let r1 = check_rank_rh(5, 2, 1).unwrap();
        assert!(r1.rh_ok);
        assert_eq!(r1.eq80_ok, None);
        assert_eq!(r1.eq7_ok, None);
    }

    #[test]
    fn asymptotic_predictions() {
        // a = 0 collapses to 5 - n - (n-1)q.
        for (q, n) in [(7u64, 3u32), (11, 5), (101, 4)] {
            let got = asymptotic_prediction(q, 0, n, ExpansionOrder::First).unwrap();
            assert_eq!(got, 5.0 - n as f64 - (n - 1) as f64 * q as f64);
        }
        let first = asymptotic_prediction(5, 2, 3, ExpansionOrder::First).unwrap();
        assert_eq!(first, -4.0);
        let second = asymptotic_prediction(5, 2, 3, ExpansionOrder::Second).unwrap();
        assert!((second - (-4.0 - 1.2)).abs() < 1e-14);
        // Second order moves toward the exact value -34/7.
        let exact = rat_to_f64(&rank_a_recursive(5, 2, 3).unwrap());
        assert!((exact - second).abs() < (exact - first).abs());
        assert!(matches!(
            asymptotic_prediction(5, 2, 2, ExpansionOrder::First),
            Err(Error::RankDomain { .. })
        ));
    }

    #[test]
    fn residual_matches_second_order_scale() {
        // R_3 = a(a + 1 - 3q)/(q^2 + q - a), so at (5, 2): -24/28 = -6/7.
        let r = residual_exact(5, 2, 3).unwrap();
        assert_eq!(r, rat(-6, 7));
        // For a large prime the residual is close to -3a/q.
        let q = 100_003u64;
        let a = 2i64;
        let r = rat_to_f64(&residual_exact(q, a, 3).unwrap());
        assert!((r + 3.0 * a as f64 / q as f64).abs() < 10.0 / (q as f64 * q as f64) * q as f64);
    }

    #[test]
    fn float_view_divergence_below_1e9_relative() {
        // The f64 view must sit within 1e-9 relative of the exact rational;
        // the comparison itself is exact (every f64 is a rational).
        let tol = BigRational::new(BigInt::from(1), BigInt::from(10u64.pow(9)));
        for &(q, a) in &[(1_000_003u64, 1234i64), (9_999_991, -5000), (65_537, 300)] {
            assert!(crate::primes::is_prime(q), "q={q}");
            for n in 1..=8u32 {
                let exact = rank_a_recursive(q, a, n).unwrap();
                let view = BigRational::from_float(rat_to_f64(&exact)).unwrap();
                let rel = (&exact - view).abs() / exact.abs();
                assert!(rel < tol, "q={q} a={a} n={n} rel={}", rat_to_f64(&rel));
            }
        }
    }

    #[test]
    fn small_sweep_clean() {
        let report = verify_sweep(100, 6);
        assert!(report.ok(), "violations: {:?}", report.violations);
        assert_eq!(report.pairs, {
            // primes q <= 100, each with 2*floor(2 sqrt q)+1 admissible traces
            primes_up_to(100)
                .iter()
                .map(|&q| 2 * isqrt(4 * q) + 1)
                .sum::<u64>()
        });
    }

    #[test]
    fn negativity_threshold_is_sharp() {
        // q = 3, a = 3 is the last positive case at n = 3.
        let a3 = rank_a_recursive(3, 3, 3).unwrap();
        assert!(a3.is_positive());
        for q in [5u64, 7] {
            for a in admissible_traces(q) {
                for n in 3..=8 {
                    assert!(
                        rank_a_recursive(q, a, n).unwrap().is_negative(),
                        "q={q} a={a} n={n}"
                    );
                }
            }
        }
    }
}
