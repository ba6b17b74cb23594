//! Normalized per-prime statistics and their empirical distributions.
//!
//! For each good reduction the sample carries theta_n = arccos(a_n / 2 sqrt(p^n))
//! together with the normalizations Delta (big), Delta' and Delta''. The angle
//! versions Theta', Theta'' exist only on the event |Delta| <= 1; samples
//! outside it are dropped and counted, never clamped. Empirical histograms and
//! the Kolmogorov-Smirnov distance compare against the Sato-Tate density
//! (2/pi) sin^2(theta) on [0, pi].

use crate::ec::{self, CurveQ};
use crate::numfmt::sig12;
use crate::zeta::{self, rat_to_f64};
use crate::{Error, Result};
use num::rational::BigRational;
use num::BigInt;
use rayon::prelude::*;
use std::f64::consts::PI;

/// arccos clamp tolerance for theta_n only: the ratio is RH-guaranteed to lie
/// in [-1, 1], so anything beyond 1 + 1e-12 signals a computation bug.
const THETA_CLAMP_TOL: f64 = 1e-12;

/// Sato-Tate mass of [alpha, beta]: (2/pi) integral of sin^2.
pub fn st_cdf(alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&alpha) || !(0.0..=PI).contains(&beta) || alpha > beta {
        return Err(Error::InvalidArgument(format!(
            "angle interval [{alpha}, {beta}] not within 0 <= alpha <= beta <= pi"
        )));
    }
    let f = |t: f64| (t - t.sin() * t.cos()) / PI;
    Ok(f(beta) - f(alpha))
}

/// theta_n = arccos(a_n / (2 sqrt(p^n))) in [0, pi].
pub fn theta_n(p: u64, a_n: f64, n: u32) -> Result<f64> {
    let two_sqrt_qn = 2.0 * (p as f64).powi(n as i32).sqrt();
    let ratio = a_n / two_sqrt_qn;
    if ratio.abs() > 1.0 + THETA_CLAMP_TOL {
        return Err(Error::InternalInvariant(format!(
            "rank-{n} RH violated numerically at p = {p}: |a_n / 2 sqrt(Q_n)| = {}",
            ratio.abs()
        )));
    }
    Ok(ratio.clamp(-1.0, 1.0).acos())
}

/// The big-Delta normalization of Theorem-1 form. n = 2 uses
/// sqrt(p) cos(theta_2) + (sqrt(p) - 1/sqrt(p))/2; n >= 3 rescales
/// (pi/2 - theta_n) by sqrt(p^(n-1))/(n-1) and recentres.
pub fn delta_big(p: u64, theta: f64, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::RankDomain { n, what: "delta_big" });
    }
    let sp = (p as f64).sqrt();
    Ok(if n == 2 {
        sp * theta.cos() + 0.5 * (sp - 1.0 / sp)
    } else {
        let scale = (p as f64).powi(n as i32 - 1).sqrt() / (n - 1) as f64;
        scale * (PI / 2.0 - theta) + 0.5 * sp + 0.5 * (n as f64 - 5.0) / ((n - 1) as f64 * sp)
    })
}

/// Delta' = (a_n + (n-1)p + (n-5)) / (2(n-1) sqrt(p)), n >= 3.
pub fn delta_prime(p: u64, a_n: f64, n: u32) -> Result<f64> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "delta_prime" });
    }
    let num = a_n + (n as f64 - 1.0) * p as f64 + (n as f64 - 5.0);
    Ok(num / (2.0 * (n as f64 - 1.0) * (p as f64).sqrt()))
}

/// Delta'' = (a_n - ((5-n) + (n-1)a_p - (n-1)p)) / (-6/sqrt(p)), n >= 3.
pub fn delta_double_prime(p: u64, a_n: f64, a_p: i64, n: u32) -> Result<f64> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "delta_double_prime" });
    }
    let linear = (5.0 - n as f64) + (n as f64 - 1.0) * a_p as f64 - (n as f64 - 1.0) * p as f64;
    Ok((a_n - linear) * (-(p as f64).sqrt() / 6.0))
}

/// Delta' evaluated from the exact a_n: the additive normalization is done in
/// exact arithmetic before the single float conversion.
pub fn delta_prime_exact(p: u64, a_n: &BigRational, n: u32) -> Result<f64> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "delta_prime" });
    }
    let shift = (n as i128 - 1) * p as i128 + (n as i128 - 5);
    let num = a_n + BigRational::from(BigInt::from(shift));
    Ok(rat_to_f64(&num) / (2.0 * (n as f64 - 1.0) * (p as f64).sqrt()))
}

/// Delta'' evaluated from the exact a_n (exact residual, one conversion).
pub fn delta_double_prime_exact(p: u64, a_n: &BigRational, a_p: i64, n: u32) -> Result<f64> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "delta_double_prime" });
    }
    let residual = zeta::residual_from_a_n(a_n, p, a_p, n);
    Ok(rat_to_f64(&residual) * (-(p as f64).sqrt() / 6.0))
}

/// Per-prime record of the trace, the rank-n invariant and its angle, and the
/// normalized statistics. Theta' / Theta'' are present exactly when the
/// corresponding |Delta| <= 1. At n = 2 the primed statistics are undefined
/// and None.
#[derive(Debug, Clone)]
pub struct AngleSample {
    /// Field size (a prime, or a prime power behind the opt-in flag).
    pub p: u64,
    pub a_p: i64,
    pub a_n: f64,
    pub theta_n: f64,
    pub delta_big: f64,
    pub delta_prime: Option<f64>,
    pub delta_dprime: Option<f64>,
    pub theta_prime: Option<f64>,
    pub theta_dprime: Option<f64>,
}

/// Which angle statistic a histogram or KS run is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    ThetaN,
    DeltaBig,
    ThetaPrime,
    ThetaDPrime,
}

impl Statistic {
    /// The retained angle for this statistic, if the sample is not dropped.
    pub fn angle_of(&self, s: &AngleSample) -> Option<f64> {
        match self {
            Statistic::ThetaN => Some(s.theta_n),
            Statistic::DeltaBig => {
                (s.delta_big.abs() <= 1.0).then(|| s.delta_big.clamp(-1.0, 1.0).acos())
            }
            Statistic::ThetaPrime => s.theta_prime,
            Statistic::ThetaDPrime => s.theta_dprime,
        }
    }
}

fn sample_for(p: u64, a_p: i64, n: u32) -> Result<AngleSample> {
    let a_n_exact = zeta::rank_a_recursive(p, a_p, n)?;
    let a_n = rat_to_f64(&a_n_exact);
    let theta = theta_n(p, a_n, n)?;
    let big = delta_big(p, theta, n)?;
    let (dp, dpp) = if n >= 3 {
        (
            Some(delta_prime_exact(p, &a_n_exact, n)?),
            Some(delta_double_prime_exact(p, &a_n_exact, a_p, n)?),
        )
    } else {
        (None, None)
    };
    let angle_if_bounded = |d: Option<f64>| d.filter(|x| x.abs() <= 1.0).map(f64::acos);
    Ok(AngleSample {
        p,
        a_p,
        a_n,
        theta_n: theta,
        delta_big: big,
        delta_prime: dp,
        delta_dprime: dpp,
        theta_prime: angle_if_bounded(dp),
        theta_dprime: angle_if_bounded(dpp),
    })
}

/// One sample per good prime <= p_max, ascending. Evaluation is parallel over
/// primes; output order is fixed by the prime order. Requires n >= 2 (the big
/// Delta domain); Delta'/Delta'' are filled for n >= 3.
pub fn collect_samples(curve: &CurveQ, n: u32, p_max: u64) -> Result<Vec<AngleSample>> {
    collect_samples_with(curve, n, p_max, false)
}

/// [`collect_samples`] with opt-in prime powers q = p^k <= p_max (excluded
/// from default statistics; the distribution theorems quantify over primes).
pub fn collect_samples_with(
    curve: &CurveQ,
    n: u32,
    p_max: u64,
    include_prime_powers: bool,
) -> Result<Vec<AngleSample>> {
    if n < 2 {
        return Err(Error::RankDomain { n, what: "collect_samples" });
    }
    let primes = ec::good_primes(curve, p_max);
    let mut qs: Vec<(u64, u64, u32)> = primes.iter().map(|&p| (p, p, 1)).collect();
    if include_prime_powers {
        for &p in &primes {
            let mut q = p * p;
            let mut k = 2u32;
            while q <= p_max {
                qs.push((q, p, k));
                q = match q.checked_mul(p) {
                    Some(next) => next,
                    None => break,
                };
                k += 1;
            }
        }
        qs.sort_unstable();
    }
    qs.par_iter()
        .map(|&(q, p, k)| {
            let a_p = ec::trace_at(curve, p)?;
            let a_q = ec::trace_prime_power(a_p, p, k)?;
            sample_for(q, a_q, n)
        })
        .collect()
}

/// Equal-width histogram of retained angles over [0, pi].
///
/// Bins are left-closed right-open, the final bin right-closed. `density`
/// normalizes counts so retained mass integrates to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub dropped: u64,
    /// Set when no sample was retained (all dropped or empty input).
    pub empty: bool,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.dropped
    }

    pub fn retained(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV per the external interface: `bin_left,bin_right,count,density`
    /// rows followed by `# dropped=` and `# total=` comment rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,density\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                sig12(self.bin_edges[i]),
                sig12(self.bin_edges[i + 1]),
                self.counts[i],
                sig12(self.density[i])
            ));
        }
        out.push_str(&format!("# dropped={}\n# total={}\n", self.dropped, self.total()));
        out
    }

    pub fn from_csv(text: &str) -> Result<Histogram> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != "bin_left,bin_right,count,density" {
            return Err(Error::InvalidArgument(format!(
                "unexpected histogram header: {header:?}"
            )));
        }
        let mut edges: Vec<f64> = Vec::new();
        let mut counts = Vec::new();
        let mut density = Vec::new();
        let mut dropped = 0u64;
        for line in lines {
            if let Some(rest) = line.strip_prefix("# dropped=") {
                dropped = rest
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad dropped count: {e}")))?;
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::InvalidArgument(format!("bad histogram row: {line:?}")));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))
            };
            let left = parse(fields[0])?;
            let right = parse(fields[1])?;
            if edges.is_empty() {
                edges.push(left);
            }
            edges.push(right);
            counts.push(
                fields[2]
                    .parse::<u64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad count: {e}")))?,
            );
            density.push(parse(fields[3])?);
        }
        let empty = counts.iter().all(|&c| c == 0);
        Ok(Histogram { bin_edges: edges, counts, density, dropped, empty })
    }
}

/// Histogram of the given statistic over the samples.
pub fn empirical_histogram(
    samples: &[AngleSample],
    statistic: Statistic,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    histogram_of_angles(samples.iter().map(|s| statistic.angle_of(s)), bins)
}

/// Lower-level histogram builder over optional angles (None = dropped).
pub fn histogram_of_angles(
    angles: impl Iterator<Item = Option<f64>>,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    let width = PI / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut dropped = 0u64;
    for a in angles {
        match a {
            Some(theta) => {
                debug_assert!((0.0..=PI).contains(&theta));
                let idx = ((theta / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            None => dropped += 1,
        }
    }
    let retained: u64 = counts.iter().sum();
    let density = if retained == 0 {
        vec![0.0; bins]
    } else {
        counts
            .iter()
            .map(|&c| c as f64 / (retained as f64 * width))
            .collect()
    };
    Ok(Histogram {
        bin_edges: (0..=bins).map(|i| i as f64 * width).collect(),
        counts,
        density,
        dropped,
        empty: retained == 0,
    })
}

/// Two-sided Kolmogorov-Smirnov distance of the angles against the Sato-Tate
/// CDF.
pub fn ks_distance(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::Empty("ks_distance over no retained samples"));
    }
    let mut sorted = angles.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("no NaN angles"));
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &theta) in sorted.iter().enumerate() {
        let cdf = st_cdf(0.0, theta)?;
        d = d.max((cdf - i as f64 / m).abs());
        d = d.max(((i as f64 + 1.0) / m - cdf).abs());
    }
    Ok(d)
}
