//! Rank-stratified family averages: the murmuration functionals over
//! conductor-windowed, isogeny-deduplicated curve families.
//!
//! Per-curve terms are exact rationals and the family average is an exact
//! rational sum divided by the retained count, converted to f64 once at the
//! end; output is therefore independent of evaluation order, and the n = 2
//! functional agrees with n = 1 bit-exactly (a_2 + p - 1 = a_p).

use crate::ec::{self, CurveQ, QrTable};
use crate::numfmt::sig12;
use crate::primes::nth_prime;
use crate::zeta::{self, rat_to_f64};
use crate::{Error, Result};
use num::rational::BigRational;
use num::{BigInt, Zero};
use rayon::prelude::*;

/// Family selector: arithmetic rank r and a closed conductor window
/// [conductor_lo, conductor_hi], with per-isogeny-class deduplication
/// (on by default).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilySpec {
    pub rank: u32,
    pub conductor_lo: u64,
    pub conductor_hi: u64,
    pub dedup: bool,
}

impl FamilySpec {
    pub fn new(rank: u32, conductor_lo: u64, conductor_hi: u64) -> Result<Self> {
        if conductor_lo < 1 || conductor_lo > conductor_hi {
            return Err(Error::InvalidArgument(format!(
                "conductor window [{conductor_lo}, {conductor_hi}] requires 1 <= lo <= hi"
            )));
        }
        Ok(FamilySpec { rank, conductor_lo, conductor_hi, dedup: true })
    }
}

/// Filter curves by rank and conductor window; with dedup on, keep the
/// lexicographically smallest label per isogeny class. An empty result is
/// allowed here; the functionals below reject it.
pub fn build_family(curves: &[CurveQ], spec: &FamilySpec) -> Vec<CurveQ> {
    let mut picked: Vec<&CurveQ> = curves
        .iter()
        .filter(|c| {
            c.rank == spec.rank
                && c.conductor >= spec.conductor_lo
                && c.conductor <= spec.conductor_hi
        })
        .collect();
    if spec.dedup {
        picked.sort_by(|a, b| a.label.cmp(&b.label));
        let mut seen = std::collections::HashSet::new();
        picked.retain(|c| seen.insert(c.isogeny_class.clone()));
        picked.sort_by(|a, b| a.label.cmp(&b.label));
    }
    picked.into_iter().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Classic,
    New,
}

/// Per-curve classic term: a_p for n = 1, a_2 + p - 1 for n = 2, and
/// (a_n + (n-1)p + n - 5)/(n-1) for n >= 3. Exact.
pub fn classic_term(p: u64, a_p: i64, n: u32) -> Result<BigRational> {
    match n {
        0 => Err(Error::RankDomain { n, what: "f_classic" }),
        1 => Ok(BigRational::from(BigInt::from(a_p))),
        2 => {
            let a2 = zeta::rank_a_recursive(p, a_p, 2)?;
            Ok(a2 + BigRational::from(BigInt::from(p as i128 - 1)))
        }
        _ => {
            let a_n = zeta::rank_a_recursive(p, a_p, n)?;
            let shift = (n as i128 - 1) * p as i128 + n as i128 - 5;
            Ok((a_n + BigRational::from(BigInt::from(shift)))
                / BigRational::from(BigInt::from(n as i128 - 1)))
        }
    }
}

/// Per-curve new-functional term:
/// (a_n + (n-1)p - (n-1)a_p + (n-5)) * (-p/3), n >= 3. Exact.
pub fn new_term(p: u64, a_p: i64, n: u32) -> Result<BigRational> {
    if n < 3 {
        return Err(Error::RankDomain { n, what: "f_new" });
    }
    let a_n = zeta::rank_a_recursive(p, a_p, n)?;
    Ok(new_term_from_a_n(&a_n, p, a_p, n))
}

/// The new-functional term from an already-computed a_n; the residual is
/// formed exactly, so a synthetic a_n with residual exactly -3a/p yields the
/// term a_p exactly.
pub fn new_term_from_a_n(a_n: &BigRational, p: u64, a_p: i64, n: u32) -> BigRational {
    let residual = zeta::residual_from_a_n(a_n, p, a_p, n);
    residual * BigRational::new(BigInt::from(-(p as i128)), BigInt::from(3))
}

fn average_terms(
    family: &[CurveQ],
    aps: &[Option<i64>],
    p: u64,
    n: u32,
    variant: Variant,
) -> Result<Option<f64>> {
    if family.is_empty() {
        return Err(Error::Empty("murmuration family"));
    }
    debug_assert_eq!(family.len(), aps.len());
    let mut sum = BigRational::zero();
    let mut retained = 0u64;
    for a_p in aps.iter().flatten() {
        let term = match variant {
            Variant::Classic => classic_term(p, *a_p, n)?,
            Variant::New => new_term(p, *a_p, n)?,
        };
        sum += term;
        retained += 1;
    }
    if retained == 0 {
        return Ok(None);
    }
    Ok(Some(rat_to_f64(
        &(sum / BigRational::from(BigInt::from(retained))),
    )))
}

/// Traces of every family member at p, in family order; None marks bad
/// reduction (that curve is omitted from the average at this index).
/// Parallel over curves with a shared residue table.
pub fn family_traces(family: &[CurveQ], p: u64) -> Result<Vec<Option<i64>>> {
    let table = if p > 3 { Some(QrTable::new(p)) } else { None };
    family
        .par_iter()
        .map(|c| {
            let rc = ec::reduce(c, p)?;
            if !rc.is_good() {
                return Ok(None);
            }
            let a = match &table {
                Some(t) => ec::trace_of_frobenius_with(&rc, t)?,
                None => ec::trace_of_frobenius(&rc)?,
            };
            Ok(Some(a))
        })
        .collect()
}

/// Classic functional f_{r,n}(i) over the family at the i-th prime.
/// Returns None when no family member has good reduction at p_i.
pub fn f_classic(family: &[CurveQ], i: usize, n: u32) -> Result<Option<f64>> {
    let p = nth_prime(i)?;
    let aps = family_traces(family, p)?;
    average_terms(family, &aps, p, n, Variant::Classic)
}

/// New functional f_{r,n}^new(i): family average of the rescaled
/// second-order residual. n >= 3.
pub fn f_new(family: &[CurveQ], i: usize, n: u32) -> Result<Option<f64>> {
    let p = nth_prime(i)?;
    let aps = family_traces(family, p)?;
    average_terms(family, &aps, p, n, Variant::New)
}

/// Same averages with caller-provided traces (cache-backed callers).
pub fn f_value_with(
    family: &[CurveQ],
    aps: &[Option<i64>],
    p: u64,
    n: u32,
    variant: Variant,
) -> Result<Option<f64>> {
    average_terms(family, aps, p, n, variant)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub i: usize,
    pub p: u64,
    pub value: f64,
}

/// The points (i, p_i, f(i)) over an index range, ascending. Indices where
/// every curve drops out are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct MurmurationSeries {
    pub n: u32,
    pub variant: Variant,
    pub points: Vec<SeriesPoint>,
}

impl MurmurationSeries {
    /// CSV per the external interface: header `i,p,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,p,value\n");
        for pt in &self.points {
            out.push_str(&format!("{},{},{}\n", pt.i, pt.p, sig12(pt.value)));
        }
        out
    }

    pub fn from_csv(text: &str, n: u32, variant: Variant) -> Result<MurmurationSeries> {
        let mut lines = text.lines();
        if lines.next() != Some("i,p,value") {
            return Err(Error::InvalidArgument("unexpected series header".into()));
        }
        let mut points = Vec::new();
        for line in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::InvalidArgument(format!("bad series row: {line:?}")));
            }
            let bad = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("{line:?}: {e}"));
            points.push(SeriesPoint {
                i: f[0].parse().map_err(|e| bad(&e))?,
                p: f[1].parse().map_err(|e| bad(&e))?,
                value: f[2].parse().map_err(|e| bad(&e))?,
            });
        }
        Ok(MurmurationSeries { n, variant, points })
    }
}

/// Evaluate the functional over i in [i_lo, i_hi] with traces supplied by
/// `trace` (e.g. a persistent cache); bad reduction maps to None.
pub fn series_with<F>(
    family: &[CurveQ],
    i_lo: usize,
    i_hi: usize,
    n: u32,
    variant: Variant,
    trace: F,
) -> Result<MurmurationSeries>
where
    F: Fn(&CurveQ, u64) -> Result<Option<i64>> + Sync,
{
    if i_lo < 1 || i_lo > i_hi {
        return Err(Error::InvalidArgument(format!(
            "index range [{i_lo}, {i_hi}] requires 1 <= lo <= hi"
        )));
    }
    if family.is_empty() {
        return Err(Error::Empty("murmuration family"));
    }
    let mut points = Vec::with_capacity(i_hi - i_lo + 1);
    for i in i_lo..=i_hi {
        let p = nth_prime(i)?;
        let aps: Vec<Option<i64>> = family
            .par_iter()
            .map(|c| trace(c, p))
            .collect::<Result<_>>()?;
        if let Some(value) = average_terms(family, &aps, p, n, variant)? {
            points.push(SeriesPoint { i, p, value });
        }
    }
    Ok(MurmurationSeries { n, variant, points })
}

/// [`series_with`] computing traces directly (shared residue table per
/// prime).
pub fn series(
    family: &[CurveQ],
    i_lo: usize,
    i_hi: usize,
    n: u32,
    variant: Variant,
) -> Result<MurmurationSeries> {
    if i_lo < 1 || i_lo > i_hi {
        return Err(Error::InvalidArgument(format!(
            "index range [{i_lo}, {i_hi}] requires 1 <= lo <= hi"
        )));
    }
    if family.is_empty() {
        return Err(Error::Empty("murmuration family"));
    }
    let mut points = Vec::with_capacity(i_hi - i_lo + 1);
    for i in i_lo..=i_hi {
        let p = nth_prime(i)?;
        let aps = family_traces(family, p)?;
        if let Some(value) = average_terms(family, &aps, p, n, variant)? {
            points.push(SeriesPoint { i, p, value });
        }
    }
    Ok(MurmurationSeries { n, variant, points })
}
