//! Prime sieving and primality utilities shared by the trace pipeline.

use crate::{Error, Result};

/// All primes `p <= limit`, ascending, via a sieve of Eratosthenes.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::with_capacity(if n > 16 { n / (n.ilog2() as usize) } else { 8 });
    for p in 2..=n {
        if !composite[p] {
            out.push(p as u64);
            let mut m = p * p;
            while m <= n {
                composite[m] = true;
                m += p;
            }
        }
    }
    out
}

/// The i-th prime with `p_1 = 2`.
pub fn nth_prime(i: usize) -> Result<u64> {
    if i == 0 {
        return Err(Error::InvalidArgument("prime index starts at 1".into()));
    }
    // p_i < i (ln i + ln ln i) for i >= 6; round the bound up generously.
    let mut limit = if i < 6 {
        13
    } else {
        let x = i as f64;
        (x * (x.ln() + x.ln().ln()) * 1.2) as u64 + 16
    };
    loop {
        let ps = primes_up_to(limit);
        if ps.len() >= i {
            return Ok(ps[i - 1]);
        }
        limit *= 2;
    }
}

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, b, m);
        }
        b = mulmod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for u64 (the 12-witness set covers all of u64).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Decompose q as p^k with p prime and k >= 1, if possible.
pub fn prime_power_base(q: u64) -> Option<(u64, u32)> {
    if q < 2 {
        return None;
    }
    if is_prime(q) {
        return Some((q, 1));
    }
    // q = p^k with k >= 2 means p <= q^(1/2); find the smallest prime factor.
    let mut p = 2u64;
    while p.saturating_mul(p) <= q {
        if q % p == 0 {
            let mut m = q;
            let mut k = 0u32;
            while m % p == 0 {
                m /= p;
                k += 1;
            }
            return if m == 1 { Some((p, k)) } else { None };
        }
        p += if p == 2 { 1 } else { 2 };
    }
    None
}

/// Validate that q is a prime power >= 2.
pub fn require_prime_power(q: u64) -> Result<(u64, u32)> {
    prime_power_base(q).ok_or(Error::InvalidQ(q))
}
