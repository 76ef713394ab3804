//! Word-size modular arithmetic, prime search and `no_std` float helpers.

use alloc::vec::Vec;

/// A word-size modulus with a precomputed Barrett constant.
///
/// Supports moduli up to 62 bits; products of two reduced operands fit in
/// `u128` and are reduced without a division.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    bits: u32,
    mu: u128,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!((2..(1 << 62)).contains(&value), "modulus out of range");
        let bits = 64 - value.leading_zeros();
        let mu = (1u128 << (2 * bits)) / value as u128;
        Self { value, bits, mu }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Reduces `x < value^2`.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let q1 = x >> (self.bits - 1);
        let q3 = (q1 * self.mu) >> (self.bits + 1);
        let r = (x - q3 * self.value as u128) as u64;
        let r = r.min(r.wrapping_sub(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    /// Reduces a signed integer into `[0, value)`.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = self.reduce(x.unsigned_abs());
        if x < 0 && r != 0 {
            self.value - r
        } else {
            r
        }
    }

    #[inline]
    pub fn reduce_i128(&self, x: i128) -> u64 {
        let r = (x.unsigned_abs() % self.value as u128) as u64;
        if x < 0 && r != 0 {
            self.value - r
        } else {
            r
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        // Branch-free: for s < q the wrapped difference exceeds 2^63.
        let s = a + b;
        s.min(s.wrapping_sub(self.value))
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.min(d.wrapping_add(self.value))
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of `a` modulo a prime modulus.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(self.reduce(a) != 0);
        self.pow(a, self.value - 2)
    }

    /// Centered representative of `a` in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    /// Shoup precomputation `floor(w * 2^64 / q)` for a fixed multiplicand.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given `w_shoup = self.shoup(w)`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in SMALL {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest primes below `2^bits` congruent to 1 mod `two_n`, skipping any in
/// `exclude`.
pub fn ntt_primes(bits: u32, two_n: u64, count: usize, exclude: &[u64]) -> Option<Vec<u64>> {
    if !(2..=62).contains(&bits) || two_n == 0 {
        return None;
    }
    let top = 1u64 << bits;
    let mut candidate = top - two_n + 1;
    let floor = 1u64 << (bits - 1);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if candidate <= floor {
            return None;
        }
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate -= two_n;
    }
    Some(out)
}

/// A primitive `two_n`-th root of unity modulo the prime `q`
/// (`psi^(two_n/2) = -1`), the smallest one reached by a fixed search.
pub fn primitive_root_2n(q: u64, two_n: u64) -> Option<u64> {
    if !(q - 1).is_multiple_of(two_n) {
        return None;
    }
    let m = Modulus::new(q);
    let cofactor = (q - 1) / two_n;
    for x in 2..q.min(1 << 20) {
        let psi = m.pow(x, cofactor);
        if m.pow(psi, two_n / 2) == q - 1 {
            return Some(psi);
        }
    }
    None
}

#[inline]
pub fn bit_reverse(x: usize, log_n: u32) -> usize {
    if log_n == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - log_n)
    }
}

// Float helpers; `core` has no libm.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn powi(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n {
        acc *= x;
    }
    acc
}

/// `log2(2^a + 2^b)` without overflow.
pub fn log2_sum(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + log2(1.0 + libm::exp2(lo - hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrett_matches_u128_remainder() {
        for q in [97u64, 65537, (1 << 40) - 87, (1 << 61) - 1, (1 << 62) - 57] {
            let m = Modulus::new(q);
            let mut x = 0x9e37_79b9_7f4a_7c15u64;
            for _ in 0..2000 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = x % q;
                let b = x.rotate_left(17) % q;
                assert_eq!(m.mul(a, b), mul_mod_u64(a, b, q));
                let ws = m.shoup(b);
                assert_eq!(m.mul_shoup(a, b, ws), mul_mod_u64(a, b, q));
            }
        }
    }

    #[test]
    fn primes_are_ntt_friendly() {
        let ps = ntt_primes(40, 16384, 3, &[]).unwrap();
        assert_eq!(ps.len(), 3);
        for p in &ps {
            assert!(is_prime(*p));
            assert_eq!(p % 16384, 1);
            assert_eq!(64 - p.leading_zeros(), 40);
            let psi = primitive_root_2n(*p, 16384).unwrap();
            let m = Modulus::new(*p);
            assert_eq!(m.pow(psi, 8192), p - 1);
            assert_eq!(m.pow(psi, 16384), 1);
        }
    }

    #[test]
    fn miller_rabin_small_cases() {
        let primes: Vec<u64> = (0..100).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97]
        );
        assert!(!is_prime(3215031751));
        assert!(is_prime((1 << 61) - 1));
    }

    #[test]
    fn centered_and_signed_reduction() {
        let m = Modulus::new(97);
        assert_eq!(m.center(96), -1);
        assert_eq!(m.center(48), 48);
        assert_eq!(m.reduce_i64(-1), 96);
        assert_eq!(m.reduce_i128(-195), 97 - 1);
    }
}
