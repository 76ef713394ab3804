//! Canonical-embedding encoder.
//!
//! Slot `j` holds the evaluation of the message polynomial at `zeta^(5^j)`
//! where `zeta = exp(i*pi/n)`; the automorphism `X -> X^(5^k)` therefore
//! rotates the slots left by `k`. Both directions run in `O(n log n)`.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::math::{self, bit_reverse};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
}

impl Add for Complex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    slots: usize,
    two_n: usize,
    rot_group: Vec<usize>,
    roots: Vec<Complex>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let slots = n / 2;
        let two_n = 2 * n;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % two_n;
        }
        let roots = (0..=two_n)
            .map(|j| {
                let a = 2.0 * core::f64::consts::PI * j as f64 / two_n as f64;
                Complex::new(math::cos(a), math::sin(a))
            })
            .collect();
        Self { slots, two_n, rot_group, roots }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Galois element realizing a left rotation by `step` slots.
    pub fn galois_element(&self, step: i64) -> usize {
        let k = step.rem_euclid(self.slots as i64) as usize;
        self.rot_group[k]
    }

    fn bit_reverse_in_place(vals: &mut [Complex]) {
        let log = vals.len().trailing_zeros();
        for i in 0..vals.len() {
            let j = bit_reverse(i, log);
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Slot values -> real coefficient vector of length `n` (unscaled).
    pub fn embed_inverse(&self, values: &[f64]) -> Vec<f64> {
        let size = self.slots;
        let mut vals: Vec<Complex> =
            (0..size).map(|i| Complex::new(values.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = self.two_n / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.roots[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse_in_place(&mut vals);
        let inv = 1.0 / size as f64;
        let mut coeffs = alloc::vec![0.0; 2 * size];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re * inv;
            coeffs[i + size] = v.im * inv;
        }
        coeffs
    }

    /// Real coefficient vector -> slot values (real parts).
    pub fn embed(&self, coeffs: &[f64]) -> Vec<f64> {
        let size = self.slots;
        let mut vals: Vec<Complex> = (0..size).map(|i| Complex::new(coeffs[i], coeffs[i + size])).collect();
        Self::bit_reverse_in_place(&mut vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = self.two_n / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.roots[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
        vals.iter().map(|c| c.re).collect()
    }
}
