//! Negacyclic number-theoretic transform.
//!
//! Forward transform is Cooley-Tukey with `psi`-twisted, bit-reversed twiddles
//! (natural-order input, bit-reversed output); the inverse is Gentleman-Sande.
//! Pointwise products of transformed vectors are products in `Z_q[X]/(X^n+1)`.

use alloc::vec::Vec;

use crate::math::{bit_reverse, primitive_root_2n, Modulus};

/// Precomputed twiddles for one prime.
#[derive(Debug, Clone)]
pub struct NttTable {
    modulus: Modulus,
    n: usize,
    psi: u64,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTable {
    /// Returns `None` when `q` has no primitive `2n`-th root of unity.
    pub fn new(q: u64, n: usize) -> Option<Self> {
        let modulus = Modulus::new(q);
        let psi = primitive_root_2n(q, 2 * n as u64)?;
        let psi_inv = modulus.inv(psi);
        let log_n = n.trailing_zeros();
        let mut psi_rev = alloc::vec![0u64; n];
        let mut psi_inv_rev = alloc::vec![0u64; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = modulus.mul(pw, psi);
            pw_inv = modulus.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64);
        Some(Self {
            modulus,
            n,
            psi,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    /// The stored primitive `2n`-th root of unity.
    pub fn psi(&self) -> u64 {
        self.psi
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m_ = &self.modulus;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let x = *u;
                    let y = m_.mul_shoup(*v, w, ws);
                    *u = m_.add(x, y);
                    *v = m_.sub(x, y);
                }
            }
            m <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m_ = &self.modulus;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let x = *u;
                    let y = *v;
                    *u = m_.add(x, y);
                    *v = m_.mul_shoup(m_.sub(x, y), w, ws);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = m_.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ntt_primes;

    fn schoolbook(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
        let n = a.len();
        let mut out = alloc::vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], p);
                } else {
                    out[k - n] = m.sub(out[k - n], p);
                }
            }
        }
        out
    }

    #[test]
    fn root_has_order_2n() {
        let t = NttTable::new(97, 16).unwrap();
        let m = t.modulus();
        assert_eq!(m.pow(t.psi(), 32), 1);
        assert_eq!(m.pow(t.psi(), 16), 96);
    }

    #[test]
    fn roundtrip_and_convolution_small_prime() {
        let t = NttTable::new(97, 16).unwrap();
        let m = *t.modulus();
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 33) % 97
        };
        for _ in 0..50 {
            let a: Vec<u64> = (0..16).map(|_| next()).collect();
            let b: Vec<u64> = (0..16).map(|_| next()).collect();
            let mut fa = a.clone();
            t.forward(&mut fa);
            let mut back = fa.clone();
            t.inverse(&mut back);
            assert_eq!(back, a);
            let mut fb = b.clone();
            t.forward(&mut fb);
            let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(x, y)| m.mul(*x, *y)).collect();
            t.inverse(&mut prod);
            assert_eq!(prod, schoolbook(&a, &b, &m));
        }
    }

    #[test]
    fn roundtrip_large_prime() {
        let q = ntt_primes(60, 2 * 1024, 1, &[]).unwrap()[0];
        let t = NttTable::new(q, 1024).unwrap();
        let a: Vec<u64> = (0..1024u64).map(|i| (i * 0x1234_5678_9abc) % q).collect();
        let mut f = a.clone();
        t.forward(&mut f);
        t.inverse(&mut f);
        assert_eq!(f, a);
    }
}
