//! Iterative radix-2 FFT at f64 precision.
//!
//! Transform sizes here are powers of two no larger than a few thousand,
//! so a plain Cooley-Tukey with precomputed twiddles is fast enough and
//! keeps the dependency surface empty. Summation order is fixed, so the
//! transform is bitwise deterministic.

use std::f64::consts::PI;

/// Planned FFT for one power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    // twiddle factors for each butterfly stage, forward direction
    cos: Vec<f64>,
    sin: Vec<f64>,
    rev: Vec<u32>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "fft size must be a power of two, got {n}");
        let half = n / 2;
        let mut cos = Vec::with_capacity(half);
        let mut sin = Vec::with_capacity(half);
        for k in 0..half {
            let ang = -2.0 * PI * k as f64 / n as f64;
            cos.push(ang.cos());
            sin.push(ang.sin());
        }
        let bits = n.trailing_zeros();
        let rev = (0..n as u32).map(|i| i.reverse_bits() >> (32 - bits)).collect();
        Fft { n, cos, sin, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, false);
    }

    /// In-place inverse transform, including the 1/n scaling.
    pub fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, true);
        let inv = 1.0 / self.n as f64;
        for v in re.iter_mut() {
            *v *= inv;
        }
        for v in im.iter_mut() {
            *v *= inv;
        }
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);
        for i in 0..n {
            let j = self.rev[i] as usize;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let (wr, wi_fwd) = (self.cos[k * step], self.sin[k * step]);
                    let wi = if inverse { -wi_fwd } else { wi_fwd };
                    let (i, j) = (start + k, start + k + half);
                    let tr = re[j] * wr - im[j] * wi;
                    let ti = re[j] * wi + im[j] * wr;
                    re[j] = re[i] - tr;
                    im[j] = im[i] - ti;
                    re[i] += tr;
                    im[i] += ti;
                }
            }
            len <<= 1;
        }
    }
}
