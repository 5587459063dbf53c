//! Iterative radix-2 complex FFT with a precomputed twiddle table.

use crate::Scalar;

/// Forward FFT plan for one power-of-two size.
pub struct Fft<S: Scalar> {
    n: usize,
    // e^{-2*pi*i*k/n} for k in 0..n/2, computed in f64 then narrowed.
    tw_re: Vec<S>,
    tw_im: Vec<S>,
}

impl<S: Scalar> Fft<S> {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT size must be a power of two >= 2");
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half);
        let mut tw_im = Vec::with_capacity(half);
        for k in 0..half {
            let angle = -2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            tw_re.push(S::of_f64(angle.cos()));
            tw_im.push(S::of_f64(angle.sin()));
        }
        Self { n, tw_re, tw_im }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place forward transform of `re + i*im`.
    pub fn forward(&self, re: &mut [S], im: &mut [S]) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);
        // Bit-reversal permutation.
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            let half = len / 2;
            let mut start = 0;
            while start < n {
                for k in 0..half {
                    let (wr, wi) = (self.tw_re[k * stride], self.tw_im[k * stride]);
                    let (a, b) = (start + k, start + k + half);
                    let vr = re[b] * wr - im[b] * wi;
                    let vi = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - vr;
                    im[b] = im[a] - vi;
                    re[a] += vr;
                    im[a] += vi;
                }
                start += len;
            }
            len <<= 1;
        }
    }
}
