//! Chirp-z evaluation of `X_m = sum_j a_j exp(i theta j m)` for arbitrary
//! `theta`, used as the fast route between uniform q- and x-grids whose
//! spacings are not DFT-conjugate.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct ChirpZ {
    n_in: usize,
    n_out: usize,
    len: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ChirpZ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChirpZ")
            .field("n_in", &self.n_in)
            .field("n_out", &self.n_out)
            .field("len", &self.len)
            .finish()
    }
}

fn chirp(theta: f64, l: i64) -> Complex64 {
    // l^2 is exact in f64 for every length used here
    Complex64::from_polar(1.0, 0.5 * theta * (l * l) as f64)
}

impl ChirpZ {
    pub fn new(n_in: usize, n_out: usize, theta: f64) -> Self {
        let len = (n_in + n_out - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let pre = (0..n_in as i64).map(|j| chirp(theta, j)).collect();
        let post = (0..n_out as i64).map(|m| chirp(theta, m)).collect();
        // jm = (j^2 + m^2 - (m - j)^2) / 2
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
        for l in -(n_in as i64 - 1)..(n_out as i64) {
            kernel_hat[l.rem_euclid(len as i64) as usize] = chirp(theta, l).conj();
        }
        fwd.process(&mut kernel_hat);
        let scale = 1.0 / len as f64;
        for k in &mut kernel_hat {
            *k *= scale;
        }
        Self {
            n_in,
            n_out,
            len,
            pre,
            post,
            kernel_hat,
            fwd,
            inv,
        }
    }

    pub fn apply(&self, a: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(a.len(), self.n_in);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for ((b, x), c) in buf.iter_mut().zip(a).zip(&self.pre) {
            *b = x * c;
        }
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        self.fwd.process_with_scratch(&mut buf, &mut scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process_with_scratch(&mut buf, &mut scratch);
        buf.truncate(self.n_out);
        for (b, c) in buf.iter_mut().zip(&self.post) {
            *b *= c;
        }
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let theta = 0.0123;
        let a: Vec<Complex64> = (0..37)
            .map(|j| Complex64::new((j as f64 * 0.3).sin(), (j as f64 * 0.11).cos()))
            .collect();
        let cz = ChirpZ::new(a.len(), 53, theta);
        let got = cz.apply(&a);
        for (m, g) in got.iter().enumerate() {
            let direct: Complex64 = a
                .iter()
                .enumerate()
                .map(|(j, x)| x * Complex64::from_polar(1.0, theta * (j * m) as f64))
                .sum();
            assert!((g - direct).norm() < 1e-12, "m={m}");
        }
    }
}
