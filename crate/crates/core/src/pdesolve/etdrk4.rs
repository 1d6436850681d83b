//! Fourth-order exponential time differencing Runge-Kutta (Cox-Matthews,
//! with Kassam-Trefethen contour evaluation of the phi functions) for
//! periodic 1D equations of the form `u_t = L u - (u^2 / 2)_z`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const CONTOUR_POINTS: usize = 32;

/// Precomputed ETDRK4 coefficients and FFT plans for one grid and step size.
pub struct Etdrk4 {
    n: usize,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    /// `-i k / 2` on kept modes, zero on dealiased modes and the Nyquist mode.
    nonlinear: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
}

/// Signed integer wavenumber of FFT bin `j` on an `n`-point grid.
pub fn mode_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl Etdrk4 {
    /// `linear(k)` is the Fourier symbol of the linear operator at physical
    /// wavenumber `k`.
    pub fn new(n: usize, domain_length: f64, h: f64, linear: impl Fn(f64) -> f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        let cutoff = (n / 3) as i64;
        let mut s = Self {
            n,
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
            nonlinear: Vec::with_capacity(n),
            fft,
            ifft,
            scratch: vec![Complex64::default(); scratch_len],
            work: vec![Complex64::default(); n],
        };
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| {
                Complex64::from_polar(
                    1.0,
                    std::f64::consts::PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64,
                )
            })
            .collect();
        for j in 0..n {
            let m = mode_index(j, n);
            let k = 2.0 * std::f64::consts::PI * m as f64 / domain_length;
            let c = linear(k);
            s.e.push((h * c).exp());
            s.e2.push((h * c / 2.0).exp());
            let mean = |f: &dyn Fn(Complex64) -> Complex64| {
                roots.iter().map(|&r| f(h * c + r)).sum::<Complex64>().re / CONTOUR_POINTS as f64
            };
            s.q.push(h * mean(&|z| ((z / 2.0).exp() - 1.0) / z));
            s.f1.push(h * mean(&|z| (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / z.powi(3)));
            s.f2.push(h * mean(&|z| (2.0 + z + z.exp() * (z - 2.0)) / z.powi(3)));
            s.f3.push(h * mean(&|z| (-4.0 - 3.0 * z - z * z + z.exp() * (4.0 - z)) / z.powi(3)));
            let keep = m.abs() <= cutoff && !(n.is_multiple_of(2) && j == n / 2);
            s.nonlinear.push(if keep {
                Complex64::new(0.0, -0.5 * k)
            } else {
                Complex64::default()
            });
        }
        s
    }

    pub fn to_spectral(&mut self, u: &[f64]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.process_with_scratch(&mut v, &mut self.scratch);
        v
    }

    pub fn to_physical(&mut self, v: &[Complex64], out: &mut [f64]) {
        self.work.copy_from_slice(v);
        self.ifft.process_with_scratch(&mut self.work, &mut self.scratch);
        let inv = 1.0 / self.n as f64;
        for (o, w) in out.iter_mut().zip(&self.work) {
            *o = w.re * inv;
        }
    }

    /// Dealiased `-(u^2/2)_z` in spectral space.
    fn nonlinear_term(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        self.work.copy_from_slice(v);
        self.ifft.process_with_scratch(&mut self.work, &mut self.scratch);
        let inv = 1.0 / self.n as f64;
        for w in self.work.iter_mut() {
            let u = w.re * inv;
            *w = Complex64::new(u * u, 0.0);
        }
        self.fft.process_with_scratch(&mut self.work, &mut self.scratch);
        for ((o, w), g) in out.iter_mut().zip(&self.work).zip(&self.nonlinear) {
            *o = w * g;
        }
    }

    pub fn step(&mut self, v: &mut [Complex64]) {
        let n = self.n;
        let mut nv = vec![Complex64::default(); n];
        let mut na = vec![Complex64::default(); n];
        let mut nb = vec![Complex64::default(); n];
        let mut nc = vec![Complex64::default(); n];
        let mut a = vec![Complex64::default(); n];
        let mut b = vec![Complex64::default(); n];
        let mut c = vec![Complex64::default(); n];

        self.nonlinear_term(v, &mut nv);
        for j in 0..n {
            a[j] = self.e2[j] * v[j] + self.q[j] * nv[j];
        }
        self.nonlinear_term(&a, &mut na);
        for j in 0..n {
            b[j] = self.e2[j] * v[j] + self.q[j] * na[j];
        }
        self.nonlinear_term(&b, &mut nb);
        for j in 0..n {
            c[j] = self.e2[j] * a[j] + self.q[j] * (2.0 * nb[j] - nv[j]);
        }
        self.nonlinear_term(&c, &mut nc);
        for j in 0..n {
            v[j] = self.e[j] * v[j]
                + nv[j] * self.f1[j]
                + 2.0 * (na[j] + nb[j]) * self.f2[j]
                + nc[j] * self.f3[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_match_taylor_limit_at_zero() {
        // For L = 0 the coefficients reduce to h/2, h/6, h/6, h/6 (RK4 weights).
        let s = Etdrk4::new(8, 1.0, 0.1, |_| 0.0);
        assert!((s.q[0] - 0.05).abs() < 1e-14);
        assert!((s.f1[0] - 0.1 / 6.0).abs() < 1e-14);
        assert!((s.f2[0] - 0.1 / 6.0).abs() < 1e-14);
        assert!((s.f3[0] - 0.1 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn pure_linear_decay_is_exact() {
        let nu = 0.3;
        let len = 2.0 * std::f64::consts::PI;
        let mut s = Etdrk4::new(16, len, 0.01, |k| -nu * k * k);
        // amplitude small enough that the nonlinear term is negligible
        let u: Vec<f64> = (0..16)
            .map(|j| 1e-9 * (2.0 * std::f64::consts::PI * j as f64 / 16.0 * 2.0).sin())
            .collect();
        let mut v = s.to_spectral(&u);
        for _ in 0..100 {
            s.step(&mut v);
        }
        let mut out = vec![0.0; 16];
        s.to_physical(&v, &mut out);
        let decay = (-nu * 4.0 * 1.0).exp();
        for (o, u0) in out.iter().zip(&u) {
            assert!((o - u0 * decay).abs() < 1e-15);
        }
    }
}
