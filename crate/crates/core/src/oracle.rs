//! Stationary Gaussian AR(p) sequences with closed-form scores under the
//! VP noising kernel.
//!
//! A sequence holds `L` states of `d` independent coordinates; each
//! coordinate is an AR(p) process, so every covariance is `Sigma (x) I_d`
//! and all linear algebra is done on the `L x L` scalar covariance with the
//! `d` coordinates as right-hand sides. Vectors are laid out `[L][d]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::denoise::{Cond, Denoiser};
use crate::error::{Error, Result};
use crate::scorenet::Regime;
use crate::sdecore::kernel;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAR {
    /// `a_1..a_p`; empty for iid states.
    pub coeffs: Vec<f64>,
    pub innovation_var: f64,
    pub len: usize,
    pub dim: usize,
}

/// Cholesky factor of a noised window covariance plus the gain of its
/// conditional mean on clean frames, if any.
struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// Maps conditioning values to the conditional mean of the targets.
    gain: Option<DMatrix<f64>>,
}

/// Diffusion time bits and the conditioning rows.
type CacheKey = (u64, Vec<usize>);

impl GaussianAR {
    pub fn new(coeffs: Vec<f64>, innovation_var: f64, len: usize, dim: usize) -> Result<Self> {
        let m = Self {
            coeffs,
            innovation_var,
            len,
            dim,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn iid(variance: f64, len: usize, dim: usize) -> Result<Self> {
        Self::new(Vec::new(), variance, len, dim)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.innovation_var > 0.0) || self.len == 0 || self.dim == 0 {
            return Err(Error::InvalidParams("need innovation_var > 0, len >= 1, dim >= 1".into()));
        }
        let p = self.order();
        if p > 0 {
            let mut companion = DMatrix::<f64>::zeros(p, p);
            for (j, &a) in self.coeffs.iter().enumerate() {
                companion[(0, j)] = a;
            }
            for i in 1..p {
                companion[(i, i - 1)] = 1.0;
            }
            let radius = companion
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if !(radius < 1.0) {
                return Err(Error::NotStationary);
            }
        }
        Ok(())
    }

    /// Stationary autocovariances `gamma(0..n)` from the Yule-Walker system.
    pub fn autocovariance(&self, n: usize) -> Result<Vec<f64>> {
        let p = self.order();
        let a = &self.coeffs;
        // gamma(h) - sum_j a_j gamma(|h - j|) = s2 delta_h0 for h = 0..p
        let mut m = DMatrix::<f64>::zeros(p + 1, p + 1);
        let mut rhs = DVector::<f64>::zeros(p + 1);
        rhs[0] = self.innovation_var;
        for h in 0..=p {
            m[(h, h)] += 1.0;
            for j in 1..=p {
                let lag = (h as isize - j as isize).unsigned_abs();
                m[(h, lag)] -= a[j - 1];
            }
        }
        let g = m.lu().solve(&rhs).ok_or(Error::NotStationary)?;
        let mut gamma: Vec<f64> = g.iter().copied().collect();
        while gamma.len() < n {
            let h = gamma.len();
            let next = (1..=p).map(|j| a[j - 1] * gamma[h - j]).sum();
            gamma.push(next);
        }
        gamma.truncate(n.max(1));
        Ok(gamma)
    }

    /// Scalar covariance `Sigma` of `(x_1..x_L)`; the full covariance is
    /// `Sigma (x) I_d`.
    pub fn joint_cov(&self) -> Result<DMatrix<f64>> {
        let gamma = self.autocovariance(self.len)?;
        Ok(DMatrix::from_fn(self.len, self.len, |i, j| gamma[i.abs_diff(j)]))
    }

    fn noised_cov(&self, idx: &[usize], t: f64) -> Result<DMatrix<f64>> {
        let (mu, sigma) = kernel(t)?;
        let s = self.joint_cov()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
            mu * mu * s[(idx[i], idx[j])] + if i == j { sigma * sigma } else { 0.0 }
        }))
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.len) {
            return Err(Error::IndexOutOfRange(format!("state {i} of {}", self.len)));
        }
        Ok(())
    }

    /// `[n][d]` vector as an `n x d` matrix.
    fn as_matrix(&self, v: &[f64], n: usize) -> Result<DMatrix<f64>> {
        if v.len() != n * self.dim {
            return Err(Error::ShapeMismatch(format!("{} values for [{n}][{}]", v.len(), self.dim)));
        }
        Ok(DMatrix::from_row_slice(n, self.dim, v))
    }

    fn to_vec(m: &DMatrix<f64>) -> Vec<f64> {
        m.transpose().as_slice().to_vec()
    }

    /// `-(mu^2 Sigma + sigma^2 I)^-1 x` for the whole sequence.
    pub fn noised_score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..self.len).collect();
        self.local_noised_score(&idx, x, t)
    }

    /// Score of the noised marginal of the states `idx`.
    pub fn local_noised_score(&self, idx: &[usize], x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_indices(idx)?;
        let k = self.noised_cov(idx, t)?;
        let chol = k.cholesky().ok_or_else(|| Error::SingularSystem("noised marginal".into()))?;
        let v = chol.solve(&self.as_matrix(x, idx.len())?);
        Ok(Self::to_vec(&(-v)))
    }

    /// Score over the noised states `target` of `p(x_target(t) | x_given(t))`.
    pub fn conditional_score(&self, target: &[usize], given: &[usize], given_values: &[f64], x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_indices(target)?;
        self.check_indices(given)?;
        if target.iter().any(|i| given.contains(i)) {
            return Err(Error::IndexOutOfRange("target and given states overlap".into()));
        }
        if given.is_empty() {
            return self.local_noised_score(target, x, t);
        }
        let all: Vec<usize> = target.iter().chain(given).copied().collect();
        let k = self.noised_cov(&all, t)?;
        let nt = target.len();
        let ng = given.len();
        let ktt = k.view((0, 0), (nt, nt));
        let ktg = k.view((0, nt), (nt, ng));
        let kgg = k.view((nt, nt), (ng, ng)).into_owned();
        let cg = kgg.cholesky().ok_or_else(|| Error::SingularSystem("given block".into()))?;
        let gain = cg.solve(&ktg.transpose()).transpose();
        let s = ktt - &gain * ktg.transpose();
        let cs = s.cholesky().ok_or_else(|| Error::SingularSystem("conditional covariance".into()))?;
        let mean = &gain * self.as_matrix(given_values, ng)?;
        let v = cs.solve(&(self.as_matrix(x, nt)? - mean));
        Ok(Self::to_vec(&(-v)))
    }

    /// Exact posterior over the clean sequence given `values` observed at
    /// `(time, space)` indices with noise variance `sigma_y^2`. Returns the
    /// mean `[L][d]` and the `(L d) x (L d)` covariance.
    pub fn posterior_moments(&self, indices: &[(usize, usize)], values: &[f64], sigma_y: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if indices.len() != values.len() {
            return Err(Error::ShapeMismatch("observation indices and values".into()));
        }
        let (l, d) = (self.len, self.dim);
        let n = l * d;
        let s = self.joint_cov()?;
        let prior = DMatrix::from_fn(n, n, |i, j| if i % d == j % d { s[(i / d, j / d)] } else { 0.0 });
        if indices.is_empty() {
            return Ok((vec![0.0; n], prior));
        }
        let flat: Vec<usize> = indices
            .iter()
            .map(|&(ti, zi)| {
                if ti >= l || zi >= d {
                    Err(Error::IndexOutOfRange(format!("observation ({ti}, {zi})")))
                } else {
                    Ok(ti * d + zi)
                }
            })
            .collect::<Result<_>>()?;
        let o = flat.len();
        let pa = DMatrix::from_fn(n, o, |i, j| prior[(i, flat[j])]);
        let s_obs = DMatrix::from_fn(o, o, |i, j| prior[(flat[i], flat[j])] + if i == j { sigma_y * sigma_y } else { 0.0 });
        let chol = s_obs
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("observation covariance".into()))?;
        // K = P A^T S^-1, mean = K y, cov = P - K A P
        let gain = chol.solve(&pa.transpose()).transpose();
        let mean = &gain * DVector::from_column_slice(values);
        let mut cov = &prior - &gain * pa.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean.iter().copied().collect(), cov))
    }
}

/// The oracle as a window [`Denoiser`]: exact `eps = -sigma * score` of the
/// noised marginal of `W` consecutive states, optionally conditioned on
/// clean frames (amortised regimes).
pub struct OracleDenoiser {
    pub model: GaussianAR,
    pub window: usize,
    pub regime: Regime,
    /// Constant added to every prediction; used to check that the
    /// verification ladder notices a wrong score.
    pub eps_bias: f64,
    cache: Mutex<HashMap<CacheKey, Arc<Factor>>>,
}

impl OracleDenoiser {
    pub fn new(model: GaussianAR, window: usize, regime: Regime) -> Result<Self> {
        if window > model.len {
            return Err(Error::TooShort(format!("window {window} longer than oracle length {}", model.len)));
        }
        Ok(Self {
            model,
            window,
            regime,
            eps_bias: 0.0,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Factor of the noised window covariance given clean frames `given`.
    fn factor(&self, t: f64, given: &[usize]) -> Result<Arc<Factor>> {
        let key = (t.to_bits(), given.to_vec());
        if let Some(f) = self.cache.lock().expect("oracle cache").get(&key) {
            return Ok(f.clone());
        }
        let (mu, sigma) = kernel(t)?;
        let s = self.model.joint_cov()?;
        let w = self.window;
        let mut k = DMatrix::from_fn(w, w, |i, j| mu * mu * s[(i, j)] + if i == j { sigma * sigma } else { 0.0 });
        let mut gain = None;
        if !given.is_empty() {
            let swc = DMatrix::from_fn(w, given.len(), |i, j| s[(i, given[j])]);
            let scc = DMatrix::from_fn(given.len(), given.len(), |i, j| s[(given[i], given[j])]);
            let cc = scc.cholesky().ok_or_else(|| Error::SingularSystem("conditioning frames".into()))?;
            let g = cc.solve(&swc.transpose()).transpose();
            k -= (&g * swc.transpose()) * (mu * mu);
            gain = Some(g * mu);
        }
        let chol = k.cholesky().ok_or_else(|| Error::SingularSystem("noised window".into()))?;
        let f = Arc::new(Factor { chol, gain });
        self.cache.lock().expect("oracle cache").insert(key, f.clone());
        Ok(f)
    }

    /// Runs `f(factor, member)` for each batch member, grouping by the
    /// conditioning pattern.
    fn per_member(
        &self,
        t: f64,
        x: &[f64],
        batch: usize,
        width: usize,
        cond: Option<Cond>,
        mut f: impl FnMut(usize, &Factor, DMatrix<f64>),
    ) -> Result<()> {
        let w = self.window;
        let per = w * width;
        if x.len() != batch * per {
            return Err(Error::ShapeMismatch("oracle window batch".into()));
        }
        for b in 0..batch {
            let given: Vec<usize> = match cond {
                Some(c) => (0..w).filter(|&i| c.mask[b * w + i]).collect(),
                None => Vec::new(),
            };
            let fac = self.factor(t, &given)?;
            let mut centered = DMatrix::from_row_slice(w, width, &x[b * per..(b + 1) * per]);
            if let (Some(g), Some(c)) = (&fac.gain, cond) {
                let vals = DMatrix::from_fn(given.len(), width, |i, z| c.channels[b * per + given[i] * width + z]);
                centered -= g * vals;
            }
            f(b, &fac, centered);
        }
        Ok(())
    }
}

impl Denoiser for OracleDenoiser {
    fn window(&self) -> usize {
        self.window
    }

    fn regime(&self) -> Regime {
        self.regime
    }

    fn eps(&self, t: f64, x: &[f64], batch: usize, width: usize, cond: Option<Cond>) -> Result<Vec<f64>> {
        let (_, sigma) = kernel(t)?;
        let per = self.window * width;
        let mut out = vec![0.0; batch * per];
        self.per_member(t, x, batch, width, cond, |b, fac, centered| {
            let v = fac.chol.solve(&centered) * sigma;
            for (o, e) in out[b * per..(b + 1) * per].iter_mut().zip(v.transpose().iter()) {
                *o = e + self.eps_bias;
            }
        })?;
        Ok(out)
    }

    fn eps_vjp(
        &self,
        t: f64,
        x: &[f64],
        batch: usize,
        width: usize,
        cond: Option<Cond>,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, sigma) = kernel(t)?;
        let eps = self.eps(t, x, batch, width, cond)?;
        let c = cotangent(&eps);
        let per = self.window * width;
        let mut g = vec![0.0; batch * per];
        // d eps / d x = sigma K^-1 (symmetric)
        self.per_member(t, x, batch, width, cond, |b, fac, _| {
            let cm = DMatrix::from_row_slice(self.window, width, &c[b * per..(b + 1) * per]);
            let v = fac.chol.solve(&cm) * sigma;
            g[b * per..(b + 1) * per].copy_from_slice(v.transpose().as_slice());
        })?;
        Ok((eps, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_covariance_is_scaled_identity() {
        let m = GaussianAR::iid(2.5, 4, 1).unwrap();
        assert_eq!(m.joint_cov().unwrap(), DMatrix::identity(4, 4) * 2.5);
    }

    #[test]
    fn ar1_autocovariance_closed_form() {
        let a: f64 = 0.9;
        let m = GaussianAR::new(vec![a], 0.5, 6, 1).unwrap();
        let s = m.joint_cov().unwrap();
        for i in 0..6usize {
            for j in 0..6 {
                let expected = a.powi(i.abs_diff(j) as i32) * 0.5 / (1.0 - a * a);
                assert!((s[(i, j)] - expected).abs() < 1e-12);
            }
        }
        assert!(s.cholesky().is_some());
    }

    #[test]
    fn rejects_non_stationary() {
        assert!(matches!(GaussianAR::new(vec![1.0], 1.0, 3, 1), Err(Error::NotStationary)));
        assert!(matches!(GaussianAR::new(vec![0.5, 0.6], 1.0, 3, 1), Err(Error::NotStationary)));
        assert!(GaussianAR::new(vec![0.5, 0.3], 1.0, 3, 1).is_ok());
    }
}
