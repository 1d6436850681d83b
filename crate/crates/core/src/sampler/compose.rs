//! Reconstruction of a full-sequence score from local window scores.

use crate::error::{Error, Result};

/// Window and row that supply the score of state `i` when `len` states are
/// covered by the `len - w + 1` windows of `w` consecutive states: the
/// first window covers the leading half-window, the last window the
/// trailing one, and every other state takes the centre row of the window
/// centred on it.
pub fn owner(i: usize, len: usize, w: usize) -> (usize, usize) {
    let n_win = len + 1 - w;
    if n_win == 1 {
        return (0, i);
    }
    let k = w / 2;
    if i < k {
        (0, i)
    } else if i + k >= len {
        (n_win - 1, i + w - len)
    } else {
        (i - k, k)
    }
}

/// Full score from windows of `w = 2k + 1` states. `local` maps a batch of
/// windows `[n][w][d]` to their scores, and is called on chunks of at most
/// `chunk` windows. Returns the score and the number of `local` calls.
pub fn compose_full_score_2kp1(
    local: &mut dyn FnMut(&[f64], usize) -> Result<Vec<f64>>,
    x: &[f64],
    len: usize,
    w: usize,
    d: usize,
    chunk: usize,
) -> Result<(Vec<f64>, usize)> {
    if len < w {
        return Err(Error::TooShort(format!("{len} states, window {w}")));
    }
    if x.len() != len * d {
        return Err(Error::ShapeMismatch(format!("{} values for {len} x {d}", x.len())));
    }
    let n_win = len + 1 - w;
    let per = w * d;
    let chunk = chunk.max(1);
    let mut windows = vec![0.0; 0];
    let mut scores: Vec<f64> = Vec::with_capacity(n_win * per);
    let mut calls = 0;
    for lo in (0..n_win).step_by(chunk) {
        let hi = (lo + chunk).min(n_win);
        windows.clear();
        for s in lo..hi {
            windows.extend_from_slice(&x[s * d..(s + w) * d]);
        }
        let out = local(&windows, hi - lo)?;
        if out.len() != (hi - lo) * per {
            return Err(Error::ShapeMismatch("local score batch".into()));
        }
        scores.extend_from_slice(&out);
        calls += 1;
    }
    let mut full = vec![0.0; len * d];
    for i in 0..len {
        let (win, row) = owner(i, len, w);
        let src = win * per + row * d;
        full[i * d..(i + 1) * d].copy_from_slice(&scores[src..src + d]);
    }
    Ok((full, calls))
}

/// Full score from windows of `k + 1` and `k` states, exact for a Markov
/// chain of order `k`: the log-density is the sum of the `(k+1)`-state
/// marginals minus the `k`-state marginals of their overlaps. `local_kp1`
/// and `local_k` receive the start state and the window `[rows][d]`.
pub fn compose_full_score_kp1(
    local_kp1: &mut dyn FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    local_k: &mut dyn FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    len: usize,
    k: usize,
    d: usize,
) -> Result<Vec<f64>> {
    if k == 0 || len < k + 1 {
        return Err(Error::TooShort(format!("{len} states for order {k}")));
    }
    if x.len() != len * d {
        return Err(Error::ShapeMismatch(format!("{} values for {len} x {d}", x.len())));
    }
    let mut full = vec![0.0; len * d];
    for s in 0..=len - k - 1 {
        let g = local_kp1(s, &x[s * d..(s + k + 1) * d])?;
        for (f, v) in full[s * d..].iter_mut().zip(&g) {
            *f += v;
        }
    }
    for s in 1..=len - k - 1 {
        let g = local_k(s, &x[s * d..(s + k) * d])?;
        for (f, v) in full[s * d..].iter_mut().zip(&g) {
            *f -= v;
        }
    }
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_state_has_one_owner_inside_its_window() {
        for w in [1usize, 3, 5, 9] {
            for len in w..w + 12 {
                for i in 0..len {
                    let (win, row) = owner(i, len, w);
                    assert!(win + w <= len && row < w);
                    assert_eq!(win + row, i);
                }
            }
        }
    }

    #[test]
    fn single_window_is_verbatim() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let mut local = |w: &[f64], _n: usize| Ok(w.iter().map(|v| v * 2.0).collect());
        let (s, calls) = compose_full_score_2kp1(&mut local, &x, 5, 5, 2, 8).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(s, x.iter().map(|v| v * 2.0).collect::<Vec<_>>());
    }

    #[test]
    fn chunking_counts_calls() {
        let x = vec![0.0; 20];
        let mut local = |_: &[f64], n: usize| Ok(vec![0.0; n * 3]);
        let (_, calls) = compose_full_score_2kp1(&mut local, &x, 20, 3, 1, 5).unwrap();
        assert_eq!(calls, 18usize.div_ceil(5));
        assert!(compose_full_score_2kp1(&mut local, &x[..2], 2, 3, 1, 5).is_err());
    }

    #[test]
    fn kp1_rejects_short_sequences() {
        let mut f = |_: usize, w: &[f64]| Ok(w.to_vec());
        let mut g = |_: usize, w: &[f64]| Ok(w.to_vec());
        assert!(compose_full_score_kp1(&mut f, &mut g, &[1.0], 1, 1, 1).is_err());
    }
}
