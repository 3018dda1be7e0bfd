use super::tensor::Real;
use crate::error::{Error, Result};

/// Mean binary cross-entropy on logits, in the stable form
/// `max(z, 0) - z·y + ln(1 + e^{-|z|})`. Returns the loss and `∂L/∂z`.
pub fn bce_with_logits<T: Real>(logits: &[T], labels: &[T]) -> Result<(f64, Vec<T>)> {
    if logits.len() != labels.len() {
        return Err(Error::domain("bce: logits and labels differ in length"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::domain(format!("bce label {bad:?} outside {{0, 1}}")));
    }
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let (zf, yf) = (z.as_f64(), y.as_f64());
        loss += zf.max(0.0) - zf * yf + (-zf.abs()).exp().ln_1p();
        let p = if zf >= 0.0 {
            1.0 / (1.0 + (-zf).exp())
        } else {
            let e = zf.exp();
            e / (1.0 + e)
        };
        grad.push(T::of((p - yf) / n));
    }
    Ok((loss / n, grad))
}

/// Compressed complex spectral loss on a `T × F` estimate against its
/// target, summed over all bins:
///
/// `Σ |c(S) - c(Ŝ)|² + Σ (|S|^p - |Ŝ|^p)²` with `c(z) = |z|^p e^{j∠z}`.
///
/// A zero bin compresses to zero and receives zero gradient. Returns the
/// loss and the gradients with respect to the real and imaginary parts of
/// the estimate.
pub fn ri_mag_loss<T: Real>(
    est_re: &[T],
    est_im: &[T],
    tgt_re: &[T],
    tgt_im: &[T],
    p: f64,
) -> Result<(f64, Vec<T>, Vec<T>)> {
    let n = est_re.len();
    if [est_im.len(), tgt_re.len(), tgt_im.len()].iter().any(|&l| l != n) {
        return Err(Error::domain("ri_mag_loss: shape mismatch"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("compression exponent {p} outside (0, 1]")));
    }
    let mut loss = 0.0;
    let mut g_re = vec![T::zero(); n];
    let mut g_im = vec![T::zero(); n];
    for k in 0..n {
        let (sr, si) = (tgt_re[k].as_f64(), tgt_im[k].as_f64());
        let sm = sr.hypot(si);
        let (tcr, tci, tcm) = if sm > 0.0 {
            let u = sm.powf(p - 1.0);
            (u * sr, u * si, sm.powf(p))
        } else {
            (0.0, 0.0, 0.0)
        };
        let (a, b) = (est_re[k].as_f64(), est_im[k].as_f64());
        let m = a.hypot(b);
        if m == 0.0 {
            loss += tcr * tcr + tci * tci + tcm * tcm;
            continue;
        }
        let u = m.powf(p - 1.0);
        let (zr, zi, zm) = (u * a, u * b, m.powf(p));
        let (rr, ri) = (zr - tcr, zi - tci);
        let dm = tcm - zm;
        loss += rr * rr + ri * ri + dm * dm;
        let v = (p - 1.0) * m.powf(p - 3.0);
        let (dzr_da, dzr_db) = (u + v * a * a, v * a * b);
        let (dzi_da, dzi_db) = (v * a * b, u + v * b * b);
        let dmp = p * m.powf(p - 2.0);
        let ga = 2.0 * (rr * dzr_da + ri * dzi_da) - 2.0 * dm * dmp * a;
        let gb = 2.0 * (rr * dzr_db + ri * dzi_db) - 2.0 * dm * dmp * b;
        g_re[k] = T::of(ga);
        g_im[k] = T::of(gb);
    }
    Ok((loss, g_re, g_im))
}
