//! Two-dimensional DFT and the projector onto images with prescribed
//! Fourier coefficients on a frequency set `S`.
//!
//! Convention: unnormalized forward transform, `1/N^2` on the inverse.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Operator;
use crate::error::{Error, Result};
use crate::point::Point;

/// Imaginary residue allowed in an inverse transform of a
/// conjugate-symmetric spectrum, relative to the largest real entry.
const IMAG_RESIDUE_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward);
    }

    /// Inverse transform including the `1/N^2` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Inverse transform of a spectrum expected to be conjugate-symmetric.
    /// Fails when the imaginary part is not negligible.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Result<Vec<f64>> {
        self.inverse(&mut spectrum);
        let max_re = spectrum.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
        let max_im = spectrum.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if max_im > IMAG_RESIDUE_TOL * max_re {
            return Err(Error::Numeric(format!(
                "inverse DFT left imaginary residue {max_im:e} (scale {max_re:e})"
            )));
        }
        Ok(spectrum.into_iter().map(|c| c.re).collect())
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(buf.len(), n * n, "grid must be n x n");
        plan.process(buf);
        transpose_in_place(buf, n);
        plan.process(buf);
        transpose_in_place(buf, n);
    }
}

fn transpose_in_place(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

fn mirror(idx: usize, n: usize) -> usize {
    let (u, v) = (idx / n, idx % n);
    ((n - u) % n) * n + (n - v) % n
}

/// Projector onto `{x : F(x) = target on S}`.
#[derive(Debug, Clone)]
pub struct FourierSupport {
    fft: Fft2,
    /// Indices of `S`, row-major, sorted.
    support: Vec<usize>,
    target: Vec<Complex64>,
}

impl FourierSupport {
    /// Builds the projector, closing `mask` under `(u, v) -> (-u, -v)` and
    /// filling mirrored targets with conjugates. `target` is read on the
    /// closed mask only and must be conjugate-symmetric there.
    pub fn new(n: usize, mask: &[bool], target: &[Complex64]) -> Result<Self> {
        if mask.len() != n * n || target.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: mask.len().min(target.len()),
            });
        }
        let mut closed = mask.to_vec();
        let mut full_target = vec![Complex64::new(0.0, 0.0); n * n];
        for idx in 0..n * n {
            if mask[idx] {
                full_target[idx] = target[idx];
                let m = mirror(idx, n);
                if !mask[m] {
                    closed[m] = true;
                    full_target[m] = target[idx].conj();
                }
            }
        }
        Self::from_closed(n, &closed, &full_target)
    }

    /// Like [`FourierSupport::new`] but rejects masks that are not already
    /// closed under conjugate symmetry.
    pub fn new_strict(n: usize, mask: &[bool], target: &[Complex64]) -> Result<Self> {
        if mask.len() != n * n || target.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: mask.len().min(target.len()),
            });
        }
        if let Some(idx) = (0..n * n).find(|&i| mask[i] && !mask[mirror(i, n)]) {
            return Err(Error::invalid(format!(
                "frequency mask is not conjugate-symmetric: ({}, {}) present without its mirror",
                idx / n,
                idx % n
            )));
        }
        Self::from_closed(n, mask, target)
    }

    fn from_closed(n: usize, mask: &[bool], target: &[Complex64]) -> Result<Self> {
        let scale = target
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(t, _)| t.norm())
            .fold(1.0, f64::max);
        let support: Vec<usize> = (0..n * n).filter(|&i| mask[i]).collect();
        for &i in &support {
            let gap = (target[i] - target[mirror(i, n)].conj()).norm();
            if gap > 1e-9 * scale {
                return Err(Error::invalid(format!(
                    "target spectrum not conjugate-symmetric at ({}, {})",
                    i / n,
                    i % n
                )));
            }
        }
        Ok(FourierSupport {
            fft: Fft2::new(n),
            target: support.iter().map(|&i| target[i]).collect(),
            support,
        })
    }

    /// Constrains the low-frequency square `{0, ..., side - 1}^2` (and its
    /// mirror) to match the spectrum of `image`.
    pub fn low_frequency(n: usize, side: usize, image: &Point) -> Result<Self> {
        if image.dim() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: image.dim(),
            });
        }
        if side == 0 || side > n {
            return Err(Error::invalid(format!("low-frequency side {side} outside 1..={n}")));
        }
        let fft = Fft2::new(n);
        let spectrum = fft.forward_real(image.as_slice());
        let mut mask = vec![false; n * n];
        for u in 0..side {
            for v in 0..side {
                mask[u * n + v] = true;
            }
        }
        Self::new(n, &mask, &spectrum)
    }

    pub fn side(&self) -> usize {
        self.fft.side()
    }

    /// Number of constrained frequencies after closure.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `max_{S} |F(x) - target| / max(1, max_S |target|)`.
    pub fn residual(&self, x: &Point) -> f64 {
        let spectrum = self.fft.forward_real(x.as_slice());
        let scale = self.target.iter().map(|t| t.norm()).fold(1.0, f64::max);
        self.support
            .iter()
            .zip(&self.target)
            .map(|(&i, t)| (spectrum[i] - t).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

impl Operator for FourierSupport {
    fn dim(&self) -> usize {
        let n = self.fft.side();
        n * n
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        let mut spectrum = self.fft.forward_real(x.as_slice());
        for (&i, t) in self.support.iter().zip(&self.target) {
            spectrum[i] = *t;
        }
        Point::new(self.fft.inverse_real(spectrum)?)
    }

    fn contains(&self, x: &Point) -> Option<bool> {
        Some(self.residual(x) <= 1e-9)
    }
}

/// `F^{-1}(target 1_S + F(x) 1_{not S})` on an `n x n` grid. The mask must
/// already be closed under conjugate symmetry.
pub fn project_fourier_support(
    target: &[Complex64],
    mask: &[bool],
    n: usize,
    x: &Point,
) -> Result<Point> {
    FourierSupport::new_strict(n, mask, target)?.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RandomStream, StreamLabel};

    fn random_image(n: usize, seed: u64) -> Point {
        let mut s = RandomStream::new(seed, StreamLabel::Audit);
        Point::new((0..n * n).map(|_| s.uniform_in(-1.0, 1.0)).collect()).unwrap()
    }

    // Direct O(n^4) DFT, independent of rustfft.
    fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for u in 0..n {
            for v in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    for c in 0..n {
                        let phase = -2.0 * std::f64::consts::PI * ((u * r + v * c) as f64) / n as f64;
                        acc += x[r * n + c] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * n + v] = acc;
            }
        }
        out
    }

    #[test]
    fn fft_matches_direct_dft() {
        let n = 8;
        let x = random_image(n, 1);
        let fast = Fft2::new(n).forward_real(x.as_slice());
        let slow = naive_dft(x.as_slice(), n);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        let back = Fft2::new(n).inverse_real(fast).unwrap();
        for (a, b) in back.iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constrained_and_free_frequencies() {
        let n = 8;
        let truth = random_image(n, 2);
        let proj = FourierSupport::low_frequency(n, 2, &truth).unwrap();
        let x = random_image(n, 3);
        let px = proj.apply(&x).unwrap();
        let spec_truth = naive_dft(truth.as_slice(), n);
        let spec_x = naive_dft(x.as_slice(), n);
        let spec_px = naive_dft(px.as_slice(), n);
        let scale = spec_truth.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let support = proj.support().to_vec();
        for i in 0..n * n {
            let expected = if support.contains(&i) { spec_truth[i] } else { spec_x[i] };
            assert!((spec_px[i] - expected).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn idempotent_and_fixes_members() {
        let n = 8;
        let truth = random_image(n, 4);
        let proj = FourierSupport::low_frequency(n, 2, &truth).unwrap();
        let truth_again = proj.apply(&truth).unwrap();
        assert!(truth_again.max_abs_diff(&truth) < 1e-9);
        let x = random_image(n, 5);
        let once = proj.apply(&x).unwrap();
        let twice = proj.apply(&once).unwrap();
        assert!(twice.max_abs_diff(&once) < 1e-9);
        assert_eq!(proj.contains(&once), Some(true));
    }

    #[test]
    fn mask_closure() {
        let n = 8;
        let truth = random_image(n, 6);
        let proj = FourierSupport::low_frequency(n, 2, &truth).unwrap();
        // {0,1}^2 closes to (0,0),(0,1),(0,7),(1,0),(7,0),(1,1),(7,7)
        assert_eq!(proj.support_len(), 7);

        let spectrum = Fft2::new(n).forward_real(truth.as_slice());
        let mut mask = vec![false; n * n];
        mask[n + 1] = true;
        assert!(project_fourier_support(&spectrum, &mask, n, &truth).is_err());
        mask[7 * n + 7] = true;
        assert!(project_fourier_support(&spectrum, &mask, n, &truth).is_ok());

        let mut bad = spectrum.clone();
        bad[n + 1] += Complex64::new(0.0, 1.0);
        assert!(project_fourier_support(&bad, &mask, n, &truth).is_err());
    }

    #[test]
    fn firmly_nonexpansive() {
        let n = 8;
        let proj = FourierSupport::low_frequency(n, 3, &random_image(n, 7)).unwrap();
        for seed in 0..20 {
            let x = random_image(n, 100 + seed);
            let y = random_image(n, 200 + seed);
            let px = proj.apply(&x).unwrap();
            let py = proj.apply(&y).unwrap();
            assert!(x.sub(&y).dot(&px.sub(&py)) >= px.distance_sq(&py) - 1e-9);
        }
    }
}
