//! 2-D restoration: four blurred noisy observations, a pixel box and known
//! low-frequency Fourier coefficients.
//!
//! Observation `k` is `r_k = L xbar + w_k` with `L` a circular Gaussian
//! blur (std 8) and `w_k` uniform in `[0, 5]^{n x n}`. Each observation
//! gives the constraint `f_k(x) = |r_k - L x|^2 - xi <= 0`, enforced through
//! its subgradient projector; `xi` is the 95% confidence radius of `|w_k|^2`.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{
    BoxProjector, Fft2, FourierSupport, InequalityConstraint, Operator, OperatorFamily,
    SubgradientProjector,
};
use crate::point::Point;
use crate::rng::{RandomStream, StreamLabel};

/// Blur width on the full-size 256 x 256 grid.
pub const BLUR_STD: f64 = 8.0;
pub const OBSERVATIONS: usize = 4;
pub const NOISE_MAX: f64 = 5.0;
pub const PIXEL_MAX: f64 = 255.0;

/// `E u^2` and `E u^4` for `u` uniform on `[0, 5]`.
pub const NOISE_SECOND_MOMENT: f64 = 25.0 / 3.0;
pub const NOISE_FOURTH_MOMENT: f64 = 125.0;

/// `xi = n^2 E u^2 + 1.96 n sqrt(E u^4 - (E u^2)^2)`
pub fn ball_radius(n: usize) -> f64 {
    let n = n as f64;
    let spread = (NOISE_FOURTH_MOMENT - NOISE_SECOND_MOMENT * NOISE_SECOND_MOMENT).sqrt();
    n * n * NOISE_SECOND_MOMENT + 1.96 * n * spread
}

/// Transfer function of the circular Gaussian blur on an `n x n` grid. The
/// kernel is even, so its spectrum is real.
pub fn gaussian_transfer(fft: &Fft2, std: f64) -> Vec<f64> {
    let n = fft.side();
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let d = i.min(n - i) as f64;
            (-d * d / (2.0 * std * std)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    let mut kernel = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            kernel.push(g[u] * g[v] / (total * total));
        }
    }
    fft.forward_real(&kernel).into_iter().map(|c| c.re).collect()
}

/// `L x` through the transfer function.
pub fn apply_blur(fft: &Fft2, transfer: &[f64], x: &[f64]) -> Vec<f64> {
    let mut spec = fft.forward_real(x);
    for (s, h) in spec.iter_mut().zip(transfer) {
        *s *= h;
    }
    fft.inverse(&mut spec);
    spec.into_iter().map(|c| c.re).collect()
}

/// `f(x) = |r - L x|^2 - xi` with gradient `2 L^T (L x - r) = 2 L (L x - r)`,
/// both evaluated in the frequency domain.
#[derive(Debug, Clone)]
pub struct BlurBall {
    fft: Arc<Fft2>,
    transfer: Arc<Vec<f64>>,
    observation_hat: Vec<Complex64>,
    xi: f64,
}

impl BlurBall {
    pub fn new(fft: Arc<Fft2>, transfer: Arc<Vec<f64>>, observation: &[f64], xi: f64) -> Self {
        let observation_hat = fft.forward_real(observation);
        BlurBall {
            fft,
            transfer,
            observation_hat,
            xi,
        }
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    fn grid(&self) -> f64 {
        let n = self.fft.side();
        (n * n) as f64
    }

    /// Spectrum of `L x - r` and `f(x)`.
    fn misfit(&self, x: &Point) -> (Vec<Complex64>, f64) {
        let mut spec = self.fft.forward_real(x.as_slice());
        for ((s, h), r) in spec.iter_mut().zip(self.transfer.iter()).zip(&self.observation_hat) {
            *s = *s * h - r;
        }
        let energy = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.grid();
        (spec, energy - self.xi)
    }

    fn gradient_from(&self, mut misfit: Vec<Complex64>) -> Point {
        for (s, h) in misfit.iter_mut().zip(self.transfer.iter()) {
            *s *= 2.0 * h;
        }
        self.fft.inverse(&mut misfit);
        Point::from_raw(misfit.into_iter().map(|c| c.re).collect())
    }
}

impl InequalityConstraint for BlurBall {
    fn dim(&self) -> usize {
        self.transfer.len()
    }

    fn value(&self, x: &Point) -> f64 {
        self.misfit(x).1
    }

    fn subgradient(&self, x: &Point) -> Point {
        self.gradient_from(self.misfit(x).0)
    }

    fn value_and_subgradient(&self, x: &Point) -> (f64, Option<Point>) {
        let (spec, value) = self.misfit(x);
        if value > 0.0 {
            (value, Some(self.gradient_from(spec)))
        } else {
            (value, None)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageFeasibility {
    /// `max_k f_k(x)`
    pub max_ball: f64,
    pub box_violation: f64,
    /// Relative mismatch on the known frequencies.
    pub fourier_residual: f64,
}

#[derive(Clone)]
pub struct ImageProblem {
    pub spec: ImageSpec,
    pub xi: f64,
    pub ground_truth: Point,
    pub observations: Vec<Vec<f64>>,
    pub transfer: Arc<Vec<f64>>,
    pub balls: Vec<Arc<SubgradientProjector<BlurBall>>>,
    pub pixel_box: Arc<BoxProjector>,
    pub fourier: Arc<FourierSupport>,
    /// Whether the ground truth lies in each confidence ball.
    pub truth_in_ball: Vec<bool>,
    pub family: OperatorFamily,
}

impl ImageProblem {
    pub fn feasibility(&self, x: &Point) -> ImageFeasibility {
        ImageFeasibility {
            max_ball: self
                .balls
                .iter()
                .map(|b| b.constraint().value(x))
                .fold(f64::NEG_INFINITY, f64::max),
            box_violation: self.pixel_box.violation(x),
            fourier_residual: self.fourier.residual(x),
        }
    }
}

/// Built-in synthetic grayscale scene with values in `[0, 255]`: a shaded
/// background, a bright disc, a dark bar, a ring and a small saturated
/// square.
pub fn test_image(n: usize) -> Point {
    let s = n as f64;
    let mut img = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (r as f64 / s, c as f64 / s);
            let mut v = 60.0 + 80.0 * x * y;
            let disc = (x - 0.35).powi(2) + (y - 0.4).powi(2);
            if disc < 0.04 {
                v = 210.0;
            }
            if (0.6..0.85).contains(&x) && (0.15..0.75).contains(&y) {
                v = 25.0;
            }
            let ring = ((x - 0.7).powi(2) + (y - 0.8).powi(2)).sqrt();
            if (0.08..0.12).contains(&ring) {
                v = 160.0;
            }
            if (0.1..0.2).contains(&x) && (0.75..0.85).contains(&y) {
                v = PIXEL_MAX;
            }
            if (0.45..0.5).contains(&x) && (0.05..0.1).contains(&y) {
                v = 0.0;
            }
            img.push(v);
        }
    }
    Point::from_raw(img)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSpec {
    pub n: usize,
    pub blur_std: f64,
}

impl ImageSpec {
    /// `n = 64` with the blur narrowed in proportion to the grid.
    pub fn desk() -> Self {
        Self::scaled(64)
    }

    pub fn paper() -> Self {
        Self::scaled(256)
    }

    /// Side `n` with blur std `8 n / 256`, keeping the blur width relative to
    /// the image fixed.
    pub fn scaled(n: usize) -> Self {
        ImageSpec {
            n,
            blur_std: BLUR_STD * n as f64 / 256.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_side(self.n)?;
        if !(self.blur_std.is_finite() && self.blur_std > 0.0) {
            return Err(Error::invalid(format!("blur std must be positive, got {}", self.blur_std)));
        }
        Ok(())
    }
}

pub fn check_side(n: usize) -> Result<()> {
    if n == 0 || n % 8 != 0 {
        return Err(Error::invalid(format!("image side must be a positive multiple of 8, got {n}")));
    }
    Ok(())
}

pub fn generate_image_problem(spec: &ImageSpec, seed: u64) -> Result<ImageProblem> {
    spec.validate()?;
    image_problem_from_truth(spec, test_image(spec.n), seed)
}

pub fn image_problem_from_truth(spec: &ImageSpec, truth: Point, seed: u64) -> Result<ImageProblem> {
    spec.validate()?;
    let n = spec.n;
    if truth.dim() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: truth.dim(),
        });
    }
    if truth.as_slice().iter().any(|v| !(0.0..=PIXEL_MAX).contains(v)) {
        return Err(Error::invalid("ground truth pixels must lie in [0, 255]"));
    }
    let fft = Arc::new(Fft2::new(n));
    let transfer = Arc::new(gaussian_transfer(&fft, spec.blur_std));
    let blurred = apply_blur(&fft, &transfer, truth.as_slice());
    let xi = ball_radius(n);
    let mut noise = RandomStream::new(seed, StreamLabel::Noise);
    let mut observations = Vec::with_capacity(OBSERVATIONS);
    let mut balls = Vec::with_capacity(OBSERVATIONS);
    for _ in 0..OBSERVATIONS {
        let obs: Vec<f64> = blurred
            .iter()
            .map(|b| b + noise.uniform_in(0.0, NOISE_MAX))
            .collect();
        balls.push(Arc::new(SubgradientProjector::new(BlurBall::new(
            Arc::clone(&fft),
            Arc::clone(&transfer),
            &obs,
            xi,
        ))));
        observations.push(obs);
    }
    let truth_in_ball = balls.iter().map(|b| b.constraint().value(&truth) <= 0.0).collect();
    let pixel_box = Arc::new(BoxProjector::uniform(n * n, 0.0, PIXEL_MAX)?);
    let fourier = Arc::new(FourierSupport::low_frequency(n, n / 8, &truth)?);

    let mut members: Vec<Arc<dyn Operator>> = balls
        .iter()
        .map(|b| Arc::clone(b) as Arc<dyn Operator>)
        .collect();
    members.push(Arc::clone(&pixel_box) as Arc<dyn Operator>);
    members.push(Arc::clone(&fourier) as Arc<dyn Operator>);
    let family = OperatorFamily::new(members)?;

    Ok(ImageProblem {
        spec: *spec,
        xi,
        ground_truth: truth,
        observations,
        transfer,
        balls,
        pixel_box,
        fourier,
        truth_in_ball,
        family,
    })
}

/// Reads a binary 8-bit PGM (`P5`, maxval <= 255). Returns the side and the
/// pixels; the image must be square.
pub fn load_pgm(path: &Path) -> Result<(usize, Point)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, Point)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::invalid(format!("expected a P5 PGM, found `{}`", fields[0])));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::invalid(format!("bad PGM header field `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::invalid(format!("PGM maxval {maxval} is not 8-bit")));
    }
    if w != h {
        return Err(Error::invalid(format!("image must be square, got {w}x{h}")));
    }
    let raster = bytes.get(pos..pos + w * h).ok_or_else(|| Error::invalid("truncated PGM raster"))?;
    Ok((w, Point::from_raw(raster.iter().map(|&b| b as f64).collect())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::subgradient_projector;

    #[test]
    fn radius_values() {
        // 65536 * 25/3 + 1.96 * 256 * sqrt(500/9)
        assert!((ball_radius(256) - 549873.231561301).abs() < 1e-6);
        assert!((ball_radius(64) - 35068.307890325246).abs() < 1e-7);
        // the ball is a few standard deviations above the mean of |w|^2
        assert!((ball_radius(256) / 549873.6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noise_moments_by_monte_carlo() {
        let mut s = RandomStream::new(8, StreamLabel::Audit);
        let m = 10_000_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..m {
            let u: f64 = s.uniform_in(0.0, NOISE_MAX);
            let u2 = u * u;
            m2 += u2;
            m4 += u2 * u2;
        }
        let (m2, m4) = (m2 / m as f64, m4 / m as f64);
        assert!((m2 / NOISE_SECOND_MOMENT - 1.0).abs() < 1e-3);
        assert!((m4 / NOISE_FOURTH_MOMENT - 1.0).abs() < 1e-3);
    }

    #[test]
    fn blur_matches_direct_convolution() {
        let n = 8;
        let fft = Fft2::new(n);
        let h = gaussian_transfer(&fft, 1.5);
        let x: Vec<f64> = (0..n * n).map(|i| ((i * 7) % 11) as f64).collect();
        let fast = apply_blur(&fft, &h, &x);
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let d = i.min(n - i) as f64;
                (-d * d / 4.5).exp()
            })
            .collect();
        let t: f64 = g.iter().sum();
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for u in 0..n {
                    for v in 0..n {
                        acc += g[(r + n - u) % n] * g[(c + n - v) % n] / (t * t) * x[u * n + v];
                    }
                }
                assert!((fast[r * n + c] - acc).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ball_value_and_gradient_match_spatial_formulas() {
        let n = 16;
        let fft = Arc::new(Fft2::new(n));
        let h = Arc::new(gaussian_transfer(&fft, 2.0));
        let obs: Vec<f64> = (0..n * n).map(|i| (i % 13) as f64).collect();
        let ball = BlurBall::new(Arc::clone(&fft), Arc::clone(&h), &obs, 10.0);
        let x = Point::new((0..n * n).map(|i| (i as f64 * 0.1).sin() * 40.0).collect()).unwrap();
        let lx = apply_blur(&fft, &h, x.as_slice());
        let resid: Vec<f64> = lx.iter().zip(&obs).map(|(a, b)| a - b).collect();
        let f = resid.iter().map(|v| v * v).sum::<f64>() - 10.0;
        assert!((ball.value(&x) - f).abs() < 1e-9 * f.abs());
        let grad: Vec<f64> = apply_blur(&fft, &h, &resid).iter().map(|v| 2.0 * v).collect();
        let g = ball.subgradient(&x);
        assert!(g.max_abs_diff(&Point::new(grad).unwrap()) < 1e-9);
        let out = subgradient_projector(&ball, &x).unwrap();
        assert!(ball.value(&out) <= f + 1e-9 * f.abs());
    }

    #[test]
    fn desk_problem_structure() {
        let prob = generate_image_problem(&ImageSpec::desk(), 0).unwrap();
        assert_eq!(prob.family.len(), 6);
        assert!((prob.xi - 35068.3).abs() < 0.1);
        let feas = prob.feasibility(&prob.ground_truth);
        assert_eq!(feas.box_violation, 0.0);
        assert!(feas.fourier_residual < 1e-12);
        assert_eq!(prob.truth_in_ball.len(), 4);
        // before mirroring the mask has (n/8)^2 entries
        let closed = prob.fourier.support_len();
        assert!(closed >= 64 && closed <= 2 * 64);
        assert!(generate_image_problem(&ImageSpec::scaled(60), 0).is_err());
        assert_eq!(ImageSpec::paper().blur_std, 8.0);
    }

    #[test]
    fn paper_mask_size() {
        let fft_mask = FourierSupport::low_frequency(256, 32, &Point::zeros(256 * 256)).unwrap();
        assert!(fft_mask.support_len() >= 1024);
    }

    #[test]
    fn pgm_round_trip() {
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 200, 255]);
        let (n, img) = parse_pgm(&bytes).unwrap();
        assert_eq!(n, 2);
        assert_eq!(img.as_slice(), &[0.0, 10.0, 200.0, 255.0]);
        assert!(parse_pgm(b"P2\n2 2\n255\n0 0 0 0").is_err());
        assert!(parse_pgm(b"P5\n2 3\n255\n\0\0\0\0\0\0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn test_image_range() {
        let img = test_image(64);
        let (lo, hi) = img
            .as_slice()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert_eq!((lo, hi), (0.0, PIXEL_MAX));
    }
}
