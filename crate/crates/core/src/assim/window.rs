use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Multiple of the decorrelation time used as the default online-smoother window.
pub const WINDOW_DECORRELATIONS: usize = 20;

/// Largest lag (in steps) at which any observed component's autocorrelation
/// first drops below `1/e`. Components that never decorrelate report the
/// full series length.
pub fn decorrelation_steps(x: &[DVector<f64>]) -> usize {
    let n = x.len();
    if n < 2 {
        return 1;
    }
    let k = x[0].len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let threshold = (-1.0f64).exp();

    let mut worst = 1;
    for c in 0..k {
        let mean = x.iter().map(|v| v[c]).sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v[c] - mean, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        forward.process(&mut buf);
        for z in buf.iter_mut() {
            *z = Complex::new(z.norm_sqr(), 0.0);
        }
        inverse.process(&mut buf);
        let zero = buf[0].re;
        if !(zero > 0.0) {
            continue;
        }
        let lag = (1..n).find(|&lag| buf[lag].re / zero < threshold).unwrap_or(n);
        worst = worst.max(lag);
    }
    worst
}

/// `20 ×` the decorrelation steps of `x`, capped at the number of steps.
pub fn default_window(x: &[DVector<f64>]) -> usize {
    let steps = x.len().saturating_sub(1).max(1);
    decorrelation_steps(x).saturating_mul(WINDOW_DECORRELATIONS).clamp(1, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = 0.0;
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v = phi * v + z;
                DVector::from_element(1, v)
            })
            .collect()
    }

    #[test]
    fn ar1_decorrelation_matches_theory() {
        // ACF of AR(1) is φ^lag; it drops below 1/e at lag ⌈−1/ln φ⌉.
        let phi: f64 = 0.99;
        let want = (-1.0 / phi.ln()).ceil() as usize;
        let got = decorrelation_steps(&ar1(phi, 200_000));
        assert!((got as f64 - want as f64).abs() <= 0.15 * want as f64, "{got} vs {want}");
    }

    #[test]
    fn white_noise_decorrelates_immediately() {
        assert_eq!(decorrelation_steps(&ar1(0.0, 10_000)), 1);
    }

    #[test]
    fn window_is_capped() {
        let x = ar1(0.999, 500);
        assert!(default_window(&x) <= 499);
    }
}
