use std::f64::consts::PI;

use exafs_ga::spectra::{transform_k_to_r, FTConfig, KGrid, KSpectrum, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

fn hanning(k: f64, a: f64, b: f64, sill: f64) -> f64 {
    if k < a || k > b {
        0.0
    } else if sill == 0.0 {
        1.0
    } else if k < a + sill {
        ((k - a) * PI / (2.0 * sill)).sin().powi(2)
    } else if k > b - sill {
        ((b - k) * PI / (2.0 * sill)).sin().powi(2)
    } else {
        1.0
    }
}

/// χ(r_m) summed term by term over the zero-padded array of length N.
fn direct(spec: &KSpectrum, cfg: &FTConfig) -> (Vec<f64>, Vec<Complex64>) {
    let g = spec.grid();
    let dk = g.delta_k();
    let n_fft = cfg.n_fft;
    let offset = (g.k_min() / dk).round() as usize;
    let mut padded = vec![0.0; n_fft];
    for (i, &c) in spec.chi().iter().enumerate() {
        let k = g.k(i);
        let w = match cfg.window {
            Window::Hanning => hanning(k, cfg.k_range.0, cfg.k_range.1, cfg.window_sill),
            Window::Boxcar => f64::from(u8::from(k >= cfg.k_range.0 && k <= cfg.k_range.1)),
        };
        if offset + i < n_fft {
            padded[offset + i] = c * w * k.powi(cfg.k_weight as i32);
        }
    }
    let dr = PI / (n_fft as f64 * dk);
    let scale = Complex64::new(0.0, dk / (PI * n_fft as f64).sqrt());
    let mut r = Vec::new();
    let mut out = Vec::new();
    for m in 0..=n_fft / 2 {
        let rm = m as f64 * dr;
        if rm < cfg.r_range.0 - 1e-12 || rm > cfg.r_range.1 + 1e-12 {
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, &v) in padded.iter().enumerate() {
            let arg = 2.0 * PI * ((n * m) % n_fft) as f64 / n_fft as f64;
            acc += v * Complex64::new(arg.cos(), arg.sin());
        }
        r.push(rm);
        out.push(acc * scale);
    }
    (r, out)
}

fn random_case(rng: &mut ChaCha8Rng) -> (KSpectrum, FTConfig) {
    let dk = [0.05, 0.1, 0.04][rng.random_range(0..3)];
    let n_fft = [32usize, 64, 128, 256][rng.random_range(0..4)];
    let start = rng.random_range(0..10) as f64 * dk;
    let n_points = rng.random_range(8..n_fft - 10);
    let grid = KGrid::new(start, start + (n_points - 1) as f64 * dk, dk).unwrap();
    let chi = (0..grid.n_points()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let span = grid.k_max() - grid.k_min();
    let a = grid.k_min() + rng.random_range(0.0..0.2) * span;
    let b = grid.k_max() - rng.random_range(0.0..0.2) * span;
    let cfg = FTConfig {
        k_weight: rng.random_range(0..=3),
        window: if rng.random_bool(0.5) { Window::Hanning } else { Window::Boxcar },
        window_sill: rng.random_range(0.0..0.25) * (b - a),
        k_range: (a, b),
        n_fft,
        r_range: (0.0, rng.random_range(1.0..12.0)),
    };
    (KSpectrum::new(grid, chi).unwrap(), cfg)
}

#[test]
fn matches_direct_summation_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (spec, cfg) = random_case(&mut rng);
        let fast = transform_k_to_r(&spec, &cfg).unwrap();
        let (r, slow) = direct(&spec, &cfg);
        assert_eq!(fast.r.len(), r.len());
        let norm = slow.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        for (i, (f, s)) in fast.chi_r.iter().zip(&slow).enumerate() {
            assert!((fast.r[i] - r[i]).abs() < 1e-12);
            worst = worst.max((f - s).norm() / norm);
        }
    }
    assert!(worst <= 1e-10, "worst relative error {worst:e}");
}

#[test]
fn transform_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, cfg) = random_case(&mut rng);
    let y_chi: Vec<f64> = (0..x.chi().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = KSpectrum::new(*x.grid(), y_chi).unwrap();
    let (a, b) = (1.7, -0.4);
    let combo: Vec<f64> = x.chi().iter().zip(y.chi()).map(|(p, q)| a * p + b * q).collect();
    let combo = KSpectrum::new(*x.grid(), combo).unwrap();
    let (tx, ty, tc) = (
        transform_k_to_r(&x, &cfg).unwrap(),
        transform_k_to_r(&y, &cfg).unwrap(),
        transform_k_to_r(&combo, &cfg).unwrap(),
    );
    for i in 0..tc.chi_r.len() {
        let expect = tx.chi_r[i] * a + ty.chi_r[i] * b;
        assert!((tc.chi_r[i] - expect).norm() < 1e-12);
    }
}

#[test]
fn single_shell_peaks_at_its_distance() {
    let grid = KGrid::new(0.0, 16.0, 0.05).unwrap();
    let chi = grid.points().iter().map(|&k| (2.0 * k * 2.5).sin()).collect();
    let spec = KSpectrum::new(grid, chi).unwrap();
    let cfg = FTConfig {
        k_weight: 0,
        ..FTConfig::default()
    };
    let r = transform_k_to_r(&spec, &cfg).unwrap();
    let peak = (0..r.r.len())
        .max_by(|&i, &j| r.magnitude[i].total_cmp(&r.magnitude[j]))
        .unwrap();
    let dr = r.r[1] - r.r[0];
    assert!((r.r[peak] - 2.5).abs() <= dr, "peak at {}", r.r[peak]);
}
