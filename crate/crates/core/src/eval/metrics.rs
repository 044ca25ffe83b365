use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::GazeVector;
use crate::env::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GazeAxis {
    Yaw,
    Pitch,
}

impl GazeAxis {
    pub fn of(self, g: GazeVector) -> f64 {
        match self {
            GazeAxis::Yaw => g.yaw,
            GazeAxis::Pitch => g.pitch,
        }
    }
}

/// Fraction of trajectories that reached their goal.
pub fn average_success(trajectories: &[Trajectory]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Invalid("no trajectories to score".into()));
    }
    let hits = trajectories.iter().filter(|t| t.success).count();
    Ok(hits as f64 / trajectories.len() as f64)
}

/// Coefficient of determination of `predicted` against `truth`.
pub fn r_squared(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract("r_squared needs equal lengths".into()));
    }
    if truth.len() < 2 {
        return Err(Error::Invalid("r_squared needs at least two samples".into()));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Invalid("constant ground truth has no variance".into()));
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of one axis over the shared prefix of two position series.
pub fn r_squared_axis(predicted: &[GazeVector], truth: &[GazeVector], axis: GazeAxis) -> Result<f64> {
    let n = predicted.len().min(truth.len());
    let p: Vec<f64> = predicted[..n].iter().map(|&g| axis.of(g)).collect();
    let t: Vec<f64> = truth[..n].iter().map(|&g| axis.of(g)).collect();
    r_squared(&p, &t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparcConfig {
    pub sample_rate: f64,
    pub padding_factor: usize,
    pub cutoff_freq: f64,
    pub amplitude_threshold: f64,
}

impl Default for SparcConfig {
    fn default() -> Self {
        Self {
            sample_rate: 30.0,
            padding_factor: 4,
            cutoff_freq: 10.0,
            amplitude_threshold: 0.05,
        }
    }
}

impl SparcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Invalid("sparc sample_rate must be positive".into()));
        }
        if !(self.cutoff_freq > 0.0 && self.cutoff_freq < self.sample_rate / 2.0) {
            return Err(Error::Invalid("sparc cutoff must lie in (0, sample_rate / 2)".into()));
        }
        if !(self.amplitude_threshold > 0.0 && self.amplitude_threshold < 1.0) {
            return Err(Error::Invalid("sparc amplitude_threshold must lie in (0, 1)".into()));
        }
        if self.padding_factor == 0 {
            return Err(Error::Invalid("sparc padding_factor must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sparc {
    pub value: f64,
    /// The series never moved; `value` is 0.
    pub no_motion: bool,
}

pub const SPARC_MIN_LEN: usize = 8;

/// Spectral arc length of the speed profile of one position series.
pub fn sparc(positions: &[f64], cfg: &SparcConfig) -> Result<Sparc> {
    cfg.validate()?;
    if positions.len() < SPARC_MIN_LEN {
        return Err(Error::Invalid(format!(
            "sparc needs at least {SPARC_MIN_LEN} samples, got {}",
            positions.len()
        )));
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sparc positions".into()));
    }
    let speed: Vec<f64> = positions
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() * cfg.sample_rate)
        .collect();
    if speed.iter().all(|&s| s == 0.0) {
        return Ok(Sparc {
            value: 0.0,
            no_motion: true,
        });
    }
    let nfft = cfg.padding_factor * speed.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = speed
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(nfft);
    fft.process(&mut buf);
    let magnitudes: Vec<f64> = buf[..=nfft / 2].iter().map(|c| c.norm()).collect();
    Ok(Sparc {
        value: arc_length(&magnitudes, nfft, cfg),
        no_motion: false,
    })
}

/// Arc length over the selected band of a one-sided magnitude spectrum.
fn arc_length(magnitudes: &[f64], nfft: usize, cfg: &SparcConfig) -> f64 {
    let peak = magnitudes.iter().cloned().fold(0.0, f64::max);
    let df = cfg.sample_rate / nfft as f64;
    let in_band = magnitudes
        .iter()
        .enumerate()
        .take_while(|(k, _)| *k as f64 * df <= cfg.cutoff_freq)
        .count();
    let normalized: Vec<f64> = magnitudes[..in_band].iter().map(|m| m / peak).collect();
    let last = normalized
        .iter()
        .rposition(|&m| m >= cfg.amplitude_threshold)
        .unwrap_or(0);
    if last == 0 {
        return 0.0;
    }
    let span = last as f64 * df;
    -normalized[..=last]
        .windows(2)
        .map(|w| ((df / span).powi(2) + (w[1] - w[0]).powi(2)).sqrt())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::minimum_jerk;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    /// O(n^2) DFT and a direct transcription of the arc-length definition.
    fn brute_force_sparc(positions: &[f64], cfg: &SparcConfig) -> f64 {
        let speed: Vec<f64> = (1..positions.len())
            .map(|i| (positions[i] - positions[i - 1]).abs() * cfg.sample_rate)
            .collect();
        let mut pow2 = 1;
        while pow2 < speed.len() {
            pow2 *= 2;
        }
        let nfft = pow2 * cfg.padding_factor;
        let mags: Vec<f64> = (0..=nfft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, s) in speed.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / nfft as f64;
                    re += s * ang.cos();
                    im += s * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let max = mags.iter().cloned().fold(f64::MIN, f64::max);
        let freqs: Vec<f64> = (0..mags.len()).map(|k| k as f64 * cfg.sample_rate / nfft as f64).collect();
        let mut sel: Vec<(f64, f64)> = freqs
            .iter()
            .zip(&mags)
            .filter(|(f, _)| **f <= cfg.cutoff_freq)
            .map(|(f, m)| (*f, m / max))
            .collect();
        while sel.len() > 1 && sel.last().unwrap().1 < cfg.amplitude_threshold {
            sel.pop();
        }
        if sel.len() < 2 {
            return 0.0;
        }
        let range = sel.last().unwrap().0 - sel[0].0;
        let mut len = 0.0;
        for i in 1..sel.len() {
            let dx = (sel[i].0 - sel[i - 1].0) / range;
            let dy = sel[i].1 - sel[i - 1].1;
            len += (dx * dx + dy * dy).sqrt();
        }
        -len
    }

    fn reach(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.4 * minimum_jerk(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn success_counting() {
        let t = |success| Trajectory {
            states: vec![],
            actions: vec![],
            success,
            final_distance: 0.0,
            aborted: None,
        };
        let mut ts: Vec<Trajectory> = (0..100).map(|i| t(i >= 4)).collect();
        assert_eq!(average_success(&ts).unwrap(), 0.96);
        ts.push(t(false));
        assert_eq!(average_success(&ts).unwrap(), 96.0 / 101.0);
        assert!(average_success(&[]).is_err());
        let mut rng = seeded(1);
        let ts: Vec<Trajectory> = (0..10).map(|_| t(rng.random_bool(0.5))).collect();
        let manual = ts.iter().filter(|x| x.success).count() as f64 / 10.0;
        assert_eq!(average_success(&ts).unwrap(), manual);
    }

    #[test]
    fn r_squared_identities() {
        let y = [0.1, 0.4, -0.2, 0.3];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = [0.15; 4];
        assert!(r_squared(&mean, &y).unwrap().abs() < 1e-15);
        assert!(r_squared(&y, &[0.2; 4]).is_err());
        assert!(r_squared(&y[..1], &y[..1]).is_err());
        assert!(r_squared(&y, &y[..3]).is_err());
        // (1, 2, 3) against truth (1, 3, 2): ss_res 2, ss_tot 2
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn r_squared_axis_uses_shared_prefix() {
        let truth = [GazeVector::new(0.0, 1.0), GazeVector::new(1.0, 1.0), GazeVector::new(2.0, 5.0)];
        let pred = [GazeVector::new(0.0, 0.0), GazeVector::new(1.0, 0.0)];
        assert_eq!(r_squared_axis(&pred, &truth, GazeAxis::Yaw).unwrap(), 1.0);
        assert!(r_squared_axis(&pred, &truth, GazeAxis::Pitch).is_err());
    }

    #[test]
    fn matches_brute_force_reference() {
        let cfg = SparcConfig::default();
        let mut rng = seeded(2);
        for n in [8, 13, 50, 101] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            let fast = sparc(&x, &cfg).unwrap().value;
            let slow = brute_force_sparc(&x, &cfg);
            assert!((fast - slow).abs() < 1e-9, "n={n}: {fast} vs {slow}");
        }
        let x = reach(60);
        assert!((sparc(&x, &cfg).unwrap().value - brute_force_sparc(&x, &cfg)).abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_no_motion() {
        let out = sparc(&[0.3; 20], &SparcConfig::default()).unwrap();
        assert_eq!(out, Sparc { value: 0.0, no_motion: true });
        assert!(sparc(&[0.0; 7], &SparcConfig::default()).is_err());
    }

    #[test]
    fn smooth_reach_beats_noisy_reach() {
        let cfg = SparcConfig::default();
        let base = reach(60);
        let smooth = sparc(&base, &cfg).unwrap().value;
        let noise = Normal::new(0.0, 0.005).unwrap();
        let wins = (0..50)
            .filter(|&seed| {
                let mut rng = seeded(100 + seed);
                let noisy: Vec<f64> = base.iter().map(|x| x + noise.sample(&mut rng)).collect();
                smooth > sparc(&noisy, &cfg).unwrap().value
            })
            .count();
        assert!(wins >= 48, "{wins}/50");
    }

    #[test]
    fn more_noise_is_not_smoother() {
        let cfg = SparcConfig::default();
        let base = reach(60);
        let median_at = |sigma: f64| {
            let noise = Normal::new(0.0, sigma).unwrap();
            let mut v: Vec<f64> = (0..50)
                .map(|seed| {
                    let mut rng = seeded(seed);
                    let x: Vec<f64> = base.iter().map(|x| x + noise.sample(&mut rng)).collect();
                    sparc(&x, &cfg).unwrap().value
                })
                .collect();
            v.sort_by(f64::total_cmp);
            v[25]
        };
        let levels = [0.0005, 0.002, 0.008, 0.03];
        let medians: Vec<f64> = levels.iter().map(|&s| median_at(s)).collect();
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    }

    #[test]
    fn rejects_bad_config() {
        let x = reach(20);
        for cfg in [
            SparcConfig { cutoff_freq: 15.0, ..SparcConfig::default() },
            SparcConfig { amplitude_threshold: 1.0, ..SparcConfig::default() },
            SparcConfig { padding_factor: 0, ..SparcConfig::default() },
        ] {
            assert!(sparc(&x, &cfg).is_err());
        }
    }

    proptest! {
        #[test]
        fn non_positive_and_scale_invariant(
            xs in prop::collection::vec(-1.0f64..1.0, 8..80),
            scale in 0.01f64..100.0,
        ) {
            let cfg = SparcConfig::default();
            let a = sparc(&xs, &cfg).unwrap();
            prop_assert!(a.value <= 0.0);
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
            let b = sparc(&scaled, &cfg).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }

        #[test]
        fn r_squared_at_most_one(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(r) = r_squared(&p, &t) {
                prop_assert!(r <= 1.0);
            }
        }
    }
}
