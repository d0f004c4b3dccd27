use aims_gp::aims::{
    importance_weights, initial_level, run, run_level, run_with_observer, stream_rng, FnObjective, LevelKernel, Mode,
    SamplerConfig, StepCounts, StopReason,
};
use aims_gp::{fit, Builtin, Denominator, FlatPrior};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

fn quadratic() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync> {
    FnObjective::new(3, |z: &[f64]| 0.5 * z.iter().map(|v| v * v).sum::<f64>())
}

fn sample_cov(samples: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|c| samples.iter().map(|s| s[c]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| {
        samples.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).sum::<f64>() / n
    });
    (mean, cov)
}

#[test]
fn quadratic_levels_match_tempered_gaussian() {
    let cfg = SamplerConfig {
        sample_count: 2000,
        master_seed: 11,
        ..Default::default()
    };
    let obj = quadratic();
    let mut level = initial_level(&obj, &cfg).unwrap();
    for _ in 0..3 {
        level = run_level(&level, &obj, &cfg).unwrap();
        assert_eq!(level.samples.len(), 2000);
        assert_eq!(level.chain_lengths.iter().sum::<usize>(), 2000);
        let (mean, cov) = sample_cov(&level.samples);
        // the level is resampled from an importance sample of effective size gamma N
        let se = (level.tau / (cfg.ess_gamma * 2000.0)).sqrt();
        for m in &mean {
            assert!(m.abs() <= 3.0 * se, "mean {m} vs se {se} at tau {}", level.tau);
        }
        let target = DMatrix::<f64>::identity(3, 3) * level.tau;
        let rel = (&cov - &target).norm() / target.norm();
        assert!(rel <= 0.15, "covariance off by {rel} at tau {}", level.tau);
    }
}

#[test]
fn optimize_mode_concentrates_on_minimizer() {
    let obj = FnObjective::new(2, |z: &[f64]| (z[0] - 1.5).powi(2) + 2.0 * (z[1] + 0.5).powi(2));
    let cfg = SamplerConfig {
        sample_count: 1000,
        master_seed: 3,
        ..Default::default()
    };
    let r = run(&obj, &cfg).unwrap();
    assert_eq!(r.stop_reason, StopReason::CovTarget);
    assert!(r.final_level.cov_delta < cfg.stop_ratio * r.levels[0].cov_delta);
    let (z, h) = (&r.final_level.samples[r.map_index()], r.map_candidate().1);
    assert!((z[0] - 1.5).abs() < 0.05 && (z[1] + 0.5).abs() < 0.05, "{z:?}");
    assert!(h < 1e-3);
    let trace = r.temperature_trace();
    assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
}

#[test]
fn sample_mode_stops_at_unit_temperature() {
    let cfg = SamplerConfig {
        sample_count: 400,
        mode: Mode::Sample,
        master_seed: 5,
        ..Default::default()
    };
    let r = run(&quadratic(), &cfg).unwrap();
    assert_eq!(r.stop_reason, StopReason::UnitTemperature);
    assert!(r.converged());
    let trace = r.temperature_trace();
    assert!(trace.iter().all(|t| *t >= 1.0));
    assert_eq!(*trace.last().unwrap(), 1.0);
}

#[test]
fn max_levels_is_not_converged() {
    let cfg = SamplerConfig {
        sample_count: 200,
        max_levels: 1,
        ..Default::default()
    };
    let r = run(&quadratic(), &cfg).unwrap();
    assert_eq!(r.stop_reason, StopReason::MaxLevels);
    assert!(!r.converged());
    assert_eq!(r.annealing_levels(), 1);
}

#[test]
fn identical_results_across_thread_counts() {
    let data = Builtin::Toy1d
        .design(2, Denominator::Verbatim)
        .unwrap()
        .training_set()
        .unwrap();
    let cfg = SamplerConfig {
        sample_count: 300,
        master_seed: 99,
        ..Default::default()
    };
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&data, &cfg, &FlatPrior).unwrap())
    };
    let a = go(1);
    let b = go(4);
    assert_eq!(a.final_level.samples, b.final_level.samples);
    assert_eq!(a.final_level.h_values, b.final_level.h_values);
    assert_eq!(a.temperature_trace(), b.temperature_trace());
    let c = fit(
        &data,
        &SamplerConfig {
            master_seed: 100,
            ..cfg.clone()
        },
        &FlatPrior,
    )
    .unwrap();
    assert_ne!(a.final_level.samples, c.final_level.samples);
}

#[test]
fn observer_sees_every_level() {
    let cfg = SamplerConfig {
        sample_count: 200,
        master_seed: 1,
        ..Default::default()
    };
    let mut seen = Vec::new();
    let r = run_with_observer(&quadratic(), &cfg, &mut |s| seen.push(s.index)).unwrap();
    assert_eq!(seen, (0..r.levels.len()).collect::<Vec<_>>());
}

/// Two-component Gaussian mixture target on the line.
struct Bimodal {
    parts: [(f64, f64, f64); 2],
}

impl Bimodal {
    fn new() -> Self {
        Self {
            parts: [(0.6, -1.5, 0.5), (0.4, 2.0, 0.8)],
        }
    }

    fn h(&self, z: f64) -> f64 {
        let p: f64 = self
            .parts
            .iter()
            .map(|(w, m, s)| w * (-(z - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
            .sum();
        -p.ln()
    }

    fn cdf(&self, z: f64) -> f64 {
        self.parts
            .iter()
            .map(|(w, m, s)| w * StatNormal::new(*m, *s).unwrap().cdf(z))
            .sum()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let (_, m, s) = if rng.random::<f64>() < self.parts[0].0 {
            self.parts[0]
        } else {
            self.parts[1]
        };
        Normal::new(m, s).unwrap().sample(rng)
    }
}

#[test]
fn frozen_kernel_preserves_target() {
    let target = Bimodal::new();
    let obj = FnObjective::new(1, |z: &[f64]| target.h(z[0]));
    let mut rng = stream_rng(7, 0, 0);
    // markers from a broad normal, weighted towards the target
    let wide = Normal::new(0.0, 2.5).unwrap();
    let markers: Vec<Vec<f64>> = (0..400).map(|_| vec![wide.sample(&mut rng)]).collect();
    let h: Vec<f64> = markers.iter().map(|m| target.h(m[0])).collect();
    let w = importance_weights(&h, 1.0, 2.0).unwrap();
    let cov = DMatrix::from_element(1, 1, 1.2);
    let kernel = LevelKernel::new(&obj, &markers, &h, &w, 1.0, &cov, 0.5, 1.0).unwrap();

    let mut counts = StepCounts::default();
    let mut out: Vec<f64> = (0..10_000)
        .map(|_| {
            let z = target.draw(&mut rng);
            let mut s = kernel.evaluate(vec![z]);
            for _ in 0..3 {
                kernel.step(&mut s, &mut rng, &mut counts);
            }
            s.z[0]
        })
        .collect();
    assert!(
        counts.global_accepted + counts.delayed_accepted > counts.steps / 4,
        "{counts:?}"
    );
    out.sort_by(f64::total_cmp);
    let n = out.len() as f64;
    let ks = out
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let f = target.cdf(*z);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks <= 0.02, "KS distance {ks}");
}
