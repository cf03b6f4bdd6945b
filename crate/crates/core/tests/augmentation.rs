mod common;

use breathnet_core::audio::{restandardize, CLIP_LEN};
use breathnet_core::augment::{add_noise, augment, noise_for_snr, pitch_shift, time_stretch, AugmentPlan, AugmentPolicy};
use breathnet_core::rng::{stream, Domain};
use common::{dominant_hz, tone_clip};

const SR: f64 = 16_000.0;

fn rms_diff(a: &[f32], b: &[f32]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn stretch_keeps_the_pitch_of_a_tone() {
    for rate in [0.9, 1.1] {
        let out = time_stretch(&tone_clip(440.0), rate).unwrap();
        // only the voiced part; the trailing pad of a faster clip carries no tone
        let voiced = &out.samples()[..(CLIP_LEN as f64 / rate.max(1.0)) as usize - 2048];
        let hz = dominant_hz(voiced, SR);
        assert!((hz - 440.0).abs() < 4.4, "rate {rate}: {hz} Hz");
    }
}

#[test]
fn stretch_moves_a_marker_impulse_by_one_over_rate() {
    let mut x = vec![0.0f32; CLIP_LEN];
    x[32_000] = 1.0;
    let clip = restandardize(&x).unwrap();
    let out = time_stretch(&clip, 1.1).unwrap();
    let s = out.samples();
    let base = s[CLIP_LEN - 1];
    let energy: Vec<f64> = s.iter().map(|&v| ((v - base) as f64).powi(2)).collect();
    let total: f64 = energy.iter().sum();
    let centre = energy.iter().enumerate().map(|(i, e)| i as f64 * e).sum::<f64>() / total;
    let expected = 32_000.0 / 1.1;
    // one vocoder hop of slack
    assert!((centre - expected).abs() < 256.0, "impulse at {centre}, expected {expected}");
}

#[test]
fn two_semitones_up_moves_440_to_493_9() {
    let out = pitch_shift(&tone_clip(440.0), 2.0).unwrap();
    assert_eq!(out.samples().len(), CLIP_LEN);
    let expected = 440.0 * 2f64.powf(2.0 / 12.0);
    let hz = dominant_hz(out.samples(), SR);
    assert!((hz - expected).abs() < 0.01 * expected, "{hz} vs {expected}");
}

#[test]
fn down_then_up_restores_the_frequency() {
    let down = pitch_shift(&tone_clip(440.0), -2.0).unwrap();
    let hz_down = dominant_hz(down.samples(), SR);
    let expected_down = 440.0 * 2f64.powf(-2.0 / 12.0);
    assert!((hz_down - expected_down).abs() < 0.01 * expected_down, "{hz_down}");
    let back = pitch_shift(&down, 2.0).unwrap();
    let hz = dominant_hz(back.samples(), SR);
    assert!((hz - 440.0).abs() < 4.4, "{hz}");
}

#[test]
fn identity_parameters_reproduce_the_input() {
    let clip = tone_clip(523.0);
    assert!(rms_diff(time_stretch(&clip, 1.0).unwrap().samples(), clip.samples()) < 1e-3);
    assert!(rms_diff(pitch_shift(&clip, 0.0).unwrap().samples(), clip.samples()) < 1e-3);
    let mut rng = stream(1, Domain::Augment, 0, 0);
    let out = augment(&clip, &AugmentPolicy::disabled(), &mut rng).unwrap();
    assert!(rms_diff(out.samples(), clip.samples()) < 1e-3);
}

#[test]
fn measured_snr_matches_the_request() {
    let clip = tone_clip(350.0);
    let signal = clip.samples();
    let p_signal = signal.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    for (i, snr) in [15.0, 20.0, 25.0, 30.0].into_iter().enumerate() {
        let mut rng = stream(5, Domain::Augment, i as u64, 0);
        let noise = noise_for_snr(signal, snr, &mut rng).unwrap();
        let p_noise = noise.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        let measured = 10.0 * (p_signal / p_noise).log10();
        assert!((measured - snr).abs() < 0.5, "{measured} vs {snr}");

        // the mixture itself, measured against the known clean signal before re-scoring
        let mut rng = stream(5, Domain::Augment, i as u64, 0);
        let mixed = add_noise(&clip, snr, &mut rng).unwrap();
        let scale = {
            let m: f64 = mixed.samples().iter().zip(signal).map(|(a, b)| *a as f64 * *b as f64).sum();
            m / p_signal
        };
        let resid: f64 = mixed
            .samples()
            .iter()
            .zip(signal)
            .map(|(a, b)| (*a as f64 - scale * *b as f64).powi(2))
            .sum();
        let measured = 10.0 * (scale * scale * p_signal / resid).log10();
        assert!((measured - snr).abs() < 0.5, "mixture {measured} vs {snr}");
    }
}

#[test]
fn stretch_fraction_over_ten_thousand_draws() {
    let policy = AugmentPolicy::default();
    let mut rng = stream(11, Domain::Augment, 0, 0);
    let n = 10_000;
    let (mut s, mut p, mut z) = (0, 0, 0);
    for _ in 0..n {
        let plan = AugmentPlan::draw(&policy, &mut rng);
        s += plan.stretch_rate.is_some() as usize;
        p += plan.pitch_semitones.is_some() as usize;
        z += plan.noise_snr_db.is_some() as usize;
        if let Some(r) = plan.stretch_rate {
            assert!((0.9..=1.1).contains(&r));
        }
        if let Some(st) = plan.pitch_semitones {
            assert!((-2.0..=2.0).contains(&st));
        }
        if let Some(db) = plan.noise_snr_db {
            assert!((15.0..=30.0).contains(&db));
        }
    }
    for count in [s, p, z] {
        let frac = count as f64 / n as f64;
        assert!((frac - policy.p_stretch).abs() < 0.02, "{frac}");
    }
}

#[test]
fn fixed_seed_gives_bit_identical_output() {
    let clip = tone_clip(610.0);
    let policy = AugmentPolicy {
        p_stretch: 1.0,
        p_pitch: 1.0,
        p_noise: 1.0,
        ..AugmentPolicy::default()
    };
    let run = |seed| {
        let mut rng = stream(seed, Domain::Augment, 4, 2);
        augment(&clip, &policy, &mut rng).unwrap()
    };
    let a = run(9);
    assert_eq!(a, run(9));
    assert_ne!(a, run(10));
    let n = a.samples().len() as f64;
    let mean = a.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = a.samples().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-3);
}
