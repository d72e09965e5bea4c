use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_wav, write_wav, AudioClip, AudioError};
use crate::corpus::{Manifest, ManifestEntry, Provenance, Split};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AugmentKind {
    /// Additive white noise with standard deviation `sigma`.
    GaussianNoise { sigma: f64 },
    /// Pitch change in semitones at constant duration.
    PitchShift { semitones: f64 },
    /// Playback-rate change; output length is `round(n / rate)`.
    TimeStretch { rate: f64 },
    /// Rotation: `out[i] = in[(i - offset) mod n]`.
    CircularShift { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    #[serde(flatten)]
    pub kind: AugmentKind,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn validate(&self, len: usize) -> Result<(), AudioError> {
        let bad = |msg: String| Err(AudioError::InvalidSpec(msg));
        match self.kind {
            AugmentKind::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma {sigma} must be finite and >= 0"))
            }
            AugmentKind::PitchShift { semitones } if !(semitones.abs() <= 12.0) => {
                bad(format!("semitones {semitones} outside [-12, 12]"))
            }
            AugmentKind::TimeStretch { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("rate {rate} must be finite and > 0"))
            }
            AugmentKind::CircularShift { offset } if offset >= len => {
                bad(format!("offset {offset} not below clip length {len}"))
            }
            _ => Ok(()),
        }
    }
}

pub fn augment(clip: &AudioClip, spec: &AugmentSpec) -> Result<AudioClip, AudioError> {
    let x = clip.samples();
    spec.validate(x.len())?;
    let out = match spec.kind {
        AugmentKind::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                x.to_vec()
            } else {
                let mut rng = seed::rng(spec.seed);
                x.iter()
                    .map(|&s| {
                        let z: f64 = rng.sample(StandardNormal);
                        (s as f64 + sigma * z) as f32
                    })
                    .collect()
            }
        }
        AugmentKind::CircularShift { offset } => {
            let mut v = x.to_vec();
            v.rotate_right(offset);
            v
        }
        AugmentKind::TimeStretch { rate } => {
            let target = ((x.len() as f64 / rate).round() as usize).max(1);
            resample_to_len(x, target)
        }
        AugmentKind::PitchShift { semitones } => {
            let factor = 2f64.powf(semitones / 12.0);
            let stretched = overlap_add_stretch(x, factor);
            resample_to_len(&stretched, x.len())
        }
    };
    let out = out
        .into_iter()
        .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
        .collect();
    Ok(clip.with_samples(out))
}

/// Linear-interpolation resampling of the time axis to exactly `len` samples.
/// Endpoints map onto endpoints.
fn resample_to_len(x: &[f32], len: usize) -> Vec<f32> {
    if x.len() == 1 || len == 1 {
        return vec![x[0]; len];
    }
    let step = (x.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 * step;
            let i0 = (pos.floor() as usize).min(x.len() - 1);
            let i1 = (i0 + 1).min(x.len() - 1);
            let frac = pos - i0 as f64;
            (x[i0] as f64 * (1.0 - frac) + x[i1] as f64 * frac) as f32
        })
        .collect()
}

/// Duration change by `factor` that keeps pitch. Hann-windowed overlap-add
/// with a fixed synthesis hop; each analysis frame is shifted by up to one hop
/// to best continue the previous frame's waveform, which avoids phase jumps.
fn overlap_add_stretch(x: &[f32], factor: f64) -> Vec<f32> {
    let n = x.len();
    let out_len = ((n as f64 * factor).round() as usize).max(1);
    let win = n.min(512);
    if win < 4 {
        return resample_to_len(x, out_len);
    }
    let hop_out = win / 4;
    let hop_in = hop_out as f64 / factor;
    let tol = hop_out as i64;
    let window: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
        .collect();
    let at = |i: i64| -> f64 {
        if i >= 0 && (i as usize) < n {
            x[i as usize] as f64
        } else {
            0.0
        }
    };

    let mut acc = vec![0.0f64; out_len + win];
    let mut norm = vec![0.0f64; out_len + win];
    let mut prev: Option<i64> = None;
    let mut k = 0usize;
    while k * hop_out < out_len {
        let nominal = (k as f64 * hop_in).round() as i64;
        let src = match prev {
            None => nominal,
            Some(p) => {
                // natural continuation of the previous frame
                let target = p + hop_out as i64;
                let mut best = (f64::NEG_INFINITY, nominal);
                for off in -tol..=tol {
                    let cand = nominal + off;
                    if cand < 0 {
                        continue;
                    }
                    let score: f64 = (0..win as i64).step_by(2).map(|j| at(target + j) * at(cand + j)).sum();
                    if score > best.0 {
                        best = (score, cand);
                    }
                }
                best.1
            }
        };
        let dst = k * hop_out;
        for (j, &w) in window.iter().enumerate() {
            acc[dst + j] += w * at(src + j as i64);
            norm[dst + j] += w;
        }
        prev = Some(src);
        k += 1;
    }
    acc.truncate(out_len);
    acc.iter()
        .zip(&norm)
        .map(|(&a, &w)| if w > 1e-3 { (a / w) as f32 } else { 0.0 })
        .collect()
}

/// Parameter ranges the fan-out draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRanges {
    pub sigma: (f64, f64),
    pub semitones: (f64, f64),
    pub rate: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            sigma: (0.001, 0.02),
            semitones: (-2.0, 2.0),
            rate: (0.85, 1.18),
        }
    }
}

fn uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws `count` specs for one entry. The kind is uniform over the four
/// augmentations; a shift offset is uniform over the clip length.
pub fn plan_augmentations(
    entry_id: &str,
    clip_len: usize,
    count: usize,
    ranges: &AugmentRanges,
    seed: u64,
) -> Vec<AugmentSpec> {
    let mut rng = seed::rng(seed::hash_str(seed, entry_id));
    (0..count)
        .map(|_| {
            let kind = match rng.random_range(0..4u8) {
                0 => AugmentKind::GaussianNoise {
                    sigma: uniform(&mut rng, ranges.sigma),
                },
                1 => AugmentKind::PitchShift {
                    semitones: uniform(&mut rng, ranges.semitones),
                },
                2 => AugmentKind::TimeStretch {
                    rate: uniform(&mut rng, ranges.rate),
                },
                _ => AugmentKind::CircularShift {
                    offset: rng.random_range(0..clip_len.max(1)),
                },
            };
            AugmentSpec {
                kind,
                seed: rng.random(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanOutConfig {
    pub specs_per_entry: usize,
    pub ranges: AugmentRanges,
    pub seed: u64,
}

#[derive(Debug)]
pub struct FanOutReport {
    pub manifest: Manifest,
    /// Entries whose augmentation failed, with the cause. Their children are
    /// left out of the manifest.
    pub failures: Vec<(String, AudioError)>,
}

/// Adds augmented children for every Train original.
///
/// Source audio paths are resolved against `base_dir`; children are written
/// as 16-bit WAV into `out_dir` and recorded with that path. Val and Test
/// entries never gain children.
pub fn fan_out(
    manifest: &Manifest,
    cfg: &FanOutConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<FanOutReport, AudioError> {
    if cfg.specs_per_entry == 0 {
        return Ok(FanOutReport {
            manifest: manifest.clone(),
            failures: Vec::new(),
        });
    }
    std::fs::create_dir_all(out_dir)?;
    let sources: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.split == Some(Split::Train) && e.provenance == Provenance::Original)
        .collect();

    let results: Vec<(String, Result<Vec<ManifestEntry>, AudioError>)> = sources
        .par_iter()
        .map(|e| (e.id.clone(), augment_entry(e, cfg, base_dir, out_dir)))
        .collect();

    let mut entries = manifest.entries.clone();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(children) => entries.extend(children),
            Err(err) => failures.push((id, err)),
        }
    }
    Ok(FanOutReport {
        manifest: Manifest { entries },
        failures,
    })
}

fn augment_entry(
    entry: &ManifestEntry,
    cfg: &FanOutConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, AudioError> {
    let rel = entry
        .audio_path
        .as_deref()
        .ok_or_else(|| AudioError::InvalidClip(format!("entry {} has no audio", entry.id)))?;
    let clip = read_wav(base_dir.join(rel))?;
    let specs = plan_augmentations(&entry.id, clip.len(), cfg.specs_per_entry, &cfg.ranges, cfg.seed);
    let stem: String = entry
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    specs
        .into_iter()
        .enumerate()
        .map(|(k, spec)| {
            let out = augment(&clip, &spec)?;
            let path: PathBuf = out_dir.join(format!("{stem}__aug{k}.wav"));
            write_wav(&out, &path)?;
            Ok(ManifestEntry {
                id: format!("{}#aug{k}", entry.id),
                audio_path: Some(path.to_string_lossy().into_owned()),
                embedding_path: None,
                label: entry.label,
                speaker: entry.speaker,
                split: entry.split,
                provenance: Provenance::Augmented {
                    source: entry.id.clone(),
                    spec,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{decode_label, SpeakerMeta};

    fn clip(samples: Vec<f32>) -> AudioClip {
        AudioClip::new(samples, 16_000).unwrap()
    }

    fn spec(kind: AugmentKind) -> AugmentSpec {
        AugmentSpec { kind, seed: 9 }
    }

    #[test]
    fn circular_shift_example() {
        let c = clip(vec![0.1, 0.2, 0.3, 0.4]);
        let out = augment(&c, &spec(AugmentKind::CircularShift { offset: 1 })).unwrap();
        assert_eq!(out.samples(), &[0.4, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let c = clip(vec![0.1, -0.7, 0.3]);
        let out = augment(&c, &spec(AugmentKind::GaussianNoise { sigma: 0.0 })).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn noise_is_seed_reproducible() {
        let c = clip(vec![0.0; 256]);
        let s = spec(AugmentKind::GaussianNoise { sigma: 0.05 });
        let a = augment(&c, &s).unwrap();
        assert_eq!(a, augment(&c, &s).unwrap());
        let other = AugmentSpec { seed: 10, ..s };
        assert_ne!(a, augment(&c, &other).unwrap());
        let var = a.energy() / a.len() as f64;
        assert!((var.sqrt() - 0.05).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn stretch_halves_length() {
        let c = clip(vec![0.25; 16_000]);
        let out = augment(&c, &spec(AugmentKind::TimeStretch { rate: 2.0 })).unwrap();
        assert!((out.len() as i64 - 8000).abs() <= 1);
    }

    #[test]
    fn pitch_shift_keeps_length_and_moves_frequency() {
        let n = 16_000;
        let f0 = 440.0;
        let samples: Vec<f32> = (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f0 * i as f64 / 16_000.0).sin()) as f32)
            .collect();
        let c = clip(samples);
        let out = augment(&c, &spec(AugmentKind::PitchShift { semitones: 12.0 })).unwrap();
        assert!((out.len() as f64 - n as f64).abs() <= 0.01 * n as f64);
        // zero crossings over the middle half, away from edge effects
        let crossings = |s: &[f32]| {
            s[n / 4..3 * n / 4]
                .windows(2)
                .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
                .count() as f64
        };
        let ratio = crossings(out.samples()) / crossings(c.samples());
        assert!((ratio - 2.0).abs() < 0.1, "frequency ratio {ratio}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let c = clip(vec![0.0; 4]);
        for kind in [
            AugmentKind::GaussianNoise { sigma: -1.0 },
            AugmentKind::PitchShift { semitones: 13.0 },
            AugmentKind::TimeStretch { rate: 0.0 },
            AugmentKind::CircularShift { offset: 4 },
        ] {
            assert!(matches!(augment(&c, &spec(kind)), Err(AudioError::InvalidSpec(_))));
        }
    }

    #[test]
    fn output_is_clamped() {
        let c = clip(vec![0.99; 100]);
        let out = augment(&c, &spec(AugmentKind::GaussianNoise { sigma: 0.5 })).unwrap();
        assert!(out.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn spec_serializes_flat() {
        let s = spec(AugmentKind::TimeStretch { rate: 1.1 });
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"TimeStretch","rate":1.1,"seed":9}"#);
        assert_eq!(serde_json::from_str::<AugmentSpec>(&json).unwrap(), s);
    }

    #[test]
    fn plan_matches_volume_of_reference_corpus() {
        // ~8k training originals expanded to ~30k samples
        let ranges = AugmentRanges::default();
        let total: usize = (0..8000)
            .map(|i| 1 + plan_augmentations(&format!("e{i}"), 16_000, 3, &ranges, 1).len())
            .sum();
        assert!((total as f64 - 30_000.0).abs() / 30_000.0 < 0.1, "{total}");
    }

    fn write_entry(dir: &Path, id: &str, split: Split) -> ManifestEntry {
        let path = dir.join(format!("{id}.wav"));
        let samples: Vec<f32> = (0..800).map(|i| ((i as f32) * 0.05).sin() * 0.4).collect();
        write_wav(&clip(samples), &path).unwrap();
        ManifestEntry {
            id: id.into(),
            audio_path: Some(format!("{id}.wav")),
            embedding_path: None,
            label: decode_label(4).unwrap(),
            speaker: SpeakerMeta::default(),
            split: Some(split),
            provenance: Provenance::Original,
        }
    }

    #[test]
    fn fan_out_only_touches_train() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let m = Manifest::new(vec![
            write_entry(base, "tr", Split::Train),
            write_entry(base, "va", Split::Val),
            write_entry(base, "te", Split::Test),
        ])
        .unwrap();
        let cfg = FanOutConfig {
            specs_per_entry: 3,
            ranges: AugmentRanges::default(),
            seed: 5,
        };
        let r = fan_out(&m, &cfg, base, &base.join("aug")).unwrap();
        assert!(r.failures.is_empty());
        assert_eq!(r.manifest.len(), 6);
        for e in &r.manifest.entries[3..] {
            assert!(e.id.starts_with("tr#aug"));
            assert_eq!(e.split, Some(Split::Train));
            assert!(Path::new(e.audio_path.as_ref().unwrap()).exists());
        }
        r.manifest.validate().unwrap();

        let again = fan_out(&m, &cfg, base, &base.join("aug2")).unwrap();
        let specs = |m: &Manifest| -> Vec<Provenance> {
            m.entries.iter().map(|e| e.provenance.clone()).collect()
        };
        assert_eq!(specs(&r.manifest), specs(&again.manifest));

        let none = fan_out(&m, &FanOutConfig { specs_per_entry: 0, ..cfg }, base, &base.join("x")).unwrap();
        assert_eq!(none.manifest, m);
    }

    #[test]
    fn fan_out_collects_failures() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let mut missing = write_entry(base, "gone", Split::Train);
        missing.audio_path = Some("nope.wav".into());
        let m = Manifest::new(vec![write_entry(base, "ok", Split::Train), missing]).unwrap();
        let cfg = FanOutConfig {
            specs_per_entry: 2,
            ranges: AugmentRanges::default(),
            seed: 0,
        };
        let r = fan_out(&m, &cfg, base, &base.join("aug")).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].0, "gone");
        assert_eq!(r.manifest.len(), 4);
    }
}
