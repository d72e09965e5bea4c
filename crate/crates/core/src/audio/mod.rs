//! Waveform handling: WAV I/O, energy-based silence trimming and the four
//! training-set augmentations.

mod augment;
mod wav;

use thiserror::Error;

pub use augment::{augment, fan_out, plan_augmentations, AugmentKind, AugmentRanges, AugmentSpec, FanOutConfig, FanOutReport};
pub use wav::{read_wav, write_wav, write_wav_float};

/// Sample rate the embedding stage accepts.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt wav header: {0}")]
    CorruptHeader(String),
    #[error("no frame reaches the energy threshold")]
    AllSilent,
    #[error("invalid augmentation: {0}")]
    InvalidSpec(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::InvalidClip(format!(
                "sample {bad} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples. Squares are exact in f64 and are added in
    /// ascending order, so any reordering of the samples gives the same value.
    pub fn energy(&self) -> f64 {
        let mut sq: Vec<f64> = self.samples.iter().map(|&s| (s as f64) * (s as f64)).collect();
        sq.sort_unstable_by(f64::total_cmp);
        sq.iter().sum()
    }

    /// Fails unless the clip is at the pipeline sample rate.
    pub fn require_pipeline_rate(&self) -> Result<(), AudioError> {
        if self.sample_rate != PIPELINE_SAMPLE_RATE {
            return Err(AudioError::UnsupportedFormat(format!(
                "sample rate {} Hz, pipeline requires {PIPELINE_SAMPLE_RATE} Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }

    fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    /// Samples per analysis frame.
    pub frame_len: usize,
    /// Mean-square amplitude a frame must reach to count as speech.
    pub energy_threshold: f64,
}

impl Default for TrimConfig {
    /// 20 ms frames at 16 kHz, threshold at -40 dBFS mean square.
    fn default() -> Self {
        Self {
            frame_len: 320,
            energy_threshold: 1e-4,
        }
    }
}

/// Sample range `[start, end)` kept by [`trim_silence`].
pub fn trim_bounds(samples: &[f32], cfg: &TrimConfig) -> Result<(usize, usize), AudioError> {
    if cfg.frame_len == 0 || !(cfg.energy_threshold >= 0.0) {
        return Err(AudioError::InvalidSpec(format!("bad trim config {cfg:?}")));
    }
    let loud = |frame: &[f32]| {
        let ms = frame.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / frame.len() as f64;
        ms >= cfg.energy_threshold
    };
    let frames: Vec<&[f32]> = samples.chunks(cfg.frame_len).collect();
    let first = frames.iter().position(|f| loud(f)).ok_or(AudioError::AllSilent)?;
    let last = frames.iter().rposition(|f| loud(f)).ok_or(AudioError::AllSilent)?;
    let start = first * cfg.frame_len;
    let end = ((last + 1) * cfg.frame_len).min(samples.len());
    Ok((start, end))
}

/// Drops leading and trailing frames whose mean-square energy is below the
/// threshold. Interior frames are kept even when quiet.
pub fn trim_silence(clip: &AudioClip, cfg: &TrimConfig) -> Result<AudioClip, AudioError> {
    let (start, end) = trim_bounds(&clip.samples, cfg)?;
    Ok(clip.with_samples(clip.samples[start..end].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_to_loud_frame() {
        let clip = AudioClip::new(vec![0., 0., 0., 0., 0.5, 0.5, 0., 0., 0., 0.], 16_000).unwrap();
        let cfg = TrimConfig {
            frame_len: 2,
            energy_threshold: 0.01,
        };
        assert_eq!(trim_silence(&clip, &cfg).unwrap().samples(), &[0.5, 0.5]);
    }

    #[test]
    fn constant_signal_is_unchanged() {
        let clip = AudioClip::new(vec![0.5; 1000], 16_000).unwrap();
        assert_eq!(trim_silence(&clip, &TrimConfig::default()).unwrap(), clip);
    }

    #[test]
    fn silent_signal_fails() {
        let clip = AudioClip::new(vec![0.0; 1000], 16_000).unwrap();
        assert!(matches!(
            trim_silence(&clip, &TrimConfig::default()),
            Err(AudioError::AllSilent)
        ));
    }

    #[test]
    fn quiet_interior_survives() {
        let mut s = vec![0.0; 6];
        s[0] = 0.9;
        s[5] = 0.9;
        let clip = AudioClip::new(s.clone(), 8_000).unwrap();
        let cfg = TrimConfig {
            frame_len: 1,
            energy_threshold: 0.1,
        };
        assert_eq!(trim_silence(&clip, &cfg).unwrap().samples(), &s[..]);
    }

    #[test]
    fn partial_last_frame_counts() {
        let clip = AudioClip::new(vec![0.0, 0.0, 0.0, 0.0, 0.3], 16_000).unwrap();
        let cfg = TrimConfig {
            frame_len: 2,
            energy_threshold: 0.05,
        };
        assert_eq!(trim_bounds(clip.samples(), &cfg).unwrap(), (4, 5));
    }

    #[test]
    fn clip_validation() {
        assert!(AudioClip::new(vec![], 16_000).is_err());
        assert!(AudioClip::new(vec![1.5], 16_000).is_err());
        assert!(AudioClip::new(vec![0.1], 0).is_err());
        let c = AudioClip::new(vec![0.1], 8_000).unwrap();
        assert!(c.require_pipeline_rate().is_err());
    }
}
