use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};

fn map_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedFormat("codec not supported".into()),
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.to_string()),
        other => AudioError::CorruptHeader(other.to_string()),
    }
}

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
///
/// 16-bit values are mapped to `v / 32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let reader = WavReader::open(path).map_err(map_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(map_err)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    if samples.is_empty() {
        return Err(AudioError::CorruptHeader("empty data chunk".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::CorruptHeader("non-finite float sample".into()));
    }
    // float files may carry values slightly outside the nominal range
    let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM, rounding `x * 32768` to the nearest code.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_err)?;
    for &s in clip.samples() {
        let code = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(code).map_err(map_err)?;
    }
    w.finalize().map_err(map_err)
}

/// Writes 32-bit IEEE float samples (lossless).
pub fn write_wav_float(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_err)?;
    for &s in clip.samples() {
        w.write_sample(s).map_err(map_err)?;
    }
    w.finalize().map_err(map_err)
}
