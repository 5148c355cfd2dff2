//! Signal conditioning: continuous recordings, post-flash epochs, and the
//! decimated feature vectors consumed by the classifier.
//!
//! Units are microvolts everywhere. Channel order is fixed by [`CHANNELS`] and
//! determines the layout of every [`FeatureVector`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Recording montage, in feature-concatenation order.
pub const CHANNELS: [&str; 16] = [
    "Fz", "Cz", "Pz", "Oz", "P3", "P4", "P7", "P8", "FC1", "FC2", "CP1", "CP2", "C3", "C4", "O1",
    "O2",
];
pub const N_CHANNELS: usize = 16;
pub const SAMPLE_RATE_HZ: f64 = 250.0;
/// 0..700 ms at 250 samples/s.
pub const EPOCH_SAMPLES: usize = 175;
pub const DECIMATION: usize = 12;
pub const VALUES_PER_CHANNEL: usize = EPOCH_SAMPLES.div_ceil(DECIMATION);
pub const FEATURE_LEN: usize = N_CHANNELS * VALUES_PER_CHANNEL;

pub const DEFAULT_BAND_HZ: (f64, f64) = (0.5, 30.0);

const RECORDING_FORMAT: &str = "recording.v1";
const PACKED_MAGIC: &[u8; 8] = b"RECv1PK\0";

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("pass band {low_hz}..{high_hz} Hz is not inside (0, {nyquist}) Hz")]
    InvalidBand { low_hz: f64, high_hz: f64, nyquist: f64 },
    #[error("recording has no samples")]
    EmptyRecording,
    #[error("marker {marker} needs {needed} samples after sample {start}, only {available} remain")]
    Truncated { marker: usize, start: usize, needed: usize, available: usize },
    #[error("no marker with index {0}")]
    NoSuchMarker(usize),
    #[error("expected a {expected_rows}x{expected_cols} matrix, got {rows}x{cols}")]
    Shape { expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid stimulus code {0}")]
    InvalidCode(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashMarker {
    pub sample: usize,
    pub code: u8,
}

/// A continuous multi-channel recording with flash markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordingDoc", into = "RecordingDoc")]
pub struct RawRecording {
    channels: Vec<String>,
    sample_rate: f64,
    samples: Vec<Vec<f64>>,
    markers: Vec<FlashMarker>,
}

impl RawRecording {
    pub fn new(
        channels: Vec<String>,
        sample_rate: f64,
        samples: Vec<Vec<f64>>,
        markers: Vec<FlashMarker>,
    ) -> Result<Self> {
        if channels.len() != N_CHANNELS {
            return Err(SignalError::InvalidRecording(format!(
                "expected {N_CHANNELS} channels, got {}",
                channels.len()
            )));
        }
        if samples.len() != channels.len() {
            return Err(SignalError::InvalidRecording(format!(
                "{} channel names but {} sample series",
                channels.len(),
                samples.len()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(SignalError::InvalidRecording(format!("sample rate {sample_rate}")));
        }
        let len = samples[0].len();
        if samples.iter().any(|s| s.len() != len) {
            return Err(SignalError::InvalidRecording("channels differ in length".into()));
        }
        for pair in markers.windows(2) {
            if pair[1].sample <= pair[0].sample {
                return Err(SignalError::InvalidRecording(
                    "flash markers are not strictly increasing".into(),
                ));
            }
        }
        if let Some(bad) = markers.iter().find(|m| !(1..=13).contains(&m.code)) {
            return Err(SignalError::InvalidCode(bad.code));
        }
        Ok(Self { channels, sample_rate, samples, markers })
    }

    /// Recording over the standard montage.
    pub fn standard(samples: Vec<Vec<f64>>, markers: Vec<FlashMarker>) -> Result<Self> {
        Self::new(CHANNELS.iter().map(|c| c.to_string()).collect(), SAMPLE_RATE_HZ, samples, markers)
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn markers(&self) -> &[FlashMarker] {
        &self.markers
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// Packed binary variant: magic, little-endian u32 header length, the JSON
    /// header without samples, then channel-major little-endian f32 samples.
    pub fn write_packed<W: Write>(&self, mut w: W) -> Result<()> {
        let header = RecordingDoc {
            format: RECORDING_FORMAT.to_string(),
            channels: self.channels.clone(),
            sample_rate: self.sample_rate,
            n_samples: Some(self.len()),
            samples: Vec::new(),
            markers: self.markers.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(PACKED_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for channel in &self.samples {
            for &v in channel {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_packed<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PACKED_MAGIC {
            return Err(SignalError::InvalidRecording("bad packed magic".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let doc: RecordingDoc = serde_json::from_slice(&header)?;
        let n = doc
            .n_samples
            .ok_or_else(|| SignalError::InvalidRecording("packed header lacks n_samples".into()))?;
        let mut samples = Vec::with_capacity(doc.channels.len());
        let mut buf = vec![0u8; n * 4];
        for _ in 0..doc.channels.len() {
            r.read_exact(&mut buf)?;
            samples.push(
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect(),
            );
        }
        Self::new(doc.channels, doc.sample_rate, samples, doc.markers)
    }
}

#[derive(Serialize, Deserialize)]
struct RecordingDoc {
    format: String,
    channels: Vec<String>,
    sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_samples: Option<usize>,
    #[serde(default)]
    samples: Vec<Vec<f64>>,
    markers: Vec<FlashMarker>,
}

impl TryFrom<RecordingDoc> for RawRecording {
    type Error = SignalError;

    fn try_from(doc: RecordingDoc) -> Result<Self> {
        if doc.format != RECORDING_FORMAT {
            return Err(SignalError::InvalidRecording(format!("unknown format {:?}", doc.format)));
        }
        RawRecording::new(doc.channels, doc.sample_rate, doc.samples, doc.markers)
    }
}

impl From<RawRecording> for RecordingDoc {
    fn from(r: RawRecording) -> Self {
        RecordingDoc {
            format: RECORDING_FORMAT.to_string(),
            channels: r.channels,
            sample_rate: r.sample_rate,
            n_samples: None,
            samples: r.samples,
            markers: r.markers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochLabel {
    Target,
    Nontarget,
}

/// One post-flash window, channels x samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpoch {
    data: Vec<f64>,
    stimulus_code: u8,
    label: Option<EpochLabel>,
}

impl EegEpoch {
    pub fn new(rows: Vec<Vec<f64>>, stimulus_code: u8, label: Option<EpochLabel>) -> Result<Self> {
        check_shape(&rows)?;
        if !(1..=13).contains(&stimulus_code) {
            return Err(SignalError::InvalidCode(stimulus_code));
        }
        Ok(Self { data: rows.concat(), stimulus_code, label })
    }

    pub(crate) fn from_flat(data: Vec<f64>, stimulus_code: u8, label: Option<EpochLabel>) -> Self {
        debug_assert_eq!(data.len(), N_CHANNELS * EPOCH_SAMPLES);
        Self { data, stimulus_code, label }
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * EPOCH_SAMPLES..(ch + 1) * EPOCH_SAMPLES]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(EPOCH_SAMPLES)
    }

    pub fn stimulus_code(&self) -> u8 {
        self.stimulus_code
    }

    pub fn label(&self) -> Option<EpochLabel> {
        self.label
    }

    pub fn with_label(mut self, label: Option<EpochLabel>) -> Self {
        self.label = label;
        self
    }
}

/// Decimated epoch, one block of [`VALUES_PER_CHANNEL`] values per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub source_code: u8,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, source_code: u8) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(SignalError::Shape {
                expected_rows: 1,
                expected_cols: FEATURE_LEN,
                rows: 1,
                cols: values.len(),
            });
        }
        Ok(Self { values, source_code })
    }
}

fn check_shape(rows: &[Vec<f64>]) -> Result<()> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.len() != N_CHANNELS || rows.iter().any(|r| r.len() != EPOCH_SAMPLES) {
        return Err(SignalError::Shape {
            expected_rows: N_CHANNELS,
            expected_cols: EPOCH_SAMPLES,
            rows: rows.len(),
            cols,
        });
    }
    Ok(())
}

/// Zero-phase band-pass: 4th-order Butterworth high-pass at `low_hz` cascaded
/// with a 4th-order Butterworth low-pass at `high_hz`, run forward then backward.
pub fn bandpass_filter(rec: &RawRecording, low_hz: f64, high_hz: f64) -> Result<RawRecording> {
    let nyquist = rec.sample_rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(SignalError::InvalidBand { low_hz, high_hz, nyquist });
    }
    if rec.is_empty() {
        return Err(SignalError::EmptyRecording);
    }
    let sections = butterworth_bandpass(rec.sample_rate, low_hz, high_hz);
    // Long enough for the high-pass transient to settle inside the padding.
    let pad = ((3.0 * rec.sample_rate / low_hz).ceil() as usize).min(rec.len() - 1);
    let samples = rec.samples.iter().map(|x| filtfilt(&sections, x, pad)).collect();
    Ok(RawRecording { samples, ..rec.clone() })
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn new(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self { b: [b[0] / a0, b[1] / a0, b[2] / a0], a: [a1 / a0, a2 / a0] }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a constant unit input at steady state.
    fn unit_step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

fn butterworth_bandpass(fs: f64, low_hz: f64, high_hz: f64) -> Vec<Biquad> {
    // Pole-pair quality factors of a 4th-order Butterworth prototype.
    let qs = [
        1.0 / (2.0 * (std::f64::consts::PI / 8.0).cos()),
        1.0 / (2.0 * (3.0 * std::f64::consts::PI / 8.0).cos()),
    ];
    let mut out = Vec::with_capacity(4);
    for &q in &qs {
        let w0 = 2.0 * std::f64::consts::PI * low_hz / fs;
        let (c, alpha) = (w0.cos(), w0.sin() / (2.0 * q));
        out.push(Biquad::new(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            1.0 + alpha,
            -2.0 * c,
            1.0 - alpha,
        ));
    }
    for &q in &qs {
        let w0 = 2.0 * std::f64::consts::PI * high_hz / fs;
        let (c, alpha) = (w0.cos(), w0.sin() / (2.0 * q));
        out.push(Biquad::new(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            1.0 + alpha,
            -2.0 * c,
            1.0 - alpha,
        ));
    }
    out
}

fn cascade(sections: &[Biquad], x: &mut [f64]) {
    let mut level = x[0];
    for s in sections {
        let zi = s.unit_step_state();
        s.run(x, [zi[0] * level, zi[1] * level]);
        level *= s.dc_gain();
    }
}

fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        let mut y = x.to_vec();
        cascade(sections, &mut y);
        return y;
    }
    // Odd reflection about both end points.
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    cascade(sections, &mut ext);
    ext.reverse();
    cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// The 700 ms window starting at the marker's sample.
pub fn extract_epoch(rec: &RawRecording, marker_index: usize) -> Result<EegEpoch> {
    let marker = *rec.markers.get(marker_index).ok_or(SignalError::NoSuchMarker(marker_index))?;
    let available = rec.len().saturating_sub(marker.sample);
    if available < EPOCH_SAMPLES {
        return Err(SignalError::Truncated {
            marker: marker_index,
            start: marker.sample,
            needed: EPOCH_SAMPLES,
            available,
        });
    }
    let range = marker.sample..marker.sample + EPOCH_SAMPLES;
    let mut data = Vec::with_capacity(N_CHANNELS * EPOCH_SAMPLES);
    for channel in &rec.samples {
        data.extend_from_slice(&channel[range.clone()]);
    }
    Ok(EegEpoch::from_flat(data, marker.code, None))
}

/// Block means over non-overlapping windows of [`DECIMATION`] samples; the
/// final window averages whatever remains.
pub fn decimate_epoch(epoch: &EegEpoch) -> FeatureVector {
    let mut values = Vec::with_capacity(FEATURE_LEN);
    for row in epoch.rows() {
        values.extend(row.chunks(DECIMATION).map(|w| w.iter().sum::<f64>() / w.len() as f64));
    }
    FeatureVector { values, source_code: epoch.stimulus_code }
}

/// [`decimate_epoch`] over an unchecked channels x samples matrix.
pub fn decimate_rows(rows: &[Vec<f64>], source_code: u8) -> Result<FeatureVector> {
    check_shape(rows)?;
    let epoch = EegEpoch::from_flat(rows.concat(), source_code, None);
    Ok(decimate_epoch(&epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE_HZ).sin()).collect()
    }

    fn recording_of(series: Vec<f64>) -> RawRecording {
        RawRecording::standard(vec![series; N_CHANNELS], vec![]).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn feature_layout_constants() {
        assert_eq!(VALUES_PER_CHANNEL, 15);
        assert_eq!(FEATURE_LEN, 240);
    }

    #[test]
    fn dc_is_rejected() {
        let out = bandpass_filter(&recording_of(vec![5.0; 5000]), 0.5, 30.0).unwrap();
        let mid = &out.samples()[0][1000..4000];
        assert!(mid.iter().all(|v| v.abs() < 0.05), "max {}", mid.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn passband_sine_keeps_amplitude() {
        let x = sine(10.0, 5000);
        let out = bandpass_filter(&recording_of(x.clone()), 0.5, 30.0).unwrap();
        let ratio = rms(&out.samples()[3][1000..4000]) / rms(&x[1000..4000]);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn line_noise_attenuated_20db() {
        let x = sine(60.0, 5000);
        let out = bandpass_filter(&recording_of(x.clone()), 0.5, 30.0).unwrap();
        let ratio = rms(&out.samples()[0][1000..4000]) / rms(&x[1000..4000]);
        assert!(20.0 * ratio.log10() <= -20.0, "{} dB", 20.0 * ratio.log10());
    }

    #[test]
    fn zero_phase_keeps_peak_position() {
        let n = 2000;
        let bump: Vec<f64> =
            (0..n).map(|i| (-((i as f64 - 1000.0) / 20.0).powi(2) / 2.0).exp()).collect();
        let out = bandpass_filter(&recording_of(bump), 0.5, 30.0).unwrap();
        let peak = out.samples()[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 1000);
    }

    #[test]
    fn refiltering_is_nearly_idempotent_in_band() {
        let x: Vec<f64> = sine(8.0, 5000).iter().zip(sine(15.0, 5000)).map(|(a, b)| a + 0.5 * b).collect();
        let once = bandpass_filter(&recording_of(x), 0.5, 30.0).unwrap();
        let twice = bandpass_filter(&once, 0.5, 30.0).unwrap();
        let a = &once.samples()[0][1000..4000];
        let b = &twice.samples()[0][1000..4000];
        let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        assert!(rms(&diff) < 0.01 * rms(a), "{} vs {}", rms(&diff), rms(a));
    }

    #[test]
    fn band_and_empty_errors() {
        let rec = recording_of(vec![0.0; 100]);
        assert!(matches!(bandpass_filter(&rec, 30.0, 0.5), Err(SignalError::InvalidBand { .. })));
        assert!(matches!(bandpass_filter(&rec, 0.5, 125.0), Err(SignalError::InvalidBand { .. })));
        assert!(matches!(bandpass_filter(&rec, 0.0, 30.0), Err(SignalError::InvalidBand { .. })));
        let empty = recording_of(vec![]);
        assert!(matches!(bandpass_filter(&empty, 0.5, 30.0), Err(SignalError::EmptyRecording)));
    }

    #[test]
    fn epoch_window_and_truncation() {
        let ramp: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let rec = RawRecording::standard(
            vec![ramp; N_CHANNELS],
            vec![FlashMarker { sample: 0, code: 4 }, FlashMarker { sample: 300, code: 9 }],
        )
        .unwrap();
        let e = extract_epoch(&rec, 0).unwrap();
        assert_eq!(e.stimulus_code(), 4);
        assert_eq!(e.channel(0).first(), Some(&0.0));
        assert_eq!(e.channel(0).last(), Some(&174.0));
        // 300 + 100 samples only.
        assert!(matches!(extract_epoch(&rec, 1), Err(SignalError::Truncated { available: 100, .. })));
        assert!(matches!(extract_epoch(&rec, 2), Err(SignalError::NoSuchMarker(2))));
    }

    #[test]
    fn impulse_lands_at_column_75() {
        let marker = 40;
        let mut samples = vec![vec![0.0; 400]; N_CHANNELS];
        for ch in [2usize, 7] {
            samples[ch][marker + 75] = 1.0;
        }
        let rec = RawRecording::standard(samples, vec![FlashMarker { sample: marker, code: 1 }]).unwrap();
        let e = extract_epoch(&rec, 0).unwrap();
        for ch in 0..N_CHANNELS {
            let row = e.channel(ch);
            let expect_hit = ch == 2 || ch == 7;
            assert_eq!(row[75] == 1.0, expect_hit);
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), usize::from(expect_hit));
        }
    }

    #[test]
    fn decimation_arithmetic() {
        let ones = EegEpoch::new(vec![vec![1.0; EPOCH_SAMPLES]; N_CHANNELS], 1, None).unwrap();
        let fv = decimate_epoch(&ones);
        assert_eq!(fv.values, vec![1.0; 240]);

        let mut rows = vec![vec![0.0; EPOCH_SAMPLES]; N_CHANNELS];
        rows[0] = (0..EPOCH_SAMPLES).map(|i| i as f64).collect();
        let fv = decimate_rows(&rows, 3).unwrap();
        assert_eq!(fv.values[0], 5.5);
        assert_eq!(fv.values[14], 171.0);
        assert!(fv.values[15..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decimation_rejects_bad_shape() {
        let rows = vec![vec![0.0; 174]; N_CHANNELS];
        assert!(matches!(decimate_rows(&rows, 1), Err(SignalError::Shape { cols: 174, .. })));
        assert!(EegEpoch::new(vec![vec![0.0; EPOCH_SAMPLES]; 15], 1, None).is_err());
    }

    #[test]
    fn channel_blocks_are_contiguous() {
        let rows: Vec<Vec<f64>> = (0..N_CHANNELS).map(|c| vec![c as f64; EPOCH_SAMPLES]).collect();
        let fv = decimate_rows(&rows, 1).unwrap();
        for c in 0..N_CHANNELS {
            assert!(fv.values[15 * c..15 * c + 15].iter().all(|v| *v == c as f64));
        }
    }

    #[test]
    fn recording_validation() {
        let ok = vec![vec![0.0; 10]; N_CHANNELS];
        assert!(RawRecording::standard(ok.clone(), vec![FlashMarker { sample: 1, code: 14 }]).is_err());
        assert!(RawRecording::standard(
            ok.clone(),
            vec![FlashMarker { sample: 3, code: 1 }, FlashMarker { sample: 3, code: 2 }]
        )
        .is_err());
        let mut ragged = ok;
        ragged[5].pop();
        assert!(RawRecording::standard(ragged, vec![]).is_err());
    }

    #[test]
    fn json_and_packed_encodings() {
        let samples: Vec<Vec<f64>> =
            (0..N_CHANNELS).map(|c| (0..50).map(|i| (c * 100 + i) as f64 * 0.25).collect()).collect();
        let rec = RawRecording::standard(samples, vec![FlashMarker { sample: 5, code: 13 }]).unwrap();
        let mut buf = Vec::new();
        rec.to_json_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"format\":\"recording.v1\""));
        assert_eq!(RawRecording::from_json_reader(&buf[..]).unwrap(), rec);

        let mut packed = Vec::new();
        rec.write_packed(&mut packed).unwrap();
        // Values are exactly representable in f32.
        assert_eq!(RawRecording::read_packed(&packed[..]).unwrap(), rec);
        let bad = br#"{"format":"recording.v0","channels":[],"sample_rate":250,"samples":[],"markers":[]}"#;
        assert!(RawRecording::from_json_reader(&bad[..]).is_err());
    }

    fn epoch_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, N_CHANNELS * EPOCH_SAMPLES)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn decimation_is_linear(x in epoch_strategy(), y in epoch_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let dx = decimate_epoch(&EegEpoch::from_flat(x, 1, None));
            let dy = decimate_epoch(&EegEpoch::from_flat(y, 1, None));
            let dc = decimate_epoch(&EegEpoch::from_flat(combo, 1, None));
            prop_assert_eq!(dc.values.len(), FEATURE_LEN);
            for i in 0..FEATURE_LEN {
                prop_assert!((dc.values[i] - (a * dx.values[i] + b * dy.values[i])).abs() < 1e-9);
            }
        }
    }
}
