//! Minimal RIFF/WAVE reader and writer.
//!
//! Supported encodings: mono or multi-channel 16-bit PCM and 32-bit IEEE
//! float. Anything else is rejected rather than converted. Parse failures
//! report the byte offset at which the file stopped making sense.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    PcmI16,
    Float32,
}

#[derive(Debug, Clone)]
pub struct WavData {
    pub sample_rate: u32,
    pub format: SampleFormat,
    /// Deinterleaved samples, one vec per channel, as f32 in [-1, 1].
    pub channels: Vec<Vec<f32>>,
}

impl WavData {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn mono(&self) -> CliResult<&[f32]> {
        if self.channels.len() != 1 {
            return Err(CliError::validation(format!(
                "expected mono audio, file has {} channels",
                self.channels.len()
            )));
        }
        Ok(&self.channels[0])
    }
}

fn malformed(offset: usize, message: impl std::fmt::Display) -> CliError {
    CliError::io(format!("malformed WAV at byte {offset}: {message}"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> CliResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> CliResult<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> CliResult<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> CliResult<WavData> {
    let bytes = fs::read(&path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.as_ref().display())))?;
    parse_wav(&bytes)
}

pub fn parse_wav(bytes: &[u8]) -> CliResult<WavData> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "RIFF tag")? != b"RIFF" {
        return Err(malformed(0, "missing RIFF tag"));
    }
    let _riff_size = c.u32("RIFF size")?;
    if c.take(4, "WAVE tag")? != b"WAVE" {
        return Err(malformed(8, "missing WAVE tag"));
    }

    let mut fmt: Option<(SampleFormat, u16, u32)> = None;
    let mut data: Option<(usize, usize)> = None;
    while c.pos + 8 <= bytes.len() {
        let id_offset = c.pos;
        let id: [u8; 4] = c.take(4, "chunk id")?.try_into().unwrap();
        let size = c.u32("chunk size")? as usize;
        let body = c.pos;
        if body + size > bytes.len() {
            return Err(malformed(id_offset, "chunk extends past end of file"));
        }
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed(id_offset, "fmt chunk too small"));
                }
                let mut f = Cursor { bytes, pos: body };
                let audio_format = f.u16("audio format")?;
                let channels = f.u16("channel count")?;
                let sample_rate = f.u32("sample rate")?;
                let _byte_rate = f.u32("byte rate")?;
                let _block_align = f.u16("block align")?;
                let bits = f.u16("bits per sample")?;
                let format = match (audio_format, bits) {
                    (1, 16) => SampleFormat::PcmI16,
                    (3, 32) => SampleFormat::Float32,
                    _ => {
                        return Err(malformed(
                            body,
                            format!(
                                "unsupported encoding (format {audio_format}, {bits}-bit); \
                                 only 16-bit PCM and 32-bit float are accepted"
                            ),
                        ))
                    }
                };
                if channels == 0 {
                    return Err(malformed(body, "zero channels"));
                }
                if sample_rate == 0 {
                    return Err(malformed(body, "zero sample rate"));
                }
                fmt = Some((format, channels, sample_rate));
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {}
        }
        c.pos = body + size + (size & 1);
    }

    let (format, channels, sample_rate) =
        fmt.ok_or_else(|| malformed(bytes.len(), "no fmt chunk"))?;
    let (data_offset, data_size) =
        data.ok_or_else(|| malformed(bytes.len(), "no data chunk"))?;

    let bytes_per_sample = match format {
        SampleFormat::PcmI16 => 2,
        SampleFormat::Float32 => 4,
    };
    let frame_size = bytes_per_sample * channels as usize;
    if data_size % frame_size != 0 {
        return Err(malformed(
            data_offset,
            format!("data size {data_size} is not a multiple of the {frame_size}-byte frame"),
        ));
    }
    let frames = data_size / frame_size;
    let mut out = vec![Vec::with_capacity(frames); channels as usize];
    let payload = &bytes[data_offset..data_offset + data_size];
    match format {
        SampleFormat::PcmI16 => {
            for (i, s) in payload.chunks_exact(2).enumerate() {
                let v = i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0;
                out[i % channels as usize].push(v);
            }
        }
        SampleFormat::Float32 => {
            for (i, s) in payload.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]);
                if !v.is_finite() {
                    return Err(malformed(data_offset + i * 4, "non-finite sample"));
                }
                out[i % channels as usize].push(v);
            }
        }
    }
    Ok(WavData {
        sample_rate,
        format,
        channels: out,
    })
}

fn write_header(
    out: &mut Vec<u8>,
    format: SampleFormat,
    channels: u16,
    sample_rate: u32,
    frames: usize,
) {
    let (tag, bits): (u16, u16) = match format {
        SampleFormat::PcmI16 => (1, 16),
        SampleFormat::Float32 => (3, 32),
    };
    let bytes_per_sample = bits as u32 / 8;
    let block_align = channels as u32 * bytes_per_sample;
    let data_size = frames as u32 * block_align;
    let fact = matches!(format, SampleFormat::Float32);
    let riff_size = 4 + (8 + 16) + if fact { 8 + 4 } else { 0 } + 8 + data_size;

    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_size.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if fact {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(frames as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
}

/// Writes interleaved 32-bit float channels.
pub fn write_wav_f32(
    path: impl AsRef<Path>,
    sample_rate: u32,
    channels: &[Vec<f32>],
) -> CliResult<()> {
    let frames = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != frames) {
        return Err(CliError::validation("channels must be non-empty and equal length"));
    }
    let mut out = Vec::with_capacity(64 + frames * channels.len() * 4);
    write_header(
        &mut out,
        SampleFormat::Float32,
        channels.len() as u16,
        sample_rate,
        frames,
    );
    for i in 0..frames {
        for ch in channels {
            out.extend_from_slice(&ch[i].to_le_bytes());
        }
    }
    write_file(path, &out)
}

/// Writes mono 16-bit PCM, clamping to [-1, 1].
pub fn write_wav_i16_mono(
    path: impl AsRef<Path>,
    sample_rate: u32,
    samples: &[f32],
) -> CliResult<()> {
    let mut out = Vec::with_capacity(64 + samples.len() * 2);
    write_header(&mut out, SampleFormat::PcmI16, 1, sample_rate, samples.len());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
    let mut f = fs::File::create(&path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.as_ref().display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::io(format!("{}: {e}", path.as_ref().display())))?;
    Ok(())
}
