//! Minimal RIFF/WAVE codec: PCM-16/24/32 and IEEE float-32.

use crate::audio::RawRecording;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEncoding {
    Pcm16,
    Pcm24,
    Pcm32,
    Float32,
}

impl SampleEncoding {
    fn bits(self) -> u16 {
        match self {
            SampleEncoding::Pcm16 => 16,
            SampleEncoding::Pcm24 => 24,
            SampleEncoding::Pcm32 | SampleEncoding::Float32 => 32,
        }
    }

    fn tag(self) -> u16 {
        match self {
            SampleEncoding::Float32 => FORMAT_FLOAT,
            _ => FORMAT_PCM,
        }
    }
}

struct Format {
    encoding: SampleEncoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::decode("fmt ", format!("chunk too short ({} bytes)", body.len())));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(Error::decode("fmt ", "extensible format without sub-format GUID"));
        }
        tag = u16_at(body, 24);
    }
    if channels == 0 {
        return Err(Error::decode("fmt ", "zero channels"));
    }
    if sample_rate == 0 {
        return Err(Error::decode("fmt ", "zero sample rate"));
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleEncoding::Pcm16,
        (FORMAT_PCM, 24) => SampleEncoding::Pcm24,
        (FORMAT_PCM, 32) => SampleEncoding::Pcm32,
        (FORMAT_FLOAT, 32) => SampleEncoding::Float32,
        (format_tag, bits) => return Err(Error::UnsupportedFormat { format_tag, bits }),
    };
    let expected_align = channels as usize * (bits as usize / 8);
    if block_align as usize != expected_align {
        return Err(Error::decode(
            "fmt ",
            format!("block align {block_align} does not match {channels} channels x {bits} bits"),
        ));
    }
    Ok(Format {
        encoding,
        channels,
        sample_rate,
        block_align,
    })
}

/// Decode a WAV byte buffer. Integer PCM maps to `[-1, 1)` by dividing by 2^(bits-1).
pub fn decode_wav(bytes: &[u8]) -> Result<RawRecording> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::decode("RIFF", "missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::decode(&name, format!("declared size {size} exceeds remaining bytes"))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let format = format.ok_or_else(|| Error::decode("fmt ", "chunk missing"))?;
    let data = data.ok_or_else(|| Error::decode("data", "chunk missing"))?;
    let align = format.block_align as usize;
    if data.len() % align != 0 {
        return Err(Error::decode(
            "data",
            format!(
                "{} bytes is not a whole number of {}-channel frames; channel lengths differ",
                data.len(),
                format.channels
            ),
        ));
    }
    let n_ch = format.channels as usize;
    let frames = data.len() / align;
    let width = align / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in data.chunks_exact(align) {
        for (ch, s) in frame.chunks_exact(width).enumerate() {
            let v = match format.encoding {
                SampleEncoding::Pcm16 => i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0,
                SampleEncoding::Pcm24 => {
                    let raw = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    raw as f32 / 8_388_608.0
                }
                SampleEncoding::Pcm32 => {
                    (i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64 / 2_147_483_648.0) as f32
                }
                SampleEncoding::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]),
            };
            channels[ch].push(v);
        }
    }
    RawRecording::new(channels, format.sample_rate)
}

/// Encode a recording. Integer encodings clamp to the representable range.
pub fn encode_wav(rec: &RawRecording, encoding: SampleEncoding) -> Vec<u8> {
    let n_ch = rec.channel_count();
    let frames = rec.len();
    let width = encoding.bits() as usize / 8;
    let data_len = frames * n_ch * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&encoding.tag().to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&rec.sample_rate().to_le_bytes());
    let block_align = (n_ch * width) as u16;
    out.extend_from_slice(&(rec.sample_rate() * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&encoding.bits().to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..frames {
        for ch in rec.channels() {
            let v = ch[i];
            match encoding {
                SampleEncoding::Pcm16 => {
                    let q = (v as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                SampleEncoding::Pcm24 => {
                    let q = (v as f64 * 8_388_608.0)
                        .round()
                        .clamp(-8_388_608.0, 8_388_607.0) as i32;
                    out.extend_from_slice(&q.to_le_bytes()[0..3]);
                }
                SampleEncoding::Pcm32 => {
                    let q = (v as f64 * 2_147_483_648.0)
                        .round()
                        .clamp(-2_147_483_648.0, 2_147_483_647.0) as i32;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                SampleEncoding::Float32 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}
