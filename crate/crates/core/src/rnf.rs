//! The `RNF1` frame file format.
//!
//! ```text
//! RNF1
//! width=<usize>
//! height=<usize>
//! bit_depth=<u32>
//! quant_step=<f64>
//! black_level=<f64>
//! white_level=<f64>
//! cfa=<RGGB|BGGR|GRBG|GBRG>
//! dtype=<u16|f32|f64>
//!
//! <width*height little-endian samples, row-major>
//! ```
//!
//! Keys may appear in any order when reading; the writer always emits the
//! order above so identical frames produce identical files.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raw::{BayerFrame, CfaPattern, Quantizer, SampleFormat};

pub const MAGIC: &str = "RNF1";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(frame: &BayerFrame) -> Vec<u8> {
    let q = frame.quantizer();
    let mut out = format!(
        "{MAGIC}\nwidth={}\nheight={}\nbit_depth={}\nquant_step={}\nblack_level={}\nwhite_level={}\ncfa={}\ndtype={}\n\n",
        frame.width(),
        frame.height(),
        q.bit_depth,
        q.quant_step,
        q.black_level,
        q.white_level,
        frame.cfa(),
        frame.format().name(),
    )
    .into_bytes();
    out.reserve(frame.samples().len() * frame.format().bytes());
    for &s in frame.samples() {
        match frame.format() {
            SampleFormat::U16 => out.extend_from_slice(&(s as u16).to_le_bytes()),
            SampleFormat::F32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
            SampleFormat::F64 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    out
}

pub fn decode(mut reader: impl Read, origin: &Path) -> Result<BayerFrame> {
    let bad = |reason: String| Error::Format {
        path: origin.to_path_buf(),
        what: "RNF1 header",
        reason,
    };
    let mut reader = BufReader::new(&mut reader);
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<usize> {
        line.clear();
        reader.read_line(line).map_err(|e| Error::io(origin, e))
    };
    read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(bad(format!(
            "expected magic `{MAGIC}`, found `{}`",
            line.trim_end()
        )));
    }
    let mut keys = HashMap::new();
    loop {
        if read_line(&mut line)? == 0 {
            return Err(bad("missing blank line after header".into()));
        }
        let entry = line.trim_end_matches(['\n', '\r']);
        if entry.is_empty() {
            break;
        }
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, found `{entry}`")))?;
        keys.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<T: std::str::FromStr>(
        keys: &HashMap<String, String>,
        key: &str,
        bad: &dyn Fn(String) -> Error,
    ) -> Result<T> {
        let raw = keys
            .get(key)
            .ok_or_else(|| bad(format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| bad(format!("bad value `{raw}` for `{key}`")))
    }
    let width: usize = get(&keys, "width", &bad)?;
    let height: usize = get(&keys, "height", &bad)?;
    let quantizer = Quantizer {
        bit_depth: get(&keys, "bit_depth", &bad)?,
        quant_step: get(&keys, "quant_step", &bad)?,
        black_level: get(&keys, "black_level", &bad)?,
        white_level: get(&keys, "white_level", &bad)?,
    };
    let cfa: CfaPattern = keys
        .get("cfa")
        .ok_or_else(|| bad("missing key `cfa`".into()))?
        .parse()
        .map_err(|e: Error| bad(e.to_string()))?;
    let format: SampleFormat = keys
        .get("dtype")
        .ok_or_else(|| bad("missing key `dtype`".into()))?
        .parse()
        .map_err(|e: Error| bad(e.to_string()))?;

    let count = width
        .checked_mul(height)
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let mut payload = Vec::with_capacity(count * format.bytes());
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(origin, e))?;
    if payload.len() != count * format.bytes() {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            what: "RNF1 payload",
            reason: format!(
                "expected {} bytes, found {}",
                count * format.bytes(),
                payload.len()
            ),
        });
    }
    let samples: Vec<f64> = match format {
        SampleFormat::U16 => payload
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]) as f64)
            .collect(),
        SampleFormat::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
        SampleFormat::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    BayerFrame::new(width, height, samples, cfa, quantizer, format).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        what: "RNF1 frame",
        reason: e.to_string(),
    })
}

pub fn read(path: impl AsRef<Path>) -> Result<BayerFrame> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode(file, path)
}

pub fn write(path: impl AsRef<Path>, frame: &BayerFrame) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode(frame))
        .map_err(|e| Error::io(path, e))
}
