//! Waveform layer: temporal mode functions, synthesis of detector traces
//! from per-bin quadrature values, and integration of traces back into
//! quadratures.
//!
//! Frames are 10 us at 1 GS/s: 10,000 samples holding exactly 250 wave
//! packets of 40 samples each. Sample `s` represents time `(s + 0.5) ns`,
//! so the 40 samples of a bin sit symmetrically around the bin centre and
//! the discretized mode function is exactly antisymmetric.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::shot_rng;

pub const SAMPLE_RATE_HZ: u64 = 1_000_000_000;
pub const BIN_SAMPLES: usize = 40;
pub const FRAME_BINS: usize = 250;
pub const FRAME_SAMPLES: usize = BIN_SAMPLES * FRAME_BINS;

const MAGIC: &[u8; 4] = b"CVTR";
const FORMAT_VERSION: u16 = 1;

/// The temporal wave-packet shape of bin `k`:
/// `f_k(t) = (t - k dt) exp(-(t - k dt)^2 / (2 tau^2))` inside the window
/// `|t - k dt| <= dt/2` and exactly zero outside. Time in nanoseconds,
/// measured from the bin centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFunction {
    pub tau_ns: f64,
    pub delta_t_ns: f64,
    pub k: usize,
}

impl ModeFunction {
    /// The published packet: `tau = 5 ns`, `dt = 40 ns`.
    pub fn standard(k: usize) -> Self {
        Self {
            tau_ns: 5.0,
            delta_t_ns: 40.0,
            k,
        }
    }

    /// Continuous, unnormalized value at offset `u = t - k dt` from the bin
    /// centre.
    pub fn value_at_offset(&self, u: f64) -> f64 {
        if u.abs() > 0.5 * self.delta_t_ns {
            0.0
        } else {
            u * (-u * u / (2.0 * self.tau_ns * self.tau_ns)).exp()
        }
    }

    /// The 40 discretized samples of this packet, L2-normalized. Sampled at
    /// offsets `-19.5, -18.5, .., +19.5 ns`, which keeps the shape exactly
    /// antisymmetric.
    pub fn samples(&self) -> [f64; BIN_SAMPLES] {
        let mut out = [0.0; BIN_SAMPLES];
        let mut norm_sq = 0.0;
        for (i, v) in out.iter_mut().enumerate() {
            let u = i as f64 - (BIN_SAMPLES as f64 - 1.0) / 2.0;
            *v = self.value_at_offset(u);
            norm_sq += *v * *v;
        }
        let norm = norm_sq.sqrt();
        for v in &mut out {
            *v /= norm;
        }
        out
    }
}

/// Detector channel a trace belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
}

impl Channel {
    fn to_byte(self) -> u8 {
        match self {
            Channel::A => 0,
            Channel::B => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Channel::A),
            1 => Ok(Channel::B),
            other => Err(Error::TraceFormat(format!("unknown channel byte {other}"))),
        }
    }
}

/// One recorded frame: 10,000 voltage samples on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub channel: Channel,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(channel: Channel, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != FRAME_SAMPLES {
            return Err(Error::TraceFormat(format!(
                "frame must hold {FRAME_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        Ok(Self { channel, samples })
    }

    /// Binary layout: magic `CVTR`, format version (u16 LE), channel byte,
    /// one reserved byte, sample rate in Hz (u64 LE), sample count
    /// (u32 LE), then the samples as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.channel.to_byte(), 0])?;
        w.write_all(&SAMPLE_RATE_HZ.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u32).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::TraceFormat("bad magic".into()));
        }
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf)?;
        let version = u16::from_le_bytes(u16buf);
        if version != FORMAT_VERSION {
            return Err(Error::TraceFormat(format!("unsupported version {version}")));
        }
        let mut two = [0u8; 2];
        r.read_exact(&mut two)?;
        let channel = Channel::from_byte(two[0])?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let rate = u64::from_le_bytes(u64buf);
        if rate != SAMPLE_RATE_HZ {
            return Err(Error::TraceFormat(format!(
                "unsupported sample rate {rate}"
            )));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if n != FRAME_SAMPLES {
            return Err(Error::TraceFormat(format!("unexpected sample count {n}")));
        }
        let mut samples = Vec::with_capacity(n);
        let mut f64buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut f64buf)?;
            samples.push(f64::from_le_bytes(f64buf));
        }
        Trace::new(channel, samples)
    }

    pub fn write_binary_file(&self, path: &Path) -> Result<()> {
        self.write_binary(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_binary_file(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Inspection format: `t_ns,value` rows with a header, full f64
    /// precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ns,value")?;
        for (s, v) in self.samples.iter().enumerate() {
            writeln!(w, "{},{:e}", s as f64 + 0.5, v)?;
        }
        Ok(())
    }
}

/// Build a frame from per-bin quadrature values (at most 250, remaining
/// bins zero): the value-weighted mode functions plus white noise projected
/// onto the orthogonal complement, so integration recovers the values
/// exactly at any noise power.
pub fn synthesize_frame(
    values: &[f64],
    channel: Channel,
    noise_power: f64,
    noise_seed: u64,
) -> Result<Trace> {
    if values.len() > FRAME_BINS {
        return Err(Error::TooManyBinValues {
            max: FRAME_BINS,
            got: values.len(),
        });
    }
    let shape = ModeFunction::standard(0).samples();
    let mut samples = vec![0.0; FRAME_SAMPLES];
    if noise_power > 0.0 {
        let mut rng = shot_rng(noise_seed, 0);
        let sigma = noise_power.sqrt();
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s = sigma * z;
        }
        // remove the in-band component bin by bin
        for k in 0..FRAME_BINS {
            let window = &mut samples[k * BIN_SAMPLES..(k + 1) * BIN_SAMPLES];
            let overlap: f64 = window.iter().zip(&shape).map(|(s, f)| s * f).sum();
            for (s, f) in window.iter_mut().zip(&shape) {
                *s -= overlap * f;
            }
        }
    }
    for (k, &v) in values.iter().enumerate() {
        let window = &mut samples[k * BIN_SAMPLES..(k + 1) * BIN_SAMPLES];
        for (s, f) in window.iter_mut().zip(&shape) {
            *s += v * f;
        }
    }
    Trace::new(channel, samples)
}

/// Quadrature value of bin `k`: inner product of the trace with the
/// normalized mode function.
pub fn integrate_frame(trace: &Trace, k: usize) -> Result<f64> {
    if k >= FRAME_BINS {
        return Err(Error::BinOutOfRange {
            index: k,
            n_bins: FRAME_BINS,
        });
    }
    let shape = ModeFunction::standard(0).samples();
    let window = &trace.samples[k * BIN_SAMPLES..(k + 1) * BIN_SAMPLES];
    Ok(window.iter().zip(&shape).map(|(s, f)| s * f).sum())
}

/// All 250 bin values of a frame.
pub fn integrate_all(trace: &Trace) -> Vec<f64> {
    (0..FRAME_BINS)
        .map(|k| integrate_frame(trace, k).expect("k < FRAME_BINS"))
        .collect()
}
