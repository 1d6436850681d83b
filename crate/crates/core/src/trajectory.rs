//! Trajectories and the PDET binary container.
//!
//! Layout (little-endian): magic `PDET`, `u32` version, `u32` n_traj,
//! `u32` L, `u32` channels, `u32` D, `u8` dtype (0 = f32, 1 = f64),
//! `f64` dt_save, then `[n_traj][L][channels][D]` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const PDET_MAGIC: &[u8; 4] = b"PDET";
pub const PDET_VERSION: u32 = 1;

/// A time-major grid of PDE states, `[L][channels][D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub data: Vec<f64>,
    pub len: usize,
    pub channels: usize,
    pub width: usize,
    pub dt_save: f64,
}

impl Trajectory {
    pub fn new(data: Vec<f64>, len: usize, channels: usize, width: usize, dt_save: f64) -> Result<Self> {
        if data.len() != len * channels * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape [{len}][{channels}][{width}]",
                data.len()
            )));
        }
        Ok(Self {
            data,
            len,
            channels,
            width,
            dt_save,
        })
    }

    pub fn zeros(len: usize, channels: usize, width: usize, dt_save: f64) -> Self {
        Self {
            data: vec![0.0; len * channels * width],
            len,
            channels,
            width,
            dt_save,
        }
    }

    /// Builds a single-channel trajectory from a list of states.
    pub fn from_states(states: &[Vec<f64>], dt_save: f64) -> Result<Self> {
        let width = states.first().map_or(0, |s| s.len());
        if states.iter().any(|s| s.len() != width) {
            return Err(Error::ShapeMismatch("states of unequal width".into()));
        }
        let data = states.iter().flatten().copied().collect();
        Self::new(data, states.len(), 1, width, dt_save)
    }

    pub fn state_size(&self) -> usize {
        self.channels * self.width
    }

    pub fn state(&self, l: usize) -> &[f64] {
        let s = self.state_size();
        &self.data[l * s..(l + 1) * s]
    }

    pub fn state_mut(&mut self, l: usize) -> &mut [f64] {
        let s = self.state_size();
        &mut self.data[l * s..(l + 1) * s]
    }

    /// Contiguous copy of states `[start, start + count)`.
    pub fn window(&self, start: usize, count: usize) -> &[f64] {
        let s = self.state_size();
        &self.data[start * s..(start + count) * s]
    }

    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.len);
        Self {
            data: self.data[..len * self.state_size()].to_vec(),
            len,
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Trajectory) -> bool {
        self.len == other.len && self.channels == other.channels && self.width == other.width
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }
}

/// Element dtype of a PDET payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
}

/// Header and payload of a PDET file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub len: usize,
    pub channels: usize,
    pub width: usize,
    pub dt_save: f64,
    pub dtype: Dtype,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryFile {
    pub fn new(len: usize, channels: usize, width: usize, dt_save: f64, dtype: Dtype) -> Self {
        Self {
            len,
            channels,
            width,
            dt_save,
            dtype,
            trajectories: Vec::new(),
        }
    }

    pub fn from_trajectories(trajectories: Vec<Trajectory>, dtype: Dtype) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::ShapeMismatch("no trajectories to infer a header from".into()))?;
        let mut file = Self::new(first.len, first.channels, first.width, first.dt_save, dtype);
        for t in trajectories {
            file.push(t)?;
        }
        Ok(file)
    }

    pub fn push(&mut self, t: Trajectory) -> Result<()> {
        if t.len != self.len || t.channels != self.channels || t.width != self.width {
            return Err(Error::ShapeMismatch(format!(
                "trajectory [{}][{}][{}] in file of [{}][{}][{}]",
                t.len, t.channels, t.width, self.len, self.channels, self.width
            )));
        }
        self.trajectories.push(t);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PDET_MAGIC)?;
        w.write_u32::<LE>(PDET_VERSION)?;
        w.write_u32::<LE>(self.trajectories.len() as u32)?;
        w.write_u32::<LE>(self.len as u32)?;
        w.write_u32::<LE>(self.channels as u32)?;
        w.write_u32::<LE>(self.width as u32)?;
        w.write_u8(self.dtype.code())?;
        w.write_f64::<LE>(self.dt_save)?;
        for t in &self.trajectories {
            match self.dtype {
                Dtype::F32 => {
                    for &v in &t.data {
                        w.write_f32::<LE>(v as f32)?;
                    }
                }
                Dtype::F64 => {
                    for &v in &t.data {
                        w.write_f64::<LE>(v)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PDET_MAGIC {
            return Err(Error::Format("bad PDET magic".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != PDET_VERSION {
            return Err(Error::Format(format!("unsupported PDET version {version}")));
        }
        let n = r.read_u32::<LE>()? as usize;
        let len = r.read_u32::<LE>()? as usize;
        let channels = r.read_u32::<LE>()? as usize;
        let width = r.read_u32::<LE>()? as usize;
        let dtype = match r.read_u8()? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            c => return Err(Error::Format(format!("unknown dtype code {c}"))),
        };
        let dt_save = r.read_f64::<LE>()?;
        let per = len * channels * width;
        let mut file = Self::new(len, channels, width, dt_save, dtype);
        for _ in 0..n {
            let mut data = vec![0.0; per];
            match dtype {
                Dtype::F32 => {
                    for v in data.iter_mut() {
                        *v = r.read_f32::<LE>()? as f64;
                    }
                }
                Dtype::F64 => r.read_f64_into::<LE>(&mut data)?,
            }
            file.trajectories
                .push(Trajectory::new(data, len, channels, width, dt_save)?);
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Z-score normalization statistics stored in the `.stats` sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Normalizer {
    /// Mean and standard deviation over every value of every trajectory.
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let n: usize = trajectories.iter().map(|t| t.data.len()).sum();
        if n == 0 {
            return Err(Error::EmptyTrain);
        }
        let mean = trajectories.iter().flat_map(|t| &t.data).sum::<f64>() / n as f64;
        let var = trajectories
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, t: &Trajectory) -> Trajectory {
        t.map(|v| (v - self.mean) / self.std)
    }

    pub fn denormalize(&self, t: &Trajectory) -> Trajectory {
        t.map(|v| v * self.std + self.mean)
    }

    pub fn to_text(&self) -> String {
        format!("mean = {:?}\nstd = {:?}\n", self.mean, self.std)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut mean = None;
        let mut std = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad stats line `{line}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad stats value `{line}`")))?;
            match k.trim() {
                "mean" => mean = Some(v),
                "std" => std = Some(v),
                other => return Err(Error::Format(format!("unknown stats key `{other}`"))),
            }
        }
        match (mean, std) {
            (Some(mean), Some(std)) => Ok(Self { mean, std }),
            _ => Err(Error::Format("stats file needs `mean` and `std`".into())),
        }
    }

    pub fn sidecar_path(pdet: &Path) -> PathBuf {
        pdet.with_extension("stats")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_keeps_header() {
        let f = TrajectoryFile::new(140, 1, 64, 0.2, Dtype::F32);
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 * 5 + 1 + 8);
        assert_eq!(&buf[..4], b"PDET");
        let back = TrajectoryFile::read_from(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let t = Trajectory::new(vec![1.5, -2.0], 1, 1, 2, 0.25).unwrap();
        let f = TrajectoryFile::from_trajectories(vec![t], Dtype::F64).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[20..24], &2u32.to_le_bytes());
        assert_eq!(buf[24], 1);
        assert_eq!(&buf[25..33], &0.25f64.to_le_bytes());
        assert_eq!(&buf[33..41], &1.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            TrajectoryFile::read_from(&b"XXXX\x01\0\0\0"[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn stats_roundtrip() {
        let n = Normalizer { mean: -0.125, std: 1.0 / 3.0 };
        assert_eq!(Normalizer::parse(&n.to_text()).unwrap(), n);
    }

    proptest! {
        #[test]
        fn pdet_roundtrip_f64(vals in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let t = Trajectory::new(vals, 3, 1, 4, 0.01).unwrap();
            let f = TrajectoryFile::from_trajectories(vec![t.clone(), t], Dtype::F64).unwrap();
            let mut buf = Vec::new();
            f.write_to(&mut buf).unwrap();
            prop_assert_eq!(TrajectoryFile::read_from(&buf[..]).unwrap(), f);
        }

        #[test]
        fn normalize_inverts(vals in proptest::collection::vec(-10f64..10.0, 8), mean in -5f64..5.0, std in 0.1f64..4.0) {
            let t = Trajectory::new(vals, 2, 1, 4, 1.0).unwrap();
            let n = Normalizer { mean, std };
            let back = n.denormalize(&n.normalize(&t));
            for (a, b) in back.data.iter().zip(&t.data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
