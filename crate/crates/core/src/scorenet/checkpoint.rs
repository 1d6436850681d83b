//! PDCK checkpoints and the optimizer-state sidecar used to resume training.
//!
//! PDCK layout (little-endian): magic `PDCK`, `u32` version, `u32` length
//! and UTF-8 TOML text of the model header (regime and [`NetConfig`]),
//! `u64` parameter count, `f32` parameters, `f64` train loss, `f64` valid
//! loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::net::{NetConfig, ScoreNet};
use super::train::{AdamW, Regime, Trainer};
use crate::error::{Error, Result};

pub const PDCK_MAGIC: &[u8; 4] = b"PDCK";
pub const PDCK_VERSION: u32 = 1;
const OPT_MAGIC: &[u8; 4] = b"PDOS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    regime: Regime,
    net: NetConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub regime: Regime,
    pub params: Vec<f32>,
    pub train_loss: f64,
    pub valid_loss: f64,
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    for &x in v {
        w.write_f32::<LE>(x)?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R) -> Result<Vec<f32>> {
    let n = r.read_u64::<LE>()? as usize;
    let mut v = vec![0.0; n];
    r.read_f32_into::<LE>(&mut v)?;
    Ok(v)
}

impl Checkpoint {
    pub fn from_net(net: &ScoreNet<f32>, regime: Regime, train_loss: f64, valid_loss: f64) -> Self {
        Self {
            config: net.config.clone(),
            regime,
            params: net.params.values.clone(),
            train_loss,
            valid_loss,
        }
    }

    pub fn to_net(&self) -> Result<ScoreNet<f32>> {
        ScoreNet::with_params(self.config.clone(), self.params.clone())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = toml::to_string(&Header {
            regime: self.regime,
            net: self.config.clone(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(PDCK_MAGIC)?;
        w.write_u32::<LE>(PDCK_VERSION)?;
        w.write_u32::<LE>(header.len() as u32)?;
        w.write_all(header.as_bytes())?;
        write_f32s(&mut w, &self.params)?;
        w.write_f64::<LE>(self.train_loss)?;
        w.write_f64::<LE>(self.valid_loss)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PDCK_MAGIC {
            return Err(Error::Format("bad PDCK magic".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != PDCK_VERSION {
            return Err(Error::Format(format!("unsupported PDCK version {version}")));
        }
        let len = r.read_u32::<LE>()? as usize;
        let mut text = vec![0u8; len];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let header: Header = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        let params = read_f32s(&mut r)?;
        let train_loss = r.read_f64::<LE>()?;
        let valid_loss = r.read_f64::<LE>()?;
        let ck = Self {
            config: header.net,
            regime: header.regime,
            params,
            train_loss,
            valid_loss,
        };
        ck.to_net()?;
        Ok(ck)
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

/// Writes everything beyond the current parameters that a resumed run needs
/// to continue bit-identically: epoch, Adam moments and the best snapshot.
pub fn save_trainer_state(trainer: &Trainer, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(OPT_MAGIC)?;
    w.write_u64::<LE>(trainer.epoch as u64)?;
    w.write_u64::<LE>(trainer.opt.step)?;
    write_f32s(&mut w, &trainer.opt.m)?;
    write_f32s(&mut w, &trainer.opt.v)?;
    match &trainer.best {
        Some((score, params)) => {
            w.write_u8(1)?;
            w.write_f64::<LE>(*score)?;
            write_f32s(&mut w, params)?;
        }
        None => w.write_u8(0)?,
    }
    w.flush()?;
    Ok(())
}

/// Restores the state written by [`save_trainer_state`] into a trainer
/// whose network already holds the last parameters.
pub fn load_trainer_state(trainer: &mut Trainer, path: impl AsRef<Path>) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != OPT_MAGIC {
        return Err(Error::Format("bad optimizer-state magic".into()));
    }
    let epoch = r.read_u64::<LE>()? as usize;
    let step = r.read_u64::<LE>()?;
    let m = read_f32s(&mut r)?;
    let v = read_f32s(&mut r)?;
    let n = trainer.net.n_params();
    if m.len() != n || v.len() != n {
        return Err(Error::ShapeMismatch("optimizer state does not match the network".into()));
    }
    let best = match r.read_u8()? {
        0 => None,
        _ => {
            let score = r.read_f64::<LE>()?;
            Some((score, read_f32s(&mut r)?))
        }
    };
    trainer.epoch = epoch;
    trainer.opt = AdamW { m, v, step };
    trainer.best = best;
    Ok(())
}
