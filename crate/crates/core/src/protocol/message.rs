use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exchange {
    /// Full exchange of every shared entity.
    Sync,
    /// Top-K exchange.
    Sparse,
}

/// Client → server. `payload` holds the flagged rows in ascending
/// shared-entity order.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadMessage {
    pub client_id: usize,
    pub round: usize,
    pub exchange: Exchange,
    pub sign: Vec<bool>,
    pub payload: Matrix,
}

/// Server → client. `priority[i]` is the number of other clients whose
/// uploads were summed into `payload` row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DownloadMessage {
    pub client_id: usize,
    pub round: usize,
    pub exchange: Exchange,
    pub sign: Vec<bool>,
    pub priority: Vec<u32>,
    pub payload: Matrix,
}

fn popcount(sign: &[bool]) -> usize {
    sign.iter().filter(|&&b| b).count()
}

fn check_payload(sign: &[bool], payload: &Matrix) -> Result<()> {
    ensure!(
        payload.rows() == popcount(sign),
        Protocol,
        "{} payload rows for {} flagged entities",
        payload.rows(),
        popcount(sign)
    );
    Ok(())
}

impl UploadMessage {
    pub fn num_shared(&self) -> usize {
        self.sign.len()
    }

    pub fn selected(&self) -> usize {
        popcount(&self.sign)
    }

    pub fn validate(&self) -> Result<()> {
        check_payload(&self.sign, &self.payload)
    }

    /// Shared indices flagged in `sign`, ascending; aligned with payload rows.
    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.sign.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(self.client_id, self.round, &self.sign, &[], &self.payload)
    }

    pub fn decode(bytes: &[u8], exchange: Exchange) -> Result<Self> {
        let raw = decode(bytes, false)?;
        Ok(Self {
            client_id: raw.client_id,
            round: raw.round,
            exchange,
            sign: raw.sign,
            payload: raw.payload,
        })
    }
}

impl DownloadMessage {
    pub fn num_shared(&self) -> usize {
        self.sign.len()
    }

    pub fn selected(&self) -> usize {
        popcount(&self.sign)
    }

    pub fn validate(&self) -> Result<()> {
        check_payload(&self.sign, &self.payload)?;
        ensure!(
            self.priority.len() == self.payload.rows(),
            Protocol,
            "{} priority weights for {} payload rows",
            self.priority.len(),
            self.payload.rows()
        );
        ensure!(self.priority.iter().all(|&p| p >= 1), Protocol, "priority weight below 1");
        Ok(())
    }

    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.sign.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(self.client_id, self.round, &self.sign, &self.priority, &self.payload)
    }

    pub fn decode(bytes: &[u8], exchange: Exchange) -> Result<Self> {
        let raw = decode(bytes, true)?;
        Ok(Self {
            client_id: raw.client_id,
            round: raw.round,
            exchange,
            sign: raw.sign,
            priority: raw.priority,
            payload: raw.payload,
        })
    }
}

// Record layout, all little-endian:
//   client_id u32 | round u32 | N_c u32 | K u32
//   sign: ceil(N_c / 8) bytes, bit i of the vector at byte i/8, bit i%8
//   priority: K × u32 (downloads only)
//   payload: K rows × D_e × f32
fn encode(client_id: usize, round: usize, sign: &[bool], priority: &[u32], payload: &Matrix) -> Vec<u8> {
    let k = payload.rows();
    let mut out = Vec::with_capacity(16 + sign.len().div_ceil(8) + 4 * priority.len() + 4 * payload.as_slice().len());
    for v in [client_id, round, sign.len(), k] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let mut packed = vec![0u8; sign.len().div_ceil(8)];
    for (i, &b) in sign.iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&packed);
    for p in priority {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for v in payload.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

struct Raw {
    client_id: usize,
    round: usize,
    sign: Vec<bool>,
    priority: Vec<u32>,
    payload: Matrix,
}

fn decode(bytes: &[u8], with_priority: bool) -> Result<Raw> {
    let short = || Error::Protocol(format!("truncated message record ({} bytes)", bytes.len()));
    let word = |at: usize| -> Result<u32> {
        let b = bytes.get(at..at + 4).ok_or_else(short)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    let client_id = word(0)? as usize;
    let round = word(4)? as usize;
    let n = word(8)? as usize;
    let k = word(12)? as usize;
    let mut at = 16;
    let packed = bytes.get(at..at + n.div_ceil(8)).ok_or_else(short)?;
    let sign: Vec<bool> = (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
    at += n.div_ceil(8);
    ensure!(popcount(&sign) == k, Protocol, "header K = {k} but sign vector flags {}", popcount(&sign));
    let mut priority = Vec::new();
    if with_priority {
        for _ in 0..k {
            priority.push(word(at)?);
            at += 4;
        }
    }
    let rest = &bytes[at.min(bytes.len())..];
    ensure!(rest.len() % 4 == 0, Protocol, "payload is not a whole number of f32 values");
    let values: Vec<f64> = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let payload = if k == 0 {
        ensure!(values.is_empty(), Protocol, "payload present with K = 0");
        Matrix::zeros(0, 0)
    } else {
        ensure!(values.len() % k == 0, Protocol, "{} payload values do not split into {k} rows", values.len());
        Matrix::from_vec(k, values.len() / k, values)?
    };
    Ok(Raw {
        client_id,
        round,
        sign,
        priority,
        payload,
    })
}
