use std::io::Write;

use serde::{Deserialize, Serialize};

use super::nmse::reconstruction_nmse_db;
use crate::channel_data::ChannelDataset;
use crate::error::{Error, Result};
use crate::models::{CodeDecoder, Encoder};

/// NMSE (dB) of every row/column combination; `None` marks combinations
/// whose code lengths do not match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPairMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
}

/// An encoder together with the test set its users draw channels from.
pub struct EncoderUnderTest<'a> {
    pub label: String,
    pub encoder: &'a Encoder<f32>,
    pub test: &'a ChannelDataset,
}

pub struct DecoderUnderTest<'a> {
    pub label: String,
    pub decoder: &'a dyn CodeDecoder,
}

fn entry(res: Result<f64>) -> Result<Option<f64>> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(Error::Incompatible(msg)) => {
            log::warn!("incompatible pairing: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Entry `(e, d)` is the NMSE of decoder `d` reconstructing the codes that
/// encoder `e` produces on its own test set.
pub fn cross_pair_matrix(
    encoders: &[EncoderUnderTest<'_>],
    decoders: &[DecoderUnderTest<'_>],
    batch_size: usize,
) -> Result<CrossPairMatrix> {
    let entries = encoders
        .iter()
        .map(|e| {
            decoders
                .iter()
                .map(|d| entry(reconstruction_nmse_db(e.encoder, d.decoder, e.test, batch_size)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossPairMatrix {
        rows: encoders.iter().map(|e| e.label.clone()).collect(),
        cols: decoders.iter().map(|d| d.label.clone()).collect(),
        entries,
    })
}

/// A trained encoder/decoder pair.
pub struct PairUnderTest<'a> {
    pub label: String,
    pub encoder: &'a Encoder<f32>,
    pub decoder: &'a dyn CodeDecoder,
}

/// Scenario-mismatch variant: entry `(p, s)` is the NMSE of pair `p` on
/// test set `s`.
pub fn scenario_mismatch_matrix(
    pairs: &[PairUnderTest<'_>],
    test_sets: &[(String, &ChannelDataset)],
    batch_size: usize,
) -> Result<CrossPairMatrix> {
    let entries = pairs
        .iter()
        .map(|p| {
            test_sets
                .iter()
                .map(|(_, ds)| entry(reconstruction_nmse_db(p.encoder, p.decoder, ds, batch_size)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossPairMatrix {
        rows: pairs.iter().map(|p| p.label.clone()).collect(),
        cols: test_sets.iter().map(|(l, _)| l.clone()).collect(),
        entries,
    })
}

impl CrossPairMatrix {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries.get(row)?.get(col).copied().flatten()
    }

    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.rows.len().min(self.cols.len())).map(|i| self.get(i, i)).collect()
    }

    /// True when the matrix is square and, in every row, each off-diagonal
    /// entry exceeds the diagonal entry by at least `margin_db`.
    /// Incompatible off-diagonal entries count as satisfied.
    pub fn diagonally_dominant(&self, margin_db: f64) -> bool {
        if self.rows.len() != self.cols.len() {
            return false;
        }
        (0..self.rows.len()).all(|r| match self.get(r, r) {
            None => false,
            Some(d) => (0..self.cols.len())
                .filter(|&c| c != r)
                .all(|c| self.get(r, c).is_none_or(|v| v - d >= margin_db)),
        })
    }

    /// True when every diagonal entry is the minimum of its row and column.
    pub fn diagonal_minima(&self) -> bool {
        self.diagonally_dominant(0.0)
            && (0..self.cols.len()).all(|c| {
                let d = self.get(c, c);
                (0..self.rows.len()).all(|r| match (self.get(r, c), d) {
                    (Some(v), Some(d)) => v >= d,
                    (None, Some(_)) => true,
                    _ => false,
                })
            })
    }

    /// CSV with the row labels in the first column and the column labels as
    /// header; incompatible entries are written as `incompatible`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["encoder".to_string()];
        header.extend(self.cols.iter().cloned());
        csv.write_record(&header)?;
        for (label, row) in self.rows.iter().zip(&self.entries) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| match v {
                Some(v) => format!("{v:.4}"),
                None => "incompatible".into(),
            }));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }
}
