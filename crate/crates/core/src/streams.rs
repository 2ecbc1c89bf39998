//! Per-bin click records for the three detectors.
//!
//! Binary layout (`PSTM` version 1, all integers little-endian):
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `b"PSTM"`                          |
//! | 4      | 4    | format version (`u32`, currently 1)      |
//! | 8      | 8    | `n_bins` (`u64`)                         |
//! | 16     | 8    | bin width in seconds (`f64`)             |
//! | 24     | 4    | channel count (`u32`, always 3)          |
//! | 28     | ...  | one packed bitmap per channel, H, 1, 2   |
//!
//! Each bitmap is `ceil(n_bins / 8)` bytes; bit 0 of byte 0 is bin 0 (the
//! least significant bit is the earliest bin). Padding bits are zero.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PSTM_MAGIC: &[u8; 4] = b"PSTM";
pub const PSTM_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Herald = 0,
    Signal1 = 1,
    Signal2 = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Herald, Channel::Signal1, Channel::Signal2];

    pub fn label(self) -> &'static str {
        match self {
            Channel::Herald => "H",
            Channel::Signal1 => "1",
            Channel::Signal2 => "2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickStreams {
    n_bins: u64,
    bin_width: f64,
    words: [Vec<u64>; 3],
}

fn word_count(n_bins: u64) -> usize {
    n_bins.div_ceil(64) as usize
}

impl ClickStreams {
    /// All-zero streams.
    pub fn new(n_bins: u64, bin_width: f64) -> Self {
        let n = word_count(n_bins);
        Self {
            n_bins,
            bin_width,
            words: [vec![0; n], vec![0; n], vec![0; n]],
        }
    }

    pub fn from_bools(bin_width: f64, h: &[bool], d1: &[bool], d2: &[bool]) -> Result<Self> {
        if h.len() != d1.len() || h.len() != d2.len() {
            return Err(Error::Format(format!(
                "channel lengths differ: {}, {}, {}",
                h.len(),
                d1.len(),
                d2.len()
            )));
        }
        let mut s = Self::new(h.len() as u64, bin_width);
        for (c, bits) in [h, d1, d2].into_iter().enumerate() {
            for (i, &b) in bits.iter().enumerate() {
                if b {
                    s.words[c][i / 64] |= 1 << (i % 64);
                }
            }
        }
        Ok(s)
    }

    pub fn n_bins(&self) -> u64 {
        self.n_bins
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn duration(&self) -> f64 {
        self.n_bins as f64 * self.bin_width
    }

    /// Packed bitmap of one channel; bits past `n_bins` are zero.
    pub fn words(&self, channel: Channel) -> &[u64] {
        &self.words[channel as usize]
    }

    #[inline]
    pub fn get(&self, channel: Channel, bin: u64) -> bool {
        assert!(bin < self.n_bins, "bin {bin} out of range");
        self.words[channel as usize][(bin / 64) as usize] >> (bin % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, channel: Channel, bin: u64) {
        assert!(bin < self.n_bins, "bin {bin} out of range");
        self.words[channel as usize][(bin / 64) as usize] |= 1 << (bin % 64);
    }

    pub fn click_count(&self, channel: Channel) -> u64 {
        self.words(channel).iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Bin indices with a click on `channel`, ascending.
    pub fn clicks(&self, channel: Channel) -> impl Iterator<Item = u64> + '_ {
        self.words(channel).iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros();
                rest &= rest - 1;
                Some(wi as u64 * 64 + u64::from(bit))
            })
        })
    }

    /// Appends `other` after the last bin of `self`.
    pub fn append(&mut self, other: &ClickStreams) -> Result<()> {
        if self.bin_width != other.bin_width {
            return Err(Error::BinWidthMismatch(self.bin_width, other.bin_width));
        }
        let shift = (self.n_bins % 64) as u32;
        let total = self.n_bins + other.n_bins;
        for c in 0..3 {
            let dst = &mut self.words[c];
            if shift == 0 {
                dst.extend_from_slice(&other.words[c]);
            } else {
                for &w in &other.words[c] {
                    *dst.last_mut().expect("shift != 0 implies a partial word") |= w << shift;
                    dst.push(w >> (64 - shift));
                }
            }
            dst.truncate(word_count(total));
        }
        self.n_bins = total;
        Ok(())
    }

    /// Concatenates segment streams in order.
    pub fn concat(bin_width: f64, parts: impl IntoIterator<Item = ClickStreams>) -> Result<Self> {
        let mut out = ClickStreams::new(0, bin_width);
        for p in parts {
            out.append(&p)?;
        }
        Ok(out)
    }

    pub fn write_pstm<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PSTM_MAGIC)?;
        w.write_all(&PSTM_VERSION.to_le_bytes())?;
        w.write_all(&self.n_bins.to_le_bytes())?;
        w.write_all(&self.bin_width.to_le_bytes())?;
        w.write_all(&3u32.to_le_bytes())?;
        let n_bytes = self.n_bins.div_ceil(8) as usize;
        let mut buf = Vec::with_capacity(n_bytes);
        for c in 0..3 {
            buf.clear();
            buf.extend(self.words[c].iter().flat_map(|x| x.to_le_bytes()));
            buf.truncate(n_bytes);
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pstm<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated PSTM header: {e}")))?;
        if &header[0..4] != PSTM_MAGIC {
            return Err(Error::Format("missing PSTM magic".into()));
        }
        let le4 = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let le8 = |b: &[u8]| -> [u8; 8] { b.try_into().expect("8 bytes") };
        let version = le4(&header[4..8]);
        if version != PSTM_VERSION {
            return Err(Error::Format(format!("unsupported PSTM version {version}")));
        }
        let n_bins = u64::from_le_bytes(le8(&header[8..16]));
        let bin_width = f64::from_le_bytes(le8(&header[16..24]));
        let channels = le4(&header[24..28]);
        if channels != 3 {
            return Err(Error::Format(format!("expected 3 channels, found {channels}")));
        }
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::Format(format!("invalid bin width {bin_width}")));
        }
        let mut s = ClickStreams::new(n_bins, bin_width);
        let n_bytes = n_bins.div_ceil(8) as usize;
        let mut buf = vec![0u8; n_bytes];
        for c in 0..3 {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated bitmap for channel {c}: {e}")))?;
            for (wi, chunk) in buf.chunks(8).enumerate() {
                let mut b = [0u8; 8];
                b[..chunk.len()].copy_from_slice(chunk);
                s.words[c][wi] = u64::from_le_bytes(b);
            }
            if n_bins % 64 != 0 {
                let last = s.words[c].last_mut().expect("n_bins > 0");
                if *last >> (n_bins % 64) != 0 {
                    return Err(Error::Format(format!("nonzero padding bits in channel {c}")));
                }
            }
        }
        Ok(s)
    }

    pub fn to_pstm_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(HEADER_LEN + 3 * self.n_bins.div_ceil(8) as usize);
        self.write_pstm(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    /// Debug export: one `channel,bin_index` row per click.
    pub fn write_sparse_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["channel", "bin_index"])?;
        for ch in Channel::ALL {
            for bin in self.clicks(ch) {
                out.write_record([ch.label(), &bin.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
