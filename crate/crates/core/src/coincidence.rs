//! Segmented singles, pair and triple counting with a one-bin coincidence window.
//!
//! [`accumulate`] works on the packed bitmaps a 64-bin word at a time;
//! [`brute_force_counts`] is the per-bin reference it is tested against.

use std::io::{Read, Write};
use std::ops::Index;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{Channel, ClickStreams};

/// One of the seven counted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    H,
    D1,
    D2,
    H1,
    H2,
    D12,
    H12,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::H,
        Field::D1,
        Field::D2,
        Field::H1,
        Field::H2,
        Field::D12,
        Field::H12,
    ];

    /// Column name used in CSV and JSON output.
    pub fn column(self) -> &'static str {
        match self {
            Field::H => "N_H",
            Field::D1 => "N_1",
            Field::D2 => "N_2",
            Field::H1 => "N_H1",
            Field::H2 => "N_H2",
            Field::D12 => "N_12",
            Field::H12 => "N_H12",
        }
    }

    /// Bit set of channels involved (bit 0 = H, 1 = D1, 2 = D2).
    pub(crate) fn mask(self) -> u8 {
        match self {
            Field::H => 0b001,
            Field::D1 => 0b010,
            Field::D2 => 0b100,
            Field::H1 => 0b011,
            Field::H2 => 0b101,
            Field::D12 => 0b110,
            Field::H12 => 0b111,
        }
    }

    pub(crate) fn from_mask(mask: u8) -> Field {
        Field::ALL
            .into_iter()
            .find(|f| f.mask() == mask)
            .expect("nonempty channel mask")
    }
}

/// Counts over a contiguous range of bins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub bins: u64,
    #[serde(rename = "N_H")]
    pub n_h: u64,
    #[serde(rename = "N_1")]
    pub n_1: u64,
    #[serde(rename = "N_2")]
    pub n_2: u64,
    #[serde(rename = "N_H1")]
    pub n_h1: u64,
    #[serde(rename = "N_H2")]
    pub n_h2: u64,
    #[serde(rename = "N_12")]
    pub n_12: u64,
    #[serde(rename = "N_H12")]
    pub n_h12: u64,
}

impl Index<Field> for Tallies {
    type Output = u64;

    fn index(&self, f: Field) -> &u64 {
        match f {
            Field::H => &self.n_h,
            Field::D1 => &self.n_1,
            Field::D2 => &self.n_2,
            Field::H1 => &self.n_h1,
            Field::H2 => &self.n_h2,
            Field::D12 => &self.n_12,
            Field::H12 => &self.n_h12,
        }
    }
}

impl std::ops::AddAssign for Tallies {
    fn add_assign(&mut self, o: Tallies) {
        self.bins += o.bins;
        self.n_h += o.n_h;
        self.n_1 += o.n_1;
        self.n_2 += o.n_2;
        self.n_h1 += o.n_h1;
        self.n_h2 += o.n_h2;
        self.n_12 += o.n_12;
        self.n_h12 += o.n_h12;
    }
}

impl std::iter::Sum for Tallies {
    fn sum<I: Iterator<Item = Tallies>>(iter: I) -> Tallies {
        let mut t = Tallies::default();
        for x in iter {
            t += x;
        }
        t
    }
}

impl Tallies {
    /// Checks the ordering constraints between singles, pairs and triples.
    pub fn is_consistent(&self) -> bool {
        let t = self;
        t.n_h.max(t.n_1).max(t.n_2) <= t.bins
            && t.n_h1 <= t.n_h.min(t.n_1)
            && t.n_h2 <= t.n_h.min(t.n_2)
            && t.n_12 <= t.n_1.min(t.n_2)
            && t.n_h12 <= t.n_h1.min(t.n_h2).min(t.n_12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub index: u64,
    pub tallies: Tallies,
}

/// Counts from a source-off run, attached to a signal run by [`background_subtract`](crate::analysis::background_subtract).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRun {
    pub bin_width: f64,
    pub totals: Tallies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub bin_width: f64,
    /// Nominal segment length; only the last segment of a run may be shorter.
    pub segment_bins: u64,
    pub segments: Vec<SegmentCounts>,
    pub totals: Tallies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundRun>,
}

impl CoincidenceCounts {
    pub fn empty(bin_width: f64) -> Self {
        Self {
            bin_width,
            segment_bins: 0,
            segments: Vec::new(),
            totals: Tallies::default(),
            background: None,
        }
    }

    fn from_segments(bin_width: f64, segment_bins: u64, segments: Vec<SegmentCounts>) -> Self {
        let totals = segments.iter().map(|s| s.tallies).sum();
        Self {
            bin_width,
            segment_bins,
            segments,
            totals,
            background: None,
        }
    }

    /// Appends a segment after the last one.
    pub fn push_segment(&mut self, tallies: Tallies) {
        self.segments.push(SegmentCounts {
            index: self.segments.len() as u64,
            tallies,
        });
        self.totals += tallies;
    }

    pub fn n_bins(&self) -> u64 {
        self.totals.bins
    }

    pub fn duration(&self) -> f64 {
        self.totals.bins as f64 * self.bin_width
    }

    pub fn is_short(&self, segment: &SegmentCounts) -> bool {
        segment.tallies.bins < self.segment_bins
    }

    /// Writes one row per segment: `segment_index,bins,N_H,N_1,N_2,N_H1,N_H2,N_12,N_H12`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["segment_index", "bins"];
        header.extend(Field::ALL.iter().map(|f| f.column()));
        out.write_record(&header)?;
        for s in &self.segments {
            let mut row = vec![s.index.to_string(), s.tallies.bins.to_string()];
            row.extend(Field::ALL.iter().map(|&f| s.tallies[f].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(r: R, bin_width: f64, segment_bins: u64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            segment_index: u64,
            bins: u64,
            #[serde(rename = "N_H")]
            n_h: u64,
            #[serde(rename = "N_1")]
            n_1: u64,
            #[serde(rename = "N_2")]
            n_2: u64,
            #[serde(rename = "N_H1")]
            n_h1: u64,
            #[serde(rename = "N_H2")]
            n_h2: u64,
            #[serde(rename = "N_12")]
            n_12: u64,
            #[serde(rename = "N_H12")]
            n_h12: u64,
        }
        let mut rd = csv::Reader::from_reader(r);
        let mut segments = Vec::new();
        for (line, row) in rd.deserialize::<Row>().enumerate() {
            let r = row?;
            let tallies = Tallies {
                bins: r.bins,
                n_h: r.n_h,
                n_1: r.n_1,
                n_2: r.n_2,
                n_h1: r.n_h1,
                n_h2: r.n_h2,
                n_12: r.n_12,
                n_h12: r.n_h12,
            };
            if !tallies.is_consistent() {
                return Err(Error::Format(format!(
                    "segment row {} has inconsistent counts",
                    line + 1
                )));
            }
            segments.push(SegmentCounts {
                index: r.segment_index,
                tallies,
            });
        }
        Ok(Self::from_segments(bin_width, segment_bins, segments))
    }
}

fn count_range(s: &ClickStreams, start: u64, end: u64) -> Tallies {
    let mut t = Tallies {
        bins: end - start,
        ..Tallies::default()
    };
    if start == end {
        return t;
    }
    let (h, a, b) = (
        s.words(Channel::Herald),
        s.words(Channel::Signal1),
        s.words(Channel::Signal2),
    );
    let first = (start / 64) as usize;
    let last = ((end - 1) / 64) as usize;
    let pop = |x: u64| u64::from(x.count_ones());
    for w in first..=last {
        let mut mask = !0u64;
        if w == first {
            mask &= !0u64 << (start % 64);
        }
        if w == last {
            let hi = end - last as u64 * 64;
            if hi < 64 {
                mask &= (1u64 << hi) - 1;
            }
        }
        let (x, y, z) = (h[w] & mask, a[w] & mask, b[w] & mask);
        t.n_h += pop(x);
        t.n_1 += pop(y);
        t.n_2 += pop(z);
        t.n_h1 += pop(x & y);
        t.n_h2 += pop(x & z);
        t.n_12 += pop(y & z);
        t.n_h12 += pop(x & y & z);
    }
    t
}

/// Counts `streams` in consecutive segments of `segment_bins` bins (the last may be short).
pub fn accumulate(streams: &ClickStreams, segment_bins: u64) -> CoincidenceCounts {
    assert!(segment_bins >= 1, "segment_bins must be at least 1");
    let n = streams.n_bins();
    let segments = (0..n.div_ceil(segment_bins))
        .into_par_iter()
        .map(|i| SegmentCounts {
            index: i,
            tallies: count_range(streams, i * segment_bins, ((i + 1) * segment_bins).min(n)),
        })
        .collect();
    CoincidenceCounts::from_segments(streams.bin_width(), segment_bins, segments)
}

/// Concatenates segment lists (renumbering `b`'s segments after `a`'s) and sums totals.
pub fn merge(a: &CoincidenceCounts, b: &CoincidenceCounts) -> Result<CoincidenceCounts> {
    if a.bin_width != b.bin_width {
        return Err(Error::BinWidthMismatch(a.bin_width, b.bin_width));
    }
    let offset = a.segments.len() as u64;
    let mut segments = a.segments.clone();
    segments.extend(b.segments.iter().enumerate().map(|(i, s)| SegmentCounts {
        index: offset + i as u64,
        tallies: s.tallies,
    }));
    let mut out = CoincidenceCounts::from_segments(a.bin_width, a.segment_bins.max(b.segment_bins), segments);
    out.background = a.background.or(b.background);
    Ok(out)
}

/// Per-bin reference count over the whole stream, as a single segment.
pub fn brute_force_counts(streams: &ClickStreams) -> CoincidenceCounts {
    let mut t = Tallies {
        bins: streams.n_bins(),
        ..Tallies::default()
    };
    for i in 0..streams.n_bins() {
        let h = streams.get(Channel::Herald, i);
        let a = streams.get(Channel::Signal1, i);
        let b = streams.get(Channel::Signal2, i);
        t.n_h += u64::from(h);
        t.n_1 += u64::from(a);
        t.n_2 += u64::from(b);
        t.n_h1 += u64::from(h && a);
        t.n_h2 += u64::from(h && b);
        t.n_12 += u64::from(a && b);
        t.n_h12 += u64::from(h && a && b);
    }
    let segments = if t.bins == 0 {
        Vec::new()
    } else {
        vec![SegmentCounts { index: 0, tallies: t }]
    };
    CoincidenceCounts::from_segments(streams.bin_width(), t.bins, segments)
}
