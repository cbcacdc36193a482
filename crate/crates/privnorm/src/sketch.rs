//! Linear sketches over the frequency vector: a signed count sketch for
//! heavy-coordinate recovery and an AMS sign sketch for the L2 estimate.
//! Both are mergeable by counter-wise addition and serialize to a small
//! versioned binary format.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::hashing::KWiseHash;

/// Lower-middle median: element at sorted index (len-1)/2. For odd length
/// this is the usual median; for even length the lower of the two middle
/// elements, so the result is always an element of the sample.
pub fn median_lower(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[(values.len() - 1) / 2]
}

/// Signed count sketch: `rows` independent (bucket, sign) hash pairs over
/// `width` buckets; the point estimate is the median over rows of the signed
/// counter values.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSketch {
    pub rows: u32,
    pub width: u64,
    bucket_hashes: Vec<KWiseHash>,
    sign_hashes: Vec<KWiseHash>,
    table: Vec<f64>, // rows * width, row-major
    /// Total absolute weight ingested (used only for diagnostics).
    pub total_updates: u64,
}

impl CountSketch {
    pub fn new(rows: u32, width: u64, degree: u32, seed: u64) -> Result<CountSketch> {
        if rows == 0 || rows % 2 == 0 {
            return Err(Error::InvalidParameter("count sketch needs an odd row count".into()));
        }
        if width < 2 {
            return Err(Error::InvalidParameter("count sketch width must be >= 2".into()));
        }
        let mut bucket_hashes = Vec::with_capacity(rows as usize);
        let mut sign_hashes = Vec::with_capacity(rows as usize);
        let degree = (degree as usize).max(2);
        for row in 0..rows as u64 {
            bucket_hashes.push(KWiseHash::new(degree, width, seed ^ (0x6275 << 16) ^ row));
            sign_hashes.push(KWiseHash::new(degree, 2, seed ^ (0x7369 << 16) ^ row));
        }
        Ok(CountSketch {
            rows,
            width,
            bucket_hashes,
            sign_hashes,
            table: vec![0.0; rows as usize * width as usize],
            total_updates: 0,
        })
    }

    #[inline]
    fn cell(&self, row: usize, item: u64) -> (usize, f64) {
        let b = self.bucket_hashes[row].eval(item) as usize;
        let sign = self.sign_hashes[row].eval_sign(item) as f64;
        (row * self.width as usize + b, sign)
    }

    pub fn update(&mut self, item: u64, delta: f64) {
        for row in 0..self.rows as usize {
            let (idx, sign) = self.cell(row, item);
            self.table[idx] += sign * delta;
        }
        self.total_updates += 1;
    }

    /// Signed counter values for one item, one per row (the pre-median view;
    /// each has per-item L1 sensitivity at most |delta|).
    pub fn row_estimates(&self, item: u64) -> Vec<f64> {
        (0..self.rows as usize)
            .map(|row| {
                let (idx, sign) = self.cell(row, item);
                sign * self.table[idx]
            })
            .collect()
    }

    pub fn estimate(&self, item: u64) -> f64 {
        let mut rows = self.row_estimates(item);
        median_lower(&mut rows)
    }

    pub fn merge(&mut self, other: &CountSketch) -> Result<()> {
        if self.rows != other.rows
            || self.width != other.width
            || self.bucket_hashes != other.bucket_hashes
            || self.sign_hashes != other.sign_hashes
        {
            return Err(Error::InvalidParameter(
                "can only merge sketches built with identical hashes".into(),
            ));
        }
        for (a, b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
        self.total_updates += other.total_updates;
        Ok(())
    }

    /// Scan a candidate universe for coordinates whose estimate clears
    /// `threshold`, excluding any whose estimate exceeds `exclude_above`
    /// (pass f64::INFINITY to disable), keeping at most `cap` survivors
    /// (largest estimates win).
    pub fn heavy_hitters(
        &self,
        universe: impl Iterator<Item = u64>,
        threshold: f64,
        exclude_above: f64,
        cap: usize,
    ) -> Vec<(u64, f64)> {
        let mut hits: Vec<(u64, f64)> = Vec::new();
        for item in universe {
            let est = self.estimate(item);
            if est >= threshold && est <= exclude_above {
                hits.push((item, est));
            }
        }
        hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        hits.truncate(cap);
        hits
    }

    fn write_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(&self.rows.to_le_bytes())?;
        out.write_all(&self.width.to_le_bytes())?;
        out.write_all(&self.total_updates.to_le_bytes())?;
        for h in self.bucket_hashes.iter().chain(&self.sign_hashes) {
            h.write_to(out)?;
        }
        for &v in &self.table {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_from(inp: &mut impl Read) -> Result<CountSketch> {
        let rows = read_u32(inp)?;
        let width = read_u64(inp)?;
        let total_updates = read_u64(inp)?;
        if rows == 0 || rows > 1 << 16 || width < 2 || width > 1 << 40 {
            return Err(Error::Parse("corrupt sketch header".into()));
        }
        let mut bucket_hashes = Vec::with_capacity(rows as usize);
        let mut sign_hashes = Vec::with_capacity(rows as usize);
        for _ in 0..rows {
            bucket_hashes.push(KWiseHash::read_from(inp)?);
        }
        for _ in 0..rows {
            sign_hashes.push(KWiseHash::read_from(inp)?);
        }
        let mut table = vec![0.0; rows as usize * width as usize];
        for v in &mut table {
            *v = read_f64(inp)?;
        }
        Ok(CountSketch { rows, width, bucket_hashes, sign_hashes, table, total_updates })
    }
}

/// AMS sign sketch: `reps` accumulators of random-sign sums; the squared-L2
/// estimate is the mean of squared accumulators and Z is its square root.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsSketch {
    pub reps: u32,
    sign_hashes: Vec<KWiseHash>,
    acc: Vec<f64>,
}

impl AmsSketch {
    pub fn new(reps: u32, degree: u32, seed: u64) -> Result<AmsSketch> {
        if reps == 0 {
            return Err(Error::InvalidParameter("AMS needs at least one repetition".into()));
        }
        let degree = (degree as usize).max(4); // 4-wise independence for the variance bound
        let mut sign_hashes = Vec::with_capacity(reps as usize);
        for rep in 0..reps as u64 {
            sign_hashes.push(KWiseHash::new(degree, 2, seed ^ (0x616d73 << 24) ^ rep));
        }
        Ok(AmsSketch { reps, sign_hashes, acc: vec![0.0; reps as usize] })
    }

    pub fn update(&mut self, item: u64, delta: f64) {
        for (h, a) in self.sign_hashes.iter().zip(&mut self.acc) {
            *a += h.eval_sign(item) as f64 * delta;
        }
    }

    /// Estimate of the squared L2 norm.
    pub fn f2(&self) -> f64 {
        self.acc.iter().map(|a| a * a).sum::<f64>() / self.reps as f64
    }

    /// Estimate of the L2 norm; changing one unit-weight update moves this by
    /// at most 2 (each accumulator moves by at most 2, so the L2 distance of
    /// the accumulator vector moves by at most 2*sqrt(reps), and z is that
    /// distance over sqrt(reps)).
    pub fn z(&self) -> f64 {
        self.f2().sqrt()
    }

    pub fn merge(&mut self, other: &AmsSketch) -> Result<()> {
        if self.reps != other.reps || self.sign_hashes != other.sign_hashes {
            return Err(Error::InvalidParameter(
                "can only merge sketches built with identical hashes".into(),
            ));
        }
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            *a += b;
        }
        Ok(())
    }

    fn write_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(&self.reps.to_le_bytes())?;
        for h in &self.sign_hashes {
            h.write_to(out)?;
        }
        for &v in &self.acc {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_from(inp: &mut impl Read) -> Result<AmsSketch> {
        let reps = read_u32(inp)?;
        if reps == 0 || reps > 1 << 24 {
            return Err(Error::Parse("corrupt AMS header".into()));
        }
        let mut sign_hashes = Vec::with_capacity(reps as usize);
        for _ in 0..reps {
            sign_hashes.push(KWiseHash::read_from(inp)?);
        }
        let mut acc = vec![0.0; reps as usize];
        for v in &mut acc {
            *v = read_f64(inp)?;
        }
        Ok(AmsSketch { reps, sign_hashes, acc })
    }
}

const MAGIC: &[u8; 8] = b"PNSKCH\x00\x01"; // name + format version

/// Serialize a bundle of sketches (the full per-run state) to bytes.
pub fn write_bundle(
    out: &mut impl Write,
    count_sketches: &[CountSketch],
    ams_sketches: &[AmsSketch],
) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(count_sketches.len() as u32).to_le_bytes())?;
    out.write_all(&(ams_sketches.len() as u32).to_le_bytes())?;
    for cs in count_sketches {
        cs.write_to(out)?;
    }
    for ams in ams_sketches {
        ams.write_to(out)?;
    }
    Ok(())
}

pub fn read_bundle(inp: &mut impl Read) -> Result<(Vec<CountSketch>, Vec<AmsSketch>)> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a sketch file (bad magic)".into()));
    }
    let n_cs = read_u32(inp)? as usize;
    let n_ams = read_u32(inp)? as usize;
    if n_cs > 1 << 20 || n_ams > 1 << 20 {
        return Err(Error::Parse("corrupt bundle header".into()));
    }
    let mut css = Vec::with_capacity(n_cs);
    for _ in 0..n_cs {
        css.push(CountSketch::read_from(inp)?);
    }
    let mut amss = Vec::with_capacity(n_ams);
    for _ in 0..n_ams {
        amss.push(AmsSketch::read_from(inp)?);
    }
    Ok((css, amss))
}

fn read_u32(inp: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    inp.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(inp: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    inp.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(inp: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    inp.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
