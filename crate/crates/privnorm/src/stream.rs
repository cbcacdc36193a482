//! Stream file format and synthetic stream generators. A stream file is a
//! one-line header "n=<universe> m=<length>" followed by one item id per
//! line; items are insertions of weight 1.

use std::io::{BufRead, BufWriter, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub n: u64,
    pub items: Vec<u64>,
}

impl Stream {
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "n={} m={}", self.n, self.items.len())?;
        for &item in &self.items {
            writeln!(w, "{item}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(inp: &mut impl BufRead) -> Result<Stream> {
        let mut header = String::new();
        inp.read_line(&mut header)?;
        let mut n = None;
        let mut m = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("n", v)) => n = v.parse::<u64>().ok(),
                Some(("m", v)) => m = v.parse::<u64>().ok(),
                _ => return Err(Error::Parse(format!("bad stream header field {part:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::Parse("stream header missing n".into()))?;
        let m = m.ok_or_else(|| Error::Parse("stream header missing m".into()))?;
        let mut items = Vec::with_capacity(m as usize);
        for (lineno, line) in inp.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let item: u64 = t
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad item {t:?}", lineno + 2)))?;
            if item >= n {
                return Err(Error::Parse(format!(
                    "line {}: item {item} outside universe [0, {n})",
                    lineno + 2
                )));
            }
            items.push(item);
        }
        if items.len() as u64 != m {
            return Err(Error::Parse(format!(
                "header says m={m} but found {} items",
                items.len()
            )));
        }
        Ok(Stream { n, items })
    }
}

/// m items uniform over [0, n).
pub fn gen_uniform(n: u64, m: u64, seed: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Stream { n, items: (0..m).map(|_| rng.gen_range(0..n)).collect() }
}

/// m items Zipf(theta) over [0, n): item i drawn with probability
/// proportional to 1 / (i+1)^theta, via a cumulative table + binary search.
pub fn gen_zipf(n: u64, m: u64, theta: f64, seed: u64) -> Stream {
    assert!(theta > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cdf = Vec::with_capacity(n as usize);
    let mut acc = 0.0;
    for i in 0..n {
        acc += 1.0 / ((i + 1) as f64).powf(theta);
        cdf.push(acc);
    }
    let total = acc;
    let items = (0..m)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..total);
            cdf.partition_point(|&c| c < u) as u64
        })
        .collect();
    Stream { n, items }
}

/// `heavies` planted items each repeated `weight` times, padded to m with
/// uniform light items, then shuffled.
pub fn gen_planted(n: u64, m: u64, heavies: &[u64], weight: u64, seed: u64) -> Stream {
    assert!(heavies.len() as u64 * weight <= m);
    assert!(heavies.iter().all(|&h| h < n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(m as usize);
    for &h in heavies {
        items.extend(std::iter::repeat(h).take(weight as usize));
    }
    while (items.len() as u64) < m {
        items.push(rng.gen_range(0..n));
    }
    // Fisher-Yates
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
    Stream { n, items }
}
