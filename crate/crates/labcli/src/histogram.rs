//! Fixed-width binning with explicit under/overflow counts.

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values below `lo`.
    pub underflow: u64,
    /// Values at or above `hi`.
    pub overflow: u64,
    /// NaNs are counted nowhere else.
    pub nan: u64,
}

impl Histogram {
    /// `bins` equal bins over `[lo, hi)`.
    pub fn build(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self, CliError> {
        if bins == 0 {
            return Err(CliError::Invalid("histogram needs at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CliError::Invalid(format!("bad histogram range [{lo}, {hi})")));
        }
        let mut h = Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
            nan: 0,
        };
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if v.is_nan() {
                h.nan += 1;
            } else if v < lo {
                h.underflow += 1;
            } else if v >= hi {
                h.overflow += 1;
            } else {
                // Rounding can push a value just under `hi` past the last bin.
                let i = (((v - lo) / width) as usize).min(bins - 1);
                h.counts[i] += 1;
            }
        }
        Ok(h)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow + self.nan
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let n = self.counts.len() as f64;
        let at = |k: usize| self.lo + (self.hi - self.lo) * k as f64 / n;
        (at(i), if i + 1 == self.counts.len() { self.hi } else { at(i + 1) })
    }

    /// `bin_lo,bin_hi,count`, with underflow and overflow as the first and
    /// last rows using infinite edges.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        out += &format!("-inf,{},{}\n", self.lo, self.underflow);
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.edges(i);
            out += &format!("{a},{b},{c}\n");
        }
        out += &format!("{},inf,{}\n", self.hi, self.overflow);
        if self.nan > 0 {
            out += &format!("nan,nan,{}\n", self.nan);
        }
        out
    }
}
