//! Sobol low-discrepancy points from Joe–Kuo direction numbers.
//!
//! The table format is the published one: a header line followed by one line
//! per dimension `d s a m_1 … m_s` (whitespace separated). Dimension 1 is the
//! van der Corput sequence and has no table line.

use crate::error::{Result, VmcError};

const BITS: usize = 32;

/// Embedded `new-joe-kuo-6.256` table (dimensions 2 through 256).
pub const JOE_KUO_TABLE: &str = include_str!("../data/new-joe-kuo-6.256.txt");

/// One parsed table line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionEntry {
    pub dim: usize,
    pub degree: usize,
    pub coeffs: u32,
    pub initial: Vec<u32>,
}

/// Parses a Joe–Kuo direction-number file. A non-numeric first line is
/// treated as a header; blank lines are skipped.
pub fn parse_direction_numbers(text: &str) -> Result<Vec<DirectionEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields[0].parse::<usize>().is_err() {
            continue;
        }
        let nums: std::result::Result<Vec<u64>, _> =
            fields.iter().map(|f| f.parse::<u64>()).collect();
        let nums = nums.map_err(|e| VmcError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if nums.len() < 3 {
            return Err(VmcError::Parse(format!(
                "line {}: expected d s a m_1..m_s",
                lineno + 1
            )));
        }
        let (dim, degree, coeffs) = (nums[0] as usize, nums[1] as usize, nums[2] as u32);
        if degree == 0 || degree >= BITS || nums.len() != 3 + degree {
            return Err(VmcError::Parse(format!(
                "line {}: degree {degree} does not match {} initial numbers",
                lineno + 1,
                nums.len() - 3
            )));
        }
        let initial: Vec<u32> = nums[3..].iter().map(|&m| m as u32).collect();
        for (k, &m) in initial.iter().enumerate() {
            if m % 2 == 0 || m >= 1 << (k + 1) {
                return Err(VmcError::Parse(format!(
                    "line {}: m_{} = {m} must be odd and below 2^{}",
                    lineno + 1,
                    k + 1,
                    k + 1
                )));
            }
        }
        out.push(DirectionEntry {
            dim,
            degree,
            coeffs,
            initial,
        });
    }
    Ok(out)
}

/// Unscrambled Sobol sequence in `[0, 1)^dims`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
}

impl SobolSequence {
    /// Uses the embedded table.
    pub fn new(dims: usize) -> Result<Self> {
        Self::from_entries(&parse_direction_numbers(JOE_KUO_TABLE)?, dims)
    }

    pub fn max_dims() -> usize {
        JOE_KUO_TABLE
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .count()
            + 1
    }

    pub fn from_entries(entries: &[DirectionEntry], dims: usize) -> Result<Self> {
        if dims > entries.len() + 1 {
            return Err(VmcError::UnsupportedDimension {
                requested: dims,
                supported: entries.len() + 1,
            });
        }
        let mut directions = Vec::with_capacity(dims);
        if dims > 0 {
            let mut v = [0u32; BITS];
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (BITS - 1 - k);
            }
            directions.push(v);
        }
        for e in entries.iter().take(dims.saturating_sub(1)) {
            let s = e.degree;
            let mut v = [0u32; BITS];
            for k in 0..s.min(BITS) {
                v[k] = e.initial[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (e.coeffs >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[k - j];
                    }
                }
                v[k] = x;
            }
            directions.push(v);
        }
        Ok(Self { directions })
    }

    pub fn dims(&self) -> usize {
        self.directions.len()
    }

    /// Point `index` of the sequence (index 0 is the origin), computed
    /// directly from the Gray code so any subset can be generated independently.
    pub fn point(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.point_into(index, &mut out);
        out
    }

    pub fn point_into(&self, index: u64, out: &mut [f64]) {
        assert!(index < 1 << BITS, "Sobol index exceeds 2^32");
        let gray = index ^ (index >> 1);
        let scale = 1.0 / (1u64 << BITS) as f64;
        for (d, o) in out.iter_mut().enumerate() {
            let mut x = 0u32;
            let mut g = gray;
            let mut k = 0;
            while g != 0 {
                if g & 1 == 1 {
                    x ^= self.directions[d][k];
                }
                g >>= 1;
                k += 1;
            }
            *o = x as f64 * scale;
        }
    }
}
