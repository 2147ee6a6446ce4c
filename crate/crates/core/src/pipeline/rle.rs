//! Uncompressed run-length encoding of binary masks.
//!
//! Same convention as COCO's uncompressed RLE: `size` is `[height, width]`,
//! pixels are visited in column-major order and `counts` alternates run
//! lengths starting with a (possibly empty) run of outer pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RegionMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl Rle {
    pub fn encode(mask: &RegionMask) -> Self {
        let (h, w) = (mask.height(), mask.width());
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for col in 0..w {
            for row in 0..h {
                let bit = mask.get(row, col);
                if bit != current {
                    counts.push(run);
                    run = 0;
                    current = bit;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self { size: [h, w], counts }
    }

    pub fn decode(&self) -> Result<RegionMask> {
        let [h, w] = self.size;
        let total: u64 = self.counts.iter().sum();
        if total != (h * w) as u64 {
            return Err(Error::BackendUnavailable(format!(
                "rle counts sum to {total}, expected {}",
                h * w
            )));
        }
        let mut mask = RegionMask::filled(w, h, false)?;
        let mut idx = 0usize;
        for (k, &run) in self.counts.iter().enumerate() {
            let inner = k % 2 == 1;
            for _ in 0..run {
                if inner {
                    mask.set(idx % h, idx / h, true);
                }
                idx += 1;
            }
        }
        Ok(mask)
    }
}
