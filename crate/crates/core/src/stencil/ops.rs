use serde::{Deserialize, Serialize};

use super::StencilSpec;
use crate::grid::Dims;

/// Which kernel an operation count refers to.
#[derive(Debug, Clone, Copy)]
pub enum Kernel<'a> {
    Hdiff,
    Elementary(&'a StencilSpec),
}

/// Work inventory of one kernel application.
///
/// A MAC counts as two operations; each subtract, compare or select counts
/// as one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    pub macs: u64,
    pub others: u64,
    pub ops: u64,
}

impl OpCount {
    pub fn new(macs: u64, others: u64) -> Self {
        Self {
            macs,
            others,
            ops: 2 * macs + others,
        }
    }

    pub fn scaled(self, factor: u64) -> Self {
        Self::new(self.macs * factor, self.others * factor)
    }
}

/// hdiff per interior point: 25 Laplacian MACs (5 Laplacians of 5 taps),
/// 8 flux-difference MACs and 12 subtract/compare/select operations.
pub const HDIFF_MACS_PER_POINT: u64 = 33;
pub const HDIFF_OTHERS_PER_POINT: u64 = 12;

pub fn op_count(dims: Dims, kernel: Kernel<'_>) -> OpCount {
    match kernel {
        Kernel::Hdiff => {
            let n = (dims.rows.saturating_sub(4) * dims.cols.saturating_sub(4) * dims.depth) as u64;
            OpCount::new(HDIFF_MACS_PER_POINT * n, HDIFF_OTHERS_PER_POINT * n)
        }
        Kernel::Elementary(spec) => {
            let (rows, cols) = spec.interior(dims);
            let n = (rows.len() * cols.len() * dims.depth) as u64;
            OpCount::new(spec.taps.len() as u64 * n, 0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::StencilKind;

    #[test]
    fn hdiff_counts() {
        assert_eq!(
            op_count(Dims::new(5, 5, 1), Kernel::Hdiff),
            OpCount {
                macs: 33,
                others: 12,
                ops: 78
            }
        );
        let big = op_count(Dims::new(256, 256, 64), Kernel::Hdiff);
        assert_eq!(big.macs, 33 * 252 * 252 * 64);
        assert_eq!(
            op_count(Dims::new(4, 9, 3), Kernel::Hdiff),
            OpCount::default()
        );
    }

    #[test]
    fn elementary_counts() {
        let spec = StencilSpec::builtin(StencilKind::Jac2d5pt);
        assert_eq!(
            op_count(Dims::new(6, 6, 1), Kernel::Elementary(&spec)).macs,
            80
        );
        let spec = StencilSpec::builtin(StencilKind::Jac1d);
        assert_eq!(
            op_count(Dims::new(3, 5, 2), Kernel::Elementary(&spec)).macs,
            3 * 3 * 3 * 2
        );
    }
}
