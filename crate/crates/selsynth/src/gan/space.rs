//! Affine map between the raw transformed space and the scale the GAN
//! trains on.
//!
//! Alpha segments shrink by the clip range so tanh outputs cover them;
//! ordinal rank scalars are standardized by their fitted moments; one-hot
//! segments pass through.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::tape::NodeId;
use crate::nn::{Tape, Tensor2};
use crate::transform::gmm::ALPHA_CLIP;
use crate::transform::matrix::{Layout, SegmentKind};
use crate::transform::schema::{FittedKind, TableSchema};

/// Per-encoded-column affine coefficients: `raw = gan * scale + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSpace {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl GanSpace {
    pub fn of(schema: &TableSchema, layout: &Layout) -> GanSpace {
        let mut scale = vec![1.0; layout.width];
        let mut shift = vec![0.0; layout.width];
        for seg in &layout.segments {
            match seg.kind {
                SegmentKind::Alpha => {
                    scale[seg.start] = ALPHA_CLIP;
                }
                SegmentKind::Ordinal => {
                    let FittedKind::Ordinal {
                        rank_mean,
                        rank_std,
                        ..
                    } = &schema.columns[seg.column].kind
                    else {
                        unreachable!("layout derived from the same schema");
                    };
                    // constant column: leave the scalar at its mean
                    scale[seg.start] = if *rank_std > 0.0 { *rank_std } else { 1.0 };
                    shift[seg.start] = *rank_mean;
                }
                SegmentKind::Beta | SegmentKind::Nominal => {}
            }
        }
        GanSpace { scale, shift }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn to_gan(&self, raw: &Tensor2) -> Tensor2 {
        let mut out = raw.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = (out.get(r, c) - self.shift[c]) / self.scale[c];
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn to_raw(&self, gan: &Tensor2) -> Tensor2 {
        let mut out = gan.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) * self.scale[c] + self.shift[c];
                out.set(r, c, v);
            }
        }
        out
    }

    /// Differentiable raw-space view of an on-tape gan-space batch.
    pub fn to_raw_on_tape(&self, tape: &mut Tape, gan: NodeId) -> Result<NodeId> {
        tape.affine_cols(gan, &self.scale, &self.shift)
    }
}
