use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::layer::{LayerDescriptor, LayerKind};

/// Side of the PE array; both spatial unrollings use it.
pub const ARRAY_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Dataflow {
    /// OX along array columns, K along rows; output stationary.
    Oxk,
    /// C along columns, K along rows; partial output stationary.
    Ck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopDim {
    C,
    K,
    Ox,
    Oy,
    Fx,
    Fy,
    Batch,
    OxTiles,
    KTiles,
    CTiles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    pub dim: LoopDim,
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNest {
    pub dataflow: Dataflow,
    /// (column dimension, factor), (row dimension, factor)
    pub spatial: [Loop; 2],
    pub temporal: Vec<Loop>,
}

fn l(dim: LoopDim, bound: usize) -> Loop {
    Loop { dim, bound }
}

pub fn derive_loop_nest(desc: &LayerDescriptor) -> Result<LoopNest> {
    let k_tiles = desc.k.div_ceil(ARRAY_DIM);
    match desc.kind {
        LayerKind::Maxpool => Err(FlexError::UnsupportedKind(
            "MAXPOOL runs on the pooling unit and has no loop nest".into(),
        )),
        k if k.is_mmm() => Ok(LoopNest {
            dataflow: Dataflow::Oxk,
            spatial: [l(LoopDim::Ox, ARRAY_DIM), l(LoopDim::K, ARRAY_DIM)],
            temporal: vec![
                l(LoopDim::Oy, desc.oy),
                l(LoopDim::Fy, desc.fy),
                l(LoopDim::Fx, desc.fx),
                l(LoopDim::C, desc.c),
                l(LoopDim::OxTiles, desc.ox.div_ceil(ARRAY_DIM)),
                l(LoopDim::KTiles, k_tiles),
            ],
        }),
        _ => Ok(LoopNest {
            dataflow: Dataflow::Ck,
            spatial: [l(LoopDim::C, ARRAY_DIM), l(LoopDim::K, ARRAY_DIM)],
            temporal: vec![
                l(LoopDim::CTiles, desc.c.div_ceil(ARRAY_DIM)),
                l(LoopDim::KTiles, k_tiles),
                l(LoopDim::Batch, desc.batch),
            ],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_maps_to_oxk() {
        let n = derive_loop_nest(&LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3)).unwrap();
        assert_eq!(n.dataflow, Dataflow::Oxk);
        assert_eq!(n.spatial, [l(LoopDim::Ox, 8), l(LoopDim::K, 8)]);
        let dims: Vec<_> = n.temporal.iter().map(|l| l.dim).collect();
        assert_eq!(
            dims,
            [LoopDim::Oy, LoopDim::Fy, LoopDim::Fx, LoopDim::C, LoopDim::OxTiles, LoopDim::KTiles]
        );
    }

    #[test]
    fn dense_and_svm_map_to_ck() {
        let n = derive_loop_nest(&LayerDescriptor::dense(100, 20, 16)).unwrap();
        assert_eq!(n.spatial, [l(LoopDim::C, 8), l(LoopDim::K, 8)]);
        assert_eq!(n.temporal[0], l(LoopDim::CTiles, 13));
        assert_eq!(n.temporal[2], l(LoopDim::Batch, 16));
        let s = derive_loop_nest(&LayerDescriptor::svm_norm(64, 8, 1)).unwrap();
        assert_eq!(s.dataflow, Dataflow::Ck);
    }

    #[test]
    fn maxpool_has_no_nest() {
        assert!(matches!(
            derive_loop_nest(&LayerDescriptor::maxpool(4, 2, 2, 2)),
            Err(FlexError::UnsupportedKind(_))
        ));
    }

    #[test]
    fn spatial_factors_are_fixed() {
        for (c, k, ox) in [(1, 1, 1), (3, 70, 5), (300, 9, 129)] {
            let n = derive_loop_nest(&LayerDescriptor::conv2d(c, k, ox, 2, 1, 1)).unwrap();
            assert!(n.spatial.iter().all(|s| s.bound == 8));
        }
    }
}
