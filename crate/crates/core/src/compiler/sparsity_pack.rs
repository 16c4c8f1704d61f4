use crate::ir::sparsity::{SparsityIndexMap, BLOCK_SIZE};

pub fn words_per_block(c: usize) -> usize {
    c.div_ceil(32)
}

/// One bit per input channel, little-endian within 32-bit words; block `b`
/// starts at word `b * ceil(C / 32)`.
pub fn pack_sparsity_indices(map: &SparsityIndexMap) -> Vec<u32> {
    let wpb = words_per_block(map.channels());
    let mut words = vec![0u32; map.blocks() * wpb];
    for (b, row) in map.bits.iter().enumerate() {
        for (c, &pruned) in row.iter().enumerate() {
            if pruned {
                words[b * wpb + c / 32] |= 1 << (c % 32);
            }
        }
    }
    words
}

pub fn unpack_sparsity_indices(words: &[u32], blocks: usize, c: usize) -> SparsityIndexMap {
    let wpb = words_per_block(c);
    let bits = (0..blocks)
        .map(|b| (0..c).map(|ch| words[b * wpb + ch / 32] >> (ch % 32) & 1 == 1).collect())
        .collect();
    SparsityIndexMap {
        block_size: BLOCK_SIZE,
        bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn packing_examples() {
        let m = SparsityIndexMap::uniform(8, 32, &(0..16).collect::<Vec<_>>());
        assert_eq!(pack_sparsity_indices(&m), vec![0x0000_FFFF]);
        assert_eq!(pack_sparsity_indices(&SparsityIndexMap::dense(16, 40)), vec![0; 4]);
        let all = SparsityIndexMap::uniform(8, 40, &(0..40).collect::<Vec<_>>());
        let w = pack_sparsity_indices(&all);
        assert_eq!(w, vec![0xFFFF_FFFF, 0x0000_00FF]);
    }

    proptest! {
        #[test]
        fn packing_is_invertible(
            bits in (1usize..5, 1usize..70).prop_flat_map(|(b, c)| {
                prop::collection::vec(prop::collection::vec(any::<bool>(), c), b)
            })
        ) {
            let m = SparsityIndexMap { block_size: BLOCK_SIZE, bits };
            let w = pack_sparsity_indices(&m);
            prop_assert_eq!(w.len(), m.blocks() * words_per_block(m.channels()));
            prop_assert_eq!(unpack_sparsity_indices(&w, m.blocks(), m.channels()), m);
        }
    }
}
