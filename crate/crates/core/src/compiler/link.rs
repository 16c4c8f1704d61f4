use crate::compiler::image::{MemoryImage, Symbol, SymbolRole};
use crate::compiler::sparsity_pack::pack_sparsity_indices;
use crate::compiler::tiling::{layout_weights, tile, weight_l2_bytes};
use crate::compiler::ucode::{emit_ucode, UCODE_BYTES};
use crate::compiler::MemConfig;
use crate::error::{FlexError, Result};
use crate::ir::layer::validate_layer;
use crate::ir::tensor::pack_values;
use crate::ir::workload::Workload;
use crate::oracle::{adapt_input, GoldenBundle};

const L2_ALIGN: usize = 16;

struct L2Alloc {
    next: usize,
    capacity: usize,
    bytes: Vec<u8>,
}

impl L2Alloc {
    fn place(&mut self, name: &str, nbytes: usize, init: Option<&[u8]>) -> Result<usize> {
        let at = self.next.div_ceil(L2_ALIGN) * L2_ALIGN;
        if at + nbytes > self.capacity {
            return Err(FlexError::L2Overflow {
                tensor: name.to_string(),
                needed: at + nbytes,
                capacity: self.capacity,
            });
        }
        self.bytes.resize(at + nbytes, 0);
        if let Some(data) = init {
            self.bytes[at..at + data.len()].copy_from_slice(data);
        }
        self.next = at + nbytes;
        Ok(at)
    }
}

fn symbol(name: String, role: SymbolRole, layer: usize, addr: usize, t: (&[usize], crate::ir::tensor::Precision)) -> Symbol {
    let (shape, precision) = t;
    Symbol {
        name,
        role,
        layer: layer as u16,
        addr: addr as u32,
        bytes: precision.bytes_for(shape.iter().product()) as u32,
        shape: shape.to_vec(),
        precision,
    }
}

/// Places every tensor in L2, tiles and encodes each layer, and runs the
/// oracle over the same chain to produce the golden bundle.
pub fn link_program(w: &Workload, cfg: &MemConfig) -> Result<(MemoryImage, GoldenBundle)> {
    if w.layers.is_empty() {
        let bundle = GoldenBundle {
            name: w.name.clone(),
            inputs: Vec::new(),
            layers: Vec::new(),
            weights: Vec::new(),
            expected_outputs: Vec::new(),
            svm: None,
            decisions: Vec::new(),
        };
        return Ok((MemoryImage::default(), bundle));
    }
    for l in &w.layers {
        validate_layer(l.desc.clone())?;
    }
    w.check_weights()?;
    let mut l2 = L2Alloc {
        next: 0,
        capacity: cfg.l2_bytes,
        bytes: Vec::new(),
    };
    let mut img = MemoryImage::default();

    let first = adapt_input(&w.input, &w.layers[0].desc)?;
    let in_addr = l2.place("input", first.byte_len(), Some(&first.packed_data()))?;
    img.symbols.push(symbol("input".into(), SymbolRole::Input, 0, in_addr, (first.shape(), first.precision())));
    let mut prev = (in_addr, first.precision(), first.len());

    let mut tile_id = 0;
    for (i, spec) in w.layers.iter().enumerate() {
        let d = &spec.desc;
        if prev.1 != d.precision || prev.2 != d.input_shape().iter().product::<usize>() {
            return Err(FlexError::ShapeMismatch(format!(
                "layer {i} ({}) expects {:?} at {}, previous tensor has {} elements at {}",
                d.kind,
                d.input_shape(),
                d.precision,
                prev.2,
                prev.1
            )));
        }
        let w_addr = match &spec.weights {
            Some(t) => {
                let name = format!("w{i}");
                let packed = pack_values(&layout_weights(d, t.data()), d.precision);
                debug_assert_eq!(packed.len(), weight_l2_bytes(d));
                let a = l2.place(&name, packed.len(), Some(&packed))?;
                let mut s = symbol(name, SymbolRole::Weights, i, a, (t.shape(), d.precision));
                s.bytes = packed.len() as u32;
                img.symbols.push(s);
                a
            }
            None => 0,
        };
        let out_shape = d.output_shape();
        let out_p = d.output_precision();
        let name = format!("out{i}");
        let out_bytes = out_p.bytes_for(out_shape.iter().product());
        let out_addr = l2.place(&name, out_bytes, None)?;
        img.symbols.push(symbol(name, SymbolRole::Output, i, out_addr, (&out_shape, out_p)));

        let index_base = img.index_mem.len() * 4;
        if let Some(map) = &d.sparsity {
            img.index_mem.extend(pack_sparsity_indices(map));
            if img.index_mem.len() * 4 > cfg.index_mem_bytes {
                return Err(FlexError::Capacity(format!(
                    "sparsity indices need {} bytes, index memory holds {}",
                    img.index_mem.len() * 4,
                    cfg.index_mem_bytes
                )));
            }
        }

        let mut sched = tile(d, cfg)?;
        sched.rebase(w_addr as u32, prev.0 as u32, out_addr as u32);
        for t in &mut sched.tiles {
            t.dma.layer = i as u16;
        }
        let instrs = emit_ucode(d, &sched, tile_id, index_base)?;
        tile_id += instrs.len();
        img.instructions.extend(instrs.iter().map(|x| x.pack()));
        img.dma.extend(sched.tiles.into_iter().map(|t| t.dma));
        prev = (out_addr, out_p, out_shape.iter().product());
    }
    if img.instructions.len() * UCODE_BYTES > cfg.instr_mem_bytes {
        return Err(FlexError::Capacity(format!(
            "{} instructions need {} bytes, instruction memory holds {}",
            img.instructions.len(),
            img.instructions.len() * UCODE_BYTES,
            cfg.instr_mem_bytes
        )));
    }
    img.l2 = l2.bytes;
    let mut adapted = w.clone();
    adapted.input = first;
    let bundle = GoldenBundle::from_workload(&adapted)?;
    Ok((img, bundle))
}

