use crate::gsb::{BiasTable, Codebook, CodebookEntries, CompressedLayer, GainTable, IndexTable};
use crate::kan::{bracket, Bracket, Domain};

use super::model::{DenseLayer, Model, ModelLayer};
use super::plan::MemoryPlan;
use super::LuthamError;

/// Caller-owned activation double buffer. Create once per thread and reuse;
/// the forward pass never grows it. Activations are carried in f64 between
/// layers so the result matches the f64 reference to output precision.
#[derive(Debug, Clone)]
pub struct Workspace {
    front: Vec<f64>,
    back: Vec<f64>,
    /// Edge interpolations performed so far. Each edge evaluation costs
    /// exactly one, whatever the grid size.
    pub interpolations: u64,
}

impl Workspace {
    pub fn new(plan: &MemoryPlan) -> Self {
        let width = plan.max_width as usize;
        Self { front: vec![0.0; width], back: vec![0.0; width], interpolations: 0 }
    }

    pub fn for_model(model: &Model) -> Result<Self, LuthamError> {
        Ok(Self::new(&model.plan()?))
    }

    /// Activations per buffer.
    pub fn capacity(&self) -> usize {
        self.front.len().min(self.back.len())
    }

    pub fn bytes(&self) -> usize {
        (self.front.len() + self.back.len()) * std::mem::size_of::<f64>()
    }
}

#[inline(always)]
fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        a
    } else if frac == 1.0 {
        b
    } else {
        a + frac * (b - a)
    }
}

#[inline(always)]
fn row_lerp(entries: &CodebookEntries, start: usize, frac: f64) -> f64 {
    match entries {
        CodebookEntries::Float(v) => lerp(v[start] as f64, v[start + 1] as f64, frac),
        CodebookEntries::Int8 { codes, params } => {
            let s = params.scale as f64;
            lerp(codes[start] as f64 * s, codes[start + 1] as f64 * s, frac)
        }
    }
}

/// Evaluates one compressed edge: `g * interp(C[k], x) + b`. Int8 codebook
/// entries are dequantized on the fly.
pub fn pli_lookup(codebook: &Codebook, domain: Domain, k: usize, g: f64, b: f64, x: f64) -> Result<f64, LuthamError> {
    if k >= codebook.k {
        return Err(LuthamError::CodebookIndex { index: k, k: codebook.k });
    }
    if !x.is_finite() {
        return Err(LuthamError::NonFiniteInput(x as f32));
    }
    let gs = codebook.grid_size;
    let Bracket { index, frac } = bracket(domain, gs, x);
    Ok(g * row_lerp(&codebook.entries, k * gs + index, frac) + b)
}

fn dense_layer(d: &DenseLayer, x: &[f64], y: &mut [f64]) -> u64 {
    let g = d.grid_size;
    y.fill(0.0);
    for (i, &xi) in x.iter().enumerate() {
        let Bracket { index, frac } = bracket(d.domain, g, xi);
        let row = &d.coefficients[i * d.out_dim * g..(i + 1) * d.out_dim * g];
        for (j, yj) in y.iter_mut().enumerate() {
            let at = j * g + index;
            *yj += lerp(row[at] as f64, row[at + 1] as f64, frac);
        }
    }
    (d.in_dim * d.out_dim) as u64
}

#[inline(always)]
fn gain_of(gains: &GainTable, lut: Option<&[f64; 256]>, e: usize) -> f64 {
    match (gains, lut) {
        (GainTable::Float(v), _) => v[e] as f64,
        (GainTable::LogInt8 { codes, .. }, Some(lut)) => lut[codes[e] as u8 as usize],
        (GainTable::LogInt8 { codes, params }, None) => params.decode(codes[e]),
    }
}

#[inline(always)]
fn bias_of(biases: &BiasTable, e: usize) -> f64 {
    match biases {
        BiasTable::Float(v) => v[e] as f64,
        BiasTable::Int8 { codes, params } => codes[e] as f64 * params.scale as f64,
    }
}

#[inline(always)]
fn index_of(indices: &IndexTable, e: usize) -> usize {
    match indices {
        IndexTable::U16(v) => v[e] as usize,
        IndexTable::U32(v) => v[e] as usize,
    }
}

fn compressed_layer(c: &CompressedLayer, lut: Option<&[f64; 256]>, x: &[f64], y: &mut [f64]) -> u64 {
    let g = c.grid_size;
    y.fill(0.0);
    for (i, &xi) in x.iter().enumerate() {
        let Bracket { index, frac } = bracket(c.domain, g, xi);
        for (j, yj) in y.iter_mut().enumerate() {
            let e = i * c.out_dim + j;
            let k = index_of(&c.indices, e);
            let v = row_lerp(&c.codebook.entries, k * g + index, frac);
            *yj += gain_of(&c.gains, lut, e) * v + bias_of(&c.biases, e);
        }
    }
    (c.in_dim * c.out_dim) as u64
}

/// Batched forward pass into caller buffers. `inputs` holds `batch` rows of
/// `input_dim` values, `outputs` receives `batch` rows of `output_dim`.
/// All checks run before any compute and nothing is allocated.
pub fn compressed_forward_into(
    model: &Model,
    inputs: &[f32],
    outputs: &mut [f32],
    ws: &mut Workspace,
) -> Result<(), LuthamError> {
    if model.is_empty() {
        return Err(LuthamError::Topology { layer: 0, reason: "model has no layers".into() });
    }
    let (n_in, n_out) = (model.input_dim(), model.output_dim());
    let needed = model.max_width();
    if ws.capacity() < needed {
        return Err(LuthamError::WorkspaceTooSmall { needed, available: ws.capacity() });
    }
    if inputs.len() % n_in != 0 {
        return Err(LuthamError::Shape { expected: inputs.len().div_ceil(n_in) * n_in, actual: inputs.len() });
    }
    let batch = inputs.len() / n_in;
    if outputs.len() != batch * n_out {
        return Err(LuthamError::Shape { expected: batch * n_out, actual: outputs.len() });
    }
    if let Some(&bad) = inputs.iter().find(|v| !v.is_finite()) {
        return Err(LuthamError::NonFiniteInput(bad));
    }

    for (x, y) in inputs.chunks_exact(n_in).zip(outputs.chunks_exact_mut(n_out)) {
        ws.front[..n_in].iter_mut().zip(x).for_each(|(a, &b)| *a = b as f64);
        for (l, layer) in model.layers().iter().enumerate() {
            let (a, b) = (layer.in_dim(), layer.out_dim());
            let src = &ws.front[..a];
            let dst = &mut ws.back[..b];
            ws.interpolations += match layer {
                ModelLayer::Dense(d) => dense_layer(d, src, dst),
                ModelLayer::Compressed(c) => compressed_layer(c, model.gain_lut(l), src, dst),
            };
            std::mem::swap(&mut ws.front, &mut ws.back);
        }
        y.iter_mut().zip(&ws.front[..n_out]).for_each(|(a, &b)| *a = b as f32);
    }
    Ok(())
}

/// Allocating convenience wrapper around [`compressed_forward_into`].
pub fn compressed_forward(model: &Model, inputs: &[f32], ws: &mut Workspace) -> Result<Vec<f32>, LuthamError> {
    if model.is_empty() {
        return Err(LuthamError::Topology { layer: 0, reason: "model has no layers".into() });
    }
    let batch = inputs.len() / model.input_dim();
    let mut out = vec![0.0; batch * model.output_dim()];
    compressed_forward_into(model, inputs, &mut out, ws)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsb::{compress_network, CodebookMeta, VqConfig};
    use crate::kan::{eval_spline, SplineGrid};
    use crate::trainer::init_network;

    #[test]
    fn pli_hand_example() {
        let cb = Codebook::from_rows(1, 3, &[-1.0, 0.0, 1.0], CodebookMeta::default()).unwrap();
        assert_eq!(pli_lookup(&cb, Domain::UNIT, 0, 2.0, 1.0, -1.0).unwrap(), -1.0);
        assert!(matches!(pli_lookup(&cb, Domain::UNIT, 1, 1.0, 0.0, 0.0), Err(LuthamError::CodebookIndex { .. })));
    }

    #[test]
    fn pli_matches_spline_with_unit_gain() {
        let row = [0.3, -0.7, 0.1, 0.9, -0.2];
        let cb = Codebook::from_rows(1, 5, &row, CodebookMeta::default()).unwrap();
        let grid = SplineGrid::new(row.iter().map(|&v| v as f32 as f64).collect(), Domain::UNIT).unwrap();
        for n in 0..=40 {
            let x = -1.2 + n as f64 * 0.06;
            let want = eval_spline(&grid, x).unwrap();
            assert_eq!(pli_lookup(&cb, Domain::UNIT, 0, 1.0, 0.0, x).unwrap(), want, "x={x}");
        }
    }

    #[test]
    fn matches_reconstructed_network() {
        let net = init_network(&[3, 5, 2], 7, 0.3, 4).unwrap();
        let model = Model::compressed(compress_network(&net, 4, &VqConfig::default()).unwrap()).unwrap();
        let oracle = model.to_network().unwrap();
        let mut ws = Workspace::for_model(&model).unwrap();
        let inputs: Vec<f32> = (0..30).map(|n| ((n * 37 % 23) as f32 / 11.0) - 1.0).collect();
        let out = compressed_forward(&model, &inputs, &mut ws).unwrap();
        for (x, y) in inputs.chunks(3).zip(out.chunks(2)) {
            let xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let want = oracle.forward(&xs).unwrap();
            for (a, b) in y.iter().zip(&want) {
                assert!((*a as f64 - b).abs() < 1e-5);
            }
        }
        assert_eq!(ws.interpolations, 10 * (15 + 10));
    }

    #[test]
    fn empty_batch_and_contract_errors() {
        let model = Model::dense(&init_network(&[2, 4, 1], 5, 0.3, 2).unwrap());
        let mut ws = Workspace::for_model(&model).unwrap();
        assert!(compressed_forward(&model, &[], &mut ws).unwrap().is_empty());
        assert_eq!(ws.interpolations, 0);
        let mut out = [0.0f32; 1];
        assert!(matches!(
            compressed_forward_into(&model, &[0.1, 0.2, 0.3], &mut out, &mut ws),
            Err(LuthamError::Shape { .. })
        ));
        let mut small = Workspace::new(&MemoryPlan { max_width: 2, ..Default::default() });
        assert_eq!(
            compressed_forward_into(&model, &[0.1, 0.2], &mut out, &mut small),
            Err(LuthamError::WorkspaceTooSmall { needed: 4, available: 2 })
        );
    }
}
