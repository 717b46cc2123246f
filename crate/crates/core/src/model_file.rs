//! Binary model container.
//!
//! All integers are little-endian.
//!
//! ```text
//! "SCMB"  u16 version
//! u8 encoding tag, u8 encoding param
//! u8 mechanism source, f64 lasso alpha
//! u32 d_enc, u32 outputs
//! i32 mechanism weights (d_enc × outputs, row-major), i32 intercepts
//! u32 layer count
//! per layer:
//!   u8 activation, u32 nodes, u32 fan-in
//!   u64 weight words, node-major (ceil(fan_in / 64) per node)
//!   u8 lambda shift per node
//!   i32 bias per node
//!   i32 readout weights, node-major
//! optional sections, each `u8 tag` + payload, ended by tag 0:
//!   2 normalization: u32 features, f64 min[], f64 max[]
//!   1 training precision: f64 mechanism weights, intercepts, then per node
//!     f64 bias and f64 readout weights
//! u32 CRC-32 of everything above
//! ```

use crate::data::Normalization;
use crate::encoding::{BitVec, EncodingSpec};
use crate::error::{Result, ScmError};
use crate::mechanism::{MechanismModel, MechanismSource};
use crate::numerics::{FixedQ7_25, Matrix};
use crate::scm::{ActivationKind, Layer, ScmModel, ScmNode};

pub const MAGIC: &[u8; 4] = b"SCMB";
pub const VERSION: u16 = 1;

const SECTION_END: u8 = 0;
const SECTION_FLOAT: u8 = 1;
const SECTION_NORMALIZATION: u8 = 2;

pub fn save(model: &ScmModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let enc = model.encoding();
    w.u8(enc.tag());
    w.u8(enc.param());
    let mech = model.mechanism();
    let (source_tag, alpha) = match mech.source() {
        MechanismSource::Lasso { alpha } => (0, alpha),
        MechanismSource::External => (1, 0.0),
        MechanismSource::Disabled => (2, 0.0),
    };
    w.u8(source_tag);
    w.f64(alpha);
    w.u32(mech.d_enc() as u32);
    w.u32(mech.outputs() as u32);
    mech.weights_q().iter().for_each(|v| w.i32(v.raw()));
    mech.intercepts_q().iter().for_each(|v| w.i32(v.raw()));

    w.u32(model.layers().len() as u32);
    for layer in model.layers() {
        w.u8(layer.activation.tag());
        w.u32(layer.nodes.len() as u32);
        w.u32(layer.fan_in() as u32);
        for node in &layer.nodes {
            node.weights().words().iter().for_each(|&word| w.u64(word));
        }
        layer.nodes.iter().for_each(|n| w.u8(n.lambda_shift()));
        layer.nodes.iter().for_each(|n| w.i32(n.bias_q().raw()));
        for node in &layer.nodes {
            node.beta_q().iter().for_each(|b| w.i32(b.raw()));
        }
    }

    if let Some(norm) = model.normalization() {
        w.u8(SECTION_NORMALIZATION);
        w.u32(norm.features() as u32);
        norm.min().iter().for_each(|&v| w.f64(v));
        norm.max().iter().for_each(|&v| w.f64(v));
    }
    if model.is_full_precision() {
        w.u8(SECTION_FLOAT);
        mech.weights().as_slice().iter().for_each(|&v| w.f64(v));
        mech.intercepts().iter().for_each(|&v| w.f64(v));
        for node in model.layers().iter().flat_map(|l| &l.nodes) {
            w.f64(node.bias());
            node.beta().iter().for_each(|&v| w.f64(v));
        }
    }
    w.u8(SECTION_END);
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

struct RawLayer {
    activation: ActivationKind,
    weights: Vec<BitVec>,
    lambdas: Vec<u8>,
    biases: Vec<FixedQ7_25>,
    betas: Vec<Vec<FixedQ7_25>>,
}

pub fn load(bytes: &[u8]) -> Result<ScmModel> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ScmError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(ScmError::Malformed("file ends inside the header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ScmError::UnsupportedVersion(version));
    }
    if bytes.len() < 10 {
        return Err(ScmError::Malformed("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ScmError::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 6 };
    let encoding = EncodingSpec::from_tag(r.u8()?, r.u8()?)?;
    let source_tag = r.u8()?;
    let alpha = r.f64()?;
    let source = match source_tag {
        0 => MechanismSource::Lasso { alpha },
        1 => MechanismSource::External,
        2 => MechanismSource::Disabled,
        t => return Err(ScmError::Malformed(format!("unknown mechanism source {t}"))),
    };
    let d_enc = r.len()?;
    let m = r.len()?;
    let weights_q = r.fixed_vec(d_enc.checked_mul(m).ok_or_else(too_large)?)?;
    let intercepts_q = r.fixed_vec(m)?;

    let layer_count = r.len()?;
    let mut raw_layers = Vec::new();
    for _ in 0..layer_count {
        let activation = ActivationKind::from_tag(r.u8()?)?;
        let nodes = r.len()?;
        let fan_in = r.len()?;
        let words_per_node = fan_in.div_ceil(64);
        let mut weights = Vec::new();
        for _ in 0..nodes {
            let words = (0..words_per_node)
                .map(|_| r.u64())
                .collect::<Result<Vec<_>>>()?;
            let bits = BitVec::from_words(fan_in, words.clone())?;
            if bits.words() != words.as_slice() {
                return Err(ScmError::Malformed(
                    "padding bits set in a weight word".into(),
                ));
            }
            weights.push(bits);
        }
        let lambdas = r.take(nodes)?.to_vec();
        let biases = r.fixed_vec(nodes)?;
        let betas = (0..nodes)
            .map(|_| r.fixed_vec(m))
            .collect::<Result<Vec<_>>>()?;
        raw_layers.push(RawLayer {
            activation,
            weights,
            lambdas,
            biases,
            betas,
        });
    }

    let mut normalization = None;
    let mut float_section = None;
    let mut last_tag = None;
    loop {
        let tag = r.u8()?;
        if tag == SECTION_END {
            break;
        }
        // Sections appear at most once, in descending tag order.
        if last_tag.is_some_and(|t| tag >= t) {
            return Err(ScmError::Malformed(format!("section {tag} out of order")));
        }
        last_tag = Some(tag);
        match tag {
            SECTION_NORMALIZATION => {
                let n = r.len()?;
                let min = r.f64_vec(n)?;
                let max = r.f64_vec(n)?;
                normalization = Some(Normalization::from_parts(min, max).map_err(malformed)?);
            }
            SECTION_FLOAT => {
                let weights = r.f64_vec(d_enc * m)?;
                let intercepts = r.f64_vec(m)?;
                let mut nodes = Vec::new();
                for layer in &raw_layers {
                    for _ in 0..layer.weights.len() {
                        nodes.push((r.f64()?, r.f64_vec(m)?));
                    }
                }
                float_section = Some((weights, intercepts, nodes));
            }
            t => return Err(ScmError::Malformed(format!("unknown section {t}"))),
        }
    }
    if r.pos != body.len() {
        return Err(ScmError::Malformed(
            "trailing bytes after the last section".into(),
        ));
    }

    let full_precision = float_section.is_some();
    let (mechanism, layers) = match float_section {
        None => {
            let mechanism =
                MechanismModel::from_quantized(d_enc, m, weights_q, intercepts_q, source)?;
            let layers = raw_layers
                .into_iter()
                .map(|l| {
                    let nodes = l
                        .weights
                        .into_iter()
                        .zip(l.lambdas)
                        .zip(l.biases)
                        .zip(l.betas)
                        .map(|(((w, lam), b), beta)| ScmNode::from_quantized(w, lam, b, beta))
                        .collect::<Result<_>>()?;
                    Ok(Layer {
                        activation: l.activation,
                        nodes,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (mechanism, layers)
        }
        Some((weights, intercepts, float_nodes)) => {
            let weights = Matrix::from_vec(d_enc, m, weights).map_err(malformed)?;
            let mechanism =
                MechanismModel::from_parts(weights, intercepts, weights_q, intercepts_q, source)?;
            let mut float_nodes = float_nodes.into_iter();
            let mut layers = Vec::new();
            for l in raw_layers {
                let mut nodes = Vec::new();
                for (((w, lam), b_q), beta_q) in l
                    .weights
                    .into_iter()
                    .zip(l.lambdas)
                    .zip(l.biases)
                    .zip(l.betas)
                {
                    let (bias, beta) = float_nodes.next().expect("one float entry per node");
                    let node = ScmNode::new(w, lam, bias, beta).map_err(malformed)?;
                    if node.bias_q() != b_q || node.beta_q() != beta_q.as_slice() {
                        return Err(ScmError::Malformed(
                            "node fixed-point words disagree with their real values".into(),
                        ));
                    }
                    nodes.push(node);
                }
                layers.push(Layer {
                    activation: l.activation,
                    nodes,
                });
            }
            (mechanism, layers)
        }
    };
    ScmModel::new(encoding, mechanism, layers, normalization, full_precision).map_err(malformed)
}

pub fn save_to_path(model: &ScmModel, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, save(model))?;
    Ok(())
}

pub fn load_from_path(path: impl AsRef<std::path::Path>) -> Result<ScmModel> {
    load(&std::fs::read(path)?)
}

fn malformed(e: ScmError) -> ScmError {
    match e {
        ScmError::InvalidInput(msg) => ScmError::Malformed(msg),
        other => other,
    }
}

fn too_large() -> ScmError {
    ScmError::Malformed("declared size is too large".into())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                ScmError::Malformed(format!("unexpected end of data at byte {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    /// A count, rejected early if the remaining bytes cannot possibly hold it.
    fn len(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.buf.len() * 8 {
            return Err(too_large());
        }
        Ok(n)
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn fixed_vec(&mut self, n: usize) -> Result<Vec<FixedQ7_25>> {
        if n.saturating_mul(4) > self.buf.len() - self.pos {
            return Err(too_large());
        }
        (0..n)
            .map(|_| self.i32().map(FixedQ7_25::from_raw))
            .collect()
    }
    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(too_large());
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::ActivationKind;

    fn sample_model(full: bool) -> ScmModel {
        let enc = EncodingSpec::Scheme1 { places: 1 };
        let d_enc = 2 * enc.bits_per_input();
        let mut weights = Matrix::zeros(d_enc, 2);
        for (i, v) in (0..d_enc * 2).zip([0.1, -0.3, 0.017, 2.5].iter().cycle()) {
            weights[(i / 2, i % 2)] = *v * (i as f64 + 1.0) / 7.0;
        }
        let mech = MechanismModel::external(weights, vec![0.5, -0.25]).unwrap();
        let first = (0..3)
            .map(|k| {
                let w = BitVec::from_bools(
                    &(0..d_enc).map(|i| (i * 7 + k) % 3 == 0).collect::<Vec<_>>(),
                );
                ScmNode::new(
                    w,
                    k as u8,
                    0.125 * k as f64 - 0.1,
                    vec![0.3 / (k as f64 + 1.0), -1.7],
                )
                .unwrap()
            })
            .collect();
        let second = vec![ScmNode::new(
            BitVec::parse("101").unwrap(),
            7,
            -0.5,
            vec![1e-3, 2.0 / 3.0],
        )
        .unwrap()];
        let layers = vec![
            Layer {
                activation: ActivationKind::SignPaper,
                nodes: first,
            },
            Layer {
                activation: ActivationKind::StepPaper,
                nodes: second,
            },
        ];
        let norm = Normalization::from_parts(vec![-5.12, 0.0], vec![5.12, 3.5]).unwrap();
        let model = ScmModel::new(enc, mech, layers, Some(norm), true).unwrap();
        if full {
            model
        } else {
            model.to_quantized_only().unwrap()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for full in [true, false] {
            let model = sample_model(full);
            let bytes = save(&model);
            let back = load(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(save(&back), bytes);
        }
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = save(&sample_model(true));
        for cut in [1, 4, 17, bytes.len() / 2] {
            let err = load(&bytes[..bytes.len() - cut]).unwrap_err();
            assert!(matches!(err, ScmError::Checksum { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn header_checks_precede_checksum() {
        let mut bytes = save(&sample_model(false));
        bytes[4] ^= 0x02;
        assert!(matches!(load(&bytes), Err(ScmError::UnsupportedVersion(3))));
        bytes[0] = b'X';
        assert!(matches!(load(&bytes), Err(ScmError::BadMagic)));
        assert!(matches!(load(b"SC"), Err(ScmError::BadMagic)));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let bytes = save(&sample_model(true));
        for pos in [6, 20, bytes.len() - 5] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            assert!(matches!(load(&b), Err(ScmError::Checksum { .. })));
        }
    }

    #[test]
    fn tampered_float_section_is_rejected() {
        let model = sample_model(true);
        let mut bytes = save(&model);
        // Change the last node's last readout weight in the float section.
        let end = bytes.len() - 5;
        let v = f64::from_le_bytes(bytes[end - 8..end].try_into().unwrap());
        bytes[end - 8..end].copy_from_slice(&(v + 0.5).to_le_bytes());
        let body = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body]);
        bytes[body..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(load(&bytes), Err(ScmError::Malformed(_))));
    }
}
