//! Line-oriented text form of a model, for inspection and hand editing.
//!
//! Real values use Rust's shortest round-trip formatting and fixed-point
//! words are written as raw `i32`, so `import(export(m)) == m` exactly.

use std::fmt::Write;
use std::str::{FromStr, SplitWhitespace};

use scm_core::data::Normalization;
use scm_core::encoding::{BitVec, EncodingSpec};
use scm_core::mechanism::{MechanismModel, MechanismSource};
use scm_core::numerics::{FixedQ7_25, Matrix};
use scm_core::scm::{ActivationKind, Layer, ScmModel, ScmNode};
use scm_core::{Result, ScmError};

const HEADER: &str = "scm-text 1";

pub fn export(model: &ScmModel) -> String {
    let mut s = String::new();
    let full = model.is_full_precision();
    let mech = model.mechanism();
    let m = mech.outputs();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "encoding {}", model.encoding()).unwrap();
    match mech.source() {
        MechanismSource::Lasso { alpha } => writeln!(s, "source lasso {alpha}"),
        MechanismSource::External => writeln!(s, "source external"),
        MechanismSource::Disabled => writeln!(s, "source disabled"),
    }
    .unwrap();
    writeln!(s, "shape {} {}", mech.d_enc(), m).unwrap();
    writeln!(s, "precision {}", if full { "full" } else { "fixed" }).unwrap();
    if let Some(norm) = model.normalization() {
        writeln!(s, "normalization_min{}", join(norm.min())).unwrap();
        writeln!(s, "normalization_max{}", join(norm.max())).unwrap();
    }
    for row in mech.weights_q().chunks(m.max(1)).take(mech.d_enc()) {
        writeln!(s, "mechanism_q{}", join_q(row)).unwrap();
    }
    writeln!(s, "intercepts_q{}", join_q(mech.intercepts_q())).unwrap();
    if full {
        for r in 0..mech.d_enc() {
            writeln!(s, "mechanism{}", join(mech.weights().row(r))).unwrap();
        }
        writeln!(s, "intercepts{}", join(mech.intercepts())).unwrap();
    }
    writeln!(s, "layers {}", model.layers().len()).unwrap();
    for layer in model.layers() {
        writeln!(s, "layer {} {}", layer.activation, layer.nodes.len()).unwrap();
        for node in &layer.nodes {
            writeln!(
                s,
                "node {} {} {}",
                node.lambda_shift(),
                node.bias_q().raw(),
                node.weights()
            )
            .unwrap();
            writeln!(s, "beta_q{}", join_q(node.beta_q())).unwrap();
            if full {
                writeln!(s, "bias {}", node.bias()).unwrap();
                writeln!(s, "beta{}", join(node.beta())).unwrap();
            }
        }
    }
    s
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!(" {v}")).collect()
}

fn join_q(values: &[FixedQ7_25]) -> String {
    values.iter().map(|v| format!(" {}", v.raw())).collect()
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: u64,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> ScmError {
        ScmError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-blank line, which must start with `key`.
    fn expect(&mut self, key: &str) -> Result<SplitWhitespace<'a>> {
        let mut tokens = self.next_tokens()?;
        match tokens.next() {
            Some(k) if k == key => Ok(tokens),
            Some(k) => Err(self.err(format!("expected `{key}`, found `{k}`"))),
            None => unreachable!("blank lines are skipped"),
        }
    }

    fn peek_is(&self, key: &str) -> bool {
        self.iter
            .clone()
            .find(|(_, l)| !l.trim().is_empty())
            .is_some_and(|(_, l)| l.split_whitespace().next() == Some(key))
    }

    fn next_tokens(&mut self) -> Result<SplitWhitespace<'a>> {
        for (i, l) in self.iter.by_ref() {
            self.line = i as u64 + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace());
            }
        }
        Err(self.err("unexpected end of text"))
    }

    fn values<T: FromStr>(&self, tokens: SplitWhitespace<'_>, count: usize) -> Result<Vec<T>> {
        let out = tokens
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| self.err(format!("cannot parse `{t}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        if out.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", out.len())));
        }
        Ok(out)
    }

    fn fixed(&self, tokens: SplitWhitespace<'_>, count: usize) -> Result<Vec<FixedQ7_25>> {
        Ok(self
            .values::<i32>(tokens, count)?
            .into_iter()
            .map(FixedQ7_25::from_raw)
            .collect())
    }

    fn one<T: FromStr>(&self, tokens: SplitWhitespace<'_>) -> Result<T> {
        Ok(self.values::<T>(tokens, 1)?.remove(0))
    }
}

pub fn import(text: &str) -> Result<ScmModel> {
    let mut p = Lines::new(text);
    let header = p.next_tokens()?.collect::<Vec<_>>().join(" ");
    if header != HEADER {
        return Err(p.err(format!("expected `{HEADER}` header")));
    }
    let encoding = {
        let t = p.expect("encoding")?;
        let s: String = p.one(t)?;
        s.parse::<EncodingSpec>()
            .map_err(|e| p.err(e.to_string()))?
    };
    let source = {
        let mut t = p.expect("source")?;
        match t.next() {
            Some("lasso") => MechanismSource::Lasso { alpha: p.one(t)? },
            Some("external") => MechanismSource::External,
            Some("disabled") => MechanismSource::Disabled,
            other => return Err(p.err(format!("unknown mechanism source {other:?}"))),
        }
    };
    let shape: Vec<usize> = {
        let t = p.expect("shape")?;
        p.values(t, 2)?
    };
    let (d_enc, m) = (shape[0], shape[1]);
    let full = {
        let t = p.expect("precision")?;
        match p.one::<String>(t)?.as_str() {
            "full" => true,
            "fixed" => false,
            other => return Err(p.err(format!("unknown precision `{other}`"))),
        }
    };
    let normalization = if p.peek_is("normalization_min") {
        let t = p.expect("normalization_min")?;
        let min: Vec<f64> = t
            .map(|v| v.parse().map_err(|_| p.err(format!("cannot parse `{v}`"))))
            .collect::<Result<_>>()?;
        let t = p.expect("normalization_max")?;
        let max = p.values(t, min.len())?;
        Some(Normalization::from_parts(min, max)?)
    } else {
        None
    };
    let mut weights_q = Vec::with_capacity(d_enc * m);
    for _ in 0..d_enc {
        let t = p.expect("mechanism_q")?;
        weights_q.extend(p.fixed(t, m)?);
    }
    let intercepts_q = {
        let t = p.expect("intercepts_q")?;
        p.fixed(t, m)?
    };
    let mechanism = if full {
        let mut weights = Vec::with_capacity(d_enc * m);
        for _ in 0..d_enc {
            let t = p.expect("mechanism")?;
            weights.extend(p.values::<f64>(t, m)?);
        }
        let t = p.expect("intercepts")?;
        let intercepts = p.values(t, m)?;
        MechanismModel::from_parts(
            Matrix::from_vec(d_enc, m, weights)?,
            intercepts,
            weights_q,
            intercepts_q,
            source,
        )?
    } else {
        MechanismModel::from_quantized(d_enc, m, weights_q, intercepts_q, source)?
    };

    let layer_count: usize = {
        let t = p.expect("layers")?;
        p.one(t)?
    };
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let mut t = p.expect("layer")?;
        let activation: ActivationKind = t
            .next()
            .ok_or_else(|| p.err("missing activation"))?
            .parse()
            .map_err(|e: ScmError| p.err(e.to_string()))?;
        let count: usize = p.one(t)?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut t = p.expect("node")?;
            let shift: u8 = t
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| p.err("bad lambda shift"))?;
            let bias_q = FixedQ7_25::from_raw(
                t.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| p.err("bad bias"))?,
            );
            let bits: String = p.one(t)?;
            let weights = BitVec::parse(&bits).map_err(|e| p.err(e.to_string()))?;
            let t = p.expect("beta_q")?;
            let beta_q = p.fixed(t, m)?;
            let node = if full {
                let t = p.expect("bias")?;
                let bias: f64 = p.one(t)?;
                let t = p.expect("beta")?;
                let beta = p.values(t, m)?;
                let node = ScmNode::new(weights, shift, bias, beta)?;
                if node.bias_q() != bias_q || node.beta_q() != beta_q.as_slice() {
                    return Err(p.err("node fixed-point words disagree with their real values"));
                }
                node
            } else {
                ScmNode::from_quantized(weights, shift, bias_q, beta_q)?
            };
            nodes.push(node);
        }
        layers.push(Layer { activation, nodes });
    }
    if p.next_tokens().is_ok() {
        return Err(p.err("unexpected trailing content"));
    }
    ScmModel::new(encoding, mechanism, layers, normalization, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use scm_core::data::Normalization;
    use scm_core::model_file;
    use scm_core::scm::{random_model, LayerSpec};

    fn sample() -> ScmModel {
        let layers = [
            LayerSpec {
                max_nodes: 7,
                activation: ActivationKind::SignPaper,
            },
            LayerSpec {
                max_nodes: 3,
                activation: ActivationKind::StepPaper,
            },
        ];
        let mut model =
            random_model(EncodingSpec::Scheme1 { places: 2 }, 2, &layers, 2, 42).unwrap();
        model
            .set_normalization(Some(
                Normalization::from_parts(vec![-5.12, 0.1], vec![5.12, 0.3]).unwrap(),
            ))
            .unwrap();
        model
    }

    #[test]
    fn round_trip_is_exact() {
        for model in [sample(), sample().to_quantized_only().unwrap()] {
            let text = export(&model);
            let back = import(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(model_file::save(&back), model_file::save(&model));
            assert_eq!(export(&back), text);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = export(&sample());
        let broken = text.replacen("shape 38 2", "shape 38 x", 1);
        assert!(matches!(
            import(&broken),
            Err(ScmError::Parse { line: 4, .. })
        ));

        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(import(&truncated), Err(ScmError::Parse { .. })));

        let extra = format!("{text}layer sign 1\n");
        assert!(matches!(import(&extra), Err(ScmError::Parse { .. })));

        assert!(import("scm-text 2\n").is_err());
    }

    #[test]
    fn edited_float_must_match_its_fixed_word() {
        let text = export(&sample());
        let line = text.lines().find(|l| l.starts_with("bias ")).unwrap();
        let edited = text.replacen(line, "bias 0.123456789", 1);
        assert!(import(&edited).is_err());
    }
}
