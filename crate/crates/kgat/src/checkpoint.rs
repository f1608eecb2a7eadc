//! Line-oriented text checkpoints.
//!
//! ```text
//! KGATv1
//! heads 1
//! use_kg true
//! attributes 2
//! female
//! male
//! vocab 3            (absent for feature projections)
//! <unk>
//! ...
//! gcn relu linear
//! matrix token_embeddings 3 16
//! <row of 16 values>
//! ...
//! end
//! ```
//!
//! Matrices follow in [`ModelParams::named_matrices`] order, then the
//! adversary's. Values are written in shortest round-trip exponent form, so a
//! reload is bit-exact.

use std::fmt::Write as _;

use kgat_core::gcn::{Activation, GcnLayerParams};
use kgat_core::model::{ModelParams, TextEncoder, Vocabulary};
use kgat_core::train::{AdversaryParams, TrainedModel};
use kgat_core::Matrix;

pub const MAGIC: &str = "KGATv1";

#[derive(Debug, thiserror::Error)]
#[error("checkpoint line {line}: {reason}")]
pub struct CheckpointError {
    pub line: usize,
    pub reason: String,
}

pub fn to_string(model: &TrainedModel) -> String {
    let p = &model.params;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "heads {}", p.heads);
    let _ = writeln!(out, "use_kg {}", p.use_kg);
    let _ = writeln!(out, "attributes {}", model.attributes.len());
    for a in &model.attributes {
        let _ = writeln!(out, "{a}");
    }
    if let TextEncoder::Embedding { vocab, .. } = &p.encoder {
        let _ = writeln!(out, "vocab {}", vocab.len());
        for t in vocab.tokens() {
            let _ = writeln!(out, "{t}");
        }
    }
    out.push_str("gcn");
    for l in &p.gcn {
        let _ = write!(out, " {}", l.activation.name());
    }
    out.push('\n');
    let mut matrices: Vec<(String, &Matrix)> = p.named_matrices();
    if let Some(adv) = &model.adversary {
        matrices.extend(adv.named_matrices().into_iter().map(|(n, m)| (n.to_string(), m)));
    }
    for (name, m) in matrices {
        let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out.push_str("end\n");
    out
}

struct Cursor<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError { line: self.line, reason: reason.into() }
    }

    fn peek(&mut self) -> Option<&'a str> {
        self.lines.peek().map(|(_, l)| *l)
    }

    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, CheckpointError> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ if l == key => Ok(""),
            _ => Err(self.err(format!("expected {key:?}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize, CheckpointError> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("invalid {key} count")))
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix, CheckpointError> {
        let head = self.keyed("matrix")?;
        let parts: Vec<&str> = head.split(' ').collect();
        let (rows, cols) = match parts.as_slice() {
            [n, r, c] if *n == name => (
                r.parse::<usize>().map_err(|_| self.err("invalid row count"))?,
                c.parse::<usize>().map_err(|_| self.err("invalid column count"))?,
            ),
            _ => return Err(self.err(format!("expected matrix {name}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let before = data.len();
            for v in l.split_whitespace() {
                let x: f64 = v.parse().map_err(|_| self.err(format!("invalid number {v:?}")))?;
                data.push(x);
            }
            if data.len() - before != cols {
                return Err(self.err(format!("expected {cols} values")));
            }
        }
        Matrix::new(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }
}

pub fn from_str(text: &str) -> Result<TrainedModel, CheckpointError> {
    let mut c = Cursor { lines: text.lines().enumerate().peekable(), line: 0 };
    if c.next()? != MAGIC {
        return Err(c.err(format!("missing {MAGIC} header")));
    }
    let heads = c.count("heads")?;
    let use_kg = match c.keyed("use_kg")? {
        "true" => true,
        "false" => false,
        _ => return Err(c.err("use_kg must be true or false")),
    };
    let n = c.count("attributes")?;
    let attributes = (0..n).map(|_| c.next().map(String::from)).collect::<Result<Vec<_>, _>>()?;

    let mut next = c.next()?;
    let vocab = if let Some(n) = next.strip_prefix("vocab ") {
        let n: usize = n.parse().map_err(|_| c.err("invalid vocab count"))?;
        let tokens = (0..n).map(|_| c.next().map(String::from)).collect::<Result<Vec<_>, _>>()?;
        next = c.next()?;
        Some(Vocabulary::from_tokens(tokens))
    } else {
        None
    };
    let activations = match next.strip_prefix("gcn") {
        Some(rest) => rest
            .split_whitespace()
            .map(|a| Activation::from_name(a).ok_or_else(|| c.err(format!("unknown activation {a:?}"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => return Err(c.err("expected \"gcn\"")),
    };

    let encoder = match vocab {
        Some(vocab) => {
            let table = c.matrix("token_embeddings")?;
            if table.rows() != vocab.len() {
                return Err(c.err("embedding rows do not match the vocabulary"));
            }
            TextEncoder::Embedding { vocab, table }
        }
        None => TextEncoder::Projection { weight: c.matrix("feature_projection")? },
    };
    let gcn = activations
        .into_iter()
        .enumerate()
        .map(|(i, activation)| Ok(GcnLayerParams { weight: c.matrix(&format!("gcn.{i}"))?, activation }))
        .collect::<Result<Vec<_>, CheckpointError>>()?;
    let params = ModelParams {
        encoder,
        gcn,
        w_q: c.matrix("w_q")?,
        w_k: c.matrix("w_k")?,
        w_v: c.matrix("w_v")?,
        heads,
        classifier: c.matrix("classifier")?,
        classifier_bias: c.matrix("classifier_bias")?,
        use_kg,
    };
    let adversary = if c.peek().is_some_and(|l| l.starts_with("matrix ")) {
        Some(AdversaryParams {
            w1: c.matrix("adversary.w1")?,
            b1: c.matrix("adversary.b1")?,
            w2: c.matrix("adversary.w2")?,
            b2: c.matrix("adversary.b2")?,
        })
    } else {
        None
    };
    if c.next()? != "end" {
        return Err(c.err("expected \"end\""));
    }
    Ok(TrainedModel { params, adversary, attributes })
}
