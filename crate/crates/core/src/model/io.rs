use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LinearParams, MlpParams};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const FORMAT: &str = "procfair-model";
const VERSION: u32 = 1;

/// A serializable trained model.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Mlp(MlpParams),
    Linear(LinearParams),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Mlp {
        n_inputs: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
    Linear {
        n_inputs: usize,
        w: Vec<f64>,
        b: f64,
        sensitive_index: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Body,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        let body = match self {
            ModelFile::Mlp(p) => Body::Mlp {
                n_inputs: super::Scorer::n_inputs(p),
                hidden: p.hidden(),
                w1: p.w1().to_vec(),
                b1: p.b1().to_vec(),
                w2: p.w2().to_vec(),
                b2: p.b2(),
            },
            ModelFile::Linear(p) => Body::Linear {
                n_inputs: p.weights().len(),
                w: p.weights().to_vec(),
                b: p.bias(),
                sensitive_index: p.sensitive_index(),
            },
        };
        let env = Envelope { format: FORMAT.into(), version: VERSION, body };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.format != FORMAT {
            return Err(Error::invalid(format!("not a model file (format {:?})", env.format)));
        }
        if env.version != VERSION {
            return Err(Error::invalid(format!("unsupported model version {}", env.version)));
        }
        match env.body {
            Body::Mlp { n_inputs, hidden, w1, b1, w2, b2 } => {
                if w1.len() != hidden * n_inputs || b1.len() != hidden {
                    return Err(Error::Shape(format!(
                        "declared {hidden}x{n_inputs} but W1 has {} entries and b1 {}",
                        w1.len(),
                        b1.len()
                    )));
                }
                Ok(ModelFile::Mlp(MlpParams::from_parts(w1, b1, w2, b2)?))
            }
            Body::Linear { n_inputs, w, b, sensitive_index } => {
                if w.len() != n_inputs {
                    return Err(Error::Shape(format!("declared {n_inputs} inputs but w has {}", w.len())));
                }
                Ok(ModelFile::Linear(LinearParams::new(w, b, sensitive_index)?))
            }
        }
    }
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    write_atomic(path, model.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}
