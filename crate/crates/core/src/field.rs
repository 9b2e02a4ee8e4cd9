//! Sine-activated radiance field `(x, d) → (color, σ)`.
//!
//! Trunk: `layers` dense layers over the raw position, each followed by
//! `sin`. The first layer multiplies its pre-activation by the first-layer
//! frequency; deeper layers use frequency 1. Density is read from the last
//! trunk layer through softplus, so it cannot depend on the view direction.
//! Color comes from one extra dense layer over `[trunk, direction]` with a
//! sigmoid.
//!
//! Parameters live in one flat vector, in this order per layer: weight
//! (`in × out`, row-major) then bias (`out`). Layers are the trunk layers,
//! then the density head, then the color head.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};

pub const POSITION_DIM: usize = 3;
pub const DIRECTION_DIM: usize = 3;
pub const COLOR_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    /// Frequency `ω₀` applied to the first layer.
    pub first_layer_frequency: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { layers: 8, hidden_dim: 128, first_layer_frequency: 30.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid field config: {0}")]
    Config(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.layers < 2 {
            return Err(FieldError::Config(format!("layers must be >= 2, got {}", self.layers)));
        }
        if self.hidden_dim < 1 {
            return Err(FieldError::Config("hidden_dim must be >= 1".into()));
        }
        if !(self.first_layer_frequency.is_finite() && self.first_layer_frequency > 0.0) {
            return Err(FieldError::Config("first_layer_frequency must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let h = self.hidden_dim;
        let mut shapes = vec![(POSITION_DIM, h)];
        shapes.extend(std::iter::repeat_n((h, h), self.layers - 1));
        shapes.push((h, 1));
        shapes.push((h + DIRECTION_DIM, COLOR_CHANNELS));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField {
    pub config: FieldConfig,
    pub params: Vec<f64>,
}

/// Tape handles for every layer of a field.
#[derive(Clone, Debug)]
pub struct FieldVars {
    pub layers: Vec<(Var, Var)>,
}

impl RadianceField {
    /// SIREN initialization, deterministic in `seed`.
    ///
    /// First layer weights ~ U(±1/fan_in); later layers ~ U(±√(6/fan_in)),
    /// the hidden-layer bound with frequency 1. Biases ~ U(±1/√fan_in).
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self, FieldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(config.parameter_count());
        for (k, (fan_in, fan_out)) in config.layer_shapes().into_iter().enumerate() {
            let bound = if k == 0 { 1.0 / fan_in as f64 } else { (6.0 / fan_in as f64).sqrt() };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            let bias_bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_out {
                params.push(rng.random_range(-bias_bound..bias_bound));
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: FieldConfig, params: Vec<f64>) -> Result<Self, FieldError> {
        config.validate()?;
        if params.len() != config.parameter_count() {
            return Err(FieldError::Config(format!(
                "expected {} parameters, got {}",
                config.parameter_count(),
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let span = LayerSpan {
                    fan_in,
                    fan_out,
                    weight_offset: offset,
                    bias_offset: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                span
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Order-sensitive hash of the exact parameter bits.
    pub fn checksum(&self) -> u64 {
        self.params.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3)
        })
    }

    /// Registers every layer on `tape`, as parameters or constants.
    pub fn register(&self, tape: &mut Tape, learnable: bool) -> FieldVars {
        let layers = self
            .spans()
            .into_iter()
            .map(|s| {
                let w = Tensor::from_vec(
                    s.fan_in,
                    s.fan_out,
                    self.params[s.weight_offset..s.bias_offset].to_vec(),
                );
                let b = Tensor::from_vec(
                    1,
                    s.fan_out,
                    self.params[s.bias_offset..s.bias_offset + s.fan_out].to_vec(),
                );
                if learnable {
                    (tape.param(w), tape.param(b))
                } else {
                    (tape.constant(w), tape.constant(b))
                }
            })
            .collect();
        FieldVars { layers }
    }

    /// Records the network on `tape`. `positions` and `directions` are `n×3`;
    /// directions must be unit length. Returns `(density n×1, color n×3)`.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &FieldVars, positions: Var, directions: Var) -> (Var, Var) {
        let trunk = self.config.layers;
        let mut h = positions;
        for (k, &(w, b)) in vars.layers[..trunk].iter().enumerate() {
            let z = tape.linear(h, w, b);
            let freq = if k == 0 { self.config.first_layer_frequency } else { 1.0 };
            h = tape.sin(z, freq);
        }
        let (wd, bd) = vars.layers[trunk];
        let raw_density = tape.linear(h, wd, bd);
        let density = tape.softplus(raw_density);
        let (wc, bc) = vars.layers[trunk + 1];
        let features = tape.concat_cols(h, directions);
        let raw_color = tape.linear(features, wc, bc);
        let color = tape.sigmoid(raw_color);
        (density, color)
    }

    /// Batched evaluation without gradient tracking.
    pub fn eval_batch(&self, positions: &Tensor, directions: &Tensor) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let p = tape.constant(positions.clone());
        let d = tape.constant(directions.clone());
        let (density, color) = self.forward_on_tape(&mut tape, &vars, p, d);
        (tape.value(color).clone(), tape.value(density).clone())
    }

    /// `(color, density)` at one point for a unit view direction.
    pub fn eval(&self, position: &Vector3<f64>, direction: &Vector3<f64>) -> (Vector3<f64>, f64) {
        let p = Tensor::from_rows(&[[position.x, position.y, position.z]]);
        let d = Tensor::from_rows(&[[direction.x, direction.y, direction.z]]);
        let (color, density) = self.eval_batch(&p, &d);
        (Vector3::new(color.data[0], color.data[1], color.data[2]), density.data[0])
    }
}

pub fn eval_field(field: &RadianceField, position: &Vector3<f64>, direction: &Vector3<f64>) -> (Vector3<f64>, f64) {
    field.eval(position, direction)
}

/// Checkpoint layout, all little-endian:
///
/// ```text
/// offset  size  field
/// 0       8     magic "PFRFCKPT"
/// 8       4     format version (u32, = 1)
/// 12      4     layers (u32)
/// 16      4     hidden_dim (u32)
/// 20      4     reserved (u32, = 0)
/// 24      8     first_layer_frequency (f64)
/// 32      8     parameter count (u64)
/// 40      8·n   parameters (f64)
/// ```
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PFRFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

impl RadianceField {
    pub fn write_checkpoint(&self, mut out: impl Write) -> Result<(), FieldError> {
        let mut buf = Vec::with_capacity(40 + 8 * self.params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.config.layers as u32).to_le_bytes());
        buf.extend_from_slice(&(self.config.hidden_dim as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&self.config.first_layer_frequency.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint(mut input: impl Read) -> Result<Self, FieldError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 40 {
            return Err(FieldError::Format(format!("header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(FieldError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != CHECKPOINT_VERSION {
            return Err(FieldError::Format(format!("unsupported version {version}")));
        }
        let config = FieldConfig {
            layers: u32_at(12) as usize,
            hidden_dim: u32_at(16) as usize,
            first_layer_frequency: f64::from_le_bytes(bytes[24..32].try_into().unwrap()),
        };
        config.validate()?;
        let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
        if count != config.parameter_count() {
            return Err(FieldError::Format(format!(
                "parameter count {count} does not match config ({})",
                config.parameter_count()
            )));
        }
        let body = &bytes[40..];
        if body.len() != 8 * count {
            return Err(FieldError::Format(format!(
                "expected {} parameter bytes, found {}",
                8 * count,
                body.len()
            )));
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), FieldError> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, FieldError> {
        Self::read_checkpoint(std::fs::File::open(path)?)
    }
}
