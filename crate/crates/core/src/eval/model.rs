//! ONNX model loading and single-image BMI inference.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::preprocess::ImageTensor;
use crate::error::{Error, Result};

/// A loaded, optimized regression model taking a 1 x 3 x H x W float input
/// and producing one BMI value. Cheap to share across threads.
#[derive(Clone)]
pub struct BmiModel {
    plan: Arc<TypedRunnableModel>,
    input_shape: [usize; 3],
}

impl std::fmt::Debug for BmiModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BmiModel")
            .field("input_shape", &self.input_shape)
            .finish()
    }
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::CorruptModel(e.to_string())
}

impl BmiModel {
    pub fn load(path: &Path, input_shape: [usize; 3]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, input_shape)
    }

    pub fn from_bytes(bytes: &[u8], input_shape: [usize; 3]) -> Result<Self> {
        let [c, h, w] = input_shape;
        let model = tract_onnx::onnx()
            .model_for_read(&mut std::io::Cursor::new(bytes))
            .map_err(corrupt)?;
        if model.inputs.len() != 1 || model.outputs.len() != 1 {
            return Err(Error::CorruptModel(format!(
                "expected one input and one output, found {} and {}",
                model.inputs.len(),
                model.outputs.len()
            )));
        }
        let fact = InferenceFact::dt_shape(f32::datum_type(), tvec!(1, c, h, w));
        let plan = model
            .with_input_fact(0, fact)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(corrupt)?;
        Ok(Self { plan, input_shape })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn predict(&self, tensor: &ImageTensor) -> Result<f64> {
        if tensor.shape != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.to_vec(),
                actual: tensor.shape.to_vec(),
            });
        }
        let [c, h, w] = self.input_shape;
        let input = tract_ndarray::Array4::from_shape_vec((1, c, h, w), tensor.data.clone())
            .map_err(|e| Error::Inference(e.to_string()))?;
        let outputs = self
            .plan
            .run(tvec!(Tensor::from(input).into_tvalue()))
            .map_err(|e| Error::Inference(e.to_string()))?;
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Inference(e.to_string()))?;
        if view.len() != 1 {
            return Err(Error::Inference(format!("expected a single output, got {}", view.len())));
        }
        let value = *view.iter().next().expect("len 1") as f64;
        if !value.is_finite() {
            return Err(Error::Inference("non-finite prediction".into()));
        }
        Ok(value)
    }
}
