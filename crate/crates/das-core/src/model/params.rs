//! Trainable parameters as a flat, named, loss-free vector.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream;

use super::arch::{ArchitectureConfig, NetPlan, Op, TensorSpec};

/// All trainable tensors of one network, stored contiguously. Cheap to
/// combine element-wise; the shared plan pins the architecture so mixing
/// incompatible parameter sets fails loudly.
#[derive(Debug, Clone)]
pub struct ModelParams {
    plan: Arc<NetPlan>,
    data: Vec<f64>,
}

impl ModelParams {
    /// Random initialization: He-normal convolution weights, zero biases,
    /// small dense head. Deterministic in `seed`.
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        let plan = Arc::new(NetPlan::build(arch)?);
        let mut data = vec![0.0f64; plan.param_count];
        let mut rng = stream(seed);
        for op in &plan.ops {
            match op {
                Op::Conv { shape, w_off, .. } => {
                    let fan_in = (shape.in_c * shape.kernel * shape.kernel) as f64;
                    let std = (2.0 / fan_in).sqrt();
                    for v in data[*w_off..*w_off + shape.weight_len()].iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = std * z;
                    }
                }
                Op::Dense { in_c, w_off, .. } => {
                    let std = 1.0 / (*in_c as f64).sqrt();
                    for v in data[*w_off..*w_off + *in_c].iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = std * z;
                    }
                }
                _ => {}
            }
        }
        Ok(ModelParams { plan, data })
    }

    /// All-zero parameters (useful as a gradient accumulator).
    pub fn zeros(arch: &ArchitectureConfig) -> Result<Self> {
        let plan = Arc::new(NetPlan::build(arch)?);
        let data = vec![0.0f64; plan.param_count];
        Ok(ModelParams { plan, data })
    }

    pub(crate) fn zeros_like(&self) -> Self {
        ModelParams {
            plan: Arc::clone(&self.plan),
            data: vec![0.0f64; self.data.len()],
        }
    }

    pub(crate) fn with_data(plan: Arc<NetPlan>, data: Vec<f64>) -> Self {
        debug_assert_eq!(plan.param_count, data.len());
        ModelParams { plan, data }
    }

    pub fn plan(&self) -> &Arc<NetPlan> {
        &self.plan
    }

    pub fn descriptor(&self) -> &str {
        &self.plan.descriptor
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Named tensor layout.
    pub fn tensor_specs(&self) -> &[TensorSpec] {
        &self.plan.tensors
    }

    /// View one named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.plan
            .tensor(name)
            .map(|t| &self.data[t.offset..t.offset + t.len])
    }

    /// Flatten to a plain vector (lossless; see [`Self::from_flat`]).
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Restore from a flat vector produced by [`Self::flatten`].
    pub fn from_flat(arch: &ArchitectureConfig, data: Vec<f64>) -> Result<Self> {
        let plan = Arc::new(NetPlan::build(arch)?);
        if data.len() != plan.param_count {
            return Err(Error::invalid(format!(
                "flat vector length {} does not match parameter count {}",
                data.len(),
                plan.param_count
            )));
        }
        Ok(ModelParams { plan, data })
    }

    pub fn same_shape(&self, other: &ModelParams) -> Result<()> {
        if self.plan.descriptor != other.plan.descriptor {
            return Err(Error::DescriptorMismatch {
                a: self.plan.descriptor.clone(),
                b: other.plan.descriptor.clone(),
            });
        }
        Ok(())
    }

    /// `(1 - eps) * self + eps * other`, element-wise. This form is exact at
    /// both endpoints: eps = 0 returns `self` and eps = 1 returns `other`
    /// bit-for-bit.
    pub fn lerp_toward(&self, other: &ModelParams, eps: f64) -> Result<ModelParams> {
        self.same_shape(other)?;
        let keep = 1.0 - eps;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| keep * a + eps * b)
            .collect();
        Ok(ModelParams {
            plan: Arc::clone(&self.plan),
            data,
        })
    }

    /// Checkpoint payload (external format is binary32).
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    /// Rebuild from a checkpoint descriptor and payload.
    pub fn from_checkpoint(descriptor: &str, values: &[f32]) -> Result<Self> {
        let arch = ArchitectureConfig::from_descriptor(descriptor)?;
        let plan = Arc::new(NetPlan::build(&arch)?);
        if values.len() != plan.param_count {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "parameter count {} does not match descriptor ({} expected)",
                    values.len(),
                    plan.param_count
                ),
            ));
        }
        Ok(ModelParams {
            plan,
            data: values.iter().map(|&v| v as f64).collect(),
        })
    }
}
