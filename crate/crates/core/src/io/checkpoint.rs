//! Operator checkpoints: `SSRNO1`, a `key=value` metadata block with the config and a
//! tensor manifest, then the tensors as flat little-endian arrays in manifest order.

use std::path::Path;

use super::header::{join_block, split_block, Header};
use crate::error::{Error, Result};
use crate::operator::{OperatorConfig, OperatorParams};
use crate::scalar::{Dtype, Scalar};

pub const CHECKPOINT_MAGIC: &[u8] = b"SSRNO1";
/// Prefix for caller-supplied metadata keys.
pub const EXTRA_PREFIX: &str = "meta.";

/// Serializes `params` in their own precision. `extra` pairs are stored under
/// [`EXTRA_PREFIX`].
pub fn encode_checkpoint<T: Scalar>(params: &OperatorParams<T>, extra: &[(String, String)]) -> Vec<u8> {
    let c = &params.config;
    let mut h = Header::new();
    h.push("dtype", T::DTYPE);
    h.push("d_modes", c.d_modes);
    h.push("hidden", c.hidden);
    h.push("t_contract", c.t_contract);
    h.push("t_transform", c.t_transform);
    h.push("activation", c.activation);
    h.push("seed", c.seed);
    for (name, shape, _) in params.named_tensors() {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        h.push("tensor", format!("{name}:{}", dims.join("x")));
    }
    for (k, v) in extra {
        h.push(format!("{EXTRA_PREFIX}{k}"), v);
    }
    let mut out = join_block(CHECKPOINT_MAGIC, &h);
    for (_, _, data) in params.named_tensors() {
        for &v in data {
            v.write_le(&mut out);
        }
    }
    out
}

fn config_from(h: &Header) -> Result<OperatorConfig> {
    let cfg = OperatorConfig {
        d_modes: h.parse_value("d_modes")?,
        hidden: h.parse_value("hidden")?,
        t_contract: h.parse_value("t_contract")?,
        t_transform: h.parse_value("t_transform")?,
        activation: h.parse_value("activation")?,
        seed: h.parse_value("seed")?,
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(cfg)
}

fn read_all<S: Scalar, T: Scalar>(payload: &[u8], params: &mut OperatorParams<T>) -> Result<()> {
    let n = params.num_parameters();
    let want = n * S::DTYPE.size_of();
    if payload.len() < want {
        return Err(Error::TruncatedPayload { expected: want, found: payload.len() });
    }
    if payload.len() > want {
        return Err(Error::Format(format!("{} trailing bytes after the tensors", payload.len() - want)));
    }
    let values: Vec<T> = payload.chunks_exact(S::DTYPE.size_of()).map(|b| T::of(S::read_le(b).f64())).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    params.unflatten(&values)
}

/// Parameters plus the `meta.*` extras, keys stripped of the prefix.
pub type Decoded<T> = (OperatorParams<T>, Vec<(String, String)>);

/// Parses a checkpoint into precision `T`, converting if it was stored in the other one.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Decoded<T>> {
    let (h, payload) = split_block(bytes, CHECKPOINT_MAGIC)?;
    let dtype: Dtype = h.get("dtype")?.parse()?;
    let mut params = OperatorParams::<T>::zeros(config_from(&h)?)?;
    let expected: Vec<String> = params
        .named_tensors()
        .into_iter()
        .map(|(name, shape, _)| {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("{name}:{}", dims.join("x"))
        })
        .collect();
    let manifest: Vec<&str> = h.all("tensor").collect();
    if manifest != expected {
        return Err(Error::Format("tensor manifest does not match the stored config".into()));
    }
    match dtype {
        Dtype::F32 => read_all::<f32, T>(payload, &mut params)?,
        Dtype::F64 => read_all::<f64, T>(payload, &mut params)?,
    }
    let extra = h
        .entries()
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(EXTRA_PREFIX).map(|k| (k.to_string(), v.clone())))
        .collect();
    Ok((params, extra))
}

pub fn write_checkpoint<T: Scalar>(
    params: &OperatorParams<T>,
    extra: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, extra))?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Decoded<T>> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Storage precision of a checkpoint without decoding its tensors.
pub fn checkpoint_dtype(bytes: &[u8]) -> Result<Dtype> {
    let (h, _) = split_block(bytes, CHECKPOINT_MAGIC)?;
    h.get("dtype")?.parse()
}
