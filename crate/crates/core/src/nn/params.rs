//! Named parameter storage with checkpoint persistence.
//!
//! Parameters live outside any tape; a forward pass binds them onto a fresh
//! tape as gradient-tracked leaves and afterwards reads gradients back by
//! name. Checkpoints reuse the interchange container with a flat parameter
//! table keyed by stable layer paths.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::container::{decode, encode, ContainerHeader, ParamEntry};
use crate::error::{Result, ScdmError};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        if self.map.contains_key(name) {
            return Err(ScdmError::invalid(format!("duplicate parameter {name}")));
        }
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.map.insert(name.to_string(), Param { shape, values });
        Ok(())
    }

    /// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn insert_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut Stream,
    ) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, shape, values)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.map
            .get(name)
            .ok_or_else(|| ScdmError::invalid(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.map
            .get_mut(name)
            .ok_or_else(|| ScdmError::invalid(format!("unknown parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.map.values().map(|p| p.values.len()).sum()
    }

    /// Register every parameter as a gradient-tracked leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, true)
    }

    /// Inference-time bind: no gradients tracked through parameters.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape, requires_grad: bool) -> Bound {
        let mut vars = BTreeMap::new();
        for (name, p) in &self.map {
            let v = tape.leaf(p.shape.clone(), p.values.clone(), requires_grad);
            vars.insert(name.clone(), v);
        }
        Bound { vars }
    }

    pub fn save(&self, path: &Path, config: serde_json::Value) -> Result<()> {
        let mut params = Vec::new();
        let mut data = Vec::new();
        for (name, p) in &self.map {
            params.push(ParamEntry {
                name: name.clone(),
                shape: p.shape.clone(),
                offset: data.len(),
                len: p.values.len(),
            });
            data.extend_from_slice(&p.values);
        }
        let header = ContainerHeader {
            dims: vec![data.len()],
            dtype: "f64".into(),
            sample_rate: None,
            channel_labels: None,
            labels: None,
            params: Some(params),
            config: Some(config),
        };
        let bytes = encode(&header, &data)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let bytes = std::fs::read(path)?;
        let (header, data) = decode(&bytes)?;
        let entries = header
            .params
            .ok_or_else(|| ScdmError::invalid("checkpoint missing parameter table"))?;
        let mut store = ParamStore::new();
        for e in entries {
            if e.offset + e.len > data.len() || e.shape.iter().product::<usize>() != e.len {
                return Err(ScdmError::invalid(format!(
                    "parameter table entry {} inconsistent with payload",
                    e.name
                )));
            }
            store.insert(&e.name, e.shape, data[e.offset..e.offset + e.len].to_vec())?;
        }
        Ok((store, header.config.unwrap_or(serde_json::Value::Null)))
    }
}

/// Tape handles for every parameter of one forward pass.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ScdmError::invalid(format!("unbound parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
