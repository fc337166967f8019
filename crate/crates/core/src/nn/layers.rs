//! Thin parameter-owning wrappers over the tape's convolution and matmul ops.
//!
//! Construction registers weights in a `ParamStore` under a stable path;
//! `forward` looks the bound tape vars up by that path. All convolutions are
//! bias-free; only `Linear` carries a bias.

use crate::error::Result;
use crate::nn::params::{Bound, ParamStore};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        pad_left: usize,
        pad_right: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = cin / groups * kernel;
        store.insert_uniform(name, vec![cout, cin / groups, kernel], fan_in, rng)?;
        Ok(Conv1d {
            name: name.to_string(),
            cin,
            cout,
            kernel,
            stride,
            dilation,
            pad_left,
            pad_right,
            groups,
        })
    }

    /// Plain kernel-1 channel projection.
    pub fn pointwise(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        Self::new(store, rng, name, cin, cout, 1, 1, 1, 0, 0, 1)
    }

    /// Kernel-1 projection with all-zero weights.
    pub fn pointwise_zeros(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        store.insert_zeros(name, vec![cout, cin, 1])?;
        Ok(Conv1d {
            name: name.to_string(),
            cin,
            cout,
            kernel: 1,
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
            groups: 1,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.var(&self.name)?;
        tape.conv1d(
            x,
            w,
            self.stride,
            self.dilation,
            self.pad_left,
            self.pad_right,
            self.groups,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        store.insert_uniform(name, vec![cin, cout, kernel], cin * kernel, rng)?;
        Ok(ConvTranspose1d {
            name: name.to_string(),
            cin,
            cout,
            kernel,
            stride,
            pad,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.var(&self.name)?;
        tape.conv_transpose1d(x, w, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        pad: usize,
    ) -> Result<Self> {
        store.insert_uniform(
            name,
            vec![cout, cin, kernel, kernel],
            cin * kernel * kernel,
            rng,
        )?;
        Ok(Conv2d {
            name: name.to_string(),
            cin,
            cout,
            kernel,
            pad,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.var(&self.name)?;
        tape.conv2d(x, w, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w_name: String,
    pub b_name: String,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        din: usize,
        dout: usize,
    ) -> Result<Self> {
        let w_name = format!("{name}.w");
        let b_name = format!("{name}.b");
        store.insert_uniform(&w_name, vec![din, dout], din, rng)?;
        store.insert_zeros(&b_name, vec![dout])?;
        Ok(Linear {
            w_name,
            b_name,
            din,
            dout,
        })
    }

    /// x: rows x din -> rows x dout
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.var(&self.w_name)?;
        let b = bound.var(&self.b_name)?;
        let y = tape.matmul(x, w, false, false)?;
        tape.add_bias_row(y, b)
    }
}
