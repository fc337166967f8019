//! Minimal reverse-mode autodiff over dense n-d arrays.
//!
//! Every forward op appends a node to the tape; `backward` walks the tape
//! in reverse, accumulating gradients into leaves marked `requires_grad`.
//! Shapes are static per node and validated at op construction.

use crate::error::{Result, ScdmError};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Silu(usize),
    Sum(usize),
    Mean(usize),
    /// mean((a - b)^2)
    MseLoss(usize, usize),
    Reshape(usize),
    /// out = a @ b with optional transposes; a is m x k, b is k x n after
    /// transposition.
    Matmul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
        ta: bool,
        tb: bool,
    },
    /// x: n x c x l plus per-(n, c) bias broadcast over l.
    AddBiasNc {
        x: usize,
        bias: usize,
        n: usize,
        c: usize,
        l: usize,
    },
    /// x: rows x cols plus per-column bias broadcast over rows.
    AddBiasRow {
        x: usize,
        bias: usize,
        rows: usize,
        cols: usize,
    },
    /// Channel range [start, end) of an n x c x l array.
    SliceChannels {
        x: usize,
        n: usize,
        c: usize,
        l: usize,
        start: usize,
        end: usize,
    },
    Conv1d(Conv1dSpec),
    ConvT1d(ConvT1dSpec),
    Conv2d(Conv2dSpec),
    /// Length-doubling linear interpolation with edge replication.
    UpsampleLinear2 {
        x: usize,
        n: usize,
        c: usize,
        l: usize,
    },
    /// Keep even time indices (stride-2 decimation).
    Subsample2 {
        x: usize,
        n: usize,
        c: usize,
        l: usize,
    },
    /// Drop trailing time positions down to new_l.
    CropEnd {
        x: usize,
        n: usize,
        c: usize,
        l: usize,
        new_l: usize,
    },
    /// Softmax over the row axis of a rows x cols matrix (columns sum to 1).
    SoftmaxCols {
        x: usize,
        rows: usize,
        cols: usize,
    },
    /// Softmax over the last axis of a batch of rows (each row sums to 1).
    SoftmaxRows {
        x: usize,
        rows: usize,
        cols: usize,
    },
    /// out[n, o, l] = sum_i score[i, o] * v[n, i, l]
    MixChannels {
        score: usize,
        v: usize,
        n: usize,
        din: usize,
        dout: usize,
        l: usize,
    },
    /// Concatenate along the channel axis of n x c x l arrays.
    Concat {
        a: usize,
        b: usize,
        n: usize,
        ca: usize,
        cb: usize,
        l: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dSpec {
    x: usize,
    w: usize,
    n: usize,
    cin: usize,
    l: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    pad_left: usize,
    groups: usize,
    lout: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvT1dSpec {
    x: usize,
    w: usize,
    n: usize,
    cin: usize,
    l: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    lout: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2dSpec {
    x: usize,
    w: usize,
    cin: usize,
    h: usize,
    wd: usize,
    cout: usize,
    kernel: usize,
    pad: usize,
}

pub struct Tape {
    shapes: Vec<Vec<usize>>,
    vals: Vec<Vec<f64>>,
    ops: Vec<Op>,
    requires: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            shapes: Vec::new(),
            vals: Vec::new(),
            ops: Vec::new(),
            requires: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, shape: Vec<usize>, vals: Vec<f64>, op: Op, requires: bool) -> Var {
        debug_assert_eq!(numel(&shape), vals.len());
        self.shapes.push(shape);
        self.vals.push(vals);
        self.ops.push(op);
        self.requires.push(requires);
        self.grads.push(None);
        Var(self.vals.len() - 1)
    }

    fn req(&self, id: usize) -> bool {
        self.requires[id]
    }

    pub fn leaf(&mut self, shape: Vec<usize>, vals: Vec<f64>, requires_grad: bool) -> Var {
        self.push(shape, vals, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, shape: Vec<usize>, vals: Vec<f64>) -> Var {
        self.leaf(shape, vals, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(vec![1], vec![v])
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.0]
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.vals[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    // ---- elementwise ----

    fn check_same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shapes[a.0] != self.shapes[b.0] {
            return Err(ScdmError::shape(format!(
                "elementwise op on shapes {:?} and {:?}",
                self.shapes[a.0], self.shapes[b.0]
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b)?;
        let vals = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x + y)
            .collect();
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(self.shapes[a.0].clone(), vals, Op::Add(a.0, b.0), req))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b)?;
        let vals = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x - y)
            .collect();
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(self.shapes[a.0].clone(), vals, Op::Sub(a.0, b.0), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b)?;
        let vals = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x * y)
            .collect();
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(self.shapes[a.0].clone(), vals, Op::Mul(a.0, b.0), req))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let vals = self.vals[a.0].iter().map(|x| x * c).collect();
        self.push(self.shapes[a.0].clone(), vals, Op::Scale(a.0, c), self.req(a.0))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let vals = self.vals[a.0]
            .iter()
            .map(|&x| x / (1.0 + (-x).exp()))
            .collect();
        self.push(self.shapes[a.0].clone(), vals, Op::Silu(a.0), self.req(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.vals[a.0].iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a.0), self.req(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.vals[a.0].len() as f64;
        let s: f64 = self.vals[a.0].iter().sum::<f64>() / n;
        self.push(vec![1], vec![s], Op::Mean(a.0), self.req(a.0))
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b)?;
        let n = self.vals[a.0].len() as f64;
        let s: f64 = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(vec![1], vec![s], Op::MseLoss(a.0, b.0), req))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.vals[a.0].len() {
            return Err(ScdmError::shape(format!(
                "reshape {:?} -> {:?}",
                self.shapes[a.0], shape
            )));
        }
        let vals = self.vals[a.0].clone();
        Ok(self.push(shape, vals, Op::Reshape(a.0), self.req(a.0)))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = &self.shapes[a.0];
        let sb = &self.shapes[b.0];
        if sa.len() != 2 || sb.len() != 2 {
            return Err(ScdmError::shape("matmul expects 2-d operands"));
        }
        let (m, k1) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k1 != k2 {
            return Err(ScdmError::shape(format!(
                "matmul inner dims {k1} vs {k2}"
            )));
        }
        let va = &self.vals[a.0];
        let vb = &self.vals[b.0];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k1 {
                let av = if ta { va[p * m + i] } else { va[i * k1 + p] };
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let bv = if tb { vb[j * k1 + p] } else { vb[p * n + j] };
                    out[i * n + j] += av * bv;
                }
            }
        }
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(
            vec![m, n],
            out,
            Op::Matmul {
                a: a.0,
                b: b.0,
                m,
                k: k1,
                n,
                ta,
                tb,
            },
            req,
        ))
    }

    /// x: n x c x l, bias: n x c broadcast over the length axis.
    pub fn add_bias_nc(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 3 || self.shapes[bias.0] != [sx[0], sx[1]] {
            return Err(ScdmError::shape(format!(
                "add_bias_nc x {:?} bias {:?}",
                sx, self.shapes[bias.0]
            )));
        }
        let (n, c, l) = (sx[0], sx[1], sx[2]);
        let mut out = self.vals[x.0].clone();
        for i in 0..n {
            for j in 0..c {
                let bv = self.vals[bias.0][i * c + j];
                for t in 0..l {
                    out[(i * c + j) * l + t] += bv;
                }
            }
        }
        let req = self.req(x.0) || self.req(bias.0);
        Ok(self.push(
            sx,
            out,
            Op::AddBiasNc {
                x: x.0,
                bias: bias.0,
                n,
                c,
                l,
            },
            req,
        ))
    }

    /// x: rows x cols, bias: cols broadcast over rows.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 2 || self.shapes[bias.0] != [sx[1]] {
            return Err(ScdmError::shape(format!(
                "add_bias_row x {:?} bias {:?}",
                sx, self.shapes[bias.0]
            )));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let mut out = self.vals[x.0].clone();
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] += self.vals[bias.0][j];
            }
        }
        let req = self.req(x.0) || self.req(bias.0);
        Ok(self.push(
            sx,
            out,
            Op::AddBiasRow {
                x: x.0,
                bias: bias.0,
                rows,
                cols,
            },
            req,
        ))
    }

    /// Channel range [start, end) of an n x c x l array.
    pub fn slice_channels(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 3 || start >= end || end > sx[1] {
            return Err(ScdmError::shape(format!(
                "slice_channels {:?} range {start}..{end}",
                sx
            )));
        }
        let (n, c, l) = (sx[0], sx[1], sx[2]);
        let cs = end - start;
        let v = &self.vals[x.0];
        let mut out = vec![0.0; n * cs * l];
        for i in 0..n {
            out[i * cs * l..(i + 1) * cs * l]
                .copy_from_slice(&v[(i * c + start) * l..(i * c + end) * l]);
        }
        let req = self.req(x.0);
        Ok(self.push(
            vec![n, cs, l],
            out,
            Op::SliceChannels {
                x: x.0,
                n,
                c,
                l,
                start,
                end,
            },
            req,
        ))
    }

    // ---- convolutions ----

    /// 1-D convolution. x: n x cin x l, w: cout x (cin/groups) x kernel.
    #[allow(clippy::too_many_arguments)]
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        dilation: usize,
        pad_left: usize,
        pad_right: usize,
        groups: usize,
    ) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        let sw = self.shapes[w.0].clone();
        if sx.len() != 3 || sw.len() != 3 {
            return Err(ScdmError::shape("conv1d expects 3-d x and w"));
        }
        let (n, cin, l) = (sx[0], sx[1], sx[2]);
        let (cout, cw, kernel) = (sw[0], sw[1], sw[2]);
        if cin % groups != 0 || cout % groups != 0 || cw != cin / groups {
            return Err(ScdmError::shape(format!(
                "conv1d group mismatch: cin {cin}, cout {cout}, groups {groups}, w per-group {cw}"
            )));
        }
        let span = dilation * (kernel - 1) + 1;
        let padded = l + pad_left + pad_right;
        if padded < span {
            return Err(ScdmError::shape(format!(
                "conv1d sequence {l} (+pad {pad_left}+{pad_right}) shorter than kernel span {span}"
            )));
        }
        let lout = (padded - span) / stride + 1;
        let spec = Conv1dSpec {
            x: x.0,
            w: w.0,
            n,
            cin,
            l,
            cout,
            kernel,
            stride,
            dilation,
            pad_left,
            groups,
            lout,
        };
        let out = conv1d_forward(&self.vals[x.0], &self.vals[w.0], &spec);
        let req = self.req(x.0) || self.req(w.0);
        Ok(self.push(vec![n, cout, lout], out, Op::Conv1d(spec), req))
    }

    /// Transposed 1-D convolution. x: n x cin x l, w: cin x cout x kernel.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        let sw = self.shapes[w.0].clone();
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[0] {
            return Err(ScdmError::shape(format!(
                "conv_transpose1d x {:?} w {:?}",
                sx, sw
            )));
        }
        let (n, cin, l) = (sx[0], sx[1], sx[2]);
        let (cout, kernel) = (sw[1], sw[2]);
        let full = (l - 1) * stride + kernel;
        if full < 2 * pad {
            return Err(ScdmError::shape("conv_transpose1d padding too large"));
        }
        let lout = full - 2 * pad;
        let spec = ConvT1dSpec {
            x: x.0,
            w: w.0,
            n,
            cin,
            l,
            cout,
            kernel,
            stride,
            pad,
            lout,
        };
        let out = convt1d_forward(&self.vals[x.0], &self.vals[w.0], &spec);
        let req = self.req(x.0) || self.req(w.0);
        Ok(self.push(vec![n, cout, lout], out, Op::ConvT1d(spec), req))
    }

    /// 2-D convolution on an unbatched stack. x: cin x h x w,
    /// w: cout x cin x kernel x kernel, same-size padding assumed square.
    pub fn conv2d(&mut self, x: Var, w: Var, pad: usize) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        let sw = self.shapes[w.0].clone();
        if sx.len() != 3 || sw.len() != 4 || sw[1] != sx[0] || sw[2] != sw[3] {
            return Err(ScdmError::shape(format!("conv2d x {:?} w {:?}", sx, sw)));
        }
        let (cin, h, wd) = (sx[0], sx[1], sx[2]);
        let (cout, kernel) = (sw[0], sw[2]);
        if h + 2 * pad < kernel || wd + 2 * pad < kernel {
            return Err(ScdmError::shape("conv2d input smaller than kernel"));
        }
        let spec = Conv2dSpec {
            x: x.0,
            w: w.0,
            cin,
            h,
            wd,
            cout,
            kernel,
            pad,
        };
        let out = conv2d_forward(&self.vals[x.0], &self.vals[w.0], &spec);
        let ho = h + 2 * pad - kernel + 1;
        let wo = wd + 2 * pad - kernel + 1;
        let req = self.req(x.0) || self.req(w.0);
        Ok(self.push(vec![cout, ho, wo], out, Op::Conv2d(spec), req))
    }

    // ---- resampling ----

    pub fn upsample_linear2(&mut self, x: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 3 {
            return Err(ScdmError::shape("upsample expects n x c x l"));
        }
        let (n, c, l) = (sx[0], sx[1], sx[2]);
        let v = &self.vals[x.0];
        let mut out = vec![0.0; n * c * l * 2];
        for nc in 0..n * c {
            let src = &v[nc * l..(nc + 1) * l];
            let dst = &mut out[nc * 2 * l..(nc + 1) * 2 * l];
            for i in 0..l {
                dst[2 * i] = src[i];
                dst[2 * i + 1] = if i + 1 < l {
                    0.5 * (src[i] + src[i + 1])
                } else {
                    src[i]
                };
            }
        }
        let req = self.req(x.0);
        Ok(self.push(
            vec![n, c, 2 * l],
            out,
            Op::UpsampleLinear2 { x: x.0, n, c, l },
            req,
        ))
    }

    pub fn subsample2(&mut self, x: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 3 || sx[2] % 2 != 0 {
            return Err(ScdmError::shape(format!(
                "subsample2 needs even length, got {:?}",
                sx
            )));
        }
        let (n, c, l) = (sx[0], sx[1], sx[2]);
        let v = &self.vals[x.0];
        let mut out = vec![0.0; n * c * l / 2];
        for nc in 0..n * c {
            for i in 0..l / 2 {
                out[nc * l / 2 + i] = v[nc * l + 2 * i];
            }
        }
        let req = self.req(x.0);
        Ok(self.push(
            vec![n, c, l / 2],
            out,
            Op::Subsample2 { x: x.0, n, c, l },
            req,
        ))
    }

    pub fn crop_end(&mut self, x: Var, new_l: usize) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 3 || new_l > sx[2] {
            return Err(ScdmError::shape(format!("crop_end {:?} -> {new_l}", sx)));
        }
        let (n, c, l) = (sx[0], sx[1], sx[2]);
        let v = &self.vals[x.0];
        let mut out = vec![0.0; n * c * new_l];
        for nc in 0..n * c {
            out[nc * new_l..(nc + 1) * new_l].copy_from_slice(&v[nc * l..nc * l + new_l]);
        }
        let req = self.req(x.0);
        Ok(self.push(
            vec![n, c, new_l],
            out,
            Op::CropEnd {
                x: x.0,
                n,
                c,
                l,
                new_l,
            },
            req,
        ))
    }

    // ---- attention pieces ----

    /// Softmax over the row axis: each of the `cols` columns sums to 1.
    pub fn softmax_cols(&mut self, x: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 2 {
            return Err(ScdmError::shape("softmax_cols expects a matrix"));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let v = &self.vals[x.0];
        let mut out = vec![0.0; rows * cols];
        for j in 0..cols {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..rows {
                mx = mx.max(v[i * cols + j]);
            }
            let mut z = 0.0;
            for i in 0..rows {
                let e = (v[i * cols + j] - mx).exp();
                out[i * cols + j] = e;
                z += e;
            }
            for i in 0..rows {
                out[i * cols + j] /= z;
            }
        }
        let req = self.req(x.0);
        Ok(self.push(sx, out, Op::SoftmaxCols { x: x.0, rows, cols }, req))
    }

    /// Softmax over the last axis: each row sums to 1.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let sx = self.shapes[x.0].clone();
        if sx.len() != 2 {
            return Err(ScdmError::shape("softmax_rows expects a matrix"));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let v = &self.vals[x.0];
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = &v[i * cols..(i + 1) * cols];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..cols {
                let e = (row[j] - mx).exp();
                out[i * cols + j] = e;
                z += e;
            }
            for j in 0..cols {
                out[i * cols + j] /= z;
            }
        }
        let req = self.req(x.0);
        Ok(self.push(sx, out, Op::SoftmaxRows { x: x.0, rows, cols }, req))
    }

    /// out[n, o, l] = sum_i score[i, o] * v[n, i, l]
    pub fn mix_channels(&mut self, score: Var, v: Var) -> Result<Var> {
        let ss = self.shapes[score.0].clone();
        let sv = self.shapes[v.0].clone();
        if ss.len() != 2 || sv.len() != 3 || ss[0] != sv[1] {
            return Err(ScdmError::shape(format!(
                "mix_channels score {:?} v {:?}",
                ss, sv
            )));
        }
        let (din, dout) = (ss[0], ss[1]);
        let (n, l) = (sv[0], sv[2]);
        let vs = &self.vals[score.0];
        let vv = &self.vals[v.0];
        let mut out = vec![0.0; n * dout * l];
        for b in 0..n {
            for o in 0..dout {
                let dst = &mut out[(b * dout + o) * l..(b * dout + o + 1) * l];
                for i in 0..din {
                    let s = vs[i * dout + o];
                    if s == 0.0 {
                        continue;
                    }
                    let src = &vv[(b * din + i) * l..(b * din + i + 1) * l];
                    for t in 0..l {
                        dst[t] += s * src[t];
                    }
                }
            }
        }
        let req = self.req(score.0) || self.req(v.0);
        Ok(self.push(
            vec![n, dout, l],
            out,
            Op::MixChannels {
                score: score.0,
                v: v.0,
                n,
                din,
                dout,
                l,
            },
            req,
        ))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shapes[a.0].clone();
        let sb = self.shapes[b.0].clone();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(ScdmError::shape(format!("concat {:?} and {:?}", sa, sb)));
        }
        let (n, ca, cb, l) = (sa[0], sa[1], sb[1], sa[2]);
        let va = &self.vals[a.0];
        let vb = &self.vals[b.0];
        let mut out = vec![0.0; n * (ca + cb) * l];
        for i in 0..n {
            let dst = &mut out[i * (ca + cb) * l..(i + 1) * (ca + cb) * l];
            dst[..ca * l].copy_from_slice(&va[i * ca * l..(i + 1) * ca * l]);
            dst[ca * l..].copy_from_slice(&vb[i * cb * l..(i + 1) * cb * l]);
        }
        let req = self.req(a.0) || self.req(b.0);
        Ok(self.push(
            vec![n, ca + cb, l],
            out,
            Op::Concat {
                a: a.0,
                b: b.0,
                n,
                ca,
                cb,
                l,
            },
            req,
        ))
    }

    // ---- backward ----

    /// Populate gradients of all `requires_grad` nodes reachable from the
    /// scalar `output`.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if numel(&self.shapes[output.0]) != 1 {
            return Err(ScdmError::invalid(
                "backward requires a scalar graph output",
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[output.0] = Some(vec![1.0]);
        for id in (0..=output.0).rev() {
            if !self.requires[id] {
                continue;
            }
            let Some(gout) = self.grads[id].take() else {
                continue;
            };
            let op = self.ops[id].clone();
            self.propagate(id, &op, &gout);
            self.grads[id] = Some(gout);
        }
        Ok(())
    }

    fn acc(&mut self, id: usize, contribution: impl FnOnce(&Tape, &mut [f64])) {
        if !self.requires[id] {
            return;
        }
        let mut g = self.grads[id]
            .take()
            .unwrap_or_else(|| vec![0.0; self.vals[id].len()]);
        contribution(self, &mut g);
        self.grads[id] = Some(g);
    }

    fn propagate(&mut self, id: usize, op: &Op, gout: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(a, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                self.acc(b, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.acc(a, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                self.acc(b, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi -= go;
                    }
                });
            }
            Op::Mul(a, b) => {
                self.acc(a, |t, g| {
                    for ((gi, go), bv) in g.iter_mut().zip(gout).zip(&t.vals[b]) {
                        *gi += go * bv;
                    }
                });
                self.acc(b, |t, g| {
                    for ((gi, go), av) in g.iter_mut().zip(gout).zip(&t.vals[a]) {
                        *gi += go * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                self.acc(a, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go * c;
                    }
                });
            }
            Op::Silu(a) => {
                self.acc(a, |t, g| {
                    for ((gi, go), &x) in g.iter_mut().zip(gout).zip(&t.vals[a]) {
                        let s = 1.0 / (1.0 + (-x).exp());
                        *gi += go * (s + x * s * (1.0 - s));
                    }
                });
            }
            Op::Sum(a) => {
                self.acc(a, |_, g| {
                    for gi in g.iter_mut() {
                        *gi += gout[0];
                    }
                });
            }
            Op::Mean(a) => {
                let inv = 1.0 / self.vals[a].len() as f64;
                self.acc(a, |_, g| {
                    for gi in g.iter_mut() {
                        *gi += gout[0] * inv;
                    }
                });
            }
            Op::MseLoss(a, b) => {
                let inv = 2.0 / self.vals[a].len() as f64;
                self.acc(a, |t, g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += gout[0] * inv * (t.vals[a][i] - t.vals[b][i]);
                    }
                });
                self.acc(b, |t, g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi -= gout[0] * inv * (t.vals[a][i] - t.vals[b][i]);
                    }
                });
            }
            Op::Reshape(a) => {
                self.acc(a, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
            }
            Op::Matmul {
                a,
                b,
                m,
                k,
                n,
                ta,
                tb,
            } => {
                // dA and dB from dOut, honoring transposes
                self.acc(a, |t, g| {
                    let vb = &t.vals[b];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                let bv = if tb { vb[j * k + p] } else { vb[p * n + j] };
                                s += gout[i * n + j] * bv;
                            }
                            if ta {
                                g[p * m + i] += s;
                            } else {
                                g[i * k + p] += s;
                            }
                        }
                    }
                });
                self.acc(b, |t, g| {
                    let va = &t.vals[a];
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                let av = if ta { va[p * m + i] } else { va[i * k + p] };
                                s += av * gout[i * n + j];
                            }
                            if tb {
                                g[j * k + p] += s;
                            } else {
                                g[p * n + j] += s;
                            }
                        }
                    }
                });
            }
            Op::AddBiasNc { x, bias, n, c, l } => {
                self.acc(x, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                self.acc(bias, |_, g| {
                    for i in 0..n {
                        for j in 0..c {
                            let mut s = 0.0;
                            for t in 0..l {
                                s += gout[(i * c + j) * l + t];
                            }
                            g[i * c + j] += s;
                        }
                    }
                });
            }
            Op::AddBiasRow { x, bias, rows, cols } => {
                self.acc(x, |_, g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                self.acc(bias, |_, g| {
                    for i in 0..rows {
                        for j in 0..cols {
                            g[j] += gout[i * cols + j];
                        }
                    }
                });
            }
            Op::SliceChannels {
                x,
                n,
                c,
                l,
                start,
                end,
            } => {
                let cs = end - start;
                self.acc(x, |_, g| {
                    for i in 0..n {
                        for (gi, go) in g[(i * c + start) * l..(i * c + end) * l]
                            .iter_mut()
                            .zip(&gout[i * cs * l..(i + 1) * cs * l])
                        {
                            *gi += go;
                        }
                    }
                });
            }
            Op::Conv1d(spec) => {
                self.acc(spec.x, |t, g| {
                    conv1d_backward_x(gout, &t.vals[spec.w], &spec, g);
                });
                self.acc(spec.w, |t, g| {
                    conv1d_backward_w(gout, &t.vals[spec.x], &spec, g);
                });
            }
            Op::ConvT1d(spec) => {
                self.acc(spec.x, |t, g| {
                    convt1d_backward_x(gout, &t.vals[spec.w], &spec, g);
                });
                self.acc(spec.w, |t, g| {
                    convt1d_backward_w(gout, &t.vals[spec.x], &spec, g);
                });
            }
            Op::Conv2d(spec) => {
                self.acc(spec.x, |t, g| {
                    conv2d_backward_x(gout, &t.vals[spec.w], &spec, g);
                });
                self.acc(spec.w, |t, g| {
                    conv2d_backward_w(gout, &t.vals[spec.x], &spec, g);
                });
            }
            Op::UpsampleLinear2 { x, n, c, l } => {
                self.acc(x, |_, g| {
                    for nc in 0..n * c {
                        let go = &gout[nc * 2 * l..(nc + 1) * 2 * l];
                        let gx = &mut g[nc * l..(nc + 1) * l];
                        for i in 0..l {
                            gx[i] += go[2 * i];
                            if i + 1 < l {
                                gx[i] += 0.5 * go[2 * i + 1];
                                gx[i + 1] += 0.5 * go[2 * i + 1];
                            } else {
                                gx[i] += go[2 * i + 1];
                            }
                        }
                    }
                });
            }
            Op::Subsample2 { x, n, c, l } => {
                self.acc(x, |_, g| {
                    for nc in 0..n * c {
                        for i in 0..l / 2 {
                            g[nc * l + 2 * i] += gout[nc * l / 2 + i];
                        }
                    }
                });
            }
            Op::CropEnd { x, n, c, l, new_l } => {
                self.acc(x, |_, g| {
                    for nc in 0..n * c {
                        for i in 0..new_l {
                            g[nc * l + i] += gout[nc * new_l + i];
                        }
                    }
                });
            }
            Op::SoftmaxCols { x, rows, cols } => {
                let y = self.vals[id].clone();
                self.acc(x, |_, g| {
                    for j in 0..cols {
                        let mut dot = 0.0;
                        for i in 0..rows {
                            dot += gout[i * cols + j] * y[i * cols + j];
                        }
                        for i in 0..rows {
                            g[i * cols + j] += y[i * cols + j] * (gout[i * cols + j] - dot);
                        }
                    }
                });
            }
            Op::SoftmaxRows { x, rows, cols } => {
                let y = self.vals[id].clone();
                self.acc(x, |_, g| {
                    for i in 0..rows {
                        let mut dot = 0.0;
                        for j in 0..cols {
                            dot += gout[i * cols + j] * y[i * cols + j];
                        }
                        for j in 0..cols {
                            g[i * cols + j] += y[i * cols + j] * (gout[i * cols + j] - dot);
                        }
                    }
                });
            }
            Op::MixChannels {
                score,
                v,
                n,
                din,
                dout,
                l,
            } => {
                self.acc(score, |t, g| {
                    let vv = &t.vals[v];
                    for i in 0..din {
                        for o in 0..dout {
                            let mut s = 0.0;
                            for b in 0..n {
                                let go = &gout[(b * dout + o) * l..(b * dout + o + 1) * l];
                                let xv = &vv[(b * din + i) * l..(b * din + i + 1) * l];
                                for t2 in 0..l {
                                    s += go[t2] * xv[t2];
                                }
                            }
                            g[i * dout + o] += s;
                        }
                    }
                });
                self.acc(v, |t, g| {
                    let vs = &t.vals[score];
                    for b in 0..n {
                        for i in 0..din {
                            let gx = &mut g[(b * din + i) * l..(b * din + i + 1) * l];
                            for o in 0..dout {
                                let s = vs[i * dout + o];
                                if s == 0.0 {
                                    continue;
                                }
                                let go = &gout[(b * dout + o) * l..(b * dout + o + 1) * l];
                                for t2 in 0..l {
                                    gx[t2] += s * go[t2];
                                }
                            }
                        }
                    }
                });
            }
            Op::Concat { a, b, n, ca, cb, l } => {
                self.acc(a, |_, g| {
                    for i in 0..n {
                        let go = &gout[i * (ca + cb) * l..i * (ca + cb) * l + ca * l];
                        for (gi, v) in g[i * ca * l..(i + 1) * ca * l].iter_mut().zip(go) {
                            *gi += v;
                        }
                    }
                });
                self.acc(b, |_, g| {
                    for i in 0..n {
                        let go = &gout[i * (ca + cb) * l + ca * l..(i + 1) * (ca + cb) * l];
                        for (gi, v) in g[i * cb * l..(i + 1) * cb * l].iter_mut().zip(go) {
                            *gi += v;
                        }
                    }
                });
            }
        }
    }

}

// ---- convolution kernels ----

fn conv1d_forward(x: &[f64], w: &[f64], s: &Conv1dSpec) -> Vec<f64> {
    let cin_g = s.cin / s.groups;
    let cout_g = s.cout / s.groups;
    let mut out = vec![0.0; s.n * s.cout * s.lout];
    for b in 0..s.n {
        for g in 0..s.groups {
            for oc in 0..cout_g {
                let co = g * cout_g + oc;
                let dst = &mut out[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                for ic in 0..cin_g {
                    let ci = g * cin_g + ic;
                    let src = &x[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
                    let wk = &w[(co * cin_g + ic) * s.kernel..(co * cin_g + ic + 1) * s.kernel];
                    for (p, d) in dst.iter_mut().enumerate() {
                        let base = p * s.stride;
                        let mut acc = 0.0;
                        for k in 0..s.kernel {
                            let idx = base + k * s.dilation;
                            if idx < s.pad_left {
                                continue;
                            }
                            let xi = idx - s.pad_left;
                            if xi < s.l {
                                acc += wk[k] * src[xi];
                            }
                        }
                        *d += acc;
                    }
                }
            }
        }
    }
    out
}

fn conv1d_backward_x(gout: &[f64], w: &[f64], s: &Conv1dSpec, gx: &mut [f64]) {
    let cin_g = s.cin / s.groups;
    let cout_g = s.cout / s.groups;
    for b in 0..s.n {
        for g in 0..s.groups {
            for oc in 0..cout_g {
                let co = g * cout_g + oc;
                let go = &gout[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                for ic in 0..cin_g {
                    let ci = g * cin_g + ic;
                    let dst = &mut gx[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
                    let wk = &w[(co * cin_g + ic) * s.kernel..(co * cin_g + ic + 1) * s.kernel];
                    for (p, gv) in go.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        let base = p * s.stride;
                        for k in 0..s.kernel {
                            let idx = base + k * s.dilation;
                            if idx < s.pad_left {
                                continue;
                            }
                            let xi = idx - s.pad_left;
                            if xi < s.l {
                                dst[xi] += wk[k] * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv1d_backward_w(gout: &[f64], x: &[f64], s: &Conv1dSpec, gw: &mut [f64]) {
    let cin_g = s.cin / s.groups;
    let cout_g = s.cout / s.groups;
    for b in 0..s.n {
        for g in 0..s.groups {
            for oc in 0..cout_g {
                let co = g * cout_g + oc;
                let go = &gout[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                for ic in 0..cin_g {
                    let ci = g * cin_g + ic;
                    let src = &x[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
                    let wk =
                        &mut gw[(co * cin_g + ic) * s.kernel..(co * cin_g + ic + 1) * s.kernel];
                    for (p, gv) in go.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        let base = p * s.stride;
                        for k in 0..s.kernel {
                            let idx = base + k * s.dilation;
                            if idx < s.pad_left {
                                continue;
                            }
                            let xi = idx - s.pad_left;
                            if xi < s.l {
                                wk[k] += src[xi] * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn convt1d_forward(x: &[f64], w: &[f64], s: &ConvT1dSpec) -> Vec<f64> {
    let mut out = vec![0.0; s.n * s.cout * s.lout];
    for b in 0..s.n {
        for ci in 0..s.cin {
            let src = &x[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
            for co in 0..s.cout {
                let dst = &mut out[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                let wk = &w[(ci * s.cout + co) * s.kernel..(ci * s.cout + co + 1) * s.kernel];
                for (p, xv) in src.iter().enumerate() {
                    if *xv == 0.0 {
                        continue;
                    }
                    for k in 0..s.kernel {
                        let oi = p * s.stride + k;
                        if oi >= s.pad && oi - s.pad < s.lout {
                            dst[oi - s.pad] += wk[k] * xv;
                        }
                    }
                }
            }
        }
    }
    out
}

fn convt1d_backward_x(gout: &[f64], w: &[f64], s: &ConvT1dSpec, gx: &mut [f64]) {
    for b in 0..s.n {
        for ci in 0..s.cin {
            let dst = &mut gx[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
            for co in 0..s.cout {
                let go = &gout[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                let wk = &w[(ci * s.cout + co) * s.kernel..(ci * s.cout + co + 1) * s.kernel];
                for (p, d) in dst.iter_mut().enumerate() {
                    for k in 0..s.kernel {
                        let oi = p * s.stride + k;
                        if oi >= s.pad && oi - s.pad < s.lout {
                            *d += wk[k] * go[oi - s.pad];
                        }
                    }
                }
            }
        }
    }
}

fn convt1d_backward_w(gout: &[f64], x: &[f64], s: &ConvT1dSpec, gw: &mut [f64]) {
    for b in 0..s.n {
        for ci in 0..s.cin {
            let src = &x[(b * s.cin + ci) * s.l..(b * s.cin + ci + 1) * s.l];
            for co in 0..s.cout {
                let go = &gout[(b * s.cout + co) * s.lout..(b * s.cout + co + 1) * s.lout];
                let wk = &mut gw[(ci * s.cout + co) * s.kernel..(ci * s.cout + co + 1) * s.kernel];
                for (p, xv) in src.iter().enumerate() {
                    if *xv == 0.0 {
                        continue;
                    }
                    for k in 0..s.kernel {
                        let oi = p * s.stride + k;
                        if oi >= s.pad && oi - s.pad < s.lout {
                            wk[k] += xv * go[oi - s.pad];
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_forward(x: &[f64], w: &[f64], s: &Conv2dSpec) -> Vec<f64> {
    let ho = s.h + 2 * s.pad - s.kernel + 1;
    let wo = s.wd + 2 * s.pad - s.kernel + 1;
    let mut out = vec![0.0; s.cout * ho * wo];
    for co in 0..s.cout {
        for ci in 0..s.cin {
            let src = &x[ci * s.h * s.wd..(ci + 1) * s.h * s.wd];
            let wk = &w[(co * s.cin + ci) * s.kernel * s.kernel
                ..(co * s.cin + ci + 1) * s.kernel * s.kernel];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ky in 0..s.kernel {
                        let iy = oy + ky;
                        if iy < s.pad || iy - s.pad >= s.h {
                            continue;
                        }
                        for kx in 0..s.kernel {
                            let ix = ox + kx;
                            if ix < s.pad || ix - s.pad >= s.wd {
                                continue;
                            }
                            acc += wk[ky * s.kernel + kx] * src[(iy - s.pad) * s.wd + (ix - s.pad)];
                        }
                    }
                    out[(co * ho + oy) * wo + ox] += acc;
                }
            }
        }
    }
    out
}

fn conv2d_backward_x(gout: &[f64], w: &[f64], s: &Conv2dSpec, gx: &mut [f64]) {
    let ho = s.h + 2 * s.pad - s.kernel + 1;
    let wo = s.wd + 2 * s.pad - s.kernel + 1;
    for co in 0..s.cout {
        for ci in 0..s.cin {
            let dst = &mut gx[ci * s.h * s.wd..(ci + 1) * s.h * s.wd];
            let wk = &w[(co * s.cin + ci) * s.kernel * s.kernel
                ..(co * s.cin + ci + 1) * s.kernel * s.kernel];
            for oy in 0..ho {
                for ox in 0..wo {
                    let gv = gout[(co * ho + oy) * wo + ox];
                    if gv == 0.0 {
                        continue;
                    }
                    for ky in 0..s.kernel {
                        let iy = oy + ky;
                        if iy < s.pad || iy - s.pad >= s.h {
                            continue;
                        }
                        for kx in 0..s.kernel {
                            let ix = ox + kx;
                            if ix < s.pad || ix - s.pad >= s.wd {
                                continue;
                            }
                            dst[(iy - s.pad) * s.wd + (ix - s.pad)] +=
                                wk[ky * s.kernel + kx] * gv;
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward_w(gout: &[f64], x: &[f64], s: &Conv2dSpec, gw: &mut [f64]) {
    let ho = s.h + 2 * s.pad - s.kernel + 1;
    let wo = s.wd + 2 * s.pad - s.kernel + 1;
    for co in 0..s.cout {
        for ci in 0..s.cin {
            let src = &x[ci * s.h * s.wd..(ci + 1) * s.h * s.wd];
            let wk = &mut gw[(co * s.cin + ci) * s.kernel * s.kernel
                ..(co * s.cin + ci + 1) * s.kernel * s.kernel];
            for oy in 0..ho {
                for ox in 0..wo {
                    let gv = gout[(co * ho + oy) * wo + ox];
                    if gv == 0.0 {
                        continue;
                    }
                    for ky in 0..s.kernel {
                        let iy = oy + ky;
                        if iy < s.pad || iy - s.pad >= s.h {
                            continue;
                        }
                        for kx in 0..s.kernel {
                            let ix = ox + kx;
                            if ix < s.pad || ix - s.pad >= s.wd {
                                continue;
                            }
                            wk[ky * s.kernel + kx] +=
                                src[(iy - s.pad) * s.wd + (ix - s.pad)] * gv;
                        }
                    }
                }
            }
        }
    }
}
