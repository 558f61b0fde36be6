use super::{Tape, Tensor};
use crate::error::{Result, SgrError};

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SgrError::Dimension(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    // ── elementwise binary ────────────────────────────────────────────

    /// a + b; shapes must match, except that a one-element operand
    /// broadcasts against the other (the only broadcast supported).
    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, "add", |x, y| x + y, |_, _, d| (d, d))
    }

    /// a - b with the same shape rules as `add`.
    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, "sub", |x, y| x - y, |_, _, d| (d, -d))
    }

    /// Elementwise a * b with the same shape rules as `add`.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, "mul", |x, y| x * y, |x, y, d| (d * y, d * x))
    }

    fn binary(
        &self,
        a: &Tensor,
        b: &Tensor,
        op: &str,
        f: fn(f64, f64) -> f64,
        df: fn(f64, f64, f64) -> (f64, f64),
    ) -> Result<Tensor> {
        let a_scalar = a.numel() == 1;
        let b_scalar = b.numel() == 1;
        if !(a_scalar || b_scalar) {
            same_shape(a, b, op)?;
        }
        let (out_shape, n) = if a_scalar && !b_scalar {
            (b.shape().to_vec(), b.numel())
        } else {
            (a.shape().to_vec(), a.numel())
        };
        let ad = a.data();
        let bd = b.data();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = if a_scalar { ad[0] } else { ad[i] };
            let y = if b_scalar { bd[0] } else { bd[i] };
            out.push(f(x, y));
        }
        drop(ad);
        drop(bd);
        let result = Tensor::from_vec(&out_shape, out)?;
        self.record(
            vec![a.clone(), b.clone()],
            &result,
            Box::new(move |ins, _out, d| {
                let a = &ins[0];
                let b = &ins[1];
                let ad = a.data();
                let bd = b.data();
                let a_scalar = a.numel() == 1;
                let b_scalar = b.numel() == 1;
                let mut da = vec![0.0; a.numel()];
                let mut db = vec![0.0; b.numel()];
                for i in 0..d.len() {
                    let x = if a_scalar { ad[0] } else { ad[i] };
                    let y = if b_scalar { bd[0] } else { bd[i] };
                    let (ga, gb) = df(x, y, d[i]);
                    if a_scalar {
                        da[0] += ga;
                    } else {
                        da[i] = ga;
                    }
                    if b_scalar {
                        db[0] += gb;
                    } else {
                        db[i] = gb;
                    }
                }
                vec![da, db]
            }),
        );
        Ok(result)
    }

    // ── elementwise unary ─────────────────────────────────────────────

    /// max(0, x); the subgradient at the kink is 0.
    pub fn relu(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(x, sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    /// ln(max(x, floor)); gradient is 0 in the clamped region.
    pub fn ln_clamped(&self, x: &Tensor, floor: f64) -> Result<Tensor> {
        if floor <= 0.0 {
            return Err(SgrError::Contract(format!(
                "ln_clamped floor must be positive, got {floor}"
            )));
        }
        self.unary_captured(
            x,
            move |v| v.max(floor).ln(),
            move |v, _| if v >= floor { 1.0 / v } else { 0.0 },
        )
    }

    /// c * x for a plain constant c.
    pub fn scale(&self, x: &Tensor, c: f64) -> Result<Tensor> {
        self.unary_captured(x, move |v| c * v, move |_, _| c)
    }

    /// x + c for a plain constant c.
    pub fn add_const(&self, x: &Tensor, c: f64) -> Result<Tensor> {
        self.unary_captured(x, move |v| v + c, |_, _| 1.0)
    }

    fn unary(&self, x: &Tensor, f: fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Result<Tensor> {
        self.unary_captured(x, f, df)
    }

    fn unary_captured(
        &self,
        x: &Tensor,
        f: impl Fn(f64) -> f64 + 'static,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let out: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
        let result = Tensor::from_vec(x.shape(), out)?;
        self.record(
            vec![x.clone()],
            &result,
            Box::new(move |ins, out, d| {
                let xd = ins[0].data();
                let yd = out.data();
                let dx = (0..d.len()).map(|i| d[i] * df(xd[i], yd[i])).collect();
                vec![dx]
            }),
        );
        Ok(result)
    }

    // ── matrix / vector algebra ───────────────────────────────────────

    /// Standard matrix product of rank-2 tensors.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rank() != 2 || b.rank() != 2 {
            return Err(SgrError::Dimension(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let (k2, n) = (b.shape()[0], b.shape()[1]);
        if k != k2 {
            return Err(SgrError::Dimension(format!(
                "matmul inner extents differ: {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out = matmul_raw(&a.data(), &b.data(), m, k, n);
        let result = Tensor::from_vec(&[m, n], out)?;
        self.record(
            vec![a.clone(), b.clone()],
            &result,
            Box::new(move |ins, _out, d| {
                let a = ins[0].data();
                let b = ins[1].data();
                // dA = dC . B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += d[i * n + j] * b[kk * n + j];
                        }
                        da[i * k + kk] = acc;
                    }
                }
                // dB = A^T . dC
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for kk in 0..k {
                        let aik = a[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[kk * n + j] += aik * d[i * n + j];
                        }
                    }
                }
                vec![da, db]
            }),
        );
        Ok(result)
    }

    /// Inner product of two rank-1 tensors; returns a scalar.
    pub fn dot(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rank() != 1 || b.rank() != 1 {
            return Err(SgrError::Dimension(format!(
                "dot needs rank-1 operands, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        same_shape(a, b, "dot")?;
        let v: f64 = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum();
        let result = Tensor::from_vec(&[], vec![v])?;
        self.record(
            vec![a.clone(), b.clone()],
            &result,
            Box::new(|ins, _out, d| {
                let a = ins[0].data();
                let b = ins[1].data();
                let g = d[0];
                vec![
                    b.iter().map(|y| g * y).collect(),
                    a.iter().map(|x| g * x).collect(),
                ]
            }),
        );
        Ok(result)
    }

    /// Add a rank-1 bias to every row of a rank-2 tensor.
    pub fn add_bias(&self, m: &Tensor, bias: &Tensor) -> Result<Tensor> {
        if m.rank() != 2 || bias.rank() != 1 {
            return Err(SgrError::Dimension(format!(
                "add_bias needs rank-2 and rank-1, got {:?} and {:?}",
                m.shape(),
                bias.shape()
            )));
        }
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        if bias.numel() != cols {
            return Err(SgrError::Dimension(format!(
                "add_bias: bias length {} vs {} columns",
                bias.numel(),
                cols
            )));
        }
        let md = m.data();
        let bd = bias.data();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                out.push(md[i * cols + j] + bd[j]);
            }
        }
        drop(md);
        drop(bd);
        let result = Tensor::from_vec(&[rows, cols], out)?;
        self.record(
            vec![m.clone(), bias.clone()],
            &result,
            Box::new(move |_ins, _out, d| {
                let dm = d.to_vec();
                let mut db = vec![0.0; cols];
                for i in 0..rows {
                    for j in 0..cols {
                        db[j] += d[i * cols + j];
                    }
                }
                vec![dm, db]
            }),
        );
        Ok(result)
    }

    /// 1-D convolution over a rank-1 tensor: kernel width 3, stride 1,
    /// zero same-padding, single channel, one shared scalar bias.
    pub fn conv1d_same3(&self, x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
        if x.rank() != 1 {
            return Err(SgrError::Dimension(format!(
                "conv1d_same3 input must be rank 1, got {:?}",
                x.shape()
            )));
        }
        if kernel.shape() != [3] {
            return Err(SgrError::Dimension(format!(
                "conv1d_same3 kernel must have shape [3], got {:?}",
                kernel.shape()
            )));
        }
        if bias.numel() != 1 {
            return Err(SgrError::Dimension(format!(
                "conv1d_same3 bias must be scalar, got {:?}",
                bias.shape()
            )));
        }
        let len = x.numel();
        let xd = x.data();
        let kd = kernel.data();
        let b = bias.data()[0];
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let left = if i > 0 { xd[i - 1] } else { 0.0 };
            let right = if i + 1 < len { xd[i + 1] } else { 0.0 };
            out.push(kd[0] * left + kd[1] * xd[i] + kd[2] * right + b);
        }
        drop(xd);
        drop(kd);
        let result = Tensor::from_vec(&[len], out)?;
        self.record(
            vec![x.clone(), kernel.clone(), bias.clone()],
            &result,
            Box::new(move |ins, _out, d| {
                let xd = ins[0].data();
                let kd = ins[1].data();
                let mut dx = vec![0.0; len];
                let mut dk = vec![0.0; 3];
                let mut db = 0.0;
                for i in 0..len {
                    let g = d[i];
                    db += g;
                    if i > 0 {
                        dk[0] += g * xd[i - 1];
                        dx[i - 1] += g * kd[0];
                    }
                    dk[1] += g * xd[i];
                    dx[i] += g * kd[1];
                    if i + 1 < len {
                        dk[2] += g * xd[i + 1];
                        dx[i + 1] += g * kd[2];
                    }
                }
                vec![dx, dk, vec![db]]
            }),
        );
        Ok(result)
    }

    // ── shape plumbing ────────────────────────────────────────────────

    /// Concatenate rank-1 tensors into one rank-1 tensor.
    pub fn concat(&self, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(SgrError::Contract("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            if p.rank() != 1 {
                return Err(SgrError::Dimension(format!(
                    "concat needs rank-1 parts, got {:?}",
                    p.shape()
                )));
            }
            lens.push(p.numel());
            data.extend_from_slice(&p.data());
        }
        let result = Tensor::from_vec(&[data.len()], data)?;
        self.record(
            parts.iter().map(|p| (*p).clone()).collect(),
            &result,
            Box::new(move |_ins, _out, d| {
                let mut offset = 0;
                lens.iter()
                    .map(|&l| {
                        let piece = d[offset..offset + l].to_vec();
                        offset += l;
                        piece
                    })
                    .collect()
            }),
        );
        Ok(result)
    }

    /// Row `i` of a rank-2 tensor as a rank-1 tensor.
    pub fn row(&self, m: &Tensor, i: usize) -> Result<Tensor> {
        if m.rank() != 2 {
            return Err(SgrError::Dimension(format!(
                "row needs a rank-2 tensor, got {:?}",
                m.shape()
            )));
        }
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        if i >= rows {
            return Err(SgrError::Index(format!("row {i} out of range for {rows} rows")));
        }
        let data = m.data()[i * cols..(i + 1) * cols].to_vec();
        let result = Tensor::from_vec(&[cols], data)?;
        self.record(
            vec![m.clone()],
            &result,
            Box::new(move |_ins, _out, d| {
                let mut dm = vec![0.0; rows * cols];
                dm[i * cols..(i + 1) * cols].copy_from_slice(d);
                vec![dm]
            }),
        );
        Ok(result)
    }

    /// Stack rank-1 tensors of equal length into a rank-2 tensor.
    pub fn stack_rows(&self, rows: &[Tensor]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(SgrError::Contract("stack_rows of zero tensors".into()));
        }
        let cols = rows[0].numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.rank() != 1 || r.numel() != cols {
                return Err(SgrError::Dimension(format!(
                    "stack_rows needs equal-length rank-1 tensors, got {:?}",
                    r.shape()
                )));
            }
            data.extend_from_slice(&r.data());
        }
        let result = Tensor::from_vec(&[rows.len(), cols], data)?;
        self.record(
            rows.to_vec(),
            &result,
            Box::new(move |ins, _out, d| {
                ins.iter()
                    .enumerate()
                    .map(|(i, _)| d[i * cols..(i + 1) * cols].to_vec())
                    .collect()
            }),
        );
        Ok(result)
    }

    /// Sum of same-shape tensors with order-canonicalized accumulation:
    /// each coordinate adds its addends in sorted value order, so the
    /// result is invariant to the order of `parts`. Used by neighborhood
    /// aggregation to keep inference exactly permutation-equivariant.
    pub fn sum_vecs(&self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(SgrError::Contract("sum_vecs of zero tensors".into()));
        }
        let shape = parts[0].shape().to_vec();
        for p in parts {
            if p.shape() != shape {
                return Err(SgrError::Dimension(format!(
                    "sum_vecs shapes differ: {:?} vs {:?}",
                    shape,
                    p.shape()
                )));
            }
        }
        let n = parts[0].numel();
        let mut out = vec![0.0; n];
        let mut column: Vec<f64> = Vec::with_capacity(parts.len());
        for (j, slot) in out.iter_mut().enumerate() {
            column.clear();
            for p in parts {
                column.push(p.data()[j]);
            }
            column.sort_by(f64::total_cmp);
            *slot = column.iter().sum();
        }
        let result = Tensor::from_vec(&shape, out)?;
        self.record(
            parts.to_vec(),
            &result,
            Box::new(|ins, _out, d| ins.iter().map(|_| d.to_vec()).collect()),
        );
        Ok(result)
    }

    /// Softmax over a rank-1 tensor, or row-wise over a rank-2 tensor.
    pub fn softmax(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, cols) = match x.rank() {
            1 => (1, x.numel()),
            2 => (x.shape()[0], x.shape()[1]),
            _ => {
                return Err(SgrError::Dimension(format!(
                    "softmax needs rank 1 or 2, got {:?}",
                    x.shape()
                )))
            }
        };
        if cols == 0 {
            return Err(SgrError::Contract("softmax over zero classes".into()));
        }
        let xd = x.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let slice = &xd[r * cols..(r + 1) * cols];
            let maxv = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &v) in slice.iter().enumerate() {
                let e = (v - maxv).exp();
                out[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                out[r * cols + j] /= denom;
            }
        }
        drop(xd);
        let result = Tensor::from_vec(x.shape(), out)?;
        self.record(
            vec![x.clone()],
            &result,
            Box::new(move |_ins, out, d| {
                let y = out.data();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let base = r * cols;
                    let mut dotp = 0.0;
                    for j in 0..cols {
                        dotp += d[base + j] * y[base + j];
                    }
                    for j in 0..cols {
                        dx[base + j] = y[base + j] * (d[base + j] - dotp);
                    }
                }
                vec![dx]
            }),
        );
        Ok(result)
    }

    // ── reductions ────────────────────────────────────────────────────

    /// Sum over `axis`, or over all elements when `axis` is None
    /// (an empty tensor sums to 0).
    pub fn sum(&self, x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
        self.reduce(x, axis, Reduction::Sum)
    }

    /// Arithmetic mean over `axis` or over all elements.
    pub fn mean(&self, x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
        self.reduce(x, axis, Reduction::Mean)
    }

    /// Maximum over `axis` or over all elements; the backward pass routes
    /// the gradient to the first maximal element of each slice.
    pub fn max(&self, x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
        self.reduce(x, axis, Reduction::Max)
    }

    fn reduce(&self, x: &Tensor, axis: Option<usize>, kind: Reduction) -> Result<Tensor> {
        if let Some(ax) = axis {
            if ax >= x.rank() {
                return Err(SgrError::Index(format!(
                    "reduction axis {ax} out of range for rank {}",
                    x.rank()
                )));
            }
        }
        // Describe the reduction as a set of slices over flat indices.
        let (out_shape, slices) = reduction_slices(x.shape(), axis);
        let xd = x.data();
        let mut out = Vec::with_capacity(slices.len());
        let mut arg = Vec::new();
        for slice in &slices {
            match kind {
                Reduction::Sum => out.push(slice.iter().map(|&i| xd[i]).sum()),
                Reduction::Mean => {
                    if slice.is_empty() {
                        return Err(SgrError::Contract("mean of an empty slice".into()));
                    }
                    out.push(slice.iter().map(|&i| xd[i]).sum::<f64>() / slice.len() as f64)
                }
                Reduction::Max => {
                    if slice.is_empty() {
                        return Err(SgrError::Contract("max of an empty slice".into()));
                    }
                    let mut best = slice[0];
                    for &i in slice {
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    arg.push(best);
                    out.push(xd[best]);
                }
            }
        }
        drop(xd);
        let result = Tensor::from_vec(&out_shape, out)?;
        let n = x.numel();
        self.record(
            vec![x.clone()],
            &result,
            Box::new(move |_ins, _out, d| {
                let mut dx = vec![0.0; n];
                match kind {
                    Reduction::Sum => {
                        for (s, slice) in slices.iter().enumerate() {
                            for &i in slice {
                                dx[i] += d[s];
                            }
                        }
                    }
                    Reduction::Mean => {
                        for (s, slice) in slices.iter().enumerate() {
                            let scale = 1.0 / slice.len() as f64;
                            for &i in slice {
                                dx[i] += d[s] * scale;
                            }
                        }
                    }
                    Reduction::Max => {
                        for (s, &best) in arg.iter().enumerate() {
                            dx[best] += d[s];
                        }
                    }
                }
                vec![dx]
            }),
        );
        Ok(result)
    }
}

#[derive(Clone, Copy)]
enum Reduction {
    Sum,
    Mean,
    Max,
}

/// Flat-index slices for a reduction: one slice per output element.
fn reduction_slices(shape: &[usize], axis: Option<usize>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let numel: usize = shape.iter().product();
    match axis {
        None => (vec![], vec![(0..numel).collect()]),
        Some(ax) => {
            let extent = shape[ax];
            let inner: usize = shape[ax + 1..].iter().product();
            let outer: usize = shape[..ax].iter().product();
            let mut out_shape = shape.to_vec();
            out_shape.remove(ax);
            let mut slices = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let slice = (0..extent).map(|e| (o * extent + e) * inner + i).collect();
                    slices.push(slice);
                }
            }
            (out_shape, slices)
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}
