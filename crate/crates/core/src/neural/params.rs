//! Flat parameter storage.
//!
//! Every tensor lives in one `Vec<f64>`; a [`Tensor`] is an offset and a
//! row-major shape into it. Gradients use the same layout, so optimizers and
//! gradient checks see a single flat vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    #[inline]
    pub fn slice<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.offset..self.offset + self.len()]
    }

    #[inline]
    pub fn slice_mut<'a>(&self, flat: &'a mut [f64]) -> &'a mut [f64] {
        &mut flat[self.offset..self.offset + self.len()]
    }

    #[inline]
    pub fn row<'a>(&self, flat: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.offset + r * self.cols;
        &flat[start..start + self.cols]
    }

    #[inline]
    pub fn row_mut<'a>(&self, flat: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let start = self.offset + r * self.cols;
        &mut flat[start..start + self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub group: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub infos: Vec<TensorInfo>,
}

impl ParamStore {
    pub fn alloc(&mut self, name: impl Into<String>, group: impl Into<String>, rows: usize, cols: usize) -> Tensor {
        let name = name.into();
        assert!(
            self.infos.iter().all(|i| i.name != name),
            "tensor `{name}` registered twice"
        );
        let tensor = Tensor {
            offset: self.values.len(),
            rows,
            cols,
        };
        self.values.resize(self.values.len() + rows * cols, 0.0);
        self.infos.push(TensorInfo {
            name,
            group: group.into(),
            tensor,
        });
        tensor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.infos.iter().find(|i| i.name == name)
    }

    /// Group names in registration order, each once.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for info in &self.infos {
            if !out.contains(&info.group) {
                out.push(info.group.clone());
            }
        }
        out
    }

    /// Flat coordinates belonging to `group`.
    pub fn group_coords(&self, group: &str) -> Vec<usize> {
        self.infos
            .iter()
            .filter(|i| i.group == group)
            .flat_map(|i| i.tensor.range())
            .collect()
    }
}

/// `out = M x` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += M x`.
#[inline]
pub fn matvec_add(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Mᵀ y`.
#[inline]
pub fn matvec_t_add(m: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    for (&yi, row) in y.iter().zip(m.chunks_exact(cols)) {
        if yi != 0.0 {
            axpy(yi, row, out);
        }
    }
}

/// `G += y xᵀ`.
#[inline]
pub fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(g.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            axpy(yi, x, row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let mut p = ParamStore::default();
        let a = p.alloc("a", "g1", 2, 3);
        let b = p.alloc("b", "g2", 4, 1);
        let c = p.alloc("c", "g1", 1, 1);
        assert_eq!(a.offset, 0);
        assert_eq!(b.offset, 6);
        assert_eq!(c.offset, 10);
        assert_eq!(p.len(), 11);
        assert_eq!(p.groups(), vec!["g1", "g2"]);
        assert_eq!(p.group_coords("g1"), vec![0, 1, 2, 3, 4, 5, 10]);
    }

    #[test]
    #[should_panic]
    fn duplicate_names_panic() {
        let mut p = ParamStore::default();
        p.alloc("a", "g", 1, 1);
        p.alloc("a", "g", 1, 1);
    }

    #[test]
    fn linear_algebra() {
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        matvec(&m, 3, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut t = [0.0; 3];
        matvec_t_add(&m, 3, &[1.0, 1.0], &mut t);
        assert_eq!(t, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        outer_add(&mut g, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert_eq!(dot(&[1.0; 7], &[2.0; 7]), 14.0);
    }
}
