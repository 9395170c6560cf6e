use crate::error::{Error, Result};

/// Grid vertex `(i, j)` at `(-1 + i h, -1 + j h)`, `0 <= i, j <= K`.
pub type Vertex = (usize, usize);

/// Uniform triangulation of `(-1, 1)^2`.
///
/// Each of the `K^2` squares is cut along its bottom-left to top-right
/// diagonal. Only the `(K-1)^2` interior vertices carry unknowns; they are
/// numbered lexicographically with `x` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    k: usize,
    h: f64,
    triangles: Vec<[Vertex; 3]>,
}

impl Mesh2D {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 || !k.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "subdivisions per side must be even and at least 2, got {k}"
            )));
        }
        let mut triangles = Vec::with_capacity(2 * k * k);
        for j in 0..k {
            for i in 0..k {
                triangles.push([(i, j), (i + 1, j), (i + 1, j + 1)]);
                triangles.push([(i, j), (i + 1, j + 1), (i, j + 1)]);
            }
        }
        Ok(Self { k, h: 2.0 / k as f64, triangles })
    }

    pub fn subdivisions(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_interior(&self) -> usize {
        (self.k - 1) * (self.k - 1)
    }

    pub fn triangles(&self) -> &[[Vertex; 3]] {
        &self.triangles
    }

    /// Area of every triangle, `h^2 / 2`.
    pub fn triangle_area(&self) -> f64 {
        0.5 * self.h * self.h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    pub fn point(&self, (i, j): Vertex) -> (f64, f64) {
        (self.coord(i), self.coord(j))
    }

    /// Unknown index of a vertex, or `None` on the boundary.
    pub fn interior_index(&self, (i, j): Vertex) -> Option<usize> {
        let k = self.k;
        (i > 0 && j > 0 && i < k && j < k).then(|| (j - 1) * (k - 1) + (i - 1))
    }

    pub fn interior_vertex(&self, idx: usize) -> Vertex {
        let m = self.k - 1;
        (idx % m + 1, idx / m + 1)
    }

    /// Values of `g` at the interior vertices.
    pub fn interpolate(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.num_interior())
            .map(|idx| {
                let (x, y) = self.point(self.interior_vertex(idx));
                g(x, y)
            })
            .collect()
    }
}
