//! Uniform channel grid, fields stored on it, and second-order
//! central-difference stencils.
//!
//! The grid is periodic and cell-centered in `x` (node `i` sits at
//! `(i + 1/2) dx`) and wall-bounded in `y`, with node `0` on the lower wall and
//! node `ny - 1` on the upper wall. Storage is dense row-major with one row per
//! `y`-node, so the value at `(i, j)` lives at `j * nx + i`.
//!
//! Derivatives along `y` use central differences in the interior and one-sided
//! second-order differences on the wall rows. No ghost layers are stored.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    dx: f64,
    dy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 {
            return Err(Error::constraint("grid.nx", format!("must be >= 4, got {nx}")));
        }
        if ny < 4 {
            return Err(Error::constraint("grid.ny", format!("must be >= 4, got {ny}")));
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(Error::constraint("grid.lx", format!("must be > 0, got {lx}")));
        }
        if !(ly.is_finite() && ly > 0.0) {
            return Err(Error::constraint("grid.ly", format!("must be > 0, got {ly}")));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / (ny - 1) as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-centre coordinate of column `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Node coordinate of row `j`; rows `0` and `ny - 1` are the walls.
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if j + 1 == self.ny {
            self.ly
        } else {
            j as f64 * self.dy
        }
    }

    pub fn is_wall_row(&self, j: usize) -> bool {
        j == 0 || j + 1 == self.ny
    }

    /// Trapezoidal weight of row `j` (half weight on wall rows).
    #[inline]
    pub fn row_weight(&self, j: usize) -> f64 {
        if self.is_wall_row(j) {
            0.5
        } else {
            1.0
        }
    }

    /// Domain integral of a nodal quantity: uniform in `x`, trapezoidal in `y`.
    pub fn integrate(&self, data: &[f64]) -> f64 {
        assert_eq!(data.len(), self.len(), "integrand does not match grid");
        let mut total = 0.0;
        for (j, row) in data.chunks_exact(self.nx).enumerate() {
            let row_sum: f64 = row.iter().sum();
            total += self.row_weight(j) * row_sum;
        }
        total * self.dx * self.dy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    fn assert_same(&self, other: &Grid2D) {
        assert!(self == other, "fields live on different grids: {self:?} vs {other:?}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    data: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                data.push(f(grid.x(i), y));
            }
        }
        Self { grid, data }
    }

    pub fn from_vec(grid: Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.grid.idx(i, j);
        self.data[k] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        self.grid.assert_same(&other.grid);
        Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude over rows `1..ny-1`.
    pub fn max_abs_interior(&self) -> f64 {
        let nx = self.grid.nx;
        self.data[nx..self.data.len() - nx]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rotates the data by `shift` columns along the periodic direction.
    pub fn shift_x(&self, shift: usize) -> Self {
        let nx = self.grid.nx;
        let mut out = self.clone();
        for (src, dst) in self.data.chunks_exact(nx).zip(out.data.chunks_exact_mut(nx)) {
            for i in 0..nx {
                dst[(i + shift) % nx] = src[i];
            }
        }
        out
    }

    /// Writes the field as CSV: a `#` header line, then one row per `y`-node.
    pub fn write_csv<W: Write>(&self, name: &str, t: f64, mut out: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(
            out,
            "# field={name} nx={} ny={} lx={} ly={} t={}",
            g.nx,
            g.ny,
            fmt17(g.lx),
            fmt17(g.ly),
            fmt17(t)
        )?;
        let mut line = String::new();
        for row in self.data.chunks_exact(g.nx) {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{}", fmt17(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a field written by [`ScalarField2D::write_csv`]. Returns the field
    /// name, the time stamp and the field.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(String, f64, Self)> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty field file".into() })??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse { line: 1, message: "missing '#' header".into() })?;
        let mut name = None;
        let (mut nx, mut ny, mut lx, mut ly, mut t) = (None, None, None, None, None);
        for token in header.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("malformed header token '{token}'"),
            })?;
            let bad = |_| Error::Parse { line: 1, message: format!("bad value for {key}") };
            match key {
                "field" => name = Some(value.to_string()),
                "nx" => nx = Some(value.parse::<usize>().map_err(|_| bad(()))?),
                "ny" => ny = Some(value.parse::<usize>().map_err(|_| bad(()))?),
                "lx" => lx = Some(value.parse::<f64>().map_err(|_| bad(()))?),
                "ly" => ly = Some(value.parse::<f64>().map_err(|_| bad(()))?),
                "t" => t = Some(value.parse::<f64>().map_err(|_| bad(()))?),
                _ => {
                    return Err(Error::Parse { line: 1, message: format!("unknown header key '{key}'") })
                }
            }
        }
        let missing = |k: &str| Error::Parse { line: 1, message: format!("header lacks {k}") };
        let grid = Grid2D::new(
            nx.ok_or_else(|| missing("nx"))?,
            ny.ok_or_else(|| missing("ny"))?,
            lx.ok_or_else(|| missing("lx"))?,
            ly.ok_or_else(|| missing("ly"))?,
        )?;
        let mut data = Vec::with_capacity(grid.len());
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for cell in line.split(',') {
                let v = cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: row + 2,
                    message: format!("bad number '{cell}'"),
                })?;
                data.push(v);
            }
            if data.len() - before != grid.nx {
                return Err(Error::Parse {
                    line: row + 2,
                    message: format!("expected {} columns, got {}", grid.nx, data.len() - before),
                });
            }
        }
        let field = Self::from_vec(grid, data)?;
        Ok((name.ok_or_else(|| missing("field"))?, t.ok_or_else(|| missing("t"))?, field))
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    pub ux: ScalarField2D,
    pub uy: ScalarField2D,
}

impl VectorField2D {
    pub fn new(ux: ScalarField2D, uy: ScalarField2D) -> Self {
        ux.grid.assert_same(&uy.grid);
        Self { ux, uy }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::new(ScalarField2D::zeros(grid), ScalarField2D::zeros(grid))
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self::new(
            ScalarField2D::from_fn(grid, |x, y| f(x, y).0),
            ScalarField2D::from_fn(grid, |x, y| f(x, y).1),
        )
    }

    pub fn grid(&self) -> &Grid2D {
        &self.ux.grid
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        self.ux
            .data
            .iter()
            .zip(&self.uy.data)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// Largest component magnitude over rows `1..ny-1`.
    pub fn max_abs_interior(&self) -> f64 {
        self.ux.max_abs_interior().max(self.uy.max_abs_interior())
    }

    pub fn all_finite(&self) -> bool {
        self.ux.all_finite() && self.uy.all_finite()
    }

    pub fn shift_x(&self, shift: usize) -> Self {
        Self::new(self.ux.shift_x(shift), self.uy.shift_x(shift))
    }

    /// Zeroes both components on the wall rows.
    pub fn impose_no_slip(&mut self) {
        let g = self.ux.grid;
        let top = g.idx(0, g.ny - 1);
        for field in [&mut self.ux, &mut self.uy] {
            field.data[..g.nx].fill(0.0);
            field.data[top..].fill(0.0);
        }
    }
}

/// `∂f/∂x`, periodic central difference.
pub fn d_dx(f: &ScalarField2D) -> ScalarField2D {
    let g = f.grid;
    let nx = g.nx;
    let inv = 0.5 / g.dx;
    let mut out = ScalarField2D::zeros(g);
    for (src, dst) in f.data.chunks_exact(nx).zip(out.data.chunks_exact_mut(nx)) {
        for i in 0..nx {
            let e = src[(i + 1) % nx];
            let w = src[(i + nx - 1) % nx];
            dst[i] = (e - w) * inv;
        }
    }
    out
}

/// `∂f/∂y`: central in the interior, one-sided second order on the walls.
pub fn d_dy(f: &ScalarField2D) -> ScalarField2D {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv = 0.5 / g.dy;
    let d = &f.data;
    let mut out = ScalarField2D::zeros(g);
    let o = &mut out.data;
    for i in 0..nx {
        o[i] = (-3.0 * d[i] + 4.0 * d[nx + i] - d[2 * nx + i]) * inv;
        let top = (ny - 1) * nx + i;
        o[top] = (3.0 * d[top] - 4.0 * d[top - nx] + d[top - 2 * nx]) * inv;
    }
    for j in 1..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            o[k] = (d[k + nx] - d[k - nx]) * inv;
        }
    }
    out
}

/// `∂²f/∂x²`, periodic three-point stencil.
pub fn d2_dx2(f: &ScalarField2D) -> ScalarField2D {
    let g = f.grid;
    let nx = g.nx;
    let inv = 1.0 / (g.dx * g.dx);
    let mut out = ScalarField2D::zeros(g);
    for (src, dst) in f.data.chunks_exact(nx).zip(out.data.chunks_exact_mut(nx)) {
        for i in 0..nx {
            let e = src[(i + 1) % nx];
            let w = src[(i + nx - 1) % nx];
            dst[i] = (e - 2.0 * src[i] + w) * inv;
        }
    }
    out
}

/// `∂²f/∂y²`: three-point interior stencil, four-point one-sided on the walls.
pub fn d2_dy2(f: &ScalarField2D) -> ScalarField2D {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv = 1.0 / (g.dy * g.dy);
    let d = &f.data;
    let mut out = ScalarField2D::zeros(g);
    let o = &mut out.data;
    for i in 0..nx {
        o[i] = (2.0 * d[i] - 5.0 * d[nx + i] + 4.0 * d[2 * nx + i] - d[3 * nx + i]) * inv;
        let top = (ny - 1) * nx + i;
        o[top] = (2.0 * d[top] - 5.0 * d[top - nx] + 4.0 * d[top - 2 * nx] - d[top - 3 * nx]) * inv;
    }
    for j in 1..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            o[k] = (d[k + nx] - 2.0 * d[k] + d[k - nx]) * inv;
        }
    }
    out
}

pub fn gradient(f: &ScalarField2D) -> VectorField2D {
    VectorField2D::new(d_dx(f), d_dy(f))
}

pub fn divergence(v: &VectorField2D) -> ScalarField2D {
    let ddx = d_dx(&v.ux);
    let ddy = d_dy(&v.uy);
    ddx.zip_map(&ddy, |a, b| a + b)
}

/// Scalar vorticity `∂v_y/∂x − ∂v_x/∂y`.
pub fn curl_z(v: &VectorField2D) -> ScalarField2D {
    let a = d_dx(&v.uy);
    let b = d_dy(&v.ux);
    a.zip_map(&b, |p, q| p - q)
}

/// `∇∧(∇∧v)` in the plane: `(∂ω/∂y, −∂ω/∂x)` with `ω = curl_z(v)`.
pub fn curl_of_curl(v: &VectorField2D) -> VectorField2D {
    let w = curl_z(v);
    VectorField2D::new(d_dy(&w), d_dx(&w).map(|x| -x))
}

/// `∇·(v v)`: component `i` is `∂x(v_i v_x) + ∂y(v_i v_y)`.
pub fn advection_div(v: &VectorField2D) -> VectorField2D {
    let uu = v.ux.zip_map(&v.ux, |a, b| a * b);
    let uv = v.ux.zip_map(&v.uy, |a, b| a * b);
    let vv = v.uy.zip_map(&v.uy, |a, b| a * b);
    let x = d_dx(&uu).zip_map(&d_dy(&uv), |a, b| a + b);
    let y = d_dx(&uv).zip_map(&d_dy(&vv), |a, b| a + b);
    VectorField2D::new(x, y)
}

/// Five-point Laplacian.
pub fn laplacian(f: &ScalarField2D) -> ScalarField2D {
    d2_dx2(f).zip_map(&d2_dy2(f), |a, b| a + b)
}

pub fn vector_laplacian(v: &VectorField2D) -> VectorField2D {
    VectorField2D::new(laplacian(&v.ux), laplacian(&v.uy))
}

/// `∇·(ρv)` in conservative form.
///
/// Interior rows use central differences; each wall row is a half cell whose
/// only interior face carries the average of the two adjacent nodal fluxes.
/// With this closure the trapezoidal integral of the result vanishes for any
/// flux with zero wall-normal component.
pub fn mass_flux_divergence(v: &VectorField2D, rho: &ScalarField2D) -> ScalarField2D {
    let g = rho.grid;
    g.assert_same(&v.ux.grid);
    let (nx, ny) = (g.nx, g.ny);
    let fx = v.ux.zip_map(rho, |a, b| a * b);
    let fy = v.uy.zip_map(rho, |a, b| a * b);
    let mut out = d_dx(&fx);
    let (inv_c, inv_w) = (0.5 / g.dy, 1.0 / g.dy);
    let d = &fy.data;
    let o = &mut out.data;
    for i in 0..nx {
        o[i] += (d[nx + i] - d[i]) * inv_w;
        let top = (ny - 1) * nx + i;
        o[top] += (d[top] - d[top - nx]) * inv_w;
    }
    for j in 1..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            o[k] += (d[k + nx] - d[k - nx]) * inv_c;
        }
    }
    out
}
