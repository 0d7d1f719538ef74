//! Uniform cell-centered grids, scalar fields and the conservative
//! finite-volume operators built on them.
//!
//! Cells are stored row-major: the value of cell `(i, j)` lives at
//! `j * nx + i`, with `i` running along x. Face fields keep x-faces and
//! y-faces in separate arrays; the x-face `(i, j)` sits between cells
//! `(i - 1, j)` and `(i, j)`, so faces `i = 0` and `i = nx` lie on the
//! boundary.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 2 cells per direction, got {nx}x{ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("domain lengths must be positive and finite, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("field has {got} values, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at cell ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("field dump parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform rectangular grid on `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooFewCells { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::BadExtent { lx, ly });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n x n` grid on the side-`l` square.
    pub fn square(n: usize, l: f64) -> Result<Self, GridError> {
        Self::new(n, n, l, l)
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

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// |Ω|
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-center coordinates of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Same domain with each cell count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: self.nx * factor,
            ny: self.ny * factor,
            ..*self
        }
    }
}

/// Cell-average values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Fails on the first NaN or infinite value.
    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(k) => Err(GridError::NonFinite {
                i: k % self.grid.nx(),
                j: k / self.grid.nx(),
            }),
        }
    }

    /// Writes the plain-text dump: a `nx ny lx ly` header followed by `ny`
    /// rows of `nx` values, row `j = 0` first.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        let g = &self.grid;
        writeln!(out, "{} {} {:.17e} {:.17e}", g.nx, g.ny, g.lx, g.ly)?;
        let mut line = String::new();
        for row in self.values.chunks(g.nx) {
            line.clear();
            for (k, x) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{:.16e}", x).expect("write to String");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, GridError> {
        let parse_err = |line: usize, msg: String| GridError::Parse { line, msg };
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(parse_err(1, format!("expected `nx ny lx ly`, got `{header}`")));
        }
        let nx = parts[0].parse().map_err(|e| parse_err(1, format!("nx: {e}")))?;
        let ny = parts[1].parse().map_err(|e| parse_err(1, format!("ny: {e}")))?;
        let lx = parts[2].parse().map_err(|e| parse_err(1, format!("lx: {e}")))?;
        let ly = parts[3].parse().map_err(|e| parse_err(1, format!("ly: {e}")))?;
        let grid = GridSpec::new(nx, ny, lx, ly)?;
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let x: f64 = tok
                    .parse()
                    .map_err(|e| parse_err(k + 1, format!("`{tok}`: {e}")))?;
                values.push(x);
            }
            if values.len() - before != nx {
                return Err(parse_err(
                    k + 1,
                    format!("expected {nx} values, got {}", values.len() - before),
                ));
            }
        }
        ScalarField::from_vec(grid, values)
    }
}

/// Values on cell faces: `x` holds `(nx + 1) * ny` x-faces, `y` holds
/// `nx * (ny + 1)` y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxField {
    grid: GridSpec,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FaceFluxField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            x: vec![0.0; (grid.nx() + 1) * grid.ny()],
            y: vec![0.0; grid.nx() * (grid.ny() + 1)],
        }
    }

    pub fn from_parts(grid: GridSpec, x: Vec<f64>, y: Vec<f64>) -> Result<Self, GridError> {
        let (ex, ey) = ((grid.nx() + 1) * grid.ny(), grid.nx() * (grid.ny() + 1));
        if x.len() != ex {
            return Err(GridError::LengthMismatch { expected: ex, got: x.len() });
        }
        if y.len() != ey {
            return Err(GridError::LengthMismatch { expected: ey, got: y.len() });
        }
        Ok(Self { grid, x, y })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn xi(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx() + 1) + i
    }

    #[inline]
    pub fn yi(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx() + i
    }

    pub fn x_face(&self, i: usize, j: usize) -> f64 {
        self.x[self.xi(i, j)]
    }

    pub fn y_face(&self, i: usize, j: usize) -> f64 {
        self.y[self.yi(i, j)]
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn x_values_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn y_values_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(self.y.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// True when every boundary face carries exactly zero.
    pub fn has_zero_boundary(&self) -> bool {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        (0..ny).all(|j| self.x_face(0, j) == 0.0 && self.x_face(nx, j) == 0.0)
            && (0..nx).all(|i| self.y_face(i, 0) == 0.0 && self.y_face(i, ny) == 0.0)
    }

    /// Sets all boundary faces to zero.
    pub fn zero_boundary(&mut self) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for j in 0..ny {
            let (a, b) = (self.xi(0, j), self.xi(nx, j));
            self.x[a] = 0.0;
            self.x[b] = 0.0;
        }
        for i in 0..nx {
            let (a, b) = (self.yi(i, 0), self.yi(i, ny));
            self.y[a] = 0.0;
            self.y[b] = 0.0;
        }
    }
}

/// Midpoint quadrature of `f` over the domain.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// Cell-weighted inner product `hx * hy * Σ f g`.
pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    debug_assert_eq!(f.grid, g.grid);
    f.grid.cell_area() * dot(&f.values, &g.values)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Face-centered gradient; boundary faces are zero (Neumann closure).
pub fn gradient_faces(f: &ScalarField) -> FaceFluxField {
    let g = f.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let v = &f.values;
    let mut out = FaceFluxField::zeros(g);
    for j in 0..ny {
        for i in 1..nx {
            let k = out.xi(i, j);
            out.x[k] = (v[g.idx(i, j)] - v[g.idx(i - 1, j)]) / hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = out.yi(i, j);
            out.y[k] = (v[g.idx(i, j)] - v[g.idx(i, j - 1)]) / hy;
        }
    }
    out
}

/// Conservative divergence of a face field.
pub fn divergence(flux: &FaceFluxField) -> ScalarField {
    let g = flux.grid;
    let mut out = vec![0.0; g.len()];
    divergence_into(flux, &mut out);
    ScalarField { grid: g, values: out }
}

pub(crate) fn divergence_into(flux: &FaceFluxField, out: &mut [f64]) {
    let g = flux.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    for j in 0..ny {
        for i in 0..nx {
            out[g.idx(i, j)] = (flux.x[flux.xi(i + 1, j)] - flux.x[flux.xi(i, j)]) / hx
                + (flux.y[flux.yi(i, j + 1)] - flux.y[flux.yi(i, j)]) / hy;
        }
    }
}

/// Five-point Neumann Laplacian. Uses the same face-difference arithmetic
/// as `divergence(gradient_faces(f))`, so the two agree bit for bit.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.grid.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField {
        grid: f.grid,
        values: out,
    }
}

pub(crate) fn laplacian_into(g: &GridSpec, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let c = f[row + i];
            let west = if i > 0 { (c - f[row + i - 1]) / hx } else { 0.0 };
            let east = if i + 1 < nx { (f[row + i + 1] - c) / hx } else { 0.0 };
            let south = if j > 0 { (c - f[row - nx + i]) / hy } else { 0.0 };
            let north = if j + 1 < ny { (f[row + nx + i] - c) / hy } else { 0.0 };
            out[row + i] = (east - west) / hx + (north - south) / hy;
        }
    }
}

/// `∫|∇f|²` evaluated from squared face gradients, each weighted by the
/// cell area. Equals `-<Δf, f>` exactly in exact arithmetic.
pub fn gradient_energy(f: &ScalarField) -> f64 {
    let grad = gradient_faces(f);
    let s: f64 = grad.x.iter().chain(grad.y.iter()).map(|d| d * d).sum();
    f.grid.cell_area() * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn field_stats(f: &ScalarField) -> FieldStats {
    let area = f.grid.cell_area();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let (mut sum, mut abs, mut sq) = (0.0, 0.0, 0.0);
    for &x in &f.values {
        min = min.min(x);
        max = max.max(x);
        sum += x;
        abs += x.abs();
        sq += x * x;
    }
    FieldStats {
        min,
        max,
        mean: sum / f.values.len() as f64,
        l1: area * abs,
        l2: (area * sq).sqrt(),
        linf: max.abs().max(min.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(nx: usize, ny: usize, lx: f64, ly: f64) -> GridSpec {
        GridSpec::new(nx, ny, lx, ly).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, f64::NAN).is_err());
        let grid = g(4, 2, 1.0, 0.5);
        assert_eq!(grid.hx(), 0.25);
        assert_eq!(grid.hy(), 0.25);
    }

    #[test]
    fn integrate_examples() {
        let sq = g(8, 8, 0.1, 0.1);
        assert!((integrate(&ScalarField::constant(sq, 3.0)) - 0.03).abs() < 1e-15);
        assert_eq!(integrate(&ScalarField::zeros(sq)), 0.0);
        let two = g(2, 2, 1.0, 1.0);
        let f = ScalarField::from_vec(two, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(integrate(&f), 2.5);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let f = ScalarField::constant(g(5, 7, 0.1, 0.2), 4.2);
        assert!(laplacian_neumann(&f).values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_point_source_stencil() {
        let grid = g(3, 3, 3.0, 3.0);
        let mut vals = vec![0.0; 9];
        vals[grid.idx(1, 1)] = 1.0;
        let lap = laplacian_neumann(&ScalarField::from_vec(grid, vals).unwrap());
        let expected = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(lap.values(), &expected);
    }

    #[test]
    fn gradient_two_cells() {
        let grid = g(2, 2, 2.0, 2.0);
        let f = ScalarField::from_vec(grid, vec![0.0, 3.0, 0.0, 3.0]).unwrap();
        let grad = gradient_faces(&f);
        assert_eq!(grad.x_face(1, 0), 3.0);
        assert_eq!(grad.x_face(1, 1), 3.0);
        assert!(grad.y_values().iter().all(|&x| x == 0.0));
        assert!(grad.has_zero_boundary());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let f = ScalarField::constant(g(6, 4, 1.0, 1.0), -2.0);
        assert_eq!(gradient_faces(&f).max_abs(), 0.0);
    }

    #[test]
    fn divergence_telescopes_on_two_cells() {
        let grid = g(2, 2, 2.0, 2.0);
        let mut flux = FaceFluxField::zeros(grid);
        let k = flux.xi(1, 0);
        flux.x_values_mut()[k] = 3.0;
        let d = divergence(&flux);
        assert_eq!(d.at(0, 0), 3.0);
        assert_eq!(d.at(1, 0), -3.0);
        assert_eq!(d.at(0, 1), 0.0);
        assert_eq!(divergence(&FaceFluxField::zeros(grid)).values(), &[0.0; 4]);
    }

    #[test]
    fn stats_examples() {
        let grid = g(4, 4, 1.0, 1.0);
        let s = field_stats(&ScalarField::constant(grid, 2.5));
        assert_eq!((s.min, s.max, s.mean), (2.5, 2.5, 2.5));

        let pair = g(2, 2, 1.0, 1.0);
        let f = ScalarField::from_vec(pair, vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(field_stats(&f).l1, 0.25 * 2.0);

        let mut spike = ScalarField::constant(grid, 1.0);
        spike.values_mut()[5] = 1e6;
        assert_eq!(field_stats(&spike).linf, 1e6);
    }

    #[test]
    fn laplacian_matches_div_grad_exactly() {
        let grid = g(7, 5, 0.1, 0.3);
        let f = ScalarField::from_fn(grid, |x, y| (30.0 * x).sin() * (7.0 * y).exp());
        assert_eq!(laplacian_neumann(&f), divergence(&gradient_faces(&f)));
    }

    #[test]
    fn gradient_energy_is_minus_inner_laplacian() {
        let grid = g(9, 6, 0.1, 0.1);
        let f = ScalarField::from_fn(grid, |x, y| (40.0 * x).cos() + y * y * 100.0);
        let e = gradient_energy(&f);
        let lhs = -inner(&laplacian_neumann(&f), &f);
        assert!((e - lhs).abs() <= 1e-12 * e.abs());
    }

    #[test]
    fn dump_round_trip() {
        let grid = g(3, 2, 0.1, 0.05);
        let f = ScalarField::from_fn(grid, |x, y| x.exp() - 3.0 * y + 1.0 / 3.0);
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3 2 "));
        assert_eq!(text.lines().count(), 3);
        let back = ScalarField::read_dump(&buf[..]).unwrap();
        assert_eq!(back.grid(), f.grid());
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dump_parse_errors_carry_line() {
        let bad = "2 2 1 1\n1 2\n3\n";
        match ScalarField::read_dump(bad.as_bytes()) {
            Err(GridError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_is_detected() {
        let mut f = ScalarField::constant(g(3, 3, 1.0, 1.0), 1.0);
        f.values_mut()[4] = f64::NAN;
        assert!(matches!(f.check_finite(), Err(GridError::NonFinite { i: 1, j: 1 })));
    }
}
