//! Cell-centred grids on intervals and rectangles, scalar fields and their
//! integral quantities.
//!
//! All quadratures are midpoint sums over cells. Gradients live on interior
//! faces; boundary faces carry zero flux, which is what makes the discrete
//! Laplacian symmetric and mass-telescoping.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 4;

/// A uniform cell-centred grid on `(0, Lx)` or `(0, Lx) × (0, Ly)`.
///
/// Values are stored x-fastest: cell `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
}

impl Grid {
    pub fn line(length: f64, cells: usize) -> Result<Self> {
        Self::validate_axis(length, cells)?;
        Ok(Grid {
            dim: 1,
            extents: [length, 1.0],
            cells: [cells, 1],
        })
    }

    pub fn rect(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::validate_axis(lx, nx)?;
        Self::validate_axis(ly, ny)?;
        Ok(Grid {
            dim: 2,
            extents: [lx, ly],
            cells: [nx, ny],
        })
    }

    /// Build from per-axis slices of length 1 or 2.
    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self> {
        match (extents, cells) {
            ([l], [n]) => Self::line(*l, *n),
            ([lx, ly], [nx, ny]) => Self::rect(*lx, *ly, *nx, *ny),
            _ => Err(Error::InvalidGrid(format!(
                "need 1 or 2 axes with matching lengths, got extents {extents:?} and cells {cells:?}"
            ))),
        }
    }

    fn validate_axis(length: f64, cells: usize) -> Result<()> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {length}")));
        }
        if cells < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {cells}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    /// Cell width along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn h_min(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// Cell-centre coordinate along `axis` of index `i`.
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h(axis)
    }

    /// `(x, y)` of flat cell `idx` (`y = 0` in 1D).
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx % self.cells[0], idx / self.cells[0]);
        let y = if self.dim == 2 { self.center(1, j) } else { 0.0 };
        (self.center(0, i), y)
    }

    /// Field sampled at cell centres.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.len())
            .map(|idx| {
                let (x, y) = self.coords(idx);
                f(x, y)
            })
            .collect();
        ScalarField {
            grid: *self,
            values,
        }
    }

    /// The same domain with each axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Grid {
        let mut g = *self;
        for a in 0..self.dim {
            g.cells[a] *= factor;
        }
        g
    }
}

/// Cell values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldShape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
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

    /// `∫ f`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `⟨f⟩ = ∫f / |Ω|`.
    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.measure()
    }

    /// `(Σ |f_i|^p vol)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "lp_norm needs p >= 1, got {p}");
        let vol = self.grid.cell_volume();
        if p == 1.0 {
            return self.values.iter().map(|v| v.abs()).sum::<f64>() * vol;
        }
        if p == 2.0 {
            return (self.values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
    }

    /// `‖f − c‖_p^p`.
    pub fn lp_dist_pow(&self, c: f64, p: f64) -> f64 {
        let vol = self.grid.cell_volume();
        self.values.iter().map(|v| (v - c).abs().powf(p)).sum::<f64>() * vol
    }

    /// `‖f − c‖_p`.
    pub fn lp_dist(&self, c: f64, p: f64) -> f64 {
        if p == 2.0 {
            let vol = self.grid.cell_volume();
            return (self.values.iter().map(|v| (v - c) * (v - c)).sum::<f64>() * vol).sqrt();
        }
        self.lp_dist_pow(c, p).powf(1.0 / p)
    }

    /// Discrete `‖∇f‖₂²`: squared face difference quotients times the cell
    /// volume, summed over interior faces.
    pub fn grad_sq_norm(&self) -> f64 {
        grad_sq_weighted(&self.grid, &self.values, |_, _| 1.0)
    }

    /// `∫ f g`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    /// `f − ⟨f⟩`.
    pub fn zero_mean(&self) -> ScalarField {
        self.shifted(-self.mean())
    }

    /// Mirror image `x ↦ Lx − x` (and `y ↦ Ly − y` in 2D).
    pub fn reflected(&self) -> ScalarField {
        let mut values = self.values.clone();
        values.reverse();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Discrete no-flux Laplacian.
    pub fn laplacian(&self) -> ScalarField {
        let mut out = vec![0.0; self.values.len()];
        neumann_laplacian(&self.grid, &self.values, &mut out);
        ScalarField {
            grid: self.grid,
            values: out,
        }
    }
}

/// `Σ_faces weight(f_left, f_right) · ((f_right − f_left)/h)² · vol` over
/// interior faces. Faces with zero jump contribute nothing, so `weight` is
/// only ever evaluated across a genuine difference.
pub(crate) fn grad_sq_weighted(
    grid: &Grid,
    f: &[f64],
    mut weight: impl FnMut(f64, f64) -> f64,
) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    let hx2 = grid.h(0) * grid.h(0);
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        for w in row.windows(2) {
            let d = w[1] - w[0];
            if d != 0.0 {
                acc += weight(w[0], w[1]) * d * d / hx2;
            }
        }
    }
    if grid.dim() == 2 {
        let hy2 = grid.h(1) * grid.h(1);
        for j in 0..ny - 1 {
            for i in 0..nx {
                let (lo, hi) = (f[j * nx + i], f[(j + 1) * nx + i]);
                let d = hi - lo;
                if d != 0.0 {
                    acc += weight(lo, hi) * d * d / hy2;
                }
            }
        }
    }
    acc * vol
}

/// `out = L_h f` for the no-flux three-point (1D) or five-point (2D)
/// Laplacian, assembled face by face so that `Σ out` telescopes.
pub fn neumann_laplacian(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    debug_assert_eq!(f.len(), nx * ny);
    let cx = 1.0 / (grid.h(0) * grid.h(0));
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..ny {
        let base = j * nx;
        for i in 0..nx - 1 {
            let flux = (f[base + i + 1] - f[base + i]) * cx;
            out[base + i] += flux;
            out[base + i + 1] -= flux;
        }
    }
    if grid.dim() == 2 {
        let cy = 1.0 / (grid.h(1) * grid.h(1));
        for j in 0..ny - 1 {
            for i in 0..nx {
                let (lo, hi) = (j * nx + i, (j + 1) * nx + i);
                let flux = (f[hi] - f[lo]) * cy;
                out[lo] += flux;
                out[hi] -= flux;
            }
        }
    }
}

/// Number of header lines in a field snapshot CSV.
pub const SNAPSHOT_HEADER_LINES: usize = 8;

impl ScalarField {
    /// Write a snapshot: an 8-line header (7 `#` metadata lines and the
    /// column line) followed by one row per cell.
    ///
    /// ```text
    /// # chemolab field snapshot v1
    /// # name=u
    /// # time=12.5
    /// # dim=1
    /// # extents=10
    /// # cells=256
    /// # h=0.0390625
    /// i,x,value
    /// ```
    ///
    /// 2D snapshots use the columns `i,j,x,y,value`.
    pub fn write_csv(&self, w: impl Write, name: &str, time: f64) -> Result<()> {
        let mut w = BufWriter::new(w);
        let g = &self.grid;
        let join = |xs: Vec<String>| xs.join(",");
        let io = |e| Error::io("<snapshot>", e);
        writeln!(w, "# chemolab field snapshot v1").map_err(io)?;
        writeln!(w, "# name={name}").map_err(io)?;
        writeln!(w, "# time={time:?}").map_err(io)?;
        writeln!(w, "# dim={}", g.dim()).map_err(io)?;
        writeln!(w, "# extents={}", join(g.extents().iter().map(|e| format!("{e:?}")).collect()))
            .map_err(io)?;
        writeln!(w, "# cells={}", join(g.cells().iter().map(|c| c.to_string()).collect()))
            .map_err(io)?;
        writeln!(w, "# h={}", join((0..g.dim()).map(|a| format!("{:?}", g.h(a))).collect()))
            .map_err(io)?;
        let mut csv = csv::Writer::from_writer(w);
        if g.dim() == 1 {
            csv.write_record(["i", "x", "value"])?;
            for (i, v) in self.values.iter().enumerate() {
                csv.write_record(&[i.to_string(), format!("{:?}", g.center(0, i)), format!("{v:?}")])?;
            }
        } else {
            csv.write_record(["i", "j", "x", "y", "value"])?;
            for (idx, v) in self.values.iter().enumerate() {
                let (i, j) = (idx % g.nx(), idx / g.nx());
                csv.write_record(&[
                    i.to_string(),
                    j.to_string(),
                    format!("{:?}", g.center(0, i)),
                    format!("{:?}", g.center(1, j)),
                    format!("{v:?}"),
                ])?;
            }
        }
        csv.flush().map_err(io)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, name: &str, time: f64) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, name, time)
    }

    /// Read a snapshot written by [`write_csv`](Self::write_csv).
    pub fn load_csv(path: &Path) -> Result<Snapshot> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file))
    }

    pub fn read_csv(mut r: impl BufRead) -> Result<Snapshot> {
        let bad = |msg: String| Error::config("snapshot", msg);
        let mut meta = std::collections::HashMap::new();
        for _ in 0..SNAPSHOT_HEADER_LINES - 1 {
            let mut line = String::new();
            r.read_line(&mut line).map_err(|e| Error::io("<snapshot>", e))?;
            let body = line
                .trim()
                .strip_prefix('#')
                .ok_or_else(|| bad(format!("expected metadata line, got {line:?}")))?
                .trim()
                .to_string();
            if let Some((k, v)) = body.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |key: &str| {
            meta.get(key)
                .cloned()
                .ok_or_else(|| bad(format!("missing `{key}` in snapshot header")))
        };
        let extents = get("extents")?
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("extents: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let cells = get("cells")?
            .split(',')
            .map(|s| s.parse::<usize>().map_err(|e| bad(format!("cells: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(&extents, &cells)?;
        let time = get("time")?.parse::<f64>().map_err(|e| bad(format!("time: {e}")))?;
        let name = get("name")?;

        let mut csv = csv::Reader::from_reader(r);
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0usize;
        for rec in csv.records() {
            let rec = rec?;
            let parse_idx = |k: usize| -> Result<usize> {
                rec.get(k)
                    .ok_or_else(|| bad("short row".into()))?
                    .parse()
                    .map_err(|e| bad(format!("index: {e}")))
            };
            let (idx, col) = if grid.dim() == 1 {
                (parse_idx(0)?, 2)
            } else {
                (parse_idx(1)? * grid.nx() + parse_idx(0)?, 4)
            };
            if idx >= grid.len() {
                return Err(bad(format!("cell index {idx} out of range")));
            }
            values[idx] = rec
                .get(col)
                .ok_or_else(|| bad("short row".into()))?
                .parse()
                .map_err(|e| bad(format!("value: {e}")))?;
            seen += 1;
        }
        if seen != grid.len() || values.iter().any(|v| v.is_nan()) {
            return Err(bad(format!("expected {} rows, got {seen}", grid.len())));
        }
        Ok(Snapshot {
            name,
            time,
            field: ScalarField::new(grid, values)?,
        })
    }
}

/// A named field at a given time, as stored on disk.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub name: String,
    pub time: f64,
    pub field: ScalarField,
}

/// Grid description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(&self.extents, &self.cells)
    }
}
