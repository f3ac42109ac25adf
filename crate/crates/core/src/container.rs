//! MAP-Elites grid archive.
//!
//! The descriptor space is cut into an equally spaced grid and each cell keeps
//! the single fittest genotype that landed in it. Cells are addressed by a
//! mixed-radix index with the first descriptor axis most significant.

use crate::error::{check_finite, Error, Result};
use crate::ndnet::ParamVector;
use crate::seeding::Rng;
use rand::Rng as _;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() != lower.len() || dims.len() != upper.len() {
            return Err(Error::spec(format!(
                "grid with {} dims, {} lower and {} upper bounds",
                dims.len(),
                lower.len(),
                upper.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::spec("grid axes need at least one cell"));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::spec("grid cell count overflows"));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::spec(format!("grid bounds [{lo}, {hi}] are not an interval")));
            }
        }
        Ok(GridSpec { dims, lower, upper })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn axis_index(&self, axis: usize, d: f64) -> usize {
        let (lo, hi, n) = (self.lower[axis], self.upper[axis], self.dims[axis]);
        let x = d.clamp(lo, hi);
        let i = ((x - lo) / (hi - lo) * n as f64).floor() as usize;
        i.min(n - 1)
    }

    pub fn grid_index(&self, descriptor: &[f64]) -> Result<usize> {
        if descriptor.len() != self.dims.len() {
            return Err(Error::spec(format!(
                "descriptor of length {} for a {}-axis grid",
                descriptor.len(),
                self.dims.len()
            )));
        }
        check_finite("descriptor", descriptor)?;
        let mut cell = 0;
        for (axis, &d) in descriptor.iter().enumerate() {
            cell = cell * self.dims[axis] + self.axis_index(axis, d);
        }
        Ok(cell)
    }

    /// Per-axis indices of a composite cell index.
    pub fn axis_indices(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            out[axis] = cell % self.dims[axis];
            cell /= self.dims[axis];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Init,
    Ga,
    Pg,
    Actor,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Init, Source::Ga, Source::Pg, Source::Actor];

    pub fn name(self) -> &'static str {
        match self {
            Source::Init => "init",
            Source::Ga => "ga",
            Source::Pg => "pg",
            Source::Actor => "actor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Source::ALL.into_iter().find(|src| src.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Elite {
    pub genotype: ParamVector,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    pub source: Source,
    pub generation_added: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InsertKind {
    NewCell,
    Improved,
    Rejected,
}

impl InsertKind {
    pub fn name(self) -> &'static str {
        match self {
            InsertKind::NewCell => "new_cell",
            InsertKind::Improved => "improved",
            InsertKind::Rejected => "rejected",
        }
    }

    pub fn is_addition(self) -> bool {
        self != InsertKind::Rejected
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsertOutcome {
    pub kind: InsertKind,
    pub cell: usize,
    /// Candidate minus incumbent fitness; zero for a new cell.
    pub fitness_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchiveMetrics {
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    spec: GridSpec,
    cells: BTreeMap<usize, Elite>,
}

impl Archive {
    pub fn new(spec: GridSpec) -> Self {
        Archive {
            spec,
            cells: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, cell: usize) -> Option<&Elite> {
        self.cells.get(&cell)
    }

    /// Occupied cells in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells.iter().map(|(&c, e)| (c, e))
    }

    pub fn try_insert(
        &mut self,
        genotype: ParamVector,
        fitness: f64,
        descriptor: Vec<f64>,
        source: Source,
        generation: u64,
    ) -> Result<InsertOutcome> {
        check_finite("fitness", &[fitness])?;
        let cell = self.spec.grid_index(&descriptor)?;
        let elite = Elite {
            genotype,
            fitness,
            descriptor,
            source,
            generation_added: generation,
        };
        let outcome = match self.cells.get(&cell) {
            None => InsertOutcome {
                kind: InsertKind::NewCell,
                cell,
                fitness_delta: 0.0,
            },
            Some(inc) => InsertOutcome {
                kind: if fitness > inc.fitness {
                    InsertKind::Improved
                } else {
                    InsertKind::Rejected
                },
                cell,
                fitness_delta: fitness - inc.fitness,
            },
        };
        if outcome.kind.is_addition() {
            self.cells.insert(cell, elite);
        }
        Ok(outcome)
    }

    /// `k` independent uniform draws over occupied cells.
    ///
    /// Each draw is one `random_range(0..len)` over cells in ascending index
    /// order; external replays of a run rely on this exact contract.
    pub fn select_uniform(&self, rng: &mut Rng, k: usize) -> Result<Vec<&Elite>> {
        if self.cells.is_empty() {
            return Err(Error::EmptyArchive);
        }
        let elites: Vec<&Elite> = self.cells.values().collect();
        Ok((0..k).map(|_| elites[rng.random_range(0..elites.len())]).collect())
    }

    pub fn metrics(&self, fitness_floor: f64) -> ArchiveMetrics {
        let mut qd_score = 0.0;
        let mut max_fitness: Option<f64> = None;
        for e in self.cells.values() {
            qd_score += e.fitness - fitness_floor;
            max_fitness = Some(max_fitness.map_or(e.fitness, |m| m.max(e.fitness)));
        }
        ArchiveMetrics {
            qd_score,
            coverage: self.cells.len() as f64 / self.spec.cell_count() as f64,
            max_fitness,
        }
    }

    /// SHA-256 over every stored bit, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.spec.dims {
            h.update((*d as u64).to_le_bytes());
        }
        for v in self.spec.lower.iter().chain(&self.spec.upper) {
            h.update(v.to_le_bytes());
        }
        for (&cell, e) in &self.cells {
            h.update((cell as u64).to_le_bytes());
            h.update(e.genotype.to_bytes());
            h.update(e.fitness.to_le_bytes());
            for d in &e.descriptor {
                h.update(d.to_le_bytes());
            }
            h.update([e.source as u8]);
            h.update(e.generation_added.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub const DUMP_CSV: &str = "archive.csv";
pub const DUMP_BIN: &str = "archive.bin";

fn join(values: &[impl ToString]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Writes `archive.csv` and its genotype sidecar `archive.bin` into `dir`.
///
/// `header` lines are emitted as `# ` comments ahead of the grid geometry.
/// Floats use Rust's shortest round-trip formatting, so a reload is exact.
pub fn write_dump(archive: &Archive, dir: &Path, header: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = BufWriter::new(fs::File::create(dir.join(DUMP_CSV))?);
    for line in header {
        writeln!(csv, "# {line}")?;
    }
    let spec = archive.spec();
    writeln!(csv, "# grid_dims={}", join(spec.dims()))?;
    writeln!(csv, "# grid_lower={}", join(spec.lower()))?;
    writeln!(csv, "# grid_upper={}", join(spec.upper()))?;
    let desc_cols: Vec<String> = (0..spec.dims().len()).map(|i| format!("d{i}")).collect();
    writeln!(
        csv,
        "cell_index,{},fitness,source,generation_added",
        desc_cols.join(",")
    )?;
    let mut bin = BufWriter::new(fs::File::create(dir.join(DUMP_BIN))?);
    for (cell, e) in archive.iter() {
        writeln!(
            csv,
            "{cell},{},{},{},{}",
            join(&e.descriptor),
            e.fitness,
            e.source.name(),
            e.generation_added
        )?;
        bin.write_all(&(cell as u64).to_le_bytes())?;
        e.genotype.write_to(&mut bin)?;
    }
    csv.flush()?;
    bin.flush()?;
    Ok(())
}

fn bad_dump(msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| bad_dump(format!("bad {what} value `{v}`")))
        })
        .collect()
}

/// Comment lines of a dump, without the `# ` prefix.
pub fn read_dump_header(dir: &Path) -> Result<Vec<String>> {
    let f = BufReader::new(fs::File::open(dir.join(DUMP_CSV))?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) => out.push(rest.trim_start().to_string()),
            None => break,
        }
    }
    Ok(out)
}

pub fn read_dump(dir: &Path) -> Result<Archive> {
    let header = read_dump_header(dir)?;
    let field = |key: &str| -> Result<&str> {
        // the geometry lines written by `write_dump` come last
        header
            .iter()
            .rev()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| bad_dump(format!("dump header lacks {key}")))
    };
    let spec = GridSpec::new(
        parse_list(field("grid_dims")?, "grid_dims")?,
        parse_list(field("grid_lower")?, "grid_lower")?,
        parse_list(field("grid_upper")?, "grid_upper")?,
    )?;
    let n_desc = spec.dims().len();

    let mut genotypes = BTreeMap::new();
    let mut bin = BufReader::new(fs::File::open(dir.join(DUMP_BIN))?);
    loop {
        let mut cell = [0u8; 8];
        match bin.read_exact(&mut cell) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let g = ParamVector::read_from(&mut bin)?;
        genotypes.insert(u64::from_le_bytes(cell) as usize, g);
    }

    let mut archive = Archive::new(spec);
    let text = fs::read_to_string(dir.join(DUMP_CSV))?;
    let rows = text.lines().filter(|l| !l.starts_with('#')).skip(1);
    for row in rows.filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != n_desc + 4 {
            return Err(bad_dump(format!("row `{row}` has {} columns", cols.len())));
        }
        let cell: usize = cols[0].parse().map_err(|_| bad_dump("bad cell_index"))?;
        let descriptor = parse_list(&cols[1..=n_desc].join(","), "descriptor")?;
        let fitness: f64 = cols[n_desc + 1].parse().map_err(|_| bad_dump("bad fitness"))?;
        let source = Source::parse(cols[n_desc + 2]).ok_or_else(|| bad_dump("bad source"))?;
        let generation_added = cols[n_desc + 3].parse().map_err(|_| bad_dump("bad generation_added"))?;
        let genotype = genotypes
            .remove(&cell)
            .ok_or_else(|| bad_dump(format!("no genotype for cell {cell}")))?;
        if archive.spec.grid_index(&descriptor)? != cell {
            return Err(bad_dump(format!("descriptor of cell {cell} maps elsewhere")));
        }
        archive.cells.insert(
            cell,
            Elite {
                genotype,
                fitness,
                descriptor,
                source,
                generation_added,
            },
        );
    }
    if let Some(cell) = genotypes.keys().next() {
        return Err(bad_dump(format!("genotype for cell {cell} has no csv row")));
    }
    Ok(archive)
}

/// Linear blend through a few viridis anchor colors, `t` in [0, 1].
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Fitness heatmap of a 2-D archive. Axis 0 runs left to right, axis 1 bottom
/// to top; empty cells are light gray.
pub fn heatmap_svg(archive: &Archive, title: &str) -> Result<String> {
    let dims = archive.spec().dims();
    if dims.len() != 2 {
        return Err(Error::spec(format!(
            "heatmap needs a 2-D grid, got {} axes",
            dims.len()
        )));
    }
    let (nx, ny) = (dims[0], dims[1]);
    let cell_px = (480 / nx.max(ny)).max(2);
    let (w, h) = (nx * cell_px, ny * cell_px);
    let (margin, top) = (10, 30);
    let (lo, hi) = archive
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, e)| {
            (lo.min(e.fitness), hi.max(e.fitness))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w + 2 * margin,
        h + top + margin,
        w + 2 * margin,
        h + top + margin
    );
    let title = title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="20" font-family="sans-serif" font-size="13">{title}</text>"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{margin}" y="{top}" width="{w}" height="{h}" fill="#e6e6e6"/>"##
    );
    for (cell, e) in archive.iter() {
        let ix = archive.spec().axis_indices(cell);
        let x = margin + ix[0] * cell_px;
        let y = top + (ny - 1 - ix[1]) * cell_px;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{}"><title>cell {cell}: {}</title></rect>"#,
            color((e.fitness - lo) / span),
            e.fitness
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
