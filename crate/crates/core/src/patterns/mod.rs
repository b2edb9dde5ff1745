//! Memory access traces of the benchmark kernels.
//!
//! A [`PatternSpec`] names a kernel and its log2 extents, written like
//! `MMijk(9;4)` or `Himeno(6,6,7;8)`: size parameters, then the element size
//! in bytes after the semicolon. Every array of a pattern is laid out with the
//! same chromosome, so a layout is always drawn from [`PatternSpec::shape`].
//!
//! Two-dimensional arrays are subscripted `X(row, col)` and the column is
//! coordinate dimension 0, so the canonical layout with dimension 0
//! contiguous is the usual row-major layout. Three-dimensional arrays
//! `X(i, j, k)` map `k` to dimension 0.

pub mod kernels;
mod native;

pub use native::NativeArrays;

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::cache::AccessKind;
use crate::layout::{Layout, LayoutError, Shape};
use kernels::ArrayMemory;

/// Upper bound on array base alignment, one typical cache line.
pub const BASE_ALIGN: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("cannot parse pattern {text:?}: {reason}")]
    Parse { text: String, reason: String },
    #[error("layout shape {found} does not match the pattern's array shape {expected}")]
    ShapeMismatch { expected: Shape, found: Shape },
    #[error("pattern needs {0} bytes of memory, more than a 64-bit address space")]
    TooLarge(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    MMijk,
    MMTijk,
    MMikj,
    MMTikj,
    Jacobi2D,
    Cholesky,
    Crout,
    Himeno,
}

impl PatternKind {
    pub const ALL: [PatternKind; 8] = [
        PatternKind::MMijk,
        PatternKind::MMTijk,
        PatternKind::MMikj,
        PatternKind::MMTikj,
        PatternKind::Jacobi2D,
        PatternKind::Cholesky,
        PatternKind::Crout,
        PatternKind::Himeno,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::MMijk => "MMijk",
            PatternKind::MMTijk => "MMTijk",
            PatternKind::MMikj => "MMikj",
            PatternKind::MMTikj => "MMTikj",
            PatternKind::Jacobi2D => "Jacobi2D",
            PatternKind::Cholesky => "Cholesky",
            PatternKind::Crout => "Crout",
            PatternKind::Himeno => "Himeno",
        }
    }

    /// Number of size parameters (`m`, `m,n` or `m,n,p`).
    pub fn arity(self) -> usize {
        match self {
            PatternKind::MMijk | PatternKind::MMikj | PatternKind::Cholesky | PatternKind::Crout => 1,
            PatternKind::MMTijk | PatternKind::MMTikj | PatternKind::Jacobi2D => 2,
            PatternKind::Himeno => 3,
        }
    }
}

/// A kernel with its size parameters (log2 extents) and element size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternSpec {
    kind: PatternKind,
    params: Vec<u32>,
    element_size: u64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, params: &[u32], element_size: u64) -> Result<Self, PatternError> {
        let spec = PatternSpec {
            kind,
            params: params.to_vec(),
            element_size,
        };
        let fail = |reason: String| {
            Err(PatternError::Parse {
                text: spec.to_string(),
                reason,
            })
        };
        if params.len() != kind.arity() {
            return fail(format!(
                "{} takes {} size parameter(s), got {}",
                kind.name(),
                kind.arity(),
                params.len()
            ));
        }
        if params.contains(&0) {
            return fail("size parameters must be at least 1".into());
        }
        if !element_size.is_power_of_two() {
            return fail(format!("element size {element_size} is not a power of two"));
        }
        spec.arrays()?;
        Ok(spec)
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn params(&self) -> &[u32] {
        &self.params
    }

    pub fn element_size(&self) -> u64 {
        self.element_size
    }

    fn m(&self) -> u32 {
        self.params[0]
    }

    fn n(&self) -> u32 {
        self.params[1]
    }

    /// Shape shared by the pattern's arrays, which is the shape of the
    /// chromosome.
    pub fn shape(&self) -> Shape {
        self.arrays()
            .expect("validated pattern")
            .into_iter()
            .next()
            .expect("every pattern has arrays")
            .1
    }

    /// Array names and shapes in binding order.
    pub fn arrays(&self) -> Result<Vec<(&'static str, Shape)>, PatternError> {
        let p = &self.params;
        let square = || Shape::new(vec![p[0], p[0]]);
        let arrays = match self.kind {
            PatternKind::MMijk | PatternKind::MMikj => {
                let s = square()?;
                vec![("A", s.clone()), ("B", s.clone()), ("C", s)]
            }
            PatternKind::MMTijk | PatternKind::MMTikj => {
                let ab = Shape::new(vec![self.n(), self.m()])?;
                vec![("A", ab.clone()), ("B", ab), ("C", square()?)]
            }
            PatternKind::Jacobi2D => {
                let s = Shape::new(vec![self.n(), self.m()])?;
                vec![("src", s.clone()), ("dst", s)]
            }
            PatternKind::Cholesky => {
                let s = square()?;
                vec![("A", s.clone()), ("L", s)]
            }
            PatternKind::Crout => {
                let s = square()?;
                vec![("A", s.clone()), ("LU", s)]
            }
            PatternKind::Himeno => {
                let s = Shape::new(vec![p[2], p[1], p[0]])?;
                kernels::himeno_arrays::NAMES
                    .iter()
                    .map(|&name| (name, s.clone()))
                    .collect()
            }
        };
        Ok(arrays)
    }

    /// Load and store totals of the closed-form count model, with a flag
    /// telling whether the generated trace matches them exactly.
    pub fn trace_counts(&self) -> TraceCounts {
        let m = self.m();
        let pow = |e: u32| 1u64 << e;
        let (loads, stores, exact) = match self.kind {
            PatternKind::MMijk => (2 * pow(3 * m), pow(2 * m), true),
            PatternKind::MMTijk => (2 * pow(2 * m + self.n()), pow(2 * m), true),
            PatternKind::MMikj => (3 * pow(3 * m), pow(3 * m), true),
            PatternKind::MMTikj => {
                let e = 2 * m + self.n();
                (3 * pow(e), pow(e), true)
            }
            PatternKind::Jacobi2D => {
                let e = m + self.n();
                (4 * pow(e), pow(e), false)
            }
            PatternKind::Cholesky => (2 * pow(2 * m), pow(2 * m) / 2, false),
            PatternKind::Crout => (7 * pow(2 * m) / 2, pow(2 * m), false),
            PatternKind::Himeno => {
                let e = self.params.iter().sum();
                (24 * pow(e), pow(e), false)
            }
        };
        TraceCounts { loads, stores, exact }
    }

    fn run<M: ArrayMemory>(&self, mem: &mut M) {
        let ext = |e: u32| 1u64 << e;
        let p = &self.params;
        match self.kind {
            PatternKind::MMijk => kernels::mm_ijk(mem, ext(p[0])),
            PatternKind::MMikj => kernels::mm_ikj(mem, ext(p[0])),
            PatternKind::MMTijk => kernels::mmt_ijk(mem, ext(p[0]), ext(p[1])),
            PatternKind::MMTikj => kernels::mmt_ikj(mem, ext(p[0]), ext(p[1])),
            PatternKind::Jacobi2D => kernels::jacobi2d(mem, ext(p[0]), ext(p[1])),
            PatternKind::Cholesky => kernels::cholesky(mem, ext(p[0])),
            PatternKind::Crout => kernels::crout(mem, ext(p[0])),
            PatternKind::Himeno => kernels::himeno(mem, ext(p[0]), ext(p[1]), ext(p[2])),
        }
    }
}

impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(u32::to_string).collect();
        write!(f, "{}({};{})", self.kind.name(), params.join(","), self.element_size)
    }
}

impl FromStr for PatternSpec {
    type Err = PatternError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| PatternError::Parse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let text_trim = text.trim();
        let (name, rest) = text_trim
            .split_once('(')
            .ok_or_else(|| fail("expected NAME(params;element_size)"))?;
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| fail("missing closing parenthesis"))?;
        let kind = PatternKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| fail("unknown pattern name"))?;
        let (params, size) = inner
            .split_once(';')
            .ok_or_else(|| fail("expected `;` before the element size"))?;
        let params = params
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| fail("size parameters must be nonnegative integers"))?;
        let size = size
            .trim()
            .parse::<u64>()
            .map_err(|_| fail("element size must be an integer"))?;
        PatternSpec::new(kind, &params, size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceCounts {
    pub loads: u64,
    pub stores: u64,
    /// False when the closed forms are only approximations of the trace.
    pub exact: bool,
}

/// One array placed in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayBinding {
    pub name: &'static str,
    pub layout: Layout,
    /// Byte address of element 0.
    pub base: u64,
    pub element_size: u64,
}

impl ArrayBinding {
    pub fn shape(&self) -> &Shape {
        self.layout.shape()
    }

    pub fn size_bytes(&self) -> u64 {
        self.shape().num_elements() * self.element_size
    }

    /// Byte address of the element at C-order subscripts `index`.
    #[inline]
    pub fn address(&self, index: &[u64]) -> u64 {
        let mut coord = [0u64; 3];
        let n = index.len();
        for (slot, &x) in coord.iter_mut().zip(index.iter().rev()) {
            *slot = x;
        }
        self.base + self.layout.linear_index_unchecked(&coord[..n]) * self.element_size
    }

    pub fn contains(&self, address: u64) -> bool {
        (self.base..self.base + self.size_bytes()).contains(&address)
    }
}

/// Re-fits a layout to a shape with the same number of dimensions but
/// different bit counts. Surplus occurrences of a dimension are dropped from
/// the most significant end; missing ones are appended there.
pub fn adapt_layout(layout: &Layout, shape: &Shape) -> Result<Layout, LayoutError> {
    if layout.shape() == shape {
        return Ok(layout.clone());
    }
    let target = shape.bits();
    let mut used = vec![0u32; target.len()];
    let mut ranks = Vec::with_capacity(shape.total_bits() as usize);
    for &r in layout.ranks() {
        if r < target.len() && used[r] < target[r] {
            used[r] += 1;
            ranks.push(r);
        }
    }
    for (d, (&want, &have)) in target.iter().zip(&used).enumerate() {
        ranks.extend(std::iter::repeat_n(d, (want - have) as usize));
    }
    Layout::new(ranks, shape.clone())
}

/// Places the pattern's arrays consecutively from address 0, all using
/// `layout` (re-fitted where an array's shape differs). Each base is aligned
/// to the smaller of the array's size and [`BASE_ALIGN`].
pub fn bind_arrays(spec: &PatternSpec, layout: &Layout) -> Result<Vec<ArrayBinding>, PatternError> {
    let expected = spec.shape();
    if layout.shape() != &expected {
        return Err(PatternError::ShapeMismatch {
            expected,
            found: layout.shape().clone(),
        });
    }
    let too_large = || PatternError::TooLarge(spec.to_string());
    let mut cursor = 0u64;
    let mut bindings = Vec::new();
    for (name, shape) in spec.arrays()? {
        let size = shape
            .num_elements()
            .checked_mul(spec.element_size)
            .ok_or_else(too_large)?;
        let align = size.min(BASE_ALIGN);
        let base = cursor.checked_next_multiple_of(align).ok_or_else(too_large)?;
        cursor = base.checked_add(size).ok_or_else(too_large)?;
        bindings.push(ArrayBinding {
            name,
            layout: adapt_layout(layout, &shape)?,
            base,
            element_size: spec.element_size,
        });
    }
    Ok(bindings)
}

/// Bytes spanned by a binding list, padding included.
pub fn footprint(bindings: &[ArrayBinding]) -> u64 {
    bindings.iter().map(|b| b.base + b.size_bytes()).max().unwrap_or(0)
}

/// One element-sized memory access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessEvent {
    pub kind: AccessKind,
    pub address: u64,
    pub size: u64,
}

struct Tracer<'a, F> {
    bindings: &'a [ArrayBinding],
    sink: F,
}

impl<F: FnMut(AccessEvent)> ArrayMemory for Tracer<'_, F> {
    #[inline]
    fn load(&mut self, array: usize, index: &[u64]) -> f64 {
        let b = &self.bindings[array];
        (self.sink)(AccessEvent {
            kind: AccessKind::Load,
            address: b.address(index),
            size: b.element_size,
        });
        0.0
    }

    #[inline]
    fn store(&mut self, array: usize, index: &[u64], _value: f64) {
        let b = &self.bindings[array];
        (self.sink)(AccessEvent {
            kind: AccessKind::Store,
            address: b.address(index),
            size: b.element_size,
        });
    }
}

/// Streams the kernel's accesses, in loop-nest order, into `sink`.
pub fn generate_trace<F: FnMut(AccessEvent)>(spec: &PatternSpec, layout: &Layout, sink: F) -> Result<(), PatternError> {
    let bindings = bind_arrays(spec, layout)?;
    let mut tracer = Tracer {
        bindings: &bindings,
        sink,
    };
    spec.run(&mut tracer);
    Ok(())
}

/// [`generate_trace`] collected into a vector. Only for small patterns.
pub fn collect_trace(spec: &PatternSpec, layout: &Layout) -> Result<Vec<AccessEvent>, PatternError> {
    let mut events = Vec::new();
    generate_trace(spec, layout, |e| events.push(e))?;
    Ok(events)
}

/// Writes events one per line as `L 0x<hex>` or `S 0x<hex>`.
pub fn write_trace<W: Write>(out: &mut W, events: impl IntoIterator<Item = AccessEvent>) -> io::Result<()> {
    for e in events {
        let tag = match e.kind {
            AccessKind::Load => 'L',
            AccessKind::Store => 'S',
        };
        writeln!(out, "{tag} {:#x}", e.address)?;
    }
    Ok(())
}

/// Reads the format of [`write_trace`]; every event gets `size` bytes.
pub fn read_trace<R: BufRead>(input: R, size: u64) -> io::Result<Vec<AccessEvent>> {
    let bad = |line: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad trace line {line:?}"));
    let mut events = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (tag, addr) = line.split_once(' ').ok_or_else(|| bad(line))?;
        let kind = match tag {
            "L" => AccessKind::Load,
            "S" => AccessKind::Store,
            _ => return Err(bad(line)),
        };
        let hex = addr.trim().trim_start_matches("0x");
        let address = u64::from_str_radix(hex, 16).map_err(|_| bad(line))?;
        events.push(AccessEvent { kind, address, size });
    }
    Ok(events)
}
