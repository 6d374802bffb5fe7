//! Continuum shapes, their lattice discretization with interior/boundary
//! classification, and the finite-difference operators acting on grid fields.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer offset vector on the lattice.
pub type Offset = Vec<i32>;

/// Stencil coefficients keyed by offset, kept exact.
pub type Stencil = BTreeMap<Offset, Ratio<i64>>;

/// Membership function of an implicit shape: non-positive inside.
pub type LevelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ShapeKind {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Implicit { name: String, level: LevelFn, lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone)]
pub struct ShapePredicate {
    kind: ShapeKind,
    dim: usize,
}

impl fmt::Debug for ShapePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ShapeKind::Box { lower, upper } => write!(f, "Box({lower:?}, {upper:?})"),
            ShapeKind::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            ShapeKind::Implicit { name, .. } => write!(f, "Implicit({name}, d={})", self.dim),
        }
    }
}

impl ShapePredicate {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Invalid("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Invalid("box bounds must be finite with lower <= upper".into()));
        }
        Ok(Self { dim: lower.len(), kind: ShapeKind::Box { lower, upper } })
    }

    /// The cube `[a, b]^d`.
    pub fn cube(d: usize, a: f64, b: f64) -> Result<Self> {
        Self::boxed(vec![a; d], vec![b; d])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Invalid("ball needs a nonempty center and positive radius".into()));
        }
        Ok(Self { dim: center.len(), kind: ShapeKind::Ball { center, radius } })
    }

    pub fn unit_ball(d: usize) -> Result<Self> {
        Self::ball(vec![0.0; d], 1.0)
    }

    /// Shape `{x : level(x) <= 0}` contained in the bounding box `[lower, upper]`.
    pub fn implicit(name: &str, lower: Vec<f64>, upper: Vec<f64>, level: LevelFn) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Invalid("implicit shape needs a bounding box".into()));
        }
        Ok(Self {
            dim: lower.len(),
            kind: ShapeKind::Implicit { name: name.to_string(), level, lower, upper },
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ShapeKind {
        &self.kind
    }

    pub fn membership(&self, x: &[f64]) -> bool {
        match &self.kind {
            ShapeKind::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| *a <= *v && *v <= *b)
            }
            ShapeKind::Ball { center, radius } => {
                let s: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                s <= radius * radius
            }
            ShapeKind::Implicit { level, .. } => level(x) <= 0.0,
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            ShapeKind::Box { lower, upper } | ShapeKind::Implicit { lower, upper, .. } => {
                (lower.clone(), upper.clone())
            }
            ShapeKind::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Membership of the grid point `h·k`. Points within rounding distance of
    /// the boundary are counted as lying on it, hence inside.
    fn contains_grid_point(&self, k: &[i32], h: f64) -> bool {
        let eps = 1e-10;
        match &self.kind {
            ShapeKind::Box { lower, upper } => k.iter().enumerate().all(|(i, &ki)| {
                let x = ki as f64;
                x >= lower[i] / h - eps && x <= upper[i] / h + eps
            }),
            ShapeKind::Ball { center, radius } => {
                let r = radius / h;
                let s: f64 = k.iter().zip(center).map(|(&ki, c)| (ki as f64 - c / h).powi(2)).sum();
                s <= r * r * (1.0 + eps)
            }
            ShapeKind::Implicit { level, .. } => {
                let x: Vec<f64> = k.iter().map(|&ki| ki as f64 * h).collect();
                level(&x) <= eps * h
            }
        }
    }
}

/// Serializable description of a box or ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeSpec {
    Box { bounds: Vec<[f64; 2]> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ShapeSpec {
    pub fn to_predicate(&self) -> Result<ShapePredicate> {
        match self {
            ShapeSpec::Box { bounds } => ShapePredicate::boxed(
                bounds.iter().map(|b| b[0]).collect(),
                bounds.iter().map(|b| b[1]).collect(),
            ),
            ShapeSpec::Ball { center, radius } => ShapePredicate::ball(center.clone(), *radius),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointClass {
    /// `B_h`: in `V_h` but its neighbourhood leaves `V_h`.
    Boundary,
    /// `B_h*`: in `R_h` but its neighbourhood leaves `R_h`.
    NearBoundary,
    /// `R_h*`: neighbourhood inside `R_h`.
    Interior,
}

impl PointClass {
    pub fn in_r(self) -> bool {
        !matches!(self, PointClass::Boundary)
    }

    pub fn label(self) -> &'static str {
        match self {
            PointClass::Boundary => "B",
            PointClass::NearBoundary => "Bstar",
            PointClass::Interior => "Rstar",
        }
    }
}

/// The offsets of `N(ξ)`: `±e_i`, `±2e_i` and `±e_i ± e_j` for `i ≠ j`.
pub fn neighborhood(d: usize) -> Vec<Offset> {
    let mut out = Vec::with_capacity(2 * d * d + 2 * d);
    for i in 0..d {
        for s in [-1, 1] {
            let mut o = vec![0; d];
            o[i] = s;
            out.push(o.clone());
            o[i] = 2 * s;
            out.push(o);
        }
        for j in i + 1..d {
            for si in [-1, 1] {
                for sj in [-1, 1] {
                    let mut o = vec![0; d];
                    o[i] = si;
                    o[j] = sj;
                    out.push(o);
                }
            }
        }
    }
    out.sort();
    out
}

/// Dense lookup table from lattice coordinates to point indices over a bounding box.
#[derive(Clone, Debug)]
struct LatticeIndex {
    lo: Vec<i32>,
    ext: Vec<usize>,
    table: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl LatticeIndex {
    fn slot(&self, k: &[i32]) -> Option<usize> {
        let mut s = 0usize;
        for i in 0..k.len() {
            let r = k[i] - self.lo[i];
            if r < 0 || r as usize >= self.ext[i] {
                return None;
            }
            s = s * self.ext[i] + r as usize;
        }
        Some(s)
    }

    fn get(&self, k: &[i32]) -> Option<usize> {
        self.slot(k).and_then(|s| match self.table[s] {
            ABSENT => None,
            p => Some(p as usize),
        })
    }
}

/// Lattice discretization `V_h = closure(D) ∩ hZ^d` with its classification.
#[derive(Clone, Debug)]
pub struct GridDomain {
    shape: ShapePredicate,
    d: usize,
    h: f64,
    coords: Vec<i32>,
    class: Vec<PointClass>,
    rows: Vec<usize>,
    row_of: Vec<u32>,
    index: LatticeIndex,
}

impl GridDomain {
    /// Enumerates `V_h` in lexicographic order and classifies every point by
    /// the second-neighbourhood rule.
    pub fn classify(shape: &ShapePredicate, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Invalid(format!("grid spacing must be positive, got {h}")));
        }
        let d = shape.dimension();
        let (lower, upper) = shape.bounds();
        let lo: Vec<i32> = lower.iter().map(|a| (a / h - 1e-9).ceil() as i32).collect();
        let hi: Vec<i32> = upper.iter().map(|b| (b / h + 1e-9).floor() as i32).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Degenerate("no grid points inside the shape".into()));
        }
        let ext: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let total: usize = ext.iter().product();
        let mut table = vec![ABSENT; total];
        let mut coords = Vec::new();
        let mut k = lo.clone();
        let mut n = 0u32;
        for slot in 0..total {
            if shape.contains_grid_point(&k, h) {
                table[slot] = n;
                coords.extend_from_slice(&k);
                n += 1;
            }
            for i in (0..d).rev() {
                if k[i] < hi[i] {
                    k[i] += 1;
                    break;
                }
                k[i] = lo[i];
            }
        }
        if n == 0 {
            return Err(Error::Degenerate("V_h is empty".into()));
        }
        let index = LatticeIndex { lo, ext, table };
        let nb = neighborhood(d);
        let npts = n as usize;
        let mut scratch = vec![0i32; d];
        let mut shifted = |p: usize, o: &[i32], coords: &[i32]| -> Option<usize> {
            for i in 0..d {
                scratch[i] = coords[p * d + i] + o[i];
            }
            index.get(&scratch)
        };
        let in_r: Vec<bool> = (0..npts)
            .map(|p| nb.iter().all(|o| shifted(p, o, &coords).is_some()))
            .collect();
        let class: Vec<PointClass> = (0..npts)
            .map(|p| {
                if !in_r[p] {
                    PointClass::Boundary
                } else if nb.iter().all(|o| shifted(p, o, &coords).is_some_and(|q| in_r[q])) {
                    PointClass::Interior
                } else {
                    PointClass::NearBoundary
                }
            })
            .collect();
        let mut rows = Vec::new();
        let mut row_of = vec![ABSENT; npts];
        for p in 0..npts {
            if class[p].in_r() {
                row_of[p] = rows.len() as u32;
                rows.push(p);
            }
        }
        Ok(Self { shape: shape.clone(), d, h, coords, class, rows, row_of, index })
    }

    pub fn shape(&self) -> &ShapePredicate {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kappa(&self) -> f64 {
        1.0 / (2.0 * self.d as f64)
    }

    pub fn num_points(&self) -> usize {
        self.class.len()
    }

    pub fn point(&self, p: usize) -> &[i32] {
        &self.coords[p * self.d..(p + 1) * self.d]
    }

    pub fn position(&self, p: usize) -> Vec<f64> {
        self.point(p).iter().map(|&k| k as f64 * self.h).collect()
    }

    pub fn class(&self, p: usize) -> PointClass {
        self.class[p]
    }

    pub fn classes(&self) -> &[PointClass] {
        &self.class
    }

    pub fn point_index(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.d {
            return None;
        }
        self.index.get(k)
    }

    /// Number of rows, i.e. `|R_h|`.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// True when `R_h` is empty (spacing too coarse for the shape).
    pub fn interior_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Point index of the given row of `R_h`.
    pub fn row_point(&self, row: usize) -> usize {
        self.rows[row]
    }

    pub fn row_of_point(&self, p: usize) -> Option<usize> {
        match self.row_of[p] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    /// Row of the lattice point `k`, if it lies in `R_h`.
    pub fn row_of_coord(&self, k: &[i32]) -> Option<usize> {
        self.point_index(k).and_then(|p| self.row_of_point(p))
    }

    pub fn row_coord(&self, row: usize) -> &[i32] {
        self.point(self.rows[row])
    }

    pub fn count(&self, class: PointClass) -> usize {
        self.class.iter().filter(|&&c| c == class).count()
    }

    /// Writes the CSV `x_1..x_d,class` with lattice-scaled coordinates.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.d).map(|i| format!("x_{i}")).collect();
        header.push("class".into());
        wr.write_record(&header).map_err(csv_err)?;
        for p in 0..self.num_points() {
            let mut rec: Vec<String> = self.position(p).iter().map(|x| format!("{x}")).collect();
            rec.push(self.class[p].label().into());
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorVariant {
    Delta1,
    Deltah,
    Bilaplacian,
    BilaplacianNormalized,
    Lh2,
}

/// Offset → coefficient map of the given operator before its `h`-power scaling.
pub fn stencil_weights(variant: OperatorVariant, d: usize) -> Stencil {
    let d_i = d as i64;
    let mut s = Stencil::new();
    let unit = |i: usize, k: i32| {
        let mut o = vec![0; d];
        o[i] = k;
        o
    };
    match variant {
        OperatorVariant::Delta1 | OperatorVariant::Deltah => {
            let (c, n) = if variant == OperatorVariant::Delta1 {
                (Ratio::from_integer(-1), Ratio::new(1, 2 * d_i))
            } else {
                (Ratio::from_integer(-2 * d_i), Ratio::from_integer(1))
            };
            s.insert(vec![0; d], c);
            for i in 0..d {
                s.insert(unit(i, 1), n);
                s.insert(unit(i, -1), n);
            }
        }
        OperatorVariant::Bilaplacian | OperatorVariant::BilaplacianNormalized | OperatorVariant::Lh2 => {
            let scale = if variant == OperatorVariant::BilaplacianNormalized {
                Ratio::new(1, 4 * d_i * d_i)
            } else {
                Ratio::from_integer(1)
            };
            s.insert(vec![0; d], scale * (4 * d_i * d_i + 2 * d_i));
            for o in neighborhood(d) {
                let l1: i32 = o.iter().map(|v| v.abs()).sum();
                let c = if l1 == 1 {
                    -4 * d_i
                } else if o.iter().any(|v| v.abs() == 2) {
                    1
                } else {
                    2
                };
                s.insert(o, scale * c);
            }
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    variant: OperatorVariant,
    d: usize,
    stencil: Stencil,
}

impl DiscreteOperator {
    pub fn new(variant: OperatorVariant, d: usize) -> Self {
        Self { variant, d, stencil: stencil_weights(variant, d) }
    }

    pub fn variant(&self) -> OperatorVariant {
        self.variant
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    fn h_power(&self) -> i32 {
        match self.variant {
            OperatorVariant::Delta1 | OperatorVariant::BilaplacianNormalized => 0,
            OperatorVariant::Deltah => -2,
            OperatorVariant::Bilaplacian | OperatorVariant::Lh2 => -4,
        }
    }

    /// Applies the operator pointwise on `V_h` to a field given on `V_h`
    /// (zero outside).
    pub fn apply(&self, field: &[f64], domain: &GridDomain) -> Result<Vec<f64>> {
        if domain.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: domain.dim() });
        }
        if field.len() != domain.num_points() {
            return Err(Error::DimensionMismatch { expected: domain.num_points(), got: field.len() });
        }
        let terms: Vec<(&Offset, f64)> = self
            .stencil
            .iter()
            .map(|(o, c)| (o, *c.numer() as f64 / *c.denom() as f64))
            .collect();
        let h = domain.h();
        let base = h.powi(self.h_power());
        let mut k = vec![0i32; self.d];
        let mut out = vec![0.0; field.len()];
        for (p, slot) in out.iter_mut().enumerate() {
            let factor = match (self.variant, domain.class(p)) {
                (OperatorVariant::Lh2, PointClass::Boundary) => continue,
                (OperatorVariant::Lh2, PointClass::NearBoundary) => base * h * h,
                _ => base,
            };
            let x = domain.point(p);
            let mut acc = 0.0;
            for (o, c) in &terms {
                for i in 0..self.d {
                    k[i] = x[i] + o[i];
                }
                if let Some(q) = domain.point_index(&k) {
                    acc += c * field[q];
                }
            }
            *slot = factor * acc;
        }
        Ok(out)
    }
}

/// One axis-ray witness of the B₂* property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct B2Witness {
    pub point: Vec<i32>,
    pub axis: usize,
    pub sign: i32,
    /// Step `k` such that `ξ + k h e` and `ξ + (k+1) h e` lie in `B_h`.
    pub step: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct B2Report {
    pub pass: bool,
    pub checked: usize,
    pub witnesses: Vec<B2Witness>,
    pub failures: Vec<Vec<i32>>,
}

/// Checks that every point of `B_h*` sees two consecutive `B_h` points along
/// some axis ray within distance `K h`.
pub fn verify_b2star(domain: &GridDomain, k_max: usize) -> Result<B2Report> {
    if k_max == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    let d = domain.dim();
    let in_b = |k: &[i32]| {
        domain.point_index(k).is_some_and(|q| domain.class(q) == PointClass::Boundary)
    };
    let mut witnesses = Vec::new();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut k = vec![0i32; d];
    for p in 0..domain.num_points() {
        if domain.class(p) != PointClass::NearBoundary {
            continue;
        }
        checked += 1;
        let x = domain.point(p);
        let mut found = None;
        'rays: for axis in 0..d {
            for sign in [1i32, -1] {
                let mut prev = false;
                for step in 1..=k_max {
                    k.copy_from_slice(x);
                    k[axis] += sign * step as i32;
                    let cur = in_b(&k);
                    if cur && prev {
                        found = Some(B2Witness { point: x.to_vec(), axis, sign, step: step - 1 });
                        break 'rays;
                    }
                    prev = cur;
                }
            }
        }
        match found {
            Some(w) => witnesses.push(w),
            None => failures.push(x.to_vec()),
        }
    }
    Ok(B2Report { pass: failures.is_empty(), checked, witnesses, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_half_spacing() {
        let shape = ShapePredicate::cube(2, -1.0, 1.0).unwrap();
        let g = GridDomain::classify(&shape, 0.5).unwrap();
        assert_eq!(g.num_points(), 25);
        assert_eq!(g.num_rows(), 1);
        assert_eq!(g.row_coord(0), &[0, 0]);
        assert_eq!(g.count(PointClass::Boundary), 24);
    }

    #[test]
    fn bilaplacian_stencils() {
        let s = stencil_weights(OperatorVariant::Bilaplacian, 1);
        assert_eq!(s.len(), 5);
        assert_eq!(s[&vec![0]], Ratio::from_integer(6));
        assert_eq!(s[&vec![1]], Ratio::from_integer(-4));
        assert_eq!(s[&vec![-2]], Ratio::from_integer(1));
        let s = stencil_weights(OperatorVariant::Bilaplacian, 2);
        assert_eq!(s.len(), 13);
        assert_eq!(s[&vec![0, 0]], Ratio::from_integer(20));
        assert_eq!(s[&vec![0, -1]], Ratio::from_integer(-8));
        assert_eq!(s[&vec![1, -1]], Ratio::from_integer(2));
        assert_eq!(s[&vec![2, 0]], Ratio::from_integer(1));
    }

    #[test]
    fn delta1_d3() {
        let s = stencil_weights(OperatorVariant::Delta1, 3);
        assert_eq!(s.len(), 7);
        assert_eq!(s[&vec![0, 0, 0]], Ratio::from_integer(-1));
        assert_eq!(s[&vec![0, 0, -1]], Ratio::new(1, 6));
    }

    #[test]
    fn empty_b2star_passes() {
        let shape = ShapePredicate::cube(2, -1.0, 1.0).unwrap();
        let g = GridDomain::classify(&shape, 1.0).unwrap();
        assert!(g.interior_empty());
        let r = verify_b2star(&g, 4).unwrap();
        assert!(r.pass);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn degenerate_is_error() {
        let shape = ShapePredicate::boxed(vec![0.1], vec![0.2]).unwrap();
        assert!(matches!(GridDomain::classify(&shape, 1.0), Err(Error::Degenerate(_))));
    }
}
