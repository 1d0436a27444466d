//! Exact rational linear algebra: ranks, kernels, solves, quotient bases and
//! homology of finite chain-complex slices.
//!
//! Elimination is fraction-free: rows are rescaled to primitive integer
//! vectors and combined by cross-multiplication, with the pivot chosen as the
//! candidate entry of smallest absolute numerator. All results are exact.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::{Caveat, Error, Result};

/// Exact scalar for the whole crate: arbitrary-precision rationals, always
/// reduced, denominator positive.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Formats as `p/q`, or plain `p` for integers.
pub fn format_rational(q: &Rational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::ParseError(format!("invalid rational `{s}`"));
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rational::from_integer(n))
        }
    }
}

/// Sparse vector: coordinate index to nonzero rational entry.
pub type SparseVec = BTreeMap<usize, Rational>;

pub fn vec_add_scaled(target: &mut SparseVec, source: &SparseVec, scale: &Rational) {
    if scale.is_zero() {
        return;
    }
    for (&i, v) in source {
        let entry = target.entry(i).or_insert_with(Rational::zero);
        *entry += v * scale;
        if entry.is_zero() {
            target.remove(&i);
        }
    }
}

/// Sparse rational matrix. No stored zeros, no duplicate positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), Rational>,
}

impl SparseMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseMatrix { rows, cols, entries: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SparseMatrix::zero(n, n);
        for i in 0..n {
            m.set(i, i, Rational::one());
        }
        m
    }

    pub fn from_triples(
        rows: usize,
        cols: usize,
        triples: impl IntoIterator<Item = (usize, usize, Rational)>,
    ) -> Result<Self> {
        let mut m = SparseMatrix::zero(rows, cols);
        for (r, c, v) in triples {
            if r >= rows || c >= cols {
                return Err(Error::ParseError(format!(
                    "entry ({r},{c}) outside {rows}x{cols} matrix"
                )));
            }
            if m.entries.contains_key(&(r, c)) {
                return Err(Error::ParseError(format!("duplicate entry at ({r},{c})")));
            }
            if !v.is_zero() {
                m.entries.insert((r, c), v);
            }
        }
        Ok(m)
    }

    /// Columns given as sparse vectors over `rows` coordinates.
    pub fn from_columns(rows: usize, columns: &[SparseVec]) -> Self {
        let mut m = SparseMatrix::zero(rows, columns.len());
        for (c, col) in columns.iter().enumerate() {
            for (&r, v) in col {
                m.set(r, c, v.clone());
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, r: usize, c: usize, v: Rational) {
        assert!(r < self.rows && c < self.cols, "index out of range");
        if v.is_zero() {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), v);
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Rational {
        self.entries.get(&(r, c)).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &Rational)> {
        self.entries.iter().map(|(&(r, c), v)| (r, c, v))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn column(&self, c: usize) -> SparseVec {
        self.entries
            .range((0, c)..(self.rows, c + 1))
            .filter(|(&(_, cc), _)| cc == c)
            .map(|(&(r, _), v)| (r, v.clone()))
            .collect()
    }

    /// `self * other`.
    pub fn compose(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = SparseMatrix::zero(self.rows, other.cols);
        // group self's entries by column for sparse accumulation
        let mut by_col: BTreeMap<usize, Vec<(usize, &Rational)>> = BTreeMap::new();
        for (&(r, c), v) in &self.entries {
            by_col.entry(c).or_default().push((r, v));
        }
        for (&(k, c), v) in &other.entries {
            if let Some(rows) = by_col.get(&k) {
                for (r, w) in rows {
                    let cur = out.get(*r, c) + *w * v;
                    out.set(*r, c, cur);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &SparseVec) -> SparseVec {
        let mut out = SparseVec::new();
        for (&c, x) in v {
            if c >= self.cols {
                continue;
            }
            for (r, val) in self.column_entries(c) {
                let entry = out.entry(r).or_insert_with(Rational::zero);
                *entry += val * x;
                if entry.is_zero() {
                    out.remove(&r);
                }
            }
        }
        out
    }

    fn column_entries(&self, c: usize) -> Vec<(usize, &Rational)> {
        self.entries
            .iter()
            .filter(|(&(_, cc), _)| cc == c)
            .map(|(&(r, _), v)| (r, v))
            .collect()
    }

    fn row_vectors(&self) -> Vec<SparseVec> {
        let mut rows = vec![SparseVec::new(); self.rows];
        for (&(r, c), v) in &self.entries {
            rows[r].insert(c, v.clone());
        }
        rows
    }

    pub fn rank(&self) -> usize {
        Echelon::reduce(self.row_vectors(), self.cols).rows.len()
    }

    /// Exact basis of the null space; empty when injective. Vectors are
    /// indexed by free column, ascending, each with a 1 in its free slot.
    pub fn kernel_basis(&self) -> Vec<SparseVec> {
        let ech = Echelon::reduce(self.row_vectors(), self.cols);
        ech.kernel()
    }

    /// Indices of pivot columns under left-to-right elimination; the
    /// corresponding columns form a basis of the column space.
    pub fn column_space_pivots(&self) -> Vec<usize> {
        Echelon::reduce(self.row_vectors(), self.cols).pivots
    }

    /// One exact solution of `self * x = b` with free variables set to zero,
    /// or `None` when inconsistent.
    pub fn solve(&self, b: &SparseVec) -> Option<SparseVec> {
        ColumnSolver::new(self).solve(b)
    }
}

/// Row echelon form with full reduction above pivots. Rows are kept as
/// primitive integer vectors.
pub struct Echelon {
    pub rows: Vec<SparseVec>,
    pub pivots: Vec<usize>,
    pub cols: usize,
}

fn primitivize(row: &mut SparseVec) {
    if row.is_empty() {
        return;
    }
    let mut den_lcm = BigInt::one();
    for v in row.values() {
        den_lcm = den_lcm.lcm(v.denom());
    }
    let mut num_gcd = BigInt::zero();
    for v in row.values() {
        num_gcd = num_gcd.gcd(&(v.numer() * &den_lcm / v.denom()));
    }
    if num_gcd.is_zero() {
        return;
    }
    let scale = Rational::new(den_lcm, num_gcd);
    if scale.is_one() {
        return;
    }
    for v in row.values_mut() {
        *v *= &scale;
    }
}

impl Echelon {
    /// Fraction-free forward and backward elimination. Pivot choice within a
    /// column: smallest absolute numerator after primitivization, ties by
    /// row order.
    pub fn reduce(mut rows: Vec<SparseVec>, cols: usize) -> Echelon {
        for row in &mut rows {
            primitivize(row);
        }
        let mut done: Vec<SparseVec> = Vec::new();
        let mut pivots: Vec<usize> = Vec::new();
        let mut active: Vec<SparseVec> = rows.into_iter().filter(|r| !r.is_empty()).collect();
        for col in 0..cols {
            let mut best: Option<(usize, BigInt)> = None;
            for (i, row) in active.iter().enumerate() {
                if let Some(v) = row.get(&col) {
                    let mag = v.numer().abs();
                    match &best {
                        Some((_, m)) if *m <= mag => {}
                        _ => best = Some((i, mag)),
                    }
                }
            }
            let Some((pidx, _)) = best else { continue };
            let pivot_row = active.swap_remove(pidx);
            let p = pivot_row.get(&col).unwrap().clone();
            for row in &mut active {
                if let Some(a) = row.get(&col).cloned() {
                    let factor = -a / &p;
                    vec_add_scaled(row, &pivot_row, &factor);
                    primitivize(row);
                }
            }
            active.retain(|r| !r.is_empty());
            done.push(pivot_row);
            pivots.push(col);
        }
        // back-substitution: clear entries above each pivot
        for i in (0..done.len()).rev() {
            let pc = pivots[i];
            let lower = done[i].clone();
            let p = lower.get(&pc).unwrap().clone();
            for j in 0..i {
                if let Some(a) = done[j].get(&pc).cloned() {
                    let factor = -a / &p;
                    vec_add_scaled(&mut done[j], &lower, &factor);
                    primitivize(&mut done[j]);
                }
            }
        }
        Echelon { rows: done, pivots, cols }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn kernel(&self) -> Vec<SparseVec> {
        let pivot_set: BTreeMap<usize, usize> =
            self.pivots.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivot_set.contains_key(&free) {
                continue;
            }
            let mut v = SparseVec::new();
            v.insert(free, Rational::one());
            for (&pc, &ri) in &pivot_set {
                if let Some(a) = self.rows[ri].get(&free) {
                    let p = self.rows[ri].get(&pc).unwrap();
                    let val = -a / p;
                    if !val.is_zero() {
                        v.insert(pc, val);
                    }
                }
            }
            basis.push(v);
        }
        basis
    }

    /// Reduces `v` modulo the row span: returns the unique representative
    /// supported away from the pivot coordinates.
    pub fn reduce_vector(&self, v: &SparseVec) -> SparseVec {
        let mut v = v.clone();
        for (i, &pc) in self.pivots.iter().enumerate() {
            if let Some(a) = v.get(&pc).cloned() {
                let p = self.rows[i].get(&pc).unwrap().clone();
                let factor = -a / p;
                vec_add_scaled(&mut v, &self.rows[i], &factor);
            }
        }
        v
    }

    /// Membership of `v` in the row span.
    pub fn contains(&self, v: &SparseVec) -> bool {
        self.reduce_vector(v).is_empty()
    }
}

/// Factorized solver for repeated exact solves against a fixed matrix.
/// Eliminates the augmented system `[A | I]` once; each solve applies the
/// recorded row transform to the right-hand side.
pub struct ColumnSolver {
    lhs: Vec<SparseVec>,
    transform: Vec<SparseVec>,
    pivots: Vec<usize>,
    rows: usize,
    cols: usize,
}

impl ColumnSolver {
    pub fn new(a: &SparseMatrix) -> ColumnSolver {
        let mut rows: Vec<(SparseVec, SparseVec)> = a
            .row_vectors()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut t = SparseVec::new();
                t.insert(i, Rational::one());
                (r, t)
            })
            .collect();
        let mut done: Vec<(SparseVec, SparseVec)> = Vec::new();
        let mut pivots = Vec::new();
        for col in 0..a.cols() {
            let mut best: Option<(usize, BigInt)> = None;
            for (i, (row, _)) in rows.iter().enumerate() {
                if let Some(v) = row.get(&col) {
                    let mag = v.numer().abs() * v.denom().clone();
                    match &best {
                        Some((_, m)) if *m <= mag => {}
                        _ => best = Some((i, mag)),
                    }
                }
            }
            let Some((pidx, _)) = best else { continue };
            let (prow, ptrans) = rows.swap_remove(pidx);
            let p = prow.get(&col).unwrap().clone();
            for (row, trans) in &mut rows {
                if let Some(a) = row.get(&col).cloned() {
                    let factor = -a / &p;
                    vec_add_scaled(row, &prow, &factor);
                    vec_add_scaled(trans, &ptrans, &factor);
                }
            }
            done.push((prow, ptrans));
            pivots.push(col);
        }
        // clear above pivots
        for i in (0..done.len()).rev() {
            let pc = pivots[i];
            let (lrow, ltrans) = done[i].clone();
            let p = lrow.get(&pc).unwrap().clone();
            for j in 0..i {
                if let Some(a) = done[j].0.get(&pc).cloned() {
                    let factor = -a / &p;
                    vec_add_scaled(&mut done[j].0, &lrow, &factor);
                    vec_add_scaled(&mut done[j].1, &ltrans, &factor);
                }
            }
        }
        // leftover rows (zero lhs) still carry consistency constraints
        let mut lhs = Vec::new();
        let mut transform = Vec::new();
        for (r, t) in done.into_iter().chain(rows) {
            lhs.push(r);
            transform.push(t);
        }
        ColumnSolver { lhs, transform, pivots, rows: a.rows(), cols: a.cols() }
    }

    pub fn solve(&self, b: &SparseVec) -> Option<SparseVec> {
        debug_assert!(b.keys().all(|&k| k < self.rows));
        let mut x = SparseVec::new();
        for (i, row) in self.lhs.iter().enumerate() {
            // transformed rhs entry for this row
            let mut rhs = Rational::zero();
            for (&k, c) in &self.transform[i] {
                if let Some(v) = b.get(&k) {
                    rhs += c * v;
                }
            }
            if i < self.pivots.len() {
                let pc = self.pivots[i];
                let p = row.get(&pc).unwrap();
                let val = rhs / p;
                if !val.is_zero() {
                    x.insert(pc, val);
                }
            } else if !rhs.is_zero() {
                return None;
            }
        }
        // verify residual on free columns: pivot rows may have entries in
        // free columns, which we set to zero, so the solution is exact by
        // construction; nothing further to check.
        Some(x)
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// One degree of a homology computation, with representative cycles in the
/// coordinates of the slice basis.
#[derive(Debug, Clone)]
pub struct HomologyAt {
    pub degree: i32,
    pub dim: usize,
    pub representatives: Vec<SparseVec>,
    pub caveats: Vec<Caveat>,
}

/// A finite window of a chain complex: labeled bases per degree and
/// degree-lowering boundary maps.
#[derive(Debug, Clone)]
pub struct ComplexSlice {
    lo: i32,
    hi: i32,
    basis: BTreeMap<i32, Vec<String>>,
    /// boundary[d] : C_d -> C_{d-1}; present for lo < d <= hi.
    boundary: BTreeMap<i32, SparseMatrix>,
}

impl ComplexSlice {
    pub fn new(
        lo: i32,
        hi: i32,
        basis: BTreeMap<i32, Vec<String>>,
        boundary: BTreeMap<i32, SparseMatrix>,
    ) -> Result<ComplexSlice> {
        if lo > hi {
            return Err(Error::WindowEdge(format!("empty window [{lo},{hi}]")));
        }
        let slice = ComplexSlice { lo, hi, basis, boundary };
        slice.validate()?;
        Ok(slice)
    }

    pub fn range(&self) -> (i32, i32) {
        (self.lo, self.hi)
    }

    pub fn dim(&self, degree: i32) -> usize {
        self.basis.get(&degree).map_or(0, |b| b.len())
    }

    pub fn labels(&self, degree: i32) -> &[String] {
        self.basis.get(&degree).map_or(&[], |b| b.as_slice())
    }

    pub fn boundary(&self, degree: i32) -> Option<&SparseMatrix> {
        self.boundary.get(&degree)
    }

    fn validate(&self) -> Result<()> {
        for (&d, m) in &self.boundary {
            if d <= self.lo || d > self.hi {
                return Err(Error::WindowEdge(format!(
                    "boundary at degree {d} outside window ({},{}]",
                    self.lo, self.hi
                )));
            }
            if m.rows() != self.dim(d - 1) || m.cols() != self.dim(d) {
                return Err(Error::ParseError(format!(
                    "boundary at degree {d} has shape {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.dim(d - 1),
                    self.dim(d)
                )));
            }
        }
        for d in self.lo..=self.hi {
            if let (Some(up), Some(dn)) = (self.boundary.get(&(d + 1)), self.boundary.get(&d)) {
                if !dn.compose(up).is_zero() {
                    return Err(Error::CertificateFailure(format!(
                        "boundary squared is nonzero between degrees {} and {}",
                        d + 1,
                        d - 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// `dim ker(∂_degree) − rank(∂_{degree+1})` with representative cycles.
    ///
    /// Requires `degree` and `degree+1` inside the window. The boundary out
    /// of `degree` may be missing at the bottom edge; it is then treated as
    /// zero and the result carries a window-edge caveat.
    pub fn homology_at(&self, degree: i32) -> Result<HomologyAt> {
        if degree < self.lo || degree + 1 > self.hi {
            return Err(Error::WindowEdge(format!(
                "homology at degree {degree} needs degrees {degree} and {} inside [{}, {}]",
                degree + 1,
                self.lo,
                self.hi
            )));
        }
        let mut caveats = Vec::new();
        let n = self.dim(degree);
        let cycles: Vec<SparseVec> = match self.boundary.get(&degree) {
            Some(m) => m.kernel_basis(),
            None => {
                if degree > self.lo {
                    // absent map inside the window means the target is zero
                } else {
                    caveats.push(Caveat::WindowEdge { degree });
                }
                (0..n)
                    .map(|i| {
                        let mut v = SparseVec::new();
                        v.insert(i, Rational::one());
                        v
                    })
                    .collect()
            }
        };
        let boundaries: Vec<SparseVec> = match self.boundary.get(&(degree + 1)) {
            Some(m) => m
                .column_space_pivots()
                .into_iter()
                .map(|c| m.column(c))
                .collect(),
            None => Vec::new(),
        };
        let bnd_ech = Echelon::reduce(boundaries, n);
        // quotient cycles by boundaries: reduce each cycle, then pick an
        // independent set among the reductions
        let reduced: Vec<SparseVec> =
            cycles.iter().map(|c| bnd_ech.reduce_vector(c)).collect();
        let mut chosen: Vec<SparseVec> = Vec::new();
        let mut span: Vec<SparseVec> = Vec::new();
        for (orig, red) in cycles.iter().zip(&reduced) {
            if red.is_empty() {
                continue;
            }
            let ech = Echelon::reduce(span.clone(), n);
            if !ech.contains(red) {
                span.push(red.clone());
                chosen.push(orig.clone());
            }
        }
        Ok(HomologyAt { degree, dim: chosen.len(), representatives: chosen, caveats })
    }

    /// Solver for homology-class coordinates at one degree: sends a cycle to
    /// its coordinates in the representative basis of `homology_at(degree)`.
    pub fn class_solver(&self, degree: i32) -> Result<ClassSolver> {
        let h = self.homology_at(degree)?;
        let boundaries: Vec<SparseVec> = match self.boundary.get(&(degree + 1)) {
            Some(m) => m.column_space_pivots().into_iter().map(|c| m.column(c)).collect(),
            None => Vec::new(),
        };
        let bnd_ech = Echelon::reduce(boundaries, self.dim(degree));
        let reduced_reps: Vec<SparseVec> =
            h.representatives.iter().map(|r| bnd_ech.reduce_vector(r)).collect();
        let reps = SparseMatrix::from_columns(self.dim(degree), &reduced_reps);
        Ok(ClassSolver { dim: h.dim, bnd_ech, reps_solver: ColumnSolver::new(&reps) })
    }
}

/// Expresses cycles at a fixed degree in homology-class coordinates.
pub struct ClassSolver {
    pub dim: usize,
    bnd_ech: Echelon,
    reps_solver: ColumnSolver,
}

impl ClassSolver {
    /// Coordinates of the class of `cycle` in the representative basis, or
    /// `None` when the vector does not reduce into the representative span
    /// (which certifies it is not a cycle of this complex).
    pub fn coords(&self, cycle: &SparseVec) -> Option<SparseVec> {
        let reduced = self.bnd_ech.reduce_vector(cycle);
        self.reps_solver.solve(&reduced)
    }
}

/// A degreewise map of complex slices, as matrices in the slice bases.
#[derive(Debug, Clone, Default)]
pub struct ChainMap {
    pub components: BTreeMap<i32, SparseMatrix>,
}

impl ChainMap {
    pub fn component(&self, degree: i32) -> Option<&SparseMatrix> {
        self.components.get(&degree)
    }

    /// Verifies `f ∘ ∂ = ∂ ∘ f` wherever both sides are defined.
    pub fn is_chain_map(&self, src: &ComplexSlice, tgt: &ComplexSlice) -> bool {
        let (lo, hi) = src.range();
        for d in lo..=hi {
            let f_d = self.components.get(&d);
            let f_prev = self.components.get(&(d - 1));
            match (src.boundary(d), tgt.boundary(d)) {
                (Some(sb), Some(tb)) => {
                    let lhs = match f_prev {
                        Some(f) => f.compose(sb),
                        None => SparseMatrix::zero(tb.rows(), sb.cols()),
                    };
                    let rhs = match f_d {
                        Some(f) => tb.compose(f),
                        None => SparseMatrix::zero(tb.rows(), sb.cols()),
                    };
                    if lhs != rhs {
                        return false;
                    }
                }
                _ => continue,
            }
        }
        true
    }

    /// The matrix induced on homology at `degree`, in the representative
    /// bases of the two slices. Errors when the map fails to send cycles to
    /// cycles at this degree.
    pub fn homology_matrix(
        &self,
        src: &ComplexSlice,
        tgt: &ComplexSlice,
        degree: i32,
    ) -> Result<SparseMatrix> {
        let src_h = src.homology_at(degree)?;
        let solver = tgt.class_solver(degree)?;
        let mut cols = Vec::new();
        for rep in &src_h.representatives {
            let image = match self.components.get(&degree) {
                Some(f) => f.apply(rep),
                None => SparseVec::new(),
            };
            let coords = solver.coords(&image).ok_or_else(|| {
                Error::CertificateFailure(format!(
                    "chain map image at degree {degree} is not a cycle class"
                ))
            })?;
            cols.push(coords);
        }
        Ok(SparseMatrix::from_columns(solver.dim, &cols))
    }

    /// True when the induced homology maps are isomorphisms at every degree
    /// in `degrees`.
    pub fn is_quasi_iso(
        &self,
        src: &ComplexSlice,
        tgt: &ComplexSlice,
        degrees: impl IntoIterator<Item = i32>,
    ) -> Result<bool> {
        for d in degrees {
            let m = self.homology_matrix(src, tgt, d)?;
            if m.rows() != m.cols() || m.rank() != m.rows() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[i64]]) -> SparseMatrix {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut m = SparseMatrix::zero(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 {
                    m.set(i, j, rat_int(v));
                }
            }
        }
        m
    }

    /// Independent oracle: dense Gaussian elimination with plain rational
    /// division, no pivot strategy beyond first-nonzero.
    fn dense_rank_oracle(m: &SparseMatrix) -> usize {
        let mut a: Vec<Vec<Rational>> =
            vec![vec![Rational::zero(); m.cols()]; m.rows()];
        for (r, c, v) in m.entries() {
            a[r][c] = v.clone();
        }
        let mut rank = 0;
        for col in 0..m.cols() {
            let Some(p) = (rank..m.rows()).find(|&r| !a[r][col].is_zero()) else {
                continue;
            };
            a.swap(rank, p);
            let pv = a[rank][col].clone();
            for r in 0..m.rows() {
                if r != rank && !a[r][col].is_zero() {
                    let f = a[r][col].clone() / &pv;
                    for c in 0..m.cols() {
                        let sub = a[rank][c].clone() * &f;
                        a[r][c] -= sub;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn rank_identity_zero_and_dependent() {
        assert_eq!(dense(&[&[1, 0], &[0, 1]]).rank(), 2);
        assert_eq!(SparseMatrix::zero(3, 4).rank(), 0);
        // hand elimination: second row is twice the first
        assert_eq!(dense(&[&[1, 2], &[2, 4]]).rank(), 1);
    }

    #[test]
    fn rank_matches_dense_oracle() {
        let cases = vec![
            dense(&[&[2, 4, 1], &[3, 6, 0], &[1, 2, 1]]),
            dense(&[&[0, 0], &[0, 5]]),
            dense(&[&[7]]),
            dense(&[&[1, 2, 3], &[4, 5, 6], &[7, 8, 9]]),
        ];
        for m in cases {
            assert_eq!(m.rank(), dense_rank_oracle(&m));
        }
    }

    #[test]
    fn kernel_identity_zero_and_line() {
        assert!(SparseMatrix::identity(3).kernel_basis().is_empty());
        let k = SparseMatrix::zero(1, 1).kernel_basis();
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].get(&0), Some(&Rational::one()));
        // x + y = 0 has basis (1, -1) up to scale: our convention puts 1 in
        // the free slot, so the vector is (-1, 1)
        let k = dense(&[&[1, 1]]).kernel_basis();
        assert_eq!(k.len(), 1);
        let v = &k[0];
        assert_eq!(v.get(&1), Some(&Rational::one()));
        assert_eq!(v.get(&0), Some(&rat_int(-1)));
    }

    #[test]
    fn rank_nullity() {
        let m = dense(&[&[1, 2, 3, 1], &[0, 1, 1, 0], &[1, 3, 4, 1]]);
        assert_eq!(m.rank() + m.kernel_basis().len(), m.cols());
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let m = dense(&[&[1, 2], &[2, 4]]);
        let mut b = SparseVec::new();
        b.insert(0, rat_int(3));
        b.insert(1, rat_int(6));
        let x = m.solve(&b).unwrap();
        // residual check
        let mut lhs0 = Rational::zero();
        let mut lhs1 = Rational::zero();
        for (&i, v) in &x {
            lhs0 += m.get(0, i) * v;
            lhs1 += m.get(1, i) * v;
        }
        assert_eq!(lhs0, rat_int(3));
        assert_eq!(lhs1, rat_int(6));
        let mut bad = SparseVec::new();
        bad.insert(0, rat_int(3));
        bad.insert(1, rat_int(7));
        assert!(m.solve(&bad).is_none());
    }

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn homology_point_in_degree_three() {
        // 0 -> Q -> 0 concentrated in degree 3
        let mut basis = BTreeMap::new();
        basis.insert(3, labels(&["x"]));
        basis.insert(4, labels(&[]));
        basis.insert(2, labels(&[]));
        let mut boundary = BTreeMap::new();
        boundary.insert(3, SparseMatrix::zero(0, 1));
        boundary.insert(4, SparseMatrix::zero(1, 0));
        let c = ComplexSlice::new(2, 4, basis, boundary).unwrap();
        let h = c.homology_at(3).unwrap();
        assert_eq!(h.dim, 1);
        assert!(h.caveats.is_empty());
    }

    #[test]
    fn homology_acyclic_pair() {
        // Q --id--> Q in degrees 1 -> 0
        let mut basis = BTreeMap::new();
        basis.insert(0, labels(&["v"]));
        basis.insert(1, labels(&["u"]));
        basis.insert(2, labels(&[]));
        let mut boundary = BTreeMap::new();
        boundary.insert(1, SparseMatrix::identity(1));
        boundary.insert(2, SparseMatrix::zero(1, 0));
        let c = ComplexSlice::new(0, 2, basis, boundary).unwrap();
        assert_eq!(c.homology_at(0).unwrap().dim, 0);
        assert_eq!(c.homology_at(1).unwrap().dim, 0);
    }

    #[test]
    fn homology_boundary_of_two_simplex() {
        // ∂Δ²: three vertices, three edges. H_0 = Q, H_1 = Q.
        // hand-derived simplicial homology of the circle
        let mut basis = BTreeMap::new();
        basis.insert(0, labels(&["v0", "v1", "v2"]));
        basis.insert(1, labels(&["e01", "e02", "e12"]));
        basis.insert(2, labels(&[]));
        let mut boundary = BTreeMap::new();
        let mut d1 = SparseMatrix::zero(3, 3);
        // e01 -> v1 - v0, e02 -> v2 - v0, e12 -> v2 - v1
        d1.set(1, 0, rat_int(1));
        d1.set(0, 0, rat_int(-1));
        d1.set(2, 1, rat_int(1));
        d1.set(0, 1, rat_int(-1));
        d1.set(2, 2, rat_int(1));
        d1.set(1, 2, rat_int(-1));
        boundary.insert(1, d1);
        boundary.insert(2, SparseMatrix::zero(3, 0));
        let c = ComplexSlice::new(0, 2, basis, boundary).unwrap();
        let h0 = c.homology_at(0).unwrap();
        // boundary into degree -1 is absent at the window edge
        assert_eq!(h0.dim, 1);
        assert_eq!(h0.caveats, vec![Caveat::WindowEdge { degree: 0 }]);
        assert_eq!(c.homology_at(1).unwrap().dim, 1);
    }

    #[test]
    fn homology_outside_window_is_an_error() {
        let mut basis = BTreeMap::new();
        basis.insert(0, labels(&["v"]));
        let c = ComplexSlice::new(0, 0, basis, BTreeMap::new()).unwrap();
        assert!(matches!(c.homology_at(0), Err(Error::WindowEdge(_))));
    }

    #[test]
    fn boundary_squared_is_checked() {
        let mut basis = BTreeMap::new();
        basis.insert(0, labels(&["a"]));
        basis.insert(1, labels(&["b"]));
        basis.insert(2, labels(&["c"]));
        let mut boundary = BTreeMap::new();
        boundary.insert(1, SparseMatrix::identity(1));
        boundary.insert(2, SparseMatrix::identity(1));
        assert!(matches!(
            ComplexSlice::new(0, 2, basis, boundary),
            Err(Error::CertificateFailure(_))
        ));
    }

    #[test]
    fn homology_invariant_under_permutation() {
        // permuting basis columns/rows leaves dimensions unchanged
        let m = dense(&[&[1, 2, 3], &[0, 1, 1]]);
        let permuted = dense(&[&[3, 1, 2], &[1, 0, 1]]);
        assert_eq!(m.rank(), permuted.rank());
        assert_eq!(m.kernel_basis().len(), permuted.kernel_basis().len());
    }

    #[test]
    fn format_and_parse_rationals() {
        assert_eq!(format_rational(&rat(3, 2)), "3/2");
        assert_eq!(format_rational(&rat_int(-7)), "-7");
        assert_eq!(parse_rational("3/2").unwrap(), rat(3, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rational("4/6").unwrap(), rat(2, 3));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
