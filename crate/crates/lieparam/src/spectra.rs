//! Free spectra of retractive models: levels, adjoint structure maps,
//! linear and indecomposable reductions, stable homology with explicit
//! stabilization certificates, and the canonical examples.
//!
//! Structure maps are stored in adjoint (loop-side) form: each fiber
//! generator of level `n` is sent to the weight-one fiber element `y` of
//! level `n+1` with `μ(w) = s^{−1}y`. The colimits of the theory are
//! replaced by stabilization detection over a finite number of levels;
//! entries that do not reach two consecutive isomorphisms are flagged, not
//! silently reported.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde_json::Value;

use crate::cdgl::CdglPresentation;
use crate::exactla::{ChainMap, Rational, SparseMatrix, SparseVec};
use crate::freelie::{sign_of_degree, Generator, LieElt, LieExpr, TensorElt};
use crate::retractive::{FiberShape, RetractiveModel, TSolver};
use crate::ulmod::{base_is_connected, ConcreteModule, ULModule};
use crate::{Caveat, Error, Result};

/// Adjoint structure data of one level.
#[derive(Clone)]
pub enum StructureMap {
    /// Free level: fiber generator name to the weight-one fiber element of
    /// the next level.
    OnGenerators(BTreeMap<String, TensorElt>),
    /// Module-generated level: matrices keyed by absolute source degree,
    /// mapping the fiber module of level `n` into degree `+1` of the next.
    OnModule(BTreeMap<i32, SparseMatrix>),
}

/// A free spectrum: levels over a shared base with adjoint structure maps.
#[derive(Clone)]
pub struct FreeSpectrum {
    base: Arc<CdglPresentation>,
    levels: Vec<RetractiveModel>,
    structure: Vec<StructureMap>,
}

pub(crate) enum TowerKind {
    /// The full fiber Lie algebra of each level.
    FullFiber,
    /// The weight-one slice with the linear differential.
    Indecomposable,
}

/// The stable-degree-aligned sequence of fiber carriers
/// `C_n = s^{−n}(K^n)` with degree-preserving transition matrices.
pub(crate) struct Tower {
    pub carriers: Vec<ConcreteModule>,
    pub maps: Vec<BTreeMap<i32, SparseMatrix>>,
}

impl FreeSpectrum {
    pub fn new(
        base: Arc<CdglPresentation>,
        levels: Vec<RetractiveModel>,
        structure: Vec<StructureMap>,
    ) -> Result<FreeSpectrum> {
        if levels.is_empty() {
            return Err(Error::PresentationError("a spectrum needs at least one level".into()));
        }
        if structure.len() + 1 != levels.len() {
            return Err(Error::PresentationError(format!(
                "{} levels need {} structure maps, found {}",
                levels.len(),
                levels.len() - 1,
                structure.len()
            )));
        }
        for l in &levels {
            if l.base().as_ref() != base.as_ref() {
                return Err(Error::BaseMismatch("levels must share the base".into()));
            }
        }
        let s = FreeSpectrum { base, levels, structure };
        s.validate_structure()?;
        Ok(s)
    }

    pub fn base(&self) -> &Arc<CdglPresentation> {
        &self.base
    }

    pub fn levels(&self) -> &[RetractiveModel] {
        &self.levels
    }

    pub fn n_max(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn structure(&self) -> &[StructureMap] {
        &self.structure
    }

    /// Chain-map condition of every structure map against the linear
    /// differential of the indecomposable reduction, plus degree and
    /// weight-one checks on the stored images.
    fn validate_structure(&self) -> Result<()> {
        for (n, sm) in self.structure.iter().enumerate() {
            if let StructureMap::OnGenerators(images) = sm {
                let level = &self.levels[n];
                let next = &self.levels[n + 1];
                for (w, y) in images {
                    let Some(g) =
                        level.fiber_generators().into_iter().find(|g| &g.name == w)
                    else {
                        return Err(Error::PresentationError(format!(
                            "structure image for unknown fiber generator `{w}` at level {n}"
                        )));
                    };
                    if y.is_zero() {
                        continue;
                    }
                    if y.homogeneous_degree() != Some(g.degree + 1) {
                        return Err(Error::DegreeError(format!(
                            "structure image of `{w}` must be homogeneous of degree {}",
                            g.degree + 1
                        )));
                    }
                    if &next.weight_one_part(y)? != y {
                        return Err(Error::PresentationError(format!(
                            "structure image of `{w}` must lie in the one-fiber-letter span"
                        )));
                    }
                }
            }
        }
        let window = self.base.window();
        let tower = self.tower(TowerKind::Indecomposable, window, None)?;
        for n in 0..self.structure.len() {
            let src = tower.carriers[n].complex_slice()?;
            let tgt = tower.carriers[n + 1].complex_slice()?;
            let map = ChainMap { components: tower.maps[n].clone() };
            if !map.is_chain_map(&src, &tgt) {
                return Err(Error::PresentationError(format!(
                    "structure map at level {n} is not a chain map for the linear \
                     differential"
                )));
            }
        }
        Ok(())
    }

    /// The image element `y` of a free-level fiber generator.
    pub fn structure_image(&self, level: usize, gen: &str) -> Option<&TensorElt> {
        match self.structure.get(level)? {
            StructureMap::OnGenerators(m) => m.get(gen),
            StructureMap::OnModule(_) => None,
        }
    }

    /// Builds the aligned tower `C_n = s^{−n}(fiber of level n)` over the
    /// stable-degree window, with transition matrices.
    pub(crate) fn tower(
        &self,
        kind: TowerKind,
        window: (i32, i32),
        at: Option<&LieElt>,
    ) -> Result<Tower> {
        let mut carriers = Vec::new();
        for (n, level) in self.levels.iter().enumerate() {
            let abs_window = (window.0 - 1 + n as i32, window.1 + 1 + n as i32);
            let fiber = match kind {
                TowerKind::FullFiber => level.fiber_module(abs_window, at)?,
                TowerKind::Indecomposable => {
                    let m = level.indecomposable_fiber_module()?;
                    let mut c = m.to_concrete(abs_window)?;
                    if let Some(a) = at {
                        c = perturb_concrete(&self.base, &c, a, abs_window)?;
                    }
                    c
                }
            };
            carriers.push(fiber.suspend(-(n as i32)));
        }
        let mut maps = Vec::new();
        for n in 0..self.structure.len() {
            maps.push(self.transition_matrices(n, &kind, window, &carriers)?);
        }
        Ok(Tower { carriers, maps })
    }

    /// Transition matrices `C_n → C_{n+1}` in stable-degree coordinates.
    fn transition_matrices(
        &self,
        n: usize,
        kind: &TowerKind,
        window: (i32, i32),
        carriers: &[ConcreteModule],
    ) -> Result<BTreeMap<i32, SparseMatrix>> {
        let src = &carriers[n];
        let tgt = &carriers[n + 1];
        let mut out = BTreeMap::new();
        match &self.structure[n] {
            StructureMap::OnModule(by_degree) => {
                // stored by absolute source degree; stable degree k maps to
                // absolute degree k + n
                for k in window.0 - 1..=window.1 + 1 {
                    let abs = k + n as i32;
                    if let Some(m) = by_degree.get(&abs) {
                        out.insert(k, m.clone());
                    } else if src.dim(k) > 0 {
                        out.insert(k, SparseMatrix::zero(tgt.dim(k), src.dim(k)));
                    }
                }
            }
            StructureMap::OnGenerators(images) => {
                let next = &self.levels[n + 1];
                match kind {
                    TowerKind::Indecomposable => {
                        let next_solver = TSolver::new(next)?;
                        for k in window.0 - 1..=window.1 + 1 {
                            let rows = tgt.dim(k);
                            let mut cols = Vec::with_capacity(src.dim(k));
                            for meta in src.meta(k) {
                                cols.push(self.ind_image(
                                    n,
                                    meta,
                                    k,
                                    images,
                                    &next_solver,
                                    tgt,
                                )?);
                            }
                            out.insert(k, SparseMatrix::from_columns(rows, &cols));
                        }
                    }
                    TowerKind::FullFiber => {
                        let level = &self.levels[n];
                        let solver = TSolver::new(level)?;
                        for k in window.0 - 1..=window.1 + 1 {
                            let rows = tgt.dim(k);
                            let mut cols = Vec::with_capacity(src.dim(k));
                            for i in 0..src.dim(k) {
                                cols.push(self.full_image(n, k, i, &solver, images, next)?);
                            }
                            out.insert(k, SparseMatrix::from_columns(rows, &cols));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Image of one indecomposable basis element `u ⊗ w`:
    /// `(−1)^{|u|} u · y'_w` in the next level's module coordinates.
    fn ind_image(
        &self,
        n: usize,
        meta: &crate::ulmod::BasisMeta,
        k: i32,
        images: &BTreeMap<String, TensorElt>,
        next_solver: &TSolver,
        tgt: &ConcreteModule,
    ) -> Result<SparseVec> {
        let level = &self.levels[n];
        let next = &self.levels[n + 1];
        let (word, gen_idx) = meta.semifree_coords().ok_or_else(|| {
            Error::PresentationError("indecomposable carrier lost its generator tags".into())
        })?;
        let gen_name = &level.fiber_generators()[gen_idx].name;
        let Some(y) = images.get(gen_name) else {
            return Ok(SparseVec::new());
        };
        if y.is_zero() {
            return Ok(SparseVec::new());
        }
        // y as a ULElt in the next level
        let y_coords = next_solver.t_coords(next, y)?;
        let mut out = SparseVec::new();
        let udeg = self.base.alphabet().word_degree(word);
        let sign = sign_of_degree(udeg);
        let next_fiber = next.fiber_generators();
        for ((u2, g2), c) in y_coords {
            let mut uu = word.to_vec();
            uu.extend_from_slice(&u2);
            // locate (uu ⊗ g2) in the target concrete basis: stable degree k
            let pos = tgt.meta(k).iter().position(|m| {
                m.semifree_coords()
                    .map(|(w2, gi)| w2 == uu.as_slice() && gi == g2)
                    .unwrap_or(false)
            });
            if let Some(p) = pos {
                let entry = out.entry(p).or_insert_with(Rational::zero);
                *entry += &sign * &c;
                if entry.is_zero() {
                    out.remove(&p);
                }
            }
            let _ = &next_fiber;
        }
        Ok(out)
    }

    /// Image of a full-fiber basis vector: brackets of two or more fiber
    /// letters die, weight-one parts transport through the generator data
    /// with the desuspension Koszul sign.
    fn full_image(
        &self,
        n: usize,
        k: i32,
        i: usize,
        solver: &TSolver,
        images: &BTreeMap<String, TensorElt>,
        next: &RetractiveModel,
    ) -> Result<SparseVec> {
        let level = &self.levels[n];
        let abs = k + n as i32;
        let fiber = level.fiber_basis_element(abs, i)?;
        let lin = level.weight_one_part(&fiber)?;
        if lin.is_zero() {
            return Ok(SparseVec::new());
        }
        let fiber_gens = level.fiber_generators();
        let mut image =
            TensorElt::zero(next.joint()?.alphabet().clone(), next.joint()?.cap());
        for ((u, gi), c) in solver.t_coords(level, &lin)? {
            let Some(y) = images.get(&fiber_gens[gi].name) else { continue };
            if y.is_zero() {
                continue;
            }
            // (−1)^{|u|} ad_u(y)
            let mut acc = y.clone();
            for &letter in u.iter().rev() {
                let name = self.base.alphabet().generator(letter).name.clone();
                let x = TensorElt::generator(
                    next.joint()?.alphabet().clone(),
                    &name,
                    next.joint()?.cap(),
                )?;
                acc = x.bracket(&acc)?;
            }
            let udeg = self.base.alphabet().word_degree(&u);
            image = image.add(&acc.scale(&(sign_of_degree(udeg) * c)))?;
        }
        if image.is_zero() {
            return Ok(SparseVec::new());
        }
        next.fiber_coords(&image, abs + 1)
    }

    // -- reductions ----------------------------------------------------

    /// Levelwise retractive linear part with the same structure data.
    pub fn linear_reduction(&self) -> Result<FreeSpectrum> {
        let levels = self
            .levels
            .iter()
            .map(|l| l.retractive_linear_part())
            .collect::<Result<Vec<_>>>()?;
        FreeSpectrum::new(self.base.clone(), levels, self.structure.clone())
    }

    /// Levelwise projection to the abelianized fiber `(T^n, d₁)` with the
    /// induced structure matrices.
    pub fn indecomposable_reduction(&self) -> Result<FreeSpectrum> {
        let window = self.base.window();
        let tower = self.tower(TowerKind::Indecomposable, window, None)?;
        let mut levels = Vec::new();
        let mut structure = Vec::new();
        for (n, carrier) in tower.carriers.iter().enumerate() {
            // carriers are aligned; shift back to absolute degrees
            let absolute = carrier.suspend(n as i32);
            levels.push(RetractiveModel::module_generated(
                self.base.clone(),
                absolute,
                true,
            ));
            if n < tower.maps.len() {
                let mut by_abs = BTreeMap::new();
                for (&k, m) in &tower.maps[n] {
                    by_abs.insert(k + n as i32, m.clone());
                }
                structure.push(StructureMap::OnModule(by_abs));
            }
        }
        FreeSpectrum::new(self.base.clone(), levels, structure)
    }

    /// Levelwise connected cover of the fibers, with restricted transition
    /// matrices. Stable homology is unchanged past the connectivity line.
    pub fn connected_cover(&self, window: (i32, i32)) -> Result<CoverSpectrum> {
        if !base_is_connected(&self.base) {
            return Err(Error::NotConnected(
                "connected covers need a base concentrated in positive degrees".into(),
            ));
        }
        let tower = self.tower(TowerKind::FullFiber, window, None)?;
        let covered = cover_tower(&tower)?;
        Ok(CoverSpectrum { carriers: covered.carriers, maps: covered.maps })
    }

    // -- stable homology -------------------------------------------------

    /// `H^st_k = colim_n H_{n+k}(K^n, d or d_a)`, reported per degree with
    /// the level dimensions, transition-rank certificate and stabilization
    /// level; entries without two consecutive isomorphisms are flagged.
    pub fn stable_homology(
        &self,
        at: Option<&LieElt>,
        window: (i32, i32),
    ) -> Result<StableHomologyReport> {
        if let Some(a) = at {
            if !self.base.is_mc(a)? {
                return Err(Error::NotMaurerCartan(
                    "stable homology basepoint fails the MC equation".into(),
                ));
            }
        }
        let tower = self.tower(TowerKind::FullFiber, window, at)?;
        stable_homology_of_tower(&tower, window)
    }
}

fn perturb_concrete(
    base: &Arc<CdglPresentation>,
    module: &ConcreteModule,
    a: &LieElt,
    window: (i32, i32),
) -> Result<ConcreteModule> {
    let mut basis = BTreeMap::new();
    for d in window.0..=window.1 {
        basis.insert(d, module.meta(d).to_vec());
    }
    let mut diff = BTreeMap::new();
    for d in (window.0 + 1)..=window.1 {
        let mut m = match module.diff_matrix(d) {
            Some(m) => m.clone(),
            None => SparseMatrix::zero(module.dim(d - 1), module.dim(d)),
        };
        let ad_a = module.action_of(a.tensor(), d);
        for (r, c, v) in ad_a.entries() {
            let cur = m.get(r, c) + v;
            m.set(r, c, cur);
        }
        diff.insert(d, m);
    }
    let mut action = BTreeMap::new();
    for (xi, _) in base.alphabet().gens().iter().enumerate() {
        for d in window.0..=window.1 {
            if let Some(m) = module.action_matrix(xi as u32, d) {
                action.insert((xi as u32, d), m.clone());
            }
        }
    }
    ConcreteModule::new(base.clone(), basis, diff, action, window, module.caveats().to_vec())
}

/// Truncates every level of an aligned tower at its connectivity line
/// (absolute degree 0, stable degree `−n`) and restricts the transition
/// matrices. At the cut line the source basis is the kernel of the
/// boundary, so the matrix is composed with the kernel inclusion; the
/// target at that stable degree lies strictly above its own cut and keeps
/// its original basis.
pub(crate) fn cover_tower(tower: &Tower) -> Result<Tower> {
    let mut covered = Vec::new();
    for (n, carrier) in tower.carriers.iter().enumerate() {
        let absolute = carrier.suspend(n as i32);
        let cover = absolute.connected_cover()?;
        covered.push(cover.suspend(-(n as i32)));
    }
    let mut restricted = Vec::new();
    for (n, by_deg_full) in tower.maps.iter().enumerate() {
        let src_cut = -(n as i32);
        let mut by_deg = BTreeMap::new();
        for (&k, m) in by_deg_full {
            if k < src_cut || covered[n].dim(k) == 0 {
                continue;
            }
            let restricted_m = if k == src_cut {
                let kernel = match tower.carriers[n].diff_matrix(src_cut) {
                    Some(d0) => d0.kernel_basis(),
                    None => (0..tower.carriers[n].dim(src_cut))
                        .map(|i| {
                            let mut v = SparseVec::new();
                            v.insert(i, Rational::one());
                            v
                        })
                        .collect(),
                };
                let cols: Vec<SparseVec> = kernel.iter().map(|kv| m.apply(kv)).collect();
                SparseMatrix::from_columns(m.rows(), &cols)
            } else {
                m.clone()
            };
            by_deg.insert(k, restricted_m);
        }
        restricted.push(by_deg);
    }
    Ok(Tower { carriers: covered, maps: restricted })
}

/// A levelwise-connected tower, the return shape of the connected cover.
pub struct CoverSpectrum {
    pub(crate) carriers: Vec<ConcreteModule>,
    pub(crate) maps: Vec<BTreeMap<i32, SparseMatrix>>,
}

impl CoverSpectrum {
    pub fn stable_homology(&self, window: (i32, i32)) -> Result<StableHomologyReport> {
        let tower = Tower { carriers: self.carriers.clone(), maps: self.maps.clone() };
        stable_homology_of_tower(&tower, window)
    }

    pub fn level(&self, n: usize) -> &ConcreteModule {
        &self.carriers[n]
    }
}

pub(crate) fn stable_homology_of_tower(
    tower: &Tower,
    window: (i32, i32),
) -> Result<StableHomologyReport> {
    let slices = tower
        .carriers
        .iter()
        .map(|c| c.complex_slice())
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    let mut caveats = Vec::new();
    // degrees outside a carrier's range are genuinely empty (a cover's
    // truncation line), not window edges
    let dim_safe = |n: usize, k: i32| -> Result<usize> {
        let slice = &slices[n];
        let (lo, hi) = slice.range();
        if k < lo || k + 1 > hi {
            return Ok(0);
        }
        Ok(slice.homology_at(k)?.dim)
    };
    for k in window.0..=window.1 {
        let mut level_dims = Vec::new();
        let mut iso_flags = Vec::new();
        for (n, slice) in slices.iter().enumerate() {
            level_dims.push(dim_safe(n, k)?);
            if n < tower.maps.len() {
                let src_ok = {
                    let (lo, hi) = slice.range();
                    k >= lo && k + 1 <= hi
                };
                let tgt_ok = {
                    let (lo, hi) = slices[n + 1].range();
                    k >= lo && k + 1 <= hi
                };
                if src_ok && tgt_ok {
                    let map = ChainMap { components: tower.maps[n].clone() };
                    let hm = map.homology_matrix(slice, &slices[n + 1], k)?;
                    iso_flags.push(hm.rows() == hm.cols() && hm.rank() == hm.rows());
                } else {
                    let sd = dim_safe(n, k)?;
                    let td = dim_safe(n + 1, k)?;
                    iso_flags.push(sd == 0 && td == 0);
                }
            }
        }
        // stabilization: two consecutive isomorphisms
        let mut stabilized_at = None;
        for n in 0..iso_flags.len().saturating_sub(1) {
            if iso_flags[n..].iter().all(|&b| b) && iso_flags.len() - n >= 2 {
                stabilized_at = Some(n);
                break;
            }
        }
        if stabilized_at.is_none() {
            caveats.push(Caveat::NotStabilized { degree: k, levels: slices.len() });
        }
        let dim = *level_dims.last().expect("at least one level");
        entries.push(StableEntry {
            degree: k,
            level_dims,
            transition_isos: iso_flags,
            dim,
            stabilized_at,
        });
    }
    Ok(StableHomologyReport { window, entries, caveats })
}

#[derive(Debug)]
pub struct StableEntry {
    pub degree: i32,
    /// `dim H_{n+k}(K^n)` per level.
    pub level_dims: Vec<usize>,
    /// Whether each transition induces an isomorphism: the rank-equality
    /// certificate.
    pub transition_isos: Vec<bool>,
    /// Dimension at the top level.
    pub dim: usize,
    /// First level from which all transitions in range are isomorphisms
    /// (at least two of them).
    pub stabilized_at: Option<usize>,
}

#[derive(Debug)]
pub struct StableHomologyReport {
    pub window: (i32, i32),
    pub entries: Vec<StableEntry>,
    pub caveats: Vec<Caveat>,
}

impl StableHomologyReport {
    pub fn dim(&self, degree: i32) -> Option<usize> {
        self.entries.iter().find(|e| e.degree == degree).map(|e| e.dim)
    }

    pub fn stabilized(&self, degree: i32) -> bool {
        self.entries
            .iter()
            .find(|e| e.degree == degree)
            .is_some_and(|e| e.stabilized_at.is_some())
    }

    pub fn dims(&self) -> Vec<(i32, usize)> {
        self.entries.iter().map(|e| (e.degree, e.dim)).collect()
    }
}

// ---------------------------------------------------------------------------
// Canonical spectra
// ---------------------------------------------------------------------------

/// The retractive sphere spectrum over a connected free base: level `n` is
/// `L ⊔ 𝕃̂(x_n)` with `x_n` a cycle of degree `n−1`, and the adjoint
/// structure map sends `x_n` to `s^{−1}x_{n+1}`.
pub fn sphere_spectrum_model(
    base: &Arc<CdglPresentation>,
    n_max: usize,
) -> Result<FreeSpectrum> {
    if !base_is_connected(base) {
        return Err(Error::NotConnected("the sphere spectrum needs a connected base".into()));
    }
    let mut levels = Vec::new();
    let mut structure = Vec::new();
    for n in 0..=n_max {
        let gen = Generator::with_level(format!("x{n}"), n as i32 - 1, n);
        levels.push(RetractiveModel::free(base.clone(), vec![gen], BTreeMap::new())?);
    }
    for n in 0..n_max {
        let next = levels[n + 1].joint()?;
        let y = TensorElt::generator(next.alphabet().clone(), &format!("x{}", n + 1), next.cap())?;
        structure.push(StructureMap::OnGenerators(
            [(format!("x{n}"), y)].into_iter().collect(),
        ));
    }
    FreeSpectrum::new(base.clone(), levels, structure)
}

/// The suspension spectrum of a free connected model at level offset `k`:
/// trivial below `k`, iterated suspension models above, with the identity
/// transport as structure maps.
pub fn suspension_spectrum(
    m0: &RetractiveModel,
    k: usize,
    n_max: usize,
) -> Result<FreeSpectrum> {
    if !m0.is_free() {
        return Err(Error::PresentationError("suspension spectra need a free model".into()));
    }
    let base = m0.base().clone();
    let mut levels: Vec<RetractiveModel> = Vec::new();
    for n in 0..=n_max {
        if n < k {
            levels.push(RetractiveModel::trivial(base.clone()));
        } else if n == k {
            levels.push(m0.clone());
        } else {
            let prev = levels.last().expect("previous level");
            levels.push(prev.suspension_model()?);
        }
    }
    let mut structure = Vec::new();
    for n in 0..n_max {
        if n + 1 <= k {
            structure.push(StructureMap::OnGenerators(BTreeMap::new()));
            continue;
        }
        // each generator g of level n maps to its suspension s g in level n+1
        let next = levels[n + 1].joint()?;
        let mut images = BTreeMap::new();
        for g in levels[n].fiber_generators() {
            let y = TensorElt::generator(
                next.alphabet().clone(),
                &format!("s{}", g.name),
                next.cap(),
            )?;
            images.insert(g.name.clone(), y);
        }
        structure.push(StructureMap::OnGenerators(images));
    }
    FreeSpectrum::new(base, levels, structure)
}

/// The zero spectrum: trivial fibers at every level.
pub fn zero_spectrum(base: &Arc<CdglPresentation>, n_max: usize) -> Result<FreeSpectrum> {
    let levels = (0..=n_max)
        .map(|_| RetractiveModel::trivial(base.clone()))
        .collect::<Vec<_>>();
    let structure = (0..n_max)
        .map(|_| StructureMap::OnGenerators(BTreeMap::new()))
        .collect();
    FreeSpectrum::new(base.clone(), levels, structure)
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

pub fn spectrum_to_json(s: &FreeSpectrum) -> Result<Value> {
    let levels: Vec<Value> = s
        .levels
        .iter()
        .map(|l| l.to_json())
        .collect::<Result<Vec<_>>>()?;
    let mut structure = Vec::new();
    for (n, sm) in s.structure.iter().enumerate() {
        match sm {
            StructureMap::OnGenerators(images) => {
                for (w, y) in images {
                    let expr = LieElt::from_tensor(y.clone())?.expr();
                    structure.push(serde_json::json!({"w": w, "image": expr.to_json()}));
                }
            }
            StructureMap::OnModule(_) => {
                return Err(Error::PresentationError(format!(
                    "level {n} carries module-generated structure with no file form"
                )))
            }
        }
    }
    Ok(serde_json::json!({
        "base": s.base.to_json(),
        "levels": levels,
        "structure": structure,
        "n_max": s.n_max(),
    }))
}

pub fn spectrum_from_json(
    v: &Value,
    default_cap: usize,
    default_window: (i32, i32),
) -> Result<FreeSpectrum> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::ParseError("spectrum file must be a JSON object".into()))?;
    let base_v = obj
        .get("base")
        .ok_or_else(|| Error::ParseError("missing `base` cdgl".into()))?;
    let base = Arc::new(CdglPresentation::from_json(base_v, default_cap, default_window)?);
    let levels_v = obj
        .get("levels")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::ParseError("missing `levels` array".into()))?;
    let mut levels = Vec::new();
    for l in levels_v {
        levels.push(RetractiveModel::from_json(l, base.cap(), base.window())?);
    }
    if let Some(nm) = obj.get("n_max").and_then(Value::as_u64) {
        if nm as usize + 1 != levels.len() {
            return Err(Error::ParseError(format!(
                "n_max {} does not match {} levels",
                nm,
                levels.len()
            )));
        }
    }
    // fiber generator names must identify their level uniquely
    let mut owner: BTreeMap<String, usize> = BTreeMap::new();
    for (n, l) in levels.iter().enumerate() {
        for g in l.fiber_generators() {
            if owner.insert(g.name.clone(), n).is_some() {
                return Err(Error::ParseError(format!(
                    "fiber generator `{}` appears in more than one level",
                    g.name
                )));
            }
        }
    }
    let mut images: Vec<BTreeMap<String, TensorElt>> =
        vec![BTreeMap::new(); levels.len().saturating_sub(1)];
    if let Some(sv) = obj.get("structure") {
        let arr = sv
            .as_array()
            .ok_or_else(|| Error::ParseError("`structure` must be an array".into()))?;
        for entry in arr {
            let w = entry
                .get("w")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::ParseError("structure entry needs `w`".into()))?;
            let &n = owner
                .get(w)
                .ok_or_else(|| Error::ParseError(format!("unknown fiber generator `{w}`")))?;
            if n + 1 >= levels.len() {
                return Err(Error::ParseError(format!(
                    "structure map given for the top level generator `{w}`"
                )));
            }
            let expr_v = entry
                .get("image")
                .ok_or_else(|| Error::ParseError("structure entry needs `image`".into()))?;
            let expr = LieExpr::from_json(expr_v)?;
            let next = levels[n + 1].joint()?;
            let y = expr.eval(next.alphabet(), next.cap())?;
            images[n].insert(w.to_string(), y.into_tensor());
        }
    }
    let structure = images.into_iter().map(StructureMap::OnGenerators).collect();
    FreeSpectrum::new(base, levels, structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    const W: (i32, i32) = (-2, 7);

    fn base_x(degree: i32, cap: usize) -> Arc<CdglPresentation> {
        Arc::new(
            CdglPresentation::new(
                vec![Generator::new("x", degree)],
                BTreeMap::new(),
                BTreeSet::new(),
                cap,
                W,
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_spectrum_has_zero_stable_homology() {
        let base = base_x(1, 3);
        let s = zero_spectrum(&base, 3).unwrap();
        let h = s.stable_homology(None, (-2, 3)).unwrap();
        for (_, dim) in h.dims() {
            assert_eq!(dim, 0);
        }
    }

    #[test]
    fn sphere_spectrum_levels_and_structure() {
        let base = base_x(1, 4);
        let s = sphere_spectrum_model(&base, 4).unwrap();
        // level 0 fiber generator has degree −1
        assert_eq!(s.levels()[0].fiber_generators()[0].degree, -1);
        // μ_n(x_n) = s^{−1} x_{n+1} with no corrections
        let y = s.structure_image(0, "x0").unwrap();
        assert_eq!(y.terms().count(), 1);
        let (word, c) = y.terms().next().unwrap();
        assert_eq!(word.len(), 1);
        assert!(c.is_one());
    }

    #[test]
    fn sphere_stable_homology_counts_tensor_words() {
        // H^st_k = dim T^{k+1}(x) = 1 over L = (𝕃̂(x), 0), |x| = 1; the
        // class in stable degree k has bracket weight k+2, so it is visible
        // exactly for k ≤ cap − 2, and the bracket classes of level n die
        // once n > k + 2, which sets the stabilization level
        let base = base_x(1, 5);
        let s = sphere_spectrum_model(&base, 7).unwrap();
        let h = s.stable_homology(None, (-2, 3)).unwrap();
        assert_eq!(h.dim(-2), Some(0));
        for k in -1..=3 {
            assert_eq!(h.dim(k), Some(1), "stable degree {k}");
            assert!(h.stabilized(k), "stable degree {k} should stabilize");
        }
    }

    #[test]
    fn sphere_requires_connected_base() {
        let base = base_x(0, 3);
        assert!(matches!(
            sphere_spectrum_model(&base, 3),
            Err(Error::NotConnected(_))
        ));
    }

    fn quadratic_spectrum(base: &Arc<CdglPresentation>, n_max: usize) -> FreeSpectrum {
        // level n: p_n of degree n and r_n of degree 2n+1 with
        // d r_n = [p_n, p_n]; structure p_n ↦ p_{n+1} and r_n ↦ 0 (the
        // degrees of the r-family drift, so its classes die in the colimit
        // on every reduction alike)
        let mut levels = Vec::new();
        for n in 0..=n_max {
            let p = Generator::with_level(format!("p{n}"), n as i32, n);
            let r = Generator::with_level(format!("r{n}"), 2 * n as i32 + 1, n);
            let diff = [(
                format!("r{n}"),
                LieExpr::Br(
                    Box::new(LieExpr::Gen(format!("p{n}"))),
                    Box::new(LieExpr::Gen(format!("p{n}"))),
                ),
            )]
            .into();
            levels.push(RetractiveModel::free(base.clone(), vec![p, r], diff).unwrap());
        }
        let mut structure = Vec::new();
        for n in 0..n_max {
            let next = levels[n + 1].joint().unwrap();
            let mut images = BTreeMap::new();
            images.insert(
                format!("p{n}"),
                TensorElt::generator(next.alphabet().clone(), &format!("p{}", n + 1), next.cap())
                    .unwrap(),
            );
            structure.push(StructureMap::OnGenerators(images));
        }
        FreeSpectrum::new(base.clone(), levels, structure).unwrap()
    }

    #[test]
    fn quadratic_spectrum_validates_and_reduces() {
        let base = base_x(1, 4);
        let s = quadratic_spectrum(&base, 4);
        let lin = s.linear_reduction().unwrap();
        // linear reduction stripped the quadratic differential
        let l1 = lin.levels()[1].joint().unwrap();
        assert!(l1.diff_of("r1").unwrap().is_zero());
        // μ¹ images contain no quadratic terms by construction
        let ind = s.indecomposable_reduction().unwrap();
        match ind.levels()[1].shape() {
            FiberShape::Module(f) => assert!(f.abelian),
            _ => panic!("indecomposable levels are module-generated"),
        }
    }

    #[test]
    fn reductions_preserve_stable_homology() {
        let base = base_x(1, 4);
        let s = quadratic_spectrum(&base, 4);
        let window = (-1, 3);
        let h = s.stable_homology(None, window).unwrap();
        let h_lin = s.linear_reduction().unwrap().stable_homology(None, window).unwrap();
        let h_ind = s
            .indecomposable_reduction()
            .unwrap()
            .stable_homology(None, window)
            .unwrap();
        assert_eq!(h.dims(), h_lin.dims());
        assert_eq!(h.dims(), h_ind.dims());
    }

    #[test]
    fn already_linear_spectrum_is_fixed_by_linear_reduction() {
        let base = base_x(1, 4);
        let s = sphere_spectrum_model(&base, 3).unwrap();
        let lin = s.linear_reduction().unwrap();
        for (l, r) in s.levels().iter().zip(lin.levels()) {
            let lj = l.joint().unwrap();
            let rj = r.joint().unwrap();
            for g in l.fiber_generators() {
                assert_eq!(lj.diff_of(&g.name).unwrap(), rj.diff_of(&g.name).unwrap());
            }
        }
    }

    #[test]
    fn suspension_spectrum_shifts_fiber_degrees_and_stabilizes_at_one() {
        let base = base_x(1, 4);
        let m0 = RetractiveModel::free(
            base.clone(),
            vec![Generator::new("w", 2)],
            BTreeMap::new(),
        )
        .unwrap();
        let s = suspension_spectrum(&m0, 0, 4).unwrap();
        for (n, level) in s.levels().iter().enumerate() {
            assert_eq!(level.fiber_generators()[0].degree, 2 + n as i32);
        }
        let h = s.stable_homology(None, (1, 4)).unwrap();
        // H(fiber of M₀) = H(𝕃̂(T)) with T = UL ⊗ w: in stable degrees the
        // weight-one part survives; stabilization at level 1
        for e in &h.entries {
            if e.dim > 0 {
                assert!(e.stabilized_at.is_some());
                assert!(e.stabilized_at.unwrap() <= 1, "degree {}", e.degree);
            }
        }
        // against the module homology of the fiber, shifted to stable degree
        let ind = m0.indecomposable_fiber_module().unwrap();
        let hm = crate::ulmod::module_homology(&ind, (1, 4)).unwrap();
        for k in 1..=4 {
            assert_eq!(h.dim(k), hm.dim(k), "degree {k}");
        }
    }

    #[test]
    fn suspension_spectrum_with_offset_is_trivial_below() {
        let base = base_x(1, 3);
        let m0 = RetractiveModel::free(
            base.clone(),
            vec![Generator::new("w", 2)],
            BTreeMap::new(),
        )
        .unwrap();
        let s = suspension_spectrum(&m0, 2, 4).unwrap();
        assert!(s.levels()[0].fiber_generators().is_empty());
        assert!(s.levels()[1].fiber_generators().is_empty());
        assert_eq!(s.levels()[2].fiber_generators()[0].degree, 2);
    }

    #[test]
    fn connected_cover_preserves_stable_homology() {
        let base = base_x(1, 4);
        let s = sphere_spectrum_model(&base, 5).unwrap();
        let window = (-1, 3);
        let h = s.stable_homology(None, window).unwrap();
        let cover = s.connected_cover(window).unwrap();
        let hc = cover.stable_homology(window).unwrap();
        for k in window.0..=window.1 {
            // below the connectivity line early levels differ; the colimit
            // value at the top level agrees
            assert_eq!(h.dim(k), hc.dim(k), "degree {k}");
        }
        // negative-degree fiber classes are dropped at each level
        assert_eq!(cover.level(0).dim(-1), 0);
    }

    #[test]
    fn perturbed_stable_homology_at_zero_matches_unperturbed() {
        let base = base_x(1, 4);
        let s = quadratic_spectrum(&base, 3);
        let window = (-1, 2);
        let h0 = s.stable_homology(None, window).unwrap();
        let hz = s.stable_homology(Some(&s.base().zero_elt()), window).unwrap();
        assert_eq!(h0.dims(), hz.dims());
    }

    #[test]
    fn spectrum_json_round_trip() {
        let base = base_x(1, 4);
        let s = sphere_spectrum_model(&base, 2).unwrap();
        let j = spectrum_to_json(&s).unwrap();
        let back = spectrum_from_json(&j, 4, W).unwrap();
        assert_eq!(spectrum_to_json(&back).unwrap(), j);
        // duplicate fiber generator names across levels are rejected
        let mut bad = j.clone();
        bad["levels"][1]["fiber_generators"][0]["name"] = "x0".into();
        assert!(spectrum_from_json(&bad, 4, W).is_err());
    }

    #[test]
    fn structure_checked_as_chain_map() {
        // a cycle must map to a cycle: w (degree 3, dw = 0) ↦ u with
        // du = [x,v] ≠ 0 violates the chain condition
        let base = base_x(1, 4);
        let l0 = RetractiveModel::free(
            base.clone(),
            vec![Generator::new("w", 3)],
            BTreeMap::new(),
        )
        .unwrap();
        let l1 = RetractiveModel::free(
            base.clone(),
            vec![Generator::new("u", 4), Generator::new("v", 2)],
            [(
                "u".to_string(),
                LieExpr::Br(
                    Box::new(LieExpr::Gen("x".into())),
                    Box::new(LieExpr::Gen("v".into())),
                ),
            )]
            .into(),
        )
        .unwrap();
        let y = TensorElt::generator(l1.joint().unwrap().alphabet().clone(), "u", 4).unwrap();
        let bad = FreeSpectrum::new(
            base.clone(),
            vec![l0.clone(), l1.clone()],
            vec![StructureMap::OnGenerators([("w".to_string(), y)].into())],
        );
        assert!(bad.is_err());
        // w ↦ [x,[x,v]], a degree-4 cycle in the one-letter span, is fine
        let joint = l1.joint().unwrap();
        let x = TensorElt::generator(joint.alphabet().clone(), "x", 4).unwrap();
        let v = TensorElt::generator(joint.alphabet().clone(), "v", 4).unwrap();
        let y = x.bracket(&x.bracket(&v).unwrap()).unwrap();
        let ok = FreeSpectrum::new(
            base,
            vec![l0, l1],
            vec![StructureMap::OnGenerators([("w".to_string(), y)].into())],
        );
        assert!(ok.is_ok());
    }
}
