//! Free retractive cdgl's over a base `L`: the canonical splitting, the
//! retractive linear part, loop and suspension models, the fiber functor
//! and its left adjoint.
//!
//! A free retractive model is the coproduct `L ⊔ 𝕃̂(W)` with a differential
//! sending fiber generators into the fiber ideal. Its splitting presents
//! the fiber as the free Lie algebra on `T ≅ UL ⊗̂ W`, the span of brackets
//! `[x₁,[…[x_k, w]]]` with exactly one fiber letter. Module-generated
//! models `L ⊕ 𝕃̂(ℛ)` carry the fiber of the left adjoint on quotient
//! presentations and the abelian carriers produced by the loop model.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde_json::Value;

use crate::cdgl::{CdglPresentation, ClassFilter, LieSpaces};
use crate::exactla::{ChainMap, ColumnSolver, ComplexSlice, Rational, SparseMatrix, SparseVec};
use crate::freelie::{sign_of_degree, Alphabet, Generator, LieElt, LieExpr, TensorElt, Word};
use crate::ulmod::{ul_cap, BasisMeta, ConcreteModule, ModGen, SemifreeModule, ULElt, ULModule};
use crate::{Error, Result};

/// A retractive model over a free base.
#[derive(Clone)]
pub struct RetractiveModel {
    base: Arc<CdglPresentation>,
    shape: FiberShape,
}

#[derive(Clone)]
pub enum FiberShape {
    /// `L ⊔ 𝕃̂(W)`, free on named fiber generators.
    Free(FreeFiber),
    /// `L ⊕ 𝕃̂(ℛ)` with `[L, ℛ] ⊆ ℛ` given by the module action; when the
    /// fiber is abelian the carrier is `ℛ` itself.
    Module(ModuleFiber),
}

#[derive(Clone)]
pub struct FreeFiber {
    /// The coproduct presentation; base generators come first.
    joint: CdglPresentation,
    n_base: usize,
}

#[derive(Clone)]
pub struct ModuleFiber {
    pub module: ConcreteModule,
    pub abelian: bool,
}

impl FreeFiber {
    pub fn fiber_names(&self) -> Vec<String> {
        self.joint.alphabet().gens()[self.n_base..]
            .iter()
            .map(|g| g.name.clone())
            .collect()
    }

    fn marks(&self) -> Vec<bool> {
        (0..self.joint.alphabet().len()).map(|i| i >= self.n_base).collect()
    }
}

impl RetractiveModel {
    /// `L ⊔ 𝕃̂(W)` with the given differential on fiber generators. Every
    /// term of a fiber differential must contain a fiber letter, and `d²`
    /// must vanish modulo the cap.
    pub fn free(
        base: Arc<CdglPresentation>,
        fiber_gens: Vec<Generator>,
        diff_on_fiber: BTreeMap<String, LieExpr>,
    ) -> Result<RetractiveModel> {
        let mut gens: Vec<Generator> = base.alphabet().gens().to_vec();
        let n_base = gens.len();
        gens.extend(fiber_gens.iter().cloned());
        let mut exprs: BTreeMap<String, LieExpr> = BTreeMap::new();
        for g in base.alphabet().gens() {
            if let Some(e) = base.diff_expr(&g.name) {
                exprs.insert(g.name.clone(), e.clone());
            }
        }
        for (name, e) in diff_on_fiber {
            if fiber_gens.iter().all(|g| g.name != name) {
                return Err(Error::PresentationError(format!(
                    "fiber differential given for unknown generator `{name}`"
                )));
            }
            exprs.insert(name, e);
        }
        let joint = CdglPresentation::new(
            gens,
            exprs,
            base.mc_generators().clone(),
            base.cap(),
            base.window(),
        )?;
        let model = RetractiveModel {
            base,
            shape: FiberShape::Free(FreeFiber { joint, n_base }),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn module_generated(
        base: Arc<CdglPresentation>,
        module: ConcreteModule,
        abelian: bool,
    ) -> RetractiveModel {
        RetractiveModel { base, shape: FiberShape::Module(ModuleFiber { module, abelian }) }
    }

    /// The base itself, with empty fiber.
    pub fn trivial(base: Arc<CdglPresentation>) -> RetractiveModel {
        RetractiveModel::free(base, Vec::new(), BTreeMap::new()).expect("empty fiber is valid")
    }

    fn validate(&self) -> Result<()> {
        if let FiberShape::Free(f) = &self.shape {
            let spaces = LieSpaces::with_marks(
                f.joint.alphabet().clone(),
                f.joint.cap(),
                f.marks(),
            );
            for name in f.fiber_names() {
                let dw = f.joint.diff_of(&name)?;
                for (word, _) in dw.terms() {
                    if spaces.class_of(word) == 0 {
                        return Err(Error::PresentationError(format!(
                            "d({name}) has a term with no fiber letter; the retraction \
                             would not be a chain map"
                        )));
                    }
                }
            }
            let report = f.joint.check_differential();
            if !report.passed() {
                return Err(Error::CertificateFailure(format!(
                    "retractive differential fails d²=0 on `{}`",
                    report.failures[0].0
                )));
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &Arc<CdglPresentation> {
        &self.base
    }

    pub fn shape(&self) -> &FiberShape {
        &self.shape
    }

    pub fn cap(&self) -> usize {
        self.base.cap()
    }

    pub fn window(&self) -> (i32, i32) {
        self.base.window()
    }

    pub fn is_free(&self) -> bool {
        matches!(self.shape, FiberShape::Free(_))
    }

    pub fn free_fiber(&self) -> Option<&FreeFiber> {
        match &self.shape {
            FiberShape::Free(f) => Some(f),
            FiberShape::Module(_) => None,
        }
    }

    /// The coproduct presentation of a free model.
    pub fn joint(&self) -> Result<&CdglPresentation> {
        match &self.shape {
            FiberShape::Free(f) => Ok(&f.joint),
            FiberShape::Module(_) => Err(Error::PresentationError(
                "module-generated model has no free coproduct presentation".into(),
            )),
        }
    }

    pub fn fiber_generators(&self) -> Vec<Generator> {
        match &self.shape {
            FiberShape::Free(f) => f.joint.alphabet().gens()[f.n_base..].to_vec(),
            FiberShape::Module(_) => Vec::new(),
        }
    }

    // -- splitting ---------------------------------------------------------

    /// Enumerates the `T`-basis `j(u ⊗ w) = [u₁,[…[u_k, w]]]` per (degree,
    /// weight) over the window, and the fiber dimensions of `K = 𝕃̂(T)`.
    pub fn split(&self, window: (i32, i32)) -> Result<SplitReport> {
        match &self.shape {
            FiberShape::Free(f) => {
                let mut t_counts = BTreeMap::new();
                let mut t_labels: BTreeMap<(i32, usize), Vec<String>> = BTreeMap::new();
                for (word, fg) in self.t_basis_pairs(window)? {
                    let u_names: Vec<String> = word
                        .iter()
                        .map(|&i| f.joint.alphabet().generator(i).name.clone())
                        .collect();
                    let label = if u_names.is_empty() {
                        fg.name.clone()
                    } else {
                        format!("ad({})({})", u_names.join(","), fg.name)
                    };
                    let degree = self.base.alphabet().word_degree(&word) + fg.degree;
                    let weight = word.len() + 1;
                    *t_counts.entry((degree, weight)).or_insert(0usize) += 1;
                    t_labels.entry((degree, weight)).or_default().push(label);
                }
                let mut k_dims = BTreeMap::new();
                let mut spaces = self.fiber_spaces()?;
                for degree in window.0..=window.1 {
                    let db = spaces.degree_basis(degree, ClassFilter::AtLeast(1))?;
                    k_dims.insert(degree, db.total);
                }
                Ok(SplitReport { t_counts, t_labels, k_dims })
            }
            FiberShape::Module(m) => {
                // the splitting data of a module-generated model is the
                // module basis itself
                let mut t_counts = BTreeMap::new();
                let mut t_labels: BTreeMap<(i32, usize), Vec<String>> = BTreeMap::new();
                for degree in window.0..=window.1 {
                    for meta in m.module.meta(degree) {
                        let key = (degree, meta.weight + 1);
                        *t_counts.entry(key).or_insert(0usize) += 1;
                        t_labels.entry(key).or_default().push(meta.label.clone());
                    }
                }
                let k_dims = (window.0..=window.1)
                    .map(|d| {
                        let dim = if m.abelian {
                            m.module.dim(d)
                        } else {
                            0
                        };
                        (d, dim)
                    })
                    .collect();
                Ok(SplitReport { t_counts, t_labels, k_dims })
            }
        }
    }

    /// `(u, w)` pairs of the `T`-basis with degrees inside the window.
    fn t_basis_pairs(&self, window: (i32, i32)) -> Result<Vec<(Word, Generator)>> {
        let f = self.free_fiber().ok_or_else(|| {
            Error::PresentationError("T-basis enumeration needs a free model".into())
        })?;
        let mut out = Vec::new();
        let base_alpha = self.base.alphabet();
        for len in 0..ul_cap(&self.base).max(self.cap()) {
            if len + 1 > self.cap() {
                break;
            }
            for u in base_alpha.words_of_weight(len) {
                for fg in &f.joint.alphabet().gens()[f.n_base..] {
                    let degree = base_alpha.word_degree(&u) + fg.degree;
                    if degree >= window.0 && degree <= window.1 {
                        out.push((u.clone(), fg.clone()));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `j(u ⊗ w)` as an element of the coproduct.
    pub fn j_elt(&self, u: &[u32], fiber_name: &str) -> Result<TensorElt> {
        let f = self.free_fiber().ok_or_else(|| {
            Error::PresentationError("the bracket embedding needs a free model".into())
        })?;
        let alphabet = f.joint.alphabet().clone();
        let cap = f.joint.cap();
        let mut acc = TensorElt::generator(alphabet.clone(), fiber_name, cap)?;
        for &letter in u.iter().rev() {
            let base_name = self.base.alphabet().generator(letter).name.clone();
            let x = TensorElt::generator(alphabet.clone(), &base_name, cap)?;
            acc = x.bracket(&acc)?;
        }
        Ok(acc)
    }

    fn fiber_spaces(&self) -> Result<LieSpaces> {
        let f = self.free_fiber().ok_or_else(|| {
            Error::PresentationError("fiber strata need a free model".into())
        })?;
        Ok(LieSpaces::with_marks(f.joint.alphabet().clone(), f.joint.cap(), f.marks()))
    }

    /// The `index`-th fiber basis vector at the given absolute degree, in
    /// the deterministic stratum enumeration used by [`Self::fiber_module`].
    pub(crate) fn fiber_basis_element(&self, degree: i32, index: usize) -> Result<TensorElt> {
        let mut spaces = self.fiber_spaces()?;
        let db = spaces.degree_basis(degree, ClassFilter::AtLeast(1))?;
        spaces.vector(&db, index)
    }

    /// The single-fiber-letter component of a joint element.
    pub(crate) fn weight_one_part(&self, t: &TensorElt) -> Result<TensorElt> {
        let spaces = self.fiber_spaces()?;
        let mut out = TensorElt::zero(t.alphabet().clone(), t.cap());
        for (word, c) in t.terms() {
            if spaces.class_of(word) == 1 {
                out.add_term(word, c);
            }
        }
        Ok(out)
    }

    /// Coordinates of a fiber element in the degree basis used by
    /// [`Self::fiber_module`].
    pub(crate) fn fiber_coords(
        &self,
        t: &TensorElt,
        degree: i32,
    ) -> Result<crate::exactla::SparseVec> {
        let mut spaces = self.fiber_spaces()?;
        let db = spaces.degree_basis(degree, ClassFilter::AtLeast(1))?;
        spaces.coords(&db, t)
    }

    // -- linear part -------------------------------------------------------

    /// Keeps, in each fiber differential, exactly the terms with one fiber
    /// letter. Idempotent; module-generated fibers are already linear.
    pub fn retractive_linear_part(&self) -> Result<RetractiveModel> {
        match &self.shape {
            FiberShape::Free(f) => {
                let spaces = LieSpaces::with_marks(
                    f.joint.alphabet().clone(),
                    f.joint.cap(),
                    f.marks(),
                );
                let mut diff = BTreeMap::new();
                for name in f.fiber_names() {
                    let dw = f.joint.diff_of(&name)?;
                    let mut lin = TensorElt::zero(f.joint.alphabet().clone(), f.joint.cap());
                    for (word, c) in dw.terms() {
                        if spaces.class_of(word) == 1 {
                            lin.add_term(word, c);
                        }
                    }
                    if !lin.is_zero() {
                        diff.insert(name, LieElt::from_tensor(lin)?.expr());
                    }
                }
                RetractiveModel::free(
                    self.base.clone(),
                    self.fiber_generators(),
                    diff,
                )
            }
            FiberShape::Module(_) => Ok(self.clone()),
        }
    }

    // -- fiber carriers ----------------------------------------------------

    /// The fiber `K` as a degreewise-finite complete module over the base:
    /// basis the fiber Lie strata, differential `d` (or `d_a`), action the
    /// adjoint bracket. For module-generated fibers the carrier is the free
    /// Lie algebra on the module basis letters, or the module itself when
    /// abelian.
    pub fn fiber_module(
        &self,
        window: (i32, i32),
        at: Option<&LieElt>,
    ) -> Result<ConcreteModule> {
        match &self.shape {
            FiberShape::Free(f) => {
                if let Some(a) = at {
                    if !self.base.is_mc(a)? {
                        return Err(Error::NotMaurerCartan(
                            "fiber perturbation basepoint fails the MC equation".into(),
                        ));
                    }
                }
                let joint = &f.joint;
                // lift the perturbation into the coproduct
                let lifted = match at {
                    Some(a) => {
                        let images: Vec<TensorElt> = self
                            .base
                            .alphabet()
                            .gens()
                            .iter()
                            .map(|g| {
                                TensorElt::generator(
                                    joint.alphabet().clone(),
                                    &g.name,
                                    joint.cap(),
                                )
                                .expect("base generator in coproduct")
                            })
                            .collect();
                        Some(a.tensor().substitute(joint.alphabet(), joint.cap(), |i| {
                            Some(&images[i as usize])
                        })?)
                    }
                    None => None,
                };
                let d = |t: &TensorElt| -> Result<TensorElt> {
                    let mut out = joint.d(t)?;
                    if let Some(a) = &lifted {
                        out = out.add(&a.bracket(t)?)?;
                    }
                    Ok(out)
                };
                let mut spaces = self.fiber_spaces()?;
                let (slice, bases) =
                    spaces.complex(window.0, window.1, ClassFilter::AtLeast(1), &d)?;
                let mut basis = BTreeMap::new();
                let mut diff = BTreeMap::new();
                for degree in window.0..=window.1 {
                    let db = &bases[(degree - window.0) as usize];
                    let metas: Vec<BasisMeta> = db
                        .labels
                        .iter()
                        .enumerate()
                        .map(|(i, l)| {
                            // weight of the i-th basis vector from its block
                            let mut rem = i;
                            let mut weight = 0;
                            for &(w, _, len) in &db.blocks {
                                if rem < len {
                                    weight = w;
                                    break;
                                }
                                rem -= len;
                            }
                            BasisMeta::opaque(l.clone(), weight)
                        })
                        .collect();
                    basis.insert(degree, metas);
                    if degree > window.0 {
                        diff.insert(
                            degree,
                            slice.boundary(degree).expect("inner boundary").clone(),
                        );
                    }
                }
                // adjoint action of base generators
                let mut action = BTreeMap::new();
                for (xi, xg) in self.base.alphabet().gens().iter().enumerate() {
                    let x = TensorElt::generator(
                        joint.alphabet().clone(),
                        &xg.name,
                        joint.cap(),
                    )?;
                    for degree in window.0..=window.1 {
                        let target = degree + xg.degree;
                        if target < window.0 || target > window.1 {
                            continue;
                        }
                        let src = &bases[(degree - window.0) as usize];
                        let tgt = &bases[(target - window.0) as usize];
                        let mut cols = Vec::with_capacity(src.total);
                        for i in 0..src.total {
                            let v = spaces.vector(src, i)?;
                            let xv = x.bracket(&v)?;
                            cols.push(spaces.coords(tgt, &xv)?);
                        }
                        action.insert(
                            (xi as u32, degree),
                            SparseMatrix::from_columns(tgt.total, &cols),
                        );
                    }
                }
                ConcreteModule::new(self.base.clone(), basis, diff, action, window, Vec::new())
            }
            FiberShape::Module(m) => {
                if m.abelian {
                    let mut out = m.module.clone();
                    if let Some(a) = at {
                        out = perturb_module(&self.base, &out, a, window)?;
                    }
                    return Ok(out);
                }
                // free Lie algebra on the module basis letters
                let carrier = module_lie_carrier(&self.base, &m.module, window, at)?;
                Ok(carrier)
            }
        }
    }

    /// The fiber functor: `K` as a complete module over the enveloping
    /// algebra; the connected flag applies the degree-0-cycles truncation.
    pub fn fiber_functor(&self, window: (i32, i32), connected: bool) -> Result<ULModule> {
        let m = self.fiber_module(window, None)?;
        if connected {
            Ok(ULModule::Concrete(m.connected_cover()?))
        } else {
            Ok(ULModule::Concrete(m))
        }
    }

    /// The weight-one slice of the fiber with the linear differential: the
    /// semifree module `(UL ⊗̂ W, d₁)` for free models, the module itself
    /// for module-generated ones.
    pub fn indecomposable_fiber_module(&self) -> Result<ULModule> {
        match &self.shape {
            FiberShape::Free(f) => {
                let fiber = self.fiber_generators();
                let cap = ul_cap(&self.base);
                let gens: Vec<ModGen> = fiber
                    .iter()
                    .map(|g| ModGen { name: g.name.clone(), degree: g.degree, stage: 0 })
                    .collect();
                let solver = TSolver::new(self)?;
                let mut diff = Vec::new();
                for g in &fiber {
                    let dw = f.joint.diff_of(&g.name)?;
                    let spaces = self.fiber_spaces()?;
                    let mut lin = TensorElt::zero(f.joint.alphabet().clone(), f.joint.cap());
                    for (word, c) in dw.terms() {
                        if spaces.class_of(word) == 1 {
                            lin.add_term(word, c);
                        }
                    }
                    let mut e = ULElt::zero(self.base.clone(), cap);
                    for ((u, fg), c) in solver.t_coords(self, &lin)? {
                        e.add_term(&u, fg, &c);
                    }
                    diff.push(e);
                }
                // stages: topological order along the linear differential is
                // not needed for correctness of downstream consumers; stage
                // by degree so staging holds whenever d₁ lowers degree
                let mut staged = gens;
                let min_deg = staged.iter().map(|g| g.degree).min().unwrap_or(0);
                for g in &mut staged {
                    g.stage = (g.degree - min_deg) as usize;
                }
                Ok(ULModule::Semifree(SemifreeModule::new(
                    self.base.clone(),
                    staged,
                    diff,
                    cap,
                )?))
            }
            FiberShape::Module(m) => Ok(ULModule::Concrete(m.module.clone())),
        }
    }

    // -- loops and suspension ----------------------------------------------

    /// The reduced loop model `L ⊕ s^{−1}K`: the desuspended fiber complex
    /// as an abelian fiber, with `[x, s^{−1}y] = (−1)^{|x|} s^{−1}[x,y]`.
    pub fn loop_model(&self, window: (i32, i32)) -> Result<RetractiveModel> {
        let fiber = self.fiber_module((window.0, window.1 + 1), None)?;
        let loop_fiber = fiber.suspend(-1);
        Ok(RetractiveModel::module_generated(self.base.clone(), loop_fiber, true))
    }

    /// The suspension model `(L ⊔ 𝕃̂(sW), ∂)` with `∂` retractive linear,
    /// determined by `d₁(sx) = −s(d₁x)` on the splitting basis:
    /// `d₁w = Σ c·j(u⊗w')` gives `∂(sw) = −Σ c·(−1)^{|u|} j(u⊗sw')`.
    pub fn suspension_model(&self) -> Result<RetractiveModel> {
        match &self.shape {
            FiberShape::Free(f) => {
                let solver = TSolver::new(self)?;
                let fiber = self.fiber_generators();
                let spaces = self.fiber_spaces()?;
                let sgens: Vec<Generator> = fiber
                    .iter()
                    .map(|g| Generator::new(format!("s{}", g.name), g.degree + 1))
                    .collect();
                let mut diff = BTreeMap::new();
                for g in &fiber {
                    let dw = f.joint.diff_of(&g.name)?;
                    let mut lin = TensorElt::zero(f.joint.alphabet().clone(), f.joint.cap());
                    for (word, c) in dw.terms() {
                        if spaces.class_of(word) == 1 {
                            lin.add_term(word, c);
                        }
                    }
                    if lin.is_zero() {
                        continue;
                    }
                    let mut parts: Vec<LieExpr> = Vec::new();
                    for ((u, fg), c) in solver.t_coords(self, &lin)? {
                        let udeg = self.base.alphabet().word_degree(&u);
                        let coeff = -sign_of_degree(udeg) * c;
                        let mut e = LieExpr::Gen(format!("s{}", fiber[fg].name));
                        for &letter in u.iter().rev() {
                            let name = self.base.alphabet().generator(letter).name.clone();
                            e = LieExpr::Br(Box::new(LieExpr::Gen(name)), Box::new(e));
                        }
                        parts.push(if coeff.is_one() {
                            e
                        } else {
                            LieExpr::Scal(coeff, Box::new(e))
                        });
                    }
                    let expr = match parts.len() {
                        0 => continue,
                        1 => parts.pop().unwrap(),
                        _ => LieExpr::Sum(parts),
                    };
                    diff.insert(format!("s{}", g.name), expr);
                }
                RetractiveModel::free(self.base.clone(), sgens, diff)
            }
            FiberShape::Module(m) if m.abelian => Ok(RetractiveModel::module_generated(
                self.base.clone(),
                m.module.suspend(1),
                true,
            )),
            FiberShape::Module(_) => Err(Error::PresentationError(
                "suspension is defined on free or abelian-fiber models only".into(),
            )),
        }
    }

    // -- serialization -----------------------------------------------------

    pub fn to_json(&self) -> Result<Value> {
        let f = self.free_fiber().ok_or_else(|| {
            Error::PresentationError("module-generated models have no file form".into())
        })?;
        let mut v = self.base.to_json();
        let obj = v.as_object_mut().expect("object");
        let fiber: Vec<Value> = self
            .fiber_generators()
            .iter()
            .map(|g| serde_json::json!({"name": g.name, "degree": g.degree}))
            .collect();
        obj.insert("fiber_generators".into(), Value::Array(fiber));
        let mut diff = serde_json::Map::new();
        for g in self.fiber_generators() {
            let expr = f.joint.diff_expr(&g.name).cloned().unwrap_or(LieExpr::Zero);
            diff.insert(g.name.clone(), expr.to_json());
        }
        obj.insert("differential_on_fiber".into(), Value::Object(diff));
        Ok(v)
    }

    pub fn from_json(
        v: &Value,
        default_cap: usize,
        default_window: (i32, i32),
    ) -> Result<RetractiveModel> {
        let base = Arc::new(CdglPresentation::from_json(v, default_cap, default_window)?);
        let obj = v.as_object().expect("validated by base parse");
        let mut fiber_gens = Vec::new();
        if let Some(fv) = obj.get("fiber_generators") {
            let arr = fv
                .as_array()
                .ok_or_else(|| Error::ParseError("`fiber_generators` must be an array".into()))?;
            for g in arr {
                let name = g
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::ParseError("fiber generator needs `name`".into()))?;
                let degree = g
                    .get("degree")
                    .and_then(Value::as_i64)
                    .ok_or_else(|| Error::ParseError("fiber generator needs `degree`".into()))?;
                fiber_gens.push(Generator::new(name, degree as i32));
            }
        }
        let mut diff = BTreeMap::new();
        if let Some(dv) = obj.get("differential_on_fiber") {
            let d = dv
                .as_object()
                .ok_or_else(|| Error::ParseError("`differential_on_fiber` must be an object".into()))?;
            for (name, e) in d {
                diff.insert(name.clone(), LieExpr::from_json(e)?);
            }
        }
        RetractiveModel::free(base, fiber_gens, diff)
    }
}

fn perturb_module(
    base: &Arc<CdglPresentation>,
    module: &ConcreteModule,
    a: &LieElt,
    window: (i32, i32),
) -> Result<ConcreteModule> {
    if !base.is_mc(a)? {
        return Err(Error::NotMaurerCartan("module perturbation fails the MC equation".into()));
    }
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

/// The complex of the free Lie algebra on the basis letters of a module,
/// with the derivation differential (and perturbation through the action).
fn module_lie_carrier(
    base: &Arc<CdglPresentation>,
    module: &ConcreteModule,
    window: (i32, i32),
    at: Option<&LieElt>,
) -> Result<ConcreteModule> {
    // letters: one per module basis element, weight = module weight + 1
    let mut letters = Vec::new();
    let mut weights = Vec::new();
    let mut letter_of: BTreeMap<(i32, usize), usize> = BTreeMap::new();
    let (mlo, mhi) = module.window();
    for d in mlo..=mhi {
        for (i, meta) in module.meta(d).iter().enumerate() {
            letter_of.insert((d, i), letters.len());
            letters.push(Generator::new(format!("r{}_{}", d, i), d));
            weights.push(meta.weight + 1);
        }
    }
    let alphabet = Alphabet::with_weights(letters, weights)?;
    let cap = base.cap();
    // letter differentials from the (possibly perturbed) module boundary
    let mut dletters: Vec<TensorElt> = Vec::new();
    for d in mlo..=mhi {
        for i in 0..module.dim(d) {
            let mut v = SparseVec::new();
            v.insert(i, Rational::one());
            let mut image = match module.diff_matrix(d) {
                Some(m) => m.apply(&v),
                None => SparseVec::new(),
            };
            if let Some(a) = at {
                let ad_a = module.action_of(a.tensor(), d);
                for (k, c) in ad_a.apply(&v) {
                    let entry = image.entry(k).or_insert_with(Rational::zero);
                    *entry += c;
                    if entry.is_zero() {
                        image.remove(&k);
                    }
                }
            }
            let mut t = TensorElt::zero(alphabet.clone(), cap);
            for (&k, c) in &image {
                if let Some(&li) = letter_of.get(&(d - 1, k)) {
                    t.add_term(&[li as u32], c);
                }
            }
            dletters.push(t);
        }
    }
    let d = |t: &TensorElt| t.apply_derivation(|i| Some(&dletters[i as usize]));
    let mut spaces = LieSpaces::new(alphabet.clone(), cap);
    let (slice, bases) = spaces.complex(window.0, window.1, ClassFilter::All, &d)?;
    let mut basis = BTreeMap::new();
    let mut diff = BTreeMap::new();
    for degree in window.0..=window.1 {
        let db = &bases[(degree - window.0) as usize];
        basis.insert(
            degree,
            db.labels
                .iter()
                .map(|l| BasisMeta::opaque(l.clone(), 0))
                .collect::<Vec<_>>(),
        );
        if degree > window.0 {
            diff.insert(degree, slice.boundary(degree).expect("inner boundary").clone());
        }
    }
    // action of base generators: derivation extension of the module action
    let mut action = BTreeMap::new();
    for (xi, xg) in base.alphabet().gens().iter().enumerate() {
        // images of letters under x
        let mut ximg: Vec<TensorElt> = Vec::new();
        for d0 in mlo..=mhi {
            for i in 0..module.dim(d0) {
                let mut v = SparseVec::new();
                v.insert(i, Rational::one());
                let mut t = TensorElt::zero(alphabet.clone(), cap);
                if let Some(m) = module.action_matrix(xi as u32, d0) {
                    for (k, c) in m.apply(&v) {
                        if let Some(&li) = letter_of.get(&(d0 + xg.degree, k)) {
                            t.add_term(&[li as u32], &c);
                        }
                    }
                }
                ximg.push(t);
            }
        }
        for degree in window.0..=window.1 {
            let target = degree + xg.degree;
            if target < window.0 || target > window.1 {
                continue;
            }
            let src = &bases[(degree - window.0) as usize];
            let tgt = &bases[(target - window.0) as usize];
            let mut cols = Vec::with_capacity(src.total);
            for i in 0..src.total {
                let v = spaces.vector(src, i)?;
                let xv = v.apply_graded_derivation(xg.degree, |j| Some(&ximg[j as usize]))?;
                cols.push(spaces.coords(tgt, &xv)?);
            }
            action.insert((xi as u32, degree), SparseMatrix::from_columns(tgt.total, &cols));
        }
    }
    ConcreteModule::new(base.clone(), basis, diff, action, window, module.caveats().to_vec())
}

/// Coordinates of weight-one fiber elements in the `j(u ⊗ w)` basis.
pub(crate) struct TSolver {
    strata: BTreeMap<(i32, usize), (Vec<(Word, usize)>, ColumnSolver, Vec<Word>)>,
}

impl TSolver {
    pub fn new(model: &RetractiveModel) -> Result<TSolver> {
        let f = model.free_fiber().ok_or_else(|| {
            Error::PresentationError("the splitting solver needs a free model".into())
        })?;
        let fiber = model.fiber_generators();
        let base_alpha = model.base().alphabet();
        let joint_alpha = f.joint.alphabet();
        let cap = f.joint.cap();
        // group (u, w) pairs by (degree, weight)
        let mut groups: BTreeMap<(i32, usize), Vec<(Word, usize)>> = BTreeMap::new();
        for len in 0..cap {
            for u in base_alpha.words_of_weight(len) {
                for (fg_idx, fg) in fiber.iter().enumerate() {
                    let degree = base_alpha.word_degree(&u) + fg.degree;
                    groups.entry((degree, len + 1)).or_default().push((u.clone(), fg_idx));
                }
            }
        }
        let mut strata = BTreeMap::new();
        for ((degree, weight), pairs) in groups {
            // word list of the class-1 stratum
            let mut words: Vec<Word> = Vec::new();
            let mut word_pos: BTreeMap<Word, usize> = BTreeMap::new();
            for w in joint_alpha.words_of_weight(weight) {
                if joint_alpha.word_degree(&w) != degree {
                    continue;
                }
                let class = w.iter().filter(|&&i| (i as usize) >= f.n_base).count();
                if class == 1 {
                    word_pos.insert(w.clone(), words.len());
                    words.push(w);
                }
            }
            let mut cols = Vec::with_capacity(pairs.len());
            for (u, fg_idx) in &pairs {
                let elt = model.j_elt(u, &fiber[*fg_idx].name)?;
                let mut col = SparseVec::new();
                for (word, c) in elt.terms() {
                    col.insert(word_pos[word], c.clone());
                }
                cols.push(col);
            }
            let solver = ColumnSolver::new(&SparseMatrix::from_columns(words.len(), &cols));
            strata.insert((degree, weight), (pairs, solver, words));
        }
        Ok(TSolver { strata })
    }

    /// Decomposes a weight-one fiber element into `j(u ⊗ w)` coordinates.
    pub fn t_coords(
        &self,
        model: &RetractiveModel,
        t: &TensorElt,
    ) -> Result<Vec<((Word, usize), Rational)>> {
        let mut out = Vec::new();
        if t.is_zero() {
            return Ok(out);
        }
        let degree = t.homogeneous_degree().ok_or_else(|| {
            Error::DegreeError("splitting coordinates need a homogeneous element".into())
        })?;
        // group terms by weight
        let mut by_weight: BTreeMap<usize, TensorElt> = BTreeMap::new();
        for (word, c) in t.terms() {
            let w = t.alphabet().word_weight(word);
            by_weight
                .entry(w)
                .or_insert_with(|| TensorElt::zero(t.alphabet().clone(), t.cap()))
                .add_term(word, c);
        }
        let _ = model;
        for (weight, piece) in by_weight {
            let (pairs, solver, words) =
                self.strata.get(&(degree, weight)).ok_or_else(|| {
                    Error::PresentationError(format!(
                        "no splitting stratum at degree {degree}, weight {weight}"
                    ))
                })?;
            let mut coords = SparseVec::new();
            let word_pos: BTreeMap<&Word, usize> =
                words.iter().enumerate().map(|(i, w)| (w, i)).collect();
            for (word, c) in piece.terms() {
                let &pos = word_pos.get(word).ok_or_else(|| {
                    Error::PresentationError(
                        "element has terms outside the one-fiber-letter stratum".into(),
                    )
                })?;
                coords.insert(pos, c.clone());
            }
            let sol = solver.solve(&coords).ok_or_else(|| {
                Error::CertificateFailure(
                    "weight-one fiber element is not in the splitting span".into(),
                )
            })?;
            for (i, c) in sol {
                out.push((pairs[i].clone(), c));
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub struct SplitReport {
    /// `|T ∩ (degree, weight)|` over the window.
    pub t_counts: BTreeMap<(i32, usize), usize>,
    pub t_labels: BTreeMap<(i32, usize), Vec<String>>,
    /// Fiber dimensions `dim K_degree` at the cap.
    pub k_dims: BTreeMap<i32, usize>,
}

/// The left adjoint of the fiber functor: semifree modules give free
/// retractive models `(L ⊔ 𝕃̂(W), d)`; quotient presentations give
/// module-generated models `L ⊕ 𝕃̂(ℛ)` with the action bracket.
pub fn lib_l(base: &Arc<CdglPresentation>, r: &ULModule) -> Result<RetractiveModel> {
    match r {
        ULModule::Semifree(m) => {
            if m.base().as_ref() != base.as_ref() {
                return Err(Error::BaseMismatch("module lives over a different base".into()));
            }
            let fiber_gens: Vec<Generator> = m
                .gens()
                .iter()
                .map(|g| Generator::new(g.name.clone(), g.degree))
                .collect();
            let mut diff = BTreeMap::new();
            for (i, g) in m.gens().iter().enumerate() {
                let d = m.diff_of(i);
                if d.is_zero() {
                    continue;
                }
                let mut parts = Vec::new();
                for ((u, gi), c) in d.terms() {
                    let mut e = LieExpr::Gen(m.gens()[*gi].name.clone());
                    for &letter in u.iter().rev() {
                        let name = base.alphabet().generator(letter).name.clone();
                        e = LieExpr::Br(Box::new(LieExpr::Gen(name)), Box::new(e));
                    }
                    parts.push(if c.is_one() {
                        e
                    } else {
                        LieExpr::Scal(c.clone(), Box::new(e))
                    });
                }
                let expr = match parts.len() {
                    1 => parts.pop().unwrap(),
                    _ => LieExpr::Sum(parts),
                };
                diff.insert(g.name.clone(), expr);
            }
            RetractiveModel::free(base.clone(), fiber_gens, diff)
        }
        ULModule::Quotient(..) => {
            let window = base.window();
            let concrete = r.to_concrete(window)?;
            Ok(RetractiveModel::module_generated(base.clone(), concrete, false))
        }
        ULModule::Concrete(_) => Err(Error::PresentationError(
            "the left adjoint needs a semifree or semifree-with-relations presentation".into(),
        )),
    }
}

/// Diagnostic for the loop model: materializes the full path-object carrier
/// `K ⊗̂ (U ⊕ dU ⊕ ℚdt)` with `U = (t²−t)ℚ[t]` up to the polynomial cap and
/// certifies that the projection onto `s^{−1}K` is a quasi-isomorphism on
/// the window interior.
pub fn loop_model_diagnostic(
    model: &RetractiveModel,
    window: (i32, i32),
    t_cap: usize,
) -> Result<bool> {
    let fiber = model.fiber_module((window.0, window.1 + 2), None)?;
    let loop_fiber = fiber.suspend(-1);
    // carrier basis: k ⊗ e with e in {u_j (deg 0), du_j (deg -1), dt (deg -1)}
    // for j = 0..t_cap-2
    #[derive(Clone, Copy, PartialEq)]
    enum E {
        U(usize),
        Du(usize),
        Dt,
    }
    let polys = t_cap.saturating_sub(1);
    let mut es = Vec::new();
    for j in 0..polys {
        es.push(E::U(j));
    }
    for j in 0..polys {
        es.push(E::Du(j));
    }
    es.push(E::Dt);
    let edeg = |e: &E| match e {
        E::U(_) => 0,
        E::Du(_) | E::Dt => -1,
    };
    let (lo, hi) = (window.0 - 1, window.1 + 1);
    let mut labels: BTreeMap<i32, Vec<String>> = BTreeMap::new();
    let mut index: BTreeMap<(i32, usize, usize), usize> = BTreeMap::new();
    for degree in lo..=hi {
        let mut list = Vec::new();
        for (ei, e) in es.iter().enumerate() {
            let kd = degree - edeg(e);
            if kd < fiber.window().0 || kd > fiber.window().1 {
                continue;
            }
            for ki in 0..fiber.dim(kd) {
                index.insert((degree, ei, ki), list.len());
                list.push(format!("k{kd}_{ki}·e{ei}"));
            }
        }
        labels.insert(degree, list);
    }
    let mut boundary: BTreeMap<i32, SparseMatrix> = BTreeMap::new();
    for degree in (lo + 1)..=hi {
        let rows = labels[&(degree - 1)].len();
        let cols_n = labels[&degree].len();
        let mut cols = vec![SparseVec::new(); cols_n];
        for (ei, e) in es.iter().enumerate() {
            let kd = degree - edeg(e);
            if kd < fiber.window().0 || kd > fiber.window().1 {
                continue;
            }
            for ki in 0..fiber.dim(kd) {
                let src = index[&(degree, ei, ki)];
                // dk ⊗ e
                if let Some(dm) = fiber.diff_matrix(kd) {
                    let mut v = SparseVec::new();
                    v.insert(ki, Rational::one());
                    for (&ti, c) in &dm.apply(&v) {
                        if let Some(&row) = index.get(&(degree - 1, ei, ti)) {
                            let entry = cols[src].entry(row).or_insert_with(Rational::zero);
                            *entry += c;
                            if entry.is_zero() {
                                cols[src].remove(&row);
                            }
                        }
                    }
                }
                // (−1)^{|k|} k ⊗ de, with d(u_j) = du_j
                if let E::U(j) = e {
                    let sign = sign_of_degree(kd);
                    let ei_du = polys + j;
                    if let Some(&row) = index.get(&(degree - 1, ei_du, ki)) {
                        let entry = cols[src].entry(row).or_insert_with(Rational::zero);
                        *entry += &sign;
                        if entry.is_zero() {
                            cols[src].remove(&row);
                        }
                    }
                }
            }
        }
        boundary.insert(degree, SparseMatrix::from_columns(rows, &cols));
    }
    let carrier = ComplexSlice::new(lo, hi, labels, boundary)?;
    let target = loop_fiber.complex_slice()?;
    // projection: k⊗dt ↦ (−1)^{|k|} s^{−1}k, zero elsewhere
    let dt_ei = es.len() - 1;
    let mut map = ChainMap::default();
    for degree in lo..=hi {
        let rows = target.dim(degree);
        let cols_n = carrier.dim(degree);
        let mut cols = vec![SparseVec::new(); cols_n];
        let kd = degree + 1;
        if kd >= fiber.window().0 && kd <= fiber.window().1 {
            for ki in 0..fiber.dim(kd) {
                if let Some(&src) = index.get(&(degree, dt_ei, ki)) {
                    cols[src].insert(ki, sign_of_degree(kd));
                }
            }
        }
        map.components.insert(degree, SparseMatrix::from_columns(rows, &cols));
    }
    if !map.is_chain_map(&carrier, &target) {
        return Err(Error::CertificateFailure(
            "loop diagnostic projection is not a chain map".into(),
        ));
    }
    map.is_quasi_iso(&carrier, &target, window.0..=window.1)
}
