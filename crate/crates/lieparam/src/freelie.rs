//! Weight-truncated tensor algebra over a graded alphabet, free graded Lie
//! algebras as iterated graded commutators, BCH, exp and log.
//!
//! Completion is modeled by computing in the nilpotent quotient by words of
//! weight above the cap, so every series here is a finite sum and every
//! identity holds exactly modulo the cap. Lie elements live inside the
//! tensor algebra; Lie-ness is certified with the Dynkin projector (the
//! Specht-Wever criterion, valid in the graded case over the rationals).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde_json::Value;

use crate::exactla::{format_rational, parse_rational, Rational};
use crate::{Error, Result};

/// A named graded generator. `tags` carry optional bookkeeping (spectrum
/// level, origin of a synthesized generator) and do not affect arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub name: String,
    pub degree: i32,
    pub tags: Option<GeneratorTags>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorTags {
    pub level: Option<usize>,
    pub origin: Option<String>,
}

impl Generator {
    pub fn new(name: impl Into<String>, degree: i32) -> Generator {
        Generator { name: name.into(), degree, tags: None }
    }

    pub fn with_level(name: impl Into<String>, degree: i32, level: usize) -> Generator {
        Generator {
            name: name.into(),
            degree,
            tags: Some(GeneratorTags { level: Some(level), origin: None }),
        }
    }
}

/// A finite ordered alphabet of graded generators. Letters carry a
/// filtration weight, 1 for ordinary generators; module-generated fiber
/// letters may weigh more.
#[derive(Debug)]
pub struct Alphabet {
    gens: Vec<Generator>,
    weights: Vec<usize>,
    index: BTreeMap<String, u32>,
}

impl Alphabet {
    pub fn new(gens: Vec<Generator>) -> Result<Arc<Alphabet>> {
        let weights = vec![1; gens.len()];
        Alphabet::with_weights(gens, weights)
    }

    pub fn with_weights(gens: Vec<Generator>, weights: Vec<usize>) -> Result<Arc<Alphabet>> {
        assert_eq!(gens.len(), weights.len());
        let mut index = BTreeMap::new();
        for (i, g) in gens.iter().enumerate() {
            if index.insert(g.name.clone(), i as u32).is_some() {
                return Err(Error::AlphabetMismatch(format!(
                    "duplicate generator name `{}`",
                    g.name
                )));
            }
        }
        if weights.iter().any(|&w| w == 0) {
            return Err(Error::AlphabetMismatch("letter weight must be positive".into()));
        }
        Ok(Arc::new(Alphabet { gens, weights, index }))
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }

    pub fn generator(&self, i: u32) -> &Generator {
        &self.gens[i as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn degree(&self, i: u32) -> i32 {
        self.gens[i as usize].degree
    }

    pub fn weight(&self, i: u32) -> usize {
        self.weights[i as usize]
    }

    pub fn word_degree(&self, word: &[u32]) -> i32 {
        word.iter().map(|&i| self.degree(i)).sum()
    }

    pub fn word_weight(&self, word: &[u32]) -> usize {
        word.iter().map(|&i| self.weight(i)).sum()
    }

    /// All words of the given total weight, in lexicographic letter order.
    pub fn words_of_weight(&self, weight: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        self.words_rec(weight, &mut cur, &mut out);
        out
    }

    fn words_rec(&self, remaining: usize, cur: &mut Word, out: &mut Vec<Word>) {
        if remaining == 0 {
            out.push(cur.clone());
            return;
        }
        for i in 0..self.gens.len() as u32 {
            let w = self.weight(i);
            if w <= remaining {
                cur.push(i);
                self.words_rec(remaining - w, cur, out);
                cur.pop();
            }
        }
    }
}

fn same_alphabet(a: &Arc<Alphabet>, b: &Arc<Alphabet>) -> bool {
    Arc::ptr_eq(a, b) || (a.gens == b.gens && a.weights == b.weights)
}

pub type Word = Vec<u32>;

/// Exact linear combination of generator words, truncated at the weight cap.
#[derive(Clone)]
pub struct TensorElt {
    alphabet: Arc<Alphabet>,
    cap: usize,
    terms: BTreeMap<Word, Rational>,
}

impl PartialEq for TensorElt {
    fn eq(&self, other: &Self) -> bool {
        same_alphabet(&self.alphabet, &other.alphabet)
            && self.cap == other.cap
            && self.terms == other.terms
    }
}
impl Eq for TensorElt {}

impl fmt::Display for TensorElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (word, coeff) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}·", format_rational(coeff))?;
            if word.is_empty() {
                write!(f, "1")?;
            } else {
                let names: Vec<&str> = word
                    .iter()
                    .map(|&i| self.alphabet.generator(i).name.as_str())
                    .collect();
                write!(f, "{}", names.join("⊗"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for TensorElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl TensorElt {
    pub fn zero(alphabet: Arc<Alphabet>, cap: usize) -> TensorElt {
        TensorElt { alphabet, cap, terms: BTreeMap::new() }
    }

    pub fn one(alphabet: Arc<Alphabet>, cap: usize) -> TensorElt {
        let mut t = TensorElt::zero(alphabet, cap);
        t.terms.insert(Vec::new(), Rational::one());
        t
    }

    pub fn generator(alphabet: Arc<Alphabet>, name: &str, cap: usize) -> Result<TensorElt> {
        let i = alphabet
            .lookup(name)
            .ok_or_else(|| Error::AlphabetMismatch(format!("unknown generator `{name}`")))?;
        let mut t = TensorElt::zero(alphabet, cap);
        t.terms.insert(vec![i], Rational::one());
        Ok(t)
    }

    pub fn from_terms(
        alphabet: Arc<Alphabet>,
        cap: usize,
        terms: impl IntoIterator<Item = (Word, Rational)>,
    ) -> TensorElt {
        let mut t = TensorElt::zero(alphabet, cap);
        for (w, c) in terms {
            t.add_term(&w, &c);
        }
        t
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Rational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, word: &[u32]) -> Rational {
        self.terms.get(word).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, word: &[u32], coeff: &Rational) {
        if coeff.is_zero() || self.alphabet.word_weight(word) > self.cap {
            return;
        }
        let entry = self.terms.entry(word.to_vec()).or_insert_with(Rational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(word);
        }
    }

    fn check_same(&self, other: &TensorElt) -> Result<()> {
        if !same_alphabet(&self.alphabet, &other.alphabet) || self.cap != other.cap {
            return Err(Error::AlphabetMismatch(
                "operands live in different truncated algebras".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &TensorElt) -> Result<TensorElt> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &TensorElt) -> Result<TensorElt> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TensorElt {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, c: &Rational) -> TensorElt {
        if c.is_zero() {
            return TensorElt::zero(self.alphabet.clone(), self.cap);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    /// Concatenation product, truncated at the cap.
    pub fn product(&self, other: &TensorElt) -> Result<TensorElt> {
        self.check_same(other)?;
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        for (u, cu) in &self.terms {
            let wu = self.alphabet.word_weight(u);
            for (v, cv) in &other.terms {
                if wu + self.alphabet.word_weight(v) > self.cap {
                    continue;
                }
                let mut w = u.clone();
                w.extend_from_slice(v);
                out.add_term(&w, &(cu * cv));
            }
        }
        Ok(out)
    }

    /// Graded commutator `xy − (−1)^{|x||y|} yx`, extended bilinearly over
    /// the degree-homogeneous words.
    pub fn bracket(&self, other: &TensorElt) -> Result<TensorElt> {
        self.check_same(other)?;
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        for (u, cu) in &self.terms {
            let wu = self.alphabet.word_weight(u);
            let du = self.alphabet.word_degree(u);
            for (v, cv) in &other.terms {
                if wu + self.alphabet.word_weight(v) > self.cap {
                    continue;
                }
                let dv = self.alphabet.word_degree(v);
                let c = cu * cv;
                let mut uv = u.clone();
                uv.extend_from_slice(v);
                out.add_term(&uv, &c);
                let mut vu = v.clone();
                vu.extend_from_slice(u);
                out.add_term(&vu, &(-koszul_sign(du, dv) * c));
            }
        }
        Ok(out)
    }

    /// The weight-`w` homogeneous part.
    pub fn weight_component(&self, w: usize) -> TensorElt {
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        for (word, c) in &self.terms {
            if self.alphabet.word_weight(word) == w {
                out.terms.insert(word.clone(), c.clone());
            }
        }
        out
    }

    /// The part of the given homological degree.
    pub fn degree_component(&self, d: i32) -> TensorElt {
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        for (word, c) in &self.terms {
            if self.alphabet.word_degree(word) == d {
                out.terms.insert(word.clone(), c.clone());
            }
        }
        out
    }

    pub fn min_weight(&self) -> Option<usize> {
        self.terms.keys().map(|w| self.alphabet.word_weight(w)).min()
    }

    /// Homogeneous degree of a nonzero element, `None` when zero or mixed.
    pub fn homogeneous_degree(&self) -> Option<i32> {
        let mut deg = None;
        for w in self.terms.keys() {
            let d = self.alphabet.word_degree(w);
            match deg {
                None => deg = Some(d),
                Some(e) if e != d => return None,
                _ => {}
            }
        }
        deg
    }

    /// Re-truncates to a smaller cap or embeds into a larger one.
    pub fn with_cap(&self, cap: usize) -> TensorElt {
        let mut out = TensorElt::zero(self.alphabet.clone(), cap);
        for (w, c) in &self.terms {
            out.add_term(w, c);
        }
        out
    }

    /// Transports along an alphabet map that sends each letter to an element
    /// of the target algebra (`None` meaning zero). The image of a word is
    /// the ordered product.
    pub fn substitute<'a>(
        &self,
        target: &Arc<Alphabet>,
        cap: usize,
        image: impl Fn(u32) -> Option<&'a TensorElt>,
    ) -> Result<TensorElt> {
        let mut out = TensorElt::zero(target.clone(), cap);
        'words: for (word, c) in &self.terms {
            let mut acc = TensorElt::one(target.clone(), cap);
            for &letter in word {
                match image(letter) {
                    Some(img) => acc = acc.product(img)?,
                    None => continue 'words,
                }
                if acc.is_zero() {
                    continue 'words;
                }
            }
            let acc = acc.scale(c);
            out = out.add(&acc)?;
        }
        Ok(out)
    }

    /// Applies the degree −1 derivation determined by `d` on letters
    /// (`None` meaning zero):
    /// `d(v₁⋯v_k) = Σ (−1)^{|v₁|+⋯+|v_{i−1}|} v₁⋯ d(vᵢ) ⋯v_k`.
    pub fn apply_derivation<'a>(
        &self,
        d: impl Fn(u32) -> Option<&'a TensorElt>,
    ) -> Result<TensorElt> {
        self.apply_graded_derivation(1, d)
    }

    /// Derivation extension of an operator of the given degree, with the
    /// Koszul sign `(−1)^{|op|·(|v₁|+⋯+|v_{i−1}|)}` on each term.
    pub fn apply_graded_derivation<'a>(
        &self,
        op_degree: i32,
        d: impl Fn(u32) -> Option<&'a TensorElt>,
    ) -> Result<TensorElt> {
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        for (word, c) in &self.terms {
            let mut sign_deg = 0i32;
            for (i, &letter) in word.iter().enumerate() {
                if let Some(dl) = d(letter) {
                    if !dl.is_zero() {
                        let sign = if (op_degree * sign_deg).rem_euclid(2) == 1 {
                            -Rational::one()
                        } else {
                            Rational::one()
                        };
                        let head_weight: usize =
                            word[..i].iter().map(|&j| self.alphabet.weight(j)).sum();
                        let tail_weight: usize =
                            word[i + 1..].iter().map(|&j| self.alphabet.weight(j)).sum();
                        for (mid, mc) in &dl.terms {
                            let total = head_weight + dl.alphabet.word_weight(mid) + tail_weight;
                            if total > self.cap {
                                continue;
                            }
                            let mut w = word[..i].to_vec();
                            w.extend_from_slice(mid);
                            w.extend_from_slice(&word[i + 1..]);
                            out.add_term(&w, &(&sign * c * mc));
                        }
                    }
                }
                sign_deg += self.alphabet.degree(letter);
            }
        }
        Ok(out)
    }

    /// `exp(x) = Σ xᵏ/k!` for `x` with no weight-0 part.
    pub fn exp(&self) -> Result<TensorElt> {
        if !self.coefficient(&[]).is_zero() {
            return Err(Error::ConstantTermError(
                "exp requires vanishing weight-0 part".into(),
            ));
        }
        let mut out = TensorElt::one(self.alphabet.clone(), self.cap);
        let mut power = TensorElt::one(self.alphabet.clone(), self.cap);
        let mut factorial = Rational::one();
        for k in 1..=self.cap {
            power = power.product(self)?;
            if power.is_zero() {
                break;
            }
            factorial *= Rational::from_integer(k.into());
            out = out.add(&power.scale(&(Rational::one() / &factorial)))?;
        }
        Ok(out)
    }

    /// `log(u) = Σ (−1)^{k+1} (u−1)ᵏ/k` for `u` with weight-0 part 1.
    pub fn log(&self) -> Result<TensorElt> {
        if !self.coefficient(&[]).is_one() {
            return Err(Error::ConstantTermError(
                "log requires weight-0 part equal to 1".into(),
            ));
        }
        let one = TensorElt::one(self.alphabet.clone(), self.cap);
        let y = self.sub(&one)?;
        let mut out = TensorElt::zero(self.alphabet.clone(), self.cap);
        let mut power = TensorElt::one(self.alphabet.clone(), self.cap);
        for k in 1..=self.cap {
            power = power.product(&y)?;
            if power.is_zero() {
                break;
            }
            let sign = if k % 2 == 1 { Rational::one() } else { -Rational::one() };
            out = out.add(&power.scale(&(sign / Rational::from_integer(k.into()))))?;
        }
        Ok(out)
    }
}

/// The Koszul sign `(−1)^{|a||b|}` as a rational.
pub fn koszul_sign(deg_a: i32, deg_b: i32) -> Rational {
    if (deg_a * deg_b).rem_euclid(2) == 1 {
        -Rational::one()
    } else {
        Rational::one()
    }
}

/// `(−1)^d` as a rational.
pub fn sign_of_degree(d: i32) -> Rational {
    if d.rem_euclid(2) == 1 {
        -Rational::one()
    } else {
        Rational::one()
    }
}

/// The Dynkin map on words: `v₁⋯v_n ↦ [v₁,[v₂,…[v_{n−1},v_n]…]]`, letters
/// fixed. On a Lie element whose words have `n` letters it multiplies by
/// `n` (Specht-Wever).
pub fn dynkin(t: &TensorElt) -> Result<TensorElt> {
    let mut out = TensorElt::zero(t.alphabet().clone(), t.cap());
    for (word, c) in t.terms() {
        let d = dynkin_word(t.alphabet(), t.cap(), word)?;
        out = out.add(&d.scale(c))?;
    }
    Ok(out)
}

fn dynkin_word(alphabet: &Arc<Alphabet>, cap: usize, word: &[u32]) -> Result<TensorElt> {
    match word.len() {
        0 => Ok(TensorElt::zero(alphabet.clone(), cap)),
        _ => {
            let mut acc = {
                let mut t = TensorElt::zero(alphabet.clone(), cap);
                t.add_term(&[word[word.len() - 1]], &Rational::one());
                t
            };
            for &letter in word[..word.len() - 1].iter().rev() {
                let mut l = TensorElt::zero(alphabet.clone(), cap);
                l.add_term(&[letter], &Rational::one());
                acc = l.bracket(&acc)?;
            }
            Ok(acc)
        }
    }
}

/// Specht-Wever test: every length-n component satisfies `D(x) = n·x` and
/// the weight-0 part vanishes.
pub fn is_lie_element(t: &TensorElt) -> Result<bool> {
    if !t.coefficient(&[]).is_zero() {
        return Ok(false);
    }
    let max_len = t.terms().map(|(w, _)| w.len()).max().unwrap_or(0);
    for n in 1..=max_len {
        let mut comp = TensorElt::zero(t.alphabet().clone(), t.cap());
        for (w, c) in t.terms() {
            if w.len() == n {
                comp.add_term(w, c);
            }
        }
        if comp.is_zero() {
            continue;
        }
        let d = dynkin(&comp)?;
        if d != comp.scale(&Rational::from_integer(n.into())) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// An element of the free complete Lie algebra, carried by its tensor
/// expansion. Construction goes through [`LieElt::from_tensor`] or the
/// bracket/linear operations, all of which preserve Lie-ness.
#[derive(Clone, PartialEq, Eq)]
pub struct LieElt(TensorElt);

impl fmt::Debug for LieElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lie({:?})", self.0)
    }
}

impl fmt::Display for LieElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl LieElt {
    pub fn zero(alphabet: Arc<Alphabet>, cap: usize) -> LieElt {
        LieElt(TensorElt::zero(alphabet, cap))
    }

    pub fn generator(alphabet: Arc<Alphabet>, name: &str, cap: usize) -> Result<LieElt> {
        Ok(LieElt(TensorElt::generator(alphabet, name, cap)?))
    }

    /// Certifies Lie-ness with the Specht-Wever criterion.
    pub fn from_tensor(t: TensorElt) -> Result<LieElt> {
        if !is_lie_element(&t)? {
            return Err(Error::PresentationError(
                "tensor element is not primitive (fails Specht-Wever)".into(),
            ));
        }
        Ok(LieElt(t))
    }

    /// Wraps an element already known to lie in the free Lie algebra.
    pub(crate) fn from_tensor_unchecked(t: TensorElt) -> LieElt {
        LieElt(t)
    }

    pub fn tensor(&self) -> &TensorElt {
        &self.0
    }

    pub fn into_tensor(self) -> TensorElt {
        self.0
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        self.0.alphabet()
    }

    pub fn cap(&self) -> usize {
        self.0.cap()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn homogeneous_degree(&self) -> Option<i32> {
        self.0.homogeneous_degree()
    }

    pub fn add(&self, other: &LieElt) -> Result<LieElt> {
        Ok(LieElt(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &LieElt) -> Result<LieElt> {
        Ok(LieElt(self.0.sub(&other.0)?))
    }

    pub fn neg(&self) -> LieElt {
        LieElt(self.0.neg())
    }

    pub fn scale(&self, c: &Rational) -> LieElt {
        LieElt(self.0.scale(c))
    }

    pub fn weight_component(&self, w: usize) -> LieElt {
        LieElt(self.0.weight_component(w))
    }

    pub fn with_cap(&self, cap: usize) -> LieElt {
        LieElt(self.0.with_cap(cap))
    }

    /// Graded commutator. Antisymmetry and Jacobi hold by construction of
    /// the tensor expansion.
    pub fn bracket(&self, other: &LieElt) -> Result<LieElt> {
        Ok(LieElt(self.0.bracket(&other.0)?))
    }

    /// Canonical bracket expression tree whose expansion equals this
    /// element: the Dynkin rebracketing `(1/n) Σ c_w [w₁,[w₂,…]]` per word
    /// length n.
    pub fn expr(&self) -> LieExpr {
        let mut parts = Vec::new();
        for (word, c) in self.0.terms() {
            let n = word.len();
            let coeff = c / Rational::from_integer(n.into());
            let mut e = LieExpr::Gen(self.0.alphabet().generator(word[n - 1]).name.clone());
            for &letter in word[..n - 1].iter().rev() {
                e = LieExpr::Br(
                    Box::new(LieExpr::Gen(self.0.alphabet().generator(letter).name.clone())),
                    Box::new(e),
                );
            }
            parts.push(if coeff.is_one() { e } else { LieExpr::Scal(coeff, Box::new(e)) });
        }
        match parts.len() {
            0 => LieExpr::Zero,
            1 => parts.pop().unwrap(),
            _ => LieExpr::Sum(parts),
        }
    }
}

/// Baker-Campbell-Hausdorff product `log(exp x · exp y)` of two degree-0
/// elements, truncated at the cap. The result is certified primitive.
pub fn bch(x: &LieElt, y: &LieElt) -> Result<LieElt> {
    for (name, e) in [("left", x), ("right", y)] {
        if !e.is_zero() && e.homogeneous_degree() != Some(0) {
            return Err(Error::DegreeError(format!(
                "bch {name} operand must be homogeneous of degree 0"
            )));
        }
    }
    let u = x.tensor().exp()?.product(&y.tensor().exp()?)?;
    LieElt::from_tensor(u.log()?)
}

/// Exact Bernoulli numbers `B₀..B_n` with `B₁ = −1/2`; the sign convention
/// of the Lawrence-Sullivan differential.
pub fn bernoulli_numbers(n: usize) -> Vec<Rational> {
    let mut b: Vec<Rational> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m == 0 {
            b.push(Rational::one());
            continue;
        }
        // B_m = -1/(m+1) * Σ_{j<m} C(m+1, j) B_j
        let mut acc = Rational::zero();
        let mut binom = Rational::one(); // C(m+1, 0)
        for (j, bj) in b.iter().enumerate() {
            acc += &binom * bj;
            // C(m+1, j+1) = C(m+1, j) * (m+1-j)/(j+1)
            binom *= Rational::new((m as i64 + 1 - j as i64).into(), (j as i64 + 1).into());
        }
        b.push(-acc / Rational::from_integer((m as i64 + 1).into()));
    }
    b
}

/// Bracket expression trees. Serialized form, bit-exact under round-trips:
/// `["gen","x"]`, `["br",e1,e2]`, `["scal","3/2",e]`, `["sum",e1,…]`,
/// `["zero"]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LieExpr {
    Zero,
    Gen(String),
    Br(Box<LieExpr>, Box<LieExpr>),
    Scal(Rational, Box<LieExpr>),
    Sum(Vec<LieExpr>),
}

impl LieExpr {
    pub fn to_json(&self) -> Value {
        match self {
            LieExpr::Zero => Value::Array(vec!["zero".into()]),
            LieExpr::Gen(name) => Value::Array(vec!["gen".into(), name.as_str().into()]),
            LieExpr::Br(a, b) => Value::Array(vec!["br".into(), a.to_json(), b.to_json()]),
            LieExpr::Scal(c, e) => {
                Value::Array(vec!["scal".into(), format_rational(c).into(), e.to_json()])
            }
            LieExpr::Sum(parts) => {
                let mut arr: Vec<Value> = vec!["sum".into()];
                arr.extend(parts.iter().map(|p| p.to_json()));
                Value::Array(arr)
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<LieExpr> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::ParseError(format!("expected array expression, got {v}")))?;
        let head = arr
            .first()
            .and_then(|h| h.as_str())
            .ok_or_else(|| Error::ParseError("expression head must be a string".into()))?;
        match (head, arr.len()) {
            ("zero", 1) => Ok(LieExpr::Zero),
            ("gen", 2) => {
                let name = arr[1]
                    .as_str()
                    .ok_or_else(|| Error::ParseError("gen expects a name".into()))?;
                Ok(LieExpr::Gen(name.to_string()))
            }
            ("br", 3) => Ok(LieExpr::Br(
                Box::new(LieExpr::from_json(&arr[1])?),
                Box::new(LieExpr::from_json(&arr[2])?),
            )),
            ("scal", 3) => {
                let c = arr[1]
                    .as_str()
                    .ok_or_else(|| Error::ParseError("scal expects a rational string".into()))?;
                Ok(LieExpr::Scal(parse_rational(c)?, Box::new(LieExpr::from_json(&arr[2])?)))
            }
            ("sum", _) if arr.len() >= 2 => {
                let parts = arr[1..]
                    .iter()
                    .map(LieExpr::from_json)
                    .collect::<Result<Vec<_>>>()?;
                Ok(LieExpr::Sum(parts))
            }
            _ => Err(Error::ParseError(format!("malformed expression {v}"))),
        }
    }

    pub fn eval(&self, alphabet: &Arc<Alphabet>, cap: usize) -> Result<LieElt> {
        match self {
            LieExpr::Zero => Ok(LieElt::zero(alphabet.clone(), cap)),
            LieExpr::Gen(name) => LieElt::generator(alphabet.clone(), name, cap),
            LieExpr::Br(a, b) => a.eval(alphabet, cap)?.bracket(&b.eval(alphabet, cap)?),
            LieExpr::Scal(c, e) => Ok(e.eval(alphabet, cap)?.scale(c)),
            LieExpr::Sum(parts) => {
                let mut acc = LieElt::zero(alphabet.clone(), cap);
                for p in parts {
                    acc = acc.add(&p.eval(alphabet, cap)?)?;
                }
                Ok(acc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactla::{rat, rat_int};

    fn alphabet(gens: &[(&str, i32)]) -> Arc<Alphabet> {
        Alphabet::new(gens.iter().map(|&(n, d)| Generator::new(n, d)).collect()).unwrap()
    }

    fn gen(a: &Arc<Alphabet>, name: &str, cap: usize) -> LieElt {
        LieElt::generator(a.clone(), name, cap).unwrap()
    }

    #[test]
    fn bracket_even_square_vanishes() {
        let a = alphabet(&[("x", 2)]);
        let x = gen(&a, "x", 4);
        assert!(x.bracket(&x).unwrap().is_zero());
    }

    #[test]
    fn bracket_degree_zero_is_commutator() {
        let a = alphabet(&[("x", 0), ("y", 0)]);
        let x = gen(&a, "x", 3);
        let y = gen(&a, "y", 3);
        let b = x.bracket(&y).unwrap();
        let xi = a.lookup("x").unwrap();
        let yi = a.lookup("y").unwrap();
        assert_eq!(b.tensor().coefficient(&[xi, yi]), rat_int(1));
        assert_eq!(b.tensor().coefficient(&[yi, xi]), rat_int(-1));
    }

    #[test]
    fn odd_generator_triple_bracket_vanishes() {
        // [x,[x,x]] = 0 for |x| odd: graded Jacobi forces it, and the
        // tensor-word expansion must agree
        let a = alphabet(&[("x", 1)]);
        let x = gen(&a, "x", 4);
        let xx = x.bracket(&x).unwrap();
        assert!(!xx.is_zero());
        assert!(x.bracket(&xx).unwrap().is_zero());
    }

    #[test]
    fn graded_antisymmetry() {
        let a = alphabet(&[("x", 1), ("y", 2), ("z", 0)]);
        for (n, m) in [("x", "y"), ("x", "z"), ("y", "z"), ("x", "x")] {
            let u = gen(&a, n, 4);
            let v = gen(&a, m, 4);
            let lhs = u.bracket(&v).unwrap();
            let du = u.homogeneous_degree().unwrap();
            let dv = v.homogeneous_degree().unwrap();
            let rhs = v.bracket(&u).unwrap().scale(&-koszul_sign(du, dv));
            assert_eq!(lhs, rhs, "[{n},{m}]");
        }
    }

    #[test]
    fn graded_jacobi() {
        // [x,[y,z]] = [[x,y],z] + (−1)^{|x||y|} [y,[x,z]]
        let a = alphabet(&[("x", 1), ("y", 3), ("z", 2)]);
        let x = gen(&a, "x", 3);
        let y = gen(&a, "y", 3);
        let z = gen(&a, "z", 3);
        let lhs = x.bracket(&y.bracket(&z).unwrap()).unwrap();
        let t1 = x.bracket(&y).unwrap().bracket(&z).unwrap();
        let t2 = y
            .bracket(&x.bracket(&z).unwrap())
            .unwrap()
            .scale(&koszul_sign(1, 3));
        let rhs = t1.add(&t2).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn exp_log_inverse_pair() {
        let a = alphabet(&[("x", 0), ("y", 0)]);
        for cap in 1..=5 {
            let x = gen(&a, "x", cap);
            let y = gen(&a, "y", cap);
            let mix = x.tensor().add(&y.tensor().scale(&rat(2, 3))).unwrap();
            assert_eq!(mix.exp().unwrap().log().unwrap(), mix);
        }
        let one = TensorElt::one(a.clone(), 4);
        assert!(one.log().unwrap().is_zero());
        let zero = TensorElt::zero(a, 4);
        assert_eq!(zero.exp().unwrap().coefficient(&[]), rat_int(1));
    }

    #[test]
    fn exp_log_constant_term_errors() {
        let a = alphabet(&[("x", 0)]);
        let one = TensorElt::one(a.clone(), 3);
        assert!(matches!(one.exp(), Err(Error::ConstantTermError(_))));
        let x = TensorElt::generator(a, "x", 3).unwrap();
        assert!(matches!(x.log(), Err(Error::ConstantTermError(_))));
    }

    #[test]
    fn bch_unit_and_inverse() {
        let a = alphabet(&[("x", 0), ("y", 0)]);
        let x = gen(&a, "x", 5);
        let zero = LieElt::zero(a.clone(), 5);
        assert_eq!(bch(&x, &zero).unwrap(), x);
        assert_eq!(bch(&zero, &x).unwrap(), x);
        assert!(bch(&x, &x.neg()).unwrap().is_zero());
    }

    #[test]
    fn bch_weight_two_is_half_bracket() {
        let a = alphabet(&[("x", 0), ("y", 0)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let b = bch(&x, &y).unwrap();
        let expected = x.bracket(&y).unwrap().scale(&rat(1, 2));
        assert_eq!(b.weight_component(2), expected);
    }

    #[test]
    fn bch_weight_three_is_dynkin_terms() {
        // (1/12)([x,[x,y]] + [y,[y,x]]): alternate route through explicit
        // brackets, against the exp/log series
        let a = alphabet(&[("x", 0), ("y", 0)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let b = bch(&x, &y).unwrap();
        let t1 = x.bracket(&x.bracket(&y).unwrap()).unwrap();
        let t2 = y.bracket(&y.bracket(&x).unwrap()).unwrap();
        let expected = t1.add(&t2).unwrap().scale(&rat(1, 12));
        assert_eq!(b.weight_component(3), expected);
    }

    #[test]
    fn bch_rejects_nonzero_degrees() {
        let a = alphabet(&[("x", 1), ("y", 0)]);
        let x = gen(&a, "x", 3);
        let y = gen(&a, "y", 3);
        assert!(matches!(bch(&x, &y), Err(Error::DegreeError(_))));
    }

    #[test]
    fn bch_associativity_up_to_cap() {
        let a = alphabet(&[("x", 0), ("y", 0), ("z", 0)]);
        let cap = 4;
        let x = gen(&a, "x", cap);
        let y = gen(&a, "y", cap).scale(&rat(1, 2));
        let z = gen(&a, "z", cap).scale(&rat(-2, 3));
        let lhs = bch(&bch(&x, &y).unwrap(), &z).unwrap();
        let rhs = bch(&x, &bch(&y, &z).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn weight_components() {
        let a = alphabet(&[("x", 0), ("y", 0)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let e = x.add(&x.bracket(&y).unwrap()).unwrap();
        assert_eq!(e.weight_component(1), x);
        assert!(x.weight_component(2).is_zero());
        let b = bch(&x, &y).unwrap();
        let d3 = x
            .bracket(&x.bracket(&y).unwrap())
            .unwrap()
            .add(&y.bracket(&y.bracket(&x).unwrap()).unwrap())
            .unwrap()
            .scale(&rat(1, 12));
        assert_eq!(b.weight_component(3), d3);
    }

    #[test]
    fn specht_wever_accepts_brackets_rejects_products() {
        let a = alphabet(&[("x", 1), ("y", 2)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let lie = x.bracket(&y).unwrap().add(&x).unwrap();
        assert!(is_lie_element(lie.tensor()).unwrap());
        let xy = x.tensor().product(y.tensor()).unwrap();
        assert!(!is_lie_element(&xy).unwrap());
    }

    /// Shuffle-coproduct primitivity oracle, independent of Specht-Wever.
    fn is_primitive_by_shuffle(t: &TensorElt) -> bool {
        // Δ(w) = Σ_{S ⊆ positions} ±(w_S ⊗ w_{S^c}); primitive elements have
        // only the two trivial splits. We check all proper splits vanish.
        let alphabet = t.alphabet();
        let mut proper: BTreeMap<(Word, Word), Rational> = BTreeMap::new();
        for (word, c) in t.terms() {
            let n = word.len();
            for mask in 1..(1u32 << n) - 1 {
                let mut left = Vec::new();
                let mut right = Vec::new();
                // Koszul sign: each right-destined letter hops over the
                // later left-destined letters
                let mut sign = 0i32;
                for (i, &letter) in word.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        left.push(letter);
                    } else {
                        right.push(letter);
                        let hop: i32 = word[i + 1..]
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| mask & (1 << (i + 1 + j)) != 0)
                            .map(|(_, &l)| alphabet.degree(l))
                            .sum();
                        sign += alphabet.degree(letter) * hop;
                    }
                }
                let coeff = if sign.rem_euclid(2) == 1 { -c.clone() } else { c.clone() };
                let key = (left, right);
                let entry = proper.entry(key.clone()).or_insert_with(Rational::zero);
                *entry += coeff;
                if entry.is_zero() {
                    proper.remove(&key);
                }
            }
        }
        proper.is_empty()
    }

    #[test]
    fn primitivity_spot_check_up_to_weight_four() {
        let a = alphabet(&[("x", 1), ("y", 2), ("z", 0)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let z = gen(&a, "z", 4);
        let samples = vec![
            x.clone(),
            x.bracket(&y).unwrap(),
            x.bracket(&y.bracket(&z).unwrap()).unwrap(),
            x.bracket(&x.bracket(&x.bracket(&y).unwrap()).unwrap()).unwrap(),
            x.bracket(&y).unwrap().bracket(&z.bracket(&x).unwrap()).unwrap(),
        ];
        for s in samples {
            assert!(is_primitive_by_shuffle(s.tensor()), "shuffle: {s}");
            assert!(is_lie_element(s.tensor()).unwrap(), "specht-wever: {s}");
        }
        let xy = x.tensor().product(y.tensor()).unwrap();
        assert!(!is_primitive_by_shuffle(&xy));
    }

    #[test]
    fn dynkin_expr_round_trip() {
        let a = alphabet(&[("x", 1), ("y", 2)]);
        let x = gen(&a, "x", 4);
        let y = gen(&a, "y", 4);
        let e = x
            .bracket(&y)
            .unwrap()
            .scale(&rat(3, 2))
            .add(&x.bracket(&x.bracket(&y).unwrap()).unwrap())
            .unwrap();
        let expr = e.expr();
        let back = expr.eval(&a, 4).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn bernoulli_values() {
        let b = bernoulli_numbers(8);
        assert_eq!(b[0], rat_int(1));
        assert_eq!(b[1], rat(-1, 2));
        assert_eq!(b[2], rat(1, 6));
        assert_eq!(b[3], rat_int(0));
        assert_eq!(b[4], rat(-1, 30));
        assert_eq!(b[6], rat(1, 42));
        assert_eq!(b[8], rat(-1, 30));
    }

    #[test]
    fn expr_json_round_trip_is_bit_exact() {
        let e = LieExpr::Sum(vec![
            LieExpr::Scal(rat(3, 2), Box::new(LieExpr::Gen("x".into()))),
            LieExpr::Br(
                Box::new(LieExpr::Gen("x".into())),
                Box::new(LieExpr::Scal(rat_int(-2), Box::new(LieExpr::Gen("y".into())))),
            ),
            LieExpr::Zero,
        ]);
        let j = e.to_json();
        let back = LieExpr::from_json(&j).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_json(), j);
        let text = serde_json::to_string(&j).unwrap();
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&reparsed).unwrap(), text);
    }

    #[test]
    fn expr_json_rejects_malformed() {
        for bad in [
            serde_json::json!(["bracket", ["gen", "x"], ["gen", "y"]]),
            serde_json::json!(["gen"]),
            serde_json::json!(["scal", "1/0", ["gen", "x"]]),
            serde_json::json!({"gen": "x"}),
        ] {
            assert!(LieExpr::from_json(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn weighted_letters_respect_cap() {
        let gens = vec![Generator::new("r", 2), Generator::new("s", 3)];
        let a = Alphabet::with_weights(gens, vec![2, 3]).unwrap();
        let r = TensorElt::generator(a.clone(), "r", 4).unwrap();
        let s = TensorElt::generator(a.clone(), "s", 4).unwrap();
        // r⊗s has weight 5 > 4, so the truncated product vanishes
        assert!(r.product(&s).unwrap().is_zero());
        assert!(!r.product(&r).unwrap().is_zero());
        assert_eq!(a.words_of_weight(4), vec![vec![0, 0]]);
    }
}
