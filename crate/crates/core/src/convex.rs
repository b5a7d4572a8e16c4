//! Closed convex sets `K ⊂ ℝᵏ` and the convex analysis the maximum-principle
//! argument rests on: distance to `∂K`, supporting affine functionals
//! `ℓ(z) = ν·(z − v)`, inward vectors, and a deterministic nearest-point
//! selection with lexicographic tie-breaking.
//!
//! Three representations are supported, all exactly computable:
//!
//! * `HPolytope`: `{z : νᵢ·z ≥ bᵢ}` with unit inward normals `νᵢ`;
//! * `Ball`: closed Euclidean ball;
//! * `Intersection`: a finite intersection of the above.
//!
//! Redundant half-spaces are allowed. Any valid half-space containing `K`
//! gives a functional with `ℓ(z) ≥ d(z)`, so the minimum over facets is not
//! changed by extra entries.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve, Mat};
use crate::scalar::{dot, lex_cmp, norm, sub, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("point lies outside K: {constraint} evaluates to {value:e}")]
    Domain { constraint: String, value: f64 },
    #[error("point is not on the boundary of K (signed distance {signed_distance:e})")]
    NotOnBoundary { signed_distance: f64 },
    #[error("normal {index} has zero length")]
    ZeroNormal { index: usize },
    #[error("direction is not a unit vector (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("radius must be positive and finite, got {0}")]
    Radius(f64),
    #[error("K has empty interior (best margin {margin:e})")]
    EmptyInterior { margin: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Half-space `normal·z ≥ offset` with a unit inward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace<T> {
    pub normal: Vec<T>,
    pub offset: T,
}

impl<T: Real> Halfspace<T> {
    #[inline]
    pub fn value(&self, z: &[T]) -> T {
        dot(&self.normal, z) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope<T> {
    dim: usize,
    facets: Vec<Halfspace<T>>,
    witness: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody<T> {
    HPolytope(HPolytope<T>),
    Ball(Ball<T>),
    Intersection { members: Vec<ConvexBody<T>>, witness: Vec<T> },
}

/// `ℓ(z) = ν·(z − v)`: the distance to a supporting hyperplane through `v`
/// with inward unit normal `ν = ∇ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportingFunctional<T> {
    pub v: Vec<T>,
    pub nu: Vec<T>,
}

impl<T: Real> SupportingFunctional<T> {
    pub fn new(v: Vec<T>, nu: Vec<T>) -> Result<Self, ConvexError> {
        if v.len() != nu.len() {
            return Err(ConvexError::Dimension { expected: v.len(), got: nu.len() });
        }
        let n = norm(&nu);
        if (n - T::one()).abs() > T::lit(T::NORM_TOL) {
            return Err(ConvexError::NotUnit { norm: n.as_f64() });
        }
        Ok(Self { v, nu })
    }

    /// `ν·(z − v)`
    pub fn value(&self, z: &[T]) -> T {
        self.nu.iter().zip(z).zip(&self.v).map(|((&n, &zi), &vi)| n * (zi - vi)).sum()
    }
}

pub fn functional_value<T: Real>(ell: &SupportingFunctional<T>, z: &[T]) -> T {
    ell.value(z)
}

/// How many boundary points realise `d(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contact {
    Unique,
    Multiple(usize),
    /// Every point of a sphere (query at a ball centre).
    Continuum,
}

/// The `(v, ℓ)` half of a nice quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct NiceChoice<T> {
    pub v: Vec<T>,
    pub ell: SupportingFunctional<T>,
    /// `|z − v|` for points of `K`; the (negative) signed distance outside.
    pub dist: T,
    pub contact: Contact,
}

impl<T: Real> HPolytope<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Halfspace<T>] {
        &self.facets
    }

    pub fn witness(&self) -> &[T] {
        &self.witness
    }

    fn min_facet(&self, z: &[T]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for (i, f) in self.facets.iter().enumerate() {
            let s = f.value(z);
            if s < best.1 {
                best = (i, s);
            }
        }
        best
    }

    /// Vertices of the polytope clipped to the cube `|zⱼ| ≤ bound`, each with
    /// the indices of its active facets, plus a flag telling whether any vertex
    /// needed the clipping cube (i.e. the polytope is unbounded).
    fn clipped_vertices(&self, bound: T) -> (Vec<(Vec<T>, Vec<usize>)>, bool) {
        let k = self.dim;
        let m = self.facets.len();
        let mut rows: Vec<(Vec<T>, T)> =
            self.facets.iter().map(|f| (f.normal.clone(), f.offset)).collect();
        for j in 0..k {
            let mut e = vec![T::zero(); k];
            e[j] = T::one();
            rows.push((e.clone(), -bound));
            e[j] = -T::one();
            rows.push((e, -bound));
        }
        let tol = T::lit(T::BOUNDARY_TOL) * (T::one() + bound.abs());
        let mut out: Vec<(Vec<T>, Vec<usize>)> = Vec::new();
        let mut clipped = false;
        for_each_combination(rows.len(), k, |idx| {
            let a = Mat::from_rows(&idx.iter().map(|&i| rows[i].0.clone()).collect::<Vec<_>>());
            let b: Vec<T> = idx.iter().map(|&i| rows[i].1).collect();
            let Some(z) = solve(&a, &b, T::lit(1e-10)) else { return };
            if rows.iter().any(|(n, o)| dot(n, &z) - *o < -tol) {
                return;
            }
            let active: Vec<usize> = (0..m)
                .filter(|&i| self.facets[i].value(&z).abs() <= T::lit(T::BOUNDARY_TOL))
                .collect();
            if out.iter().any(|(w, _)| lex_cmp(w, &z, T::lit(T::BOUNDARY_TOL)) == Ordering::Equal) {
                return;
            }
            if idx.iter().any(|&i| i >= m) {
                clipped = true;
            }
            out.push((z, active));
        });
        (out, clipped)
    }

    /// Vertices of a bounded polytope with their active facets; `None` when
    /// the polytope is unbounded.
    pub fn vertices(&self) -> Option<Vec<(Vec<T>, Vec<usize>)>> {
        let (v, clipped) = self.clipped_vertices(self.clip_bound());
        if clipped {
            None
        } else {
            Some(v.into_iter().filter(|(_, a)| !a.is_empty()).collect())
        }
    }

    fn clip_bound(&self) -> T {
        let big = self.facets.iter().fold(T::one(), |acc, f| acc.max(f.offset.abs()));
        T::lit(1e3) * big
    }

    /// Maximises the margin `min_i(νᵢ·z − bᵢ)` (capped at 1) by enumerating
    /// vertices of the lifted feasibility polyhedron in `(z, margin)`.
    fn margin_search(dim: usize, facets: &[Halfspace<T>]) -> (Vec<T>, T) {
        let big = facets.iter().fold(T::one(), |acc, f| acc.max(f.offset.abs()));
        let bound = T::lit(1e3) * big;
        let mut rows: Vec<(Vec<T>, T)> = facets
            .iter()
            .map(|f| {
                let mut r = f.normal.clone();
                r.push(-T::one());
                (r, f.offset)
            })
            .collect();
        let mut cap = vec![T::zero(); dim + 1];
        cap[dim] = -T::one();
        rows.push((cap, -T::one()));
        for j in 0..dim {
            let mut e = vec![T::zero(); dim + 1];
            e[j] = T::one();
            rows.push((e.clone(), -bound));
            e[j] = -T::one();
            rows.push((e, -bound));
        }
        let tol = T::lit(T::BOUNDARY_TOL) * (T::one() + bound);
        let mut best = (vec![T::zero(); dim], T::neg_infinity());
        for_each_combination(rows.len(), dim + 1, |idx| {
            let a = Mat::from_rows(&idx.iter().map(|&i| rows[i].0.clone()).collect::<Vec<_>>());
            let b: Vec<T> = idx.iter().map(|&i| rows[i].1).collect();
            let Some(y) = solve(&a, &b, T::lit(1e-10)) else { return };
            if y[dim] <= best.1 {
                return;
            }
            if rows.iter().any(|(r, o)| dot(r, &y) - *o < -tol) {
                return;
            }
            // re-evaluate the margin exactly at the candidate point
            let z = y[..dim].to_vec();
            let margin = facets.iter().map(|f| f.value(&z)).fold(T::infinity(), T::min).min(T::one());
            if margin > best.1 {
                best = (z, margin);
            }
        });
        best
    }
}

impl<T: Real> ConvexBody<T> {
    /// H-polytope from inward normals and offsets. Normals are rescaled to
    /// unit length (with their offsets), which leaves the set unchanged.
    pub fn hpolytope(normals: Vec<Vec<T>>, offsets: Vec<T>) -> Result<Self, ConvexError> {
        if normals.len() != offsets.len() {
            return Err(ConvexError::Dimension { expected: normals.len(), got: offsets.len() });
        }
        let dim = normals.first().map(Vec::len).ok_or_else(|| ConvexError::Invalid("no facets".into()))?;
        if dim == 0 {
            return Err(ConvexError::Invalid("zero-dimensional state space".into()));
        }
        let mut facets = Vec::with_capacity(normals.len());
        for (index, (n, b)) in normals.into_iter().zip(offsets).enumerate() {
            if n.len() != dim {
                return Err(ConvexError::Dimension { expected: dim, got: n.len() });
            }
            let len = norm(&n);
            if !(len > T::zero()) || !len.is_finite() || !b.is_finite() {
                return Err(ConvexError::ZeroNormal { index });
            }
            facets.push(Halfspace { normal: n.iter().map(|&x| x / len).collect(), offset: b / len });
        }
        let (witness, margin) = HPolytope::margin_search(dim, &facets);
        if !(margin > T::lit(T::BOUNDARY_TOL)) {
            return Err(ConvexError::EmptyInterior { margin: margin.as_f64() });
        }
        Ok(ConvexBody::HPolytope(HPolytope { dim, facets, witness }))
    }

    /// Axis-aligned box `[lo, hi]`; facets ordered axis by axis, lower first.
    pub fn boxed(lo: &[T], hi: &[T]) -> Result<Self, ConvexError> {
        if lo.len() != hi.len() {
            return Err(ConvexError::Dimension { expected: lo.len(), got: hi.len() });
        }
        let k = lo.len();
        let mut normals = Vec::with_capacity(2 * k);
        let mut offsets = Vec::with_capacity(2 * k);
        for j in 0..k {
            let mut e = vec![T::zero(); k];
            e[j] = T::one();
            normals.push(e.clone());
            offsets.push(lo[j]);
            e[j] = -T::one();
            normals.push(e);
            offsets.push(-hi[j]);
        }
        Self::hpolytope(normals, offsets)
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self, ConvexError> {
        if center.is_empty() {
            return Err(ConvexError::Invalid("zero-dimensional state space".into()));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(ConvexError::Radius(radius.as_f64()));
        }
        Ok(ConvexBody::Ball(Ball { center, radius }))
    }

    pub fn intersection(members: Vec<ConvexBody<T>>) -> Result<Self, ConvexError> {
        let dim = members.first().map(Self::dim).ok_or_else(|| ConvexError::Invalid("empty intersection".into()))?;
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(ConvexError::Dimension { expected: dim, got: m.dim() });
        }
        let (witness, margin) = intersection_margin_search(&members);
        if !(margin > T::lit(T::BOUNDARY_TOL)) {
            return Err(ConvexError::EmptyInterior { margin: margin.as_f64() });
        }
        Ok(ConvexBody::Intersection { members, witness })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::HPolytope(p) => p.dim,
            ConvexBody::Ball(b) => b.center.len(),
            ConvexBody::Intersection { members, .. } => members[0].dim(),
        }
    }

    /// A point with positive distance to `∂K`.
    pub fn interior_point(&self) -> Vec<T> {
        match self {
            ConvexBody::HPolytope(p) => p.witness.clone(),
            ConvexBody::Ball(b) => b.center.clone(),
            ConvexBody::Intersection { witness, .. } => witness.clone(),
        }
    }

    /// Distance to `∂K` inside `K`, negative outside (minimum facet value for
    /// polytopes, `R − |z − c|` for balls).
    pub fn signed_distance(&self, z: &[T]) -> T {
        match self {
            ConvexBody::HPolytope(p) => p.min_facet(z).1,
            ConvexBody::Ball(b) => b.radius - norm(&sub(z, &b.center)),
            ConvexBody::Intersection { members, .. } => {
                members.iter().map(|m| m.signed_distance(z)).fold(T::infinity(), T::min)
            }
        }
    }

    pub fn contains(&self, z: &[T]) -> bool {
        self.signed_distance(z) >= -T::lit(T::TIE_TOL)
    }

    fn check_dim(&self, z: &[T]) -> Result<(), ConvexError> {
        if z.len() != self.dim() {
            return Err(ConvexError::Dimension { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    fn check_member(&self, z: &[T]) -> Result<(), ConvexError> {
        self.check_dim(z)?;
        let s = self.signed_distance(z);
        if s >= -T::lit(T::TIE_TOL) {
            return Ok(());
        }
        Err(ConvexError::Domain { constraint: self.violated_constraint(z), value: s.as_f64() })
    }

    fn violated_constraint(&self, z: &[T]) -> String {
        match self {
            ConvexBody::HPolytope(p) => {
                let (i, _) = p.min_facet(z);
                let f = &p.facets[i];
                format!("facet {i} ({:?}·z ≥ {})", f.normal.iter().map(|x| x.as_f64()).collect::<Vec<_>>(), f.offset)
            }
            ConvexBody::Ball(b) => format!("|z − {:?}| ≤ {}", b.center, b.radius),
            ConvexBody::Intersection { members, .. } => {
                let (i, m) = members
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.signed_distance(z).partial_cmp(&b.1.signed_distance(z)).unwrap_or(Ordering::Equal))
                    .expect("nonempty intersection");
                format!("member {i}: {}", m.violated_constraint(z))
            }
        }
    }

    /// `d(z) = inf{|z − w| : w ∈ ∂K}` for `z ∈ K`.
    pub fn distance_to_boundary(&self, z: &[T]) -> Result<T, ConvexError> {
        self.check_member(z)?;
        // For an intersection, ∂(A ∩ B) ⊆ ∂A ∪ ∂B and every member's facet or
        // radial functional supports A ∩ B from outside, so d ≤ ℓ gives
        // d_{A∩B} = min(d_A, d_B).
        Ok(self.signed_distance(z).max(T::zero()))
    }

    /// Supporting functionals of the representation that are candidates for
    /// the infimum at `z`: every facet functional (anchored on its hyperplane)
    /// and the radial functional of each ball.
    pub fn representable_functionals(&self, z: &[T]) -> Vec<SupportingFunctional<T>> {
        match self {
            ConvexBody::HPolytope(p) => p
                .facets
                .iter()
                .map(|f| SupportingFunctional { v: f.normal.iter().map(|&n| n * f.offset).collect(), nu: f.normal.clone() })
                .collect(),
            ConvexBody::Ball(b) => {
                let r = sub(z, &b.center);
                let rn = norm(&r);
                let u: Vec<T> = if rn > T::zero() {
                    r.iter().map(|&x| x / rn).collect()
                } else {
                    let mut e = vec![T::zero(); r.len()];
                    e[0] = -T::one();
                    e
                };
                let v = b.center.iter().zip(&u).map(|(&c, &ui)| c + b.radius * ui).collect();
                vec![SupportingFunctional { v, nu: u.iter().map(|&x| -x).collect() }]
            }
            ConvexBody::Intersection { members, .. } => {
                members.iter().flat_map(|m| m.representable_functionals(z)).collect()
            }
        }
    }

    /// `inf_ℓ ℓ(z)` over [`Self::representable_functionals`]; equals
    /// `distance_to_boundary` on `K`.
    pub fn infimum_over_functionals(&self, z: &[T]) -> Result<T, ConvexError> {
        self.check_member(z)?;
        Ok(self
            .representable_functionals(z)
            .iter()
            .map(|ell| ell.value(z))
            .fold(T::infinity(), T::min)
            .max(T::zero()))
    }

    /// Lexicographically smallest nearest boundary point and its unique
    /// supporting functional.
    pub fn nearest_boundary_point(&self, z: &[T]) -> Result<NiceChoice<T>, ConvexError> {
        self.check_member(z)?;
        Ok(self.select(z))
    }

    /// Nearest-point selection extended outside `K`: the facet (or radial
    /// point) realising the signed distance. Coincides with
    /// [`Self::nearest_boundary_point`] on `K`.
    pub fn signed_selection(&self, z: &[T]) -> Result<NiceChoice<T>, ConvexError> {
        self.check_dim(z)?;
        Ok(self.select(z))
    }

    fn select(&self, z: &[T]) -> NiceChoice<T> {
        let tie = T::lit(T::TIE_TOL);
        match self {
            ConvexBody::HPolytope(p) => {
                let (_, m) = p.min_facet(z);
                let mut cands: Vec<(Vec<T>, &Vec<T>)> = p
                    .facets
                    .iter()
                    .filter_map(|f| {
                        let s = f.value(z);
                        (s <= m + tie).then(|| (z.iter().zip(&f.normal).map(|(&zi, &n)| zi - s * n).collect(), &f.normal))
                    })
                    .collect();
                cands.sort_by(|a, b| lex_cmp(&a.0, &b.0, tie).then_with(|| lex_cmp(a.1, b.1, tie)));
                let distinct = 1 + cands.windows(2).filter(|w| lex_cmp(&w[0].0, &w[1].0, tie) != Ordering::Equal).count();
                let (v, facet_normal) = cands.swap_remove(0);
                let contact = if distinct == 1 { Contact::Unique } else { Contact::Multiple(distinct) };
                finish_choice(z, v, facet_normal.clone(), m, contact)
            }
            ConvexBody::Ball(b) => {
                let r = sub(z, &b.center);
                let rn = norm(&r);
                let k = z.len();
                if rn <= tie * b.radius {
                    // every sphere point is nearest; the lexicographic minimum is c − R e₁
                    let mut v = b.center.clone();
                    v[0] -= b.radius;
                    let mut e = vec![T::zero(); k];
                    e[0] = T::one();
                    let contact = if k == 1 { Contact::Multiple(2) } else { Contact::Continuum };
                    return finish_choice(z, v, e, b.radius - rn, contact);
                }
                let u: Vec<T> = r.iter().map(|&x| x / rn).collect();
                let v = b.center.iter().zip(&u).map(|(&c, &ui)| c + b.radius * ui).collect();
                finish_choice(z, v, u.iter().map(|&x| -x).collect(), b.radius - rn, Contact::Unique)
            }
            ConvexBody::Intersection { members, .. } => {
                let dists: Vec<T> = members.iter().map(|m| m.signed_distance(z)).collect();
                let m = dists.iter().copied().fold(T::infinity(), T::min);
                let mut choices: Vec<NiceChoice<T>> = members
                    .iter()
                    .zip(&dists)
                    .filter(|(_, &d)| d <= m + tie)
                    .map(|(mb, _)| mb.select(z))
                    .collect();
                choices.sort_by(|a, b| lex_cmp(&a.v, &b.v, tie).then_with(|| lex_cmp(&a.ell.nu, &b.ell.nu, tie)));
                let continuum = choices.iter().any(|c| c.contact == Contact::Continuum);
                let mut count: usize = choices
                    .iter()
                    .map(|c| match c.contact {
                        Contact::Unique => 1,
                        Contact::Multiple(n) => n,
                        Contact::Continuum => 0,
                    })
                    .sum();
                // the same point can be nearest for two members
                count -= choices.windows(2).filter(|w| lex_cmp(&w[0].v, &w[1].v, tie) == Ordering::Equal).count();
                let mut best = choices.swap_remove(0);
                best.contact = if continuum {
                    Contact::Continuum
                } else if count <= 1 {
                    Contact::Unique
                } else {
                    Contact::Multiple(count)
                };
                best
            }
        }
    }

    /// Unit inward normals of the supporting hyperplanes active at `v`
    /// (facet normals, radial normals). For an intersection the members'
    /// normal cones at `v` are merged.
    pub fn normal_cone_generators(&self, v: &[T]) -> Vec<Vec<T>> {
        let tol = T::lit(T::BOUNDARY_TOL);
        let mut gens: Vec<Vec<T>> = Vec::new();
        match self {
            ConvexBody::HPolytope(p) => {
                for f in &p.facets {
                    if f.value(v).abs() <= tol {
                        gens.push(f.normal.clone());
                    }
                }
            }
            ConvexBody::Ball(b) => {
                let r = sub(&b.center, v);
                let rn = norm(&r);
                if (rn - b.radius).abs() <= tol {
                    gens.push(r.iter().map(|&x| x / rn).collect());
                }
            }
            ConvexBody::Intersection { members, .. } => {
                for m in members {
                    gens.extend(m.normal_cone_generators(v));
                }
            }
        }
        let mut out: Vec<Vec<T>> = Vec::with_capacity(gens.len());
        for g in gens {
            if !out.iter().any(|o| lex_cmp(o, &g, T::lit(T::TIE_TOL)) == Ordering::Equal) {
                out.push(g);
            }
        }
        out
    }

    /// Up to `count` distinct inward pointing unit vectors at the boundary
    /// point `v`: first the normal-cone generators, then normalized pairwise
    /// sums, then seeded random convex combinations.
    pub fn inward_vector_samples(&self, v: &[T], count: usize) -> Result<Vec<Vec<T>>, ConvexError> {
        self.check_dim(v)?;
        let s = self.signed_distance(v);
        if s.abs() > T::lit(T::BOUNDARY_TOL) {
            return Err(ConvexError::NotOnBoundary { signed_distance: s.as_f64() });
        }
        let gens = self.normal_cone_generators(v);
        let tie = T::lit(T::TIE_TOL);
        let mut out: Vec<Vec<T>> = Vec::new();
        let push = |cand: Vec<T>, out: &mut Vec<Vec<T>>| {
            if out.len() < count && !out.iter().any(|o| lex_cmp(o, &cand, tie) == Ordering::Equal) {
                out.push(cand);
            }
        };
        for g in &gens {
            push(g.clone(), &mut out);
        }
        if gens.len() < 2 {
            return Ok(out);
        }
        let combine = |w: &[T]| -> Option<Vec<T>> {
            let mut c = vec![T::zero(); v.len()];
            for (g, &wi) in gens.iter().zip(w) {
                for (ci, &gi) in c.iter_mut().zip(g) {
                    *ci += wi * gi;
                }
            }
            let n = norm(&c);
            (n > T::lit(1e-6)).then(|| c.iter().map(|&x| x / n).collect())
        };
        for i in 0..gens.len() {
            for j in i + 1..gens.len() {
                let mut w = vec![T::zero(); gens.len()];
                w[i] = T::one();
                w[j] = T::one();
                if let Some(c) = combine(&w) {
                    push(c, &mut out);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f726d616c);
        let mut attempts = 0;
        while out.len() < count && attempts < 20 * count {
            attempts += 1;
            let w: Vec<T> = (0..gens.len()).map(|_| T::lit(rng.gen_range(0.0..1.0))).collect();
            if let Some(c) = combine(&w) {
                push(c, &mut out);
            }
        }
        Ok(out)
    }

    /// Boundary points stratified by face dimension: vertices, edge midpoints
    /// and one point per facet for polytopes; `sphere_count` quasi-uniform
    /// points for balls; member samples lying on `∂K` for intersections.
    pub fn boundary_samples(&self, sphere_count: usize, seed: u64) -> Vec<Vec<T>> {
        let tol = T::lit(T::BOUNDARY_TOL);
        match self {
            ConvexBody::HPolytope(p) => {
                let k = p.dim;
                let mut out: Vec<Vec<T>> = Vec::new();
                let (verts, _) = p.clipped_vertices(p.clip_bound());
                let verts: Vec<_> = verts.into_iter().filter(|(_, a)| !a.is_empty()).collect();
                for (z, _) in &verts {
                    out.push(z.clone());
                }
                if k >= 2 {
                    for i in 0..verts.len() {
                        for j in i + 1..verts.len() {
                            let shared = verts[i].1.iter().filter(|f| verts[j].1.contains(f)).count();
                            if shared + 1 >= k {
                                let mid: Vec<T> =
                                    verts[i].0.iter().zip(&verts[j].0).map(|(&a, &b)| T::lit(0.5) * (a + b)).collect();
                                if self.signed_distance(&mid).abs() <= tol {
                                    out.push(mid);
                                }
                            }
                        }
                    }
                }
                for (fi, f) in p.facets.iter().enumerate() {
                    let s = f.value(&p.witness);
                    let proj: Vec<T> = p.witness.iter().zip(&f.normal).map(|(&w, &n)| w - s * n).collect();
                    if self.contains(&proj) {
                        out.push(proj);
                        continue;
                    }
                    let on: Vec<&Vec<T>> = verts.iter().filter(|(_, a)| a.contains(&fi)).map(|(z, _)| z).collect();
                    if !on.is_empty() {
                        let inv = T::one() / T::lit(on.len() as f64);
                        let c: Vec<T> = (0..k).map(|j| on.iter().map(|z| z[j]).sum::<T>() * inv).collect();
                        out.push(c);
                    }
                }
                dedup_points(out)
            }
            ConvexBody::Ball(b) => {
                let k = b.center.len();
                let dirs: Vec<Vec<T>> = match k {
                    1 => vec![vec![-T::one()], vec![T::one()]],
                    2 => (0..sphere_count.max(1))
                        .map(|j| {
                            let th = T::lit(2.0 * std::f64::consts::PI * j as f64 / sphere_count.max(1) as f64);
                            vec![th.cos(), th.sin()]
                        })
                        .collect(),
                    _ => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        (0..sphere_count.max(1))
                            .map(|_| {
                                let g: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
                                let n = norm(&g);
                                g.iter().map(|&x| T::lit(x / n)).collect()
                            })
                            .collect()
                    }
                };
                dirs.into_iter()
                    .map(|u| b.center.iter().zip(&u).map(|(&c, &ui)| c + b.radius * ui).collect())
                    .collect()
            }
            ConvexBody::Intersection { members, .. } => {
                let pts = members
                    .iter()
                    .flat_map(|m| m.boundary_samples(sphere_count, seed))
                    .filter(|z| self.signed_distance(z).abs() <= tol)
                    .collect();
                dedup_points(pts)
            }
        }
    }

    /// Diameter, `None` when `K` is unbounded.
    pub fn diameter(&self) -> Option<T> {
        match self {
            ConvexBody::HPolytope(p) => {
                let verts = p.vertices()?;
                let mut d = T::zero();
                for i in 0..verts.len() {
                    for j in i + 1..verts.len() {
                        d = d.max(norm(&sub(&verts[i].0, &verts[j].0)));
                    }
                }
                Some(d)
            }
            ConvexBody::Ball(b) => Some(T::lit(2.0) * b.radius),
            ConvexBody::Intersection { members, .. } => {
                members.iter().filter_map(Self::diameter).fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))))
            }
        }
    }
}

fn finish_choice<T: Real>(z: &[T], v: Vec<T>, normal: Vec<T>, signed: T, contact: Contact) -> NiceChoice<T> {
    if signed > T::lit(T::TIE_TOL) {
        let diff = sub(z, &v);
        let dist = norm(&diff);
        let nu = diff.iter().map(|&x| x / dist).collect();
        NiceChoice { ell: SupportingFunctional { v: v.clone(), nu }, v, dist, contact }
    } else {
        NiceChoice { ell: SupportingFunctional { v: v.clone(), nu: normal }, v, dist: signed.min(T::zero()), contact }
    }
}

fn dedup_points<T: Real>(pts: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(pts.len());
    for p in pts {
        if !out.iter().any(|o| lex_cmp(o, &p, T::lit(T::BOUNDARY_TOL)) == Ordering::Equal) {
            out.push(p);
        }
    }
    out
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Calls `f` with every `r`-subset of `0..m` in lexicographic order.
fn for_each_combination(m: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if r > m {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        f(&idx);
        let mut i = r;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - r {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Maximin ascent on `min_m sd_m(z)` started from the members' interior
/// points and their centroid.
fn intersection_margin_search<T: Real>(members: &[ConvexBody<T>]) -> (Vec<T>, T) {
    let k = members[0].dim();
    let f = |z: &[T]| members.iter().map(|m| m.signed_distance(z)).fold(T::infinity(), T::min);
    let mut starts: Vec<Vec<T>> = members.iter().map(ConvexBody::interior_point).collect();
    let inv = T::one() / T::lit(starts.len() as f64);
    starts.push((0..k).map(|j| starts.iter().map(|s| s[j]).sum::<T>() * inv).collect());
    let scale = members
        .iter()
        .filter_map(ConvexBody::diameter)
        .fold(T::one(), T::max);
    let mut best = (starts[0].clone(), f(&starts[0]));
    for s in starts {
        let mut z = s;
        let mut val = f(&z);
        let mut step = scale * T::lit(0.25);
        for _ in 0..2000 {
            if step < T::lit(1e-12) * scale {
                break;
            }
            // ascend along the inward normal of the currently binding member
            let worst = members
                .iter()
                .min_by(|a, b| a.signed_distance(&z).partial_cmp(&b.signed_distance(&z)).unwrap_or(Ordering::Equal))
                .expect("nonempty");
            let dir = worst.select(&z).ell.nu;
            let trial: Vec<T> = z.iter().zip(&dir).map(|(&zi, &d)| zi + step * d).collect();
            let tv = f(&trial);
            if tv > val {
                z = trial;
                val = tv;
            } else {
                step *= T::lit(0.5);
            }
        }
        if val > best.1 {
            best = (z, val);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box() -> ConvexBody<f64> {
        ConvexBody::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut n = 0;
        for_each_combination(3, 3, |_| n += 1);
        assert_eq!(n, 1);
    }

    #[test]
    fn distance_examples() {
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.distance_to_boundary(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(unit_box().distance_to_boundary(&[0.25, 0.5]).unwrap(), 0.25);
    }

    #[test]
    fn outside_point_is_domain_error() {
        let err = unit_box().distance_to_boundary(&[1.5, 0.5]).unwrap_err();
        match err {
            ConvexError::Domain { constraint, value } => {
                assert!(constraint.starts_with("facet 1"), "{constraint}");
                assert_abs_diff_eq!(value, -0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_abs_diff_eq!(unit_box().signed_distance(&[1.5, 0.5]), -0.5);
    }

    #[test]
    fn infimum_examples() {
        assert_eq!(unit_box().infimum_over_functionals(&[0.5, 0.5]).unwrap(), 0.5);
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(ball.infimum_over_functionals(&[0.3, 0.0]).unwrap(), 0.7, epsilon = 1e-15);
        let f = ball.representable_functionals(&[0.3, 0.0]);
        assert_eq!(f[0].v, vec![1.0, 0.0]);
    }

    #[test]
    fn box_centre_picks_lexicographic_minimum() {
        let c = unit_box().nearest_boundary_point(&[0.5, 0.5]).unwrap();
        assert_eq!(c.v, vec![0.0, 0.5]);
        assert_eq!(c.ell.nu, vec![1.0, 0.0]);
        assert_eq!(c.contact, Contact::Multiple(4));
        let u = unit_box().nearest_boundary_point(&[0.25, 0.5]).unwrap();
        assert_eq!(u.v, vec![0.0, 0.5]);
        assert_eq!(u.contact, Contact::Unique);
    }

    #[test]
    fn ball_centre_picks_leftmost_point() {
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let c = ball.nearest_boundary_point(&[0.0, 0.0]).unwrap();
        assert_eq!(c.v, vec![-1.0, 0.0]);
        assert_eq!(c.ell.nu, vec![1.0, 0.0]);
        assert_eq!(c.contact, Contact::Continuum);
    }

    #[test]
    fn on_boundary_uses_facet_normal() {
        let c = unit_box().nearest_boundary_point(&[0.0, 0.0]).unwrap();
        assert_eq!(c.v, vec![0.0, 0.0]);
        assert_eq!(c.dist, 0.0);
        assert_eq!(c.ell.nu, vec![0.0, 1.0]);
    }

    #[test]
    fn functional_values() {
        let ell = SupportingFunctional::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(functional_value(&ell, &[0.3, 7.0]), 0.3);
        assert_eq!(functional_value(&ell, &[0.0, 0.0]), 0.0);
        assert!(SupportingFunctional::new(vec![0.0], vec![2.0]).is_err());
    }

    #[test]
    fn inward_vectors_examples() {
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.inward_vector_samples(&[1.0, 0.0], 5).unwrap(), vec![vec![-1.0, 0.0]]);
        let corner = unit_box().inward_vector_samples(&[0.0, 0.0], 3).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(corner.len(), 3);
        assert_eq!(corner[0], vec![1.0, 0.0]);
        assert_eq!(corner[1], vec![0.0, 1.0]);
        assert_abs_diff_eq!(corner[2][0], h, epsilon = 1e-15);
        assert_abs_diff_eq!(corner[2][1], h, epsilon = 1e-15);
        assert_eq!(unit_box().inward_vector_samples(&[0.5, 0.0], 10).unwrap(), vec![vec![0.0, 1.0]]);
        assert!(matches!(
            unit_box().inward_vector_samples(&[0.5, 0.5], 1),
            Err(ConvexError::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn vertex_cone_samples_support_box() {
        let k = unit_box();
        let samples = k.inward_vector_samples(&[0.0, 0.0], 12).unwrap();
        assert_eq!(samples.len(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let z = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            for nu in &samples {
                assert!(dot(nu, &z) >= -1e-12);
            }
        }
    }

    #[test]
    fn intersection_corner_merges_member_cones() {
        let a = ConvexBody::hpolytope(vec![vec![1.0, 0.0]], vec![0.0]).unwrap();
        let b = ConvexBody::hpolytope(vec![vec![0.0, 1.0]], vec![0.0]).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 2.0).unwrap();
        let quarter = ConvexBody::intersection(vec![a, b, ball]).unwrap();
        let g = quarter.normal_cone_generators(&[0.0, 0.0]);
        assert_eq!(g, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = quarter.normal_cone_generators(&[2.0, 0.0]);
        assert_eq!(g, vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert_abs_diff_eq!(quarter.distance_to_boundary(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(quarter.diameter(), Some(4.0));
    }

    #[test]
    fn empty_interior_rejected() {
        // x ≥ 1 and x ≤ 0
        let r = ConvexBody::hpolytope(vec![vec![1.0], vec![-1.0]], vec![1.0, 0.0]);
        assert!(matches!(r, Err(ConvexError::EmptyInterior { .. })));
        // degenerate slab x ∈ [0, 0]
        let r = ConvexBody::boxed(&[0.0, 0.0], &[0.0, 1.0]);
        assert!(matches!(r, Err(ConvexError::EmptyInterior { .. })));
        let a = ConvexBody::ball(vec![0.0], 1.0).unwrap();
        let b = ConvexBody::ball(vec![3.0], 1.0).unwrap();
        assert!(ConvexBody::intersection(vec![a, b]).is_err());
        assert!(matches!(ConvexBody::ball(vec![0.0], -1.0), Err(ConvexError::Radius(_))));
    }

    #[test]
    fn normals_are_rescaled() {
        // simplex z ≥ 0, z1 + z2 ≤ 1
        let k = ConvexBody::hpolytope(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, 0.0, -1.0],
        )
        .unwrap();
        let ConvexBody::HPolytope(p) = &k else { unreachable!() };
        for f in p.facets() {
            assert!((norm(&f.normal) - 1.0f64).abs() <= 1e-12);
        }
        assert_abs_diff_eq!(k.distance_to_boundary(&[0.5, 0.5]).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(p.vertices().unwrap().len(), 3);
        assert_abs_diff_eq!(k.diameter().unwrap(), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn unbounded_halfline() {
        let k = ConvexBody::hpolytope(vec![vec![1.0]], vec![0.0]).unwrap();
        assert_eq!(k.diameter(), None);
        assert_eq!(k.distance_to_boundary(&[3.0]).unwrap(), 3.0);
        assert_eq!(k.boundary_samples(4, 0), vec![vec![0.0]]);
    }

    #[test]
    fn boundary_samples_are_stratified() {
        let s = unit_box().boundary_samples(0, 0);
        // 4 vertices, 4 edge midpoints (= facet points in 2-D, deduplicated)
        assert_eq!(s.len(), 8);
        for z in &s {
            assert!(unit_box().signed_distance(z).abs() <= 1e-12);
        }
        let cube = ConvexBody::boxed(&[0.0; 3], &[1.0; 3]).unwrap();
        // 8 vertices, 12 edge midpoints, 6 facet centres
        assert_eq!(cube.boundary_samples(0, 0).len(), 26);
    }

    #[test]
    fn single_precision_box() {
        let k = ConvexBody::<f32>::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let c = k.nearest_boundary_point(&[0.5, 0.5]).unwrap();
        assert_eq!(c.v, vec![0.0f32, 0.5]);
    }
}
