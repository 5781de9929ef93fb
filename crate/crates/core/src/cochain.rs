//! Cochain complexes over exact rationals: invariant-form bases on critical
//! orbits, the ordinary differential assembled from moduli covers, the
//! Cartan-model equivariant differential, and cohomology ranks with
//! representative generators.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::critstruct::CriticalOrbit;
use crate::error::{Error, Result};
use crate::flow::ModuliCover;

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Invariant-form degrees available on an orbit: constants always, plus the
/// normalized dual of the fundamental field on circle orbits. Both are
/// closed, so the internal differential vanishes.
pub fn invariant_form_degrees(orbit: &CriticalOrbit) -> Vec<usize> {
    if orbit.orbit_dim == 1 {
        vec![0, 1]
    } else {
        vec![0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ordinary,
    Cartan,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub orbit: usize,
    pub orbit_label: String,
    /// Base symbol, e.g. `s00` for the 0-form on S0.
    pub name: String,
    pub form_degree: usize,
    pub theta_power: usize,
    pub total_degree: usize,
}

impl Generator {
    pub fn display(&self, variant: Variant) -> String {
        match variant {
            Variant::Ordinary => self.name.clone(),
            Variant::Cartan => format!("{}@{}", self.name, self.theta_power),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CochainComplex {
    pub variant: Variant,
    /// Theta truncation (Cartan only; ignored for ordinary complexes).
    pub truncation: usize,
    pub generators: Vec<Generator>,
    /// Sparse differential: for each generator, its image as a list of
    /// (generator index, exact coefficient).
    pub differential: Vec<Vec<(usize, BigRational)>>,
    /// Whether any theta-power images were dropped at the truncation.
    pub truncation_flagged: bool,
    /// Largest total degree with reliable cohomology.
    pub max_safe_degree: usize,
}

impl CochainComplex {
    pub fn degrees(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.generators.iter().map(|g| g.total_degree).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn generators_in_degree(&self, p: usize) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&i| self.generators[i].total_degree == p)
            .collect()
    }

    /// Dense matrix of the differential from degree `p` to `p + 1`:
    /// rows indexed by degree-(p+1) generators, columns by degree-p ones.
    pub fn differential_matrix(
        &self,
        p: usize,
    ) -> (Vec<usize>, Vec<usize>, Vec<Vec<BigRational>>) {
        let cols = self.generators_in_degree(p);
        let rows = self.generators_in_degree(p + 1);
        let row_of: std::collections::BTreeMap<usize, usize> =
            rows.iter().enumerate().map(|(r, &g)| (g, r)).collect();
        let mut mat = vec![vec![BigRational::zero(); cols.len()]; rows.len()];
        for (c, &g) in cols.iter().enumerate() {
            for (tgt, coef) in &self.differential[g] {
                if let Some(&r) = row_of.get(tgt) {
                    mat[r][c] = coef.clone();
                }
            }
        }
        (rows, cols, mat)
    }

    /// Exact check that consecutive differentials compose to zero.
    pub fn verify_d_squared(&self) -> Result<()> {
        for g in 0..self.generators.len() {
            let mut acc: std::collections::BTreeMap<usize, BigRational> = Default::default();
            for (mid, c1) in &self.differential[g] {
                for (tgt, c2) in &self.differential[*mid] {
                    let e = acc.entry(*tgt).or_insert_with(BigRational::zero);
                    *e += c1 * c2;
                }
            }
            for (tgt, v) in acc {
                 if !v.is_zero() {
                    return Err(Error::Assembly(format!(
                        "d^2 != 0: {} -> {} has coefficient {}",
                        self.generators[g].display(self.variant),
                        self.generators[tgt].display(self.variant),
                        v
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact check that every differential entry raises the total degree
    /// by one.
    pub fn verify_grading(&self) -> Result<()> {
        for g in 0..self.generators.len() {
            for (tgt, coef) in &self.differential[g] {
                if !coef.is_zero()
                    && self.generators[*tgt].total_degree != self.generators[g].total_degree + 1
                {
                    return Err(Error::Assembly(format!(
                        "grading violated: {} (degree {}) -> {} (degree {})",
                        self.generators[g].display(self.variant),
                        self.generators[g].total_degree,
                        self.generators[*tgt].display(self.variant),
                        self.generators[*tgt].total_degree
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sanitize_label(label: &str) -> String {
    let mut out = String::new();
    for ch in label.chars() {
        match ch {
            '\'' => out.push('p'),
            c if c.is_ascii_alphanumeric() => out.push(c.to_ascii_lowercase()),
            _ => {}
        }
    }
    out
}

/// Coefficient contributed by a cover to entries from form degree `j`:
/// the signed sum over sheets of the e- degrees (0-forms) or of the
/// normalized 1-form coefficients.
fn cover_coefficient(cover: &ModuliCover, j: usize) -> BigRational {
    let mut total = BigRational::zero();
    for sheet in &cover.sheets {
        let contribution = if j == 0 {
            if cover.fiber_dim == 1 {
                // Pushforward of a 0-form along 1-dimensional fibers drops
                // below degree zero; no contribution.
                BigRational::zero()
            } else {
                rat(sheet.sign as i64 * sheet.e_minus_degree as i64, 1)
            }
        } else {
            match sheet.one_form_coeff {
                Some((num, den)) => rat(sheet.sign as i64 * num, den),
                None => BigRational::zero(),
            }
        };
        total += contribution;
    }
    total
}

struct EntrySpec {
    source_orbit: usize,
    target_orbit: usize,
    j_from: usize,
    j_to: usize,
    coefficient: BigRational,
}

/// Shared assembly of the `r >= 1` part of the differential from covers.
fn cover_entries(orbits: &[CriticalOrbit], covers: &[ModuliCover]) -> Result<Vec<EntrySpec>> {
    let mut entries = Vec::new();
    for cover in covers {
        if cover.dim < 0 || cover.sheets.is_empty() {
            continue;
        }
        let hi = &orbits[cover.source];
        let lo = &orbits[cover.target];
        let r = hi.index as i64 - lo.index as i64;
        if r < 1 {
            continue;
        }
        for j in invariant_form_degrees(lo) {
            let coef = cover_coefficient(cover, j);
            if coef.is_zero() {
                continue;
            }
            let j_to = j as i64 - r + 1;
            let valid = j_to >= 0 && invariant_form_degrees(hi).contains(&(j_to as usize));
            if !valid {
                return Err(Error::Assembly(format!(
                    "entry from {} degree {j} lands in nonexistent degree {j_to} on {} with nonzero coefficient {coef}",
                    lo.label, hi.label,
                )));
            }
            // The sign (-1)^j from the pushforward convention.
            let signed = if j % 2 == 0 { coef } else { -coef };
            entries.push(EntrySpec {
                source_orbit: cover.target,
                target_orbit: cover.source,
                j_from: j,
                j_to: j_to as usize,
                coefficient: signed,
            });
        }
    }
    Ok(entries)
}

/// The ordinary Morse-Bott cochain complex.
pub fn assemble_ordinary(
    orbits: &[CriticalOrbit],
    covers: &[ModuliCover],
) -> Result<CochainComplex> {
    let mut generators = Vec::new();
    let mut index_of = std::collections::BTreeMap::new();
    for o in orbits {
        for j in invariant_form_degrees(o) {
            index_of.insert((o.id, j), generators.len());
            generators.push(Generator {
                orbit: o.id,
                orbit_label: o.label.clone(),
                name: format!("{}{}", sanitize_label(&o.label), j),
                form_degree: j,
                theta_power: 0,
                total_degree: o.index + j,
            });
        }
    }
    // d = 0 on invariant forms of points and homogeneous circles; only the
    // cover entries contribute.
    let mut differential = vec![Vec::new(); generators.len()];
    for e in cover_entries(orbits, covers)? {
        let from = index_of[&(e.source_orbit, e.j_from)];
        let to = index_of[&(e.target_orbit, e.j_to)];
        differential[from].push((to, e.coefficient));
    }
    for row in differential.iter_mut() {
        row.sort_by_key(|(t, _)| *t);
    }
    let complex = CochainComplex {
        variant: Variant::Ordinary,
        truncation: 0,
        generators,
        differential,
        truncation_flagged: false,
        max_safe_degree: usize::MAX,
    };
    complex.verify_grading()?;
    complex.verify_d_squared()?;
    Ok(complex)
}

/// The Cartan-model equivariant complex, truncated at theta power `K`.
/// `circle_group` says whether the acting group is a circle; for finite
/// groups the model collapses to the ordinary complex with invariants.
pub fn assemble_cartan(
    orbits: &[CriticalOrbit],
    covers: &[ModuliCover],
    truncation: usize,
    circle_group: bool,
) -> Result<CochainComplex> {
    if truncation < 1 {
        return Err(Error::Assembly("theta truncation must be at least 1".into()));
    }
    let k_max = if circle_group { truncation } else { 0 };
    let mut generators = Vec::new();
    let mut index_of = std::collections::BTreeMap::new();
    for o in orbits {
        for j in invariant_form_degrees(o) {
            for k in 0..=k_max {
                index_of.insert((o.id, j, k), generators.len());
                generators.push(Generator {
                    orbit: o.id,
                    orbit_label: o.label.clone(),
                    name: format!("{}{}", sanitize_label(&o.label), j),
                    form_degree: j,
                    theta_power: k,
                    total_degree: o.index + j + 2 * k,
                });
            }
        }
    }
    let mut differential = vec![Vec::new(); generators.len()];
    let mut truncation_flagged = false;
    // (d_G)_r for r >= 1 acts as the ordinary entries tensor the identity.
    for e in cover_entries(orbits, covers)? {
        for k in 0..=k_max {
            let from = index_of[&(e.source_orbit, e.j_from, k)];
            let to = index_of[&(e.target_orbit, e.j_to, k)];
            differential[from].push((to, e.coefficient.clone()));
        }
    }
    // (d_G)_0 = -iota_X tensor theta multiplication on circle orbits whose
    // fundamental field does not vanish; the 1-form generators are
    // normalized against the fundamental field so the pairing is 1.
    if circle_group {
        for o in orbits {
            if o.orbit_dim == 1 && o.is_group_orbit {
                for k in 0..=k_max {
                    let from = index_of[&(o.id, 1usize, k)];
                    if k + 1 <= k_max {
                        let to = index_of[&(o.id, 0usize, k + 1)];
                        differential[from].push((to, -BigRational::one()));
                    } else {
                        truncation_flagged = true;
                    }
                }
            }
        }
    }
    for row in differential.iter_mut() {
        row.sort_by_key(|(t, _)| *t);
    }
    let max_j = orbits.iter().map(|o| o.orbit_dim).max().unwrap_or(0);
    let max_safe_degree = if circle_group {
        2 * truncation - 2 + max_j
    } else {
        usize::MAX
    };
    let complex = CochainComplex {
        variant: Variant::Cartan,
        truncation,
        generators,
        differential,
        truncation_flagged,
        max_safe_degree,
    };
    complex.verify_grading()?;
    verify_d_squared_in_safe_range(&complex)?;
    Ok(complex)
}

/// `d^2 = 0` restricted to generators whose double image stays below the
/// truncation boundary.
fn verify_d_squared_in_safe_range(complex: &CochainComplex) -> Result<()> {
    for g in 0..complex.generators.len() {
        if complex.generators[g].theta_power + 1 >= complex.truncation {
            // Its image may have been truncated; skip.
            continue;
        }
        let mut acc: std::collections::BTreeMap<usize, BigRational> = Default::default();
        for (mid, c1) in &complex.differential[g] {
            for (tgt, c2) in &complex.differential[*mid] {
                let e = acc.entry(*tgt).or_insert_with(BigRational::zero);
                *e += c1 * c2;
            }
        }
        for (tgt, v) in acc {
            if !v.is_zero() {
                return Err(Error::Assembly(format!(
                    "d_G^2 != 0: {} -> {} has coefficient {}",
                    complex.generators[g].display(complex.variant),
                    complex.generators[tgt].display(complex.variant),
                    v
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact linear algebra over the rationals
// ---------------------------------------------------------------------------

/// Reduced row echelon form in place; returns pivot column indices.
fn rref(mat: &mut [Vec<BigRational>]) -> Vec<usize> {
    let rows = mat.len();
    let cols = if rows == 0 { 0 } else { mat[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let mut pivot = None;
        for i in r..rows {
            if !mat[i][c].is_zero() {
                pivot = Some(i);
                break;
            }
        }
        let Some(pi) = pivot else { continue };
        mat.swap(r, pi);
        let inv = mat[r][c].clone();
        for x in mat[r].iter_mut() {
            *x /= inv.clone();
        }
        for i in 0..rows {
            if i != r && !mat[i][c].is_zero() {
                let f = mat[i][c].clone();
                for cc in 0..cols {
                    let sub = &mat[r][cc] * &f;
                    mat[i][cc] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// Kernel basis of the linear map given by `mat` (rows x cols), as vectors
/// of length `cols` in reduced echelon form.
fn kernel_basis(mat: &[Vec<BigRational>], cols: usize) -> Vec<Vec<BigRational>> {
    let mut work: Vec<Vec<BigRational>> = mat.to_vec();
    let pivots = rref(&mut work);
    let pivot_set: std::collections::BTreeSet<usize> = pivots.iter().cloned().collect();
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![BigRational::zero(); cols];
        v[free] = BigRational::one();
        for (r, &pc) in pivots.iter().enumerate() {
            v[pc] = -work[r][free].clone();
        }
        basis.push(v);
    }
    basis
}

fn rank(mat: &[Vec<BigRational>]) -> usize {
    let mut work: Vec<Vec<BigRational>> = mat.to_vec();
    rref(&mut work).len()
}

#[derive(Clone, Debug)]
pub struct DegreeReport {
    pub degree: usize,
    pub rank: usize,
    /// Kernel-modulo-image representatives as (generator index, coefficient)
    /// combinations.
    pub representatives: Vec<Vec<(usize, BigRational)>>,
}

#[derive(Clone, Debug)]
pub struct CohomologyReport {
    pub variant: Variant,
    pub degrees: Vec<DegreeReport>,
    pub truncation_acknowledged: bool,
}

/// Cohomology ranks and representatives through `max_degree`.
///
/// For Cartan complexes, degrees beyond the truncation-safe window are an
/// error unless `acknowledge_truncation` is set.
pub fn cohomology(
    complex: &CochainComplex,
    max_degree: usize,
    acknowledge_truncation: bool,
) -> Result<CohomologyReport> {
    if complex.variant == Variant::Cartan
        && max_degree > complex.max_safe_degree
        && !acknowledge_truncation
    {
        return Err(Error::Assembly(format!(
            "degrees above {} are unreliable at truncation {}; pass the acknowledgment to inspect them",
            complex.max_safe_degree, complex.truncation
        )));
    }
    let mut degrees = Vec::new();
    for p in 0..=max_degree {
        let (_, cols_p, mat_p) = complex.differential_matrix(p);
        let ker = kernel_basis(&mat_p, cols_p.len());
        let image_mat: Vec<Vec<BigRational>> = if p == 0 {
            Vec::new()
        } else {
            let (rows_prev, cols_prev, mat_prev) = complex.differential_matrix(p - 1);
            debug_assert_eq!(rows_prev.len(), cols_p.len());
            let mut image = Vec::new();
            for c in 0..cols_prev.len() {
                let mut v = vec![BigRational::zero(); rows_prev.len()];
                for (r, row) in mat_prev.iter().enumerate() {
                    v[r] = row[c].clone();
                }
                if v.iter().any(|x| !x.is_zero()) {
                    image.push(v);
                }
            }
            image
        };
        let image_dim = rank(&image_mat);
        let rank_h = ker.len().saturating_sub(image_dim);
        // Representatives: kernel vectors that extend the image's span.
        let mut reducer: Vec<Vec<BigRational>> = image_mat;
        let mut reducer_rank = image_dim;
        let mut reps = Vec::new();
        for v in &ker {
            let mut candidate = reducer.clone();
            candidate.push(v.clone());
            let r = rank(&candidate);
            if r > reducer_rank {
                reps.push(v.clone());
                reducer = candidate;
                reducer_rank = r;
            }
        }
        let reps = reps
            .into_iter()
            .map(|v| {
                let lead = v.iter().find(|x| !x.is_zero()).cloned();
                let scaled: Vec<BigRational> = match lead {
                    Some(l) => v.into_iter().map(|x| x / l.clone()).collect(),
                    None => v,
                };
                scaled
                    .into_iter()
                    .enumerate()
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(i, x)| (cols_p[i], x))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        assert_eq!(reps.len(), rank_h, "kernel/image bookkeeping");
        degrees.push(DegreeReport {
            degree: p,
            rank: rank_h,
            representatives: reps,
        });
    }
    Ok(CohomologyReport {
        variant: complex.variant,
        degrees,
        truncation_acknowledged: acknowledge_truncation,
    })
}

impl CohomologyReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.degrees.iter().map(|d| d.rank).collect()
    }

    /// Render a representative like `s00+rbar00`.
    pub fn representative_string(
        &self,
        complex: &CochainComplex,
        rep: &[(usize, BigRational)],
    ) -> String {
        let mut out = String::new();
        for (i, (g, c)) in rep.iter().enumerate() {
            let name = complex.generators[*g].display(complex.variant);
            if c.is_one() {
                if i > 0 {
                    out.push('+');
                }
                out.push_str(&name);
            } else if (-c.clone()).is_one() {
                out.push('-');
                out.push_str(&name);
            } else {
                if i > 0 && c.is_positive() {
                    out.push('+');
                }
                out.push_str(&format!("{c}*{name}"));
            }
        }
        out
    }
}

/// The degree-2 shift `omega x theta^k -> omega x theta^(k+1)` of a Cartan
/// complex, as a sparse map on generators, checked to commute with the
/// differential inside the truncation-safe window.
pub fn theta_module_action(complex: &CochainComplex) -> Result<Vec<Option<usize>>> {
    if complex.variant != Variant::Cartan {
        return Err(Error::Assembly(
            "theta action only applies to Cartan complexes".into(),
        ));
    }
    let mut index_of = std::collections::BTreeMap::new();
    for (i, g) in complex.generators.iter().enumerate() {
        index_of.insert((g.orbit, g.form_degree, g.theta_power), i);
    }
    let shift: Vec<Option<usize>> = complex
        .generators
        .iter()
        .map(|g| {
            index_of
                .get(&(g.orbit, g.form_degree, g.theta_power + 1))
                .copied()
        })
        .collect();
    // Commutation with the differential wherever both routes stay inside
    // the truncation.
    for g in 0..complex.generators.len() {
        let Some(sg) = shift[g] else { continue };
        if complex.generators[sg].theta_power + 1 > complex.truncation.saturating_sub(1) {
            continue;
        }
        let mut lhs: std::collections::BTreeMap<usize, BigRational> = Default::default();
        for (tgt, c) in &complex.differential[sg] {
            *lhs.entry(*tgt).or_insert_with(BigRational::zero) += c.clone();
        }
        let mut rhs: std::collections::BTreeMap<usize, BigRational> = Default::default();
        let mut rhs_complete = true;
        for (tgt, c) in &complex.differential[g] {
            match shift[*tgt] {
                Some(st) => {
                    *rhs.entry(st).or_insert_with(BigRational::zero) += c.clone();
                }
                None => rhs_complete = false,
            }
        }
        if !rhs_complete {
            continue;
        }
        let keys: std::collections::BTreeSet<usize> =
            lhs.keys().chain(rhs.keys()).cloned().collect();
        for k in keys {
            let l = lhs.get(&k).cloned().unwrap_or_else(BigRational::zero);
            let r = rhs.get(&k).cloned().unwrap_or_else(BigRational::zero);
            if l != r {
                return Err(Error::Assembly(format!(
                    "theta action fails to commute with d_G at {}",
                    complex.generators[g].display(complex.variant)
                )));
            }
        }
    }
    Ok(shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_kernel_and_rank_work_on_a_small_system() {
        // x + y = 0 has a one-dimensional kernel in two variables.
        let mat = vec![vec![rat(1, 1), rat(1, 1)]];
        let ker = kernel_basis(&mat, 2);
        assert_eq!(ker.len(), 1);
        assert_eq!(ker[0][0], -ker[0][1].clone());
        assert_eq!(rank(&mat), 1);
    }
}
