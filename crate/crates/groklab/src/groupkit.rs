//! Finite groups as Cayley tables, irrep catalogs and isotypic projectors.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{CMat, Mat};
use crate::rng;

/// How a group was built; decides whether an irrep catalog is available.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    /// Product of cyclic groups, first factor most significant.
    Abelian { orders: Vec<usize> },
    Dihedral { n: usize },
    Imported,
}

/// A finite group. Element 0 is always the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    order: usize,
    cayley: Vec<usize>,
    inverse: Vec<usize>,
    name: String,
    abelian: bool,
    recipe: Recipe,
}

impl Group {
    /// Validate a raw table. The identity is moved to index 0 if needed.
    pub fn from_table(order: usize, table: Vec<usize>, name: impl Into<String>, recipe: Recipe) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("order must be positive".into()));
        }
        if table.len() != order * order {
            return Err(Error::Validation(format!("table has {} entries, expected {}", table.len(), order * order)));
        }
        let m = order;
        for a in 0..m {
            let mut seen = vec![false; m];
            for b in 0..m {
                let v = table[a * m + b];
                if v >= m || seen[v] {
                    return Err(Error::Validation(format!("row {a} not a permutation")));
                }
                seen[v] = true;
            }
        }
        for b in 0..m {
            let mut seen = vec![false; m];
            for a in 0..m {
                let v = table[a * m + b];
                if seen[v] {
                    return Err(Error::Validation(format!("column {b} not a permutation")));
                }
                seen[v] = true;
            }
        }
        let e = (0..m)
            .find(|&e| (0..m).all(|a| table[e * m + a] == a && table[a * m + e] == a))
            .ok_or_else(|| Error::Validation("no identity element".into()))?;
        let table = if e == 0 {
            table
        } else {
            let swap = |x: usize| if x == e { 0 } else if x == 0 { e } else { x };
            let mut t = vec![0; m * m];
            for a in 0..m {
                for b in 0..m {
                    t[swap(a) * m + swap(b)] = swap(table[a * m + b]);
                }
            }
            t
        };
        let mut inverse = vec![0; m];
        for a in 0..m {
            inverse[a] = (0..m)
                .find(|&b| table[a * m + b] == 0)
                .ok_or_else(|| Error::Validation(format!("element {a} has no inverse")))?;
            if table[inverse[a] * m + a] != 0 {
                return Err(Error::Validation(format!("left and right inverse of {a} differ")));
            }
        }
        let mul = |a: usize, b: usize| table[a * m + b];
        let assoc = |a: usize, b: usize, c: usize| mul(mul(a, b), c) == mul(a, mul(b, c));
        if m <= 64 {
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        if !assoc(a, b, c) {
                            return Err(Error::Validation(format!("associativity fails at ({a},{b},{c})")));
                        }
                    }
                }
            }
        } else {
            let mut r = rng::stream(0x5eed, m as u64);
            for _ in 0..10 * m * m {
                let (a, b, c) = (r.random_range(0..m), r.random_range(0..m), r.random_range(0..m));
                if !assoc(a, b, c) {
                    return Err(Error::Validation(format!("associativity fails at ({a},{b},{c})")));
                }
            }
        }
        let abelian = (0..m).all(|a| (0..a).all(|b| mul(a, b) == mul(b, a)));
        Ok(Group { order, cayley: table, inverse, name: name.into(), abelian, recipe })
    }

    /// `Z_M` with `(a, b) ↦ (a + b) mod M`.
    pub fn cyclic(m: usize) -> Self {
        assert!(m >= 1, "cyclic order must be positive");
        let table = (0..m * m).map(|i| (i / m + i % m) % m).collect();
        Self::from_table(m, table, format!("Z_{m}"), Recipe::Abelian { orders: vec![m] }).expect("cyclic table is a group")
    }

    /// Direct product; tuples are indexed row-major with the first factor most significant.
    pub fn product(factors: &[Group]) -> Self {
        assert!(!factors.is_empty(), "product needs at least one factor");
        let orders: Vec<usize> = factors.iter().map(|g| g.order).collect();
        let m: usize = orders.iter().product();
        let split = |mut x: usize| {
            let mut digits = vec![0; orders.len()];
            for i in (0..orders.len()).rev() {
                digits[i] = x % orders[i];
                x /= orders[i];
            }
            digits
        };
        let mut table = vec![0; m * m];
        for a in 0..m {
            let da = split(a);
            for b in 0..m {
                let db = split(b);
                let mut idx = 0;
                for (i, g) in factors.iter().enumerate() {
                    idx = idx * orders[i] + g.mul(da[i], db[i]);
                }
                table[a * m + b] = idx;
            }
        }
        let name = factors.iter().map(|g| g.name.as_str()).collect::<Vec<_>>().join("x");
        let recipe = if factors.iter().all(|g| matches!(&g.recipe, Recipe::Abelian { orders } if orders.len() == 1)) {
            Recipe::Abelian { orders: orders.clone() }
        } else if factors.iter().all(|g| matches!(g.recipe, Recipe::Abelian { .. })) {
            let flat = factors
                .iter()
                .flat_map(|g| match &g.recipe {
                    Recipe::Abelian { orders } => orders.clone(),
                    _ => unreachable!(),
                })
                .collect();
            Recipe::Abelian { orders: flat }
        } else {
            Recipe::Imported
        };
        Self::from_table(m, table, name, recipe).expect("product of groups is a group")
    }

    /// Dihedral group of order `2n`: `r^j` at index `j`, `r^j s` at `n + j`.
    pub fn dihedral(n: usize) -> Self {
        assert!(n >= 3, "dihedral needs n >= 3");
        let m = 2 * n;
        let mut table = vec![0; m * m];
        for a in 0..m {
            let (ja, xa) = (a % n, a / n);
            for b in 0..m {
                let (jb, xb) = (b % n, b / n);
                let j = if xa == 0 { (ja + jb) % n } else { (ja + n - jb) % n };
                table[a * m + b] = ((xa + xb) % 2) * n + j;
            }
        }
        Self::from_table(m, table, format!("D_{n}"), Recipe::Dihedral { n }).expect("dihedral table is a group")
    }

    pub fn order(&self) -> usize {
        self.order
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn is_abelian(&self) -> bool {
        self.abelian
    }
    pub fn identity(&self) -> usize {
        0
    }
    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.cayley[a * self.order + b]
    }
    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }
    pub fn table(&self) -> &[usize] {
        &self.cayley
    }

    /// Permutation matrix of `a ↦ h·a`, so `R_h e_a = e_{ha}`.
    pub fn regular_rep(&self, h: usize) -> Mat {
        let m = self.order;
        let mut r = Mat::zeros(m, m);
        for a in 0..m {
            r[(self.mul(h, a), a)] = 1.0;
        }
        r
    }

    /// Permutation matrix of `e_a ↦ e_{a⁻¹}`.
    pub fn inverse_op(&self) -> Mat {
        let m = self.order;
        let mut p = Mat::zeros(m, m);
        for a in 0..m {
            p[(self.inv(a), a)] = 1.0;
        }
        p
    }

    /// `(Pu)_a = u_{a⁻¹}`
    pub fn apply_inverse(&self, u: &[f64]) -> Vec<f64> {
        (0..self.order).map(|a| u[self.inv(a)]).collect()
    }

    /// Built-in catalog for recipe groups.
    pub fn catalog(&self) -> Option<IrrepCatalog> {
        match &self.recipe {
            Recipe::Abelian { orders } => Some(abelian_irreps(orders)),
            Recipe::Dihedral { n } => Some(dihedral_irreps(*n)),
            Recipe::Imported => None,
        }
    }

    /// Canonical text form accepted by [`load_cayley`].
    pub fn write_cayley<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.order)?;
        for a in 0..self.order {
            let row: Vec<String> = (0..self.order).map(|b| self.mul(a, b).to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        writeln!(out, "name: {}", self.name)
    }

    pub fn to_cayley_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_cayley(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Parse a Cayley-table text file: `#` comments, the order, `M` rows of
/// `M` indices, and an optional `name: <label>` line.
pub fn load_cayley<R: BufRead>(source: R) -> Result<Group> {
    let mut order: Option<usize> = None;
    let mut rows: Vec<usize> = Vec::new();
    let mut nrows = 0;
    let mut name = None;
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(rest) = t.strip_prefix("name:") {
            name = Some(rest.trim().to_string());
            continue;
        }
        if name.is_some() {
            return Err(Error::Parse { line: lineno, msg: "content after name line".into() });
        }
        match order {
            None => {
                let m = t.parse::<usize>().map_err(|e| Error::Parse { line: lineno, msg: format!("order: {e}") })?;
                if m == 0 {
                    return Err(Error::Parse { line: lineno, msg: "order must be positive".into() });
                }
                order = Some(m);
            }
            Some(m) => {
                if nrows == m {
                    return Err(Error::Parse { line: lineno, msg: format!("more than {m} rows") });
                }
                let before = rows.len();
                for tok in t.split_whitespace() {
                    rows.push(tok.parse().map_err(|e| Error::Parse { line: lineno, msg: format!("entry {tok:?}: {e}") })?);
                }
                if rows.len() - before != m {
                    return Err(Error::Parse { line: lineno, msg: format!("expected {m} entries, found {}", rows.len() - before) });
                }
                nrows += 1;
            }
        }
    }
    let m = order.ok_or(Error::Parse { line: 0, msg: "missing order line".into() })?;
    if nrows != m {
        return Err(Error::Parse { line: 0, msg: format!("expected {m} rows, found {nrows}") });
    }
    Group::from_table(m, rows, name.unwrap_or_else(|| format!("G_{m}")), Recipe::Imported)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrrepKind {
    Trivial,
    Real,
    ComplexPair,
}

/// One irreducible representation: unitary `C_k(h)` for every `h`.
#[derive(Clone, Debug)]
pub struct Irrep {
    pub k: usize,
    pub dim: usize,
    pub kind: IrrepKind,
    pub partner: usize,
    pub mats: Vec<CMat>,
}

impl Irrep {
    pub fn character(&self, h: usize) -> Complex64 {
        self.mats[h].trace()
    }
}

#[derive(Clone, Debug)]
pub struct IrrepCatalog {
    pub entries: Vec<Irrep>,
}

#[derive(Serialize, Deserialize)]
struct IrrepJson {
    k: usize,
    dim: usize,
    partner: usize,
    matrices: Vec<Vec<Vec<[f64; 2]>>>,
}

impl IrrepCatalog {
    pub fn get(&self, k: usize) -> Result<&Irrep> {
        self.entries.iter().find(|e| e.k == k).ok_or(Error::UnknownIrrep(k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One representative id per real irrep or conjugate pair (the smaller id).
    pub fn classes(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.partner >= e.k).map(|e| e.k).collect()
    }

    /// Sidecar JSON: `[{k, dim, partner, matrices: [h][row][col][re, im]}]`.
    pub fn to_json(&self) -> Result<String> {
        let list: Vec<IrrepJson> = self
            .entries
            .iter()
            .map(|e| IrrepJson {
                k: e.k,
                dim: e.dim,
                partner: e.partner,
                matrices: e
                    .mats
                    .iter()
                    .map(|c| (0..e.dim).map(|i| (0..e.dim).map(|j| [c[(i, j)].re, c[(i, j)].im]).collect()).collect())
                    .collect(),
            })
            .collect();
        Ok(serde_json::to_string(&list)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let list: Vec<IrrepJson> = serde_json::from_str(text)?;
        let entries = list
            .into_iter()
            .map(|e| {
                let mats: Vec<CMat> = e
                    .matrices
                    .iter()
                    .map(|rows| CMat::from_fn(e.dim, e.dim, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
                    .collect();
                let trivial = e.dim == 1 && mats.iter().all(|c| (c[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
                let kind = if trivial {
                    IrrepKind::Trivial
                } else if e.partner == e.k {
                    IrrepKind::Real
                } else {
                    IrrepKind::ComplexPair
                };
                Irrep { k: e.k, dim: e.dim, kind, partner: e.partner, mats }
            })
            .collect();
        Ok(IrrepCatalog { entries })
    }

    /// Largest deviation from the homomorphism, unitarity, orthogonality
    /// and dimension-sum invariants over all elements.
    pub fn invariant_error(&self, g: &Group) -> f64 {
        let m = g.order();
        let mut worst: f64 = 0.0;
        for e in &self.entries {
            for a in 0..m {
                let ca = &e.mats[a];
                let eye = CMat::identity(e.dim, e.dim);
                worst = worst.max((ca * ca.adjoint() - eye).norm());
                for b in 0..m {
                    worst = worst.max((ca * &e.mats[b] - &e.mats[g.mul(a, b)]).norm());
                }
            }
        }
        for e in &self.entries {
            for f in &self.entries {
                let s: Complex64 = (0..m).map(|h| e.character(h) * f.character(h).conj()).sum::<Complex64>() / m as f64;
                let want = if e.k == f.k { 1.0 } else { 0.0 };
                worst = worst.max((s - want).norm());
            }
        }
        let dsum: usize = self.entries.iter().map(|e| e.dim * e.dim).sum();
        if dsum != m {
            worst = f64::INFINITY;
        }
        worst
    }
}

/// Characters `χ_k(h) = exp(2πi Σⱼ kⱼhⱼ/Mⱼ)` of `Z_{M₁} × … × Z_{M_r}`.
/// Irrep ids use the same mixed-radix layout as group elements.
pub fn abelian_irreps(orders: &[usize]) -> IrrepCatalog {
    let m: usize = orders.iter().product();
    let split = |mut x: usize| {
        let mut d = vec![0; orders.len()];
        for i in (0..orders.len()).rev() {
            d[i] = x % orders[i];
            x /= orders[i];
        }
        d
    };
    let join = |d: &[usize]| d.iter().zip(orders).fold(0, |acc, (x, o)| acc * o + x);
    let entries = (0..m)
        .map(|k| {
            let dk = split(k);
            let neg: Vec<usize> = dk.iter().zip(orders).map(|(x, o)| (o - x) % o).collect();
            let partner = join(&neg);
            let mats = (0..m)
                .map(|h| {
                    let dh = split(h);
                    let phase: f64 = dk.iter().zip(&dh).zip(orders).map(|((a, b), o)| ((a * b) % o) as f64 / *o as f64).sum();
                    CMat::from_element(1, 1, Complex64::from_polar(1.0, 2.0 * PI * phase))
                })
                .collect();
            let kind = if k == 0 {
                IrrepKind::Trivial
            } else if partner == k {
                IrrepKind::Real
            } else {
                IrrepKind::ComplexPair
            };
            Irrep { k, dim: 1, kind, partner, mats }
        })
        .collect();
    IrrepCatalog { entries }
}

/// Irreps of `D_n` in the element layout of [`Group::dihedral`]: the 1-d
/// characters, then the real 2-d rotation/reflection representations
/// `ρ_ℓ(r) = rot(2πℓ/n)`, `ρ_ℓ(s) = diag(1, −1)` for `ℓ = 1..⌊(n−1)/2⌋`.
pub fn dihedral_irreps(n: usize) -> IrrepCatalog {
    let m = 2 * n;
    let one = |f: &dyn Fn(usize, usize) -> f64| -> Vec<CMat> {
        (0..m).map(|h| CMat::from_element(1, 1, Complex64::new(f(h % n, h / n), 0.0))).collect()
    };
    let sgn = |x: usize| if x % 2 == 0 { 1.0 } else { -1.0 };
    let mut mats1: Vec<Vec<CMat>> = vec![one(&|_, _| 1.0), one(&|_, x| sgn(x))];
    if n % 2 == 0 {
        mats1.push(one(&|j, _| sgn(j)));
        mats1.push(one(&|j, x| sgn(j + x)));
    }
    let mut entries: Vec<Irrep> = mats1
        .into_iter()
        .enumerate()
        .map(|(k, mats)| Irrep { k, dim: 1, kind: if k == 0 { IrrepKind::Trivial } else { IrrepKind::Real }, partner: k, mats })
        .collect();
    for l in 1..=(n - 1) / 2 {
        let k = entries.len();
        let mats = (0..m)
            .map(|h| {
                let (j, x) = (h % n, h / n);
                let th = 2.0 * PI * (l * j) as f64 / n as f64;
                let (c, s) = (th.cos(), th.sin());
                let refl = sgn(x);
                CMat::from_row_slice(
                    2,
                    2,
                    &[Complex64::new(c, 0.0), Complex64::new(-s * refl, 0.0), Complex64::new(s, 0.0), Complex64::new(c * refl, 0.0)],
                )
            })
            .collect();
        entries.push(Irrep { k, dim: 2, kind: IrrepKind::Real, partner: k, mats });
    }
    IrrepCatalog { entries }
}

/// Central idempotent `Π_k = (d_k/M) Σ_g conj(χ_k(g)) R_g`; entry `(b, a)`
/// is `(d_k/M)·conj(χ_k(b·a⁻¹))`.
pub fn isotypic_projector(catalog: &IrrepCatalog, k: usize, g: &Group) -> Result<CMat> {
    let e = catalog.get(k)?;
    let m = g.order();
    let s = e.dim as f64 / m as f64;
    let chars: Vec<Complex64> = (0..m).map(|h| e.character(h).conj() * s).collect();
    Ok(CMat::from_fn(m, m, |b, a| chars[g.mul(b, g.inv(a))]))
}

/// Real projector onto the isotypic component of a real irrep or of a
/// conjugate pair `k ⊕ k̄`.
pub fn real_projector(catalog: &IrrepCatalog, k: usize, g: &Group) -> Result<Mat> {
    let e = catalog.get(k)?;
    let mut p = isotypic_projector(catalog, k, g)?;
    if e.partner != e.k {
        p += isotypic_projector(catalog, e.partner, g)?;
    }
    Ok(p.map(|z| z.re))
}

/// Theoretical energy of a `σ(x) = x²` vertex sitting in irrep class `k`.
///
/// The cross term of `(u + v)²` is `2uv`, so a real irrep reaches
/// `M/(2d_k)` and a conjugate pair `M/(4d_k)`.
pub fn vertex_energy(catalog: &IrrepCatalog, k: usize, m: usize) -> Result<f64> {
    let e = catalog.get(k)?;
    let d = e.dim as f64;
    Ok(match e.kind {
        IrrepKind::Trivial => 0.0,
        IrrepKind::Real => m as f64 / (2.0 * d),
        IrrepKind::ComplexPair => m as f64 / (4.0 * d),
    })
}
