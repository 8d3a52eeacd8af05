//! Finite-dimensional linear operators, symmetric eigen-solvers and
//! restricted-injectivity constants.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vecops::{check_len, dot, norm};

const POWER_MAX_ITERS: usize = 100_000;
const POWER_REL_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Column count above which brute-force support enumeration is refused.
pub const RESTRICTED_MAX_COLS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct DenseRaw<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRaw<T>", bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct DenseOperator<T: Scalar> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> TryFrom<DenseRaw<T>> for DenseOperator<T> {
    type Error = Error;
    fn try_from(raw: DenseRaw<T>) -> Result<Self> {
        DenseOperator::new(raw.rows, raw.cols, raw.entries)
    }
}

impl<T: Scalar> DenseOperator<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("operator needs positive rows and cols".into()));
        }
        check_len(rows * cols, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite operator entry".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Domain("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut e = vec![T::zero(); n * n];
        for i in 0..n {
            e[i * n + i] = T::one();
        }
        Self { rows: n, cols: n, entries: e }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut e = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                e.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, entries: e }
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.cols, x.len())?;
        Ok(self.entries.chunks(self.cols).map(|row| dot(row, x)).collect())
    }

    pub fn adjoint_apply(&self, y: &[T]) -> Result<Vec<T>> {
        check_len(self.rows, y.len())?;
        let mut out = vec![T::zero(); self.cols];
        for (row, &yi) in self.entries.chunks(self.cols).zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * yi;
            }
        }
        Ok(out)
    }

    /// `A*A` as an explicit symmetric matrix. Entry (i, j) is the column dot
    /// product summed over rows in increasing order.
    pub fn gram(&self) -> SymMatrix<T> {
        let n = self.cols;
        let mut g = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = T::zero();
                for r in 0..self.rows {
                    s = s + self.get(r, i) * self.get(r, j);
                }
                g[i * n + j] = s;
                g[j * n + i] = s;
            }
        }
        SymMatrix { n, data: g }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == T::zero())
    }
}

/// Square diagonal operator `x -> (sigma_k x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiagonalRaw<T>", bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct DiagonalOperator<T: Scalar> {
    sigmas: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct DiagonalRaw<T> {
    sigmas: Vec<T>,
}

impl<T: Scalar> TryFrom<DiagonalRaw<T>> for DiagonalOperator<T> {
    type Error = Error;
    fn try_from(raw: DiagonalRaw<T>) -> Result<Self> {
        DiagonalOperator::new(raw.sigmas)
    }
}

impl<T: Scalar> DiagonalOperator<T> {
    pub fn new(sigmas: Vec<T>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Domain("diagonal operator needs at least one entry".into()));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= T::zero())) {
            return Err(Error::Domain("diagonal entries must be finite and nonnegative".into()));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.sigmas.len(), x.len())?;
        Ok(self.sigmas.iter().zip(x).map(|(&s, &v)| s * v).collect())
    }

    pub fn adjoint_apply(&self, y: &[T]) -> Result<Vec<T>> {
        self.apply(y)
    }
}

/// Data-fidelity operator: dense rectangular or diagonal square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum Operator<T: Scalar> {
    Dense(DenseOperator<T>),
    Diagonal(DiagonalOperator<T>),
}

impl<T: Scalar> From<DenseOperator<T>> for Operator<T> {
    fn from(d: DenseOperator<T>) -> Self {
        Operator::Dense(d)
    }
}

impl<T: Scalar> From<DiagonalOperator<T>> for Operator<T> {
    fn from(d: DiagonalOperator<T>) -> Self {
        Operator::Diagonal(d)
    }
}

impl<T: Scalar> Operator<T> {
    pub fn rows(&self) -> usize {
        match self {
            Operator::Dense(d) => d.rows(),
            Operator::Diagonal(d) => d.dim(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Operator::Dense(d) => d.cols(),
            Operator::Diagonal(d) => d.dim(),
        }
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        match self {
            Operator::Dense(d) => d.apply(x),
            Operator::Diagonal(d) => d.apply(x),
        }
    }

    pub fn adjoint_apply(&self, y: &[T]) -> Result<Vec<T>> {
        match self {
            Operator::Dense(d) => d.adjoint_apply(y),
            Operator::Diagonal(d) => d.adjoint_apply(y),
        }
    }

    pub fn gram_norm(&self) -> GramNorm<T> {
        gram_norm(self)
    }

    pub fn to_dense(&self) -> DenseOperator<T> {
        match self {
            Operator::Dense(d) => d.clone(),
            Operator::Diagonal(d) => {
                let n = d.dim();
                let mut e = vec![T::zero(); n * n];
                for (k, &s) in d.sigmas().iter().enumerate() {
                    e[k * n + k] = s;
                }
                DenseOperator { rows: n, cols: n, entries: e }
            }
        }
    }
}

/// Result of [`gram_norm`]. `zero` flags the zero operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct GramNorm<T: Scalar> {
    pub value: T,
    pub zero: bool,
    pub iterations: usize,
}

/// `||A*A||`, the largest eigenvalue of `A*A`. Exact for diagonal operators,
/// deterministic power iteration otherwise.
pub fn gram_norm<T: Scalar>(a: &Operator<T>) -> GramNorm<T> {
    match a {
        Operator::Diagonal(d) => {
            let v = d.sigmas().iter().fold(T::zero(), |m, &s| m.max(s * s));
            GramNorm { value: v, zero: v == T::zero(), iterations: 0 }
        }
        Operator::Dense(d) => {
            if d.is_zero() {
                return GramNorm { value: T::zero(), zero: true, iterations: 0 };
            }
            let n = d.cols();
            let start = vec![T::one() / T::lit(n as f64).sqrt(); n];
            let (mut rho, mut its) = power_iteration(d, start);
            // A start vector orthogonal to the top eigenvector converges to a
            // smaller eigenvalue; the largest column norm is a lower bound that
            // exposes this.
            let (jmax, dmax) = (0..n)
                .map(|j| (j, (0..d.rows()).map(|r| d.get(r, j) * d.get(r, j)).sum::<T>()))
                .fold((0, T::zero()), |acc, c| if c.1 > acc.1 { c } else { acc });
            if rho < dmax * (T::one() - T::tol(1e-9)) {
                let mut e = vec![T::zero(); n];
                e[jmax] = T::one();
                let (r2, i2) = power_iteration(d, e);
                rho = r2.max(dmax);
                its += i2;
            }
            GramNorm { value: rho, zero: false, iterations: its }
        }
    }
}

fn power_iteration<T: Scalar>(d: &DenseOperator<T>, mut v: Vec<T>) -> (T, usize) {
    let tol = T::tol(POWER_REL_TOL);
    let mut prev = T::zero();
    for it in 1..=POWER_MAX_ITERS {
        let w = d.adjoint_apply(&d.apply(&v).expect("dims")).expect("dims");
        let rho = dot(&v, &w);
        let nw = norm(&w);
        if nw == T::zero() {
            return (T::zero(), it);
        }
        v = w.iter().map(|&x| x / nw).collect();
        if it > 1 && (rho - prev).abs() <= tol * rho.abs() {
            return (rho, it);
        }
        prev = rho;
    }
    (prev, POWER_MAX_ITERS)
}

/// Dense symmetric matrix, row-major, both triangles stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymRaw<T>", bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SymMatrix<T: Scalar> {
    n: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct SymRaw<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<SymRaw<T>> for SymMatrix<T> {
    type Error = Error;
    fn try_from(raw: SymRaw<T>) -> Result<Self> {
        SymMatrix::new(raw.n, raw.data)
    }
}

impl<T: Scalar> SymMatrix<T> {
    /// Builds from a full row-major array; rejects asymmetric input.
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        check_len(n * n, data.len())?;
        let scale = data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (data[i * n + j] - data[j * n + i]).abs() > T::tol(1e-12) * (T::one() + scale) {
                    return Err(Error::Domain("matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        let mut data = vec![T::zero(); n * n];
        for (k, &v) in d.iter().enumerate() {
            data[k * n + k] = v;
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.n, x.len())?;
        Ok(self.data.chunks(self.n.max(1)).map(|row| dot(row, x)).collect())
    }

    pub fn quad_form(&self, x: &[T]) -> Result<T> {
        Ok(dot(x, &self.apply(x)?))
    }

    pub fn principal(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        Self { n: m, data }
    }
}

/// Eigen-decomposition with eigenvalues ascending; `vectors[i]` pairs with `values[i]`.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

/// Cyclic Jacobi eigen-decomposition. Sweeps until the off-diagonal
/// Frobenius norm drops below `1e-13` times the matrix norm.
pub fn sym_eigen<T: Scalar>(m: &SymMatrix<T>) -> SymEigen<T> {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let total = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let tol = T::tol(JACOBI_TOL) * total;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a[p * n + q] * a[p * n + q];
            }
        }
        if (off + off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).expect("finite eigenvalues"));
    SymEigen {
        values: order.iter().map(|&i| a[i * n + i]).collect(),
        vectors: order.iter().map(|&i| (0..n).map(|r| v[r * n + i]).collect()).collect(),
    }
}

/// Smallest eigenvalue; closed form up to size 3, Jacobi beyond.
pub fn sym_min_eig<T: Scalar>(m: &SymMatrix<T>) -> T {
    match m.n {
        0 => T::zero(),
        1 => m.get(0, 0),
        2 => {
            let (a, b, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
            let half = T::lit(0.5);
            (a + d) * half - ((a - d) * half).hypot(b)
        }
        3 => min_eig_3(m),
        _ => sym_eigen(m).values[0],
    }
}

/// Largest eigenvalue via Jacobi.
pub fn sym_max_eig<T: Scalar>(m: &SymMatrix<T>) -> T {
    if m.n == 0 {
        return T::zero();
    }
    *sym_eigen(m).values.last().expect("nonempty")
}

fn min_eig_3<T: Scalar>(m: &SymMatrix<T>) -> T {
    let (a11, a12, a13) = (m.get(0, 0), m.get(0, 1), m.get(0, 2));
    let (a22, a23, a33) = (m.get(1, 1), m.get(1, 2), m.get(2, 2));
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    if p1 == T::zero() {
        return a11.min(a22).min(a33);
    }
    let three = T::lit(3.0);
    let q = (a11 + a22 + a33) / three;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + (p1 + p1);
    let p = (p2 / T::lit(6.0)).sqrt();
    if p == T::zero() {
        return q;
    }
    let (b11, b22, b33) = ((a11 - q) / p, (a22 - q) / p, (a33 - q) / p);
    let (b12, b13, b23) = (a12 / p, a13 / p, a23 / p);
    let det = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) + b13 * (b12 * b23 - b22 * b13);
    let r = (det / T::lit(2.0)).max(-T::one()).min(T::one());
    let phi = r.acos() / three;
    let two_pi_3 = T::lit(2.0) * T::PI() / three;
    q + (p + p) * (phi + two_pi_3).cos()
}

/// Smallest eigenvalue of the principal submatrix of `s` on `idx`.
pub fn principal_min_eig<T: Scalar>(s: &SymMatrix<T>, idx: &[usize]) -> T {
    sym_min_eig(&s.principal(idx))
}

/// Sorted set of coordinate indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("support indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::Domain(format!("support index {last} out of range {n}")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Smallest eigenvalue of `(A_I)*(A_I)`.
pub fn support_min_eig<T: Scalar>(a: &DenseOperator<T>, support: &SupportSet) -> Result<T> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if support.indices().iter().any(|&i| i >= a.cols()) {
        return Err(Error::Domain("support index exceeds column count".into()));
    }
    let g = a.gram();
    Ok(principal_min_eig(&g, support.indices()).max(T::zero()))
}

/// `gamma_s`: minimum over supports of size `s` of the smallest restricted
/// Gram eigenvalue, together with a minimizing support.
pub fn restricted_min_eig_with_support<T: Scalar>(
    a: &DenseOperator<T>,
    s: usize,
) -> Result<(T, Vec<usize>)> {
    if a.cols() > RESTRICTED_MAX_COLS {
        return Err(Error::Capacity(format!(
            "{} columns exceed the brute-force limit of {RESTRICTED_MAX_COLS}",
            a.cols()
        )));
    }
    if s == 0 || s > a.cols() {
        return Err(Error::Domain(format!("sparsity {s} outside 1..={}", a.cols())));
    }
    let g = a.gram();
    restricted_min_eig_sym(&g, s)
}

pub(crate) fn restricted_min_eig_sym<T: Scalar>(g: &SymMatrix<T>, s: usize) -> Result<(T, Vec<usize>)> {
    if g.dim() > RESTRICTED_MAX_COLS {
        return Err(Error::Capacity(format!(
            "dimension {} exceeds the brute-force limit of {RESTRICTED_MAX_COLS}",
            g.dim()
        )));
    }
    let mut best = T::infinity();
    let mut arg = Vec::new();
    for idx in (0..g.dim()).combinations(s) {
        let e = principal_min_eig(g, &idx);
        if e < best {
            best = e;
            arg = idx;
        }
    }
    Ok((best.max(T::zero()), arg))
}

pub fn restricted_min_eig<T: Scalar>(a: &DenseOperator<T>, s: usize) -> Result<T> {
    restricted_min_eig_with_support(a, s).map(|(v, _)| v)
}

/// Diagonal of `(A*A)^nu`, with `0^(2 nu) := 0` for every `nu`.
pub fn spectral_power<T: Scalar>(d: &DiagonalOperator<T>, nu: T) -> DiagonalOperator<T> {
    let two_nu = nu + nu;
    DiagonalOperator {
        sigmas: d
            .sigmas()
            .iter()
            .map(|&s| if s > T::zero() { s.powf(two_nu) } else { T::zero() })
            .collect(),
    }
}

/// `A^dagger y` for diagonal `A`.
pub fn pinv_apply<T: Scalar>(d: &DiagonalOperator<T>, y: &[T]) -> Result<Vec<T>> {
    check_len(d.dim(), y.len())?;
    Ok(d.sigmas()
        .iter()
        .zip(y)
        .map(|(&s, &v)| if s > T::zero() { v / s } else { T::zero() })
        .collect())
}
