//! Dense integer and rational matrices over `i128`.
//!
//! Matrices are `Vec<Vec<_>>` in row-major order. Lattices are always row
//! spans, matching the row-vector convention used by the rest of the crate.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Q = Ratio<i128>;
pub type IMat = Vec<Vec<i128>>;
pub type QMat = Vec<Vec<Q>>;

pub fn identity(n: usize) -> IMat {
    (0..n)
        .map(|i| (0..n).map(|j| i128::from(i == j)).collect())
        .collect()
}

pub fn q_identity(n: usize) -> QMat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect())
        .collect()
}

pub fn to_rational(m: &IMat) -> QMat {
    m.iter()
        .map(|r| r.iter().map(|&x| Q::from_integer(x)).collect())
        .collect()
}

/// Returns the integer matrix if every entry of `m` is integral.
pub fn to_integer(m: &QMat) -> Option<IMat> {
    m.iter()
        .map(|r| {
            r.iter()
                .map(|x| x.is_integer().then(|| x.to_integer()))
                .collect()
        })
        .collect()
}

pub fn mat_mul(a: &IMat, b: &IMat) -> IMat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn q_mat_mul(a: &QMat, b: &QMat) -> QMat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    (0..inner).fold(Q::zero(), |acc, k| acc + row[k] * b[k][j])
                })
                .collect()
        })
        .collect()
}

pub fn vec_mat(v: &[i128], m: &IMat) -> Vec<i128> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| v.iter().zip(m).map(|(x, row)| x * row[j]).sum())
        .collect()
}

pub fn q_vec_mat(v: &[Q], m: &QMat) -> Vec<Q> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| {
            v.iter()
                .zip(m)
                .fold(Q::zero(), |acc, (x, row)| acc + *x * row[j])
        })
        .collect()
}

pub fn mat_pow(m: &IMat, mut e: u32) -> IMat {
    let mut base = m.clone();
    let mut acc = identity(m.len());
    while e > 0 {
        if e & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul(&base, &base);
        }
    }
    acc
}

pub fn scale(m: &IMat, c: i128) -> IMat {
    m.iter()
        .map(|r| r.iter().map(|x| x * c).collect())
        .collect()
}

/// Determinant by fraction-free Bareiss elimination.
pub fn det(m: &IMat) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a = m.clone();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Inverse over ℚ by Gauss–Jordan; `None` when singular.
pub fn q_inverse(m: &QMat) -> Option<QMat> {
    let n = m.len();
    let mut a: QMat = m.clone();
    let mut inv = q_identity(n);
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(piv, col);
        inv.swap(piv, col);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for j in 0..n {
                    let (ac, ic) = (a[col][j], inv[col][j]);
                    a[r][j] -= f * ac;
                    inv[r][j] -= f * ic;
                }
            }
        }
    }
    Some(inv)
}

/// Characteristic polynomial `det(xI − M)` as `[c0, .., c_{n-1}]` (monic, leading
/// coefficient omitted), via Faddeev–LeVerrier over ℚ.
pub fn char_poly(m: &IMat) -> Vec<i128> {
    let n = m.len();
    let a = to_rational(m);
    let mut coeffs = vec![Q::zero(); n + 1];
    coeffs[n] = Q::one();
    let mut mk = q_identity(n);
    for k in 1..=n {
        let am = q_mat_mul(&a, &mk);
        let trace = (0..n).fold(Q::zero(), |acc, i| acc + am[i][i]);
        let c = -trace / Q::from_integer(k as i128);
        coeffs[n - k] = c;
        mk = am;
        for i in 0..n {
            mk[i][i] += c;
        }
    }
    coeffs[..n].iter().map(|c| c.to_integer()).collect()
}

/// Row Hermite normal form: upper triangular, positive pivots, entries above each
/// pivot reduced into `[0, pivot)`. Zero rows are dropped.
pub fn hnf(rows: &IMat) -> IMat {
    hnf_with_transform(rows).0
}

/// Row HNF together with a unimodular `U` such that `U · rows` equals the HNF
/// stacked over zero rows. The returned HNF has the zero rows removed.
pub fn hnf_with_transform(rows: &IMat) -> (IMat, IMat) {
    let m = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    let mut a = rows.clone();
    let mut u = identity(m);
    let mut r = 0;
    for c in 0..cols {
        if r == m {
            break;
        }
        // Euclid down the column until a single nonzero entry remains at row r.
        loop {
            let piv = (r..m)
                .filter(|&i| a[i][c] != 0)
                .min_by_key(|&i| a[i][c].abs());
            let Some(piv) = piv else { break };
            a.swap(r, piv);
            u.swap(r, piv);
            let mut done = true;
            for i in r + 1..m {
                if a[i][c] != 0 {
                    let q = Integer::div_floor(&a[i][c], &a[r][c]);
                    row_axpy(&mut a, i, r, q);
                    row_axpy(&mut u, i, r, q);
                    if a[i][c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if a[r][c] == 0 {
            continue;
        }
        if a[r][c] < 0 {
            a[r].iter_mut().for_each(|x| *x = -*x);
            u[r].iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..r {
            let q = Integer::div_floor(&a[i][c], &a[r][c]);
            if q != 0 {
                row_axpy(&mut a, i, r, q);
                row_axpy(&mut u, i, r, q);
            }
        }
        r += 1;
    }
    a.truncate(r);
    (a, u)
}

// row[i] -= q * row[j]
fn row_axpy(a: &mut IMat, i: usize, j: usize, q: i128) {
    let src = a[j].clone();
    for (x, y) in a[i].iter_mut().zip(src) {
        *x -= q * y;
    }
}

/// Reduce `v` into the half-open fundamental box of a square upper-triangular
/// HNF basis.
pub fn reduce_mod_hnf(v: &[i128], h: &IMat) -> Vec<i128> {
    let mut v = v.to_vec();
    for (i, row) in h.iter().enumerate() {
        let q = Integer::div_floor(&v[i], &row[i]);
        if q != 0 {
            for (x, y) in v.iter_mut().zip(row) {
                *x -= q * y;
            }
        }
    }
    v
}

/// Rational version of [`reduce_mod_hnf`]; the box is scale invariant so the
/// result does not depend on how the lattice was scaled to integers.
pub fn q_reduce_mod_hnf(v: &[Q], h: &QMat) -> Vec<Q> {
    let mut v = v.to_vec();
    for (i, row) in h.iter().enumerate() {
        let q = (v[i] / row[i]).floor();
        if !q.is_zero() {
            for (x, y) in v.iter_mut().zip(row) {
                *x -= q * y;
            }
        }
    }
    v
}

/// Solve `x · H = v` for integer `x` with `H` square upper triangular; `None`
/// when `v` is outside the lattice.
pub fn solve_upper(v: &[i128], h: &IMat) -> Option<Vec<i128>> {
    let n = h.len();
    let mut rest = v.to_vec();
    let mut x = vec![0i128; n];
    for i in 0..n {
        if rest[i] % h[i][i] != 0 {
            return None;
        }
        let q = rest[i] / h[i][i];
        x[i] = q;
        for j in i..rest.len() {
            rest[j] -= q * h[i][j];
        }
    }
    rest.iter().all(|r| *r == 0).then_some(x)
}

/// Express `v` as an integer combination of the rows of `basis` (any shape).
pub fn solve_integer_combination(v: &[i128], basis: &IMat) -> Option<Vec<i128>> {
    let (h, u) = hnf_with_transform(basis);
    let cols = basis.first().map_or(0, Vec::len);
    if h.len() != cols {
        // Rank-deficient inputs never arise here; treat as unsolvable.
        return None;
    }
    let y = solve_upper(v, &h)?;
    let mut coeffs = vec![0i128; basis.len()];
    for (k, yk) in y.iter().enumerate() {
        for (c, uk) in coeffs.iter_mut().zip(&u[k]) {
            *c += yk * uk;
        }
    }
    Some(coeffs)
}

/// Smith normal form diagonal (invariant factors, nonnegative, zeros last).
pub fn snf_diagonal(m: &IMat) -> Vec<i128> {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut diag = Vec::new();
    for t in 0..rows.min(cols) {
        loop {
            let piv = (t..rows)
                .flat_map(|i| (t..cols).map(move |j| (i, j)))
                .filter(|&(i, j)| a[i][j] != 0)
                .min_by_key(|&(i, j)| a[i][j].abs());
            let Some((pi, pj)) = piv else {
                diag.resize(rows.min(cols), 0);
                return diag;
            };
            a.swap(t, pi);
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
            let p = a[t][t];
            let mut clean = true;
            for i in t + 1..rows {
                let q = Integer::div_floor(&a[i][t], &p);
                row_axpy(&mut a, i, t, q);
                clean &= a[i][t] == 0;
            }
            for j in t + 1..cols {
                let q = Integer::div_floor(&a[t][j], &p);
                for row in a.iter_mut() {
                    row[j] -= q * row[t];
                }
                clean &= a[t][j] == 0;
            }
            if !clean {
                continue;
            }
            // Enforce divisibility of the remaining block.
            let bad = (t + 1..rows)
                .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
                .find(|&(i, j)| a[i][j] % p != 0);
            match bad {
                Some((i, _)) => {
                    let src = a[i].clone();
                    for (x, y) in a[t].iter_mut().zip(src) {
                        *x += y;
                    }
                }
                None => break,
            }
        }
        diag.push(a[t][t].abs());
    }
    diag
}

pub fn q_vec_is_integral(v: &[Q]) -> bool {
    v.iter().all(|x| x.is_integer())
}

/// Least common multiple of the denominators.
pub fn common_denominator(v: &[Q]) -> i128 {
    v.iter().fold(1i128, |acc, x| acc.lcm(x.denom()))
}

pub fn abs_max(m: &IMat) -> i128 {
    m.iter().flatten().map(|x| x.abs()).max().unwrap_or(0)
}

pub fn q_to_f64(x: &Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}
