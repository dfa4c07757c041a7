//! Univariate polynomials over ℤ and over prime fields.
//!
//! Coefficient vectors are stored low degree first. Polynomials over F_p use
//! `i64` residues in `[0, p)` with trailing zeros trimmed.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::Zero;

use crate::linalg::{det, IMat};

pub type ZPoly = Vec<i128>;
pub type FpPoly = Vec<i64>;

pub fn trim_z(p: &mut ZPoly) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

pub fn degree_z(p: &[i128]) -> Option<usize> {
    p.iter().rposition(|c| *c != 0)
}

pub fn z_mul(a: &[i128], b: &[i128]) -> ZPoly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0i128; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim_z(&mut out);
    out
}

pub fn z_sub(a: &[i128], b: &[i128]) -> ZPoly {
    let mut out = vec![0i128; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] -= y;
    }
    trim_z(&mut out);
    out
}

pub fn z_eval(p: &[i128], x: i128) -> i128 {
    p.iter().rev().fold(0, |acc, c| acc * x + c)
}

pub fn z_derivative(p: &[i128]) -> ZPoly {
    let mut out: ZPoly = p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as i128)
        .collect();
    trim_z(&mut out);
    out
}

/// Exact division by a monic divisor; `None` if the remainder is nonzero.
pub fn z_div_exact_monic(a: &[i128], b: &[i128]) -> Option<ZPoly> {
    let db = degree_z(b)?;
    debug_assert_eq!(b[db], 1);
    let mut rem = a.to_vec();
    trim_z(&mut rem);
    if rem.is_empty() {
        return Some(Vec::new());
    }
    let da = rem.len() - 1;
    if da < db {
        return None;
    }
    let mut q = vec![0i128; da - db + 1];
    for i in (0..=da - db).rev() {
        let c = rem[i + db];
        q[i] = c;
        for (j, bj) in b.iter().enumerate().take(db + 1) {
            rem[i + j] -= c * bj;
        }
    }
    trim_z(&mut rem);
    rem.is_empty().then_some(q)
}

/// Resultant via the Sylvester determinant.
pub fn resultant(a: &[i128], b: &[i128]) -> i128 {
    let (Some(m), Some(n)) = (degree_z(a), degree_z(b)) else {
        return 0;
    };
    let size = m + n;
    if size == 0 {
        return 1;
    }
    let mut s: IMat = vec![vec![0; size]; size];
    for i in 0..n {
        for j in 0..=m {
            s[i][i + j] = a[m - j];
        }
    }
    for i in 0..m {
        for j in 0..=n {
            s[n + i][i + j] = b[n - j];
        }
    }
    det(&s)
}

/// Discriminant of a monic polynomial (up to sign, which is irrelevant here).
pub fn discriminant_monic(p: &[i128]) -> i128 {
    resultant(p, &z_derivative(p))
}

// ---------- F_p[x] ----------

pub fn fp_trim(p: &mut FpPoly) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

pub fn fp_reduce(p: &[i128], m: i64) -> FpPoly {
    let mut out: FpPoly = p.iter().map(|c| c.mod_floor(&(m as i128)) as i64).collect();
    fp_trim(&mut out);
    out
}

fn inv_mod(a: i64, p: i64) -> i64 {
    let e = i64::extended_gcd(&a.mod_floor(&p), &p);
    debug_assert_eq!(e.gcd, 1);
    e.x.mod_floor(&p)
}

pub fn fp_add(a: &[i64], b: &[i64], p: i64) -> FpPoly {
    let mut out = vec![0i64; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] = *x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] = (out[i] + y) % p;
    }
    fp_trim(&mut out);
    out
}

pub fn fp_sub(a: &[i64], b: &[i64], p: i64) -> FpPoly {
    let neg: FpPoly = b.iter().map(|y| (p - y) % p).collect();
    fp_add(a, &neg, p)
}

pub fn fp_mul(a: &[i64], b: &[i64], p: i64) -> FpPoly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0i64; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x * y) % p;
        }
    }
    fp_trim(&mut out);
    out
}

/// Quotient and remainder; `b` must be nonzero.
pub fn fp_divrem(a: &[i64], b: &[i64], p: i64) -> (FpPoly, FpPoly) {
    let db = b.len() - 1;
    let lead_inv = inv_mod(b[db], p);
    let mut rem = a.to_vec();
    fp_trim(&mut rem);
    if rem.len() < b.len() {
        return (Vec::new(), rem);
    }
    let mut q = vec![0i64; rem.len() - db];
    for i in (0..q.len()).rev() {
        let c = rem[i + db] * lead_inv % p;
        q[i] = c;
        if c != 0 {
            for (j, bj) in b.iter().enumerate() {
                rem[i + j] = (rem[i + j] - c * bj).rem_euclid(p);
            }
        }
    }
    fp_trim(&mut rem);
    fp_trim(&mut q);
    (q, rem)
}

pub fn fp_monic(a: &[i64], p: i64) -> FpPoly {
    match a.last() {
        None => Vec::new(),
        Some(&l) => {
            let inv = inv_mod(l, p);
            a.iter().map(|c| c * inv % p).collect()
        }
    }
}

pub fn fp_gcd(a: &[i64], b: &[i64], p: i64) -> FpPoly {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    fp_trim(&mut x);
    fp_trim(&mut y);
    while !y.is_empty() {
        let (_, r) = fp_divrem(&x, &y, p);
        x = y;
        y = r;
    }
    fp_monic(&x, p)
}

fn fp_powmod(base: &[i64], mut e: u128, m: &[i64], p: i64) -> FpPoly {
    let mut acc: FpPoly = vec![1];
    let mut b = fp_divrem(base, m, p).1;
    while e > 0 {
        if e & 1 == 1 {
            acc = fp_divrem(&fp_mul(&acc, &b, p), m, p).1;
        }
        e >>= 1;
        if e > 0 {
            b = fp_divrem(&fp_mul(&b, &b, p), m, p).1;
        }
    }
    acc
}

fn fp_derivative(a: &[i64], p: i64) -> FpPoly {
    let mut out: FpPoly = a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * (i as i64 % p) % p)
        .collect();
    fp_trim(&mut out);
    out
}

/// Factor a polynomial over F_p into monic irreducibles with multiplicities,
/// sorted by (degree, coefficients).
pub fn fp_factor(a: &[i64], p: i64) -> Vec<(FpPoly, u32)> {
    let f = fp_monic(a, p);
    if f.len() <= 1 {
        return Vec::new();
    }
    let deg = f.len() - 1;
    let mut out = if (p as f64).powi(deg as i32) <= 1e6 {
        factor_by_trial(&f, p)
    } else {
        factor_by_splitting(&f, p)
    };
    out.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
    out
}

fn factor_by_trial(f: &[i64], p: i64) -> Vec<(FpPoly, u32)> {
    let mut rest = f.to_vec();
    let mut out = Vec::new();
    let mut d = 1;
    while rest.len() > 1 && 2 * d <= rest.len() - 1 {
        for cand in monic_polys(d, p) {
            let mut mult = 0;
            loop {
                let (q, r) = fp_divrem(&rest, &cand, p);
                if !r.is_empty() {
                    break;
                }
                rest = q;
                mult += 1;
            }
            if mult > 0 {
                out.push((cand, mult));
            }
        }
        d += 1;
    }
    if rest.len() > 1 {
        out.push((rest, 1));
    }
    out
}

fn monic_polys(d: usize, p: i64) -> impl Iterator<Item = FpPoly> {
    let count = (p as u64).pow(d as u32);
    (0..count).map(move |mut idx| {
        let mut c = Vec::with_capacity(d + 1);
        for _ in 0..d {
            c.push((idx % p as u64) as i64);
            idx /= p as u64;
        }
        c.push(1);
        c
    })
}

fn factor_by_splitting(f: &[i64], p: i64) -> Vec<(FpPoly, u32)> {
    let mut out = Vec::new();
    for (sq, mult) in squarefree(f, p) {
        for (g, d) in distinct_degree(&sq, p) {
            for h in equal_degree(&g, d, p) {
                out.push((h, mult));
            }
        }
    }
    out
}

fn squarefree(f: &[i64], p: i64) -> Vec<(FpPoly, u32)> {
    let mut out = Vec::new();
    let df = fp_derivative(f, p);
    if df.is_empty() {
        // f = g(x^p)
        let g: FpPoly = f.iter().step_by(p as usize).copied().collect();
        for (h, m) in squarefree(&g, p) {
            out.push((h, m * p as u32));
        }
        return out;
    }
    let mut c = fp_gcd(f, &df, p);
    let mut w = fp_divrem(f, &c, p).0;
    let mut i = 1;
    while w.len() > 1 {
        let y = fp_gcd(&w, &c, p);
        let z = fp_divrem(&w, &y, p).0;
        if z.len() > 1 {
            out.push((z, i));
        }
        i += 1;
        w = y;
        c = fp_divrem(&c, &w, p).0;
    }
    if c.len() > 1 {
        let g: FpPoly = c.iter().step_by(p as usize).copied().collect();
        for (h, m) in squarefree(&g, p) {
            out.push((h, m * p as u32));
        }
    }
    out
}

fn distinct_degree(f: &[i64], p: i64) -> Vec<(FpPoly, usize)> {
    let mut out = Vec::new();
    let mut rest = f.to_vec();
    let x: FpPoly = vec![0, 1];
    let mut h = x.clone();
    let mut d = 1;
    while rest.len() > 1 && 2 * d <= rest.len() - 1 {
        h = fp_powmod(&h, p as u128, &rest, p);
        let g = fp_gcd(&rest, &fp_sub(&h, &x, p), p);
        if g.len() > 1 {
            rest = fp_divrem(&rest, &g, p).0;
            h = fp_divrem(&h, &rest, p).1;
            out.push((g, d));
        }
        d += 1;
    }
    if rest.len() > 1 {
        let d = rest.len() - 1;
        out.push((rest, d));
    }
    out
}

fn equal_degree(f: &[i64], d: usize, p: i64) -> Vec<FpPoly> {
    let n = f.len() - 1;
    if n == d {
        return vec![fp_monic(f, p)];
    }
    // Deterministic sweep over trial polynomials; p is odd on this path
    // because p = 2 always goes through trial division at desk-scale degrees.
    let mut seed: u64 = 1;
    loop {
        let mut t: FpPoly = (0..n)
            .map(|_| {
                seed = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((seed >> 33) % p as u64) as i64
            })
            .collect();
        fp_trim(&mut t);
        if t.len() <= 1 {
            continue;
        }
        let e = ((p as u128).pow(d as u32) - 1) / 2;
        let mut g = fp_powmod(&t, e, f, p);
        g = fp_sub(&g, &[1], p);
        let g = fp_gcd(f, &g, p);
        if g.len() > 1 && g.len() < f.len() {
            let other = fp_divrem(f, &g, p).0;
            let mut out = equal_degree(&g, d, p);
            out.extend(equal_degree(&other, d, p));
            return out;
        }
    }
}

/// Irreducibility of a monic integer polynomial over ℚ.
///
/// Degree patterns mod several good primes rule out factor degrees; anything
/// left undecided is settled by Kronecker's interpolation search.
pub fn is_irreducible_over_q(m: &[i128]) -> bool {
    let Some(n) = degree_z(m) else { return false };
    if n <= 1 {
        return n == 1;
    }
    let disc = discriminant_monic(m);
    if disc == 0 {
        return false;
    }
    // possible[k]: a factor of degree k is still conceivable
    let mut possible = vec![true; n];
    possible[0] = false;
    let mut tried = 0;
    for p in small_primes(400) {
        if disc % p as i128 == 0 {
            continue;
        }
        let degs: Vec<usize> = fp_factor(&fp_reduce(m, p), p)
            .iter()
            .flat_map(|(g, e)| std::iter::repeat(g.len() - 1).take(*e as usize))
            .collect();
        let sums = subset_sums(&degs, n);
        for (k, ok) in possible.iter_mut().enumerate() {
            *ok &= sums[k];
        }
        tried += 1;
        if !possible.iter().any(|x| *x) {
            return true;
        }
        if tried >= 12 {
            break;
        }
    }
    let candidates: Vec<usize> = (1..=n / 2).filter(|&k| possible[k] || possible[n - k]).collect();
    !candidates.iter().any(|&k| kronecker_has_factor(m, k))
}

fn subset_sums(degs: &[usize], n: usize) -> Vec<bool> {
    let mut can = vec![false; n + 1];
    can[0] = true;
    for &d in degs {
        for s in (d..=n).rev() {
            if can[s - d] {
                can[s] = true;
            }
        }
    }
    can
}

pub fn small_primes(bound: i64) -> Vec<i64> {
    (2..bound)
        .filter(|&q| (2..).take_while(|d| d * d <= q).all(|d| q % d != 0))
        .collect()
}

fn divisors(v: i128) -> Vec<i128> {
    let v = v.abs();
    let mut out = Vec::new();
    let mut i = 1i128;
    while i * i <= v {
        if v % i == 0 {
            out.push(i);
            if i * i != v {
                out.push(v / i);
            }
        }
        i += 1;
    }
    out.into_iter().flat_map(|d| [d, -d]).collect()
}

/// Search for a monic integer factor of degree `k` by interpolating through
/// divisors of m at k+1 points.
fn kronecker_has_factor(m: &[i128], k: usize) -> bool {
    let mut points = Vec::new();
    let mut x = 0i128;
    while points.len() < k {
        let v = z_eval(m, x);
        if v == 0 {
            return true;
        }
        points.push((x, divisors(v)));
        x = if x <= 0 { 1 - x } else { -x };
    }
    // k points plus the leading coefficient 1 determine a monic degree-k poly.
    let mut idx = vec![0usize; k];
    loop {
        let vals: Vec<(i128, i128)> = points
            .iter()
            .zip(&idx)
            .map(|((x, ds), &i)| (*x, ds[i]))
            .collect();
        if let Some(g) = monic_interpolate(&vals, k) {
            if z_div_exact_monic(m, &g).is_some() {
                return true;
            }
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return false;
            }
            idx[pos] += 1;
            if idx[pos] < points[pos].1.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Monic g of degree k with g(x_i) = y_i, if its coefficients are integral.
fn monic_interpolate(vals: &[(i128, i128)], k: usize) -> Option<ZPoly> {
    type R = Ratio<i128>;
    // g = x^k + h where h has degree < k and h(x_i) = y_i - x_i^k.
    let mut h = vec![R::zero(); k];
    for (i, &(xi, yi)) in vals.iter().enumerate() {
        let target = R::from_integer(yi - xi.pow(k as u32));
        let mut basis = vec![R::from_integer(1)];
        let mut denom = R::from_integer(1);
        for (j, &(xj, _)) in vals.iter().enumerate() {
            if j != i {
                let mut next = vec![R::zero(); basis.len() + 1];
                for (t, c) in basis.iter().enumerate() {
                    next[t + 1] += *c;
                    next[t] -= *c * R::from_integer(xj);
                }
                basis = next;
                denom *= R::from_integer(xi - xj);
            }
        }
        for (t, c) in basis.iter().enumerate() {
            h[t] += target * *c / denom;
        }
    }
    let mut g: ZPoly = Vec::with_capacity(k + 1);
    for c in h {
        if !c.is_integer() {
            return None;
        }
        g.push(c.to_integer());
    }
    g.push(1);
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_mod_small_primes() {
        // x^2 - 6 = x^2 mod 2 and mod 3
        assert_eq!(fp_factor(&fp_reduce(&[-6, 0, 1], 2), 2), vec![(vec![0, 1], 2)]);
        assert_eq!(fp_factor(&fp_reduce(&[-6, 0, 1], 3), 3), vec![(vec![0, 1], 2)]);
        // x^2 + 1 mod 5 = (x - 2)(x - 3)
        assert_eq!(
            fp_factor(&fp_reduce(&[1, 0, 1], 5), 5),
            vec![(vec![2, 1], 1), (vec![3, 1], 1)]
        );
    }

    #[test]
    fn splitting_agrees_with_trial() {
        let p = 1009;
        // (x - 3)^2 (x^2 + 1)(x + 5) mod 1009
        let f = fp_mul(
            &fp_mul(&fp_mul(&[p - 3, 1], &[p - 3, 1], p), &[1, 0, 1], p),
            &[5, 1],
            p,
        );
        let mut a = factor_by_splitting(&f, p);
        a.sort();
        let expect_deg: Vec<usize> = a.iter().map(|(g, _)| g.len() - 1).collect();
        let total: usize = a.iter().map(|(g, e)| (g.len() - 1) * *e as usize).sum();
        assert_eq!(total, 5);
        assert!(expect_deg.contains(&1));
        let prod = a.iter().fold(vec![1i64], |acc, (g, e)| {
            (0..*e).fold(acc, |acc, _| fp_mul(&acc, g, p))
        });
        assert_eq!(prod, f);
    }

    #[test]
    fn irreducibility() {
        assert!(is_irreducible_over_q(&[-2, 1]));
        assert!(is_irreducible_over_q(&[-6, 0, 1]));
        assert!(!is_irreducible_over_q(&[-4, 0, 1]));
        // x^4 + 1 is reducible mod every prime but irreducible over Q
        assert!(is_irreducible_over_q(&[1, 0, 0, 0, 1]));
        // (x^2 + 1)(x^2 + 2)
        assert!(!is_irreducible_over_q(&[2, 0, 3, 0, 1]));
    }

    #[test]
    fn resultant_gives_discriminant() {
        // disc(x^2 - 6) = 24 up to sign
        assert_eq!(discriminant_monic(&[-6, 0, 1]).abs(), 24);
    }
}
