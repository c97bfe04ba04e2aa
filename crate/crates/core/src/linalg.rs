//! Exact sparse integer elimination and small rational solves.

use std::collections::HashMap;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Sparse row: (column, value) pairs sorted by column, no zeros.
pub type SparseRow<T> = Vec<(usize, T)>;

/// Integer type usable for fraction-free elimination.
pub trait ExactInt: Clone + Debug + PartialEq {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn neg(&self) -> Self;
    /// a*x - b*y, or None on overflow.
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self>;
    fn gcd(&self, other: &Self) -> Self;
    fn div_exact(&self, d: &Self) -> Self;
    fn is_one(&self) -> bool;
}

impl ExactInt for i128 {
    fn zero() -> Self {
        0
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn is_negative(&self) -> bool {
        *self < 0
    }
    fn neg(&self) -> Self {
        -*self
    }
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        a.checked_mul(*x)?.checked_sub(b.checked_mul(*y)?)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, d: &Self) -> Self {
        self / d
    }
    fn is_one(&self) -> bool {
        *self == 1
    }
}

impl ExactInt for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        Some(a * x - b * y)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, d: &Self) -> Self {
        self / d
    }
    fn is_one(&self) -> bool {
        One::is_one(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow;

/// Row space in echelon form: every stored row has a distinct leading column.
#[derive(Clone, Debug)]
pub struct Echelon<T> {
    rows: HashMap<usize, SparseRow<T>>,
}

impl<T: ExactInt> Default for Echelon<T> {
    fn default() -> Self {
        Echelon { rows: HashMap::new() }
    }
}

fn normalize<T: ExactInt>(v: &mut SparseRow<T>) {
    if v.is_empty() {
        return;
    }
    let mut g = v[0].1.clone();
    for (_, x) in v.iter().skip(1) {
        if g.is_one() {
            break;
        }
        g = g.gcd(x);
    }
    let g = if g.is_negative() { g.neg() } else { g };
    let flip = v[0].1.is_negative();
    if !g.is_one() || flip {
        let g = if flip { g.neg() } else { g };
        for (_, x) in v.iter_mut() {
            *x = x.div_exact(&g);
        }
    }
}

// pb*v - a*b where a is v's leading value and pb the pivot of b
fn eliminate<T: ExactInt>(v: &SparseRow<T>, b: &SparseRow<T>) -> Result<SparseRow<T>, Overflow> {
    let a = &v[0].1;
    let pb = &b[0].1;
    let g = a.gcd(pb);
    let (a, pb) = (a.div_exact(&g), pb.div_exact(&g));
    let zero = T::zero();
    let mut out = Vec::with_capacity(v.len() + b.len());
    let (mut i, mut j) = (1, 1);
    while i < v.len() || j < b.len() {
        let (c, x, y) = match (v.get(i), b.get(j)) {
            (Some((ci, xi)), Some((cj, yj))) if ci == cj => {
                i += 1;
                j += 1;
                (*ci, xi, yj)
            }
            (Some((ci, xi)), Some((cj, _))) if ci < cj => {
                i += 1;
                (*ci, xi, &zero)
            }
            (Some((ci, xi)), None) => {
                i += 1;
                (*ci, xi, &zero)
            }
            (_, Some((cj, yj))) => {
                j += 1;
                (*cj, &zero, yj)
            }
            (None, None) => unreachable!(),
        };
        let val = T::mul_sub(&pb, x, &a, y).ok_or(Overflow)?;
        if !val.is_zero() {
            out.push((c, val));
        }
    }
    normalize(&mut out);
    Ok(out)
}

impl<T: ExactInt> Echelon<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Leading-term reduction; the result is empty iff `v` lies in the row space.
    pub fn reduce(&self, mut v: SparseRow<T>) -> Result<SparseRow<T>, Overflow> {
        normalize(&mut v);
        while let Some(&(c, _)) = v.first() {
            match self.rows.get(&c) {
                Some(b) => v = eliminate(&v, b)?,
                None => break,
            }
        }
        Ok(v)
    }

    /// Adds `v`; returns whether it increased the rank.
    pub fn insert(&mut self, v: SparseRow<T>) -> Result<bool, Overflow> {
        let r = self.reduce(v)?;
        match r.first() {
            None => Ok(false),
            Some(&(c, _)) => {
                self.rows.insert(c, r);
                Ok(true)
            }
        }
    }

    pub fn contains(&self, v: SparseRow<T>) -> Result<bool, Overflow> {
        Ok(self.reduce(v)?.is_empty())
    }

    pub fn pivots(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.rows.keys().copied().collect();
        p.sort_unstable();
        p
    }
}

pub fn to_big(v: &SparseRow<i128>) -> SparseRow<BigInt> {
    v.iter().map(|(c, x)| (*c, BigInt::from(*x))).collect()
}

/// Row space that transparently switches to arbitrary precision on overflow.
#[derive(Clone, Debug)]
pub enum RowSpace {
    Small(Echelon<i128>, Vec<SparseRow<i128>>),
    Big(Echelon<BigInt>),
}

impl Default for RowSpace {
    fn default() -> Self {
        RowSpace::Small(Echelon::new(), Vec::new())
    }
}

impl RowSpace {
    pub fn new() -> Self {
        Self::default()
    }

    fn promote(&mut self) {
        if let RowSpace::Small(_, history) = self {
            let mut big = Echelon::new();
            for r in history.iter() {
                big.insert(to_big(r)).expect("bigint never overflows");
            }
            *self = RowSpace::Big(big);
        }
    }

    pub fn insert(&mut self, v: &SparseRow<i128>) -> bool {
        if let RowSpace::Small(e, history) = self {
            match e.insert(v.clone()) {
                Ok(added) => {
                    if added {
                        history.push(v.clone());
                    }
                    return added;
                }
                Err(Overflow) => self.promote(),
            }
        }
        match self {
            RowSpace::Big(e) => e.insert(to_big(v)).expect("bigint"),
            RowSpace::Small(..) => unreachable!(),
        }
    }

    pub fn contains(&mut self, v: &SparseRow<i128>) -> bool {
        if let RowSpace::Small(e, _) = self {
            match e.contains(v.clone()) {
                Ok(c) => return c,
                Err(Overflow) => self.promote(),
            }
        }
        match self {
            RowSpace::Big(e) => e.contains(to_big(v)).expect("bigint"),
            RowSpace::Small(..) => unreachable!(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            RowSpace::Small(e, _) => e.rank(),
            RowSpace::Big(e) => e.rank(),
        }
    }

    pub fn pivots(&self) -> Vec<usize> {
        match self {
            RowSpace::Small(e, _) => e.pivots(),
            RowSpace::Big(e) => e.pivots(),
        }
    }
}

/// Exact rank of a set of integer rows.
pub fn rank(rows: &[SparseRow<i128>]) -> usize {
    let mut s = RowSpace::new();
    for r in rows {
        s.insert(r);
    }
    s.rank()
}

/// Solves `sum_i c_i vectors[i] = target` exactly. Returns `None` when `target`
/// is outside the span. Free coefficients are set to zero.
pub fn solve_combination(vectors: &[SparseRow<BigRational>], target: &SparseRow<BigRational>) -> Option<Vec<BigRational>> {
    let mut cols: Vec<usize> = vectors.iter().flatten().map(|(c, _)| *c).chain(target.iter().map(|(c, _)| *c)).collect();
    cols.sort_unstable();
    cols.dedup();
    let pos: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let k = vectors.len();
    // augmented matrix: one equation per column
    let mut m = vec![vec![BigRational::zero(); k + 1]; cols.len()];
    for (j, v) in vectors.iter().enumerate() {
        for (c, x) in v {
            m[pos[c]][j] = x.clone();
        }
    }
    for (c, x) in target {
        m[pos[c]][k] = x.clone();
    }
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..k {
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..=k {
                    let t = &m[row][c] * &f;
                    m[r][c] = &m[r][c] - t;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    if m[row..].iter().any(|r| !r[k].is_zero()) {
        return None;
    }
    let mut x = vec![BigRational::zero(); k];
    for (r, &c) in pivot_cols.iter().enumerate() {
        x[c] = m[r][k].clone();
    }
    Some(x)
}

pub fn big_to_f64(x: &BigRational) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}
