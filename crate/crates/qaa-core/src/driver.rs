//! Random 3-bit clause drivers `H_E = sum_{i<j<k} A_{(ijk)}`.
//!
//! A clause matrix `A` is a real symmetric 8x8 matrix with zero diagonal acting
//! on the configurations of one bit triple. Configurations are indexed by
//! `c = 4 b1 + 2 b2 + b3`, where bit value 0 is written `+` and 1 is `-`, giving
//! the order `+++, ++-, +-+, +--, -++, -+-, --+, ---`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QaaError, Result};
use crate::problem::spin_l;
use crate::spin_algebra::{build_nz, sym_poly, sym_poly_basis, GammaCoefficients, SubspaceOperator};

/// Number of independent entries (strict upper triangle) of a clause matrix.
pub const N_ENTRIES: usize = 28;

/// Strict upper-triangle index pairs in row-major order.
pub const UPPER_PAIRS: [(usize, usize); N_ENTRIES] = {
    let mut out = [(0, 0); N_ENTRIES];
    let mut k = 0;
    let mut r = 0;
    while r < 8 {
        let mut s = r + 1;
        while s < 8 {
            out[k] = (r, s);
            k += 1;
            s += 1;
        }
        r += 1;
    }
    out
};

/// Human-readable label of configuration `c`, e.g. `"+-+"`.
pub fn config_label(c: usize) -> String {
    (0..3).map(|i| if (c >> (2 - i)) & 1 == 0 { '+' } else { '-' }).collect()
}

fn ones(c: usize) -> usize {
    (c & 7).count_ones() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EntriesSpec", into = "EntriesSpec")]
pub struct DriverMatrix {
    a: [[f64; 8]; 8],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntriesSpec {
    entries: Vec<f64>,
}

impl TryFrom<EntriesSpec> for DriverMatrix {
    type Error = QaaError;
    fn try_from(s: EntriesSpec) -> Result<Self> {
        let upper: [f64; N_ENTRIES] = s.entries.as_slice().try_into().map_err(|_| {
            QaaError::InvalidInput(format!("driver needs {N_ENTRIES} entries, got {}", s.entries.len()))
        })?;
        DriverMatrix::from_upper(upper)
    }
}

impl From<DriverMatrix> for EntriesSpec {
    fn from(d: DriverMatrix) -> Self {
        EntriesSpec { entries: d.upper().to_vec() }
    }
}

impl DriverMatrix {
    pub const ZERO: DriverMatrix = DriverMatrix { a: [[0.0; 8]; 8] };

    pub fn from_upper(upper: [f64; N_ENTRIES]) -> Result<Self> {
        if upper.iter().any(|x| !x.is_finite()) {
            return Err(QaaError::InvalidInput("driver entries must be finite".into()));
        }
        let mut a = [[0.0; 8]; 8];
        for (&(r, s), &v) in UPPER_PAIRS.iter().zip(upper.iter()) {
            a[r][s] = v;
            a[s][r] = v;
        }
        Ok(DriverMatrix { a })
    }

    pub fn upper(&self) -> [f64; N_ENTRIES] {
        let mut out = [0.0; N_ENTRIES];
        for (k, &(r, s)) in UPPER_PAIRS.iter().enumerate() {
            out[k] = self.a[r][s];
        }
        out
    }

    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.a[r][s]
    }

    pub fn entries(&self) -> &[[f64; 8]; 8] {
        &self.a
    }

    pub fn max_abs(&self) -> f64 {
        self.upper().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Elementary symmetric matrix with a single unit pair at upper index `k`.
    pub fn unit(k: usize) -> Self {
        let mut u = [0.0; N_ENTRIES];
        u[k] = 1.0;
        DriverMatrix::from_upper(u).expect("finite")
    }

    pub fn add(&self, other: &DriverMatrix) -> Self {
        let mut a = self.a;
        for (row, orow) in a.iter_mut().zip(other.a.iter()) {
            for (x, y) in row.iter_mut().zip(orow.iter()) {
                *x += y;
            }
        }
        DriverMatrix { a }
    }

    /// Average over the six relabelings of the three clause bits. The weight
    /// basis only sees this part: `P H_E(A) P = H_E(sym(A))` restricted to the
    /// symmetric subspace, and `H_E(sym(A))` leaves that subspace invariant.
    pub fn bit_symmetrized(&self) -> Self {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let permute = |c: usize, p: &[usize; 3]| (0..3).fold(0, |acc, i| acc | (bit(c, i) << (2 - p[i])));
        let mut a = [[0.0; 8]; 8];
        for p in &PERMS {
            for (r, row) in a.iter_mut().enumerate() {
                for (s, x) in row.iter_mut().enumerate() {
                    *x += self.a[permute(r, p)][permute(s, p)] / 6.0;
                }
            }
        }
        DriverMatrix { a }
    }

    /// Relabels `+ <-> -` on all three bits (`c -> 7 - c`).
    pub fn complemented(&self) -> Self {
        let mut a = [[0.0; 8]; 8];
        for (r, row) in a.iter_mut().enumerate() {
            for (s, x) in row.iter_mut().enumerate() {
                *x = self.a[7 - r][7 - s];
            }
        }
        DriverMatrix { a }
    }
}

/// Uniform i.i.d. entries on `[-l, l]` from a seeded ChaCha20 stream.
pub fn sample_a(l: f64, seed: u64) -> Result<DriverMatrix> {
    sample_a_stream(l, seed, 0)
}

/// As [`sample_a`], on an independent stream; used to give every Monte-Carlo
/// sample its own generator regardless of worker scheduling.
pub fn sample_a_stream(l: f64, seed: u64, stream: u64) -> Result<DriverMatrix> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(QaaError::InvalidInput(format!("entry range must be positive, got {l}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut upper = [0.0; N_ENTRIES];
    for x in upper.iter_mut() {
        *x = rng.random_range(-l..=l);
    }
    DriverMatrix::from_upper(upper)
}

/// Operator-level parameterization of a clause matrix by the number of bits a
/// transition flips. Indices: bits `alpha = 0, 1, 2`; bit pairs in the order
/// `(0,1), (0,2), (1,2)`; spin-projection conditions `+` (bit 0) before `-`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClauseParams {
    /// `sigma^x` on bit `alpha`, conditioned on the two other bits (in bit
    /// order) being `++, +-, -+, --`.
    pub single: [[f64; 4]; 3],
    /// `sigma+ sigma+ + sigma- sigma-` on a pair, conditioned on the third bit.
    pub double_same: [[f64; 2]; 3],
    /// `sigma+ sigma- + sigma- sigma+` on a pair, conditioned on the third bit.
    pub double_opposite: [[f64; 2]; 3],
    /// `s1+ s2+ s3+ + h.c.`
    pub b: f64,
    /// `s1+ s2+ s3- + h.c.`
    pub c: f64,
    /// `s1- s2+ s3+ + h.c.`
    pub d: f64,
    /// `s1+ s2- s3+ + h.c.`
    pub e: f64,
}

const PAIRS: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];

impl ClauseParams {
    /// Product form `a_alpha b_{ss'}`, `a_{alpha beta} b_s`, `~a_{alpha beta} ~b_s`.
    #[allow(clippy::too_many_arguments)]
    pub fn factorized(
        a: [f64; 3],
        b_ss: [f64; 4],
        a_pair: [f64; 3],
        b_s: [f64; 2],
        at_pair: [f64; 3],
        bt_s: [f64; 2],
        bcde: [f64; 4],
    ) -> Self {
        let mut p = ClauseParams { b: bcde[0], c: bcde[1], d: bcde[2], e: bcde[3], ..Default::default() };
        for al in 0..3 {
            for k in 0..4 {
                p.single[al][k] = a[al] * b_ss[k];
            }
        }
        for pr in 0..3 {
            for s in 0..2 {
                p.double_same[pr][s] = a_pair[pr] * b_s[s];
                p.double_opposite[pr][s] = at_pair[pr] * bt_s[s];
            }
        }
        p
    }

    /// The deterministic `sigma^x sigma^z`-type driver: `a_alpha = 1`,
    /// `b_{++} = -b_{--} = -2`, everything else zero.
    pub fn farhi() -> Self {
        ClauseParams::factorized([1.0; 3], [-2.0, 0.0, 0.0, 2.0], [0.0; 3], [0.0; 2], [0.0; 3], [0.0; 2], [0.0; 4])
    }
}

fn bit(c: usize, i: usize) -> usize {
    (c >> (2 - i)) & 1
}

fn mask(i: usize) -> usize {
    1 << (2 - i)
}

/// Assembles `A` by applying the flip operators to each configuration.
pub fn parametrized_a(p: &ClauseParams) -> Result<DriverMatrix> {
    let mut a = [[0.0; 8]; 8];
    for c in 0..8 {
        for al in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&i| i != al).collect();
            let cond = 2 * bit(c, others[0]) + bit(c, others[1]);
            a[c ^ mask(al)][c] += p.single[al][cond];
        }
        for (pr, &(i, j, k)) in PAIRS.iter().enumerate() {
            let s = bit(c, k);
            let flipped = c ^ mask(i) ^ mask(j);
            if bit(c, i) == bit(c, j) {
                a[flipped][c] += p.double_same[pr][s];
            } else {
                a[flipped][c] += p.double_opposite[pr][s];
            }
        }
    }
    for (coef, (x, y)) in [(p.b, (0, 7)), (p.c, (1, 6)), (p.d, (3, 4)), (p.e, (2, 5))] {
        a[x][y] += coef;
        a[y][x] += coef;
    }
    let mut upper = [0.0; N_ENTRIES];
    for (k, &(r, s)) in UPPER_PAIRS.iter().enumerate() {
        if a[r][s] != a[s][r] {
            return Err(QaaError::Numerical("assembled clause matrix is not symmetric".into()));
        }
        upper[k] = a[r][s];
    }
    DriverMatrix::from_upper(upper)
}

fn check_triple_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(QaaError::InvalidInput(format!("3-bit clauses need n >= 3, got {n}")));
    }
    Ok(())
}

/// Largest `n` accepted by the dense `2^n` oracle.
pub const DENSE_MAX_N: usize = 14;

/// Dense oracle: applies the clause operator on every triple of the full
/// `2^n` space to each symmetric basis vector and projects back. Also returns
/// the largest norm of the component leaking out of the symmetric subspace,
/// which vanishes only when `A` is invariant under relabeling the clause bits.
pub fn build_he_dense_with_leakage(a: &DriverMatrix, n: usize) -> Result<(SubspaceOperator, f64)> {
    check_triple_n(n)?;
    if n > DENSE_MAX_N {
        return Err(QaaError::InvalidInput(format!("dense oracle limited to n <= {DENSE_MAX_N}, got {n}")));
    }
    let dim = 1usize << n;
    let weight: Vec<usize> = (0..dim).map(|z: usize| z.count_ones() as usize).collect();
    let mut count = vec![0usize; n + 1];
    for &w in &weight {
        count[w] += 1;
    }
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                triples.push([i, j, k]);
            }
        }
    }
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let mut leakage = 0.0_f64;
    let mut y = vec![0.0; dim];
    for w in 0..=n {
        y.iter_mut().for_each(|v| *v = 0.0);
        let amp = 1.0 / (count[w] as f64).sqrt();
        for z in (0..dim).filter(|&z| weight[z] == w) {
            for t in &triples {
                let c = t.iter().fold(0, |acc, &b| (acc << 1) | ((z >> b) & 1));
                for c2 in 0..8 {
                    let v = a.get(c2, c);
                    if v == 0.0 {
                        continue;
                    }
                    let mut z2 = z;
                    for (pos, &b) in t.iter().enumerate() {
                        z2 = (z2 & !(1 << b)) | (bit(c2, pos) << b);
                    }
                    y[z2] += v * amp;
                }
            }
        }
        let mut proj = vec![0.0; n + 1];
        for z in 0..dim {
            proj[weight[z]] += y[z];
        }
        for w2 in 0..=n {
            proj[w2] /= (count[w2] as f64).sqrt();
            m[(w2, w)] = proj[w2];
        }
        let resid: f64 = (0..dim)
            .map(|z| {
                let r = y[z] - proj[weight[z]] / (count[weight[z]] as f64).sqrt();
                r * r
            })
            .sum();
        leakage = leakage.max(resid.sqrt());
    }
    Ok((SubspaceOperator::from_matrix(n, m)?, leakage))
}

pub fn build_he_dense(a: &DriverMatrix, n: usize) -> Result<SubspaceOperator> {
    build_he_dense_with_leakage(a, n).map(|(op, _)| op)
}

// sqrt(C(n, w) / C(n, w2)) for |w - w2| <= 3, as a product of small ratios.
fn binom_ratio_sqrt(n: usize, w: usize, w2: usize) -> f64 {
    let mut r = 1.0;
    if w2 > w {
        for i in 0..(w2 - w) {
            r *= (w + i + 1) as f64 / (n - w - i) as f64;
        }
    } else {
        for i in 0..(w - w2) {
            r *= (n - w + i + 1) as f64 / (w - i) as f64;
        }
    }
    r.sqrt()
}

fn choose_small(a: usize, k: usize) -> f64 {
    if k > a {
        return 0.0;
    }
    let a = a as f64;
    match k {
        0 => 1.0,
        1 => a,
        2 => a * (a - 1.0) / 2.0,
        _ => a * (a - 1.0) * (a - 2.0) / 6.0,
    }
}

/// Closed-form `H_E` in the weight basis. A weight-`w` state contains
/// `C(w,m) C(n-w,3-m)` triples with `m` unit bits, spread evenly over the
/// `C(3,m)` configurations with that occupancy.
pub fn build_he_symmetric(a: &DriverMatrix, n: usize, include_weight_preserving: bool) -> Result<SubspaceOperator> {
    check_triple_n(n)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for w in 0..=n {
        for c in 0..8 {
            let mo = ones(c);
            if mo > w || 3 - mo > n - w {
                continue;
            }
            let count = choose_small(w, mo) * choose_small(n - w, 3 - mo) / choose_small(3, mo);
            for c2 in 0..8 {
                let v = a.get(c2, c);
                if v == 0.0 {
                    continue;
                }
                let w2 = w - mo + ones(c2);
                if w2 == w && !include_weight_preserving {
                    continue;
                }
                m[(w2, w)] += count * v * binom_ratio_sqrt(n, w, w2);
            }
        }
    }
    SubspaceOperator::from_matrix(n, m)
}

/// Large-spin coefficients, in units of 1/3, of each upper-triangle entry of
/// `A` (columns follow [`UPPER_PAIRS`]). Reproduced by [`derive_gamma_table`].
#[rustfmt::skip]
pub const GAMMA_TABLE_THIRDS: [[i8; N_ENTRIES]; 6] = [
    [1, 1, 0, 1, 0, 0, -3, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1],
    [0, 0, 2, 0, 2, 2, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [2, 2, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -2, 0, 0, 0, 0, -2, -2],
    [1, 1, 0, 1, 0, 0, 3, 0, -1, 0, -1, -1, 0, -1, 0, -1, -1, 0, -1, 0, 0, 1, -1, -1, 0, 0, 1, 1],
    [0, 0, 2, 0, 2, 2, 0, 0, 0, 0, 0, 0, -2, 0, 0, 0, 0, -2, 0, 0, 0, 0, 0, 0, -2, 0, 0, 0],
];

pub fn gammas_from_a(a: &DriverMatrix) -> GammaCoefficients {
    let upper = a.upper();
    let mut gamma = [0.0; 6];
    for (g, row) in gamma.iter_mut().zip(GAMMA_TABLE_THIRDS.iter()) {
        *g = row.iter().zip(upper.iter()).map(|(&t, &x)| t as f64 * x).sum::<f64>() / 3.0;
    }
    GammaCoefficients::new(gamma)
}

/// Re-derives the gamma table: each elementary clause matrix is built in the
/// weight basis (weight-preserving terms dropped), scaled by `l^-3`, and
/// least-squares fitted onto the six driver monomials plus the diagonal
/// nuisance set `{I, N_z, N_z^2, N_z^3}`. The fitted coefficients at three
/// sizes are extrapolated as `c0 + c1/n + c2/n^2`.
pub fn derive_gamma_table(ns: [usize; 3]) -> Result<[[f64; N_ENTRIES]; 6]> {
    let mut fits = Vec::with_capacity(3);
    for &n in &ns {
        let mut basis: Vec<SubspaceOperator> = sym_poly_basis(n)?.into();
        let z = build_nz(n)?;
        let zd = z.diagonal();
        for k in 0..4 {
            let d: Vec<f64> = zd.iter().map(|q| q.powi(k)).collect();
            basis.push(SubspaceOperator::from_diagonal(n, &d)?);
        }
        let nb = basis.len();
        let dot = |a: &SubspaceOperator, b: &SubspaceOperator| a.matrix().dot(b.matrix());
        let mut gram = DMatrix::zeros(nb, nb);
        for i in 0..nb {
            for j in 0..nb {
                gram[(i, j)] = dot(&basis[i], &basis[j]);
            }
        }
        let lu = gram.lu();
        let l3 = spin_l(n).powi(3);
        let mut coefs = [[0.0; N_ENTRIES]; 6];
        for k in 0..N_ENTRIES {
            let he = build_he_symmetric(&DriverMatrix::unit(k), n, false)?.scale(1.0 / l3);
            let rhs = DVector::from_iterator(nb, basis.iter().map(|b| dot(b, &he)));
            let sol = lu.solve(&rhs).ok_or_else(|| QaaError::Numerical("singular fit basis".into()))?;
            for g in 0..6 {
                coefs[g][k] = sol[g];
            }
        }
        fits.push(coefs);
    }
    let inv: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let vand = Matrix3::new(1.0, inv[0], inv[0] * inv[0], 1.0, inv[1], inv[1] * inv[1], 1.0, inv[2], inv[2] * inv[2]);
    let vlu = vand.lu();
    let mut table = [[0.0; N_ENTRIES]; 6];
    for g in 0..6 {
        for k in 0..N_ENTRIES {
            let rhs = Vector3::new(fits[0][g][k], fits[1][g][k], fits[2][g][k]);
            let sol = vlu.solve(&rhs).ok_or_else(|| QaaError::Numerical("singular extrapolation".into()))?;
            table[g][k] = sol[0];
        }
    }
    Ok(table)
}

/// Largest weight-changing element of `l^-3 H_E(A) - sym_poly(gamma(A))`.
/// The gamma map says nothing about the weight-basis diagonal (it is a
/// function of `N_z` only, partly fixed by operator ordering), so the diagonal
/// is excluded; the remainder is `O(1/n)`.
pub fn he_model_error(a: &DriverMatrix, n: usize) -> Result<f64> {
    if n < 10 {
        return Err(QaaError::InvalidInput(format!("model error needs n >= 10, got {n}")));
    }
    let he = build_he_symmetric(a, n, false)?.scale(1.0 / spin_l(n).powi(3));
    let model = sym_poly(n, &gammas_from_a(a))?;
    let mut worst = 0.0f64;
    for w in 0..=n {
        for w2 in (0..=n).filter(|&w2| w2 != w) {
            worst = worst.max((he.get(w2, w) - model.get(w2, w)).abs());
        }
    }
    Ok(worst)
}
