//! Stirling numbers, set partitions, conversions between cumulants, factorial
//! cumulants and factorial moments, and k-statistics.

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};

pub const MAX_STIRLING_ORDER: usize = 20;
pub const MAX_PARTITION_SIZE: usize = 8;

/// Scalars the conversions run on: `f64` for data, `Ratio<i128>` for exact checks.
pub trait Scalar: Clone + Zero + One + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Sub<Output = Self> {
    fn from_int(v: i128) -> Self;
}

impl Scalar for f64 {
    fn from_int(v: i128) -> Self {
        v as f64
    }
}

impl Scalar for Ratio<i128> {
    fn from_int(v: i128) -> Self {
        Ratio::from_integer(v)
    }
}

/// Unsigned Stirling numbers of the first kind `D[j][k]` (with
/// `x^{[k]} = Σ_j (-1)^{k-j} D_{j,k} x^j`) and second kind `Delta[j][k]`
/// (with `x^k = Σ_j Δ_{j,k} x^{[j]}`), for `0 <= j, k <= K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StirlingTable {
    pub max_order: usize,
    pub first: Vec<Vec<u64>>,
    pub second: Vec<Vec<u64>>,
}

impl StirlingTable {
    pub fn d(&self, j: usize, k: usize) -> u64 {
        self.first[j][k]
    }

    pub fn delta(&self, j: usize, k: usize) -> u64 {
        self.second[j][k]
    }
}

pub fn stirling_tables(max_order: usize) -> Result<StirlingTable> {
    if max_order > MAX_STIRLING_ORDER {
        return Err(DppError::Overflow(format!(
            "Stirling tables are exact up to order {MAX_STIRLING_ORDER}, requested {max_order}"
        )));
    }
    let n = max_order + 1;
    let mut first = vec![vec![0u64; n]; n];
    let mut second = vec![vec![0u64; n]; n];
    first[0][0] = 1;
    second[0][0] = 1;
    let ovf = || DppError::Overflow("Stirling recurrence overflowed u64".into());
    for k in 1..n {
        for j in 1..=k {
            // D_{j,k} = D_{j-1,k-1} + (k-1) D_{j,k-1};  Δ_{j,k} = Δ_{j-1,k-1} + j Δ_{j,k-1}.
            let a = (k as u64 - 1).checked_mul(first[j][k - 1]).ok_or_else(ovf)?;
            first[j][k] = first[j - 1][k - 1].checked_add(a).ok_or_else(ovf)?;
            let b = (j as u64).checked_mul(second[j][k - 1]).ok_or_else(ovf)?;
            second[j][k] = second[j - 1][k - 1].checked_add(b).ok_or_else(ovf)?;
        }
    }
    Ok(StirlingTable { max_order, first, second })
}

/// `γ_[k] = Σ_{j<=k} (-1)^{k-j} D_{j,k} γ_j`; input and output indexed from order 1.
pub fn fact_cumulants_from_cumulants<T: Scalar>(gamma: &[T]) -> Result<Vec<T>> {
    let st = stirling_tables(gamma.len())?;
    Ok((1..=gamma.len())
        .map(|k| {
            (1..=k).fold(T::zero(), |acc, j| {
                let sign: i128 = if (k - j) % 2 == 0 { 1 } else { -1 };
                acc + T::from_int(sign * st.d(j, k) as i128) * gamma[j - 1].clone()
            })
        })
        .collect())
}

/// `γ_k = Σ_{j<=k} Δ_{j,k} γ_[j]`; input and output indexed from order 1.
pub fn cumulants_from_fact_cumulants<T: Scalar>(gamma_fact: &[T]) -> Result<Vec<T>> {
    let st = stirling_tables(gamma_fact.len())?;
    Ok((1..=gamma_fact.len())
        .map(|k| {
            (1..=k).fold(T::zero(), |acc, j| acc + T::from_int(st.delta(j, k) as i128) * gamma_fact[j - 1].clone())
        })
        .collect())
}

/// A set partition of `{0, .., n-1}` as a list of blocks.
pub type Partition = Vec<Vec<usize>>;

/// All set partitions of `{0, .., n-1}`, grouped by block count: entry `j-1`
/// holds the partitions into `j` blocks.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Vec<Partition>>> {
    if n > MAX_PARTITION_SIZE {
        return Err(DppError::InvalidInput(format!("partitions enumerated up to n = {MAX_PARTITION_SIZE}")));
    }
    let mut out: Vec<Vec<Partition>> = vec![Vec::new(); n];
    if n == 0 {
        return Ok(out);
    }
    // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i]).
    let mut a = vec![0usize; n];
    loop {
        let blocks = a.iter().max().unwrap() + 1;
        let mut p: Partition = vec![Vec::new(); blocks];
        for (i, &b) in a.iter().enumerate() {
            p[b].push(i);
        }
        out[blocks - 1].push(p);
        // Next string.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            let m = a[..i].iter().max().copied().unwrap();
            if a[i] <= m {
                a[i] += 1;
                a[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
            i -= 1;
        }
    }
}

/// Diagonal factorial cumulants from factorial moment masses
/// `alpha[r-1] = α^{(r)}(A^r)`:
/// `γ_[k] = Σ_j (-1)^{j-1} (j-1)! Σ_{partitions into j blocks} Π α^{(|B_i|)}`.
pub fn fact_cumulants_from_fact_moments<T: Scalar>(alpha: &[T]) -> Result<Vec<T>> {
    if alpha.len() > 4 {
        return Err(DppError::UnsupportedOrder(alpha.len()));
    }
    let mut out = Vec::with_capacity(alpha.len());
    for k in 1..=alpha.len() {
        let parts = enumerate_partitions(k)?;
        let mut total = T::zero();
        for (jm1, group) in parts.iter().enumerate() {
            let fact: i128 = (1..=jm1 as i128).product();
            let sign: i128 = if jm1 % 2 == 0 { 1 } else { -1 };
            let coef = T::from_int(sign * fact);
            for p in group {
                let prod = p.iter().fold(T::one(), |acc, b| acc * alpha[b.len() - 1].clone());
                total = total + coef.clone() * prod;
            }
        }
        out.push(total);
    }
    Ok(out)
}

/// Factorial moments from ordinary moments `m[r-1] = E N^r` via
/// `E N^{[k]} = Σ_j (-1)^{k-j} D_{j,k} E N^j`.
pub fn fact_moments_from_moments<T: Scalar>(m: &[T]) -> Result<Vec<T>> {
    fact_cumulants_from_cumulants(m)
}

/// Ordinary cumulants from ordinary moments (orders 1..=4).
pub fn cumulants_from_moments(m: &[f64]) -> Result<Vec<f64>> {
    if m.len() > 4 {
        return Err(DppError::UnsupportedOrder(m.len()));
    }
    // Same partition formula as for factorial cumulants.
    fact_cumulants_from_fact_moments(m)
}

/// Unbiased k-statistics `[k1, k2, .., k_max]` (k1 is the mean).
pub fn empirical_cumulants(samples: &[f64], max_order: usize) -> Result<Vec<f64>> {
    if !(2..=4).contains(&max_order) {
        return Err(DppError::UnsupportedOrder(max_order));
    }
    let n = samples.len();
    if n < max_order + 1 {
        return Err(DppError::InvalidInput(format!(
            "need at least {} samples for order {max_order}, got {n}",
            max_order + 1
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let mut out = vec![mean];
    if samples.iter().all(|x| *x == samples[0]) {
        out.extend(std::iter::repeat(0.0).take(max_order - 1));
        return Ok(out);
    }
    out.push(nf * m2 / (nf - 1.0));
    if max_order >= 3 {
        out.push(nf * nf * m3 / ((nf - 1.0) * (nf - 2.0)));
    }
    if max_order >= 4 {
        out.push(nf * nf * ((nf + 1.0) * m4 - 3.0 * (nf - 1.0) * m2 * m2) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type Q = Ratio<i128>;

    fn falling(x: i128, k: usize) -> i128 {
        (0..k as i128).map(|i| x - i).product()
    }

    #[test]
    fn stirling_examples() {
        let st = stirling_tables(5).unwrap();
        assert_eq!((st.d(1, 3), st.d(2, 3), st.d(3, 3)), (2, 3, 1));
        assert_eq!((st.delta(1, 3), st.delta(2, 3), st.delta(3, 3)), (1, 3, 1));
        for k in 0..=5 {
            assert_eq!(st.d(k, k), 1);
            assert_eq!(st.delta(k, k), 1);
            for j in k + 1..=5 {
                assert_eq!(st.d(j, k), 0);
                assert_eq!(st.delta(j, k), 0);
            }
        }
        assert!(stirling_tables(21).is_err());
    }

    #[test]
    fn stirling_defining_identities_exact() {
        let kmax = 20;
        let st = stirling_tables(kmax).unwrap();
        for k in 0..=kmax {
            for x in 0..=kmax as i128 {
                let lhs = falling(x, k);
                let rhs: i128 = (0..=k)
                    .map(|j| {
                        let s = if (k - j) % 2 == 0 { 1 } else { -1 };
                        s * st.d(j, k) as i128 * x.pow(j as u32)
                    })
                    .sum();
                assert_eq!(lhs, rhs, "first kind k={k} x={x}");
                // Second kind: x^k stays within i128 for x <= 20, k <= 20? 20^20 ~ 1e26 fits.
                let rhs2: i128 = (0..=k).map(|j| st.delta(j, k) as i128 * falling(x, j)).sum();
                assert_eq!(x.pow(k as u32), rhs2, "second kind k={k} x={x}");
            }
        }
    }

    #[test]
    fn partitions_counts() {
        let p3 = enumerate_partitions(3).unwrap();
        assert_eq!(p3.iter().map(Vec::len).sum::<usize>(), 5);
        assert_eq!(p3[1].len(), 3);
        assert_eq!(enumerate_partitions(1).unwrap()[0].len(), 1);
        let st = stirling_tables(8).unwrap();
        let bell = [1usize, 1, 2, 5, 15, 52, 203, 877, 4140];
        for n in 1..=8 {
            let p = enumerate_partitions(n).unwrap();
            assert_eq!(p.iter().map(Vec::len).sum::<usize>(), bell[n]);
            for j in 1..=n {
                assert_eq!(p[j - 1].len() as u64, st.delta(j, n));
            }
            for group in &p {
                for part in group {
                    let mut all: Vec<usize> = part.iter().flatten().copied().collect();
                    all.sort();
                    assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
            }
        }
        assert!(enumerate_partitions(9).is_err());
    }

    #[test]
    fn poisson_signatures() {
        // gamma_j = m for all j -> gamma_[k] = 0 for k >= 2.
        let m = Q::new(7, 3);
        let g = fact_cumulants_from_cumulants(&vec![m; 8]).unwrap();
        assert_eq!(g[0], m);
        assert!(g[1..].iter().all(|v| v.is_zero()));
        let back = cumulants_from_fact_cumulants(&g).unwrap();
        assert_eq!(back, vec![m; 8]);
        let alpha: Vec<Q> = (1..=4).map(|r| m.pow(r)).collect();
        let gf = fact_cumulants_from_fact_moments(&alpha).unwrap();
        assert_eq!(gf[0], m);
        assert!(gf[1..].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn identity_at_order_one_and_k2_formula() {
        assert_eq!(fact_cumulants_from_cumulants(&[3.5]).unwrap(), vec![3.5]);
        assert_eq!(cumulants_from_fact_cumulants(&[3.5]).unwrap(), vec![3.5]);
        let g = fact_cumulants_from_fact_moments(&[2.0, 7.0]).unwrap();
        assert_eq!(g, vec![2.0, 7.0 - 4.0]);
        assert!(fact_cumulants_from_fact_moments(&[1.0; 5]).is_err());
    }

    #[test]
    fn cube_cumulant_relation() {
        // gamma_2 = gamma_[2] + gamma_1 with gamma_1 = rho|A|, gamma_[2] = -I_2.
        let (mass, i2) = (8.0, 2.5);
        let c = cumulants_from_fact_cumulants(&[mass, -i2]).unwrap();
        assert_eq!(c[1], mass - i2);
    }

    #[test]
    fn k_statistics_examples() {
        assert_eq!(empirical_cumulants(&[1.0, 2.0, 3.0], 2).unwrap()[1], 1.0);
        let k = empirical_cumulants(&[-2.0, 0.0, 2.0, -1.0, 1.0], 4).unwrap();
        assert!(k[2].abs() < 1e-15);
        assert_eq!(empirical_cumulants(&[4.0; 6], 4).unwrap(), vec![4.0, 0.0, 0.0, 0.0]);
        assert!(empirical_cumulants(&[1.0, 2.0, 3.0, 4.0], 4).is_err());
        // Reference k-statistics of {1, 2, 4, 8, 16} (scipy.stats.kstat).
        let k = empirical_cumulants(&[1.0, 2.0, 4.0, 8.0, 16.0], 4).unwrap();
        assert!((k[1] - 37.2).abs() < 1e-12);
        assert!((k[2] - 300.7).abs() < 1e-10);
        assert!((k[3] - 1804.2).abs() < 1e-8);
    }

    #[test]
    fn normal_sample_cumulants_vanish() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let k = empirical_cumulants(&xs, 4).unwrap();
        let nf = n as f64;
        assert!(k[2].abs() < 4.0 * (6.0 / nf).sqrt());
        assert!(k[3].abs() < 4.0 * (24.0 / nf).sqrt());
    }

    proptest! {
        #[test]
        fn round_trip_exact(v in proptest::collection::vec((-1000i64..1000, 1i64..50), 1..=8)) {
            let g: Vec<Q> = v.iter().map(|(a, b)| Q::new(*a as i128, *b as i128)).collect();
            let f = fact_cumulants_from_cumulants(&g).unwrap();
            prop_assert_eq!(cumulants_from_fact_cumulants(&f).unwrap(), g.clone());
            let c = cumulants_from_fact_cumulants(&g).unwrap();
            prop_assert_eq!(fact_cumulants_from_cumulants(&c).unwrap(), g);
        }

        #[test]
        fn partition_route_matches_stirling_route(m in proptest::collection::vec(-5.0f64..5.0, 4)) {
            // Ordinary moments -> cumulants -> factorial cumulants, versus
            // ordinary moments -> factorial moments -> factorial cumulants.
            let cum = cumulants_from_moments(&m).unwrap();
            let via_stirling = fact_cumulants_from_cumulants(&cum).unwrap();
            let fm = fact_moments_from_moments(&m).unwrap();
            let via_partitions = fact_cumulants_from_fact_moments(&fm).unwrap();
            for (a, b) in via_stirling.iter().zip(&via_partitions) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())));
            }
        }
    }
}
