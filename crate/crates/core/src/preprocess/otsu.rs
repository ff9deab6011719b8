use crate::error::{invariant, Result};

/// Otsu's threshold over a 256-bin histogram.
///
/// Returns the cut `t` maximizing the between-class variance
/// `ω₀ω₁(μ₀ − μ₁)²`, where class 0 holds bins `≤ t`. Ties go to the smallest
/// `t`. A histogram with all of its mass in a single bin has no threshold.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Result<u8> {
    let occupied = histogram.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(invariant!(
            "no threshold exists: histogram mass occupies {occupied} bin(s)"
        ));
    }
    // Integer sums keep the comparison exact: with n₀, n₁ class counts and
    // s₀, s₁ their intensity sums, the between-class variance is
    // (n₁s₀ − n₀s₁)² / (n₀n₁N²), and N² is common to every t.
    let total: u128 = histogram.iter().map(|&c| u128::from(c)).sum();
    let total_sum: u128 = histogram
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * u128::from(c))
        .sum();
    let mut n0: u128 = 0;
    let mut s0: u128 = 0;
    let mut best: Option<(u8, Fraction)> = None;
    for t in 0..255usize {
        n0 += u128::from(histogram[t]);
        s0 += t as u128 * u128::from(histogram[t]);
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        let (Some(a), Some(b), Some(den)) =
            (n1.checked_mul(s0), n0.checked_mul(s1), n0.checked_mul(n1))
        else {
            return Err(invariant!("histogram counts too large for exact Otsu"));
        };
        let score = Fraction {
            num: a.abs_diff(b),
            den,
        };
        if best.as_ref().is_none_or(|(_, b)| score.gt(b)) {
            best = Some((t as u8, score));
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| invariant!("no threshold exists"))
}

/// `num² / den`, compared exactly.
struct Fraction {
    num: u128,
    den: u128,
}

impl Fraction {
    fn gt(&self, other: &Fraction) -> bool {
        // num_a² · den_b > num_b² · den_a, in 256-bit arithmetic
        let lhs = mul_wide(mul_wide(self.num, self.num), other.den);
        let rhs = mul_wide(mul_wide(other.num, other.num), self.den);
        lhs > rhs
    }
}

/// Little-endian 64-bit limbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Wide([u64; 6]);

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Wide {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

trait IntoWide {
    fn wide(self) -> Wide;
}

impl IntoWide for u128 {
    fn wide(self) -> Wide {
        Wide([self as u64, (self >> 64) as u64, 0, 0, 0, 0])
    }
}

impl IntoWide for Wide {
    fn wide(self) -> Wide {
        self
    }
}

fn mul_wide(a: impl IntoWide, b: u128) -> Wide {
    let a = a.wide().0;
    let b = [b as u64, (b >> 64) as u64];
    let mut out = [0u64; 6];
    for (i, &ai) in a.iter().enumerate() {
        let mut carry: u128 = 0;
        for (j, &bj) in b.iter().enumerate() {
            if i + j >= 6 {
                break;
            }
            let cur = u128::from(out[i + j]) + u128::from(ai) * u128::from(bj) + carry;
            out[i + j] = cur as u64;
            carry = cur >> 64;
        }
        let mut k = i + 2;
        while carry > 0 && k < 6 {
            let cur = u128::from(out[k]) + carry;
            out[k] = cur as u64;
            carry = cur >> 64;
            k += 1;
        }
    }
    Wide(out)
}
