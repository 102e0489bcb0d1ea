//! Oracles shared by the integration tests.

/// Ramanujan τ(n) for n ≤ len from q·Π(1 − qⁿ)²⁴, by exact integer
/// polynomial multiplication.
pub fn ramanujan_tau(len: usize) -> Vec<i128> {
    // Π_{n≥1} (1 − qⁿ) truncated at degree len.
    let mut eta = vec![0i128; len + 1];
    eta[0] = 1;
    for n in 1..=len {
        for j in (n..=len).rev() {
            eta[j] -= eta[j - n];
        }
    }
    let mul = |a: &[i128], b: &[i128]| {
        let mut out = vec![0i128; len + 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate().take(len + 1 - i) {
                out[i + j] += x * y;
            }
        }
        out
    };
    let mut p = vec![0i128; len + 1];
    p[0] = 1;
    for _ in 0..24 {
        p = mul(&p, &eta);
    }
    // τ(n) is the coefficient of qⁿ in q·p(q).
    let mut tau = vec![0i128; len + 1];
    for n in 1..=len {
        tau[n] = p[n - 1];
    }
    tau
}
