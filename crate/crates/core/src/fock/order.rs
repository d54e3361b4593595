use super::basis::FockBasis;
use super::ground::GroundState;
use crate::error::{Error, Result};

/// Charge-density-wave order parameter `O = 2 sqrt(S_pi)` with the staggered
/// structure factor
///
/// `S_pi = (1/L^2) sum_ij (-1)^(i-j) <(n_i - 1/2)(n_j - 1/2)>`.
///
/// In the occupation basis the double sum is the square of the staggered
/// occupation `m_s = sum_i (-1)^i (n_i - 1/2)`, so `S_pi` is the average of
/// `m_s^2 / L^2` under the Born weights. Weights are pooled per `|m_s|` before
/// the division, which makes both the product state `|1010..>` and the cat
/// state `(|1010..> + |0101..>)/sqrt 2` give exactly 1.
pub fn order_parameter(state: &GroundState, basis: &FockBasis) -> Result<f64> {
    order_parameter_of_amplitudes(&state.amplitudes, basis)
}

pub fn order_parameter_of_amplitudes(amplitudes: &[f64], basis: &FockBasis) -> Result<f64> {
    if amplitudes.len() != basis.dim() {
        return Err(Error::ShapeMismatch { expected: basis.dim(), actual: amplitudes.len() });
    }
    let l = basis.l;
    if l % 2 != 0 {
        return Err(Error::InvalidArgument(format!("order parameter needs even L, got {l}")));
    }
    // 2 m_s is an integer in [-L, L]
    let mut weight_by_m = vec![0.0_f64; l + 1];
    for (&a, &s) in amplitudes.iter().zip(basis.states()) {
        let even = (s & 0x5555_5555_5555_5555).count_ones() as i64;
        let odd = (s & 0xAAAA_AAAA_AAAA_AAAA).count_ones() as i64;
        let m2 = (2 * (even - odd)).unsigned_abs() as usize;
        weight_by_m[m2] += a * a;
    }
    let total: f64 = weight_by_m.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("zero state".into()));
    }
    // S_pi = sum_k w_k (k/2)^2 / (L^2 total) where k = |2 m_s|
    let num: f64 = weight_by_m
        .iter()
        .enumerate()
        .map(|(k, w)| w * (k * k) as f64)
        .sum();
    let s_pi = num / (total * (4 * l * l) as f64);
    Ok(2.0 * s_pi.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(l: usize) -> FockBasis {
        FockBasis::half_filled(l).unwrap()
    }

    fn cdw_word(l: usize, offset: usize) -> u64 {
        (0..l).filter(|i| i % 2 == offset).fold(0, |w, i| w | 1 << i)
    }

    #[test]
    fn product_and_cat_states_give_one() {
        for l in [4, 8, 12] {
            let b = basis(l);
            let mut x = vec![0.0; b.dim()];
            x[b.index_of(cdw_word(l, 0)).unwrap()] = 1.0;
            assert_eq!(order_parameter_of_amplitudes(&x, &b).unwrap(), 1.0);
            let r = 1.0 / 2f64.sqrt();
            x[b.index_of(cdw_word(l, 1)).unwrap()] = r;
            x[b.index_of(cdw_word(l, 0)).unwrap()] = r;
            assert_eq!(order_parameter_of_amplitudes(&x, &b).unwrap(), 1.0);
            x[b.index_of(cdw_word(l, 1)).unwrap()] = -r;
            assert_eq!(order_parameter_of_amplitudes(&x, &b).unwrap(), 1.0);
        }
    }

    #[test]
    fn matches_double_sum_definition() {
        let b = basis(6);
        let x: Vec<f64> = (0..b.dim()).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let mut s = 0.0;
        for (a, &st) in x.iter().zip(b.states()) {
            let p = a * a / norm2;
            for i in 0..6 {
                for j in 0..6 {
                    let ni = (st >> i & 1) as f64 - 0.5;
                    let nj = (st >> j & 1) as f64 - 0.5;
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    s += p * sign * ni * nj;
                }
            }
        }
        let expected = 2.0 * (s / 36.0).sqrt();
        let got = order_parameter_of_amplitudes(&x, &b).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch() {
        assert!(order_parameter_of_amplitudes(&[1.0], &basis(4)).is_err());
    }
}
