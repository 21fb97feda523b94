//! Gumbel-softmax relaxation of categorical samples.

use rand::Rng;

use super::tape::{softmax_row, Tape, Var};
use crate::error::{Error, Result};

const U_MIN: f64 = 1e-12;

/// Standard Gumbel noise `-ln(-ln u)` with `u` kept away from 0 and 1.
pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(U_MIN, 1.0 - U_MIN);
            -(-u.ln()).ln()
        })
        .collect()
}

fn check(logits: &[f64], temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits".into()));
    }
    Ok(())
}

/// `softmax((logits + noise) / temperature)` for explicit noise.
pub fn relaxed_with_noise(logits: &[f64], noise: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check(logits, temperature)?;
    if noise.len() != logits.len() {
        return Err(Error::InputShape(format!(
            "{} logits but {} noise terms",
            logits.len(),
            noise.len()
        )));
    }
    let shifted: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    let mut out = vec![0.0; shifted.len()];
    softmax_row(&shifted, &mut out);
    Ok(out)
}

/// Draws one relaxed one-hot sample.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check(logits, temperature)?;
    let noise = gumbel_noise(logits.len(), rng);
    relaxed_with_noise(logits, &noise, temperature)
}

/// Recorded relaxation over a `rows × k` logits node; `noise` has the same
/// layout.
pub fn gumbel_softmax_tape(tape: &mut Tape, logits: Var, noise: &[f64], temperature: f64) -> Result<Var> {
    check(&[], temperature)?;
    let (rows, cols) = tape.shape(logits);
    let noise = tape.leaf(noise.to_vec(), rows, cols)?;
    let shifted = tape.add(logits, noise)?;
    let scaled = tape.scale(shifted, 1.0 / temperature);
    Ok(tape.softmax(scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_equal_logits_is_uniform() {
        let out = relaxed_with_noise(&[0.3; 4], &[0.0; 4], 0.7).unwrap();
        for p in out {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_matches_softmax() {
        let out = relaxed_with_noise(&[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((out[0] - 0.7311).abs() < 1e-4);
        assert!((out[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gumbel_softmax_sample(&[1.0, 2.0], 0.0, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            gumbel_softmax_sample(&[1.0, 2.0], -1.0, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn samples_lie_strictly_inside_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let s = gumbel_softmax_sample(&[2.0, -1.0, 0.5], 1.0, &mut rng).unwrap();
            assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(s.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}
