use super::config::Granularity;
use super::rng::RngStream;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keep decisions for one MCD realization: one flag per unit (element or
/// channel). A unit is dropped when its uniform draw exceeds `keep_rate`.
pub fn mcd_keep_mask(units: usize, keep_rate: f64, rng: &mut RngStream) -> Vec<bool> {
    (0..units).map(|_| rng.next_uniform() <= keep_rate).collect()
}

/// Factor applied to surviving activations.
pub fn mcd_scale(keep_rate: f64, inverted: bool) -> f64 {
    if inverted {
        1.0 / keep_rate
    } else {
        keep_rate
    }
}

/// `(units, elements per unit)` for a given activation shape.
pub(crate) fn mcd_units(shape: &[usize], granularity: Granularity) -> (usize, usize) {
    let len: usize = shape.iter().product();
    match (granularity, shape) {
        (Granularity::Channel, [c, h, w]) => (*c, h * w),
        _ => (len, 1),
    }
}

/// One Monte-Carlo dropout realization: dropped units become zero and
/// survivors are multiplied by `keep_rate` (or divided, if `inverted`).
pub fn mcd_forward(
    input: &Tensor,
    keep_rate: f64,
    granularity: Granularity,
    rng: &mut RngStream,
    inverted: bool,
) -> Result<Tensor> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(Error::precondition(format!(
            "keep_rate {} outside (0, 1]",
            keep_rate
        )));
    }
    let (units, per) = mcd_units(input.shape(), granularity);
    let keep = mcd_keep_mask(units, keep_rate, rng);
    let scale = mcd_scale(keep_rate, inverted) as f32;
    let mut out = input.clone();
    for (chunk, &k) in out.data_mut().chunks_exact_mut(per).zip(&keep) {
        for v in chunk {
            *v = if k { *v * scale } else { 0.0 };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_one_is_identity() {
        let x = Tensor::vector(vec![1.5, -2.0, 3.25]);
        let mut rng = RngStream::new(1, 0, "d");
        let y = mcd_forward(&x, 1.0, Granularity::Element, &mut rng, false).unwrap();
        assert!(y.bit_eq(&x));
    }

    #[test]
    fn channel_granularity_shares_fate() {
        let x = Tensor::new(vec![6, 3, 3], vec![1.0; 54]).unwrap();
        let mut rng = RngStream::new(9, 2, "d");
        let y = mcd_forward(&x, 0.5, Granularity::Channel, &mut rng, false).unwrap();
        for plane in y.data().chunks(9) {
            assert!(plane.iter().all(|&v| v == plane[0]));
        }
    }

    #[test]
    fn rejects_bad_keep_rate() {
        let x = Tensor::vector(vec![1.0]);
        let mut rng = RngStream::new(0, 0, "d");
        assert!(mcd_forward(&x, 0.0, Granularity::Element, &mut rng, false).is_err());
        assert!(mcd_forward(&x, 1.01, Granularity::Element, &mut rng, false).is_err());
    }

    #[test]
    fn inverted_divides() {
        let x = Tensor::vector(vec![1.0; 64]);
        let mut rng = RngStream::new(3, 0, "d");
        let y = mcd_forward(&x, 0.5, Granularity::Element, &mut rng, true).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
