//! Lossless space-to-depth stand-in for a learned video autoencoder.
//!
//! A `p×p` pixel block becomes one latent position; latent channel
//! `(dy·p + dx)·C + c` holds pixel `(p·y + dy, p·x + dx)`, channel `c`.

use crate::error::{ensure, Result};
use crate::numcore::{Dims4, Real, Tensor4};

pub fn latent_dims(video: Dims4, p: usize) -> Result<Dims4> {
    ensure!(p >= 1, "encoder factor must be >= 1");
    ensure!(
        video.height % p == 0 && video.width % p == 0,
        "encoder factor {p} does not divide {}x{}",
        video.height,
        video.width
    );
    Ok(Dims4::new(video.frames, video.height / p, video.width / p, video.channels * p * p))
}

pub fn encode<T: Real>(video: &Tensor4<T>, p: usize) -> Result<Tensor4<T>> {
    let vd = video.dims();
    let ld = latent_dims(vd, p)?;
    let c = vd.channels;
    Tensor4::from_fn(ld, |l, y, x, k| {
        let (block, ch) = (k / c, k % c);
        video.get(l, y * p + block / p, x * p + block % p, ch)
    })
}

pub fn decode<T: Real>(latent: &Tensor4<T>, p: usize) -> Result<Tensor4<T>> {
    let ld = latent.dims();
    ensure!(p >= 1, "encoder factor must be >= 1");
    ensure!(
        ld.channels % (p * p) == 0,
        "latent channels {} not divisible by {}",
        ld.channels,
        p * p
    );
    let c = ld.channels / (p * p);
    let vd = Dims4::new(ld.frames, ld.height * p, ld.width * p, c);
    Tensor4::from_fn(vd, |l, y, x, ch| {
        latent.get(l, y / p, x / p, ((y % p) * p + x % p) * c + ch)
    })
}

/// Maps `[0, 1]` pixels to the zero-centred `[−1, 1]` range the model sees.
pub fn to_model_space<T: Real>(z: &Tensor4<T>) -> Tensor4<T> {
    let two = T::from_f64_lossy(2.0);
    z.map(|v| two * v - T::one())
}

pub fn from_model_space<T: Real>(z: &Tensor4<T>) -> Tensor4<T> {
    let half = T::from_f64_lossy(0.5);
    z.map(|v| (v + T::one()) * half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_at_p1_and_shape_at_p2() {
        let v = Tensor4::from_fn(Dims4::new(2, 16, 16, 3), |l, y, x, c| (l * 1000 + y * 50 + x * 3 + c) as f64).unwrap();
        assert_eq!(encode(&v, 1).unwrap(), v);
        let z = encode(&v, 2).unwrap();
        assert_eq!(z.dims(), Dims4::new(2, 8, 8, 12));
        assert_eq!(z.get(1, 3, 5, 1 * 3 + 2), v.get(1, 6, 11, 2));
        assert!(encode(&v, 3).is_err());
    }

    #[test]
    fn round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in [1, 2, 4] {
            let data = (0..2 * 8 * 8 * 3).map(|_| rng.gen::<f64>()).collect();
            let v = Tensor4::from_vec(Dims4::new(2, 8, 8, 3), data).unwrap();
            let back = decode(&encode(&v, p).unwrap(), p).unwrap();
            assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
