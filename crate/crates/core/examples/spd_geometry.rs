//! Affine-invariant geometry on a handful of random covariance matrices.

use nalgebra::DMatrix;
use neurofuse::seed;
use neurofuse::spd::{self, TangentSpace};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_spd<R: Rng>(p: usize, rng: &mut R) -> spd::SpdMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
    spd::matrix_exp(&((&a + a.transpose()) * 0.5)).unwrap()
}

fn main() -> Result<(), spd::SpdError> {
    let mut rng = seed::rng_from_seed(1);
    let mats: Vec<_> = (0..12).map(|_| random_spd(4, &mut rng)).collect();

    let (a, b) = (&mats[0], &mats[1]);
    let d = spd::geodesic_distance(a, b)?;
    let mid = spd::geodesic_point(a, b, 0.5)?;
    println!("d(A, B)       = {d:.6}");
    println!("d(A, mid)     = {:.6}", spd::geodesic_distance(a, &mid)?);
    println!("d(A⁻¹, B⁻¹)   = {:.6}", spd::geodesic_distance(&spd::matrix_inv(a)?, &spd::matrix_inv(b)?)?);

    let mean = spd::frechet_mean(&mats, spd::FRECHET_TOL, spd::FRECHET_MAX_ITER)?;
    println!("Fréchet mean: {} iterations, converged = {}", mean.iterations, mean.converged);

    let space = TangentSpace::new(mean.into_converged()?)?;
    for (i, m) in mats.iter().take(3).enumerate() {
        let v = space.project(m)?;
        println!("tangent[{i}]: dim {} norm {:.4}", v.dim(), v.norm());
    }
    Ok(())
}
