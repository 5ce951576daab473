/// One explicit Heun (trapezoidal predictor-corrector) step of `dx/dt = f(x)`.
///
/// Inputs to `f` other than the state are held constant across the step.
pub fn heun<const N: usize, E>(
    x: &[f64; N],
    dt: f64,
    mut f: impl FnMut(&[f64; N]) -> Result<[f64; N], E>,
) -> Result<[f64; N], E> {
    let k1 = f(x)?;
    let mut pred = *x;
    for i in 0..N {
        pred[i] += dt * k1[i];
    }
    let k2 = f(&pred)?;
    let mut out = *x;
    for i in 0..N {
        out[i] += 0.5 * dt * (k1[i] + k2[i]);
    }
    Ok(out)
}
