//! Zero-order-hold discretization of continuous-time dynamics.

use nalgebra::DMatrix;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// `A = exp(A_c dt)`, `B = int_0^dt exp(A_c t) dt B_c` (likewise `C`), and
/// `D = alpha int_0^dt exp(A_c t) dt G`.
///
/// All integrals come from one exponential of the augmented matrix
/// `[[A_c, [B_c C_c I]], [0, 0]] dt`.
pub fn discretize(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    c_c: &DMatrix<f64>,
    noise_input: &DMatrix<f64>,
    dt: f64,
    alpha: f64,
) -> Result<Discretized, CliError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CliError::field("system.dt", format!("must be positive, found {dt}")));
    }
    if !alpha.is_finite() {
        return Err(CliError::field("system.alpha", "must be finite"));
    }
    let n = a_c.nrows();
    let (m, l) = (b_c.ncols(), c_c.ncols());
    let size = n + m + l + n;
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * dt));
    aug.view_mut((0, n + m), (n, l)).copy_from(&(c_c * dt));
    aug.view_mut((0, n + m + l), (n, n)).copy_from(&(DMatrix::<f64>::identity(n, n) * dt));
    let e = aug.exp();
    let integral = e.view((0, n + m + l), (n, n)).into_owned();
    Ok(Discretized {
        a: e.view((0, 0), (n, n)).into_owned(),
        b: e.view((0, n), (n, m)).into_owned(),
        c: e.view((0, n + m), (n, l)).into_owned(),
        d: integral * noise_input * alpha,
    })
}
