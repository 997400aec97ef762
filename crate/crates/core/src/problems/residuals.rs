use std::f64::consts::PI;

use crate::autodiff::{Jet, Scalar};
use crate::{Error, Result};

fn require<S: Scalar>(u: &Jet<S>, dims: usize, order: usize, what: &str) -> Result<()> {
    if u.dims() != dims || u.order() < order {
        return Err(Error::Shape(format!(
            "{what} needs {dims}-input jets of order >= {order}, got dims {} order {}",
            u.dims(),
            u.order()
        )));
    }
    Ok(())
}

pub fn poisson_source(x: f64, c: f64) -> f64 {
    -c * c * (c * x).sin()
}

/// `u_xx − g(x)`.
pub fn poisson_residual<S: Scalar>(u: &Jet<S>, x: f64, c: f64) -> Result<S> {
    require(u, 1, 2, "poisson residual")?;
    Ok(u.d(&[0, 0]) - poisson_source(x, c))
}

pub fn helmholtz_source(x: f64, y: f64, a1: f64, a2: f64, k: f64) -> f64 {
    (k * k - (a1 * a1 + a2 * a2) * PI * PI) * (a1 * PI * x).sin() * (a2 * PI * y).sin()
}

/// `Δu + k²u − q(x, y)`.
pub fn helmholtz_residual<S: Scalar>(u: &Jet<S>, x: f64, y: f64, a1: f64, a2: f64, k: f64) -> Result<S> {
    require(u, 2, 2, "helmholtz residual")?;
    Ok(u.d(&[0, 0]) + u.d(&[1, 1]) + u.value() * (k * k) - helmholtz_source(x, y, a1, a2, k))
}

/// Source of the fabricated solution `u = x·cos(5πt) + (xt)³`.
pub fn klein_gordon_source(x: f64, t: f64, alpha: f64, beta: f64, gamma: f64, k: i32) -> f64 {
    let c = (5.0 * PI * t).cos();
    let u = x * c + (x * t).powi(3);
    let u_tt = -25.0 * PI * PI * x * c + 6.0 * x.powi(3) * t;
    let u_xx = 6.0 * x * t.powi(3);
    u_tt + alpha * u_xx + beta * u + gamma * u.powi(k)
}

/// `u_tt + αu_xx + βu + γu^k − f(x, t)` with inputs ordered `(x, t)`.
pub fn klein_gordon_residual<S: Scalar>(
    u: &Jet<S>,
    x: f64,
    t: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    k: i32,
) -> Result<S> {
    require(u, 2, 2, "klein-gordon residual")?;
    let v = u.value();
    Ok(u.d(&[1, 1]) + u.d(&[0, 0]) * alpha + v * beta + v.powi(k) * gamma
        - klein_gordon_source(x, t, alpha, beta, gamma, k))
}

/// Momentum and continuity residuals `(r_u, r_v, r_c)` for outputs `(u, v, p)`.
pub fn cavity_residuals_uvp<S: Scalar>(out: &[Jet<S>], re: f64) -> Result<[S; 3]> {
    if out.len() != 3 {
        return Err(Error::Shape(format!("velocity-pressure residuals need 3 outputs, got {}", out.len())));
    }
    for o in out {
        require(o, 2, 2, "velocity-pressure residuals")?;
    }
    let (u, v, p) = (&out[0], &out[1], &out[2]);
    let (uv, vv) = (u.value(), v.value());
    let inv = 1.0 / re;
    let ru = uv * u.d(&[0]) + vv * u.d(&[1]) + p.d(&[0]) - (u.d(&[0, 0]) + u.d(&[1, 1])) * inv;
    let rv = uv * v.d(&[0]) + vv * v.d(&[1]) + p.d(&[1]) - (v.d(&[0, 0]) + v.d(&[1, 1])) * inv;
    let rc = u.d(&[0]) + v.d(&[1]);
    Ok([ru, rv, rc])
}

/// Momentum residuals `(r_u, r_v)` for outputs `(ψ, p)`, with `(u, v) = (ψ_y, −ψ_x)`.
pub fn cavity_residuals_psi_p<S: Scalar>(out: &[Jet<S>], re: f64) -> Result<[S; 2]> {
    if out.len() != 2 {
        return Err(Error::Shape(format!("streamfunction residuals need 2 outputs, got {}", out.len())));
    }
    require(&out[0], 2, 3, "streamfunction residuals")?;
    require(&out[1], 2, 1, "streamfunction residuals")?;
    let (psi, p) = (&out[0], &out[1]);
    let d = |i: &[usize]| psi.d(i);
    let (u, v) = (d(&[1]), -d(&[0]));
    let (u_x, u_y) = (d(&[0, 1]), d(&[1, 1]));
    let (v_x, v_y) = (-d(&[0, 0]), -d(&[0, 1]));
    let lap_u = d(&[0, 0, 1]) + d(&[1, 1, 1]);
    let lap_v = -(d(&[0, 0, 0]) + d(&[0, 1, 1]));
    let inv = 1.0 / re;
    let ru = u * u_x + v * u_y + p.d(&[0]) - lap_u * inv;
    let rv = u * v_x + v * v_y + p.d(&[1]) - lap_v * inv;
    Ok([ru, rv])
}

/// `u_x + v_y` of the velocity induced by a streamfunction jet.
pub fn psi_continuity<S: Scalar>(psi: &Jet<S>) -> Result<S> {
    require(psi, 2, 2, "streamfunction continuity")?;
    // u_x = ψ_yx and v_y = −ψ_xy read the same symmetric slot.
    Ok(psi.d(&[1, 0]) - psi.d(&[0, 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::JetLayout;

    fn jet(dims: usize, order: usize, coeffs: &[f64]) -> Jet<f64> {
        Jet::from_coeffs(JetLayout::get(dims, order).unwrap(), coeffs).unwrap()
    }

    #[test]
    fn zero_network_leaves_minus_source() {
        let c = 3.0;
        let x = PI / (2.0 * c);
        let r = poisson_residual(&jet(1, 2, &[0.0; 3]), x, c).unwrap();
        assert!((r - c * c).abs() < 1e-12);
    }

    #[test]
    fn poisson_matches_hand_expansion() {
        // Jet slots for one input: [u, u_x, u_xx].
        for (i, x) in [0.1, 0.7, 1.3, 2.9, 3.1].into_iter().enumerate() {
            let u = jet(1, 2, &[0.3 * i as f64, -1.1, 0.25 + i as f64]);
            let r = poisson_residual(&u, x, 4.0).unwrap();
            assert!((r - (0.25 + i as f64 + 16.0 * (4.0 * x).sin())).abs() < 1e-12);
        }
    }

    #[test]
    fn helmholtz_source_values() {
        assert!(helmholtz_source(0.5, 0.5, 1.0, 4.0, 1.0).abs() < 1e-12);
        let q = helmholtz_source(0.5, 0.125, 1.0, 4.0, 1.0);
        assert!((q - (1.0 - 17.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn klein_gordon_source_values() {
        for t in [0.0, 0.3, 0.9] {
            assert_eq!(klein_gordon_source(0.0, t, -1.0, 0.0, 1.0, 3), 0.0);
        }
        let f = klein_gordon_source(1.0, 0.0, -1.0, 0.0, 1.0, 3);
        assert!((f - (1.0 - 25.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn uniform_flows_have_zero_cavity_residuals() {
        let p = jet(2, 2, &[0.7, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let zero = jet(2, 2, &[0.0; 6]);
        let one = jet(2, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cavity_residuals_uvp(&[zero, zero, p], 100.0).unwrap(), [0.0; 3]);
        assert_eq!(cavity_residuals_uvp(&[one, zero, p], 100.0).unwrap(), [0.0; 3]);

        // ψ = y gives u = 1, v = 0.
        let layout = JetLayout::get(2, 3).unwrap();
        let psi = Jet::variable(layout, 0.4, 1).unwrap();
        let p3 = Jet::constant(layout, 0.7);
        assert_eq!(cavity_residuals_psi_p(&[psi, p3], 100.0).unwrap(), [0.0; 2]);
        let c = Jet::constant(layout, 2.0);
        assert_eq!(cavity_residuals_psi_p(&[c, p3], 100.0).unwrap(), [0.0; 2]);
    }

    #[test]
    fn uvp_residuals_recompose_from_raw_slots() {
        // Slots for two inputs: [f, f_x, f_y, f_xx, f_xy, f_yy].
        let u = [0.3, -0.2, 0.5, 1.1, 0.4, -0.7];
        let v = [-0.6, 0.9, 0.1, -0.3, 0.2, 0.8];
        let p = [0.0, 1.5, -2.5, 0.0, 0.0, 0.0];
        let re = 50.0;
        let [ru, rv, rc] = cavity_residuals_uvp(&[jet(2, 2, &u), jet(2, 2, &v), jet(2, 2, &p)], re).unwrap();
        assert_eq!(ru, u[0] * u[1] + v[0] * u[2] + p[1] - (u[3] + u[5]) / re);
        assert_eq!(rv, u[0] * v[1] + v[0] * v[2] + p[2] - (v[3] + v[5]) / re);
        assert_eq!(rc, u[1] + v[2]);
    }

    #[test]
    fn wrong_orders_are_rejected() {
        assert!(poisson_residual(&jet(1, 1, &[0.0; 2]), 0.0, 1.0).is_err());
        assert!(helmholtz_residual(&jet(1, 2, &[0.0; 3]), 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        let j2 = jet(2, 2, &[0.0; 6]);
        assert!(cavity_residuals_psi_p(&[j2, j2], 100.0).is_err());
        assert!(cavity_residuals_uvp(&[j2, j2], 100.0).is_err());
    }
}
