//! On-shell relativistic four-vector algebra, collision invariants and the
//! center-of-momentum parametrization of binary collisions.
//!
//! Units are normalized so that the speed of light and the particle mass are
//! both 1; the energy of a particle with spatial momentum `p` is
//! `p0 = sqrt(1 + |p|^2)` and the Minkowski metric has signature (-,+,+,+).

use crate::error::KinematicsError;

/// Spatial 3-vector helpers used throughout the crate.
pub type Vec3 = [f64; 3];

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// An on-shell energy-momentum 4-vector. The energy component is derived
/// from the spatial momentum, so every value of this type satisfies the
/// mass-shell relation `p0^2 - |p|^2 = 1` by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourMomentum {
    p: Vec3,
    p0: f64,
}

impl FourMomentum {
    /// Builds the on-shell 4-vector for the spatial momentum `p`.
    pub fn new(p: Vec3) -> Self {
        let p0 = (1.0 + dot3(&p, &p)).sqrt();
        Self { p, p0 }
    }

    pub fn from_components(px: f64, py: f64, pz: f64) -> Self {
        Self::new([px, py, pz])
    }

    /// The particle at rest.
    pub fn rest() -> Self {
        Self { p: [0.0; 3], p0: 1.0 }
    }

    #[inline]
    pub fn spatial(&self) -> &Vec3 {
        &self.p
    }

    #[inline]
    pub fn energy(&self) -> f64 {
        self.p0
    }

    /// Normalized velocity `p / p0`; always strictly inside the unit ball.
    #[inline]
    pub fn velocity(&self) -> Vec3 {
        scale3(&self.p, 1.0 / self.p0)
    }

    /// Contravariant components `(p0, p1, p2, p3)`.
    #[inline]
    pub fn upper(&self) -> [f64; 4] {
        [self.p0, self.p[0], self.p[1], self.p[2]]
    }
}

/// Minkowski product `p^mu q_mu = -p0 q0 + p . q` of two on-shell vectors.
#[inline]
pub fn minkowski_product(p: &FourMomentum, q: &FourMomentum) -> f64 {
    -p.energy() * q.energy() + dot3(p.spatial(), q.spatial())
}

/// Minkowski product of two general (not necessarily on-shell) 4-vectors
/// given by contravariant components.
#[inline]
pub fn minkowski_product4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Negative radicands larger than this magnitude are treated as logic errors
/// rather than rounding noise.
pub const RADICAND_NOISE: f64 = 1e-12;

/// Square root that clamps rounding noise: radicands in `[-RADICAND_NOISE, 0)`
/// are treated as zero, anything more negative reports a degenerate geometry.
#[inline]
pub fn sqrt_clamped(x: f64) -> Result<f64, KinematicsError> {
    if x >= 0.0 {
        Ok(x.sqrt())
    } else if x >= -RADICAND_NOISE {
        Ok(0.0)
    } else {
        Err(KinematicsError::DegenerateGeometry { radicand: x })
    }
}

/// Relative energy `s = -(p+q).(p+q) = -2 p.q + 2` and relative momentum
/// `g = sqrt(2(-p.q - 1))` of a pair; they satisfy `s = g^2 + 4`.
pub fn relative_quantities(p: &FourMomentum, q: &FourMomentum) -> Result<(f64, f64), KinematicsError> {
    let pq = minkowski_product(p, q);
    let s = -2.0 * pq + 2.0;
    let g = sqrt_clamped(2.0 * (-pq - 1.0))?;
    Ok((s, g))
}

/// Relative momentum alone; used for the pair invariants g, g-bar, g-tilde.
pub fn relative_momentum(p: &FourMomentum, q: &FourMomentum) -> Result<f64, KinematicsError> {
    let pq = minkowski_product(p, q);
    sqrt_clamped(2.0 * (-pq - 1.0))
}

/// A scattering direction on the unit sphere together with its angles.
#[derive(Clone, Copy, Debug)]
pub struct CollisionGeometry {
    pub omega: Vec3,
    pub theta: f64,
    pub phi: f64,
}

impl CollisionGeometry {
    /// Builds the unit vector `(sin t cos f, sin t sin f, cos t)`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = (theta.sin(), theta.cos());
        let (sf, cf) = (phi.sin(), phi.cos());
        Self { omega: [st * cf, st * sf, ct], theta, phi }
    }

    /// Builds the geometry from a direction that is already unit length.
    pub fn from_unit(omega: Vec3) -> Self {
        let theta = omega[2].clamp(-1.0, 1.0).acos();
        let phi = omega[1].atan2(omega[0]).rem_euclid(std::f64::consts::TAU);
        Self { omega, theta, phi }
    }
}

/// Pre- and post-collisional momenta of a binary collision.
#[derive(Clone, Copy, Debug)]
pub struct PrePostQuadruple {
    pub p: FourMomentum,
    pub q: FourMomentum,
    pub p_prime: FourMomentum,
    pub q_prime: FourMomentum,
}

/// Below this threshold the total spatial momentum is treated as zero and the
/// singular correction term of the center-of-momentum map is dropped (its
/// limit is zero because gamma -> 1).
const COM_SINGULAR_EPS: f64 = 1e-13;

/// Post-collisional momenta in the center-of-momentum parametrization.
///
/// For the scattering direction `w` the outgoing pair is
///
/// ```text
/// p' = (p+q)/2 + (g/2) [ w + (gamma-1) (p+q) ((p+q).w) / |p+q|^2 ],
/// q' = (p+q) - p',        gamma = (p0+q0)/sqrt(s),
/// ```
///
/// which conserves 4-momentum exactly and keeps both outgoing momenta
/// on-shell. The outgoing energies equal
/// `(p0+q0)/2 +- g/(2 sqrt(s)) (p+q).w`.
pub fn com_post_momenta(
    p: &FourMomentum,
    q: &FourMomentum,
    geom: &CollisionGeometry,
) -> Result<PrePostQuadruple, KinematicsError> {
    let (s, g) = relative_quantities(p, q)?;
    let total = add3(p.spatial(), q.spatial());
    let total_norm2 = dot3(&total, &total);
    let sqrt_s = s.sqrt();
    let gamma = (p.energy() + q.energy()) / sqrt_s;

    let w = &geom.omega;
    let correction = if total_norm2 < COM_SINGULAR_EPS * COM_SINGULAR_EPS {
        [0.0; 3]
    } else {
        scale3(&total, (gamma - 1.0) * dot3(&total, w) / total_norm2)
    };
    let half_g = 0.5 * g;
    let shift = [
        half_g * (w[0] + correction[0]),
        half_g * (w[1] + correction[1]),
        half_g * (w[2] + correction[2]),
    ];
    let half_total = scale3(&total, 0.5);
    let p_prime = FourMomentum::new(add3(&half_total, &shift));
    let q_prime = FourMomentum::new(sub3(&half_total, &shift));
    Ok(PrePostQuadruple { p: *p, q: *q, p_prime, q_prime })
}

/// Outgoing energies predicted by the explicit formulas of the
/// center-of-momentum representation, without constructing the momenta.
pub fn com_post_energies(p: &FourMomentum, q: &FourMomentum, geom: &CollisionGeometry) -> Result<(f64, f64), KinematicsError> {
    let (s, g) = relative_quantities(p, q)?;
    let total = add3(p.spatial(), q.spatial());
    let half_sum = 0.5 * (p.energy() + q.energy());
    let proj = 0.5 * g / s.sqrt() * dot3(&total, &geom.omega);
    Ok((half_sum + proj, half_sum - proj))
}

impl PrePostQuadruple {
    /// Pair invariants `(g, g-bar, g-tilde)` of the quadruple.
    pub fn invariants(&self) -> Result<(f64, f64, f64), KinematicsError> {
        let g = relative_momentum(&self.p, &self.q)?;
        let gbar = relative_momentum(&self.p, &self.p_prime)?;
        let gtilde = relative_momentum(&self.p, &self.q_prime)?;
        Ok((g, gbar, gtilde))
    }
}

/// Cosine of the scattering angle, `(p-q).(p'-q') / g^2`.
pub fn scattering_cos_theta(quad: &PrePostQuadruple) -> Result<f64, KinematicsError> {
    let g = relative_momentum(&quad.p, &quad.q)?;
    if g == 0.0 {
        return Err(KinematicsError::ZeroRelativeMomentum);
    }
    let num = minkowski_product(&quad.p, &quad.p_prime) - minkowski_product(&quad.p, &quad.q_prime)
        - minkowski_product(&quad.q, &quad.p_prime)
        + minkowski_product(&quad.q, &quad.q_prime);
    Ok(num / (g * g))
}

/// Equivalent half-angle form `1 - 2 gbar^2 / g^2` of the scattering cosine.
pub fn scattering_cos_theta_half_angle(quad: &PrePostQuadruple) -> Result<f64, KinematicsError> {
    let g = relative_momentum(&quad.p, &quad.q)?;
    if g == 0.0 {
        return Err(KinematicsError::ZeroRelativeMomentum);
    }
    let gbar = relative_momentum(&quad.p, &quad.p_prime)?;
    Ok(1.0 - 2.0 * gbar * gbar / (g * g))
}

/// Moller velocity in its square-root form,
/// `sqrt(|p/p0 - q/q0|^2 - |p/p0 x q/q0|^2)`.
///
/// Direct evaluation shows this equals `g sqrt(s) / (2 p0 q0)`; the
/// square-root form is taken as the definition and is used consistently in
/// every kernel evaluation.
pub fn moller_velocity(p: &FourMomentum, q: &FourMomentum) -> f64 {
    let u = p.velocity();
    let v = q.velocity();
    let diff = sub3(&u, &v);
    let cr = cross3(&u, &v);
    let radicand = dot3(&diff, &diff) - dot3(&cr, &cr);
    // Tiny negative radicands from cancellation are rounding noise.
    if radicand <= 0.0 {
        0.0
    } else {
        radicand.sqrt()
    }
}

/// Hard-potential differential cross section with angular cut-off,
/// `sigma(g, theta) = g sin(theta)`.
#[inline]
pub fn cross_section(g: f64, theta: f64) -> f64 {
    g * theta.sin()
}

/// Collinearity threshold for the cross product in the explicit boost.
const COLLINEAR_EPS: f64 = 1e-12;

/// The explicit Lorentz transform mapping the pair `(p, p')` to its
/// center-of-momentum frame: acting on contravariant components it sends
/// `p + p'` to `(sqrt(sbar), 0, 0, 0)` and `p - p'` to `(0, 0, 0, -gbar)`.
///
/// The matrix requires `p x p' != 0`; for (near-)collinear pairs the frame is
/// completed by rotating `p - p'` onto the z-axis first and composing with a
/// pure boost in the (t, z) plane.
pub fn lorentz_boost(p: &FourMomentum, p_prime: &FourMomentum) -> Result<[[f64; 4]; 4], KinematicsError> {
    let gbar = relative_momentum(p, p_prime)?;
    if gbar == 0.0 {
        return Err(KinematicsError::ZeroRelativeMomentum);
    }
    let sbar = gbar * gbar + 4.0;
    let sqrt_sbar = sbar.sqrt();
    let cr = cross3(p.spatial(), p_prime.spatial());
    let cr_norm = norm3(&cr);

    let sum0 = p.energy() + p_prime.energy();
    let diff0 = p.energy() - p_prime.energy();
    let sum = add3(p.spatial(), p_prime.spatial());
    let diff = sub3(p.spatial(), p_prime.spatial());

    if cr_norm < COLLINEAR_EPS {
        return collinear_boost(&sum, &diff, sum0, diff0, sqrt_sbar, gbar);
    }

    let pp = minkowski_product(p, p_prime);
    let denom = gbar * sqrt_sbar * cr_norm;
    let mut m = [[0.0; 4]; 4];
    m[0] = [sum0 / sqrt_sbar, -sum[0] / sqrt_sbar, -sum[1] / sqrt_sbar, -sum[2] / sqrt_sbar];
    m[1][0] = 2.0 * cr_norm / (gbar * sqrt_sbar);
    for i in 0..3 {
        m[1][i + 1] = 2.0
            * (p.spatial()[i] * (p.energy() + p_prime.energy() * pp)
                + p_prime.spatial()[i] * (p_prime.energy() + p.energy() * pp))
            / denom;
    }
    m[2] = [0.0, cr[0] / cr_norm, cr[1] / cr_norm, cr[2] / cr_norm];
    m[3] = [diff0 / gbar, -diff[0] / gbar, -diff[1] / gbar, -diff[2] / gbar];
    Ok(m)
}

/// Boost for collinear pairs: rotate so that `p - p'` lies along z, apply the
/// (t, z)-plane boost fixed by the defining relations, and compose.
fn collinear_boost(
    sum: &Vec3,
    diff: &Vec3,
    sum0: f64,
    diff0: f64,
    sqrt_sbar: f64,
    gbar: f64,
) -> Result<[[f64; 4]; 4], KinematicsError> {
    // |diff| > 0 because gbar > 0 and |p'0 - p0| <= |p' - p|.
    let diff_norm = norm3(diff);
    if diff_norm == 0.0 {
        return Err(KinematicsError::CollinearGeometry);
    }
    let ez = scale3(diff, 1.0 / diff_norm);
    // Any unit vector orthogonal to ez completes the rotation.
    let seed = if ez[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let ex_raw = sub3(&seed, &scale3(&ez, dot3(&seed, &ez)));
    let ex = scale3(&ex_raw, 1.0 / norm3(&ex_raw));
    let ey = cross3(&ez, &ex);

    // Components of p +- p' in the rotated frame: sum = (st, 0, 0, sz),
    // diff = (dt, 0, 0, dz) with sz = sum.ez, dz = |diff|.
    let sz = dot3(sum, &ez);
    let dz = diff_norm;

    // Boost rows fixed by Lambda(sum) = (sqrt(sbar),0,0,0) and
    // Lambda(diff) = (0,0,0,-gbar) in the rotated coordinates.
    let b00 = sum0 / sqrt_sbar;
    let b03 = -sz / sqrt_sbar;
    let b30 = diff0 / gbar;
    let b33 = -dz / gbar;

    // Compose with the rotation (acting on spatial components only).
    let mut m = [[0.0; 4]; 4];
    m[0][0] = b00;
    m[1][0] = 0.0;
    m[2][0] = 0.0;
    m[3][0] = b30;
    for i in 0..3 {
        m[0][i + 1] = b03 * ez[i];
        m[1][i + 1] = ex[i];
        m[2][i + 1] = ey[i];
        m[3][i + 1] = b33 * ez[i];
    }
    Ok(m)
}

/// Applies a 4x4 matrix to contravariant components.
#[inline]
pub fn apply_matrix4(m: &[[f64; 4]; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (row, o) in m.iter().zip(out.iter_mut()) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}
