//! Adaptive Gauss-Kronrod quadrature (G7/K15) for the improper lifetime
//! integrals. Segments are refined worst-error-first until the accumulated
//! error estimate drops below the relative tolerance.

use crate::error::{Error, Result};

// QUADPACK 15-point Kronrod abscissae on [0, 1] and the embedded 7-point
// Gauss weights (odd-indexed nodes).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Kronrod pass over [a, b]: returns (K15 value, |K15 - G7| estimate).
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = WGK[7] * f_center;
    let mut gauss = WG[3] * f_center;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integrate `f` over [a, b] to the given relative tolerance.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const MAX_SEGMENTS: usize = 4000;
    let (value, error) = kronrod(f, a, b);
    let mut segments = vec![Segment { a, b, value, error }];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        let bound = rel_tol * total.abs().max(f64::MIN_POSITIVE);
        if total_err <= bound {
            return Ok(total);
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                achieved: total_err / total.abs().max(f64::MIN_POSITIVE),
                required: rel_tol,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval no longer splittable in f64; accept its estimate.
            segments.push(Segment { error: 0.0, ..seg });
            continue;
        }
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let (value, error) = kronrod(f, lo, hi);
            segments.push(Segment { a: lo, b: hi, value, error });
        }
    }
}

/// Integrate `f` over [0, inf) to the given relative tolerance via the
/// substitution `t = scale * u / (1 - u)`, `u` in (0, 1). `scale` should sit
/// near the bulk of the integrand's mass so the transformed integrand is
/// well spread over the unit interval.
pub(crate) fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: &F,
    scale: f64,
    rel_tol: f64,
) -> Result<f64> {
    let c = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let g = |u: f64| {
        let om = 1.0 - u;
        let t = c * u / om;
        if !t.is_finite() {
            return 0.0;
        }
        let jac = c / (om * om);
        let v = f(t) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(&g, 0.0, 1.0, rel_tol)
}
