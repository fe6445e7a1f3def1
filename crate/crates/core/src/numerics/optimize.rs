//! One-dimensional golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizer of a unimodal `f` on `[a, b]`, to absolute tolerance `tol`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    golden_section_min(|x| -f(x), a, b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let x = golden_section_min(|x| (x - 1.25).powi(2) + 3.0, -10.0, 10.0, 1e-10);
        // flat minima resolve only to about sqrt(eps)
        assert!((x - 1.25).abs() < 1e-7);
    }

    #[test]
    fn maximizes_rayleigh_kernel() {
        // r·exp(−r²/2) peaks at r = 1
        let x = golden_section_max(|r| r * (-0.5 * r * r).exp(), 0.0, 20.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-7);
    }
}
