#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of `sigmoid(logit)` against `y`, and its derivative
/// w.r.t. the logit (`p − y`).
pub fn bce_with_logit(logit: f64, y: f64) -> (f64, f64) {
    // −[y log p + (1−y) log(1−p)] = softplus(z) − y z
    let loss = softplus(logit) - y * logit;
    (loss, sigmoid(logit) - y)
}

/// Cross-entropy on a probability; clipped away from 0 and 1.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `−log softmax(pos)` over `[pos, negs...]`. Returns the loss, `∂/∂pos`
/// and `∂/∂neg_j`.
pub fn info_nce_loss(pos: f64, negs: &[f64]) -> (f64, f64, Vec<f64>) {
    let max = negs.iter().copied().fold(pos, f64::max);
    let denom = (pos - max).exp() + negs.iter().map(|&s| (s - max).exp()).sum::<f64>();
    let lse = max + denom.ln();
    let loss = lse - pos;
    let grad_pos = (pos - lse).exp() - 1.0;
    let grad_negs = negs.iter().map(|&s| (s - lse).exp()).collect();
    (loss, grad_pos, grad_negs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bce_reference_values() {
        assert_relative_eq!(bce_with_logit(0.0, 1.0).0, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(bce_loss(0.5, 1.0), 0.693_147_180_56, epsilon = 1e-10);
        let (l, g) = bce_with_logit(2.0, 0.0);
        assert_relative_eq!(l, 2.126_928_011_04, epsilon = 1e-10);
        assert_relative_eq!(g, 0.880_797_077_98, epsilon = 1e-10);
        assert!(bce_loss(1.0, 1.0) < 1e-15);
        assert!(bce_loss(0.0, 0.0) < 1e-15);
        assert!(bce_with_logit(40.0, 1.0).0 < 1e-15);
    }

    #[test]
    fn info_nce_reference_values() {
        let (l, _, _) = info_nce_loss(0.3, &[0.3; 10]);
        assert_relative_eq!(l, 11f64.ln(), epsilon = 1e-12);
        let (l, _, _) = info_nce_loss(1.0, &[0.0, 0.0]);
        assert_relative_eq!(l, 0.551_444_713_93, epsilon = 1e-10);
        let (l, _, _) = info_nce_loss(5.0, &[0.0; 10]);
        assert_relative_eq!(l, 0.065_206_551_07, epsilon = 1e-10);
        let (l, _, _) = info_nce_loss(500.0, &[0.0; 3]);
        assert!(l < 1e-100);
    }

    #[test]
    fn info_nce_gradient_matches_fd() {
        let negs = [0.4, -1.2, 2.2];
        let (_, gp, gn) = info_nce_loss(0.9, &negs);
        let h = 1e-6;
        let fd = (info_nce_loss(0.9 + h, &negs).0 - info_nce_loss(0.9 - h, &negs).0) / (2.0 * h);
        assert!((fd - gp).abs() < 1e-8);
        for j in 0..3 {
            let mut up = negs;
            let mut dn = negs;
            up[j] += h;
            dn[j] -= h;
            let fd = (info_nce_loss(0.9, &up).0 - info_nce_loss(0.9, &dn).0) / (2.0 * h);
            assert!((fd - gn[j]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn losses_finite_for_finite_inputs(z in -1e6f64..1e6, y in 0u8..2, negs in proptest::collection::vec(-1e6f64..1e6, 1..12)) {
            let (l, g) = bce_with_logit(z, y as f64);
            prop_assert!(l.is_finite() && l >= 0.0 && g.is_finite());
            let (l, gp, gn) = info_nce_loss(z, &negs);
            prop_assert!(l.is_finite() && l >= 0.0 && gp.is_finite());
            prop_assert!(gn.iter().all(|g| g.is_finite()));
        }
    }
}
