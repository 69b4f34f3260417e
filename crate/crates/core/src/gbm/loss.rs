//! Logistic loss on raw margins.

pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood of label `y` under margin `margin`.
pub fn logistic_loss(y: u8, margin: f64) -> f64 {
    // log(1 + e^m) - y m, computed stably
    let softplus = if margin > 0.0 {
        margin + (-margin).exp().ln_1p()
    } else {
        margin.exp().ln_1p()
    };
    softplus - f64::from(y) * margin
}

/// First and second derivative of the loss with respect to the margin.
pub fn gradient_hessian(y: u8, margin: f64) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(y), p * (1.0 - p))
}

pub fn mean_loss(y: &[u8], margins: &[f64]) -> f64 {
    y.iter().zip(margins).map(|(&y, &m)| logistic_loss(y, m)).sum::<f64>() / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((logistic_loss(1, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logistic_loss(0, 800.0).is_finite());
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(m in -8.0f64..8.0, y in 0u8..=1) {
            let step = 1e-4;
            let (g, h) = gradient_hessian(y, m);
            let fd_g = (logistic_loss(y, m + step) - logistic_loss(y, m - step)) / (2.0 * step);
            let gp = gradient_hessian(y, m + step).0;
            let gm = gradient_hessian(y, m - step).0;
            let fd_h = (gp - gm) / (2.0 * step);
            prop_assert!((g - fd_g).abs() < 1e-6);
            prop_assert!((h - fd_h).abs() < 1e-6);
        }
    }
}
