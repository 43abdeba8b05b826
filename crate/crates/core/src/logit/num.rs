//! Scalar numerics for the logistic model.

/// Logistic function 1 / (1 + exp(-x)), computed without overflow on
/// either tail.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(x)) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of labels under linear predictors `eta`:
/// sum of y*eta - ln(1 + exp(eta)).
pub fn log_likelihood(eta: &[f64], labels: &[bool]) -> f64 {
    eta.iter()
        .zip(labels)
        .map(|(&e, &y)| if y { e - softplus(e) } else { -softplus(e) })
        .sum()
}

/// Standard normal CDF via the Zelen–Severo polynomial approximation
/// (Abramowitz & Stegun 26.2.17); absolute error below 7.5e-8.
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    const B1: f64 = 0.319381530;
    const B2: f64 = -0.356563782;
    const B3: f64 = 1.781477937;
    const B4: f64 = -1.821255978;
    const B5: f64 = 1.330274429;
    const P: f64 = 0.2316419;
    let t = 1.0 / (1.0 + P * x);
    let poly = t * (B1 + t * (B2 + t * (B3 + t * (B4 + t * B5))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (1.0 - pdf * poly).clamp(0.0, 1.0)
}

/// Two-sided p-value of a z statistic under the normal approximation.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-14);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        // complementarity without catastrophic cancellation
        for x in [-30.0, -3.0, 0.0, 1.5, 20.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }

    // Reference values computed with scipy.stats.norm.cdf; the
    // approximation is specified to 7.5e-8 absolute.
    #[test]
    fn normal_cdf_matches_reference() {
        let cases = [
            (0.0, 0.500000000000),
            (0.5, 0.691462461274),
            (1.0, 0.841344746069),
            (1.959963984540, 0.975000000000),
            (2.0, 0.977249868052),
            (3.0, 0.998650101968),
            (5.0, 0.999999713348),
            (-1.0, 0.158655253931),
            (-2.5, 0.006209665326),
            (-5.0, 0.000000286652),
        ];
        for (x, want) in cases {
            let got = normal_cdf(x);
            assert!(
                (got - want).abs() < 1e-7,
                "Phi({x}) = {got}, reference {want}"
            );
        }
    }

    #[test]
    fn two_sided_p_matches_reference() {
        // scipy: 2*norm.sf(2.74) = 6.143918e-3
        assert!((two_sided_p(-2.74) - 6.143918e-3).abs() < 2e-7);
        assert!((two_sided_p(2.74) - 6.143918e-3).abs() < 2e-7);
        assert!((two_sided_p(0.0) - 1.0).abs() < 2e-7);
        assert!(two_sided_p(20.99) < 1e-7);
    }

    #[test]
    fn log_likelihood_of_even_split_at_zero() {
        let eta = [0.0, 0.0];
        let labels = [true, false];
        let ll = log_likelihood(&eta, &labels);
        assert!((ll - 2.0 * (0.5f64).ln()).abs() < 1e-12);
    }
}
