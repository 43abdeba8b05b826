//! Maximum-likelihood fitting by iteratively reweighted least squares with
//! step-halving, plus Wald inference (standard errors from the inverse
//! observed information, two-sided normal p-values) and odds ratios.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::InteractionEvent;
use crate::logit::design::{ColumnSpec, DesignMatrix};
use crate::logit::num::{log_likelihood, sigmoid, two_sided_p};
use crate::logit::LogitError;
use crate::report::align_table;

/// Gradient max-norm below which the fit is declared converged.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Any |coefficient| beyond this during iteration is treated as
/// quasi-complete separation rather than silently capped.
pub const DIVERGENCE_BOUND: f64 = 30.0;

/// Inference statistics for one fitted design column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermStats {
    pub column: ColumnSpec,
    pub coefficient: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub odds_ratio: f64,
}

/// A fitted logistic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitModel {
    pub intercept: f64,
    pub intercept_se: f64,
    /// Per-column statistics in design-column order.
    pub terms: Vec<TermStats>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub converged: bool,
    /// Fingerprint of the event partition the design was built on.
    pub provenance: String,
}

/// One row of the odds-ratio report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OddsRatioRow {
    pub feature: String,
    pub coefficient: f64,
    pub odds_ratio: f64,
    /// Signed percent change in the odds per unit increase: (OR - 1) * 100.
    pub pct_change: f64,
}

impl LogitModel {
    pub fn term(&self, name: &str) -> Option<&TermStats> {
        self.terms.iter().find(|t| t.column.name() == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.term(name).map(|t| t.coefficient)
    }

    /// Linear predictor for an event.
    fn linear_predictor(&self, event: &InteractionEvent) -> Result<f64, LogitError> {
        let mut eta = self.intercept;
        for t in &self.terms {
            eta += t.coefficient * t.column.encode(event)?;
        }
        Ok(eta)
    }

    /// Yield probability, strictly inside (0,1). The complementary
    /// non-yield probability is `1 - p` (equivalently the logistic of the
    /// negated predictor).
    pub fn predict_proba(&self, event: &InteractionEvent) -> Result<f64, LogitError> {
        let eta = self.linear_predictor(event)?;
        Ok(sigmoid(eta).clamp(1e-12, 1.0 - 1e-12))
    }

    /// Probability over a raw design-space row (no intercept entry).
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        let eta = self.intercept
            + self
                .terms
                .iter()
                .zip(row)
                .map(|(t, &x)| t.coefficient * x)
                .sum::<f64>();
        sigmoid(eta).clamp(1e-12, 1.0 - 1e-12)
    }

    /// Binary decision: yield iff probability >= threshold (boundary
    /// inclusive). Threshold must lie strictly inside (0,1).
    pub fn classify(
        &self,
        event: &InteractionEvent,
        threshold: f64,
    ) -> Result<bool, LogitError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(LogitError::BadThreshold(threshold));
        }
        Ok(self.predict_proba(event)? >= threshold)
    }

    /// Odds ratio exp(beta) and signed percent odds change per term.
    pub fn odds_ratio_report(&self) -> Vec<OddsRatioRow> {
        self.terms
            .iter()
            .map(|t| OddsRatioRow {
                feature: t.column.name(),
                coefficient: t.coefficient,
                odds_ratio: t.odds_ratio,
                pct_change: (t.odds_ratio - 1.0) * 100.0,
            })
            .collect()
    }

    /// Aligned-text summary table (variable, coefficient, standard error,
    /// z, p, effect direction).
    pub fn render_summary(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .terms
            .iter()
            .map(|t| {
                vec![
                    t.column.name(),
                    format!("{:.3}", t.coefficient),
                    format!("{:.3}", t.std_error),
                    format!("{:.2}", t.z_score),
                    format!("{:.3}", t.p_value),
                    if t.coefficient >= 0.0 { "+" } else { "-" }.to_string(),
                ]
            })
            .collect();
        let mut out = align_table(
            &["Variable", "Coefficient", "Standard error", "z-score", "p-value", "Effect"],
            &rows,
        );
        out.push_str(&format!(
            "\nintercept {:.4} (se {:.4})  log-likelihood {:.4}  n {}  converged {}\n",
            self.intercept, self.intercept_se, self.log_likelihood, self.n_obs, self.converged
        ));
        out
    }

    /// Machine-readable summary (CSV).
    pub fn render_delimited(&self) -> String {
        let mut out =
            String::from("term,coefficient,std_error,z_score,p_value,odds_ratio\n");
        out.push_str(&format!(
            "(intercept),{:.10},{:.10},,,\n",
            self.intercept, self.intercept_se
        ));
        for t in &self.terms {
            out.push_str(&format!(
                "{},{:.10},{:.10},{:.6},{:.6e},{:.10}\n",
                t.column.name(),
                t.coefficient,
                t.std_error,
                t.z_score,
                t.p_value,
                t.odds_ratio
            ));
        }
        out
    }
}

fn eta_vector(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().copied().collect()
}

/// Gradient of the log-likelihood: X' (y - p).
fn gradient(x: &DMatrix<f64>, labels: &[bool], eta: &[f64]) -> DVector<f64> {
    let resid = DVector::from_iterator(
        labels.len(),
        labels
            .iter()
            .zip(eta)
            .map(|(&y, &e)| (if y { 1.0 } else { 0.0 }) - sigmoid(e)),
    );
    x.transpose() * resid
}

/// X' W X with W = diag(p (1 - p)).
fn information(x: &DMatrix<f64>, eta: &[f64]) -> DMatrix<f64> {
    let mut weighted = x.clone();
    for (i, &e) in eta.iter().enumerate() {
        let p = sigmoid(e);
        let w = (p * (1.0 - p)).sqrt();
        for j in 0..x.ncols() {
            weighted[(i, j)] *= w;
        }
    }
    weighted.transpose() * weighted
}

fn column_name(columns: &[ColumnSpec], j: usize) -> String {
    if j == 0 {
        "(intercept)".to_string()
    } else {
        columns[j - 1].name()
    }
}

/// Fits the model by IRLS with step-halving. Standard errors come from the
/// inverse observed information at the optimum; p-values are two-sided
/// under the normal approximation to z = beta / se.
pub fn fit(design: &DesignMatrix, tol: f64, max_iter: usize) -> Result<LogitModel, LogitError> {
    let n = design.n_rows();
    if n == 0 {
        return Err(LogitError::EmptyDesign);
    }
    let positives = design.labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        return Err(LogitError::SingleClass(positives, n));
    }

    let k = design.n_cols() + 1;
    let x = DMatrix::from_fn(n, k, |i, j| {
        if j == 0 {
            1.0
        } else {
            design.rows[i][j - 1]
        }
    });
    let labels = &design.labels;

    let mut beta = DVector::zeros(k);
    let mut eta = eta_vector(&x, &beta);
    let mut ll = log_likelihood(&eta, labels);
    let mut converged = false;

    for _ in 0..max_iter {
        let grad = gradient(&x, labels, &eta);
        if grad.amax() < tol {
            converged = true;
            break;
        }
        let info = information(&x, &eta);
        let delta = match Cholesky::new(info.clone()) {
            Some(chol) => chol.solve(&grad),
            None => {
                // pinpoint a culprit column: largest diagonal deficiency
                let j = (0..k)
                    .min_by(|&a, &b| info[(a, a)].partial_cmp(&info[(b, b)]).unwrap())
                    .unwrap_or(0);
                return Err(LogitError::Singular(column_name(&design.columns, j)));
            }
        };

        // step-halving keeps the log-likelihood non-decreasing
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &delta * lambda;
            let cand_eta = eta_vector(&x, &candidate);
            let cand_ll = log_likelihood(&cand_eta, labels);
            if cand_ll >= ll - 1e-12 {
                beta = candidate;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // cannot improve: numerically at the optimum
            converged = gradient(&x, labels, &eta).amax() < tol;
            break;
        }

        if beta.amax() > DIVERGENCE_BOUND {
            let j = (0..k)
                .max_by(|&a, &b| beta[a].abs().partial_cmp(&beta[b].abs()).unwrap())
                .unwrap();
            return Err(LogitError::Separation {
                feature: column_name(&design.columns, j),
                bound: DIVERGENCE_BOUND,
            });
        }
    }

    let info = information(&x, &eta);
    let covariance = match Cholesky::new(info) {
        Some(chol) => chol.inverse(),
        None => return Err(LogitError::Singular(column_name(&design.columns, 0))),
    };

    let terms = design
        .columns
        .iter()
        .enumerate()
        .map(|(idx, column)| {
            let j = idx + 1;
            let coefficient = beta[j];
            let std_error = covariance[(j, j)].sqrt();
            let z_score = coefficient / std_error;
            TermStats {
                column: column.clone(),
                coefficient,
                std_error,
                z_score,
                p_value: two_sided_p(z_score),
                odds_ratio: coefficient.exp(),
            }
        })
        .collect();

    Ok(LogitModel {
        intercept: beta[0],
        intercept_se: covariance[(0, 0)].sqrt(),
        terms,
        log_likelihood: ll,
        n_obs: n,
        converged,
        provenance: design.provenance.clone(),
    })
}

/// Intercept-only model over a label vector (used when stepwise selects
/// nothing).
pub fn intercept_only(
    labels: &[bool],
    provenance: &str,
) -> Result<LogitModel, LogitError> {
    let design = DesignMatrix {
        columns: vec![],
        rows: vec![vec![]; labels.len()],
        labels: labels.to_vec(),
        n_dropped: 0,
        provenance: provenance.to_string(),
    };
    fit(&design, DEFAULT_TOL, DEFAULT_MAX_ITER)
}
