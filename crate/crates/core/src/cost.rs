//! Token accounting and dollar-cost / latency estimation per provider.
//!
//! Costs are linear in the provider-reported token counts; the byte-based
//! approximation below exists only for pre-run budgeting and is never
//! billed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatExchange, Pricing};
use crate::report::align_table;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("exchange from provider `{found}` cannot be billed with `{expected}` pricing")]
    ProviderMismatch { expected: String, found: String },
}

/// Aggregated spend and latency for one provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub provider: String,
    pub n_exchanges: usize,
    pub total_input_tokens: u64,
    pub total_cached_tokens: u64,
    pub total_output_tokens: u64,
    /// Dollars: sum of tokens/1e6 times the matching per-million price.
    pub total_cost: f64,
    pub mean_latency_secs: f64,
    pub p95_latency_secs: f64,
    pub per_event_cost: f64,
}

/// Sums usage over exchanges and prices it. Every exchange must belong to
/// the named provider.
pub fn estimate(
    exchanges: &[ChatExchange],
    provider: &str,
    pricing: &Pricing,
) -> Result<CostReport, CostError> {
    let mut input = 0u64;
    let mut cached = 0u64;
    let mut output = 0u64;
    let mut latencies: Vec<f64> = Vec::with_capacity(exchanges.len());
    for exchange in exchanges {
        if exchange.provider != provider {
            return Err(CostError::ProviderMismatch {
                expected: provider.to_string(),
                found: exchange.provider.clone(),
            });
        }
        input += exchange.usage.input_tokens;
        cached += exchange.usage.cached_input_tokens;
        output += exchange.usage.output_tokens;
        latencies.push(exchange.latency_secs);
    }
    let total_cost = (input as f64) / 1e6 * pricing.input
        + (cached as f64) / 1e6 * pricing.cached_input
        + (output as f64) / 1e6 * pricing.output;
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (mean, p95) = if latencies.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
        let p95 = latencies[((latencies.len() as f64 * 0.95).ceil() as usize)
            .clamp(1, latencies.len())
            - 1];
        (mean, p95)
    };
    Ok(CostReport {
        provider: provider.to_string(),
        n_exchanges: exchanges.len(),
        total_input_tokens: input,
        total_cached_tokens: cached,
        total_output_tokens: output,
        total_cost,
        mean_latency_secs: mean,
        p95_latency_secs: p95,
        per_event_cost: if exchanges.is_empty() {
            0.0
        } else {
            total_cost / exchanges.len() as f64
        },
    })
}

/// Deterministic pre-run token approximation: ceil(byte length / 4).
/// Provider-reported usage always overrides this for billing.
pub fn approx_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

impl CostReport {
    pub fn render_text(&self) -> String {
        let rows = vec![vec![
            self.provider.clone(),
            self.total_input_tokens.to_string(),
            self.total_cached_tokens.to_string(),
            self.total_output_tokens.to_string(),
            format!("{:.4}", self.total_cost),
            format!("{:.6}", self.per_event_cost),
            format!("{:.2}", self.mean_latency_secs),
            format!("{:.2}", self.p95_latency_secs),
        ]];
        align_table(
            &[
                "Provider",
                "Input tokens",
                "Cached tokens",
                "Output tokens",
                "Total cost ($)",
                "Per-event ($)",
                "Mean latency (s)",
                "p95 latency (s)",
            ],
            &rows,
        )
    }

    pub fn render_delimited(&self) -> String {
        format!(
            "provider,n,input_tokens,cached_tokens,output_tokens,total_cost,per_event_cost,\
             mean_latency,p95_latency\n{},{},{},{},{},{:.6},{:.8},{:.4},{:.4}\n",
            self.provider,
            self.n_exchanges,
            self.total_input_tokens,
            self.total_cached_tokens,
            self.total_output_tokens,
            self.total_cost,
            self.per_event_cost,
            self.mean_latency_secs,
            self.p95_latency_secs
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Usage;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exchange(provider: &str, input: u64, cached: u64, output: u64, latency: f64) -> ChatExchange {
        ChatExchange {
            fingerprint: "f".into(),
            request: serde_json::json!({}),
            response_text: String::new(),
            usage: Usage {
                input_tokens: input,
                cached_input_tokens: cached,
                output_tokens: output,
            },
            latency_secs: latency,
            provider: provider.into(),
        }
    }

    const GPT4O: Pricing = Pricing {
        input: 2.50,
        cached_input: 1.25,
        output: 10.00,
    };

    #[test]
    fn zero_exchanges_is_all_zero() {
        let report = estimate(&[], "gpt-4o", &GPT4O).unwrap();
        assert_eq!(report.total_cost, 0.0);
        assert_eq!(report.per_event_cost, 0.0);
        assert_eq!(report.mean_latency_secs, 0.0);
    }

    #[test]
    fn one_million_input_tokens_costs_the_input_price() {
        let report =
            estimate(&[exchange("gpt-4o", 1_000_000, 0, 0, 1.0)], "gpt-4o", &GPT4O).unwrap();
        assert!((report.total_cost - 2.50).abs() < 1e-12);
    }

    #[test]
    fn provider_mismatch_is_error() {
        let err =
            estimate(&[exchange("other", 1, 0, 0, 0.0)], "gpt-4o", &GPT4O).unwrap_err();
        assert!(matches!(err, CostError::ProviderMismatch { .. }));
    }

    #[test]
    fn synthetic_run_matches_hand_summed_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let exchanges: Vec<ChatExchange> = (0..100)
            .map(|_| {
                exchange(
                    "gpt-4o",
                    rng.random_range(100..4000),
                    rng.random_range(0..500),
                    rng.random_range(10..900),
                    rng.random_range(0.1..9.0),
                )
            })
            .collect();
        let report = estimate(&exchanges, "gpt-4o", &GPT4O).unwrap();
        // independent accumulation
        let mut want = 0.0;
        for e in &exchanges {
            want += e.usage.input_tokens as f64 * 2.50 / 1e6;
            want += e.usage.cached_input_tokens as f64 * 1.25 / 1e6;
            want += e.usage.output_tokens as f64 * 10.0 / 1e6;
        }
        assert!((report.total_cost - want).abs() < 1e-10);
        assert!((report.per_event_cost - want / 100.0).abs() < 1e-10);
        assert!(report.p95_latency_secs >= report.mean_latency_secs);
    }

    #[test]
    fn additivity_over_disjoint_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let exchanges: Vec<ChatExchange> = (0..60)
            .map(|_| {
                exchange(
                    "m",
                    rng.random_range(1..10_000),
                    rng.random_range(0..2_000),
                    rng.random_range(1..3_000),
                    0.5,
                )
            })
            .collect();
        let pricing = Pricing {
            input: 0.56,
            cached_input: 0.14,
            output: 2.23,
        };
        let whole = estimate(&exchanges, "m", &pricing).unwrap().total_cost;
        for split_at in [1, 13, 30, 59] {
            let a = estimate(&exchanges[..split_at], "m", &pricing).unwrap().total_cost;
            let b = estimate(&exchanges[split_at..], "m", &pricing).unwrap().total_cost;
            assert!((a + b - whole).abs() < 1e-10);
        }
    }

    #[test]
    fn approx_tokens_formula() {
        assert_eq!(approx_tokens(""), 0);
        assert_eq!(approx_tokens(&"x".repeat(400)), 100);
        assert_eq!(approx_tokens("abc"), 1);
        assert_eq!(approx_tokens("abcd"), 1);
        assert_eq!(approx_tokens("abcde"), 2);
    }

    #[test]
    fn monotone_in_added_exchanges() {
        let base = vec![exchange("m", 100, 0, 50, 1.0)];
        let mut more = base.clone();
        more.push(exchange("m", 1, 0, 1, 1.0));
        let p = Pricing {
            input: 1.0,
            cached_input: 0.5,
            output: 2.0,
        };
        assert!(
            estimate(&more, "m", &p).unwrap().total_cost
                >= estimate(&base, "m", &p).unwrap().total_cost
        );
    }
}
