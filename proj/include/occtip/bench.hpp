#pragma once

#include <string>
#include <vector>

#include "occtip/duomamba.hpp"

namespace occtip::bench {

struct Row {
  int s_tokens = 0;
  double duomamba_flops = 0;
  /// Attention sublayer only: L·(4S²C + 8SC²).
  double attention_flops = 0;
  /// Full Transformer encoder at the same width (attention + MLP + tokenizer + head).
  double transformer_flops = 0;
  /// Median forward latency of the token encoder in milliseconds; 0 when not measured.
  double latency_ms = 0;
};

/// Median wall time of `runs` forward passes over random tokens after
/// `warmup` untimed passes.
double measure_latency_ms(const duomamba::EncoderConfig& config, int s_tokens, int runs, int warmup,
                          std::uint64_t seed);

/// Analytic columns from `flops_config`; latency from `latency_config` when
/// `runs` > 0.
std::vector<Row> run(const duomamba::EncoderConfig& flops_config, const duomamba::EncoderConfig& latency_config,
                     const std::vector<int>& sizes, int runs, int warmup, std::uint64_t seed);

std::string to_csv(const std::vector<Row>& rows);
std::string to_table(const std::vector<Row>& rows);

}  // namespace occtip::bench
