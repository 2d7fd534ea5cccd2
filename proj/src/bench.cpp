#include "occtip/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace occtip::bench {

double measure_latency_ms(const duomamba::EncoderConfig& base, int s_tokens, int runs, int warmup,
                          std::uint64_t seed) {
  duomamba::EncoderConfig config = base;
  config.s_tokens = s_tokens;
  duomamba::Encoder encoder(config);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s_tokens)));
  encoder.init(rng);
  tokenizer::TokenSequence seq;
  seq.tokens.resize(s_tokens, config.c_dim);
  seq.centers.resize(s_tokens, 3);
  fill_normal(seq.tokens, 1.0, rng);
  fill_uniform(seq.centers, -1.0, 1.0, rng);

  for (int i = 0; i < warmup; ++i) encoder.encode_tokens(seq);
  std::vector<double> times;
  volatile double sink = 0.0;  // keeps the forward pass observable
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    sink = sink + encoder.encode_tokens(seq)(0);
    const auto end = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(end - start).count());
  }
  if (times.empty()) return 0.0;
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  const double median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  return median;
}

std::vector<Row> run(const duomamba::EncoderConfig& flops_config, const duomamba::EncoderConfig& latency_config,
                     const std::vector<int>& sizes, int runs, int warmup, std::uint64_t seed) {
  std::vector<Row> rows;
  for (int s : sizes) {
    Row r;
    r.s_tokens = s;
    r.duomamba_flops = duomamba::count_flops(flops_config, s).total();
    r.attention_flops = duomamba::attention_sublayer_flops(flops_config, s);
    r.transformer_flops = duomamba::transformer_flops(flops_config, s);
    if (runs > 0) r.latency_ms = measure_latency_ms(latency_config, s, runs, warmup, seed);
    rows.push_back(r);
  }
  return rows;
}

std::string to_csv(const std::vector<Row>& rows) {
  std::ostringstream out;
  out << "s_tokens,duomamba_flops,attention_flops,transformer_flops,latency_ms\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.6e,%.6e,%.6e,%.6f\n", r.s_tokens, r.duomamba_flops, r.attention_flops,
                  r.transformer_flops, r.latency_ms);
    out << line;
  }
  return out.str();
}

std::string to_table(const std::vector<Row>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%8s %16s %16s %16s %12s\n", "S", "DuoMamba GFLOPs", "attn-sub GFLOPs",
                "Transformer GFLOPs", "latency ms");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%8d %16.3f %16.3f %16.3f %12.3f\n", r.s_tokens, r.duomamba_flops / 1e9,
                  r.attention_flops / 1e9, r.transformer_flops / 1e9, r.latency_ms);
    out << line;
  }
  return out.str();
}

}  // namespace occtip::bench
