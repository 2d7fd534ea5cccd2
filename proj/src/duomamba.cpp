#include "occtip/duomamba.hpp"

#include "occtip/error.hpp"

namespace occtip::duomamba {

using curves::CurveKind;
using curves::Permutation;

void EncoderConfig::validate() const {
  auto check = [](bool ok, const std::string& field, const std::string& why) {
    if (!ok) fail(ErrorKind::InvalidConfig, field + ": " + why);
  };
  check(l_blocks >= 0, "l_blocks", "must be non-negative");
  check(c_dim >= 1, "c_dim", "must be positive");
  check(s_tokens >= 1, "s_tokens", "must be positive");
  check(k_neighbors >= 1, "k_neighbors", "must be positive");
  check(n_state >= 1, "n_state", "must be positive");
  check(expand >= 1, "expand", "must be positive");
  check(embed_dim >= 1, "embed_dim", "must be positive");
  check(curve_bits >= 1 && curve_bits <= 16, "curve_bits", "must be in [1, 16]");
  check(curve_a != curve_b || allow_same_curves, "curve_b",
        "must differ from curve_a unless allow_same_curves is set");
}

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.l_blocks = 2;
  c.c_dim = 64;
  c.s_tokens = 64;
  c.k_neighbors = 16;
  c.n_state = 8;
  return c;
}

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.l_blocks = 20;
  c.c_dim = 384;
  c.s_tokens = 512;
  c.k_neighbors = 32;
  c.n_state = 16;
  c.embed_dim = 1280;
  return c;
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "toy") return toy();
  if (name == "paper") return paper();
  fail(ErrorKind::ConfigError, "unknown preset '" + name + "'");
}

EncoderConfig component_ablation(const EncoderConfig& base, int row) {
  EncoderConfig c = base;
  c.allow_same_curves = false;
  switch (row) {
    case 1:
      c.curve_a = c.curve_b = CurveKind::FpsOrder;
      c.conv_mode = ConvMode::Causal;
      c.allow_same_curves = true;
      break;
    case 2:
      c.curve_a = c.curve_b = CurveKind::Hilbert;
      c.conv_mode = ConvMode::Standard;
      c.allow_same_curves = true;
      break;
    case 3:
      c.curve_a = c.curve_b = CurveKind::TransHilbert;
      c.conv_mode = ConvMode::Standard;
      c.allow_same_curves = true;
      break;
    case 4:
      c.curve_a = CurveKind::Hilbert;
      c.curve_b = CurveKind::TransHilbert;
      c.conv_mode = ConvMode::None;
      break;
    case 5:
      c.curve_a = CurveKind::Hilbert;
      c.curve_b = CurveKind::TransHilbert;
      c.conv_mode = ConvMode::Standard;
      break;
    default: fail(ErrorKind::InvalidConfig, "component ablation rows are 1..5");
  }
  return c;
}

EncoderConfig ordering_ablation(const EncoderConfig& base, int row) {
  EncoderConfig c = base;
  c.conv_mode = ConvMode::Standard;
  c.allow_same_curves = false;
  switch (row) {
    case 0:
      c.curve_a = c.curve_b = CurveKind::FpsOrder;
      c.allow_same_curves = true;
      break;
    case 1:
      c.curve_a = CurveKind::Morton;
      c.curve_b = CurveKind::TransMorton;
      break;
    case 2:
      c.curve_a = CurveKind::Hilbert;
      c.curve_b = CurveKind::Morton;
      break;
    case 3:
      c.curve_a = CurveKind::Hilbert;
      c.curve_b = CurveKind::TransHilbert;
      break;
    default: fail(ErrorKind::InvalidConfig, "ordering ablation rows are 0..3");
  }
  return c;
}

// ---------------------------------------------------------------------------

DuoMambaBlock::DuoMambaBlock(int c_dim, int inner_dim, int n_state, ConvMode conv_mode)
    : norm(c_dim),
      gate_proj(c_dim, inner_dim),
      branch_proj_h(c_dim, inner_dim),
      branch_proj_t(c_dim, inner_dim),
      conv_h(inner_dim, conv_mode),
      conv_t(inner_dim, conv_mode),
      s6_h(inner_dim, n_state),
      s6_t(inner_dim, n_state),
      out_proj(inner_dim, c_dim) {}

void DuoMambaBlock::init(Rng& rng) {
  gate_proj.init_uniform(rng);
  branch_proj_h.init_uniform(rng);
  branch_proj_t.init_uniform(rng);
  conv_h.init_uniform(rng);
  conv_t.init_uniform(rng);
  s6_h.init(rng);
  s6_t.init(rng);
  out_proj.init_uniform(rng);
}

Mat DuoMambaBlock::stream_forward(const Mat& z_in, const Linear& proj, const DepthwiseConv1d& conv,
                                  const ssm::S6Params& s6, const Permutation& perm,
                                  StreamCache* cache) const {
  Mat projected = proj.forward(z_in);
  Mat sorted = perm.gather(projected);
  Mat conv_out = conv.forward(sorted);
  Mat activated = silu(conv_out);
  Mat scanned = ssm::selective_scan(activated, s6, cache ? &cache->scan : nullptr);
  Mat unsorted = perm.scatter(scanned);
  if (cache) {
    cache->projected = std::move(projected);
    cache->sorted = std::move(sorted);
    cache->conv = std::move(conv_out);
    cache->activated = std::move(activated);
    cache->unsorted = unsorted;
  }
  return unsorted;
}

Mat DuoMambaBlock::forward(const Mat& z_prev, const Permutation& perm_h, const Permutation& perm_t,
                           Cache* cache) const {
  const auto s = static_cast<std::size_t>(z_prev.rows());
  if (perm_h.size() != s || perm_t.size() != s) {
    fail(ErrorKind::ShapeError, "permutation size does not match token count");
  }
  LayerNorm::Cache norm_cache;
  Mat z_in = norm.forward(z_prev, cache ? &norm_cache : nullptr);
  Mat gate_pre = gate_proj.forward(z_in);
  Mat gate = silu(gate_pre);
  const Mat h_branch = stream_forward(z_in, branch_proj_h, conv_h, s6_h, perm_h, cache ? &cache->h : nullptr);
  const Mat t_branch = stream_forward(z_in, branch_proj_t, conv_t, s6_t, perm_t, cache ? &cache->t : nullptr);
  Mat mixed = h_branch.cwiseProduct(gate) + t_branch.cwiseProduct(gate);
  Mat out = z_prev + out_proj.forward(mixed);
  if (cache) {
    cache->input = z_prev;
    cache->norm = std::move(norm_cache);
    cache->normalized = std::move(z_in);
    cache->gate_pre = std::move(gate_pre);
    cache->gate = std::move(gate);
    cache->mixed = std::move(mixed);
  }
  return out;
}

Mat DuoMambaBlock::stream_backward(const StreamCache& cache, Linear& proj, DepthwiseConv1d& conv,
                                   ssm::S6Params& s6, const Permutation& perm,
                                   const Mat& dunsorted, const Mat& z_in) {
  const Mat dscanned = perm.gather(dunsorted);
  const Mat dactivated = ssm::selective_scan_backward(cache.scan, s6, dscanned);
  const Mat dconv = silu_backward(cache.conv, dactivated);
  const Mat dsorted = conv.backward(cache.sorted, dconv);
  const Mat dprojected = perm.scatter(dsorted);
  return proj.backward(z_in, dprojected);
}

Mat DuoMambaBlock::backward(const Cache& cache, const Permutation& perm_h,
                            const Permutation& perm_t, const Mat& dout) {
  const Mat dmixed = out_proj.backward(cache.mixed, dout);
  const Mat dgate = dmixed.cwiseProduct(cache.h.unsorted + cache.t.unsorted);
  const Mat dh = dmixed.cwiseProduct(cache.gate);
  Mat dz_in = stream_backward(cache.h, branch_proj_h, conv_h, s6_h, perm_h, dh, cache.normalized);
  dz_in += stream_backward(cache.t, branch_proj_t, conv_t, s6_t, perm_t, dh, cache.normalized);
  dz_in += gate_proj.backward(cache.normalized, silu_backward(cache.gate_pre, dgate));
  return dout + norm.backward(cache.norm, dz_in);
}

void DuoMambaBlock::collect(const std::string& prefix, ParamList& out) {
  norm.collect(prefix + ".norm", out);
  gate_proj.collect(prefix + ".gate_proj", out);
  branch_proj_h.collect(prefix + ".branch_proj_h", out);
  branch_proj_t.collect(prefix + ".branch_proj_t", out);
  conv_h.collect(prefix + ".conv_h", out);
  conv_t.collect(prefix + ".conv_t", out);
  s6_h.collect(prefix + ".s6_h", out);
  s6_t.collect(prefix + ".s6_t", out);
  out_proj.collect(prefix + ".out_proj", out);
}

std::size_t DuoMambaBlock::num_params() const {
  return norm.num_params() + gate_proj.num_params() + branch_proj_h.num_params() +
         branch_proj_t.num_params() + conv_h.num_params() + conv_t.num_params() +
         s6_h.num_params() + s6_t.num_params() + out_proj.num_params();
}

std::size_t DuoMambaBlock::count(int c_dim, int inner_dim, int n_state, ConvMode conv_mode) {
  const std::size_t conv =
      conv_mode == ConvMode::None
          ? 0
          : static_cast<std::size_t>(inner_dim) * (DepthwiseConv1d::width_for(conv_mode) + 1);
  return 2 * static_cast<std::size_t>(c_dim) + 3 * Linear::count(c_dim, inner_dim) + 2 * conv +
         2 * ssm::S6Params::count(inner_dim, n_state) + Linear::count(inner_dim, c_dim);
}

// ---------------------------------------------------------------------------

Orderings compute_orderings(const Mat& centers, const EncoderConfig& config) {
  std::vector<Vec3> pts(static_cast<std::size_t>(centers.rows()));
  for (Eigen::Index i = 0; i < centers.rows(); ++i) pts[static_cast<std::size_t>(i)] = centers.row(i).transpose();
  Orderings o;
  o.a = curves::sort_by_curve(pts, config.curve_a, config.curve_bits);
  o.b = config.curve_b == config.curve_a ? o.a
                                         : curves::sort_by_curve(pts, config.curve_b, config.curve_bits);
  return o;
}

Encoder::Encoder(const EncoderConfig& config)
    : embed(config.c_dim), head(config.c_dim, config.embed_dim), config_(config) {
  config.validate();
  blocks.reserve(static_cast<std::size_t>(config.l_blocks));
  for (int l = 0; l < config.l_blocks; ++l) {
    blocks.emplace_back(config.c_dim, config.inner_dim(), config.n_state, config.conv_mode);
  }
}

void Encoder::init(Rng& rng) {
  embed.init(rng);
  for (auto& b : blocks) b.init(rng);
  head.init_uniform(rng);
}

Vec Encoder::encode_tokens(const tokenizer::TokenSequence& tokens, Cache* cache) const {
  if (tokens.tokens.cols() != config_.c_dim) fail(ErrorKind::ShapeError, "token width does not match c_dim");
  if (tokens.centers.rows() != tokens.tokens.rows()) fail(ErrorKind::ShapeError, "one center per token required");
  Orderings orderings = compute_orderings(tokens.centers, config_);
  Mat z = tokens.tokens;
  if (cache) cache->blocks.resize(blocks.size());
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    z = blocks[l].forward(z, orderings.a, orderings.b, cache ? &cache->blocks[l] : nullptr);
  }
  const Mat projected = head.forward(z);
  Vec pooled = projected.colwise().mean().transpose();
  if (cache) {
    cache->orderings = std::move(orderings);
    cache->final_tokens = std::move(z);
  }
  return pooled;
}

Vec Encoder::forward(const tokenizer::PatchSet& patches, bool drop_color, Cache* cache) const {
  if (patches.k != config_.k_neighbors) fail(ErrorKind::ShapeError, "patch size does not match k_neighbors");
  const auto tokens = embed.forward(patches, drop_color, cache ? &cache->embed : nullptr);
  return encode_tokens(tokens, cache);
}

Vec Encoder::embed_cloud(const meshgen::PartialPointCloud& cloud) const {
  return forward(tokenizer::make_patches(cloud, config_.s_tokens, config_.k_neighbors));
}

Mat Encoder::backward(const Cache& cache, const Vec& dz, bool through_tokenizer) {
  const Eigen::Index s = cache.final_tokens.rows();
  const Mat dprojected = (dz.transpose() / static_cast<double>(s)).replicate(s, 1);
  Mat dtokens = head.backward(cache.final_tokens, dprojected);
  for (std::size_t l = blocks.size(); l-- > 0;) {
    dtokens = blocks[l].backward(cache.blocks[l], cache.orderings.a, cache.orderings.b, dtokens);
  }
  if (through_tokenizer) embed.backward(cache.embed, config_.k_neighbors, dtokens);
  return dtokens;
}

void Encoder::collect(const std::string& prefix, ParamList& out) {
  embed.collect(prefix + ".embed", out);
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(prefix + ".blocks." + std::to_string(l), out);
  head.collect(prefix + ".head", out);
}

std::size_t Encoder::num_params() const {
  std::size_t total = embed.num_params() + head.num_params();
  for (const auto& b : blocks) total += b.num_params();
  return total;
}

std::size_t count_params(const EncoderConfig& config) {
  return tokenizer::MiniPointNet::count(config.c_dim) +
         static_cast<std::size_t>(config.l_blocks) *
             DuoMambaBlock::count(config.c_dim, config.inner_dim(), config.n_state, config.conv_mode) +
         Linear::count(config.c_dim, config.embed_dim);
}

// ---------------------------------------------------------------------------

FlopsBreakdown count_flops(const EncoderConfig& config, int s_tokens) {
  const double s = s_tokens;
  const double c = config.c_dim;
  const double di = config.inner_dim();
  const double n = config.n_state;
  const double r = ssm::S6Params::rank_for(config.inner_dim());
  const double k = config.k_neighbors;
  const double w = DepthwiseConv1d::width_for(config.conv_mode);
  const double hidden = tokenizer::MiniPointNet::kHidden;
  const double in = tokenizer::MiniPointNet::kInput;

  FlopsBreakdown f;
  f.tokenizer = s * k * (2 * in * hidden + 2 * hidden * c) + s * 2 * c * c;

  const double per_stream = 2 * c * di            // branch projection
                            + 2 * w * di          // depthwise conv
                            + 2 * (2 * di * n)    // B and C projections
                            + 2 * di * r + 2 * r * di  // Δ bottleneck
                            + kScanFlopsPerState * di * n + 2 * di;  // scan + skip
  const double per_token = 2 * c * di      // gate
                           + 2 * per_stream
                           + 2 * di * c;   // out_proj
  f.blocks = config.l_blocks * s * per_token;
  f.head = s * 2 * c * config.embed_dim + s * config.embed_dim;
  return f;
}

double attention_sublayer_flops(const EncoderConfig& config, int s_tokens) {
  const double s = s_tokens;
  const double c = config.c_dim;
  return config.l_blocks * (4 * s * s * c + 8 * s * c * c);
}

double transformer_flops(const EncoderConfig& config, int s_tokens) {
  const double s = s_tokens;
  const double c = config.c_dim;
  const FlopsBreakdown shared = count_flops(config, s_tokens);
  return attention_sublayer_flops(config, s_tokens) + config.l_blocks * 16 * s * c * c +
         shared.tokenizer + shared.head;
}

}  // namespace occtip::duomamba
