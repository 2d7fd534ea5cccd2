#pragma once

#include <string>
#include <vector>

#include "occtip/curves.hpp"
#include "occtip/layers.hpp"
#include "occtip/ssm.hpp"
#include "occtip/tensor.hpp"
#include "occtip/tokenizer.hpp"

namespace occtip::duomamba {

struct EncoderConfig {
  int l_blocks = 6;
  int c_dim = 256;
  int s_tokens = 128;
  int k_neighbors = 32;
  int n_state = 16;
  int expand = 2;
  int embed_dim = 64;
  int curve_bits = curves::kDefaultBits;
  curves::CurveKind curve_a = curves::CurveKind::Hilbert;
  curves::CurveKind curve_b = curves::CurveKind::TransHilbert;
  ConvMode conv_mode = ConvMode::Standard;
  /// Both streams may share one ordering only when this is set.
  bool allow_same_curves = false;

  int inner_dim() const { return expand * c_dim; }

  /// Throws InvalidConfig naming the offending field.
  void validate() const;

  /// L=6, C=256, S=128, k=32.
  static EncoderConfig desk();
  /// L=2, C=64, S=64, k=16, N=8: sized for single-core training runs.
  static EncoderConfig toy();
  /// S=512, k=32, C=384, 1280-d output, L=20 so the parameter count lands
  /// near the reported 29.2M.
  static EncoderConfig paper();
  static EncoderConfig preset(const std::string& name);
};

/// Block-level ablation rows: (i) FPS order with causal conv, (ii) Hilbert
/// only, (iii) Trans-Hilbert only, (iv) both curves without conv, (v) full.
EncoderConfig component_ablation(const EncoderConfig& base, int row);
/// Ordering ablation rows: 0 FPS, 1 Z-order + Trans-Z-order, 2 Hilbert +
/// Z-order, 3 Hilbert + Trans-Hilbert.
EncoderConfig ordering_ablation(const EncoderConfig& base, int row);

class DuoMambaBlock {
 public:
  struct StreamCache {
    Mat projected;  // branch projection, original order
    Mat sorted;     // H′
    Mat conv;       // Conv1D(H′)
    Mat activated;  // H″
    ssm::ScanTrace scan;
    Mat unsorted;   // Unsort(S6(H″))
  };
  struct Cache {
    Mat input;
    LayerNorm::Cache norm;
    Mat normalized;  // Z_in
    Mat gate_pre;
    Mat gate;        // Z
    StreamCache h;
    StreamCache t;
    Mat mixed;       // H + T
  };

  DuoMambaBlock() = default;
  DuoMambaBlock(int c_dim, int inner_dim, int n_state, ConvMode conv_mode);

  void init(Rng& rng);

  Mat forward(const Mat& z_prev, const curves::Permutation& perm_h,
              const curves::Permutation& perm_t, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients and returns dL/dz_prev.
  Mat backward(const Cache& cache, const curves::Permutation& perm_h,
               const curves::Permutation& perm_t, const Mat& dout);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;
  static std::size_t count(int c_dim, int inner_dim, int n_state, ConvMode conv_mode);

  LayerNorm norm;
  Linear gate_proj;
  Linear branch_proj_h;
  Linear branch_proj_t;
  DepthwiseConv1d conv_h;
  DepthwiseConv1d conv_t;
  ssm::S6Params s6_h;
  ssm::S6Params s6_t;
  Linear out_proj;

 private:
  Mat stream_forward(const Mat& z_in, const Linear& proj, const DepthwiseConv1d& conv,
                     const ssm::S6Params& s6, const curves::Permutation& perm,
                     StreamCache* cache) const;
  Mat stream_backward(const StreamCache& cache, Linear& proj, DepthwiseConv1d& conv,
                      ssm::S6Params& s6, const curves::Permutation& perm, const Mat& dunsorted,
                      const Mat& z_in);
};

/// The two serialization orders of a token sequence, computed once from the
/// patch centers and shared by every block.
struct Orderings {
  curves::Permutation a;
  curves::Permutation b;
};

Orderings compute_orderings(const Mat& centers, const EncoderConfig& config);

/// Tokenizer + L blocks + per-token head + mean pool.
class Encoder {
 public:
  struct Cache {
    tokenizer::MiniPointNet::Cache embed;
    Orderings orderings;
    std::vector<DuoMambaBlock::Cache> blocks;
    Mat final_tokens;
  };

  Encoder() = default;
  explicit Encoder(const EncoderConfig& config);

  void init(Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// z^P for a token sequence (no tokenizer).
  Vec encode_tokens(const tokenizer::TokenSequence& tokens, Cache* cache = nullptr) const;
  /// z^P for a patch set, including the mini-PointNet.
  Vec forward(const tokenizer::PatchSet& patches, bool drop_color = false, Cache* cache = nullptr) const;
  /// z^P for a raw cloud (FPS + kNN + forward).
  Vec embed_cloud(const meshgen::PartialPointCloud& cloud) const;

  /// Backpropagates dL/dz^P through head, blocks, and (when the cache holds
  /// it) the mini-PointNet. Returns dL/dtokens.
  Mat backward(const Cache& cache, const Vec& dz, bool through_tokenizer = true);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;

  tokenizer::MiniPointNet embed;
  std::vector<DuoMambaBlock> blocks;
  Linear head;

 private:
  EncoderConfig config_;
};

/// Closed-form parameter count: tokenizer + blocks + output head.
std::size_t count_params(const EncoderConfig& config);

struct FlopsBreakdown {
  double tokenizer = 0;
  double blocks = 0;
  double head = 0;
  double total() const { return tokenizer + blocks + head; }
};

/// Multiply-adds per (channel, state, token) inside the scan: discretize
/// (mul, exp counted as 1), decay (mul), input (2 mul), add, and the readout
/// multiply-add.
inline constexpr double kScanFlopsPerState = 7.0;

/// Analytic forward FLOPs at `s_tokens`: 2·in·out per affine per token, 2·w
/// per conv channel per token, kScanFlopsPerState per scan state entry.
FlopsBreakdown count_flops(const EncoderConfig& config, int s_tokens);

/// Self-attention sublayers alone: L·(4·S²·C + 8·S·C²).
double attention_sublayer_flops(const EncoderConfig& config, int s_tokens);
/// A Transformer block at the same width: the attention sublayer plus a
/// 4×-expansion MLP (16·S·C²), times L. Tokenizer and head are the same as
/// for DuoMamba and are included.
double transformer_flops(const EncoderConfig& config, int s_tokens);

}  // namespace occtip::duomamba
