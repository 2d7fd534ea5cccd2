#include "occtip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "occtip/align.hpp"
#include "occtip/duomamba.hpp"
#include "occtip/error.hpp"
#include "occtip/model.hpp"

namespace occtip::train {

std::string to_string(GradOp op) {
  switch (op) {
    case GradOp::Affine: return "affine";
    case GradOp::MiniPointNet: return "mini-pointnet";
    case GradOp::Conv: return "conv";
    case GradOp::S6: return "s6";
    case GradOp::Block: return "block";
    case GradOp::Heads: return "heads";
    case GradOp::Temperature: return "temperature";
    case GradOp::EndToEnd: return "end-to-end";
  }
  return "affine";
}

const std::vector<GradOp>& all_grad_ops() {
  static const std::vector<GradOp> ops = {GradOp::Affine, GradOp::MiniPointNet, GradOp::Conv,
                                          GradOp::S6,     GradOp::Block,        GradOp::Heads,
                                          GradOp::Temperature, GradOp::EndToEnd};
  return ops;
}

GradOp grad_op_from_string(const std::string& name) {
  for (auto op : all_grad_ops()) {
    if (to_string(op) == name) return op;
  }
  fail(ErrorKind::InvalidConfig, "unknown grad-check op '" + name + "'");
}

GradCheckResult check_gradients(ParamList& params, const std::function<double()>& loss,
                                const std::function<void()>& analytic, double h, std::size_t max_entries,
                                std::uint64_t seed) {
  analytic();
  std::vector<Mat> grads;
  for (const auto& p : params) {
    if (!all_finite(p.param->grad)) throw NumericalError(p.name + ".grad", -1, "non-finite analytic gradient");
    grads.push_back(p.param->grad);
  }

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat& value = params[t].param->value;
    const auto size = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> entries(size);
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (size > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (auto i : entries) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = loss();
      value.data()[i] = saved - h;
      const double down = loss();
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      if (!std::isfinite(numeric)) throw NumericalError(params[t].name, -1, "non-finite numeric gradient");
      const double a = grads[t].data()[i];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    result.entries_checked += entries.size();
    const double denom = std::sqrt(na) + std::sqrt(nn);
    const double rel = denom < 1e-12 ? 0.0 : std::sqrt(diff) / denom;
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_tensor = params[t].name;
    }
  }
  return result;
}

namespace {

constexpr std::size_t kMaxEntries = 24;

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  fill_uniform(m, -1.0, 1.0, rng);
  return m;
}

void zero(ParamList& params) {
  for (auto& p : params) p.param->zero_grad();
}

double project_sum(const Mat& y, const Mat& r) { return y.cwiseProduct(r).sum(); }

curves::Permutation random_permutation(int n, Rng& rng) {
  std::vector<std::uint32_t> f(static_cast<std::size_t>(n));
  std::iota(f.begin(), f.end(), 0u);
  std::shuffle(f.begin(), f.end(), rng);
  return curves::Permutation::from_forward(f);
}

meshgen::PartialPointCloud random_cloud(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), c(0.0, 1.0);
  meshgen::PartialPointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.points.emplace_back(u(rng), u(rng), u(rng));
    cloud.colors.push_back({c(rng), c(rng), c(rng)});
  }
  return cloud;
}

/// Init Δ is 1e-3..1e-1, which leaves the a_log gradient near the
/// finite-difference noise floor; larger steps make it measurable.
void widen_dt(ssm::S6Params& s6, Rng& rng) {
  std::uniform_real_distribution<double> dt(0.1, 1.0);
  for (int d = 0; d < s6.channels; ++d) s6.dt_up.bias.value(0, d) = softplus_inverse(dt(rng));
}

}  // namespace

GradCheckResult grad_check(GradOp op, std::uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0x9c, static_cast<std::uint64_t>(op)));
  const std::uint64_t pick_seed = mix_seed(seed, 0x9d);
  GradCheckResult result;

  switch (op) {
    case GradOp::Affine: {
      Linear lin(5, 4);
      lin.init_uniform(rng);
      const Mat x = random_mat(3, 5, rng), r = random_mat(3, 4, rng);
      ParamList params;
      lin.collect("affine", params);
      result = check_gradients(
          params, [&] { return project_sum(lin.forward(x), r); },
          [&] { zero(params); lin.backward(x, r); }, h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::MiniPointNet: {
      tokenizer::MiniPointNet net(8);
      net.init(rng);
      const int s = 3, k = 4;
      const Mat input = random_mat(s * k, tokenizer::MiniPointNet::kInput, rng), r = random_mat(s, 8, rng);
      ParamList params;
      net.collect("pointnet", params);
      result = check_gradients(
          params, [&] { return project_sum(net.forward_features(input, s, k), r); },
          [&] {
            zero(params);
            tokenizer::MiniPointNet::Cache cache;
            net.forward_features(input, s, k, &cache);
            net.backward(cache, k, r);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::Conv: {
      DepthwiseConv1d standard(5, ConvMode::Standard), causal(5, ConvMode::Causal);
      standard.init_uniform(rng);
      causal.init_uniform(rng);
      const Mat x = random_mat(9, 5, rng), r1 = random_mat(9, 5, rng), r2 = random_mat(9, 5, rng);
      ParamList params;
      standard.collect("conv.standard", params);
      causal.collect("conv.causal", params);
      result = check_gradients(
          params, [&] { return project_sum(standard.forward(x), r1) + project_sum(causal.forward(x), r2); },
          [&] {
            zero(params);
            standard.backward(x, r1);
            causal.backward(x, r2);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::S6: {
      ssm::S6Params s6(4, 4);
      s6.init(rng);
      widen_dt(s6, rng);
      const Mat x = random_mat(16, 4, rng), r = random_mat(16, 4, rng);
      ParamList params;
      s6.collect("s6", params);
      result = check_gradients(
          params, [&] { return project_sum(ssm::selective_scan(x, s6), r); },
          [&] {
            zero(params);
            ssm::ScanTrace trace;
            ssm::selective_scan(x, s6, &trace);
            ssm::selective_scan_backward(trace, s6, r);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::Block: {
      duomamba::DuoMambaBlock block(6, 12, 4, ConvMode::Standard);
      block.init(rng);
      widen_dt(block.s6_h, rng);
      widen_dt(block.s6_t, rng);
      const Mat z = random_mat(10, 6, rng), r = random_mat(10, 6, rng);
      const auto ph = random_permutation(10, rng), pt = random_permutation(10, rng);
      ParamList params;
      block.collect("block", params);
      result = check_gradients(
          params, [&] { return project_sum(block.forward(z, ph, pt), r); },
          [&] {
            zero(params);
            duomamba::DuoMambaBlock::Cache cache;
            block.forward(z, ph, pt, &cache);
            block.backward(cache, ph, pt, r);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::Heads: {
      align::ProjectionHead text(align::HeadKind::Text, 6), mixed(align::HeadKind::Mixed, 6);
      text.linear.init_uniform(rng);
      mixed.linear.init_uniform(rng);
      const Mat ft = random_mat(4, 6, rng), fm = random_mat(4, 12, rng);
      const Mat r1 = random_mat(4, 6, rng), r2 = random_mat(4, 6, rng);
      ParamList params;
      text.collect("head.text", params);
      mixed.collect("head.mixed", params);
      result = check_gradients(
          params, [&] { return project_sum(text.project(ft), r1) + project_sum(mixed.project(fm), r2); },
          [&] {
            zero(params);
            align::ProjectionHead::Cache ct, cm;
            text.project(ft, &ct);
            mixed.project(fm, &cm);
            text.backward(ct, r1);
            mixed.backward(cm, r2);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::Temperature: {
      align::TemperatureParam temp;
      temp.log_tau.value(0, 0) = std::log(0.1);
      Param za(4, 5), zb(4, 5);
      za.value = random_mat(4, 5, rng);
      zb.value = random_mat(4, 5, rng);
      ParamList params = {{"log_tau", &temp.log_tau, false}, {"za", &za, false}, {"zb", &zb, false}};
      auto loss = [&] {
        return align::cross_modal_loss(align::normalize_rows(za.value), align::normalize_rows(zb.value), temp.tau());
      };
      result = check_gradients(
          params, loss,
          [&] {
            zero(params);
            const Mat na = align::normalize_rows(za.value), nb = align::normalize_rows(zb.value);
            const auto g = align::cross_modal_loss_grad(na, nb, temp.tau());
            za.grad = align::normalize_rows_backward(na, za.value.rowwise().norm(), g.dza);
            zb.grad = align::normalize_rows_backward(nb, zb.value.rowwise().norm(), g.dzb);
            temp.accumulate(g.dtau);
          },
          h, kMaxEntries, pick_seed);
      break;
    }
    case GradOp::EndToEnd: {
      duomamba::EncoderConfig cfg;
      cfg.l_blocks = 2;
      cfg.c_dim = 8;
      cfg.s_tokens = 6;
      cfg.k_neighbors = 4;
      cfg.n_state = 3;
      cfg.embed_dim = 6;
      Model model(cfg);
      model.init(seed);
      for (auto& block : model.encoder.blocks) {
        widen_dt(block.s6_h, rng);
        widen_dt(block.s6_t, rng);
      }
      // move the heads off the identity so their gradients are generic
      for (auto* head : {&model.text_head, &model.image_head, &model.mixed_head}) {
        head->linear.weight.value += 0.2 * random_mat(head->out_dim(), head->in_dim(), rng);
      }
      std::vector<tokenizer::PatchSet> patches;
      for (int b = 0; b < 3; ++b) patches.push_back(tokenizer::make_patches(random_cloud(40, rng), cfg.s_tokens, cfg.k_neighbors));
      Batch batch;
      for (const auto& p : patches) batch.patches.push_back(&p);
      batch.drop_color = {false, true, false};
      batch.text = align::normalize_rows(random_mat(3, 6, rng));
      batch.image = align::normalize_rows(random_mat(3, 6, rng));
      ParamList params = model.parameters();
      result = check_gradients(
          params, [&] { return forward_loss(model, batch, false).total(); },
          [&] {
            model.zero_grad();
            forward_loss(model, batch, true);
          },
          h, kMaxEntries / 2, pick_seed);
      break;
    }
  }
  result.op = op;
  return result;
}

}  // namespace occtip::train
