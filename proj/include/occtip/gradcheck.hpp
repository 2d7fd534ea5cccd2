#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "occtip/tensor.hpp"

namespace occtip::train {

enum class GradOp { Affine, MiniPointNet, Conv, S6, Block, Heads, Temperature, EndToEnd };

std::string to_string(GradOp op);
GradOp grad_op_from_string(const std::string& name);
const std::vector<GradOp>& all_grad_ops();

struct GradCheckResult {
  GradOp op = GradOp::Affine;
  double max_rel_error = 0;
  std::string worst_tensor;
  std::size_t entries_checked = 0;
};

/// Per-tensor relative error ‖a − n‖ / (‖a‖ + ‖n‖) between the analytic
/// gradient and central differences (f(θ+h) − f(θ−h)) / 2h. Tensors with
/// more than `max_entries` elements are checked on a seeded subset.
/// `analytic` must zero and then fill every gradient in `params`.
GradCheckResult check_gradients(ParamList& params, const std::function<double()>& loss,
                                const std::function<void()>& analytic, double h, std::size_t max_entries,
                                std::uint64_t seed);

/// Builds a small random instance of the named operation and checks every
/// parameter tensor it owns. The loss is a fixed random projection of the
/// operation output (the real loss for Temperature and EndToEnd).
GradCheckResult grad_check(GradOp op, std::uint64_t seed = 1, double h = 1e-5);

}  // namespace occtip::train
