#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oreo/numerics/param.hpp"
#include "oreo/numerics/tape.hpp"

namespace oreo::num {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per parameter; parameters with fewer are checked fully.
  std::size_t coords_per_param = 200;
  // Denominator floor: err = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string param;
  std::size_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> entries;
};

// Builds the scalar loss on a fresh tape.
using LossFn = std::function<Var(Tape&)>;

double relative_error(double analytic, double numeric, double floor);

// Runs one backward pass for analytic gradients, then central differences
// loss(p + h) - loss(p - h) / 2h on sampled coordinates of every trainable
// parameter. Parameter values are restored afterwards.
GradCheckResult check_gradients(ParamSet& params, const LossFn& loss_fn,
                                const GradCheckOptions& opts = {});

}  // namespace oreo::num
