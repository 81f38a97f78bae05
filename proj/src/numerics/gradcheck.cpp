#include "oreo/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oreo::num {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(ParamSet& params, const LossFn& loss_fn,
                                const GradCheckOptions& opts) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape;
    return loss_fn(tape).value().item();
  };

  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (Parameter& p : params.all()) {
    if (!p.trainable) continue;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double orig = p.value[c];
      p.value[c] = orig + opts.step;
      const double up = eval();
      p.value[c] = orig - opts.step;
      const double down = eval();
      p.value[c] = orig;
      GradCheckEntry e{p.name, c, p.grad[c], (up - down) / (2.0 * opts.step), 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric, opts.floor);
      if (result.checked == 0 || e.rel_error > result.max_rel_error) {
        result.max_rel_error = e.rel_error;
        result.worst = e;
      }
      ++result.checked;
      result.entries.push_back(std::move(e));
    }
  }
  return result;
}

}  // namespace oreo::num
