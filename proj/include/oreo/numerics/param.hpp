#pragma once

#include <map>
#include <memory>
#include <random>
#include <ranges>
#include <string>
#include <string_view>
#include <vector>

#include "oreo/numerics/tensor.hpp"

namespace oreo::num {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Frozen parameters enter the tape as constants.
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

// Named parameters in insertion order. Addresses are stable for the lifetime
// of the set, so tapes may hold Parameter pointers.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

  auto all() {
    return params_ | std::views::transform([](auto& p) -> Parameter& { return *p; });
  }
  auto all() const {
    return params_ | std::views::transform([](const auto& p) -> const Parameter& { return *p; });
  }

  // Deep copy of values (gradients are zeroed).
  ParamSet clone() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// N(0, stddev^2) entries drawn in row-major order.
Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace oreo::num
