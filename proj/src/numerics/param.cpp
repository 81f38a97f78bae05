#include "oreo/numerics/param.hpp"

#include "oreo/error.hpp"

namespace oreo::num {

Parameter& ParamSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(value.shape());
  p->value = std::move(value);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamSet::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamSet::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamSet::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParamSet::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& p : params_) {
    auto& q = out.add(p->name, p->value);
    q.trainable = p->trainable;
  }
  return out;
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

}  // namespace oreo::num
