#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "red/numcore/autograd.hpp"

namespace red::nc {

/// Trainable tensor plus its AdamW state.
struct Parameter {
  std::string name;
  Var var;
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step = 0;

  const Tensor& value() const { return var.value(); }
  Tensor& value() { return var.mutable_value(); }
  Tensor grad() const { return var.grad(); }
};

using ParameterPtr = std::shared_ptr<Parameter>;

/// Ordered registry of named parameters; the names are checkpoint paths.
class ParameterStore {
 public:
  ParameterPtr create(const std::string& name, Tensor init);
  ParameterPtr find(const std::string& name) const;
  ParameterPtr at(const std::string& name) const;

  const std::vector<ParameterPtr>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  void zero_grad();
  /// Copies values by name; shapes must match and every name must exist.
  void assign(const std::map<std::string, Tensor>& values);
  std::map<std::string, Tensor> snapshot() const;

 private:
  std::vector<ParameterPtr> params_;
  std::map<std::string, std::size_t> index_;
};

// Initializers.
/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor normal_init(std::size_t rows, std::size_t cols, Real stddev, std::mt19937_64& rng);

struct AdamWConfig {
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Real weight_decay = 0.01;
};

/// Decoupled weight decay followed by the bias-corrected adaptive-moment
/// update. Parameters without a gradient still decay.
void adamw_step(std::span<const ParameterPtr> params, const AdamWConfig& config);

struct GradCheckReport {
  Real max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  Real analytic = 0;
  Real numeric = 0;
  std::size_t components = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences over every component of `params`. Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Var()>& loss_fn, std::span<const ParameterPtr> params,
                           Real step = 1e-3, Real floor = 1e-6);

}  // namespace red::nc
