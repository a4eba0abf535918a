#include "red/numcore/parameter.hpp"

#include <algorithm>
#include <cmath>

#include "red/error.hpp"

namespace red::nc {

ParameterPtr ParameterStore::create(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
  auto p = std::make_shared<Parameter>();
  p->name = name;
  p->first_moment = Tensor(init.rows(), init.cols());
  p->second_moment = Tensor(init.rows(), init.cols());
  p->var = Var::leaf(std::move(init));
  index_.emplace(name, params_.size());
  params_.push_back(p);
  return p;
}

ParameterPtr ParameterStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second];
}

ParameterPtr ParameterStore::at(const std::string& name) const {
  auto p = find(name);
  if (!p) throw ContractViolation("no parameter named '" + name + "'");
  return p;
}

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->var.zero_grad();
}

void ParameterStore::assign(const std::map<std::string, Tensor>& values) {
  for (const auto& p : params_) {
    const auto it = values.find(p->name);
    if (it == values.end()) throw ValidationError("missing parameter '" + p->name + "'");
    if (it->second.shape() != p->value().shape())
      throw ValidationError("parameter '" + p->name + "' has shape " + shape_string(it->second) + ", expected " +
                            shape_string(p->value()));
  }
  for (const auto& [name, t] : values)
    if (!index_.count(name)) throw ValidationError("unexpected parameter '" + name + "'");
  for (auto& p : params_) p->value() = values.at(p->name);
}

std::map<std::string, Tensor> ParameterStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p->name, p->value());
  return out;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const Real bound = std::sqrt(Real{6} / static_cast<Real>(fan_in + fan_out));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Tensor t(fan_in, fan_out);
  for (auto& v : t.span()) v = dist(rng);
  return t;
}

Tensor normal_init(std::size_t rows, std::size_t cols, Real stddev, std::mt19937_64& rng) {
  std::normal_distribution<Real> dist(0, stddev);
  Tensor t(rows, cols);
  for (auto& v : t.span()) v = dist(rng);
  return t;
}

void adamw_step(std::span<const ParameterPtr> params, const AdamWConfig& cfg) {
  if (!(cfg.lr > 0)) throw ValidationError("learning rate must be positive");
  for (const auto& p : params) {
    Tensor& w = p->value();
    const Node& node = *p->var.node();
    ++p->step;
    const Real bc1 = 1 - std::pow(cfg.beta1, static_cast<Real>(p->step));
    const Real bc2 = 1 - std::pow(cfg.beta2, static_cast<Real>(p->step));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real g = node.has_grad() ? node.grad[i] : Real{0};
      Real& m = p->first_moment[i];
      Real& v = p->second_moment[i];
      m = cfg.beta1 * m + (1 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
      const Real m_hat = m / bc1;
      const Real v_hat = v / bc2;
      w[i] -= cfg.lr * cfg.weight_decay * w[i];
      w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

GradCheckReport grad_check(const std::function<Var()>& loss_fn, std::span<const ParameterPtr> params, Real step,
                           Real floor) {
  for (const auto& p : params) p->var.zero_grad();
  backward(loss_fn());
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k]->value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real original = w[i];
      w[i] = original + step;
      const Real up = loss_fn().value().item();
      w[i] = original - step;
      const Real down = loss_fn().value().item();
      w[i] = original;
      const Real numeric = (up - down) / (2 * step);
      const Real a = analytic[k][i];
      const Real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.components;
      if (rel > report.max_relative_error || report.components == 1) {
        report.max_relative_error = rel;
        report.worst_parameter = params[k]->name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace red::nc
