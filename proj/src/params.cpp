#include "flowcast/params.hpp"

#include <cmath>
#include <numbers>

#include "flowcast/errors.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_ = other.index_;
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
  return *this;
}

Parameter& ParameterStore::add(const std::string& name, int rows, int cols, InitRecipe init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->init = init;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

void ParameterStore::initialize(std::uint64_t seed) {
  for (auto& p : params_) {
    if (p->init.kind == InitKind::zeros) {
      p->value.setZero();
      continue;
    }
    Rng rng(derive_seed(seed, fnv1a(p->name)));
    const double sd = p->init.stddev;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double z;
      do {
        z = rng.normal();
      } while (std::fabs(z) > 2.0);
      p->value.data()[i] = sd * z;
    }
  }
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParameterStore& params, AdamConfig config) : config_(config) {
  for (Parameter* p : params.all()) {
    m_[p->name] = Matrix::Zero(p->value.rows(), p->value.cols());
    v_[p->name] = Matrix::Zero(p->value.rows(), p->value.cols());
  }
}

double Adam::learning_rate(long step) const {
  double lr = config_.lr;
  if (config_.warmup_steps > 0 && step < config_.warmup_steps) {
    return lr * static_cast<double>(step + 1) / config_.warmup_steps;
  }
  if (config_.total_steps > 0) {
    const double span = std::max(1, config_.total_steps - config_.warmup_steps);
    const double progress = std::clamp((step - config_.warmup_steps) / span, 0.0, 1.0);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    lr *= config_.min_lr_fraction + (1.0 - config_.min_lr_fraction) * cosine;
  }
  return lr;
}

std::pair<double, double> Adam::step(ParameterStore& params) {
  double norm_sq = 0.0;
  for (Parameter* p : params.all()) norm_sq += p->grad.squaredNorm();
  const double norm = std::sqrt(norm_sq);
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  const double lr = learning_rate(step_);
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (Parameter* p : params.all()) {
    Matrix& m = m_.at(p->name);
    Matrix& v = v_.at(p->name);
    const auto n = p->value.size();
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* md = m.data();
    double* vd = v.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gi = g[i] * clip;
      md[i] = config_.beta1 * md[i] + (1.0 - config_.beta1) * gi;
      vd[i] = config_.beta2 * vd[i] + (1.0 - config_.beta2) * gi * gi;
      const double update = (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + config_.eps);
      w[i] -= lr * (update + config_.weight_decay * w[i]);
    }
  }
  return {lr, norm};
}

}  // namespace flowcast
