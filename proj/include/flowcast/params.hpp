#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace flowcast {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class InitKind { zeros, trunc_normal };

struct InitRecipe {
  InitKind kind = InitKind::zeros;
  double stddev = 0.0;
};

/// A named trainable array and its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  mutable Matrix grad;  // accumulator, written through const views by the tape
  InitRecipe init;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Named flat parameter arrays. Addresses are stable for the store's
/// lifetime; iteration follows insertion order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter& add(const std::string& name, int rows, int cols, InitRecipe init);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  /// Re-draws every array from its recipe. Each array's stream is seeded by
  /// (seed, name) so the result does not depend on insertion order.
  void initialize(std::uint64_t seed);

  void zero_grad();
  std::size_t total_size() const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t count() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Adam with bias correction and a cosine-decayed learning rate after a
/// linear warmup.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int warmup_steps = 0;
  int total_steps = 0;  // 0 disables cosine decay
  double min_lr_fraction = 0.1;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
};

class Adam {
 public:
  Adam() = default;
  Adam(ParameterStore& params, AdamConfig config);

  /// Applies one update from the accumulated gradients; returns the learning
  /// rate used and the pre-clip global gradient norm.
  std::pair<double, double> step(ParameterStore& params);

  double learning_rate(long step) const;
  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

  std::map<std::string, Matrix>& first_moments() { return m_; }
  std::map<std::string, Matrix>& second_moments() { return v_; }
  const std::map<std::string, Matrix>& first_moments() const { return m_; }
  const std::map<std::string, Matrix>& second_moments() const { return v_; }
  void set_steps_taken(long s) { step_ = s; }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

}  // namespace flowcast
