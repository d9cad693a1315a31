#pragma once

// Small tanh MLP with a shared trunk, a Gaussian actor head (state-dependent
// mean, state-independent log-std) and a scalar critic head. Gradients are
// derived by hand; there is no autograd graph.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volport/errors.hpp"
#include "volport/market_data.hpp"

namespace volport {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogStdInit = -0.5;

struct ApproximatorSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t n_assets = 1;

  void validate() const {
    if (input_dim < 1 || n_assets < 1 || hidden.empty() ||
        std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h < 1; }))
      throw UsageError("approximator dimensions must all be at least 1");
  }

  bool operator==(const ApproximatorSpec&) const = default;
};

using ParameterVector = Eigen::VectorXd;
using GradientVector = Eigen::VectorXd;

struct PolicyOutput {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
  double value = 0.0;
};

/// Upstream derivatives of a scalar loss with respect to the network outputs.
struct OutputGradient {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
  double value = 0.0;
};

/// Offsets of each block inside the flat parameter vector:
/// trunk (W then b per layer), actor W, actor b, log_std, critic w, critic b.
class ParameterLayout {
public:
  struct Dense {
    std::size_t weight = 0, bias = 0, rows = 0, cols = 0;
  };

  explicit ParameterLayout(const ApproximatorSpec& spec) : spec_(spec) {
    spec_.validate();
    std::size_t off = 0, in = spec_.input_dim;
    for (std::size_t width : spec_.hidden) {
      trunk_.push_back({off, off + width * in, width, in});
      off += width * in + width;
      in = width;
    }
    actor_ = {off, off + spec_.n_assets * in, spec_.n_assets, in};
    off += spec_.n_assets * in + spec_.n_assets;
    log_std_ = off;
    off += spec_.n_assets;
    critic_ = {off, off + in, 1, in};
    off += in + 1;
    size_ = off;
  }

  const ApproximatorSpec& spec() const { return spec_; }
  std::size_t size() const { return size_; }
  const std::vector<Dense>& trunk() const { return trunk_; }
  const Dense& actor() const { return actor_; }
  const Dense& critic() const { return critic_; }
  std::size_t log_std() const { return log_std_; }

private:
  ApproximatorSpec spec_;
  std::vector<Dense> trunk_;
  Dense actor_, critic_;
  std::size_t log_std_ = 0;
  std::size_t size_ = 0;
};

namespace detail {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline ConstMatMap weights(const ParameterVector& p, const ParameterLayout::Dense& d) {
  return ConstMatMap(p.data() + d.weight, static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
}
inline ConstVecMap bias(const ParameterVector& p, const ParameterLayout::Dense& d) {
  return ConstVecMap(p.data() + d.bias, static_cast<Eigen::Index>(d.rows));
}
inline MatMap weights(GradientVector& g, const ParameterLayout::Dense& d) {
  return MatMap(g.data() + d.weight, static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
}
inline VecMap bias(GradientVector& g, const ParameterLayout::Dense& d) {
  return VecMap(g.data() + d.bias, static_cast<Eigen::Index>(d.rows));
}

} // namespace detail

class ActorCritic {
public:
  explicit ActorCritic(ApproximatorSpec spec) : layout_(std::move(spec)) {}

  const ApproximatorSpec& spec() const { return layout_.spec(); }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.size(); }

  /// Glorot-uniform weights, zero biases, log_std at kLogStdInit.
  ParameterVector init_params(std::uint64_t seed) const {
    ParameterVector p = ParameterVector::Zero(static_cast<Eigen::Index>(layout_.size()));
    std::mt19937_64 rng(seed);
    auto fill = [&](const ParameterLayout::Dense& d) {
      const double limit = std::sqrt(6.0 / static_cast<double>(d.rows + d.cols));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t k = 0; k < d.rows * d.cols; ++k) p(static_cast<Eigen::Index>(d.weight + k)) = u(rng);
    };
    for (const auto& d : layout_.trunk()) fill(d);
    fill(layout_.actor());
    fill(layout_.critic());
    p.segment(static_cast<Eigen::Index>(layout_.log_std()), static_cast<Eigen::Index>(spec().n_assets))
        .setConstant(kLogStdInit);
    return p;
  }

  PolicyOutput forward(const ParameterVector& params, const Eigen::VectorXd& obs) const {
    std::vector<Eigen::VectorXd> acts;
    return forward_impl(params, obs, acts);
  }

  /// d(loss)/d(params) for one observation given d(loss)/d(outputs); added into `grad`.
  void accumulate_gradient(const ParameterVector& params, const Eigen::VectorXd& obs, const OutputGradient& up,
                           GradientVector& grad) const {
    check_params(params);
    if (grad.size() != params.size()) throw UsageError("gradient buffer size mismatch");
    const auto n = static_cast<Eigen::Index>(spec().n_assets);
    if (up.mean.size() != n || up.log_std.size() != n) throw UsageError("upstream gradient shape mismatch");

    std::vector<Eigen::VectorXd> acts;
    forward_impl(params, obs, acts);
    const Eigen::VectorXd& top = acts.back();

    const auto& a = layout_.actor();
    const auto& c = layout_.critic();
    detail::weights(grad, a).noalias() += up.mean * top.transpose();
    detail::bias(grad, a) += up.mean;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double raw = params(static_cast<Eigen::Index>(layout_.log_std()) + i);
      if (raw > kLogStdMin && raw < kLogStdMax) grad(static_cast<Eigen::Index>(layout_.log_std()) + i) += up.log_std(i);
    }
    detail::weights(grad, c).noalias() += up.value * top.transpose();
    detail::bias(grad, c)(0) += up.value;

    Eigen::VectorXd dh = detail::weights(params, a).transpose() * up.mean;
    dh.noalias() += up.value * detail::weights(params, c).row(0).transpose();
    for (std::size_t l = layout_.trunk().size(); l-- > 0;) {
      const auto& d = layout_.trunk()[l];
      const Eigen::VectorXd dz = dh.array() * (1.0 - acts[l + 1].array().square());
      detail::weights(grad, d).noalias() += dz * acts[l].transpose();
      detail::bias(grad, d) += dz;
      if (l > 0) dh = detail::weights(params, d).transpose() * dz;
    }
  }

  GradientVector backward(const ParameterVector& params, const Eigen::VectorXd& obs, const OutputGradient& up) const {
    GradientVector g = GradientVector::Zero(params.size());
    accumulate_gradient(params, obs, up, g);
    return g;
  }

private:
  void check_params(const ParameterVector& params) const {
    if (static_cast<std::size_t>(params.size()) != layout_.size())
      throw UsageError("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                       std::to_string(layout_.size()));
  }

  PolicyOutput forward_impl(const ParameterVector& params, const Eigen::VectorXd& obs,
                            std::vector<Eigen::VectorXd>& acts) const {
    check_params(params);
    if (static_cast<std::size_t>(obs.size()) != spec().input_dim)
      throw UsageError("observation has " + std::to_string(obs.size()) + " entries, expected " +
                       std::to_string(spec().input_dim));
    if (!obs.allFinite()) throw NumericalError("non-finite observation");
    acts.clear();
    acts.push_back(obs);
    for (const auto& d : layout_.trunk()) {
      Eigen::VectorXd z = detail::bias(params, d);
      z.noalias() += detail::weights(params, d) * acts.back();
      acts.push_back(z.array().tanh().matrix());
    }
    const Eigen::VectorXd& top = acts.back();
    PolicyOutput out;
    out.mean = detail::bias(params, layout_.actor());
    out.mean.noalias() += detail::weights(params, layout_.actor()) * top;
    out.log_std = params.segment(static_cast<Eigen::Index>(layout_.log_std()), static_cast<Eigen::Index>(spec().n_assets))
                      .cwiseMax(kLogStdMin)
                      .cwiseMin(kLogStdMax);
    out.value = detail::bias(params, layout_.critic())(0) + detail::weights(params, layout_.critic()).row(0).dot(top);
    return out;
  }

  ParameterLayout layout_;
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Diagonal Gaussian log-density of `action` under the policy output.
inline double gaussian_log_prob(const PolicyOutput& out, const Eigen::VectorXd& action) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double z = (action(i) - out.mean(i)) * std::exp(-out.log_std(i));
    lp += -kHalfLog2Pi - out.log_std(i) - 0.5 * z * z;
  }
  return lp;
}

inline double gaussian_entropy(const PolicyOutput& out) {
  return static_cast<double>(out.log_std.size()) * (0.5 + kHalfLog2Pi) + out.log_std.sum();
}

struct AdamState {
  std::uint64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update that descends `grads`.
inline void adam_step(ParameterVector& params, const GradientVector& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  if (grads.size() != params.size()) throw UsageError("Adam gradient size mismatch");
  if (!grads.allFinite()) throw NumericalError("non-finite gradient passed to Adam");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size()) throw UsageError("Adam state size mismatch");
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

/// Text checkpoint: a header with the network dimensions, then one parameter
/// per line in shortest round-trip form.
inline void save_checkpoint(const std::filesystem::path& path, const ApproximatorSpec& spec,
                            const ParameterVector& params) {
  std::ostringstream out;
  out << "volport-policy 1\n";
  out << "input_dim " << spec.input_dim << "\n";
  out << "hidden";
  for (auto h : spec.hidden) out << ' ' << h;
  out << "\nn_assets " << spec.n_assets << "\n";
  out << "count " << params.size() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof buf, params(i));
    out.write(buf, res.ptr - buf);
    out << '\n';
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp);
    f << out.str();
    if (!f) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::pair<ApproximatorSpec, ParameterVector> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
  std::string line, word;
  if (!std::getline(f, line) || line != "volport-policy 1") throw fail("not a policy checkpoint");
  ApproximatorSpec spec;
  spec.hidden.clear();
  std::size_t count = 0;
  for (const char* key : {"input_dim", "hidden", "n_assets", "count"}) {
    if (!std::getline(f, line)) throw fail("truncated header");
    std::istringstream ls(line);
    if (!(ls >> word) || word != key) throw fail(std::string("expected '") + key + "'");
    std::size_t v = 0;
    if (word == "hidden") {
      while (ls >> v) spec.hidden.push_back(v);
    } else {
      if (!(ls >> v)) throw fail("bad value for " + word);
      if (word == "input_dim") spec.input_dim = v;
      if (word == "n_assets") spec.n_assets = v;
      if (word == "count") count = v;
    }
  }
  spec.validate();
  if (ParameterLayout(spec).size() != count) throw fail("parameter count does not match dimensions");
  ParameterVector p(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(f, line)) throw fail("truncated parameter list");
    double v = 0.0;
    if (!detail::parse_double(detail::trim(line), v)) throw fail("bad parameter on line " + std::to_string(i + 6));
    p(static_cast<Eigen::Index>(i)) = v;
  }
  return {spec, p};
}

} // namespace volport
