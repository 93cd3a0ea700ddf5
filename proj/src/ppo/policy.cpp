#include "ppo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace firemed::ppo {

namespace {

template <class T>
T softplus(T x) {
  using std::abs, std::exp, std::log1p, std::max;
  return max(x, T(0)) + log1p(exp(-abs(x)));
}

template <class T>
Eigen::Map<const Mat<T>> weights(const T* theta, std::size_t off, int rows, int cols) {
  return Eigen::Map<const Mat<T>>(theta + off, rows, cols);
}

template <class T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(const T* theta, std::size_t off, int n) {
  return Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(theta + off, n);
}

template <class T>
Mat<T> dense_tanh(const Mat<T>& x, const T* theta, std::size_t w, std::size_t b, int out, int in) {
  Mat<T> z = x * weights(theta, w, out, in).transpose();
  z.rowwise() += bias(theta, b, out);
  return z.array().tanh().matrix();
}

template <class T>
Mat<T> dense(const Mat<T>& x, const T* theta, std::size_t w, std::size_t b, int out, int in) {
  Mat<T> z = x * weights(theta, w, out, in).transpose();
  z.rowwise() += bias(theta, b, out);
  return z;
}

}  // namespace

PolicyParams PolicyParams::init(std::uint64_t seed, double log_std) {
  Rng rng(mix_seed(seed, 0x9011c7));
  PolicyParams p;
  p.theta.assign(Layout::size, 0.0);
  auto fill = [&](std::size_t off, int rows, int cols, double gain) {
    const double s = gain / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows * cols; ++i) p.theta[off + static_cast<std::size_t>(i)] = s * rng.normal();
  };
  fill(Layout::aW1, kHidden, kObs, 1.0);
  fill(Layout::aW2, kHidden, kHidden, 1.0);
  fill(Layout::aW3, kActorOut, kHidden, 0.01);
  fill(Layout::cW1, kHidden, kObs, 1.0);
  fill(Layout::cW2, kHidden, kHidden, 1.0);
  fill(Layout::cW3, 1, kHidden, 1.0);
  p.theta[Layout::log_std] = log_std;
  return p;
}

double PolicyParams::log_std() const {
  return std::clamp(theta.at(Layout::log_std), kLogStdMin, kLogStdMax);
}

bool PolicyParams::finite() const {
  return theta.size() == Layout::size &&
         std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); });
}

template <class T>
Forward<T> forward(const T* theta, const Mat<T>& obs) {
  Forward<T> f;
  f.obs = obs;
  f.a1 = dense_tanh<T>(obs, theta, Layout::aW1, Layout::ab1, kHidden, kObs);
  f.a2 = dense_tanh<T>(f.a1, theta, Layout::aW2, Layout::ab2, kHidden, kHidden);
  f.out = dense<T>(f.a2, theta, Layout::aW3, Layout::ab3, kActorOut, kHidden);
  f.c1 = dense_tanh<T>(obs, theta, Layout::cW1, Layout::cb1, kHidden, kObs);
  f.c2 = dense_tanh<T>(f.c1, theta, Layout::cW2, Layout::cb2, kHidden, kHidden);
  f.value = dense<T>(f.c2, theta, Layout::cW3, Layout::cb3, 1, kHidden).col(0);
  f.log_std = std::clamp(theta[Layout::log_std], T(kLogStdMin), T(kLogStdMax));
  return f;
}

template <class T>
T joint_logprob(T mean, T log_std, T logit0, T logit1, T u, int drop) {
  using std::exp, std::log;
  const T log_2pi = T(std::log(2.0 * std::numbers::pi));
  const T z = (u - mean) * exp(-log_std);
  const T gauss = T(-0.5) * z * z - log_std - T(0.5) * log_2pi;
  const T squash = T(2) * (T(std::numbers::ln2) - u - softplus(T(-2) * u));
  const T hi = std::max(logit0, logit1);
  const T lse = hi + log(exp(logit0 - hi) + exp(logit1 - hi));
  const T cat = (drop == 1 ? logit1 : logit0) - lse;
  return gauss - squash + cat;
}

template Forward<double> forward<double>(const double*, const Mat<double>&);
template Forward<long double> forward<long double>(const long double*, const Mat<long double>&);
template double joint_logprob<double>(double, double, double, double, double, int);
template long double joint_logprob<long double>(long double, long double, long double,
                                                long double, long double, int);

double steer_to_raw(double steer) {
  return std::atanh(std::clamp(steer, -1.0 + kSteerEdge, 1.0 - kSteerEdge));
}

Mat<double> observation_matrix(std::span<const sim::FeatureObservation> obs) {
  Mat<double> m(static_cast<Eigen::Index>(obs.size()), kObs);
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (int j = 0; j < kObs; ++j) m(static_cast<Eigen::Index>(i), j) = obs[i].values[static_cast<std::size_t>(j)];
  return m;
}

std::vector<ActOutput> act(const PolicyParams& params,
                           std::span<const sim::FeatureObservation> obs, Rng& rng) {
  const auto f = forward<double>(params.theta.data(), observation_matrix(obs));
  const double sigma = std::exp(f.log_std);
  std::vector<ActOutput> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double mean = f.out(r, 0), l0 = f.out(r, 1), l1 = f.out(r, 2);
    if (!std::isfinite(mean) || !std::isfinite(l0) || !std::isfinite(l1) || !std::isfinite(f.value(r)))
      throw NumericsError("policy produced a non-finite output");
    auto& o = out[i];
    o.raw_steer = mean + sigma * rng.normal();
    o.action.steer = std::tanh(o.raw_steer);
    const double p1 = 1.0 / (1.0 + std::exp(l0 - l1));
    o.action.drop = rng.uniform() < p1 ? sim::Drop::DropWater : sim::Drop::DoNothing;
    o.logprob = joint_logprob(mean, f.log_std, l0, l1, o.raw_steer,
                              o.action.drop == sim::Drop::DropWater ? 1 : 0);
    o.value = f.value(r);
    if (!std::isfinite(o.logprob)) throw NumericsError("non-finite action log-probability");
  }
  return out;
}

Evaluation evaluate(const PolicyParams& params, const sim::FeatureObservation& obs,
                    double raw_steer, sim::Drop drop) {
  const auto f = forward<double>(params.theta.data(), observation_matrix({&obs, 1}));
  Evaluation e;
  e.logprob = joint_logprob(f.out(0, 0), f.log_std, f.out(0, 1), f.out(0, 2), raw_steer,
                            drop == sim::Drop::DropWater ? 1 : 0);
  e.value = f.value(0);
  if (!std::isfinite(e.logprob) || !std::isfinite(e.value))
    throw NumericsError("non-finite evaluation");
  return e;
}

double drop_probability(const PolicyParams& params, const sim::FeatureObservation& obs) {
  const auto f = forward<double>(params.theta.data(), observation_matrix({&obs, 1}));
  return 1.0 / (1.0 + std::exp(f.out(0, 1) - f.out(0, 2)));
}

}  // namespace firemed::ppo
