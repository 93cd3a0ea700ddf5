#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "core/rng.hpp"
#include "sim/observation.hpp"
#include "sim/world.hpp"

namespace firemed::ppo {

inline constexpr int kObs = static_cast<int>(sim::FeatureObservation::kSize);
inline constexpr int kHidden = 64;
inline constexpr int kActorOut = 3;  // steer mean, drop logit 0, drop logit 1
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
// Executed steer values are pulled this far inside (-1, 1) before atanh.
inline constexpr double kSteerEdge = 1e-6;

// Offsets into the flat parameter vector. Weight matrices are row-major
// (out x in). Actor and critic have separate 2 x 64 tanh trunks.
struct Layout {
  static constexpr std::size_t aW1 = 0;
  static constexpr std::size_t ab1 = aW1 + kHidden * kObs;
  static constexpr std::size_t aW2 = ab1 + kHidden;
  static constexpr std::size_t ab2 = aW2 + kHidden * kHidden;
  static constexpr std::size_t aW3 = ab2 + kHidden;
  static constexpr std::size_t ab3 = aW3 + kActorOut * kHidden;
  static constexpr std::size_t cW1 = ab3 + kActorOut;
  static constexpr std::size_t cb1 = cW1 + kHidden * kObs;
  static constexpr std::size_t cW2 = cb1 + kHidden;
  static constexpr std::size_t cb2 = cW2 + kHidden * kHidden;
  static constexpr std::size_t cW3 = cb2 + kHidden;
  static constexpr std::size_t cb3 = cW3 + kHidden;
  static constexpr std::size_t log_std = cb3 + 1;
  static constexpr std::size_t size = log_std + 1;
};

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct PolicyParams {
  std::vector<double> theta;

  static PolicyParams init(std::uint64_t seed, double log_std = 0.0);
  double log_std() const;  // clamped
  bool finite() const;
  bool operator==(const PolicyParams&) const = default;
};

template <class T>
struct Forward {
  Mat<T> obs;      // N x kObs
  Mat<T> a1, a2;   // actor hidden activations
  Mat<T> out;      // N x kActorOut
  Mat<T> c1, c2;   // critic hidden activations
  Col<T> value;    // N
  T log_std{};     // clamped
};

template <class T>
Forward<T> forward(const T* theta, const Mat<T>& obs);

Mat<double> observation_matrix(std::span<const sim::FeatureObservation> obs);

// log N(u; mean, sigma) - log(1 - tanh(u)^2) + log softmax(logits)[drop]
template <class T>
T joint_logprob(T mean, T log_std, T logit0, T logit1, T u, int drop);

// Pre-squash value that reproduces an executed steer.
double steer_to_raw(double steer);

struct ActOutput {
  sim::Action action;
  double raw_steer = 0.0;  // pre-squash sample
  double logprob = 0.0;
  double value = 0.0;
};

// One sample per observation row. Throws NumericsError on a non-finite output.
std::vector<ActOutput> act(const PolicyParams& params,
                           std::span<const sim::FeatureObservation> obs, Rng& rng);

// Log-probability and value of given actions (used for overridden steps).
struct Evaluation {
  double logprob = 0.0;
  double value = 0.0;
};
Evaluation evaluate(const PolicyParams& params, const sim::FeatureObservation& obs,
                    double raw_steer, sim::Drop drop);

// Probability of DropWater for one observation.
double drop_probability(const PolicyParams& params, const sim::FeatureObservation& obs);

}  // namespace firemed::ppo
