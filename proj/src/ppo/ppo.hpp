#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "ppo/policy.hpp"
#include "sim/observation.hpp"
#include "sim/world.hpp"

namespace firemed::ppo {

struct TrainHyper {
  double lr = 0.005;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int minibatch = 900;
  int batch = 9000;  // agent transitions per update
  int epochs = 3;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  std::int64_t total_steps = 300000;  // env steps
  bool adam = true;                   // plain SGD otherwise
  bool mask_overridden = false;       // drop overridden steps from the policy term
  double initial_log_std = 0.0;

  void validate() const;
};

struct Transition {
  sim::FeatureObservation observation;
  sim::Action action;
  double raw_steer = 0.0;
  double behavior_logprob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  bool overridden = false;
};

// Flattened minibatch with advantages already attached.
struct TrainBatch {
  std::vector<sim::FeatureObservation> observations;
  std::vector<double> raw_steer;
  std::vector<int> drop;
  std::vector<double> behavior_logprob;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<bool> overridden;

  std::size_t size() const { return raw_steer.size(); }
  void push(const Transition& t, double advantage, double ret);
  TrainBatch select(std::span<const std::size_t> rows) const;
};

struct LossConfig {
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  bool mask_overridden = false;
};

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Minimised objective:
//   -mean(min(r A, clip(r, 1-e, 1+e) A)) + c_v mean((V - R)^2) - c_h mean(H)
// with r = exp(log pi(a|s) - behavior_logprob) and H the entropy of the
// pre-squash Gaussian plus the drop distribution.
template <class T>
T ppo_loss(const T* theta, const TrainBatch& batch, const LossConfig& cfg);

// Same loss in double with its exact gradient written into `grad`.
LossStats ppo_loss_grad(std::span<const double> theta, const TrainBatch& batch,
                        const LossConfig& cfg, std::span<double> grad);

// Scales advantages to mean 0 and standard deviation 1 (std floored at 1e-8).
void normalize_advantages(std::vector<double>& adv);

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  void step(std::vector<double>& theta, std::span<const double> grad, double lr);
  bool operator==(const Adam&) const = default;
};

struct UpdateStats {
  LossStats last;
  LossStats mean;
  int minibatches = 0;
};

// Epochs of shuffled minibatch steps over `batch`. On a non-finite loss or
// parameter the parameters and optimizer are restored and NumericsError is
// thrown.
UpdateStats ppo_update(PolicyParams& params, Adam& optimizer, const TrainBatch& batch,
                       const TrainHyper& hyper, Rng& rng);

}  // namespace firemed::ppo
