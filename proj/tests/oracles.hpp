#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "core/rng.hpp"
#include "ppo/gae.hpp"
#include "ppo/policy.hpp"
#include "ppo/ppo.hpp"
#include "sim/observation.hpp"

namespace firemed::test {

// Advantages by explicit summation of discounted TD residuals, stopping at the
// first terminal step.
inline std::vector<long double> gae_by_summation(std::span<const double> r, std::span<const double> v,
                                                 std::span<const bool> done, double last_value,
                                                 double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<long double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const long double next = done[t] ? 0.0L : (t + 1 < n ? v[t + 1] : last_value);
    delta[t] = static_cast<long double>(r[t]) + static_cast<long double>(gamma) * next - v[t];
  }
  std::vector<long double> adv(n, 0.0L);
  for (std::size_t t = 0; t < n; ++t) {
    long double w = 1.0L;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += w * delta[k];
      if (done[k]) break;
      w *= static_cast<long double>(gamma) * static_cast<long double>(lambda);
    }
  }
  return adv;
}

inline sim::FeatureObservation random_observation(Rng& rng) {
  sim::FeatureObservation o;
  for (auto& x : o.values) x = rng.uniform(-1.0, 1.0);
  o.values[4] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  o.values[7] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  return o;
}

// Parameters with larger-than-initial weights so every head is exercised.
inline ppo::PolicyParams random_params(Rng& rng) {
  ppo::PolicyParams p = ppo::PolicyParams::init(rng.next(), rng.uniform(-1.0, 0.5));
  for (std::size_t i = 0; i < ppo::Layout::log_std; ++i) p.theta[i] += 0.1 * rng.normal();
  return p;
}

// A batch sampled from `params`, with behaviour log-probabilities jittered so
// that ratios fall on both sides of the clip range.
inline ppo::TrainBatch random_batch(const ppo::PolicyParams& params, Rng& rng, std::size_t n) {
  ppo::TrainBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    ppo::Transition t;
    t.observation = random_observation(rng);
    const auto a = ppo::act(params, {&t.observation, 1}, rng)[0];
    t.action = a.action;
    t.raw_steer = a.raw_steer;
    t.behavior_logprob = a.logprob + 0.3 * rng.normal();
    t.overridden = rng.uniform() < 0.25;
    b.push(t, rng.normal(), a.value + rng.normal());
  }
  return b;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Relative error |g - fd| / max(|g|, |fd|, floor) over the given coordinates.
// The finite differences are taken on the long double loss.
inline GradientCheck check_gradient(const ppo::PolicyParams& params, const ppo::TrainBatch& batch,
                                    const ppo::LossConfig& cfg, std::span<const std::size_t> coords,
                                    double step = 1e-6, double floor = 1e-6) {
  std::vector<double> grad(ppo::Layout::size);
  ppo::ppo_loss_grad(params.theta, batch, cfg, grad);
  std::vector<long double> th(params.theta.begin(), params.theta.end());
  GradientCheck out;
  for (const auto i : coords) {
    const long double keep = th[i];
    th[i] = keep + step;
    const long double up = ppo::ppo_loss<long double>(th.data(), batch, cfg);
    th[i] = keep - step;
    const long double down = ppo::ppo_loss<long double>(th.data(), batch, cfg);
    th[i] = keep;
    const double fd = static_cast<double>((up - down) / (2.0L * step));
    const double err = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), floor});
    if (err > out.max_rel_error) out = {err, i, grad[i], fd};
  }
  return out;
}

inline std::vector<std::size_t> all_coordinates() {
  std::vector<std::size_t> c(ppo::Layout::size);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
  return c;
}

struct BanditRun {
  int updates_to_threshold = -1;  // -1 when never reached
  double final_probability = 0.0;
};

// Two-armed bandit on one fixed observation: the drop head picks the arm and
// only DropWater pays 1. Each update uses `batch` single-step episodes.
inline BanditRun run_bandit(std::uint64_t seed, int max_updates, double threshold = 0.9,
                            int batch = 64) {
  Rng rng(seed);
  auto params = ppo::PolicyParams::init(mix_seed(seed, 1));
  ppo::Adam adam;
  ppo::TrainHyper hyper;
  hyper.batch = batch;
  hyper.minibatch = batch / 2;
  hyper.total_steps = 1;
  sim::FeatureObservation obs;
  obs.values = {0.2, -0.3, 1.0, 0.0, 0.0, 0.1, 0.4, 1.0};
  const std::vector<sim::FeatureObservation> rows(static_cast<std::size_t>(batch), obs);
  BanditRun out;
  for (int u = 1; u <= max_updates; ++u) {
    ppo::TrainBatch b;
    for (const auto& a : ppo::act(params, rows, rng)) {
      ppo::Transition t;
      t.observation = obs;
      t.action = a.action;
      t.raw_steer = a.raw_steer;
      t.behavior_logprob = a.logprob;
      t.value = a.value;
      t.reward = a.action.drop == sim::Drop::DropWater ? 1.0 : 0.0;
      t.done = true;
      const double r = t.reward, v = t.value;
      const bool d = true;
      const auto g = ppo::gae({&r, 1}, {&v, 1}, {&d, 1}, 0.0, hyper.gamma, hyper.gae_lambda);
      b.push(t, g.advantages[0], g.returns[0]);
    }
    ppo::ppo_update(params, adam, b, hyper, rng);
    out.final_probability = ppo::drop_probability(params, obs);
    if (out.final_probability >= threshold) {
      out.updates_to_threshold = u;
      return out;
    }
  }
  return out;
}

// Exact one-sided rank-sum test: probability, under exchangeability, that the
// rank sum of `x` in the pooled sample is at least the observed one. Ties get
// mid-ranks and the null distribution is enumerated over every split, so the
// p-value is exact for the tied data too. Meant for small samples.
inline double rank_sum_p_greater(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size(), m = y.size(), N = n + m;
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(N);
  for (std::size_t i = 0; i < N;) {
    std::size_t j = i;
    while (j + 1 < N && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += rank[i];

  std::vector<bool> pick(N, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n), true);
  std::size_t total = 0, extreme = 0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      if (pick[i]) s += rank[i];
    ++total;
    if (s >= observed - 1e-9) ++extreme;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace firemed::test
