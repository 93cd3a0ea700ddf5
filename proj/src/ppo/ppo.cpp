#include "ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "core/error.hpp"

namespace firemed::ppo {

namespace {

template <class T>
T categorical_entropy(T l0, T l1) {
  using std::exp, std::log;
  const T hi = std::max(l0, l1);
  const T lse = hi + log(exp(l0 - hi) + exp(l1 - hi));
  const T lp0 = l0 - lse, lp1 = l1 - lse;
  return -(exp(lp0) * lp0 + exp(lp1) * lp1);
}

template <class T>
T gaussian_entropy(T log_std) {
  return T(0.5) * (T(1) + T(std::log(2.0 * std::numbers::pi))) + log_std;
}

std::size_t policy_rows(const TrainBatch& b, bool mask) {
  if (!mask) return b.size();
  return static_cast<std::size_t>(std::count(b.overridden.begin(), b.overridden.end(), false));
}

}  // namespace

void TrainHyper::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("lambda_ must lie in [0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip_param must be positive");
  if (minibatch < 1 || batch < 1) throw ConfigError("batch sizes must be positive");
  if (batch % minibatch != 0)
    throw ConfigError("sgd_minibatch_size must divide train_batch_size");
  if (epochs < 1) throw ConfigError("num_sgd_iter must be >= 1");
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0))
    throw ConfigError("loss coefficients must be >= 0");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
}

void TrainBatch::push(const Transition& t, double advantage, double ret) {
  observations.push_back(t.observation);
  raw_steer.push_back(t.raw_steer);
  drop.push_back(t.action.drop == sim::Drop::DropWater ? 1 : 0);
  behavior_logprob.push_back(t.behavior_logprob);
  advantages.push_back(advantage);
  returns.push_back(ret);
  overridden.push_back(t.overridden);
}

TrainBatch TrainBatch::select(std::span<const std::size_t> rows) const {
  TrainBatch out;
  for (const auto r : rows) {
    out.observations.push_back(observations[r]);
    out.raw_steer.push_back(raw_steer[r]);
    out.drop.push_back(drop[r]);
    out.behavior_logprob.push_back(behavior_logprob[r]);
    out.advantages.push_back(advantages[r]);
    out.returns.push_back(returns[r]);
    out.overridden.push_back(overridden[r]);
  }
  return out;
}

template <class T>
T ppo_loss(const T* theta, const TrainBatch& b, const LossConfig& cfg) {
  const auto n = b.size();
  if (n == 0) throw InputError("empty training batch");
  const Mat<T> obs = observation_matrix(b.observations).template cast<T>();
  const auto f = forward<T>(theta, obs);
  const auto np = policy_rows(b, cfg.mask_overridden);
  T pol(0), val(0), ent(0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!(cfg.mask_overridden && b.overridden[i])) {
      const T logp = joint_logprob<T>(f.out(r, 0), f.log_std, f.out(r, 1), f.out(r, 2),
                                      T(b.raw_steer[i]), b.drop[i]);
      const T ratio = std::exp(logp - T(b.behavior_logprob[i]));
      const T a = T(b.advantages[i]);
      const T clipped = std::clamp(ratio, T(1.0 - cfg.clip), T(1.0 + cfg.clip));
      pol -= std::min(ratio * a, clipped * a);
    }
    const T dv = f.value(r) - T(b.returns[i]);
    val += dv * dv;
    ent += gaussian_entropy(f.log_std) + categorical_entropy(f.out(r, 1), f.out(r, 2));
  }
  const T nn = T(static_cast<double>(n));
  const T policy_term = np ? pol / T(static_cast<double>(np)) : T(0);
  return policy_term + T(cfg.value_coef) * val / nn - T(cfg.entropy_coef) * ent / nn;
}

template double ppo_loss<double>(const double*, const TrainBatch&, const LossConfig&);
template long double ppo_loss<long double>(const long double*, const TrainBatch&, const LossConfig&);

LossStats ppo_loss_grad(std::span<const double> theta, const TrainBatch& b,
                        const LossConfig& cfg, std::span<double> grad) {
  if (theta.size() != Layout::size || grad.size() != Layout::size)
    throw InputError("parameter vector has the wrong size");
  const auto n = b.size();
  if (n == 0) throw InputError("empty training batch");
  const Mat<double> obs = observation_matrix(b.observations);
  const auto f = forward<double>(theta.data(), obs);
  const auto np = policy_rows(b, cfg.mask_overridden);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_np = np ? 1.0 / static_cast<double>(np) : 0.0;
  const double sigma = std::exp(f.log_std);
  const double ent_w = -cfg.entropy_coef * inv_n;

  Mat<double> d_out = Mat<double>::Zero(static_cast<Eigen::Index>(n), kActorOut);
  Mat<double> d_val(static_cast<Eigen::Index>(n), 1);
  double d_log_std = 0.0;
  LossStats s;
  std::size_t clipped_rows = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double mean = f.out(r, 0), l0 = f.out(r, 1), l1 = f.out(r, 2);
    const double p1 = 1.0 / (1.0 + std::exp(l0 - l1));
    const double p0 = 1.0 - p1;
    const double h_cat = categorical_entropy(l0, l1);

    if (!(cfg.mask_overridden && b.overridden[i])) {
      const double u = b.raw_steer[i];
      const double logp = joint_logprob(mean, f.log_std, l0, l1, u, b.drop[i]);
      const double ratio = std::exp(logp - b.behavior_logprob[i]);
      const double a = b.advantages[i];
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
      s.policy_loss -= std::min(ratio * a, clipped * a) * inv_np;
      s.approx_kl += (b.behavior_logprob[i] - logp) * inv_np;
      if (std::abs(ratio - 1.0) > cfg.clip) ++clipped_rows;
      const bool flat = (a > 0.0 && ratio > 1.0 + cfg.clip) || (a < 0.0 && ratio < 1.0 - cfg.clip);
      if (!flat) {
        const double g = -ratio * a * inv_np;  // dL / dlogp
        const double z = (u - mean) / sigma;
        d_out(r, 0) += g * z / sigma;
        d_log_std += g * (z * z - 1.0);
        d_out(r, 1) += g * ((b.drop[i] == 0 ? 1.0 : 0.0) - p0);
        d_out(r, 2) += g * ((b.drop[i] == 1 ? 1.0 : 0.0) - p1);
      }
    }
    // entropy: dH/dlogit_k = -p_k (log p_k + H)
    const double lp0 = std::log(std::max(p0, 1e-300)), lp1 = std::log(std::max(p1, 1e-300));
    d_out(r, 1) += ent_w * (-p0 * (lp0 + h_cat));
    d_out(r, 2) += ent_w * (-p1 * (lp1 + h_cat));
    d_log_std += ent_w;
    s.entropy += (gaussian_entropy(f.log_std) + h_cat) * inv_n;

    const double dv = f.value(r) - b.returns[i];
    s.value_loss += dv * dv * inv_n;
    d_val(r, 0) = 2.0 * cfg.value_coef * dv * inv_n;
  }
  s.loss = s.policy_loss + cfg.value_coef * s.value_loss - cfg.entropy_coef * s.entropy;
  s.clip_fraction = np ? static_cast<double>(clipped_rows) * inv_np : 0.0;

  std::fill(grad.begin(), grad.end(), 0.0);
  using GMap = Eigen::Map<Mat<double>>;
  using WMap = Eigen::Map<const Mat<double>>;
  auto backprop = [&](const Mat<double>& d_top, const Mat<double>& h1, const Mat<double>& h2,
                      std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2,
                      std::size_t w3, std::size_t b3, int out) {
    GMap(grad.data() + w3, out, kHidden) = d_top.transpose() * h2;
    GMap(grad.data() + b3, 1, out) = d_top.colwise().sum();
    Mat<double> dz2 = (d_top * WMap(theta.data() + w3, out, kHidden)).array() *
                      (1.0 - h2.array().square());
    GMap(grad.data() + w2, kHidden, kHidden) = dz2.transpose() * h1;
    GMap(grad.data() + b2, 1, kHidden) = dz2.colwise().sum();
    Mat<double> dz1 = (dz2 * WMap(theta.data() + w2, kHidden, kHidden)).array() *
                      (1.0 - h1.array().square());
    GMap(grad.data() + w1, kHidden, kObs) = dz1.transpose() * obs;
    GMap(grad.data() + b1, 1, kHidden) = dz1.colwise().sum();
  };
  backprop(d_out, f.a1, f.a2, Layout::aW1, Layout::ab1, Layout::aW2, Layout::ab2, Layout::aW3,
           Layout::ab3, kActorOut);
  backprop(d_val, f.c1, f.c2, Layout::cW1, Layout::cb1, Layout::cW2, Layout::cb2, Layout::cW3,
           Layout::cb3, 1);
  const double raw = theta[Layout::log_std];
  grad[Layout::log_std] = (raw > kLogStdMin && raw < kLogStdMax) ? d_log_std : 0.0;
  return s;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  for (double& a : adv) a = (a - mean) / sd;
}

void Adam::step(std::vector<double>& theta, std::span<const double> grad, double lr) {
  if (m.size() != theta.size()) {
    m.assign(theta.size(), 0.0);
    v.assign(theta.size(), 0.0);
    t = 0;
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

UpdateStats ppo_update(PolicyParams& params, Adam& optimizer, const TrainBatch& batch,
                       const TrainHyper& hyper, Rng& rng) {
  if (batch.size() == 0) throw InputError("empty training batch");
  TrainBatch normalized = batch;
  normalize_advantages(normalized.advantages);

  const PolicyParams saved_params = params;
  const Adam saved_opt = optimizer;
  const LossConfig cfg{hyper.clip, hyper.value_coef, hyper.entropy_coef, hyper.mask_overridden};
  const auto mb = static_cast<std::size_t>(hyper.minibatch);
  std::vector<std::size_t> order(batch.size());
  std::vector<double> grad(Layout::size);
  UpdateStats stats;

  auto fail = [&](const std::string& why) {
    params = saved_params;
    optimizer = saved_opt;
    throw NumericsError(why);
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const auto end = std::min(order.size(), start + mb);
      const auto mini = normalized.select({order.data() + start, end - start});
      const auto s = ppo_loss_grad(params.theta, mini, cfg, grad);
      if (!std::isfinite(s.loss)) fail("non-finite PPO loss; update abandoned");
      if (hyper.adam) {
        optimizer.step(params.theta, grad, hyper.lr);
      } else {
        for (std::size_t k = 0; k < grad.size(); ++k) params.theta[k] -= hyper.lr * grad[k];
      }
      if (!params.finite()) fail("non-finite parameters after PPO step; update abandoned");
      stats.last = s;
      stats.mean.loss += s.loss;
      stats.mean.policy_loss += s.policy_loss;
      stats.mean.value_loss += s.value_loss;
      stats.mean.entropy += s.entropy;
      stats.mean.approx_kl += s.approx_kl;
      stats.mean.clip_fraction += s.clip_fraction;
      ++stats.minibatches;
    }
  }
  const double k = 1.0 / stats.minibatches;
  stats.mean.loss *= k;
  stats.mean.policy_loss *= k;
  stats.mean.value_loss *= k;
  stats.mean.entropy *= k;
  stats.mean.approx_kl *= k;
  stats.mean.clip_fraction *= k;
  return stats;
}

}  // namespace firemed::ppo
