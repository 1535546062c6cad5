#include "kgbo/batch.hpp"

#include <cmath>
#include <limits>

#include "kgbo/error.hpp"
#include "kgbo/kernels.hpp"

namespace kgbo {

PoolPosterior::PoolPosterior(const GPModel& gp, Eigen::MatrixXd pool_inputs)
    : gp_(&gp), pool_(std::move(pool_inputs)) {
  if (static_cast<std::size_t>(pool_.rows()) != gp.dim()) throw SchemaError("pool dimension does not match the GP");
  scaled_ = gp.scale(pool_);
  const auto& h = gp.hyperparams();
  mean_ = Eigen::VectorXd::Constant(pool_.cols(), h.constant_mean);
  variance_ = Eigen::VectorXd::Constant(pool_.cols(), h.signal_variance);
  if (gp.size() > 0) {
    kernels::matern52_cross(gp.scale(gp.inputs()), scaled_, h.signal_variance, v_);
    mean_ += v_.transpose() * gp.alpha();
    gp.cholesky().triangularView<Eigen::Lower>().solveInPlace(v_);
    variance_ -= v_.colwise().squaredNorm().transpose();
  }
  variance_ = variance_.cwiseMax(0.0);
}

void PoolPosterior::add_fantasy(std::size_t index) {
  const auto j = static_cast<Eigen::Index>(index);
  const auto& h = gp_->hyperparams();
  Eigen::MatrixXd kj;
  kernels::matern52_cross(scaled_.col(j), scaled_, h.signal_variance, kj);  // 1 x P
  Eigen::VectorXd cov = kj.row(0).transpose();
  if (v_.rows() > 0) cov -= v_.transpose() * v_.col(j);
  for (const auto& row : fantasy_rows_) cov -= row(j) * row;
  const double denom = std::sqrt(std::max(variance_(j), 0.0) + h.noise_variance);
  Eigen::VectorXd row = cov / denom;
  variance_ = (variance_ - row.cwiseAbs2()).cwiseMax(0.0);
  // Fantasy target equals the posterior mean, so the mean is unchanged.
  fantasy_rows_.push_back(std::move(row));
}

std::vector<double> PoolPosterior::scores(const AcquisitionKind& kind, double best) const {
  std::vector<double> out(size());
  kernels::acquisition_scores(kind, std::span<const double>(mean_.data(), size()),
                              std::span<const double>(variance_.data(), size()), best, out);
  return out;
}

std::vector<double> acquire(const GPModel& gp, const Eigen::MatrixXd& candidates, const AcquisitionKind& kind,
                            double best_so_far) {
  if (candidates.cols() == 0) throw SchemaError("acquire needs at least one candidate");
  Eigen::VectorXd mean, var;
  gp.predict_latent(candidates, mean, var);
  std::vector<double> out(static_cast<std::size_t>(candidates.cols()));
  kernels::acquisition_scores(kind, std::span<const double>(mean.data(), out.size()),
                              std::span<const double>(var.data(), out.size()), best_so_far, out);
  return out;
}

std::ptrdiff_t argmax_eligible(std::span<const double> scores, std::span<const std::uint8_t> eligible, Rng& rng) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::ptrdiff_t> ties;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!eligible[i]) continue;
    if (scores[i] > best || ties.empty()) {
      best = scores[i];
      ties.assign(1, static_cast<std::ptrdiff_t>(i));
    } else if (scores[i] == best) {
      ties.push_back(static_cast<std::ptrdiff_t>(i));
    }
  }
  if (ties.empty()) return -1;
  return ties.size() == 1 ? ties.front() : ties[uniform_below(rng, ties.size())];
}

std::vector<std::size_t> select_batch_indices(const GPModel& gp, const Eigen::MatrixXd& pool_inputs, int q,
                                              const std::vector<AcquisitionKind>& kinds, double best_so_far,
                                              Rng& rng, std::vector<AcquisitionKind>* used_kinds) {
  if (q < 1) throw SchemaError("batch size must be at least 1");
  if (kinds.empty()) throw SchemaError("at least one acquisition kind is required");
  if (pool_inputs.cols() < q) throw SchemaError("candidate pool is smaller than the batch size");
  PoolPosterior post(gp, pool_inputs);
  std::vector<std::uint8_t> eligible(post.size(), 1);
  std::vector<std::size_t> picks;
  for (int i = 0; i < q; ++i) {
    const auto& kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    const auto s = post.scores(kind, best_so_far);
    const auto pick = static_cast<std::size_t>(argmax_eligible(s, eligible, rng));
    picks.push_back(pick);
    if (used_kinds) used_kinds->push_back(kind);
    eligible[pick] = 0;
    if (i + 1 < q) post.add_fantasy(pick);
  }
  return picks;
}

Eigen::MatrixXd encode_all(const SearchSpace& space, const std::vector<Condition>& conditions) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(space.encoding_dim()), static_cast<Eigen::Index>(conditions.size()));
  for (std::size_t i = 0; i < conditions.size(); ++i)
    space.encode_into(conditions[i], std::span<double>(out.col(static_cast<Eigen::Index>(i)).data(), space.encoding_dim()));
  return out;
}

std::vector<Condition> select_batch(const GPModel& gp, const SearchSpace& space, const std::vector<Condition>& pool,
                                    int q, const std::vector<AcquisitionKind>& kinds, double best_so_far, Rng& rng) {
  if (pool.size() < static_cast<std::size_t>(std::max(q, 0)))
    throw SchemaError("candidate pool is smaller than the batch size");
  const auto idx = select_batch_indices(gp, encode_all(space, pool), q, kinds, best_so_far, rng);
  std::vector<Condition> out;
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

}  // namespace kgbo
