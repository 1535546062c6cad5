#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kgbo/acquisition.hpp"
#include "kgbo/gp.hpp"
#include "kgbo/rng.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

// Latent posterior over a fixed candidate pool that can absorb fantasy
// observations (y = current posterior mean) one at a time in O(P * (n + k)).
class PoolPosterior {
 public:
  PoolPosterior(const GPModel& gp, Eigen::MatrixXd pool_inputs);

  std::size_t size() const { return static_cast<std::size_t>(pool_.cols()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& variance() const { return variance_; }

  void add_fantasy(std::size_t index);
  std::vector<double> scores(const AcquisitionKind& kind, double best) const;

 private:
  const GPModel* gp_;
  Eigen::MatrixXd pool_;     // d x P, unscaled
  Eigen::MatrixXd scaled_;   // d x P, divided by lengthscales
  Eigen::MatrixXd v_;        // n x P: L^{-1} K(train, pool)
  std::vector<Eigen::VectorXd> fantasy_rows_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd variance_;
};

std::vector<double> acquire(const GPModel& gp, const Eigen::MatrixXd& candidates, const AcquisitionKind& kind,
                            double best_so_far);

// Index of the best-scoring eligible entry, exact ties broken by rng. Returns
// -1 when nothing is eligible.
std::ptrdiff_t argmax_eligible(std::span<const double> scores, std::span<const std::uint8_t> eligible, Rng& rng);

// Greedy fantasized batch: pick the argmax of the current acquisition
// (kinds cycle round-robin per pick), then condition on y = posterior mean at
// the pick. Returns pool indices in pick order.
std::vector<std::size_t> select_batch_indices(const GPModel& gp, const Eigen::MatrixXd& pool_inputs, int q,
                                              const std::vector<AcquisitionKind>& kinds, double best_so_far,
                                              Rng& rng, std::vector<AcquisitionKind>* used_kinds = nullptr);

std::vector<Condition> select_batch(const GPModel& gp, const SearchSpace& space, const std::vector<Condition>& pool,
                                    int q, const std::vector<AcquisitionKind>& kinds, double best_so_far, Rng& rng);

Eigen::MatrixXd encode_all(const SearchSpace& space, const std::vector<Condition>& conditions);

}  // namespace kgbo
