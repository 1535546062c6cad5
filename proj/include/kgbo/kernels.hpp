#pragma once

#include <span>

#include <Eigen/Dense>

#include "kgbo/acquisition.hpp"

// Data-parallel inner loops of the surrogate and pseudo-point code. Each
// kernel exists as a serial reference and an OpenMP variant with identical
// results; the unqualified names dispatch to the OpenMP variant.
//
// Point sets are d x n matrices (one column per point) already divided by the
// ARD lengthscales, so r = ||a - b||.
namespace kgbo::kernels {

double matern52(double r, double signal_variance);

namespace serial {

void matern52_gram(const Eigen::MatrixXd& scaled, double signal_variance, Eigen::MatrixXd& out);
void matern52_cross(const Eigen::MatrixXd& scaled_a, const Eigen::MatrixXd& scaled_b, double signal_variance,
                    Eigen::MatrixXd& out);
// out[k] = sum_ij W_ij * dK_ij / dlog(lengthscale_k).
void lengthscale_traces(const Eigen::MatrixXd& scaled, double signal_variance, const Eigen::MatrixXd& weights,
                        Eigen::VectorXd& out);
void acquisition_scores(const AcquisitionKind& kind, std::span<const double> means, std::span<const double> variances,
                        double best, std::span<double> out);
// out[i] = <embeddings.col(i), query>.
void dot_columns(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& query, std::span<double> out);

}  // namespace serial

namespace omp {

void matern52_gram(const Eigen::MatrixXd& scaled, double signal_variance, Eigen::MatrixXd& out);
void matern52_cross(const Eigen::MatrixXd& scaled_a, const Eigen::MatrixXd& scaled_b, double signal_variance,
                    Eigen::MatrixXd& out);
void lengthscale_traces(const Eigen::MatrixXd& scaled, double signal_variance, const Eigen::MatrixXd& weights,
                        Eigen::VectorXd& out);
void acquisition_scores(const AcquisitionKind& kind, std::span<const double> means, std::span<const double> variances,
                        double best, std::span<double> out);
void dot_columns(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& query, std::span<double> out);

}  // namespace omp

using omp::acquisition_scores;
using omp::dot_columns;
using omp::lengthscale_traces;
using omp::matern52_cross;
using omp::matern52_gram;

}  // namespace kgbo::kernels
