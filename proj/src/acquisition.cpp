#include "kgbo/acquisition.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "kgbo/error.hpp"

namespace kgbo {

namespace {
constexpr double kSigmaFloor = 1e-12;
const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

std::string AcquisitionKind::name() const {
  switch (type) {
    case Type::ei: return "EI";
    case Type::ucb: return "UCB";
    case Type::log_ei: return "LogEI";
  }
  return "?";
}

json AcquisitionKind::to_json() const {
  switch (type) {
    case Type::ei: return {{"kind", "EI"}};
    case Type::ucb: return {{"kind", "UCB"}, {"beta", param}};
    case Type::log_ei: return {{"kind", "LogEI"}, {"eta", param}};
  }
  return {};
}

AcquisitionKind AcquisitionKind::from_json(const json& j) {
  const std::string k = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  AcquisitionKind a;
  if (k == "EI") {
    a = ei();
  } else if (k == "UCB") {
    a = upper_confidence(j.is_object() ? j.value("beta", 2.0) : 2.0);
  } else if (k == "LogEI") {
    a = log_ei(j.is_object() ? j.value("eta", 0.001) : 0.001);
  } else {
    throw SchemaError("unknown acquisition kind '" + k + "'");
  }
  if (a.type != Type::ei && !(a.param > 0.0))
    throw SchemaError("acquisition parameter for " + k + " must be positive");
  return a;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double erfcx(double x) {
  if (x < 26.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic expansion; relative error below 1e-12 for x >= 26.
  const double inv2 = 1.0 / (x * x);
  return (1.0 - 0.5 * inv2 * (1.0 - 1.5 * inv2 * (1.0 - 2.5 * inv2))) / (x * std::sqrt(std::numbers::pi));
}

double log_h(double z) {
  if (z > -1.0) return std::log(normal_pdf(z) + z * normal_cdf(z));
  if (z > -1e8) {
    // h(z) = phi(z) * (1 - |z| * Phi(z) / phi(z)) with Phi/phi = sqrt(pi/2) erfcx(-z/sqrt2).
    const double ratio = -z * std::sqrt(std::numbers::pi / 2.0) * erfcx(-z * kInvSqrt2);
    return -0.5 * z * z - kLogSqrt2Pi + std::log1p(-ratio);
  }
  return -0.5 * z * z - kLogSqrt2Pi - 2.0 * std::log(-z);
}

double expected_improvement(double mean, double sigma, double best) {
  const double delta = mean - best;
  if (sigma <= kSigmaFloor) return std::max(delta, 0.0);
  const double z = delta / sigma;
  return std::max(delta * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

double log_expected_improvement(double mean, double sigma, double best, double eta) {
  const double s = std::max(sigma, kSigmaFloor);
  const double z = (mean - best) / s;
  // log(s * h(z) + eta * s) = log s + logaddexp(log h(z), log eta)
  const double a = log_h(z);
  const double b = std::log(eta);
  const double hi = std::max(a, b);
  return std::log(s) + hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double acquisition_score(const AcquisitionKind& kind, double mean, double variance, double best) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  switch (kind.type) {
    case AcquisitionKind::Type::ei: return expected_improvement(mean, sigma, best);
    case AcquisitionKind::Type::ucb: return mean + kind.param * sigma;
    case AcquisitionKind::Type::log_ei: return log_expected_improvement(mean, sigma, best, kind.param);
  }
  return -std::numeric_limits<double>::infinity();
}

}  // namespace kgbo
