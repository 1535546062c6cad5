#pragma once

#include <string>

#include "json.hpp"

namespace kgbo {

using json = nlohmann::json;

struct AcquisitionKind {
  enum class Type { ei, ucb, log_ei };
  Type type = Type::log_ei;
  double param = 0.001;  // beta for UCB, eta for LogEI; unused by EI

  static AcquisitionKind ei() { return {Type::ei, 0.0}; }
  static AcquisitionKind upper_confidence(double beta) { return {Type::ucb, beta}; }
  static AcquisitionKind log_ei(double eta = 0.001) { return {Type::log_ei, eta}; }

  std::string name() const;
  json to_json() const;
  static AcquisitionKind from_json(const json& j);
  bool operator==(const AcquisitionKind&) const = default;
};

double normal_pdf(double z);
double normal_cdf(double z);

// exp(x^2) * erfc(x), stable for large x.
double erfcx(double x);

// log(phi(z) + z * Phi(z)), accurate far into the lower tail.
double log_h(double z);

// (mu - best) * Phi(z) + sigma * phi(z); max(mu - best, 0) when sigma is 0.
double expected_improvement(double mean, double sigma, double best);

// log(EI + eta * max(sigma, floor)), evaluated in the log domain.
double log_expected_improvement(double mean, double sigma, double best, double eta);

// Score for one candidate given latent posterior mean and variance.
double acquisition_score(const AcquisitionKind& kind, double mean, double variance, double best);

}  // namespace kgbo
