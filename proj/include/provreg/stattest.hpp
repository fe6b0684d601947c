#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "provreg/hashcore.hpp"

namespace provreg {

using BigInt = boost::multiprecision::cpp_int;

/// numerator / 2^k, held exactly.
struct ExactProbability {
  BigInt numerator;
  int k = 0;

  double to_double() const;
  /// "num/2^k"
  std::string to_fraction() const;

  bool operator==(const ExactProbability&) const = default;
};

/// tau is the minimum number of matching bits; distance() is the equivalent
/// maximum Hamming distance k - tau.
struct MatchThreshold {
  int k = kDefaultHashBits;
  int tau = 0;

  int distance() const { return k - tau; }
  static MatchThreshold from_distance(int t, int k);

  bool operator==(const MatchThreshold&) const = default;
};

/// P(X >= tau) for X ~ Binomial(k, 1/2), the probability that two unrelated
/// hashes agree on at least tau bits.
ExactProbability fpr(int tau, int k);

/// true iff p <= target, compared without rounding p.
bool at_most(const ExactProbability& p, double target);

/// Smallest tau whose fpr does not exceed `target`.
MatchThreshold threshold_for_fpr(double target, int k);

using HashPair = std::pair<PerceptualHash, PerceptualHash>;

double tpr_empirical(std::span<const HashPair> pairs, int tau);
double bit_accuracy(std::span<const HashPair> pairs);

struct RocPoint {
  int tau = 0;
  double tpr = 0;
  ExactProbability fpr;
};

/// One point per tau in [0, k].
std::vector<RocPoint> roc_curve(std::span<const HashPair> pairs, int k);

/// Header "tau,tpr,fpr,fpr_exact"; fpr printed with 6 significant digits,
/// fpr_exact as num/2^k.
std::string roc_csv(std::span<const RocPoint> curve);

}  // namespace provreg
