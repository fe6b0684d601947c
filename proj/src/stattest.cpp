#include "provreg/stattest.hpp"

#include <cmath>
#include <sstream>

namespace provreg {

namespace {

void check_k(int k) {
  if (k < 1 || k > 4096)
    throw Error(ErrorCode::OutOfRange, "k=" + std::to_string(k));
}

void check_tau(int tau, int k) {
  if (tau < 0 || tau > k)
    throw Error(ErrorCode::OutOfRange,
                "tau=" + std::to_string(tau) + " outside [0, " +
                    std::to_string(k) + "]");
}

void check_pairs(std::span<const HashPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no hash pairs");
}

}  // namespace

double ExactProbability::to_double() const {
  return std::ldexp(numerator.convert_to<double>(), -k);
}

std::string ExactProbability::to_fraction() const {
  return numerator.str() + "/2^" + std::to_string(k);
}

MatchThreshold MatchThreshold::from_distance(int t, int k) {
  check_tau(t, k);
  return {k, k - t};
}

ExactProbability fpr(int tau, int k) {
  check_k(k);
  check_tau(tau, k);
  // running binomial coefficient C(k, i) for i = tau..k
  BigInt c = 1;
  for (int i = 0; i < tau; ++i) c = c * (k - i) / (i + 1);
  BigInt sum = 0;
  for (int i = tau; i <= k; ++i) {
    sum += c;
    c = c * (k - i) / (i + 1);
  }
  return {std::move(sum), k};
}

bool at_most(const ExactProbability& p, double target) {
  if (std::isnan(target)) return false;
  if (target >= 1.0) return true;
  if (target <= 0.0) return p.numerator == 0;
  int exp = 0;
  const double frac = std::frexp(target, &exp);
  const BigInt mant = static_cast<long long>(std::ldexp(frac, 53));
  // p.num * 2^-k <= mant * 2^(exp-53)
  const int shift = exp - 53 + p.k;
  if (shift >= 0) return p.numerator <= (mant << shift);
  return (p.numerator << -shift) <= mant;
}

MatchThreshold threshold_for_fpr(double target, int k) {
  check_k(k);
  if (!(target > 0.0 && target <= 1.0))
    throw Error(ErrorCode::OutOfRange, "target FPR must lie in (0, 1]");
  // fpr is decreasing in tau, so the first hit is the smallest
  for (int tau = 0; tau <= k; ++tau)
    if (at_most(fpr(tau, k), target)) return {k, tau};
  throw Error(ErrorCode::Unachievable,
              "target below 2^-" + std::to_string(k));
}

double tpr_empirical(std::span<const HashPair> pairs, int tau) {
  check_pairs(pairs);
  check_tau(tau, static_cast<int>(pairs.front().first.size()));
  std::size_t hits = 0;
  for (const auto& [a, b] : pairs)
    if (match_score(a, b) >= static_cast<std::size_t>(tau)) ++hits;
  return double(hits) / double(pairs.size());
}

double bit_accuracy(std::span<const HashPair> pairs) {
  check_pairs(pairs);
  double total = 0;
  for (const auto& [a, b] : pairs)
    total += double(match_score(a, b)) / double(a.size());
  return total / double(pairs.size());
}

std::vector<RocPoint> roc_curve(std::span<const HashPair> pairs, int k) {
  check_pairs(pairs);
  check_k(k);
  // histogram of match scores, then suffix sums give tpr for every tau
  std::vector<std::size_t> hist(static_cast<std::size_t>(k) + 1, 0);
  for (const auto& [a, b] : pairs) {
    if (a.size() != static_cast<std::size_t>(k))
      throw Error(ErrorCode::LengthMismatch,
                  "pair hash has " + std::to_string(a.size()) + " bits, k=" +
                      std::to_string(k));
    ++hist[match_score(a, b)];
  }
  std::vector<RocPoint> curve(static_cast<std::size_t>(k) + 1);
  std::size_t above = 0;
  for (int tau = k; tau >= 0; --tau) {
    above += hist[static_cast<std::size_t>(tau)];
    auto& p = curve[static_cast<std::size_t>(tau)];
    p.tau = tau;
    p.tpr = double(above) / double(pairs.size());
    p.fpr = fpr(tau, k);
  }
  return curve;
}

std::string roc_csv(std::span<const RocPoint> curve) {
  std::ostringstream out;
  out << "tau,tpr,fpr,fpr_exact\n";
  for (const auto& p : curve) {
    out << p.tau << ',' << p.tpr << ',';
    out.precision(6);
    out << p.fpr.to_double() << ',' << p.fpr.to_fraction() << '\n';
  }
  return out.str();
}

}  // namespace provreg
