#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "provreg/error.hpp"

namespace provreg {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One embedding per row.
using EmbeddingMatrix = RowMajorMatrix<float>;

inline constexpr int kDefaultInputDim = 768;
inline constexpr int kDefaultHashBits = 96;

// Mean + PCA basis. projection holds the unit-norm eigenvectors as rows;
// the 1/sqrt(eigenvalue) whitening scale is applied in apply_whitening so
// that the stored basis stays orthonormal.
template <class Scalar = double>
struct WhiteningModel {
  Eigen::Index input_dim = 0;
  Eigen::Index output_dim = 0;
  std::uint64_t sample_count = 0;
  Vector<Scalar> mean;
  RowMajorMatrix<Scalar> projection;
  Vector<Scalar> eigenvalues;

  static WhiteningModel identity(Eigen::Index dim) {
    WhiteningModel m;
    m.input_dim = m.output_dim = dim;
    m.sample_count = static_cast<std::uint64_t>(dim);
    m.mean = Vector<Scalar>::Zero(dim);
    m.projection = RowMajorMatrix<Scalar>::Identity(dim, dim);
    m.eigenvalues = Vector<Scalar>::Ones(dim);
    return m;
  }

  bool operator==(const WhiteningModel& o) const {
    return input_dim == o.input_dim && output_dim == o.output_dim &&
           sample_count == o.sample_count && mean == o.mean &&
           projection == o.projection && eigenvalues == o.eigenvalues;
  }
};

namespace detail {

inline constexpr double kRegularization = 1e-6;
inline constexpr double kMinEigenvalue = 1e-10;

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace detail

/// Fits a whitening model on `samples` (one embedding per row), keeping the
/// `output_dim` highest-variance principal directions.
///
/// Covariance uses the (n - 1) estimator with column means accumulated in
/// long double. The diagonal is regularized by 1e-6 * trace / d before the
/// eigendecomposition. Eigenvectors are oriented so their largest-magnitude
/// entry is positive, and ties in eigenvalue keep the solver's index order,
/// which makes the result a pure function of the input rows.
template <class Scalar = double, class Derived>
WhiteningModel<Scalar> fit_whitening(const Eigen::MatrixBase<Derived>& samples,
                                     Eigen::Index output_dim) {
  using Eigen::Index;
  const Index n = samples.rows();
  const Index d = samples.cols();
  if (output_dim < 1 || output_dim > d)
    throw Error(ErrorCode::DimensionMismatch,
                "output_dim " + std::to_string(output_dim) +
                    " outside [1, " + std::to_string(d) + "]");
  if (n < output_dim || n < 2)
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(n) + " samples for output_dim " +
                    std::to_string(output_dim));
  if (!detail::all_finite(samples))
    throw Error(ErrorCode::NonFiniteInput, "embedding contains NaN or Inf");

  Eigen::VectorXd mean(d);
  for (Index j = 0; j < d; ++j) {
    long double acc = 0;
    for (Index i = 0; i < n; ++i) acc += static_cast<long double>(samples(i, j));
    mean(j) = static_cast<double>(acc / static_cast<long double>(n));
  }

  Eigen::MatrixXd centered = samples.template cast<double>();
  centered.rowwise() -= mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / double(n - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();

  const double eps = detail::kRegularization * cov.trace() / double(d);
  cov.diagonal().array() += eps;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorCode::DegenerateCovariance, "eigendecomposition failed");

  const Eigen::VectorXd& values = solver.eigenvalues();
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });

  WhiteningModel<Scalar> model;
  model.input_dim = d;
  model.output_dim = output_dim;
  model.sample_count = static_cast<std::uint64_t>(n);
  model.mean = mean.cast<Scalar>();
  model.projection.resize(output_dim, d);
  model.eigenvalues.resize(output_dim);

  for (Index r = 0; r < output_dim; ++r) {
    const Index src = order[static_cast<std::size_t>(r)];
    const double lambda = values(src);
    if (!(lambda >= detail::kMinEigenvalue))
      throw Error(ErrorCode::DegenerateCovariance,
                  "covariance rank below output_dim (eigenvalue " +
                      std::to_string(lambda) + " at component " +
                      std::to_string(r) + ")");
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;
    model.projection.row(r) = v.transpose().cast<Scalar>();
    model.eigenvalues(r) = static_cast<Scalar>(lambda);
  }
  return model;
}

/// projection * (e - mean), each component divided by sqrt(eigenvalue).
template <class Scalar, class Derived>
Vector<Scalar> apply_whitening(const WhiteningModel<Scalar>& model,
                               const Eigen::MatrixBase<Derived>& e) {
  if (e.size() != model.input_dim)
    throw Error(ErrorCode::DimensionMismatch,
                "embedding has " + std::to_string(e.size()) +
                    " values, model expects " + std::to_string(model.input_dim));
  const Vector<Scalar> centered = e.template cast<Scalar>() - model.mean;
  return (model.projection * centered).cwiseQuotient(
      model.eigenvalues.cwiseSqrt());
}

/// A k-bit hash. Bit i lives in byte i/8, most significant bit first.
class PerceptualHash {
 public:
  PerceptualHash() = default;
  explicit PerceptualHash(std::size_t k) : k_(k), bytes_((k + 7) / 8, 0) {}

  static PerceptualHash from_bits(std::initializer_list<int> bits);
  static PerceptualHash all_ones(std::size_t k);

  std::size_t size() const { return k_; }

  bool bit(std::size_t i) const {
    return (bytes_[i / 8] >> (7 - i % 8)) & 1u;
  }
  void set(std::size_t i, bool value) {
    const std::uint8_t mask = static_cast<std::uint8_t>(0x80u >> (i % 8));
    if (value)
      bytes_[i / 8] |= mask;
    else
      bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
  }

  PerceptualHash complement() const;

  std::span<const std::uint8_t> bytes() const { return bytes_; }

  bool operator==(const PerceptualHash&) const = default;

 private:
  friend PerceptualHash deserialize_hash(std::span<const std::uint8_t>,
                                         std::size_t);
  std::size_t k_ = 0;
  std::vector<std::uint8_t> bytes_;
};

/// Heaviside sign binarization; zero maps to 1.
template <class Derived>
PerceptualHash binarize(const Eigen::MatrixBase<Derived>& z) {
  if (!z.allFinite())
    throw Error(ErrorCode::NonFiniteInput, "cannot binarize NaN or Inf");
  PerceptualHash h(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i)
    h.set(static_cast<std::size_t>(i), z(i) >= 0);
  return h;
}

template <class Scalar, class Derived>
PerceptualHash hash_embedding(const WhiteningModel<Scalar>& model,
                              const Eigen::MatrixBase<Derived>& e) {
  return binarize(apply_whitening(model, e));
}

std::size_t hamming_distance(const PerceptualHash& a, const PerceptualHash& b);

/// Number of matching bits, k - hamming_distance.
std::size_t match_score(const PerceptualHash& a, const PerceptualHash& b);

std::vector<std::uint8_t> serialize_hash(const PerceptualHash& h);
PerceptualHash deserialize_hash(std::span<const std::uint8_t> bytes,
                                std::size_t k);

/// Lowercase hex of the serialized bytes.
std::string to_hex(const PerceptualHash& h);
PerceptualHash hash_from_hex(std::string_view hex, std::size_t k);

}  // namespace provreg
