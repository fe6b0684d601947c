#include "provreg/formats.hpp"

#include <string_view>

namespace provreg {

namespace {

constexpr std::string_view kEmbeddingMagic = "PHEM";
constexpr std::string_view kModelMagic = "PHWM";
constexpr std::uint16_t kFormatVersion = 1;

void expect_header(ByteReader& in, std::string_view magic) {
  auto m = in.raw(4);
  if (std::string_view(reinterpret_cast<const char*>(m.data()), 4) != magic)
    throw Error(ErrorCode::FormatError,
                "bad magic, expected " + std::string(magic));
  const auto version = in.u16();
  if (version != kFormatVersion)
    throw Error(ErrorCode::FormatError,
                "unsupported version " + std::to_string(version));
}

}  // namespace

Bytes encode_embeddings(const EmbeddingSet& set) {
  const auto count = static_cast<std::size_t>(set.values.rows());
  if (!set.ids.empty() && set.ids.size() != count)
    throw Error(ErrorCode::LengthMismatch, "ids do not match embedding count");
  ByteWriter out;
  out.raw(kEmbeddingMagic);
  out.u16(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(count));
  out.u32(static_cast<std::uint32_t>(set.values.cols()));
  for (Eigen::Index i = 0; i < set.values.rows(); ++i)
    for (Eigen::Index j = 0; j < set.values.cols(); ++j) out.f32(set.values(i, j));
  for (const auto& id : set.ids) {
    if (id.find('\0') != std::string::npos)
      throw Error(ErrorCode::FormatError, "id contains NUL");
    out.raw(id);
    out.u8(0);
  }
  return std::move(out).bytes();
}

EmbeddingSet decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  expect_header(in, kEmbeddingMagic);
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  if (std::uint64_t(count) * dim * 4 > in.remaining())
    throw Error(ErrorCode::FormatError, "truncated embedding payload");

  EmbeddingSet set;
  set.values.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint32_t j = 0; j < dim; ++j) set.values(i, j) = in.f32();

  if (in.remaining() > 0) {
    auto tail = in.raw(in.remaining());
    std::string current;
    for (auto c : tail) {
      if (c == 0) {
        set.ids.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(static_cast<char>(c));
      }
    }
    if (!current.empty() || set.ids.size() != count)
      throw Error(ErrorCode::FormatError,
                  "trailing id block has " + std::to_string(set.ids.size()) +
                      " entries for " + std::to_string(count) + " embeddings");
  }
  return set;
}

EmbeddingSet load_embeddings(const std::string& path) {
  return decode_embeddings(read_file(path));
}

void save_embeddings(const std::string& path, const EmbeddingSet& set) {
  write_file(path, encode_embeddings(set));
}

Bytes encode_model(const WhiteningModel<double>& model) {
  ByteWriter out;
  out.raw(kModelMagic);
  out.u16(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(model.input_dim));
  out.u32(static_cast<std::uint32_t>(model.output_dim));
  out.u64(model.sample_count);
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) out.f64(model.mean(i));
  for (Eigen::Index r = 0; r < model.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < model.projection.cols(); ++c)
      out.f64(model.projection(r, c));
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i)
    out.f64(model.eigenvalues(i));
  return std::move(out).bytes();
}

WhiteningModel<double> decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  expect_header(in, kModelMagic);
  WhiteningModel<double> m;
  m.input_dim = in.u32();
  m.output_dim = in.u32();
  m.sample_count = in.u64();
  if (m.output_dim < 1 || m.output_dim > m.input_dim)
    throw Error(ErrorCode::FormatError, "output_dim outside [1, input_dim]");
  const auto expected = 8ull * (std::uint64_t(m.input_dim) +
                                std::uint64_t(m.output_dim) * m.input_dim +
                                std::uint64_t(m.output_dim));
  if (in.remaining() != expected)
    throw Error(ErrorCode::FormatError, "model payload size mismatch");
  m.mean.resize(m.input_dim);
  for (Eigen::Index i = 0; i < m.input_dim; ++i) m.mean(i) = in.f64();
  m.projection.resize(m.output_dim, m.input_dim);
  for (Eigen::Index r = 0; r < m.output_dim; ++r)
    for (Eigen::Index c = 0; c < m.input_dim; ++c) m.projection(r, c) = in.f64();
  m.eigenvalues.resize(m.output_dim);
  for (Eigen::Index i = 0; i < m.output_dim; ++i) m.eigenvalues(i) = in.f64();
  return m;
}

WhiteningModel<double> load_model(const std::string& path) {
  return decode_model(read_file(path));
}

void save_model(const std::string& path, const WhiteningModel<double>& model) {
  write_file(path, encode_model(model));
}

}  // namespace provreg
