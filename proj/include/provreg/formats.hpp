#pragma once

#include <string>
#include <vector>

#include "provreg/bytes.hpp"
#include "provreg/hashcore.hpp"

namespace provreg {

// PHEM: "PHEM" | u16 version=1 | u32 count | u32 dim | count*dim f32,
// followed optionally by `count` NUL-terminated UTF-8 ids. All LE.
struct EmbeddingSet {
  EmbeddingMatrix values;
  std::vector<std::string> ids;  // empty or one per row
};

Bytes encode_embeddings(const EmbeddingSet& set);
EmbeddingSet decode_embeddings(std::span<const std::uint8_t> bytes);
EmbeddingSet load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const EmbeddingSet& set);

// PHWM: "PHWM" | u16 version=1 | u32 input_dim | u32 output_dim |
// u64 sample_count | mean f64 | projection row-major f64 | eigenvalues f64.
Bytes encode_model(const WhiteningModel<double>& model);
WhiteningModel<double> decode_model(std::span<const std::uint8_t> bytes);
WhiteningModel<double> load_model(const std::string& path);
void save_model(const std::string& path, const WhiteningModel<double>& model);

}  // namespace provreg
