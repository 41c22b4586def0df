#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ragdial/nn/tensor.hpp"

namespace ragdial::retriever {

struct RetrievalResult {
  std::string doc_id;
  std::size_t row = 0;  // index row the score came from
  double score = 0.0;   // inner product
  double prob = 0.0;    // prior over the retrieved set, 0 until doc_priors
};

// Exact maximum-inner-product index over frozen passage embeddings. The
// passage encoder fingerprint is stored so a stale index can be detected.
//
// File layout (little-endian): magic "RDINDEX1" | u32 version | u64 n |
// u64 d | u64 fingerprint | n x (u64 len + id bytes) | n*d f64 row-major.
class DenseIndex {
 public:
  static constexpr std::uint32_t kVersion = 1;

  static DenseIndex build(nn::Tensor embeddings, std::vector<std::string> doc_ids, std::uint64_t fingerprint);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& doc_ids() const { return ids_; }
  const nn::Tensor& embeddings() const { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  std::uint64_t fingerprint() const { return fingerprint_; }

  // Hash of the stored rows, taken at build time.
  std::uint64_t content_hash() const { return content_hash_; }
  std::uint64_t rehash() const;

  // The k largest inner products, descending, ties broken by ascending doc
  // id. Returns all rows when k exceeds the index size.
  std::vector<RetrievalResult> search_topk(std::span<const double> query, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

 private:
  DenseIndex() = default;

  nn::Tensor rows_;
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::uint64_t content_hash_ = 0;
};

double inner_product(std::span<const double> a, std::span<const double> b);

// Softmax of the scores into `prob`; order is unchanged.
std::vector<RetrievalResult> doc_priors(std::vector<RetrievalResult> results);

}  // namespace ragdial::retriever
