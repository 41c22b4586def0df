#include "ragdial/retriever/dense_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/binary_io.hpp"
#include "ragdial/common/errors.hpp"
#include "ragdial/common/hash.hpp"

namespace ragdial::retriever {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'I', 'N', 'D', 'E', 'X', '1'};

std::uint64_t hash_rows(const nn::Tensor& rows) {
  Fnv1a h;
  h.update(std::as_bytes(rows.values()));
  return h.digest();
}

}  // namespace

double inner_product(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

DenseIndex DenseIndex::build(nn::Tensor embeddings, std::vector<std::string> doc_ids, std::uint64_t fingerprint) {
  if (doc_ids.empty()) throw ValidationError("empty index");
  if (embeddings.rank() != 2 || embeddings.rows() != doc_ids.size() || embeddings.cols() == 0) {
    throw ShapeError("index embeddings " + nn::shape_string(embeddings.shape()) + " do not match " +
                     std::to_string(doc_ids.size()) + " doc ids");
  }
  DenseIndex idx;
  idx.dim_ = embeddings.cols();
  idx.rows_ = std::move(embeddings);
  idx.ids_ = std::move(doc_ids);
  idx.fingerprint_ = fingerprint;
  idx.content_hash_ = hash_rows(idx.rows_);
  return idx;
}

std::uint64_t DenseIndex::rehash() const { return hash_rows(rows_); }

std::vector<RetrievalResult> DenseIndex::search_topk(std::span<const double> query, std::size_t k) const {
  if (size() == 0) throw ValidationError("empty index");
  if (k == 0) throw ValidationError("k must be at least 1");
  if (query.size() != dim_) {
    throw ShapeError("query has dimension " + std::to_string(query.size()) + ", index has " + std::to_string(dim_));
  }
  std::vector<double> scores(size());
  for (std::size_t i = 0; i < size(); ++i) scores[i] = inner_product(query, row(i));
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids_[a] < ids_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::vector<RetrievalResult> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({ids_[order[i]], order[i], scores[order[i]], 0.0});
  return out;
}

void DenseIndex::save(const std::filesystem::path& path) const {
  write_file_atomic(
      path,
      [&](std::ostream& out) {
        out.write(kMagic, sizeof(kMagic));
        binio::write<std::uint32_t>(out, kVersion);
        binio::write<std::uint64_t>(out, size());
        binio::write<std::uint64_t>(out, dim_);
        binio::write<std::uint64_t>(out, fingerprint_);
        for (const auto& id : ids_) binio::write_string(out, id);
        binio::write_doubles(out, rows_.data(), rows_.size());
      },
      true);
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open index: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ValidationError("not an index file: " + path.string());
  const auto version = binio::read<std::uint32_t>(in);
  if (version != kVersion) throw ValidationError("unsupported index version " + std::to_string(version));
  const auto n = binio::read<std::uint64_t>(in);
  const auto d = binio::read<std::uint64_t>(in);
  const auto fingerprint = binio::read<std::uint64_t>(in);
  if (n == 0) throw ValidationError("empty index");
  if (d == 0 || n > (1ULL << 31) || d > (1ULL << 20)) throw ValidationError("index header out of range");
  std::vector<std::string> ids(n);
  for (auto& id : ids) id = binio::read_string(in, 1 << 16);
  nn::Tensor rows = nn::Tensor::matrix(n, d);
  binio::read_doubles(in, rows.data(), rows.size());
  return build(std::move(rows), std::move(ids), fingerprint);
}

std::vector<RetrievalResult> doc_priors(std::vector<RetrievalResult> results) {
  if (results.empty()) return results;
  double mx = results[0].score;
  for (const auto& r : results) mx = std::max(mx, r.score);
  double z = 0.0;
  for (auto& r : results) {
    r.prob = std::exp(r.score - mx);
    z += r.prob;
  }
  for (auto& r : results) r.prob /= z;
  return results;
}

}  // namespace ragdial::retriever
