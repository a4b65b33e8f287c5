#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ssde {

struct TaskDescription {
  int task_id = 0;
  std::string text;
};

/// Unit-norm task embedding.
struct TaskEmbedding {
  int task_id = 0;
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

inline constexpr int kDefaultEmbeddingDim = 64;

/// Lowercased words split on whitespace and punctuation.
std::vector<std::string> tokenize(const std::string& text);

/// Hashed bag-of-words embedding: each token maps to a seeded Gaussian vector
/// of length m; the sum is L2-normalized. Pure in (text, m, seed).
TaskEmbedding embed_description(const TaskDescription& desc, int m, uint64_t seed);

/// Reads one embedding per row. Rows may carry a leading integer task id
/// column; `#` lines are comments. m <= 0 infers the dimension from the
/// first row (which then must not carry an id).
std::vector<TaskEmbedding> load_embeddings(const std::filesystem::path& path, int m);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ssde
