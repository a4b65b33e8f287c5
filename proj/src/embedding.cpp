#include "ssde/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssde/errors.hpp"
#include "ssde/rng.hpp"

namespace ssde {

namespace {

constexpr uint64_t kWordStreamTag = 0x776f7264'76656331ULL;  // "wordvec1"

void normalize_or_throw(std::vector<double>& v, const char* what) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw format_error(what);
  for (double& x : v) x /= norm;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    // Bytes >= 0x80 are kept so UTF-8 words stay intact.
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

TaskEmbedding embed_description(const TaskDescription& desc, int m, uint64_t seed) {
  if (desc.text.empty()) throw invalid_input("task description text is empty");
  if (m < 8) throw invalid_input("embedding dimension must be at least 8");

  const auto tokens = tokenize(desc.text);
  if (tokens.empty()) throw invalid_input("task description has no words");

  std::vector<double> sum(static_cast<std::size_t>(m), 0.0);
  for (const auto& tok : tokens) {
    Rng rng(derive_seed(kWordStreamTag, seed, fnv1a(tok)));
    for (auto& s : sum) s += rng.normal();
  }
  normalize_or_throw(sum, "embedding has zero norm");
  return {desc.task_id, std::move(sum)};
}

std::vector<TaskEmbedding> load_embeddings(const std::filesystem::path& path, int m) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open embedding file " + path.string());

  std::vector<TaskEmbedding> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::vector<std::string> fields;
    std::istringstream ss(line);
    for (std::string f; ss >> f;) fields.push_back(f);

    const auto where = path.string() + ":" + std::to_string(line_no);
    if (m <= 0) m = static_cast<int>(fields.size());

    int id = static_cast<int>(out.size());
    std::size_t offset = 0;
    if (static_cast<int>(fields.size()) == m + 1) {
      std::size_t used = 0;
      long parsed = 0;
      try {
        parsed = std::stol(fields[0], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[0].size() || parsed < 0)
        throw format_error(where + ": leading task id is not a non-negative integer");
      id = static_cast<int>(parsed);
      offset = 1;
    } else if (static_cast<int>(fields.size()) != m) {
      throw format_error(where + ": expected " + std::to_string(m) + " values, got " +
                         std::to_string(fields.size()));
    }

    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(m));
    for (std::size_t i = offset; i < fields.size(); ++i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[i], &used);
      } catch (const std::exception&) {
        throw format_error(where + ": not a number: " + fields[i]);
      }
      if (used != fields[i].size()) throw format_error(where + ": not a number: " + fields[i]);
      if (!std::isfinite(v)) throw format_error(where + ": non-finite entry");
      values.push_back(v);
    }
    normalize_or_throw(values, "embedding row has zero norm");
    out.push_back({id, std::move(values)});
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw invalid_input("cosine: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace ssde
