#pragma once
// SQuAD-style answer matching: lowercase + whitespace tokenization.

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace expcal::eval {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(lowercase(w));
  return out;
}

// Lowercased, single-space-joined form used for exact match.
inline std::string normalize_answer(std::string_view s) {
  std::string out;
  for (const auto& w : split_words(s)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

inline bool exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold);
}

// Harmonic mean of multiset precision/recall. Both empty -> 1, one empty -> 0.
inline double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, long> gold_counts;
  for (const auto& g : gold) ++gold_counts[lowercase(g)];
  long common = 0;
  for (const auto& p : pred) {
    auto it = gold_counts.find(lowercase(p));
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

inline double token_f1(std::string_view pred, std::string_view gold) {
  return token_f1(split_words(pred), split_words(gold));
}

}  // namespace expcal::eval
