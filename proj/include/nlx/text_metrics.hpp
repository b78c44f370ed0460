#pragma once

// In-repo BLEU and METEOR.
//
// Tokenization: ASCII-lowercase, punctuation replaced by spaces, split on
// whitespace.
//
// BLEU: up to 4-grams, clipped counts against the maximum count in any
// reference, add-one smoothing on the 2..4-gram precisions, brevity penalty
// against the closest reference length (shorter wins ties), scaled to
// [0, 100].
//
// METEOR (simplified): unigram matches on exact or suffix-stemmed tokens,
// alignment with the maximal number of matches and, among those, the fewest
// chunks. Fmean = P*R / (alpha*P + (1-alpha)*R), penalty =
// gamma * ((chunks-1)/(matches-1))^beta, alpha = 0.9, beta = 3, gamma = 0.5.
// Best score over the references.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nlx/error.hpp"

namespace nlx {

using Tokens = std::vector<std::string>;

inline Tokens tokenize(const std::string& text) {
  std::string norm;
  norm.reserve(text.size());
  for (unsigned char ch : text) {
    if (std::ispunct(ch)) norm.push_back(' ');
    else norm.push_back(static_cast<char>(std::tolower(ch)));
  }
  Tokens out;
  std::istringstream in(norm);
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

inline constexpr int kBleuOrder = 4;

struct BleuStats {
  std::array<double, kBleuOrder> matches{};
  std::array<double, kBleuOrder> totals{};
  double candidate_length = 0;
  double reference_length = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }
};

namespace detail {

inline std::map<std::string, int> ngram_counts(const Tokens& t, int n) {
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= t.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += t[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

inline Tokens checked_candidate(const std::string& candidate, const std::vector<std::string>& references) {
  if (references.empty()) throw InputError("at least one reference is required");
  auto tokens = tokenize(candidate);
  if (tokens.empty()) throw InputError("candidate text has no tokens");
  return tokens;
}

}  // namespace detail

inline BleuStats bleu_stats(const std::string& candidate, const std::vector<std::string>& references) {
  const auto cand = detail::checked_candidate(candidate, references);
  std::vector<Tokens> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));

  BleuStats s;
  s.candidate_length = static_cast<double>(cand.size());
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  s.reference_length = static_cast<double>(best);

  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto cc = detail::ngram_counts(cand, n);
    std::map<std::string, int> max_ref;
    for (const auto& r : refs)
      for (const auto& [g, c] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    double clipped = 0, total = 0;
    for (const auto& [g, c] : cc) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    s.matches[n - 1] = clipped;
    s.totals[n - 1] = total;
  }
  return s;
}

inline double bleu_from_stats(const BleuStats& s) {
  if (s.candidate_length == 0 || s.matches[0] == 0) return 0.0;
  double log_sum = std::log(s.matches[0] / s.totals[0]);
  for (int n = 1; n < kBleuOrder; ++n) log_sum += std::log((s.matches[n] + 1.0) / (s.totals[n] + 1.0));
  const double bp =
      s.candidate_length > s.reference_length ? 1.0 : std::exp(1.0 - s.reference_length / s.candidate_length);
  return 100.0 * bp * std::exp(log_sum / kBleuOrder);
}

inline double bleu(const std::string& candidate, const std::vector<std::string>& references) {
  return bleu_from_stats(bleu_stats(candidate, references));
}

// Corpus BLEU: n-gram statistics summed over all segments before combining.
inline double corpus_bleu(const std::vector<std::string>& candidates,
                          const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) throw InputError("one reference list per candidate is required");
  if (candidates.empty()) throw InputError("corpus BLEU needs at least one segment");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += bleu_stats(candidates[i], references[i]);
  return bleu_from_stats(total);
}

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

// Strips one common English suffix, keeping at least three characters.
inline std::string suffix_stem(const std::string& token) {
  static const std::array<std::string, 5> kSuffixes = {"ing", "ed", "es", "s", "ly"};
  for (const auto& s : kSuffixes)
    if (token.size() >= s.size() + 3 && token.compare(token.size() - s.size(), s.size(), s) == 0)
      return token.substr(0, token.size() - s.size());
  return token;
}

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

// Depth-first branch and bound over candidate positions. Every maximal
// matching is reachable; `node_budget` caps the search on long inputs, in
// which case the best alignment found so far is kept (the first descent
// already follows contiguous continuations greedily).
class ChunkMinimizer {
 public:
  ChunkMinimizer(const Tokens& cand, const Tokens& ref, std::size_t node_budget)
      : budget_(node_budget) {
    std::map<std::string, int> ids;
    auto id_of = [&](const std::string& s) { return ids.emplace(s, static_cast<int>(ids.size())).first->second; };
    for (const auto& t : cand) c_.push_back(id_of(suffix_stem(t)));
    for (const auto& t : ref) r_.push_back(id_of(suffix_stem(t)));
    const auto classes = ids.size();
    std::vector<int> cc(classes), rc(classes);
    for (int s : c_) ++cc[s];
    for (int s : r_) ++rc[s];
    skips_left_.resize(classes);
    for (std::size_t s = 0; s < classes; ++s) {
      const int m = std::min(cc[s], rc[s]);
      matches_ += static_cast<std::size_t>(m);
      skips_left_[s] = cc[s] - m;
    }
    used_.assign(r_.size(), false);
    assign_.assign(c_.size(), -1);
    by_class_.resize(classes);
    for (std::size_t j = 0; j < r_.size(); ++j) by_class_[r_[j]].push_back(static_cast<int>(j));
  }

  MeteorAlignment solve() {
    if (matches_ == 0) return {0, 0};
    search(0, 0);
    return {matches_, matches_ - static_cast<std::size_t>(best_links_)};
  }

 private:
  void search(std::size_t i, int links) {
    if (exhausted_) return;
    if (++nodes_ > budget_ && best_links_ >= 0) {
      exhausted_ = true;
      return;
    }
    if (i == c_.size()) {
      best_links_ = std::max(best_links_, links);
      return;
    }
    if (links + static_cast<int>(c_.size() - i) <= best_links_) return;
    const int s = c_[i];
    const int prev = i > 0 ? assign_[i - 1] : -1;
    const int cont = prev >= 0 && static_cast<std::size_t>(prev + 1) < r_.size() && !used_[prev + 1] &&
                             r_[prev + 1] == s
                         ? prev + 1
                         : -1;
    // continuing the previous chunk first makes the first descent greedy
    if (cont >= 0) take(i, cont, links + 1);
    for (int j : by_class_[s])
      if (!used_[j] && j != cont) take(i, j, links);
    if (skips_left_[s] > 0) {
      --skips_left_[s];
      search(i + 1, links);
      ++skips_left_[s];
    }
  }

  void take(std::size_t i, int j, int links) {
    used_[j] = true;
    assign_[i] = j;
    search(i + 1, links);
    assign_[i] = -1;
    used_[j] = false;
  }

  std::vector<int> c_, r_;
  std::vector<int> skips_left_;
  std::vector<std::vector<int>> by_class_;
  std::vector<bool> used_;
  std::vector<int> assign_;
  std::size_t matches_ = 0;
  int best_links_ = -1;
  std::size_t nodes_ = 0;
  std::size_t budget_;
  bool exhausted_ = false;
};

}  // namespace detail

inline constexpr std::size_t kMeteorNodeBudget = 200000;

inline MeteorAlignment meteor_align(const Tokens& cand, const Tokens& ref, std::size_t node_budget = kMeteorNodeBudget) {
  return detail::ChunkMinimizer(cand, ref, node_budget).solve();
}

inline double meteor_score(std::size_t cand_len, std::size_t ref_len, const MeteorAlignment& a,
                           const MeteorParams& p = {}) {
  if (a.matches == 0 || cand_len == 0 || ref_len == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(cand_len);
  const double recall = m / static_cast<double>(ref_len);
  const double fmean =
      precision == recall ? precision : precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
  const double frag = a.matches > 1 ? (static_cast<double>(a.chunks) - 1.0) / (m - 1.0) : 0.0;
  const double penalty = p.gamma * std::pow(frag, p.beta);
  return fmean * (1.0 - penalty);
}

inline double meteor(const std::string& candidate, const std::vector<std::string>& references,
                     const MeteorParams& params = {}) {
  const auto cand = detail::checked_candidate(candidate, references);
  double best = 0.0;
  for (const auto& r : references) {
    const auto ref = tokenize(r);
    best = std::max(best, meteor_score(cand.size(), ref.size(), meteor_align(cand, ref), params));
  }
  return best;
}

}  // namespace nlx
