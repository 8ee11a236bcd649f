// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors
//
// Brute-force reference implementations and random fixture builders. Nothing
// here calls into the library's aggregation, statistics or selection code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"
#include "claimscope/saliency.hpp"

namespace oracle {

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> w = {"river", "stone", "light", "cloud", "paper", "engine",
                                             "garden", "signal", "mirror", "winter", "copper", "harbor"};
  return w;
}

// Text of `lengths.size()` sentences with the given word counts. Sentence
// starts are capitalized and end with a period.
inline std::string sentences_text(const std::vector<std::size_t>& lengths, std::mt19937& rng) {
  std::string out;
  std::uniform_int_distribution<std::size_t> pick(0, words().size() - 1);
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    if (s) out += ' ';
    for (std::size_t w = 0; w < lengths[s]; ++w) {
      std::string word = words()[pick(rng)];
      if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      if (w) out += ' ';
      out += word;
    }
    out += '.';
  }
  return out;
}

// Random lower-triangular matrix; rows are normalized when `stochastic`,
// and some entries below the diagonal are zeroed when `sparse`.
inline claimscope::TokenAttention random_causal(std::size_t n, std::mt19937& rng, bool stochastic = true,
                                                bool sparse = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  claimscope::TokenAttention att;
  att.n = n;
  att.matrix.assign(n * n, 0.0f);
  att.special_token_mask.assign(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    std::vector<double> row(k + 1);
    for (std::size_t l = 0; l <= k; ++l) {
      row[l] = (sparse && l < k && u(rng) < 0.3) ? 0.0 : u(rng) + 1e-3;
      sum += row[l];
    }
    for (std::size_t l = 0; l <= k; ++l) {
      att.matrix[k * n + l] = static_cast<float>(stochastic ? row[l] / sum : row[l]);
    }
  }
  return att;
}

// Sentence of each raw token by linear scan over sentence character ranges:
// the first sentence whose end lies beyond the token start, else the last.
// -1 for special tokens.
inline std::vector<long> token_sentences(const claimscope::Document& doc, const claimscope::TokenAlignment& a) {
  std::vector<long> out(a.size(), -1);
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a.special_token_mask[t]) continue;
    long s = static_cast<long>(doc.size()) - 1;
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (a.token_char_offsets[t].char_start < doc.sentences()[i].char_end) {
        s = static_cast<long>(i);
        break;
      }
    }
    out[t] = s;
  }
  return out;
}

// Mean of the attention block from sentence i's tokens to sentence j's tokens.
inline std::vector<double> block_means(const claimscope::TokenAttention& att, const claimscope::Document& doc,
                                       const claimscope::TokenAlignment& a) {
  const auto owner = token_sentences(doc, a);
  const std::size_t n = doc.size();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < att.n; ++k) {
        if (owner[k] != static_cast<long>(i)) continue;
        for (std::size_t l = 0; l < att.n; ++l) {
          if (owner[l] != static_cast<long>(j)) continue;
          sum += static_cast<double>(att.matrix[k * att.n + l]);
          ++count;
        }
      }
      out[i * n + j] = count ? sum / static_cast<double>(count) : 0.0;
    }
  }
  return out;
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

// Two-pass population statistics over the off-diagonal cells, skipping zero
// cells above the diagonal when `nonzero_rule`.
inline Stats stats(const std::vector<double>& m, std::size_t n, bool nonzero_rule) {
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (nonzero_rule && j > i && m[i * n + j] == 0.0) continue;
      xs.push_back(m[i * n + j]);
    }
  }
  if (xs.empty()) return {};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

inline double pair_score(const std::vector<double>& m, std::size_t n, std::size_t t, std::size_t j,
                         claimscope::Direction d) {
  switch (d) {
    case claimscope::Direction::kOutgoing: return m[t * n + j];
    case claimscope::Direction::kIncoming: return m[j * n + t];
    case claimscope::Direction::kMaxBoth: return std::max(m[t * n + j], m[j * n + t]);
  }
  return 0.0;
}

// Indices the policy admits for `target`, ascending.
inline std::vector<std::size_t> admitted(const std::vector<double>& m, std::size_t n, std::size_t target,
                                         const claimscope::ThresholdPolicy& p, bool nonzero_rule = true) {
  std::vector<std::size_t> out;
  if (p.mode == claimscope::ThresholdMode::kTopM) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != target) all.push_back({pair_score(m, n, target, j, p.direction), j});
    }
    // Highest score first; equal scores keep the lower index.
    for (std::size_t pick = 0; pick < p.m && !all.empty(); ++pick) {
      std::size_t best = 0;
      for (std::size_t q = 1; q < all.size(); ++q) {
        if (all[q].first > all[best].first) best = q;
      }
      out.push_back(all[best].second);
      all.erase(all.begin() + static_cast<long>(best));
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  double tau = p.tau;
  if (p.mode == claimscope::ThresholdMode::kRelative) {
    const Stats s = stats(m, n, nonzero_rule);
    tau = std::max(0.0, s.mean + p.k * s.std);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (j == target) continue;
    const double s = pair_score(m, n, target, j, p.direction);
    if (s > 0.0 && s >= tau) out.push_back(j);
  }
  return out;
}

}  // namespace oracle
