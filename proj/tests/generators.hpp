#pragma once

// Hand-rolled random generators shared by the property tests and the
// acceptance binary. Everything draws from a caller-owned mt19937_64.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "aes/ensemble.hpp"
#include "aes/metrics.hpp"
#include "aes/numerics.hpp"
#include "aes/seed.hpp"

namespace gen {

inline int integer(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(aes::uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

inline double real(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * aes::uniform_unit(rng);
}

// Labels skewed toward a random subset so degenerate marginals show up.
inline std::vector<int> labels(std::mt19937_64& rng, std::size_t n, int k) {
  const int lo = integer(rng, 0, k - 1);
  const int hi = integer(rng, lo, k - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = integer(rng, 0, 3) == 0 ? integer(rng, 0, k - 1) : integer(rng, lo, hi);
  return out;
}

inline aes::ConfusionMatrix confusion(std::mt19937_64& rng, int k, int max_cell) {
  aes::ConfusionMatrix cm(k);
  for (int t = 0; t < k; ++t) {
    for (int p = 0; p < k; ++p) {
      // About a third of the cells stay empty.
      if (integer(rng, 0, 2) != 0) cm.add(t, p, integer(rng, 0, max_cell));
    }
  }
  return cm;
}

// Prediction on the 4-decimal grid used by member files.
inline double prediction(std::mt19937_64& rng) {
  return integer(rng, 0, 40000) / 10000.0;
}

// Random members over essays 1..n_essays. Some essays are unanimous, some
// members are exact copies, and validation stats cover a wide range.
inline std::vector<aes::PredictionSet> members(std::mt19937_64& rng, std::size_t n_members,
                                               std::size_t n_essays) {
  static const char* kNames[] = {"bert-base",     "deberta-base", "deberta-v3-large",
                                 "distilbert-base", "electra-large", "roberta-base",
                                 "roberta-large"};
  static const aes::Source kSources[] = {aes::Source::Essay, aes::Source::RationaleA,
                                         aes::Source::RationaleB};
  std::vector<aes::PredictionSet> out;
  std::vector<int> slots(21);
  for (int i = 0; i < 21; ++i) slots[static_cast<std::size_t>(i)] = i;
  aes::shuffle(slots, rng);
  std::vector<double> truth(n_essays);
  for (auto& t : truth) t = integer(rng, 0, 4);
  std::vector<char> unanimous(n_essays);
  std::vector<double> shared(n_essays);
  for (std::size_t e = 0; e < n_essays; ++e) {
    unanimous[e] = integer(rng, 0, 4) == 0;
    shared[e] = prediction(rng);
  }
  for (std::size_t m = 0; m < n_members; ++m) {
    aes::PredictionSet p;
    const int slot = slots[m];
    p.model_id = kNames[slot % 7];
    p.source = kSources[slot / 7];
    const double noise = real(rng, 0.0, 1.5);
    for (std::size_t e = 0; e < n_essays; ++e) {
      double v = unanimous[e] ? shared[e]
                              : std::clamp(truth[e] + real(rng, -noise, noise), 0.0, 4.0);
      if (!unanimous[e]) v = std::round(v * 10000.0) / 10000.0;
      p.predictions[static_cast<long long>(e + 1)] = v;
    }
    p.val_qwk = real(rng, 0.5, 0.95);
    p.val_spearman = real(rng, -1.0, 1.0);
    p.val_pearson = real(rng, -1.0, 1.0);
    out.push_back(std::move(p));
  }
  if (n_members > 1 && integer(rng, 0, 3) == 0) {
    // Copy one member's predictions onto another.
    out[1].predictions = out[0].predictions;
  }
  return out;
}

// Text free of the response markers, trimmed, possibly multi-line.
inline std::string rationale(std::mt19937_64& rng) {
  static const char* kWords[] = {"The",   "essay", "mentions", "mast",  "winches", "\"laws\"",
                                 "wind,", "50%",   "score",    "ratio", "café",    "obstacle.",
                                 "über",     "it's",  "(two)",    "1931"};
  const int n = integer(rng, 1, 80);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += integer(rng, 0, 12) == 0 ? "\n" : (integer(rng, 0, 8) == 0 ? "  " : " ");
    out += kWords[aes::uniform_index(rng, std::size(kWords))];
  }
  return out;
}

}  // namespace gen
