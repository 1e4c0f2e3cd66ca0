#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "oilca/num/errors.hpp"
#include "oilca/num/tensor.hpp"

namespace oilca {

using Vec2 = std::array<double, 2>;

// One stored transition tuple. r may be NaN on augmented records (their
// reward is undefined by construction); every other field must be finite.
struct StepRecord {
  int t = 0;
  Vec2 s{};
  Vec2 a{};
  Vec2 s_next{};
  double r = 0.0;
};

struct Episode {
  std::uint32_t id = 0;
  int c = 0;
  std::vector<StepRecord> steps;
  // Ground-truth exogenous draws, aligned with steps; filled only when
  // latent logging is on. Serialized to a sidecar, never the main file.
  std::vector<Vec2> latent_u;

  // NaN when any step reward is NaN (augmented sentinel episodes).
  double ret() const {
    double sum = 0.0;
    for (const StepRecord& rec : steps) sum += rec.r;
    return sum;
  }

  bool is_augmented() const {
    return steps.size() == 1 && std::isnan(steps[0].r);
  }
};

inline std::size_t record_count(const std::vector<Episode>& eps) {
  std::size_t n = 0;
  for (const Episode& e : eps) n += e.steps.size();
  return n;
}

// Mean return over non-augmented episodes.
inline double mean_return(const std::vector<Episode>& eps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Episode& e : eps) {
    if (e.is_augmented()) continue;
    sum += e.ret();
    ++n;
  }
  if (n == 0) throw InsufficientDataError("mean_return: no scored episodes");
  return sum / static_cast<double>(n);
}

// Column-stacked views of a record list, ready for batched training.
struct FlatData {
  num::Tensor2 s;       // n x 2
  num::Tensor2 a;       // n x 2
  num::Tensor2 s_next;  // n x 2
  std::vector<int> cls;
  std::vector<std::uint32_t> episode_id;
  std::vector<int> t;

  int n() const { return s.rows(); }
};

inline FlatData flatten(const std::vector<Episode>& eps) {
  const std::size_t n = record_count(eps);
  if (n == 0) throw InsufficientDataError("flatten: no records");
  FlatData f;
  f.s = num::Tensor2(static_cast<int>(n), 2);
  f.a = num::Tensor2(static_cast<int>(n), 2);
  f.s_next = num::Tensor2(static_cast<int>(n), 2);
  f.cls.reserve(n);
  f.episode_id.reserve(n);
  f.t.reserve(n);
  int row = 0;
  for (const Episode& e : eps) {
    for (const StepRecord& rec : e.steps) {
      for (int k = 0; k < 2; ++k) {
        f.s.at(row, k) = rec.s[k];
        f.a.at(row, k) = rec.a[k];
        f.s_next.at(row, k) = rec.s_next[k];
      }
      f.cls.push_back(e.c);
      f.episode_id.push_back(e.id);
      f.t.push_back(rec.t);
      ++row;
    }
  }
  return f;
}

// Ground-truth latents in record order (throws when any episode lacks them).
inline num::Tensor2 flatten_latents(const std::vector<Episode>& eps) {
  const std::size_t n = record_count(eps);
  if (n == 0) throw InsufficientDataError("flatten_latents: no records");
  num::Tensor2 u(static_cast<int>(n), 2);
  int row = 0;
  for (const Episode& e : eps) {
    if (e.latent_u.size() != e.steps.size())
      throw PrerequisiteError(
          "episode lacks ground-truth latents (enable latent logging)");
    for (const Vec2& v : e.latent_u) {
      u.at(row, 0) = v[0];
      u.at(row, 1) = v[1];
      ++row;
    }
  }
  return u;
}

}  // namespace oilca
