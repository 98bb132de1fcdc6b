#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dma/errors.hpp"

namespace dma {

// Enumerating subsets is exponential in n; refuse anything above this by
// default so a typo cannot exhaust memory. run_dma exposes the knob.
inline constexpr int kDefaultModelCap = 25;

// A model is the set of included predictor columns, encoded as a bitmask
// over the full design vector (bit r <=> column r).
struct ModelId {
  std::uint64_t mask = 0;
};

inline int model_size(std::uint64_t mask) { return std::popcount(mask); }

// The enumerated model universe. ids are strictly ascending, which fixes
// the tie-breaking order everywhere a "lowest model" rule applies.
struct ModelSpace {
  int n = 0;                       // number of design columns
  std::vector<int> keep;           // columns forced into every model (sorted)
  std::vector<std::uint64_t> ids;  // ascending bitmasks
  std::vector<std::string> names;  // per-column labels, size n

  std::size_t size() const { return ids.size(); }
};

namespace detail {

inline std::string memory_estimate_message(int n) {
  // Per delta-grid point the filter state costs sum_models (p^2 + p) doubles:
  // sum p^2 = n(n+1) 2^(n-2), sum p = n 2^(n-1) over all nonempty subsets.
  const double sum_p2 = static_cast<double>(n) * (n + 1.0) * std::ldexp(1.0, n - 2);
  const double sum_p = static_cast<double>(n) * std::ldexp(1.0, n - 1);
  const double gib = (sum_p2 + sum_p) * 8.0 / (1024.0 * 1024.0 * 1024.0);
  std::ostringstream msg;
  msg << "model space over n=" << n << " predictors has " << std::ldexp(1.0, n) - 1
      << " subsets and needs about " << gib
      << " GiB of filter state per point of the discount grid";
  return msg.str();
}

}  // namespace detail

// All nonempty predictor subsets that contain every `keep` column; with
// kitchen_sink the space collapses to the single all-columns model. When
// keep is nonempty the keep-only model is part of the space, so
// k = 2^(n - |keep|); with keep empty the empty model is excluded and
// k = 2^n - 1.
inline ModelSpace enumerate_models(int n, const std::vector<int>& keep,
                                   bool kitchen_sink = false,
                                   int cap = kDefaultModelCap) {
  if (n < 1) throw ConfigError("need at least one design column");
  if (n > 64) throw CapacityError("bitmask model encoding supports at most 64 columns");
  if (n > cap) throw CapacityError(detail::memory_estimate_message(n));

  ModelSpace space;
  space.n = n;
  space.keep = keep;
  std::sort(space.keep.begin(), space.keep.end());
  space.keep.erase(std::unique(space.keep.begin(), space.keep.end()), space.keep.end());
  for (int idx : space.keep)
    if (idx < 0 || idx >= n) throw ConfigError("keep index out of range");

  const std::uint64_t full = (n == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  if (kitchen_sink) {
    space.ids.push_back(full);
    return space;
  }

  std::uint64_t keep_mask = 0;
  for (int idx : space.keep) keep_mask |= std::uint64_t{1} << idx;
  const std::uint64_t free_mask = full & ~keep_mask;

  // Enumerate subsets of free_mask in ascending order via the standard
  // submask walk, offset by keep_mask. Ascending submasks of free_mask
  // stay ascending after OR-ing the common keep bits.
  std::vector<std::uint64_t>& ids = space.ids;
  if (keep_mask == 0) {
    ids.reserve(static_cast<std::size_t>((std::uint64_t{1} << n) - 1));
    for (std::uint64_t m = 1; m <= full; ++m) ids.push_back(m);
  } else {
    ids.reserve(static_cast<std::size_t>(std::uint64_t{1} << std::popcount(free_mask)));
    std::uint64_t sub = 0;
    while (true) {
      ids.push_back(keep_mask | sub);
      if (sub == free_mask) break;
      sub = (sub - free_mask) & free_mask;  // next submask in ascending order
    }
  }
  return space;
}

namespace detail {

// Gather the masked entries of f into out (ascending column order).
// Returns the submodel dimension.
inline int project_into(const double* f, std::uint64_t mask, double* out) {
  int p = 0;
  while (mask != 0) {
    const int r = std::countr_zero(mask);
    out[p++] = f[r];
    mask &= mask - 1;
  }
  return p;
}

}  // namespace detail

// Subvector of a full design vector for one model, in ascending column order.
inline Eigen::VectorXd project_design(const Eigen::VectorXd& f, ModelId id) {
  if (id.mask == 0) throw ConfigError("empty model has no design vector");
  const int n = static_cast<int>(f.size());
  if (n < 64 && (id.mask >> n) != 0)
    throw ConfigError("model mask references columns beyond the design vector");
  Eigen::VectorXd out(model_size(id.mask));
  detail::project_into(f.data(), id.mask, out.data());
  return out;
}

}  // namespace dma
