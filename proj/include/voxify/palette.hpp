#pragma once

// Palette extraction from pooled pixel-art colors. Five strategies share the
// same contract: at least C distinct input colors, C output colors, pure
// function of (pixels, C, seed).

#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace voxify {

enum class PaletteMethod { kKMeans, kKMeansRareBoost, kMedianCut, kMaxMin, kSimAnneal };

inline std::string_view method_name(PaletteMethod m) {
  switch (m) {
    case PaletteMethod::kKMeans: return "kmeans";
    case PaletteMethod::kKMeansRareBoost: return "kmeans-rare";
    case PaletteMethod::kMedianCut: return "mediancut";
    case PaletteMethod::kMaxMin: return "maxmin";
    case PaletteMethod::kSimAnneal: return "anneal";
  }
  return "?";
}

inline std::optional<PaletteMethod> parse_method(std::string_view s) {
  for (auto m : {PaletteMethod::kKMeans, PaletteMethod::kKMeansRareBoost, PaletteMethod::kMedianCut,
                 PaletteMethod::kMaxMin, PaletteMethod::kSimAnneal})
    if (method_name(m) == s) return m;
  return std::nullopt;
}

struct Palette {
  std::vector<Rgb> colors;
  PaletteMethod method = PaletteMethod::kKMeans;
  uint64_t seed = 0;

  int size() const { return static_cast<int>(colors.size()); }

  void validate() const {
    if (colors.size() < 2 || colors.size() > 256)
      throw Error(ErrorCode::kInvalidArgument, "palette size must be in [2, 256]");
    for (size_t i = 0; i < colors.size(); ++i)
      for (size_t j = i + 1; j < colors.size(); ++j)
        if (colors[i] == colors[j]) throw Error(ErrorCode::kInvalidArgument, "palette colors must be distinct");
  }

  /// Index of the nearest color; ties go to the lowest index.
  int nearest(const Rgb& c) const {
    int best = 0;
    double best_d = squared_distance(c, colors[0]);
    for (int n = 1; n < size(); ++n) {
      const double d = squared_distance(c, colors[n]);
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    return best;
  }
};

inline nlohmann::json palette_to_json(const Palette& p) {
  nlohmann::json colors = nlohmann::json::array();
  for (const Rgb& c : p.colors) colors.push_back({c.x, c.y, c.z});
  return {{"colors", colors}, {"method", std::string(method_name(p.method))}, {"seed", p.seed}};
}

inline Palette palette_from_json(const nlohmann::json& j) {
  Palette p;
  for (const auto& c : j.at("colors")) p.colors.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
  const auto m = parse_method(j.at("method").get<std::string>());
  if (!m) throw Error(ErrorCode::kInvalidArgument, "unknown palette method in JSON");
  p.method = *m;
  p.seed = j.at("seed").get<uint64_t>();
  return p;
}

/// Distinct colors with multiplicities, in lexicographic color order.
struct ColorHistogram {
  std::vector<Rgb> colors;
  std::vector<double> weights;

  static ColorHistogram from_pixels(std::span<const Rgb> pixels) {
    std::map<std::array<double, 3>, double> counts;
    for (const Rgb& p : pixels) counts[{p.x, p.y, p.z}] += 1.0;
    ColorHistogram h;
    for (const auto& [c, n] : counts) {
      h.colors.push_back({c[0], c[1], c[2]});
      h.weights.push_back(n);
    }
    return h;
  }

  size_t distinct() const { return colors.size(); }
  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

/// Sum over pixels of the squared distance to the nearest palette color.
inline double quantization_energy(const ColorHistogram& h, std::span<const Rgb> palette) {
  double e = 0.0;
  for (size_t i = 0; i < h.distinct(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Rgb& c : palette) best = std::min(best, squared_distance(h.colors[i], c));
    e += h.weights[i] * best;
  }
  return e;
}

namespace detail {

inline void require_distinct(const ColorHistogram& h, int C) {
  if (C < 1) throw Error(ErrorCode::kInvalidArgument, "palette size must be positive");
  if (h.distinct() < static_cast<size_t>(C))
    throw Error(ErrorCode::kInsufficientColors,
                std::to_string(h.distinct()) + " distinct colors for a " + std::to_string(C) + "-color palette");
}

inline int nearest_index(const Rgb& c, std::span<const Rgb> centers) {
  int best = 0;
  double best_d = squared_distance(c, centers[0]);
  for (int k = 1; k < static_cast<int>(centers.size()); ++k) {
    const double d = squared_distance(c, centers[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline size_t sample_weighted(std::span<const double> w, Rng& rng) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double r = rng.uniform() * total;
  for (size_t i = 0; i < w.size(); ++i) {
    r -= w[i];
    if (r < 0.0 && w[i] > 0.0) return i;
  }
  for (size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return 0;
}

struct KMeansResult {
  std::vector<Rgb> centers;
  std::vector<double> cluster_weights;
};

/// Weighted Lloyd iterations with k-means++ seeding over distinct colors.
inline KMeansResult weighted_kmeans(const ColorHistogram& h, std::span<const double> weights, int C, uint64_t seed) {
  Rng rng(seed);
  const size_t n = h.distinct();
  std::vector<Rgb> centers;
  std::vector<bool> taken(n, false);
  const size_t first = sample_weighted(weights, rng);
  centers.push_back(h.colors[first]);
  taken[first] = true;
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < C) {
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Rgb& c : centers) best = std::min(best, squared_distance(h.colors[i], c));
      d2[i] = taken[i] ? 0.0 : weights[i] * best;
    }
    size_t pick;
    if (std::accumulate(d2.begin(), d2.end(), 0.0) > 0.0) {
      pick = sample_weighted(d2, rng);
    } else {
      pick = static_cast<size_t>(std::find(taken.begin(), taken.end(), false) - taken.begin());
    }
    centers.push_back(h.colors[pick]);
    taken[pick] = true;
  }

  std::vector<int> assign(n, 0);
  std::vector<double> cw(C, 0.0);
  for (int iter = 0; iter < 100; ++iter) {
    for (size_t i = 0; i < n; ++i) assign[i] = nearest_index(h.colors[i], centers);
    std::vector<Rgb> sums(C);
    std::fill(cw.begin(), cw.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      sums[assign[i]] += h.colors[i] * weights[i];
      cw[assign[i]] += weights[i];
    }
    double shift = 0.0;
    for (int k = 0; k < C; ++k) {
      Rgb next;
      if (cw[k] > 0.0) {
        next = sums[k] / cw[k];
      } else {
        // Empty cluster: reseed at the color worst served by its center.
        size_t worst = 0;
        double worst_d = -1.0;
        for (size_t i = 0; i < n; ++i) {
          const double d = weights[i] * squared_distance(h.colors[i], centers[assign[i]]);
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        next = h.colors[worst];
      }
      shift = std::max(shift, distance(next, centers[k]));
      centers[k] = next;
    }
    if (shift < 1e-6) break;
  }
  for (size_t i = 0; i < n; ++i) assign[i] = nearest_index(h.colors[i], centers);
  std::fill(cw.begin(), cw.end(), 0.0);
  for (size_t i = 0; i < n; ++i) cw[assign[i]] += h.weights[i];
  return {centers, cw};
}

inline Palette finish(std::vector<Rgb> colors, PaletteMethod m, uint64_t seed) {
  std::sort(colors.begin(), colors.end(), lex_less);
  return Palette{std::move(colors), m, seed};
}

}  // namespace detail

inline Palette extract_kmeans(const ColorHistogram& h, int C, uint64_t seed) {
  detail::require_distinct(h, C);
  auto r = detail::weighted_kmeans(h, h.weights, C, seed);
  return detail::finish(std::move(r.centers), PaletteMethod::kKMeans, seed);
}

/// K-means where colors rarer than the `boost_quantile` frequency quantile are
/// up-weighted so that together they weigh as much as the median cluster of a
/// plain k-means run.
inline Palette extract_kmeans_rare_boost(const ColorHistogram& h, int C, uint64_t seed, double boost_quantile = 0.1) {
  detail::require_distinct(h, C);
  std::vector<double> sorted = h.weights;
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(boost_quantile, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double threshold = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  std::vector<double> weights = h.weights;
  double rare_total = 0.0;
  for (double w : h.weights)
    if (w < threshold) rare_total += w;
  if (rare_total > 0.0) {
    auto plain = detail::weighted_kmeans(h, h.weights, C, seed);
    std::vector<double> cw = plain.cluster_weights;
    std::sort(cw.begin(), cw.end());
    const double median = cw.size() % 2 ? cw[cw.size() / 2] : 0.5 * (cw[cw.size() / 2 - 1] + cw[cw.size() / 2]);
    const double factor = median / rare_total;
    if (factor > 1.0)
      for (size_t i = 0; i < weights.size(); ++i)
        if (h.weights[i] < threshold) weights[i] *= factor;
  }
  auto r = detail::weighted_kmeans(h, weights, C, seed);
  return detail::finish(std::move(r.centers), PaletteMethod::kKMeansRareBoost, seed);
}

/// Median cut for arbitrary C: always split the box with the largest single
/// channel range at the weighted median of that channel. Palette = box means.
inline Palette extract_median_cut(const ColorHistogram& h, int C) {
  detail::require_distinct(h, C);
  struct Box {
    std::vector<size_t> items;
  };
  auto channel_range = [&](const Box& b, int ch) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (size_t i : b.items) {
      lo = std::min(lo, h.colors[i][ch]);
      hi = std::max(hi, h.colors[i][ch]);
    }
    return hi - lo;
  };
  std::vector<Box> boxes(1);
  boxes[0].items.resize(h.distinct());
  std::iota(boxes[0].items.begin(), boxes[0].items.end(), size_t{0});

  while (static_cast<int>(boxes.size()) < C) {
    int best_box = -1, best_ch = 0;
    double best_range = 0.0;
    for (int b = 0; b < static_cast<int>(boxes.size()); ++b)
      for (int ch = 0; ch < 3; ++ch) {
        const double r = channel_range(boxes[b], ch);
        if (r > best_range) {
          best_range = r;
          best_box = b;
          best_ch = ch;
        }
      }
    if (best_box < 0) throw Error(ErrorCode::kInsufficientColors, "no splittable box left");
    Box& box = boxes[best_box];
    std::sort(box.items.begin(), box.items.end(), [&](size_t a, size_t b) {
      if (h.colors[a][best_ch] != h.colors[b][best_ch]) return h.colors[a][best_ch] < h.colors[b][best_ch];
      return lex_less(h.colors[a], h.colors[b]);
    });
    double total = 0.0;
    for (size_t i : box.items) total += h.weights[i];
    double cum = 0.0;
    size_t split = 1;
    for (size_t k = 0; k < box.items.size(); ++k) {
      cum += h.weights[box.items[k]];
      if (cum >= 0.5 * total) {
        split = k + 1;
        break;
      }
    }
    split = std::clamp<size_t>(split, 1, box.items.size() - 1);
    // Keep equal channel values on one side so both halves shrink in range.
    const double pivot = h.colors[box.items[split - 1]][best_ch];
    size_t adjusted = split;
    while (adjusted < box.items.size() && h.colors[box.items[adjusted]][best_ch] == pivot) ++adjusted;
    if (adjusted == box.items.size()) {
      adjusted = split;
      while (adjusted > 1 && h.colors[box.items[adjusted - 1]][best_ch] == h.colors[box.items[adjusted]][best_ch])
        --adjusted;
    }
    Box upper{std::vector<size_t>(box.items.begin() + static_cast<long>(adjusted), box.items.end())};
    box.items.resize(adjusted);
    boxes.push_back(std::move(upper));
  }

  std::vector<Rgb> colors;
  for (const Box& b : boxes) {
    Rgb sum;
    double w = 0.0;
    for (size_t i : b.items) {
      sum += h.colors[i] * h.weights[i];
      w += h.weights[i];
    }
    colors.push_back(sum / w);
  }
  return detail::finish(std::move(colors), PaletteMethod::kMedianCut, 0);
}

namespace detail {

inline constexpr size_t kExactPairLimit = 16384;

/// Indices of the greedy farthest-point picks. The first pick is an endpoint
/// of the farthest color pair, so C = 2 yields the best 2-subset; above
/// kExactPairLimit distinct colors the O(n²) search gives way to the color
/// farthest from the weighted mean. Ties go to the lexicographically lowest color.
inline std::vector<size_t> maxmin_indices(const ColorHistogram& h, int C) {
  // h.colors is lexicographically sorted, so strict '>' keeps the lowest on ties.
  std::vector<size_t> picks;
  size_t first = 0;
  double best = -1.0;
  if (h.distinct() <= kExactPairLimit) {
    for (size_t i = 0; i < h.distinct(); ++i)
      for (size_t j = i + 1; j < h.distinct(); ++j) {
        const double d = squared_distance(h.colors[i], h.colors[j]);
        if (d > best) {
          best = d;
          first = i;
        }
      }
  } else {
    Rgb mean;
    const double total = h.total_weight();
    for (size_t i = 0; i < h.distinct(); ++i) mean += h.colors[i] * (h.weights[i] / total);
    for (size_t i = 0; i < h.distinct(); ++i) {
      const double d = squared_distance(h.colors[i], mean);
      if (d > best) {
        best = d;
        first = i;
      }
    }
  }
  picks.push_back(first);
  std::vector<double> min_d(h.distinct());
  for (size_t i = 0; i < h.distinct(); ++i) min_d[i] = squared_distance(h.colors[i], h.colors[first]);
  while (static_cast<int>(picks.size()) < C) {
    size_t pick = 0;
    double far = -1.0;
    for (size_t i = 0; i < h.distinct(); ++i)
      if (min_d[i] > far) {
        far = min_d[i];
        pick = i;
      }
    picks.push_back(pick);
    for (size_t i = 0; i < h.distinct(); ++i) min_d[i] = std::min(min_d[i], squared_distance(h.colors[i], h.colors[pick]));
  }
  return picks;
}

}  // namespace detail

inline Palette extract_maxmin(const ColorHistogram& h, int C) {
  detail::require_distinct(h, C);
  std::vector<Rgb> colors;
  for (size_t i : detail::maxmin_indices(h, C)) colors.push_back(h.colors[i]);
  return detail::finish(std::move(colors), PaletteMethod::kMaxMin, 0);
}

/// Simulated annealing over C-subsets of the distinct colors, started from the
/// max-min picks. Metropolis acceptance compares the per-pixel mean energy
/// against a temperature cooled geometrically (×0.95) every iters/100 steps.
inline Palette extract_simanneal(const ColorHistogram& h, int C, uint64_t seed, int iters = 10000) {
  detail::require_distinct(h, C);
  Rng rng(seed);
  std::vector<size_t> state = detail::maxmin_indices(h, C);
  std::vector<bool> used(h.distinct(), false);
  for (size_t i : state) used[i] = true;
  auto energy_of = [&](const std::vector<size_t>& s) {
    std::vector<Rgb> cols;
    for (size_t i : s) cols.push_back(h.colors[i]);
    return quantization_energy(h, cols);
  };
  const double total = h.total_weight();
  double energy = energy_of(state);
  std::vector<size_t> best_state = state;
  double best_energy = energy;
  double temperature = 0.1;
  const int cool_every = std::max(1, iters / 100);
  const bool can_move = h.distinct() > static_cast<size_t>(C);

  for (int it = 0; it < iters && can_move; ++it) {
    if (it > 0 && it % cool_every == 0) temperature *= 0.95;
    const size_t slot = rng.below(static_cast<uint64_t>(C));
    size_t cand;
    do {
      cand = rng.below(h.distinct());
    } while (used[cand]);
    std::vector<size_t> next = state;
    next[slot] = cand;
    const double e = energy_of(next);
    const double delta = (e - energy) / total;
    if (delta <= 0.0 || rng.uniform() < std::exp(-delta / temperature)) {
      used[state[slot]] = false;
      used[cand] = true;
      state = std::move(next);
      energy = e;
      if (energy < best_energy) {
        best_energy = energy;
        best_state = state;
      }
    }
  }
  std::vector<Rgb> colors;
  for (size_t i : best_state) colors.push_back(h.colors[i]);
  return detail::finish(std::move(colors), PaletteMethod::kSimAnneal, seed);
}

struct PaletteOptions {
  PaletteMethod method = PaletteMethod::kKMeans;
  int colors = 4;
  uint64_t seed = 0;
  double boost_quantile = 0.1;
  int anneal_iters = 10000;
};

inline Palette extract_palette(const ColorHistogram& h, const PaletteOptions& opt) {
  Palette p;
  switch (opt.method) {
    case PaletteMethod::kKMeans: p = extract_kmeans(h, opt.colors, opt.seed); break;
    case PaletteMethod::kKMeansRareBoost: p = extract_kmeans_rare_boost(h, opt.colors, opt.seed, opt.boost_quantile); break;
    case PaletteMethod::kMedianCut: p = extract_median_cut(h, opt.colors); break;
    case PaletteMethod::kMaxMin: p = extract_maxmin(h, opt.colors); break;
    case PaletteMethod::kSimAnneal: p = extract_simanneal(h, opt.colors, opt.seed, opt.anneal_iters); break;
  }
  p.seed = opt.seed;
  return p;
}

}  // namespace voxify
