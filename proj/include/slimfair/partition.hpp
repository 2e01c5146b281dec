#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimfair/errors.hpp"
#include "slimfair/rng.hpp"
#include "slimfair/tensor.hpp"

namespace slimfair {

struct Dataset {
  Tensor2 features;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (labels.empty()) throw ConfigError("Dataset: empty");
    if (features.rows != labels.size()) throw ShapeError("Dataset: feature rows != label count");
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= classes) throw RangeError("Dataset: label out of range");
    }
  }
};

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.classes = ds.classes;
  out.features = Tensor2(idx.size(), ds.features.cols);
  out.labels.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = ds.features.row(idx[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(ds.labels[idx[i]]);
  }
  return out;
}

inline std::vector<std::size_t> class_counts(const Dataset& ds) {
  std::vector<std::size_t> counts(ds.classes, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

struct SyntheticSpec {
  std::size_t samples = 1000;
  std::size_t dim = 2;
  std::size_t classes = 2;
  double spread = 0.1;
  // Each class is a mixture of this many Gaussian blobs. More modes make the
  // decision boundary harder, so narrow subnetworks fall behind wide ones.
  std::size_t modes_per_class = 1;
  double radius = 1.0;
};

/// Gaussian class clusters whose means lie on a seeded random sphere of the
/// given radius. Labels are balanced (sample i has class i mod C).
inline Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes == 0 || spec.dim == 0) throw ConfigError("make_synthetic: zero classes or dimension");
  if (spec.samples < spec.classes) throw ConfigError("make_synthetic: need n >= C");
  if (spec.modes_per_class == 0) throw ConfigError("make_synthetic: modes_per_class must be >= 1");
  if (spec.spread < 0.0) throw ConfigError("make_synthetic: negative spread");
  Rng rng = derive_rng(seed, Stream::Data);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t centers = spec.classes * spec.modes_per_class;
  Tensor2 means(centers, spec.dim);
  for (std::size_t k = 0; k < centers; ++k) {
    double norm = 0.0;
    for (std::size_t d = 0; d < spec.dim; ++d) {
      means(k, d) = gauss(rng);
      norm += means(k, d) * means(k, d);
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < spec.dim; ++d) means(k, d) *= spec.radius / norm;
  }

  Dataset ds;
  ds.classes = spec.classes;
  ds.features = Tensor2(spec.samples, spec.dim);
  ds.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t c = i % spec.classes;
    const std::size_t mode = (i / spec.classes) % spec.modes_per_class;
    const std::size_t k = c * spec.modes_per_class + mode;
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t d = 0; d < spec.dim; ++d) ds.features(i, d) = means(k, d) + spec.spread * gauss(rng);
  }
  return ds;
}

inline Dataset make_synthetic(std::size_t n, std::size_t dim, std::size_t classes, double spread, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.samples = n;
  spec.dim = dim;
  spec.classes = classes;
  spec.spread = spread;
  return make_synthetic(spec, seed);
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Class-stratified split: round(fraction * n_c) samples of every class go to
/// the test set.
inline TrainTestSplit train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("train_test_split: fraction must lie in (0,1)");
  Rng rng = derive_rng(seed, Stream::Partition, 1u << 20);
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

enum class PartitionKind { Homogeneous, Dirichlet, QuantitySkew, LabelSkew };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::Homogeneous;
  std::size_t clients = 1;
  double alpha = 0.5;   // dirichlet concentration
  double kappa = 0.15;  // quantity skew share per selected client
  std::size_t m = 1;    // selected clients (quantity skew) or classes per client (label skew)
  std::uint64_t seed = 0;
};

/// Parameter checks that do not need the dataset; returns one message per
/// violated constraint.
inline std::vector<std::string> partition_diagnostics(const PartitionSpec& spec) {
  std::vector<std::string> out;
  if (spec.clients == 0) out.push_back("partition: client count must be >= 1");
  switch (spec.kind) {
    case PartitionKind::Homogeneous:
      break;
    case PartitionKind::Dirichlet:
      if (!(spec.alpha > 0.0)) out.push_back("partition: dirichlet alpha must be > 0");
      break;
    case PartitionKind::QuantitySkew:
      if (!(spec.kappa > 0.0 && spec.kappa < 1.0)) out.push_back("partition: kappa must lie in (0,1)");
      if (!(spec.kappa * static_cast<double>(spec.m) < 1.0)) out.push_back("partition: kappa * m must be < 1");
      if (spec.m < 1 || spec.m >= spec.clients) out.push_back("partition: quantity skew needs 1 <= m < N");
      break;
    case PartitionKind::LabelSkew:
      if (spec.m < 1) out.push_back("partition: label skew needs m >= 1");
      break;
  }
  return out;
}

using Shards = std::vector<std::vector<std::size_t>>;

namespace detail {

// Splits `idx` into `parts` contiguous chunks, remainder to the lowest parts.
inline std::vector<std::vector<std::size_t>> equal_chunks(std::span<const std::size_t> idx, std::size_t parts) {
  std::vector<std::vector<std::size_t>> out(parts);
  const std::size_t base = idx.size() / parts;
  const std::size_t extra = idx.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t take = base + (p < extra ? 1 : 0);
    out[p].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (auto& v : by_class) std::shuffle(v.begin(), v.end(), rng);
  return by_class;
}

inline Shards dirichlet_once(const std::vector<std::vector<std::size_t>>& by_class, std::size_t clients, double alpha,
                             Rng& rng) {
  Shards shards(clients);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> q(clients);
  for (const auto& idx : by_class) {
    double total = 0.0;
    for (auto& v : q) {
      v = gamma(rng);
      total += v;
    }
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny alpha): give the class to one client.
      std::fill(q.begin(), q.end(), 0.0);
      q[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t c = 0; c < clients; ++c) {
      cum += q[c] / total;
      std::size_t end = c + 1 == clients
                            ? idx.size()
                            : std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * static_cast<double>(idx.size()))));
      end = std::max(end, start);
      shards[c].insert(shards[c].end(), idx.begin() + static_cast<std::ptrdiff_t>(start),
                       idx.begin() + static_cast<std::ptrdiff_t>(end));
      start = end;
    }
  }
  return shards;
}

}  // namespace detail

/// Splits a dataset across clients. Shards are disjoint index lists into
/// `ds`, each sorted ascending and nonempty.
inline Shards split(const Dataset& ds, const PartitionSpec& spec) {
  auto diags = partition_diagnostics(spec);
  if (!diags.empty()) throw SpecError(diags.front());
  const std::size_t N = spec.clients;
  if (ds.size() < N) throw SpecError("partition: fewer samples than clients");
  Rng rng = derive_rng(spec.seed, Stream::Partition);
  Shards shards(N);

  switch (spec.kind) {
    case PartitionKind::Homogeneous: {
      auto by_class = detail::indices_by_class(ds, rng);
      for (const auto& idx : by_class) {
        auto chunks = detail::equal_chunks(idx, N);
        for (std::size_t c = 0; c < N; ++c) shards[c].insert(shards[c].end(), chunks[c].begin(), chunks[c].end());
      }
      break;
    }
    case PartitionKind::Dirichlet: {
      auto by_class = detail::indices_by_class(ds, rng);
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        shards = detail::dirichlet_once(by_class, N, spec.alpha, rng);
        ok = std::none_of(shards.begin(), shards.end(), [](const auto& s) { return s.empty(); });
      }
      while (!ok) {
        auto largest = std::max_element(shards.begin(), shards.end(),
                                        [](const auto& a, const auto& b) { return a.size() < b.size(); });
        auto empty = std::find_if(shards.begin(), shards.end(), [](const auto& s) { return s.empty(); });
        empty->push_back(largest->back());
        largest->pop_back();
        ok = std::none_of(shards.begin(), shards.end(), [](const auto& s) { return s.empty(); });
      }
      break;
    }
    case PartitionKind::QuantitySkew: {
      std::vector<std::size_t> all(ds.size());
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      const auto big = static_cast<std::size_t>(std::floor(spec.kappa * static_cast<double>(ds.size()) + 1e-9));
      std::size_t pos = 0;
      // The first m clients are the large holders.
      for (std::size_t c = 0; c < spec.m; ++c) {
        shards[c].assign(all.begin() + static_cast<std::ptrdiff_t>(pos), all.begin() + static_cast<std::ptrdiff_t>(pos + big));
        pos += big;
      }
      auto rest = detail::equal_chunks(std::span<const std::size_t>(all).subspan(pos), N - spec.m);
      for (std::size_t c = spec.m; c < N; ++c) shards[c] = std::move(rest[c - spec.m]);
      break;
    }
    case PartitionKind::LabelSkew: {
      if (spec.m > ds.classes) throw SpecError("partition: label skew m exceeds class count");
      auto by_class = detail::indices_by_class(ds, rng);
      std::vector<std::vector<std::size_t>> selectors(ds.classes);
      std::vector<std::size_t> classes(ds.classes);
      for (std::size_t c = 0; c < N; ++c) {
        std::iota(classes.begin(), classes.end(), 0);
        std::shuffle(classes.begin(), classes.end(), rng);
        for (std::size_t j = 0; j < spec.m; ++j) selectors[classes[j]].push_back(c);
      }
      for (std::size_t k = 0; k < ds.classes; ++k) {
        if (selectors[k].empty()) continue;
        auto chunks = detail::equal_chunks(by_class[k], selectors[k].size());
        for (std::size_t j = 0; j < selectors[k].size(); ++j) {
          auto& dst = shards[selectors[k][j]];
          dst.insert(dst.end(), chunks[j].begin(), chunks[j].end());
        }
      }
      break;
    }
  }

  for (auto& s : shards) {
    if (s.empty()) throw SpecError("partition: a client received no samples");
    std::sort(s.begin(), s.end());
  }
  return shards;
}

// ---------------------------------------------------------------------------
// IDX (MNIST) reader. Big-endian header: magic, then one u32 per dimension.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ConfigError("idx: truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace detail

/// Images scaled to [0, 1], one row per image.
inline Tensor2 read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("idx: cannot open " + path);
  if (detail::read_be32(in) != kIdxImageMagic) throw ConfigError("idx: bad image magic in " + path);
  const std::size_t n = detail::read_be32(in);
  const std::size_t rows = detail::read_be32(in);
  const std::size_t cols = detail::read_be32(in);
  std::vector<unsigned char> raw(n * rows * cols);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw ConfigError("idx: truncated image data in " + path);
  }
  Tensor2 out(n, rows * cols);
  for (std::size_t i = 0; i < raw.size(); ++i) out.data[i] = raw[i] / 255.0;
  return out;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("idx: cannot open " + path);
  if (detail::read_be32(in) != kIdxLabelMagic) throw ConfigError("idx: bad label magic in " + path);
  const std::size_t n = detail::read_be32(in);
  std::vector<unsigned char> raw(n);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n))) {
    throw ConfigError("idx: truncated label data in " + path);
  }
  return {raw.begin(), raw.end()};
}

inline Dataset load_idx(const std::string& images, const std::string& labels, std::size_t classes = 10) {
  Dataset ds;
  ds.features = read_idx_images(images);
  ds.labels = read_idx_labels(labels);
  ds.classes = classes;
  ds.validate();
  return ds;
}

}  // namespace slimfair
