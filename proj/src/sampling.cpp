#include "tsdq/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tsdq {

void AngleMask::validate() const {
  if (indices.empty()) throw std::invalid_argument("AngleMask: empty index set");
  if (n_angles_total < 1) throw std::invalid_argument("AngleMask: invalid angle grid size");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n_angles_total) {
      throw std::invalid_argument("AngleMask: index out of range");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw std::invalid_argument("AngleMask: indices must be strictly increasing");
    }
  }
}

bool AngleMask::contains(int angle) const {
  return std::binary_search(indices.begin(), indices.end(), angle);
}

std::string AngleMask::to_csv_field() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i) os << ',';
    os << indices[i];
  }
  return os.str();
}

AngleMask mask_from_csv_field(const std::string& field, int n_angles_total) {
  AngleMask m;
  m.n_angles_total = n_angles_total;
  std::stringstream ss(field);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) m.indices.push_back(std::stoi(tok));
  }
  m.validate();
  return m;
}

AngleMask full_mask(int n_angles_total) {
  AngleMask m;
  m.n_angles_total = n_angles_total;
  m.indices.resize(n_angles_total);
  std::iota(m.indices.begin(), m.indices.end(), 0);
  return m;
}

AngleMask equispaced_mask(int s, int n_angles_total) {
  AngleMask m;
  m.n_angles_total = n_angles_total;
  m.indices.reserve(s);
  for (int j = 0; j < s; ++j) {
    m.indices.push_back(static_cast<int>(static_cast<std::int64_t>(j) * n_angles_total / s));
  }
  m.validate();
  return m;
}

void MaskDistribution::validate() const {
  if (n_angles_total < 1) throw std::invalid_argument("MaskDistribution: empty angle grid");
  if (s < 1 || s > n_angles_total) {
    throw std::invalid_argument("MaskDistribution: subset size out of range");
  }
  if (kind == MaskKind::kComplementarySplit && s % 2 != 0) {
    throw std::invalid_argument("MaskDistribution: complementary split needs an even total");
  }
}

std::vector<double> WeightDiagonal::per_row(int n_detectors) const {
  std::vector<double> rows(static_cast<std::size_t>(n_angles_total) * n_detectors);
  for (int a = 0; a < n_angles_total; ++a) {
    std::fill_n(rows.begin() + static_cast<std::size_t>(a) * n_detectors, n_detectors,
                per_angle[static_cast<std::size_t>(a)]);
  }
  return rows;
}

namespace {

AngleMask uniform_subset(int s, int n, RngStream& rng) {
  // Partial Fisher-Yates: the first s entries of a shuffled index array are
  // a uniform s-subset once the order is discarded.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < s; ++i) {
    int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  AngleMask m;
  m.n_angles_total = n;
  m.indices.assign(idx.begin(), idx.begin() + s);
  std::sort(m.indices.begin(), m.indices.end());
  return m;
}

}  // namespace

AngleMask sample_mask(const MaskDistribution& dist, RngStream& rng) {
  dist.validate();
  switch (dist.kind) {
    case MaskKind::kUniformSubset:
      return uniform_subset(dist.s, dist.n_angles_total, rng);
    case MaskKind::kEquispacedFixed:
      return equispaced_mask(dist.s, dist.n_angles_total);
    case MaskKind::kComplementarySplit:
      return split_complementary(dist, rng).first;
  }
  throw std::logic_error("sample_mask: unknown mask kind");
}

std::pair<AngleMask, AngleMask> split_complementary(const MaskDistribution& dist,
                                                    RngStream& rng) {
  dist.validate();
  if (dist.kind != MaskKind::kComplementarySplit) {
    throw std::invalid_argument("split_complementary: distribution kind mismatch");
  }
  AngleMask drawn = uniform_subset(dist.s, dist.n_angles_total, rng);
  std::vector<int> pool = drawn.indices;
  rng.shuffle(pool);
  const int half = dist.s / 2;
  AngleMask a, b;
  a.n_angles_total = b.n_angles_total = dist.n_angles_total;
  a.indices.assign(pool.begin(), pool.begin() + half);
  b.indices.assign(pool.begin() + half, pool.end());
  std::sort(a.indices.begin(), a.indices.end());
  std::sort(b.indices.begin(), b.indices.end());
  return {a, b};
}

std::int64_t binomial_coefficient(int n, int s) {
  if (s < 0 || s > n) return 0;
  s = std::min(s, n - s);
  std::int64_t c = 1;
  for (int i = 1; i <= s; ++i) {
    const std::int64_t num = n - s + i;
    if (c > std::numeric_limits<std::int64_t>::max() / num) {
      return std::numeric_limits<std::int64_t>::max();
    }
    c = c * num / i;
  }
  return c;
}

namespace {

// Enumerates all s-subsets of [0, n) in lexicographic order.
template <typename Visit>
void for_each_subset(int n, int s, Visit&& visit) {
  std::vector<int> sub(s);
  std::iota(sub.begin(), sub.end(), 0);
  while (true) {
    visit(sub);
    int i = s - 1;
    while (i >= 0 && sub[i] == n - s + i) --i;
    if (i < 0) break;
    ++sub[i];
    for (int j = i + 1; j < s; ++j) sub[j] = sub[j - 1] + 1;
  }
}

}  // namespace

std::vector<double> expected_mask_gram(const MaskDistribution& dist, GramMode mode,
                                       std::int64_t n_draws, std::uint64_t seed) {
  dist.validate();
  const int n = dist.n_angles_total;
  std::vector<double> diag(n, 0.0);

  if (dist.kind == MaskKind::kEquispacedFixed) {
    // Deterministic mask: the expectation is its indicator.
    AngleMask m = equispaced_mask(dist.s, n);
    for (int a : m.indices) diag[static_cast<std::size_t>(a)] = 1.0;
    return diag;
  }

  if (mode == GramMode::kExact) {
    const std::int64_t n_subsets = binomial_coefficient(n, dist.s);
    if (n_subsets > 1000000) {
      throw std::invalid_argument(
          "expected_mask_gram: subset count exceeds the exact-enumeration budget; "
          "use monte-carlo mode");
    }
    std::vector<std::int64_t> counts(n, 0);
    for_each_subset(n, dist.s, [&](const std::vector<int>& sub) {
      for (int a : sub) ++counts[static_cast<std::size_t>(a)];
    });
    const double denom = static_cast<double>(n_subsets);
    for (int a = 0; a < n; ++a) {
      double p = static_cast<double>(counts[static_cast<std::size_t>(a)]) / denom;
      // Complementary split: an angle lands in the reported half with
      // probability 1/2 given it was drawn.
      if (dist.kind == MaskKind::kComplementarySplit) p *= 0.5;
      diag[static_cast<std::size_t>(a)] = p;
    }
    return diag;
  }

  if (n_draws < 1) throw std::invalid_argument("expected_mask_gram: n_draws must be >= 1");
  RngStream rng(seed);
  std::vector<std::int64_t> counts(n, 0);
  for (std::int64_t i = 0; i < n_draws; ++i) {
    RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
    AngleMask m = dist.kind == MaskKind::kComplementarySplit
                      ? split_complementary(dist, draw).second
                      : sample_mask(dist, draw);
    for (int a : m.indices) ++counts[static_cast<std::size_t>(a)];
  }
  for (int a = 0; a < n; ++a) {
    diag[static_cast<std::size_t>(a)] =
        static_cast<double>(counts[static_cast<std::size_t>(a)]) / static_cast<double>(n_draws);
  }
  return diag;
}

WeightDiagonal compute_weight_diagonal(const MaskDistribution& dist) {
  dist.validate();
  WeightDiagonal w;
  w.n_angles_total = dist.n_angles_total;
  w.per_angle.assign(static_cast<std::size_t>(dist.n_angles_total), 0.0);

  if (dist.kind == MaskKind::kUniformSubset) {
    // Uniform subsets select every angle with probability s/n.
    const double value = std::sqrt(static_cast<double>(dist.n_angles_total) / dist.s);
    std::fill(w.per_angle.begin(), w.per_angle.end(), value);
    return w;
  }
  if (dist.kind == MaskKind::kComplementarySplit) {
    const double value = std::sqrt(2.0 * dist.n_angles_total / static_cast<double>(dist.s));
    std::fill(w.per_angle.begin(), w.per_angle.end(), value);
    return w;
  }
  const std::vector<double> gram = expected_mask_gram(dist, GramMode::kExact);
  for (std::size_t a = 0; a < gram.size(); ++a) {
    w.per_angle[a] = gram[a] > 0.0 ? 1.0 / std::sqrt(gram[a]) : 0.0;
  }
  return w;
}

double weighted_residual_norm_sq(const Sinogram& z, const AngleMask& mask,
                                 const WeightDiagonal& w) {
  if (z.n_angles != mask.count() || mask.n_angles_total != w.n_angles_total) {
    throw std::invalid_argument("weighted_residual_norm_sq: dimension mismatch");
  }
  double acc = 0.0;
  for (int j = 0; j < z.n_angles; ++j) {
    const double wj = w.for_angle(mask.indices[static_cast<std::size_t>(j)]);
    const double w2 = wj * wj;
    const double* row = z.data.data() + static_cast<std::size_t>(j) * z.n_detectors;
    for (int d = 0; d < z.n_detectors; ++d) acc += w2 * row[d] * row[d];
  }
  return acc;
}

}  // namespace tsdq
