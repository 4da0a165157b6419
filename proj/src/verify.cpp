#include "tsdq/verify.hpp"

#include <fstream>
#include <limits>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "tsdq/csv.hpp"
#include "tsdq/deq.hpp"
#include "tsdq/parallel.hpp"
#include "tsdq/radon.hpp"

namespace tsdq {

std::string report_line(const VerificationReport& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << "  " << r.claim_id << " ["
     << (r.mode == VerifyMode::kExact ? "exact" : "monte-carlo") << "]"
     << "  rel_error=" << format_double(r.rel_error)
     << "  tolerance=" << format_double(r.tolerance);
  if (!r.details.empty()) os << "  (" << r.details << ")";
  return os.str();
}

void write_reports_csv(const std::vector<VerificationReport>& reports, const std::string& path) {
  CsvWriter csv({"claim_id", "mode", "n_draws", "max_abs_error", "rel_error", "tolerance",
                 "passed", "details"});
  for (const auto& r : reports) {
    csv.add_row({r.claim_id, r.mode == VerifyMode::kExact ? "exact" : "monte-carlo",
                 std::to_string(r.n_draws), format_double(r.max_abs_error),
                 format_double(r.rel_error), format_double(r.tolerance),
                 r.passed ? "1" : "0", r.details});
  }
  csv.write(path);
}

void write_reports_text(const std::vector<VerificationReport>& reports, const std::string& path) {
  std::ostringstream os;
  for (const auto& r : reports) os << report_line(r) << "\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_reports_text: cannot open " + path);
  f << os.str();
}

std::vector<double> materialize_dense(const AngleMask& mask, const Geometry& g, int* rows,
                                      int* cols) {
  const int m = mask.count() * g.n_detectors;
  const int n = static_cast<int>(g.image_size());
  std::vector<double> a(static_cast<std::size_t>(m) * n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t col) {
    Image basis(g.n_pixels, 0.0);
    basis.data[col] = 1.0;
    Sinogram s = radon_forward_masked(basis, mask, g);
    for (int r = 0; r < m; ++r) {
      a[static_cast<std::size_t>(r) * n + col] = s.data[static_cast<std::size_t>(r)];
    }
  });
  *rows = m;
  *cols = n;
  return a;
}

RankReport operator_rank_report(const Geometry& g) {
  int m = 0, n = 0;
  std::vector<double> a = materialize_dense(full_mask(g.n_angles_total), g, &m, &n);
  Eigen::MatrixXd mat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>(a.data(), m, n);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(mat);
  const auto& sv = svd.singularValues();
  RankReport rep;
  rep.sigma_max = sv(0);
  rep.sigma_min = sv(sv.size() - 1);
  const double thresh = 1e-8 * rep.sigma_max;
  rep.rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++rep.rank;
  }
  rep.flagged = rep.sigma_min < thresh;
  return rep;
}

namespace {

// Lexicographic enumeration of s-subsets.
template <typename Visit>
void for_each_subset(int n, int s, Visit&& visit) {
  std::vector<int> sub(static_cast<std::size_t>(s));
  std::iota(sub.begin(), sub.end(), 0);
  while (true) {
    visit(sub);
    int i = s - 1;
    while (i >= 0 && sub[static_cast<std::size_t>(i)] == n - s + i) --i;
    if (i < 0) break;
    ++sub[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < s; ++j) {
      sub[static_cast<std::size_t>(j)] = sub[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

}  // namespace

VerificationReport verify_prop1(const Geometry& g, const MaskDistribution& dist, VerifyMode mode,
                                std::int64_t n_draws, std::uint64_t seed) {
  dist.validate();
  if (g.n_pixels > 12) {
    throw std::invalid_argument("verify_prop1: image side must be <= 12 for dense handling");
  }
  const int n = static_cast<int>(g.image_size());
  int rows = 0, cols = 0;
  std::vector<double> a = materialize_dense(full_mask(g.n_angles_total), g, &rows, &cols);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
      a.data(), rows, cols);

  // Per-angle gram blocks A_j^T A_j; each masked contribution is a weighted
  // sum of these.
  std::vector<Eigen::MatrixXd> gram(static_cast<std::size_t>(g.n_angles_total));
  for (int j = 0; j < g.n_angles_total; ++j) {
    const auto block = A.middleRows(static_cast<Eigen::Index>(j) * g.n_detectors, g.n_detectors);
    gram[static_cast<std::size_t>(j)] = block.transpose() * block;
  }
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, n);
  for (const auto& gm : gram) target += gm;

  const WeightDiagonal w = compute_weight_diagonal(dist);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  std::int64_t draws = 0;

  VerificationReport rep;
  rep.claim_id = "prop1";
  rep.mode = mode;
  if (mode == VerifyMode::kExact) {
    const std::int64_t n_subsets = binomial_coefficient(dist.n_angles_total, dist.s);
    if (n_subsets > 100000) {
      throw std::invalid_argument("verify_prop1: subset budget exceeded, use monte-carlo");
    }
    if (dist.kind == MaskKind::kUniformSubset) {
      for_each_subset(dist.n_angles_total, dist.s, [&](const std::vector<int>& sub) {
        for (int j : sub) {
          const double wj = w.for_angle(j);
          acc += (wj * wj) * gram[static_cast<std::size_t>(j)];
        }
      });
      acc /= static_cast<double>(n_subsets);
      draws = n_subsets;
    } else {
      throw std::invalid_argument("verify_prop1: exact mode covers uniform subsets");
    }
  } else {
    RngStream rng(seed);
    for (std::int64_t i = 0; i < n_draws; ++i) {
      RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
      AngleMask m = sample_mask(dist, draw);
      for (int j : m.indices) {
        const double wj = w.for_angle(j);
        acc += (wj * wj) * gram[static_cast<std::size_t>(j)];
      }
    }
    acc /= static_cast<double>(n_draws);
    draws = n_draws;
  }

  const double err = (acc - target).norm();
  const double ref = target.norm();
  rep.n_draws = draws;
  rep.max_abs_error = (acc - target).cwiseAbs().maxCoeff();
  rep.rel_error = err / ref;
  rep.tolerance = mode == VerifyMode::kExact ? 1e-12 : 5.0 / std::sqrt(static_cast<double>(n_draws));
  rep.passed = rep.rel_error <= rep.tolerance;
  {
    std::ostringstream os;
    os << "Frobenius relative error of E[(M'A)^T W M'A] vs A^T A";
    const RankReport rank = operator_rank_report(g);
    os << "; rank(A)=" << rank.rank << "/" << std::min(rows, cols)
       << ", sigma_min/sigma_max=" << format_double(rank.sigma_min / rank.sigma_max);
    if (rank.flagged) os << " [flag: near rank-deficient]";
    rep.details = os.str();
  }
  return rep;
}

VerificationReport verify_prop2(const MaskDistribution& dist, VerifyMode mode,
                                std::int64_t n_draws, std::uint64_t seed) {
  dist.validate();
  const double p = static_cast<double>(dist.s) / dist.n_angles_total;
  VerificationReport rep;
  rep.claim_id = "prop2";
  rep.mode = mode;
  if (mode == VerifyMode::kExact) {
    const std::vector<double> diag = expected_mask_gram(dist, GramMode::kExact);
    double max_abs = 0.0;
    for (double d : diag) max_abs = std::max(max_abs, std::abs(d - p));
    rep.n_draws = binomial_coefficient(dist.n_angles_total, dist.s);
    rep.max_abs_error = max_abs;
    rep.rel_error = max_abs;  // entrywise absolute error against s/n
    rep.tolerance = 1e-14;
    rep.details = "entrywise |E[M^T M]_kk - s/n| by exhaustive enumeration";
  } else {
    const std::vector<double> diag =
        expected_mask_gram(dist, GramMode::kMonteCarlo, n_draws, seed);
    const double bound = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n_draws));
    double max_abs = 0.0;
    for (double d : diag) max_abs = std::max(max_abs, std::abs(d - p));
    rep.n_draws = n_draws;
    rep.max_abs_error = max_abs;
    rep.rel_error = bound > 0.0 ? max_abs / bound : 0.0;
    rep.tolerance = 1.0;  // errors measured in units of the 3-sigma binomial bound
    rep.details = "entrywise error across " + std::to_string(n_draws) +
                  " draws, in units of 3*sqrt(p(1-p)/n)";
  }
  rep.passed = rep.rel_error <= rep.tolerance;
  return rep;
}

namespace {

struct GradAccumulator {
  // Neumaier-compensated running sum over enumeration/draws.
  std::vector<double> sum;
  std::vector<double> comp;

  explicit GradAccumulator(std::size_t n) : sum(n, 0.0), comp(n, 0.0) {}

  void add(const std::vector<double>& v, double scale) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const double x = v[i] * scale;
      const double t = sum[i] + x;
      if (std::abs(sum[i]) >= std::abs(x)) {
        comp[i] += (sum[i] - t) + x;
      } else {
        comp[i] += (x - t) + sum[i];
      }
      sum[i] = t;
    }
  }

  std::vector<double> value(double scale) const {
    std::vector<double> out(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) out[i] = (sum[i] + comp[i]) * scale;
    return out;
  }
};

double guarded_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                         std::size_t* where) {
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::max(std::abs(a[i]), std::abs(b[i])));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::max(std::abs(a[i]), std::abs(b[i])), 1e-30);
    const double r = std::abs(a[i] - b[i]) / denom;
    if (r > worst) {
      worst = r;
      if (where) *where = i;
    }
  }
  (void)scale;
  return worst;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

}  // namespace

VerificationReport verify_thm1(const Geometry& g, const MaskDistribution& dist,
                               const DenoiserParams& p, const std::vector<Image>& x_set,
                               VerifyMode mode, const Thm1Options& opts) {
  dist.validate();
  if (x_set.empty()) throw std::invalid_argument("verify_thm1: empty image set");
  if (p.parameter_count() > 10000) {
    throw std::invalid_argument("verify_thm1: denoiser parameter budget exceeded");
  }
  DEQConfig deq = resolve_gamma(opts.deq, g);
  const WeightDiagonal w = compute_weight_diagonal(dist);

  VerificationReport rep;
  rep.claim_id = "thm1";
  rep.mode = mode;

  if (mode == VerifyMode::kExact) {
    const std::int64_t n_subsets = binomial_coefficient(dist.n_angles_total, dist.s);
    if (n_subsets > 100000) {
      throw std::invalid_argument("verify_thm1: subset budget exceeded, use monte-carlo");
    }
    double worst_rel = 0.0;
    double worst_cos = 0.0;
    std::size_t worst_idx = 0;
    for (const Image& x : x_set) {
      Sinogram full = radon_forward(x, g);
      // Fixed measurement mask M: the first subset in enumeration order is
      // as good as any; Theorem 1's inner expectation conditions on it.
      AngleMask m = equispaced_mask(dist.s, dist.n_angles_total);
      Sinogram y = apply_mask(full, m);
      FixedPointResult fp = fixed_point_solve(y, m, p, deq, g);
      Image x_hat = apply_t_theta(fp.x_bar, y, m, p, deq, g);

      // Self-supervised side, enumerated over M'.
      GradAccumulator acc(p.parameter_count());
      for_each_subset(dist.n_angles_total, dist.s, [&](const std::vector<int>& sub) {
        MeasurementPair pair;
        pair.mask = m;
        pair.y = y;
        pair.mask_prime.indices = sub;
        pair.mask_prime.n_angles_total = dist.n_angles_total;
        pair.y_prime = apply_mask(full, pair.mask_prime);
        const LossEval l = loss_self(x_hat, pair, w, g);
        const DenoiserGrads grads =
            jfb_backprop_operator(fp.x_bar, y, m, p, deq, g, l.cotangent);
        acc.add(grads.flatten(), 1.0);
      });
      const std::vector<double> self_grad = acc.value(1.0 / static_cast<double>(n_subsets));

      const LossEval sup = loss_sup_operator(x_hat, x, g);
      const std::vector<double> sup_grad =
          jfb_backprop_operator(fp.x_bar, y, m, p, deq, g, sup.cotangent).flatten();

      std::size_t idx = 0;
      const double rel = guarded_rel_error(self_grad, sup_grad, &idx);
      if (rel > worst_rel) {
        worst_rel = rel;
        worst_idx = idx;
      }
      worst_cos = std::max(worst_cos, cosine_distance(self_grad, sup_grad));
    }
    rep.n_draws = n_subsets;
    rep.rel_error = worst_rel;
    rep.max_abs_error = worst_cos;  // cosine distance reported alongside
    rep.tolerance = 1e-10;
    rep.passed = rep.rel_error <= rep.tolerance;
    std::ostringstream os;
    os << "max componentwise rel error over " << x_set.size() << " item(s), "
       << n_subsets << " subsets; cosine distance " << format_double(worst_cos)
       << "; worst component " << worst_idx;
    rep.details = os.str();
    return rep;
  }

  // Monte Carlo: gap of the running-mean gradient against the supervised
  // gradient must shrink at the CLT rate.
  const std::vector<double> gaps = thm1_mc_gaps(g, dist, p, x_set.front(), opts, 0x7031u);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const int k = static_cast<int>(gaps.size());
  for (int i = 0; i < k; ++i) {
    const double lx = std::log10(static_cast<double>(opts.mc_schedule[static_cast<std::size_t>(i)]));
    const double ly = std::log10(gaps[static_cast<std::size_t>(i)]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  rep.n_draws = opts.mc_schedule.back();
  rep.rel_error = std::abs(slope + 0.5);
  rep.max_abs_error = gaps.back();
  rep.tolerance = 0.1;
  rep.passed = rep.rel_error <= rep.tolerance;
  std::ostringstream os;
  os << "log-log slope " << format_double(slope) << " of gradient gap over n in {";
  for (std::size_t i = 0; i < opts.mc_schedule.size(); ++i) {
    if (i) os << ",";
    os << opts.mc_schedule[i];
  }
  os << "}";
  rep.details = os.str();
  return rep;
}

std::vector<double> thm1_mc_gaps(const Geometry& g, const MaskDistribution& dist,
                                 const DenoiserParams& p, const Image& x,
                                 const Thm1Options& opts, std::uint64_t seed) {
  DEQConfig deq = resolve_gamma(opts.deq, g);
  const WeightDiagonal w = compute_weight_diagonal(dist);
  Sinogram full = radon_forward(x, g);
  double peak = 0.0;
  for (double v : full.data) peak = std::max(peak, std::abs(v));
  const double sigma = opts.noise_sigma * peak;

  AngleMask m = equispaced_mask(dist.s, dist.n_angles_total);
  Sinogram y = apply_mask(full, m);
  RngStream root(seed);
  if (sigma > 0.0) {
    RngStream yrng = root.fork(1);
    for (auto& v : y.data) v += sigma * yrng.next_gaussian();
  }
  FixedPointResult fp = fixed_point_solve(y, m, p, deq, g);
  Image x_hat = apply_t_theta(fp.x_bar, y, m, p, deq, g);

  const LossEval sup = loss_sup_operator(x_hat, x, g);
  const std::vector<double> sup_grad =
      jfb_backprop_operator(fp.x_bar, y, m, p, deq, g, sup.cotangent).flatten();

  GradAccumulator acc(sup_grad.size());
  std::vector<double> gaps;
  std::int64_t done = 0;
  for (std::int64_t target : opts.mc_schedule) {
    for (; done < target; ++done) {
      RngStream draw = root.fork(2, static_cast<std::uint64_t>(done));
      MeasurementPair pair;
      pair.mask = m;
      pair.y = y;
      pair.mask_prime = sample_mask(dist, draw);
      pair.y_prime = apply_mask(full, pair.mask_prime);
      if (sigma > 0.0) {
        for (auto& v : pair.y_prime.data) v += sigma * draw.next_gaussian();
      }
      const LossEval l = loss_self(x_hat, pair, w, g);
      acc.add(jfb_backprop_operator(fp.x_bar, y, m, p, deq, g, l.cotangent).flatten(), 1.0);
    }
    const std::vector<double> mean = acc.value(1.0 / static_cast<double>(done));
    double gap = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = mean[i] - sup_grad[i];
      gap += d * d;
    }
    gaps.push_back(std::sqrt(gap));
  }
  return gaps;
}

}  // namespace tsdq
