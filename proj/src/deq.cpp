#include "tsdq/deq.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "tsdq/classical.hpp"
#include "tsdq/csv.hpp"

namespace tsdq {

namespace {

constexpr double kResidualEps = 1e-12;      // denominator guard for x = 0
constexpr std::uint64_t kGammaSeed = 0x67616d6d61ULL;  // fixed power-iteration seed

double relative_step(const std::vector<double>& x_new, const std::vector<double>& x_old) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x_new.size(); ++i) {
    const double d = x_new[i] - x_old[i];
    num += d * d;
    den += x_old[i] * x_old[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), kResidualEps);
}

void clamp_nonnegative(std::vector<double>& v) {
  for (auto& e : v) e = e > 0.0 ? e : 0.0;
}

// Solves (G + ridge I) x = b in place for a small symmetric system.
bool solve_ridged(std::vector<double>& G, std::vector<double>& b, int m, double ridge) {
  for (int i = 0; i < m; ++i) G[static_cast<std::size_t>(i) * m + i] += ridge;
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r) {
      if (std::abs(G[static_cast<std::size_t>(r) * m + col]) >
          std::abs(G[static_cast<std::size_t>(piv) * m + col])) {
        piv = r;
      }
    }
    if (std::abs(G[static_cast<std::size_t>(piv) * m + col]) < 1e-300) return false;
    if (piv != col) {
      for (int c = 0; c < m; ++c) {
        std::swap(G[static_cast<std::size_t>(piv) * m + c],
                  G[static_cast<std::size_t>(col) * m + c]);
      }
      std::swap(b[static_cast<std::size_t>(piv)], b[static_cast<std::size_t>(col)]);
    }
    const double d = G[static_cast<std::size_t>(col) * m + col];
    for (int r = col + 1; r < m; ++r) {
      const double f = G[static_cast<std::size_t>(r) * m + col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < m; ++c) {
        G[static_cast<std::size_t>(r) * m + c] -= f * G[static_cast<std::size_t>(col) * m + c];
      }
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  for (int r = m - 1; r >= 0; --r) {
    double acc = b[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < m; ++c) {
      acc -= G[static_cast<std::size_t>(r) * m + c] * b[static_cast<std::size_t>(c)];
    }
    b[static_cast<std::size_t>(r)] = acc / G[static_cast<std::size_t>(r) * m + r];
  }
  return true;
}

Image initial_guess(const Sinogram& y, const AngleMask& mask, const DEQConfig& cfg,
                    const Geometry& g) {
  if (cfg.init == InitPolicy::kFbp) {
    Image x0 = fbp(y, mask, g, FbpFilter::kRamLak);
    clamp_nonnegative(x0.data);
    return x0;
  }
  return Image(g.n_pixels, 0.0);
}

FixedPointResult plain_iteration(const Image& x0, const Sinogram& y, const AngleMask& mask,
                                 const DenoiserParams& p, const DEQConfig& cfg,
                                 const Geometry& g) {
  FixedPointResult res;
  Image x = x0;
  for (int k = 1; k <= cfg.fp_max_iter; ++k) {
    Image x_new = apply_t_theta(x, y, mask, p, cfg, g);
    const double r = relative_step(x_new.data, x.data);
    res.residual_history.push_back(r);
    x = std::move(x_new);
    res.n_iters = k;
    res.final_residual = r;
    if (r < cfg.fp_tol) {
      res.converged = true;
      break;
    }
  }
  res.x_bar = std::move(x);
  return res;
}

FixedPointResult anderson_iteration(const Image& x0, const Sinogram& y, const AngleMask& mask,
                                    const DenoiserParams& p, const DEQConfig& cfg,
                                    const Geometry& g) {
  const int depth = std::max(1, cfg.anderson.depth);
  const double beta = cfg.anderson.damping;
  FixedPointResult res;
  std::deque<std::vector<double>> dx_hist, df_hist;  // x_{k+1}-x_k, f_{k+1}-f_k
  std::vector<double> x = x0.data;
  std::vector<double> f_prev, x_prev;
  for (int k = 1; k <= cfg.fp_max_iter; ++k) {
    Image xi;
    xi.side = g.n_pixels;
    xi.data = x;
    Image tx = apply_t_theta(xi, y, mask, p, cfg, g);
    std::vector<double> f(tx.data.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = tx.data[i] - x[i];

    if (!f_prev.empty()) {
      std::vector<double> dx(x.size()), df(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        dx[i] = x[i] - x_prev[i];
        df[i] = f[i] - f_prev[i];
      }
      dx_hist.push_back(std::move(dx));
      df_hist.push_back(std::move(df));
      if (static_cast<int>(dx_hist.size()) > depth) {
        dx_hist.pop_front();
        df_hist.pop_front();
      }
    }
    x_prev = x;
    f_prev = f;

    std::vector<double> x_new;
    const int m = static_cast<int>(df_hist.size());
    if (m > 0) {
      std::vector<double> G(static_cast<std::size_t>(m) * m);
      std::vector<double> rhs(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j <= i; ++j) {
          const double v = dot(df_hist[static_cast<std::size_t>(i)],
                               df_hist[static_cast<std::size_t>(j)]);
          G[static_cast<std::size_t>(i) * m + j] = v;
          G[static_cast<std::size_t>(j) * m + i] = v;
        }
        rhs[static_cast<std::size_t>(i)] = dot(df_hist[static_cast<std::size_t>(i)], f);
      }
      bool ok = solve_ridged(G, rhs, m, cfg.anderson.ridge);
      for (double c : rhs) ok = ok && std::isfinite(c);
      if (ok) {
        x_new = x;
        axpy(beta, f, x_new);
        for (int i = 0; i < m; ++i) {
          const double c = rhs[static_cast<std::size_t>(i)];
          axpy(-c, dx_hist[static_cast<std::size_t>(i)], x_new);
          axpy(-c * beta, df_hist[static_cast<std::size_t>(i)], x_new);
        }
      } else {
        // Restart the extrapolation on a degenerate system.
        dx_hist.clear();
        df_hist.clear();
      }
    }
    if (x_new.empty()) {
      x_new = x;
      axpy(beta, f, x_new);
    }
    clamp_nonnegative(x_new);
    const double r = relative_step(x_new, x);
    res.residual_history.push_back(r);
    x = std::move(x_new);
    res.n_iters = k;
    res.final_residual = r;
    if (r < cfg.fp_tol) {
      res.converged = true;
      break;
    }
  }
  res.x_bar.side = g.n_pixels;
  res.x_bar.data = std::move(x);
  res.used_anderson = true;
  return res;
}

}  // namespace

void DEQConfig::validate() const {
  if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("DEQConfig: alpha in (0, 1]");
  if (!(fp_tol > 0.0)) throw std::invalid_argument("DEQConfig: fp_tol must be positive");
  if (fp_max_iter < 1) throw std::invalid_argument("DEQConfig: fp_max_iter >= 1");
  if (anderson.depth < 1) throw std::invalid_argument("DEQConfig: anderson depth >= 1");
  if (gamma_mode == GammaMode::kFixed && !(gamma > 0.0)) {
    throw std::invalid_argument("DEQConfig: fixed gamma must be positive");
  }
  if (gamma_mode == GammaMode::kAutoInverseNormSq &&
      (!(gamma_scale > 0.0) || gamma_scale > 2.0)) {
    throw std::invalid_argument("DEQConfig: gamma_scale in (0, 2]");
  }
}

DEQConfig resolve_gamma(const DEQConfig& cfg, const Geometry& g) {
  if (cfg.gamma_mode == GammaMode::kFixed) {
    cfg.validate();
    return cfg;
  }
  const int s_ref = cfg.s_ref > 0 ? cfg.s_ref : g.n_angles_total;
  AngleMask m = equispaced_mask(s_ref, g.n_angles_total);
  const SpectralNormResult sn =
      spectral_norm(masked_radon_operator(m, g), 1e-8, 2000, kGammaSeed);
  DEQConfig out = cfg;
  out.gamma_mode = GammaMode::kFixed;
  out.gamma = cfg.gamma_mode == GammaMode::kAutoInverseNorm
                  ? 1.0 / sn.value
                  : cfg.gamma_scale / (sn.value * sn.value);
  out.validate();
  return out;
}

Image apply_t_theta(const Image& x, const Sinogram& y, const AngleMask& mask,
                    const DenoiserParams& p, const DEQConfig& cfg, const Geometry& g) {
  if (cfg.gamma_mode != GammaMode::kFixed) {
    throw std::invalid_argument("apply_t_theta: gamma must be resolved to a number");
  }
  if (x.side != g.n_pixels) throw std::invalid_argument("apply_t_theta: image shape mismatch");
  Image grad = grad_data_fidelity(x, y, mask, g);
  Image s(x.side);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = x.data[i] - cfg.gamma * grad.data[i];
  }
  Image fs = denoiser_forward(p, s);
  Image out(x.side);
  const double a = cfg.alpha;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double v = a * fs.data[i] + (1.0 - a) * s.data[i];
    out.data[i] = v > 0.0 ? v : 0.0;
  }
  return out;
}

FixedPointResult fixed_point_solve(const Sinogram& y, const AngleMask& mask,
                                   const DenoiserParams& p, const DEQConfig& cfg,
                                   const Geometry& g) {
  cfg.validate();
  const Image x0 = initial_guess(y, mask, cfg, g);
  if (!cfg.anderson.enabled) {
    return plain_iteration(x0, y, mask, p, cfg, g);
  }
  FixedPointResult accel = anderson_iteration(x0, y, mask, p, cfg, g);
  FixedPointResult plain = plain_iteration(x0, y, mask, p, cfg, g);
  // Keep the accelerated point only if its plain-iteration residual is no
  // worse than what the unaccelerated run achieved.
  Image t_accel = apply_t_theta(accel.x_bar, y, mask, p, cfg, g);
  const double r_accel = relative_step(t_accel.data, accel.x_bar.data);
  if (r_accel <= plain.final_residual) {
    accel.final_residual = r_accel;
    accel.converged = r_accel < cfg.fp_tol;
    return accel;
  }
  plain.used_anderson = false;
  return plain;
}

void write_residual_csv(const FixedPointResult& r, const std::string& path) {
  CsvWriter csv({"iteration", "residual"});
  for (std::size_t i = 0; i < r.residual_history.size(); ++i) {
    csv.add_row({std::to_string(i + 1), format_double(r.residual_history[i])});
  }
  csv.write(path);
}

}  // namespace tsdq
