#pragma once

// Independent reference computations for tests. Nothing here shares code
// with the library beyond plain data types.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Gauss-Jordan inverse with partial pivoting.
inline Matrix inverse(Matrix a) {
  const std::size_t n = a.size();
  Matrix inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    if (a[pivot][col] == 0.0) throw std::runtime_error("singular matrix");
    std::swap(a[pivot], a[col]);
    std::swap(inv[pivot], inv[col]);
    const double d = a[col][col];
    for (std::size_t k = 0; k < n; ++k) {
      a[col][k] /= d;
      inv[col][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k) {
        a[r][k] -= f * a[col][k];
        inv[r][k] -= f * inv[col][k];
      }
    }
  }
  return inv;
}

/// Posterior mean and variance at one query by explicit inversion of
/// K + noise I.
inline std::pair<double, double> gp_posterior(const Matrix& k, const std::vector<double>& cross, double prior,
                                              const std::vector<double>& f, double noise) {
  Matrix a = k;
  for (std::size_t i = 0; i < a.size(); ++i) a[i][i] += noise;
  const Matrix inv = inverse(a);
  double mean = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double row_f = 0.0;
    double row_c = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      row_f += inv[i][j] * f[j];
      row_c += inv[i][j] * cross[j];
    }
    mean += cross[i] * row_f;
    quad += cross[i] * row_c;
  }
  return {mean, prior + noise - quad};
}

/// Student-t density.
inline double t_pdf(double x, double nu) {
  const double c = std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) / std::sqrt(nu * M_PI);
  return c * std::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
}

/// P(T > t) by composite Simpson integration of the density. The tail is
/// mapped onto (0, 1] with x = t + (1 - u) / u so the integral is finite.
/// At u = 0 the integrand tends to 1/pi for nu = 1 and to 0 otherwise.
inline double t_upper_tail(double t, double nu) {
  if (t < 0.0) return 1.0 - t_upper_tail(-t, nu);
  const int n = 200000;  // even
  const double h = 1.0 / n;
  auto g = [&](double u) {
    if (u <= 0.0) return nu == 1.0 ? 1.0 / M_PI : 0.0;
    const double x = t + (1.0 - u) / u;
    return t_pdf(x, nu) / (u * u);
  };
  double sum = g(0.0) + g(1.0);
  for (int i = 1; i < n; ++i) sum += g(i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

/// Kendall tau-c by explicit pair enumeration with its own distinct-value count.
inline double kendall_tau_c(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  long long concordant = 0;
  long long discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j <= i) continue;
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) ++concordant;
      if (s < 0) ++discordant;
    }
  }
  auto distinct = [](std::vector<double> v) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      bool seen = false;
      for (std::size_t j = 0; j < i; ++j) seen = seen || v[j] == v[i];
      if (!seen) ++count;
    }
    return count;
  };
  const double m = static_cast<double>(std::min(distinct(a), distinct(b)));
  const double nn = static_cast<double>(n);
  return 2.0 * m * static_cast<double>(concordant - discordant) / (nn * nn * (m - 1.0));
}

}  // namespace oracle
