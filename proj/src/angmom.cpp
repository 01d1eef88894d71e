#include "rotraman/angmom.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace rotraman {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;
using float50 = boost::multiprecision::cpp_bin_float_50;

cpp_int factorial(int n) {
  cpp_int f = 1;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

double sqrt_rational(const cpp_rational& r) {
  if (r == 0) return 0.0;
  const float50 num(numerator(r));
  const float50 den(denominator(r));
  return static_cast<double>(sqrt(num / den));
}

}  // namespace

int RotBasis::index(int j, int m) const {
  if (!contains(j, m)) throw std::domain_error("RotBasis::index: (j,m) outside basis");
  return j * j + j + m;
}

std::pair<int, int> RotBasis::jm(int idx) const {
  if (idx < 0 || idx >= size()) throw std::domain_error("RotBasis::jm: index out of range");
  const int j = static_cast<int>(std::sqrt(static_cast<double>(idx)));
  return {j, idx - j * j - j};
}

RotBasis build_basis(int j_max, Manifold manifold) {
  if (j_max < 0) throw std::domain_error("build_basis: j_max must be >= 0");
  return RotBasis{j_max, manifold};
}

AngularMomentumOps build_J(const RotBasis& basis) {
  const int n = basis.size();
  AngularMomentumOps ops;
  ops.jx = Mat::Zero(n, n);
  ops.jy = Mat::Zero(n, n);
  ops.jz = Mat::Zero(n, n);
  ops.jsq = Mat::Zero(n, n);
  for (int j = 0; j <= basis.j_max; ++j) {
    for (int m = -j; m <= j; ++m) {
      const int idx = basis.index(j, m);
      ops.jz(idx, idx) = static_cast<double>(m);
      ops.jsq(idx, idx) = static_cast<double>(j * (j + 1));
      if (m < j) {
        // <j,m+1| J_+ |j,m> = sqrt(j(j+1) - m(m+1))
        const double c = std::sqrt(static_cast<double>(j * (j + 1) - m * (m + 1)));
        const int up = basis.index(j, m + 1);
        ops.jx(up, idx) += 0.5 * c;
        ops.jx(idx, up) += 0.5 * c;
        ops.jy(up, idx) += cdouble(0.0, -0.5) * c;
        ops.jy(idx, up) += cdouble(0.0, +0.5) * c;
      }
    }
  }
  return ops;
}

double cg(int j1, int m1, int j2, int m2, int J, int M) {
  if (j1 < 0 || j2 < 0 || J < 0)
    throw std::domain_error("cg: negative angular momentum");
  if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(M) > J)
    throw std::domain_error("cg: |m| > j");
  if (M != m1 + m2) return 0.0;
  if (J < std::abs(j1 - j2) || J > j1 + j2) return 0.0;

  // Racah's closed form. The k-sum is rational; the prefactor is a square
  // root of a rational, so the whole coefficient is sign(sum)*sqrt(rational)
  // and can be carried exactly until the final root.
  cpp_rational sum = 0;
  const int k_min = std::max({0, j2 - J - m1, j1 + m2 - J});
  const int k_max = std::min({j1 + j2 - J, j1 - m1, j2 + m2});
  for (int k = k_min; k <= k_max; ++k) {
    cpp_int denom = factorial(k) * factorial(j1 + j2 - J - k) *
                    factorial(j1 - m1 - k) * factorial(j2 + m2 - k) *
                    factorial(J - j2 + m1 + k) * factorial(J - j1 - m2 + k);
    cpp_rational term(1, denom);
    if (k % 2 != 0) term = -term;
    sum += term;
  }
  if (sum == 0) return 0.0;

  cpp_rational pref(cpp_int(2 * J + 1) * factorial(j1 + j2 - J) *
                        factorial(j1 - j2 + J) * factorial(-j1 + j2 + J),
                    factorial(j1 + j2 + J + 1));
  pref *= cpp_rational(factorial(J + M) * factorial(J - M) * factorial(j1 - m1) *
                       factorial(j1 + m1) * factorial(j2 - m2) *
                       factorial(j2 + m2));

  const cpp_rational square = pref * sum * sum;
  const double root = sqrt_rational(square);
  return sum > 0 ? root : -root;
}

PureState coherent_state(const RotBasis& basis, int j, double theta,
                         double phi) {
  if (j < 0 || j > basis.j_max)
    throw std::domain_error("coherent_state: j outside basis");
  Vec amps = Vec::Zero(basis.size());
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  for (int m = -j; m <= j; ++m) {
    // binom(2j, j+m) exactly; largest case here is binom(40,20) ~ 1.4e11,
    // well inside the integer range of a double
    double binom = 1.0;
    for (int i = 1; i <= j + m; ++i)
      binom *= static_cast<double>(2 * j - (j + m) + i) / static_cast<double>(i);
    const double mag =
        std::sqrt(binom) * std::pow(c, j + m) * std::pow(s, j - m);
    amps[basis.index(j, m)] = mag * std::exp(-iu * (static_cast<double>(m) * phi));
  }
  amps.normalize();
  return PureState{basis, std::move(amps)};
}

}  // namespace rotraman
