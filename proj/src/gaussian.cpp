#include "mixshap/gaussian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <boost/math/special_functions/erf.hpp>

#include "mixshap/error.hpp"

namespace mixshap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gauss-Legendre half-rules used by the bivariate normal routine.
constexpr std::array<double, 3> kGl6W{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 3> kGl6X{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
constexpr std::array<double, 6> kGl12W{0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                       0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 6> kGl12X{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                       0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 10> kGl20W{0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                        0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                        0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                        0.1527533871307259};
constexpr std::array<double, 10> kGl20X{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                        0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                        0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                        0.07652652113349733};

// 21-point Kronrod nodes; odd indices carry the embedded 10-point Gauss rule.
constexpr std::array<double, 11> kXgk{
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452, 0.930157491355708226001207180059508,
    0.865063366688984510732096688423493, 0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784, 0.294392862701460198131126603103866,
    0.148874338981631210884826001129720, 0.0};
constexpr std::array<double, 11> kWgk{
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390, 0.054755896574351996031381300244580,
    0.075039674810919952767043140916190, 0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208980478011, 0.134709217311473325928054001771707, 0.142775938577060080797094273138717,
    0.147739104901338491374841515972068, 0.149445554002916905664936468389821};
constexpr std::array<double, 5> kWg{0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
                                    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
                                    0.295524224714752870173892994651338};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gauss_kronrod21(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[10];
  double gauss = 0.0;
  std::array<double, 10> f1{};
  std::array<double, 10> f2{};
  for (int k = 0; k < 10; ++k) {
    const double dx = half * kXgk[static_cast<std::size_t>(k)];
    const double y1 = f(center - dx);
    const double y2 = f(center + dx);
    f1[static_cast<std::size_t>(k)] = y1;
    f2[static_cast<std::size_t>(k)] = y2;
    kronrod += kWgk[static_cast<std::size_t>(k)] * (y1 + y2);
    if (k % 2 == 1) gauss += kWg[static_cast<std::size_t>(k / 2)] * (y1 + y2);
  }
  const double mean = kronrod * 0.5;
  double resasc = kWgk[10] * std::abs(fc - mean);
  for (int k = 0; k < 10; ++k)
    resasc += kWgk[static_cast<std::size_t>(k)] *
              (std::abs(f1[static_cast<std::size_t>(k)] - mean) + std::abs(f2[static_cast<std::size_t>(k)] - mean));
  resasc *= std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  return {a, b, kronrod * half, err};
}

struct Standardized {
  Eigen::VectorXd lower, upper;
  Eigen::MatrixXd corr;
};

Standardized standardize(const MvnSpec& spec, const Rectangle& rect) {
  const int d = spec.dim();
  Standardized s{Eigen::VectorXd(d), Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
  Eigen::VectorXd sd = spec.sigma.diagonal().cwiseSqrt();
  for (int i = 0; i < d; ++i) {
    s.lower(i) = (rect.lower(i) - spec.mu(i)) / sd(i);
    s.upper(i) = (rect.upper(i) - spec.mu(i)) / sd(i);
    for (int j = 0; j < d; ++j) s.corr(i, j) = spec.sigma(i, j) / (sd(i) * sd(j));
    s.corr(i, i) = 1.0;
  }
  return s;
}

double rect2(double a1, double b1, double a2, double b2, double r) {
  const double p = bvn_upper(a1, a2, r) - bvn_upper(a1, b2, r) - bvn_upper(b1, a2, r) + bvn_upper(b1, b2, r);
  return std::clamp(p, 0.0, 1.0);
}

double interval_prob(double a, double b) {
  if (!(a < b)) return 0.0;
  // Use the tail that keeps precision.
  if (a > 0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

ProbabilityEstimate rectangle_quadrature(const Standardized& s, double accuracy) {
  const int d = static_cast<int>(s.lower.size());
  if (d == 1) return {interval_prob(s.lower(0), s.upper(0)), 0.0, true};
  if (d == 2) return {rect2(s.lower(0), s.upper(0), s.lower(1), s.upper(1), s.corr(0, 1)), 1e-14, true};
  if (d != 3) throw Error(ErrorCode::InvalidArgument, "quadrature route supports d <= 3");

  const double r12 = s.corr(0, 1), r13 = s.corr(0, 2), r23 = s.corr(1, 2);
  const double s2 = std::sqrt(std::max(0.0, 1.0 - r12 * r12));
  const double s3 = std::sqrt(std::max(0.0, 1.0 - r13 * r13));
  const double rc = std::clamp((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0);
  auto integrand = [&](double z) {
    const double a2 = (s.lower(1) - r12 * z) / s2, b2 = (s.upper(1) - r12 * z) / s2;
    const double a3 = (s.lower(2) - r13 * z) / s3, b3 = (s.upper(2) - r13 * z) / s3;
    return normal_pdf(z) * rect2(a2, b2, a3, b3, rc);
  };
  const double lo = std::max(s.lower(0), -9.0);
  const double hi = std::min(s.upper(0), 9.0);
  if (!(lo < hi)) return {0.0, 0.0, true};
  const double tol = std::min(accuracy * 1e-3, 1e-11);
  const double p = integrate_1d(integrand, lo, hi, tol);
  return {std::clamp(p, 0.0, 1.0), tol, true};
}

bool one_factor_rho(const Eigen::MatrixXd& corr, double* rho) {
  const int d = static_cast<int>(corr.rows());
  if (d < 2) {
    *rho = 0.0;
    return true;
  }
  const double r = corr(0, 1);
  if (r < 0.0 || r >= 1.0) return false;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j && std::abs(corr(i, j) - r) > 1e-12) return false;
  *rho = r;
  return true;
}

ProbabilityEstimate rectangle_one_factor(const Standardized& s, double rho, double accuracy) {
  const int d = static_cast<int>(s.lower.size());
  if (rho == 0.0) {
    double p = 1.0;
    for (int i = 0; i < d; ++i) p *= interval_prob(s.lower(i), s.upper(i));
    return {p, 0.0, true};
  }
  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  auto integrand = [&](double z) {
    double p = normal_pdf(z);
    for (int i = 0; i < d && p > 0.0; ++i) p *= interval_prob((s.lower(i) - a * z) / b, (s.upper(i) - a * z) / b);
    return p;
  };
  const double tol = std::min(accuracy * 1e-3, 1e-12);
  const double p = integrate_1d(integrand, -9.0, 9.0, tol);
  return {std::clamp(p, 0.0, 1.0), tol, true};
}

// Separation-of-variables transform with variable prioritisation, evaluated on
// randomly shifted Richtmyer lattices.
ProbabilityEstimate rectangle_qmc(const Standardized& s, double accuracy) {
  const int d = static_cast<int>(s.lower.size());
  Eigen::MatrixXd C = s.corr;
  Eigen::VectorXd a = s.lower, b = s.upper;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(d);

  for (int i = 0; i < d; ++i) {
    int best = i;
    double best_p = kInf;
    for (int j = i; j < d; ++j) {
      double t = 0.0, v = C(j, j);
      for (int k = 0; k < i; ++k) {
        t += L(j, k) * y(k);
        v -= L(j, k) * L(j, k);
      }
      if (v <= 0.0) continue;
      const double sd = std::sqrt(v);
      const double p = interval_prob((a(j) - t) / sd, (b(j) - t) / sd);
      if (p < best_p) {
        best_p = p;
        best = j;
      }
    }
    if (best != i) {
      C.row(i).swap(C.row(best));
      C.col(i).swap(C.col(best));
      L.row(i).swap(L.row(best));
      std::swap(a(i), a(best));
      std::swap(b(i), b(best));
    }
    double v = C(i, i);
    for (int k = 0; k < i; ++k) v -= L(i, k) * L(i, k);
    if (v <= 1e-14) throw Error(ErrorCode::CholeskyFailure, "covariance is not positive definite");
    L(i, i) = std::sqrt(v);
    for (int j = i + 1; j < d; ++j) {
      double c = C(j, i);
      for (int k = 0; k < i; ++k) c -= L(j, k) * L(i, k);
      L(j, i) = c / L(i, i);
    }
    double t = 0.0;
    for (int k = 0; k < i; ++k) t += L(i, k) * y(k);
    const double lo = (a(i) - t) / L(i, i), hi = (b(i) - t) / L(i, i);
    const double mass = interval_prob(lo, hi);
    const double plo = std::isfinite(lo) ? normal_pdf(lo) : 0.0;
    const double phi_hi = std::isfinite(hi) ? normal_pdf(hi) : 0.0;
    if (mass > 1e-300)
      y(i) = (plo - phi_hi) / mass;
    else
      y(i) = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
  }

  const double e0 = std::isfinite(a(0)) ? normal_cdf(a(0) / L(0, 0)) : 0.0;
  const double f0 = (std::isfinite(b(0)) ? normal_cdf(b(0) / L(0, 0)) : 1.0) - e0;
  if (d == 1 || f0 <= 0.0) return {std::max(0.0, f0), 0.0, true};

  std::vector<double> w(static_cast<std::size_t>(d - 1));
  std::vector<double> yy(static_cast<std::size_t>(d));
  auto integrand = [&](const std::vector<double>& u) {
    double e = e0, f = f0, prod = f0;
    for (int i = 1; i < d; ++i) {
      const double q = std::clamp(e + u[static_cast<std::size_t>(i - 1)] * f, 1e-300, 1.0 - 1e-16);
      yy[static_cast<std::size_t>(i - 1)] = normal_quantile(q);
      double t = 0.0;
      for (int k = 0; k < i; ++k) t += L(i, k) * yy[static_cast<std::size_t>(k)];
      e = std::isfinite(a(i)) ? normal_cdf((a(i) - t) / L(i, i)) : 0.0;
      f = (std::isfinite(b(i)) ? normal_cdf((b(i) - t) / L(i, i)) : 1.0) - e;
      prod *= f;
      if (prod <= 0.0) return 0.0;
    }
    return prod;
  };

  static constexpr std::array<double, 11> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31};
  constexpr int kShifts = 20;
  constexpr long kMaxPointsPerShift = 1L << 17;
  Rng rng(0x5eedULL + static_cast<std::uint64_t>(d));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> shifts(kShifts, std::vector<double>(static_cast<std::size_t>(d - 1)));
  for (auto& sh : shifts)
    for (auto& x : sh) x = unif(rng);

  std::vector<double> sums(kShifts, 0.0);
  std::vector<double> u(static_cast<std::size_t>(d - 1)), ua(static_cast<std::size_t>(d - 1));
  long done = 0;
  long target = 512;
  ProbabilityEstimate est;
  while (true) {
    for (int sh = 0; sh < kShifts; ++sh) {
      for (long k = done + 1; k <= target; ++k) {
        for (int i = 0; i < d - 1; ++i) {
          double x = static_cast<double>(k) * std::sqrt(kPrimes[static_cast<std::size_t>(i)]) +
                     shifts[static_cast<std::size_t>(sh)][static_cast<std::size_t>(i)];
          x -= std::floor(x);
          const double baker = std::abs(2.0 * x - 1.0);
          u[static_cast<std::size_t>(i)] = baker;
          ua[static_cast<std::size_t>(i)] = 1.0 - baker;
        }
        sums[static_cast<std::size_t>(sh)] += 0.5 * (integrand(u) + integrand(ua));
      }
    }
    done = target;
    double mean = 0.0;
    for (double sm : sums) mean += sm / static_cast<double>(done);
    mean /= kShifts;
    double var = 0.0;
    for (double sm : sums) {
      const double dm = sm / static_cast<double>(done) - mean;
      var += dm * dm;
    }
    var /= static_cast<double>(kShifts * (kShifts - 1));
    est.value = std::clamp(mean, 0.0, 1.0);
    est.error = 3.0 * std::sqrt(var);
    if (est.error <= accuracy) {
      est.converged = true;
      return est;
    }
    if (target >= kMaxPointsPerShift) {
      est.converged = false;
      return est;
    }
    target *= 2;
  }
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

MvnSpec::MvnSpec(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mu(std::move(mean)), sigma(std::move(cov)) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
    throw Error(ErrorCode::InvalidArgument, "mean and covariance dimensions disagree");
  if (!mu.allFinite() || !sigma.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite mean or covariance");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "covariance is not symmetric");
  if (sigma.size() > 0 && sigma.llt().info() != Eigen::Success)
    throw Error(ErrorCode::CholeskyFailure, "covariance is not positive definite");
}

MvnSpec MvnSpec::equicorrelated(int d, double rho) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(d, d, rho);
  s.diagonal().setOnes();
  return MvnSpec(Eigen::VectorXd::Zero(d), s);
}

Rectangle::Rectangle(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw Error(ErrorCode::InvalidArgument, "rectangle bound lengths differ");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower(i) < upper(i))) throw Error(ErrorCode::InvalidArgument, "rectangle needs lower < upper");
}

GaussianConditioner::GaussianConditioner(const MvnSpec& spec, std::vector<int> given) : given_(std::move(given)) {
  const int d = spec.dim();
  std::vector<char> is_given(static_cast<std::size_t>(d), 0);
  for (int g : given_) {
    if (g < 0 || g >= d || is_given[static_cast<std::size_t>(g)])
      throw Error(ErrorCode::InvalidArgument, "invalid conditioning index");
    is_given[static_cast<std::size_t>(g)] = 1;
  }
  for (int i = 0; i < d; ++i)
    if (!is_given[static_cast<std::size_t>(i)]) free_.push_back(i);

  const auto na = static_cast<Eigen::Index>(given_.size());
  const auto nb = static_cast<Eigen::Index>(free_.size());
  Eigen::MatrixXd saa(na, na), sba(nb, na), sbb(nb, nb);
  mu_given_.resize(na);
  mu_free_.resize(nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    mu_given_(i) = spec.mu(given_[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < na; ++j)
      saa(i, j) = spec.sigma(given_[static_cast<std::size_t>(i)], given_[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    mu_free_(i) = spec.mu(free_[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < na; ++j)
      sba(i, j) = spec.sigma(free_[static_cast<std::size_t>(i)], given_[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nb; ++j)
      sbb(i, j) = spec.sigma(free_[static_cast<std::size_t>(i)], free_[static_cast<std::size_t>(j)]);
  }
  if (na > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(saa);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularBlock, "conditioning block is singular");
    regression_ = llt.solve(sba.transpose()).transpose();
    cov_ = sbb - regression_ * sba.transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose());
  } else {
    regression_.resize(nb, 0);
    cov_ = sbb;
  }
  if (nb > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularBlock, "conditional covariance is singular");
    chol_ = llt.matrixL();
  }
}

Eigen::VectorXd GaussianConditioner::mean_at(std::span<const double> given_values) const {
  if (given_values.size() != given_.size()) throw Error(ErrorCode::LengthMismatch, "conditioning values length");
  if (given_.empty()) return mu_free_;
  const Eigen::Map<const Eigen::VectorXd> x(given_values.data(), static_cast<Eigen::Index>(given_values.size()));
  return mu_free_ + regression_ * (x - mu_given_);
}

MvnSpec GaussianConditioner::at(std::span<const double> given_values) const {
  MvnSpec out;
  out.mu = mean_at(given_values);
  out.sigma = cov_;
  return out;
}

MvnSpec conditional_mvn(const MvnSpec& spec, std::span<const int> given, std::span<const double> values) {
  if (static_cast<int>(given.size()) >= spec.dim())
    throw Error(ErrorCode::InvalidArgument, "conditioning set must be a proper subset");
  GaussianConditioner cond(spec, std::vector<int>(given.begin(), given.end()));
  return cond.at(values);
}

Eigen::MatrixXd sample_mvn(const MvnSpec& spec, int K, Rng& rng) {
  if (K < 0) throw Error(ErrorCode::InvalidArgument, "K must be >= 0");
  Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const int d = spec.dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(K, d);
  Eigen::VectorXd z(d);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < d; ++i) z(i) = normal(rng);
    out.row(k) = (spec.mu + L * z).transpose();
  }
  return out;
}

ProbabilityEstimate mvn_rectangle_prob(const MvnSpec& spec, const Rectangle& rect, double accuracy,
                                       RectangleMethod method) {
  const int d = spec.dim();
  if (rect.dim() != d) throw Error(ErrorCode::LengthMismatch, "rectangle and distribution dimensions differ");
  if (d < 1 || d > kMaxRectangleDim) throw Error(ErrorCode::DimensionTooLarge, "rectangle dimension must be 1..12");
  if (!(accuracy > 0.0)) throw Error(ErrorCode::InvalidArgument, "accuracy must be positive");
  const Standardized s = standardize(spec, rect);
  double rho = 0.0;
  switch (method) {
    case RectangleMethod::Quadrature:
      return rectangle_quadrature(s, accuracy);
    case RectangleMethod::QuasiMonteCarlo:
      return rectangle_qmc(s, accuracy);
    case RectangleMethod::OneFactor:
      if (!one_factor_rho(s.corr, &rho))
        throw Error(ErrorCode::InvalidArgument, "one-factor route needs equicorrelation with rho >= 0");
      return rectangle_one_factor(s, rho, accuracy);
    case RectangleMethod::Auto:
      break;
  }
  if (d <= 3) return rectangle_quadrature(s, accuracy);
  if (one_factor_rho(s.corr, &rho)) return rectangle_one_factor(s, rho, accuracy);
  return rectangle_qmc(s, accuracy);
}

double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : normal_cdf(-k);
  if (k == -kInf) return normal_cdf(-h);
  if (r == 0.0) return normal_cdf(-h) * normal_cdf(-k);

  const double tp = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  std::span<const double> w, x;
  if (std::abs(r) < 0.3) {
    w = kGl6W;
    x = kGl6X;
  } else if (std::abs(r) < 0.75) {
    w = kGl12W;
    x = kGl12X;
  } else {
    w = kGl20W;
    x = kGl20X;
  }
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sign * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k), 0.0, 1.0);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = 1.0 - r * r;
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double dd = (12.0 - hk) / 80.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - dd * bs) / 3.0 + c * dd * as * as);
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(tp) * normal_cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - dd * bs) / 3.0);
    }
    a /= 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double xs = std::pow(a * (1.0 + sign * x[i]), 2);
        const double asr_i = -(bs / xs + hk) / 2.0;
        if (asr_i <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * dd * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        sum += w[i] * std::exp(asr_i) * (sp - ep);
      }
    }
    bvn = (a * sum - bvn) / tp;
  }
  if (r > 0.0) {
    bvn += normal_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double l = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
    bvn = l - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double integrate_1d(const std::function<double(double)>& f, double lower, double upper, double tol,
                    int max_subdivisions) {
  if (std::isnan(lower) || std::isnan(upper)) throw Error(ErrorCode::InvalidArgument, "NaN integration bound");
  if (lower == upper) return 0.0;
  if (lower > upper) return -integrate_1d(f, upper, lower, tol, max_subdivisions);
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");

  std::function<double(double)> g;
  double a = lower, b = upper;
  const bool lo_inf = std::isinf(lower), hi_inf = std::isinf(upper);
  if (lo_inf && hi_inf) {
    g = [&f](double t) {
      const double x = std::tan(t), c = std::cos(t);
      const double v = f(x) / (c * c);
      return std::isfinite(v) ? v : 0.0;
    };
    a = -std::numbers::pi / 2;
    b = std::numbers::pi / 2;
  } else if (hi_inf) {
    g = [&f, lower](double t) {
      const double c = std::cos(t);
      const double v = f(lower + std::tan(t)) / (c * c);
      return std::isfinite(v) ? v : 0.0;
    };
    a = 0.0;
    b = std::numbers::pi / 2;
  } else if (lo_inf) {
    g = [&f, upper](double t) {
      const double c = std::cos(t);
      const double v = f(upper - std::tan(t)) / (c * c);
      return std::isfinite(v) ? v : 0.0;
    };
    a = 0.0;
    b = std::numbers::pi / 2;
  } else {
    g = f;
  }

  std::priority_queue<Segment> heap;
  Segment first = gauss_kronrod21(g, a, b);
  double total = first.value, error = first.error;
  heap.push(first);
  int subdivisions = 0;
  while (error > tol && !heap.empty()) {
    if (++subdivisions > max_subdivisions)
      throw Error(ErrorCode::MaxSubdivisionsExceeded,
                  "error estimate " + std::to_string(error) + " above tolerance " + std::to_string(tol));
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      // Interval can no longer be split in floating point; accept it.
      error -= worst.error;
      continue;
    }
    const Segment left = gauss_kronrod21(g, worst.a, mid);
    const Segment right = gauss_kronrod21(g, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  return total;
}

}  // namespace mixshap
