#include "qdial/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "qdial/constants.hpp"
#include "qdial/error.hpp"
#include "qdial/rng.hpp"

namespace qdial::classify {

namespace {

using Eigen::Matrix2d;
using Eigen::Vector2d;

constexpr double min_weight = 1e-6;

Vector2d point(const IqShot& s) { return {s.i, s.q}; }

double log_density(const Component& c, const Vector2d& x) {
  const double det = c.cov.determinant();
  const Vector2d d = x - c.mean;
  const double m2 = d.dot(c.cov.inverse() * d);
  return -std::log(2.0 * constants::pi) - 0.5 * std::log(det) - 0.5 * m2;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_spd(const Matrix2d& cov, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix2d> es(cov);
  if (!(es.eigenvalues().minCoeff() > 0.0) || !cov.allFinite())
    throw Error(ErrorKind::SingularComponent, std::string(what) + ": covariance not positive definite");
}

}  // namespace

std::string_view level_name(Level level) {
  switch (level) {
    case Level::g: return "g";
    case Level::e: return "e";
    case Level::f: return "f";
    case Level::h: return "h";
    case Level::kplus: return "k+";
  }
  return "?";
}

Level level_from_name(std::string_view name) {
  if (name == "g") return Level::g;
  if (name == "e") return Level::e;
  if (name == "f") return Level::f;
  if (name == "h") return Level::h;
  if (name == "k+" || name == "k") return Level::kplus;
  throw Error(ErrorKind::InvalidArgument, "unknown level label '" + std::string(name) + "'");
}

void GmmModel::validate() const {
  if (components.empty()) throw Error(ErrorKind::InvalidArgument, "model has no components");
  double total = 0.0;
  for (const auto& [label, c] : components) {
    if (!c.mean.allFinite()) throw Error(ErrorKind::InvalidArgument, "component mean not finite");
    if (std::abs(c.cov(0, 1) - c.cov(1, 0)) > 1e-12 * c.cov.norm())
      throw Error(ErrorKind::InvalidArgument, "component covariance not symmetric");
    check_spd(c.cov, "model");
    if (!(c.weight >= 0.0)) throw Error(ErrorKind::InvalidArgument, "component weight < 0");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "weights must sum to 1");
}

std::vector<Level> GmmModel::labels() const {
  std::vector<Level> out;
  for (const auto& kv : components) out.push_back(kv.first);
  return out;
}

const Component& GmmModel::at(Level l) const {
  auto it = components.find(l);
  if (it == components.end())
    throw Error(ErrorKind::InvalidArgument, "model lacks component " + std::string(level_name(l)));
  return it->second;
}

double log_likelihood(const GmmModel& model, std::span<const IqShot> shots) {
  double ll = 0.0;
  std::vector<double> terms;
  for (const auto& s : shots) {
    terms.clear();
    for (const auto& [label, c] : model.components)
      terms.push_back(std::log(c.weight) + log_density(c, point(s)));
    ll += log_sum_exp(terms);
  }
  return ll;
}

GmmFit fit_gmm(std::span<const IqShot> shots, std::span<const Level> labels, const GmmOptions& opts) {
  const std::size_t k_count = labels.size();
  const std::size_t n = shots.size();
  if (k_count == 0) throw Error(ErrorKind::InvalidArgument, "no labels requested");
  for (std::size_t a = 0; a < k_count; ++a)
    for (std::size_t b = a + 1; b < k_count; ++b)
      if (labels[a] == labels[b]) throw Error(ErrorKind::InvalidArgument, "labels must be unique");
  if (n < 10 * k_count) throw Error(ErrorKind::InvalidArgument, "need >= 10 shots per component");

  std::vector<Vector2d> x(n);
  Vector2d mean_all = Vector2d::Zero();
  for (std::size_t s = 0; s < n; ++s) {
    x[s] = point(shots[s]);
    if (!x[s].allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite shot");
    mean_all += x[s];
  }
  mean_all /= static_cast<double>(n);
  Vector2d var_all = Vector2d::Zero();
  for (const auto& p : x) var_all += (p - mean_all).cwiseAbs2();
  var_all /= static_cast<double>(n);
  const double lambda = 1e-6 * 0.5 * (var_all[0] + var_all[1]);
  if (!(lambda > 0.0)) throw Error(ErrorKind::SingularComponent, "all shots coincide");
  const double ridge = static_cast<double>(n) / static_cast<double>(k_count) * lambda;

  std::vector<Component> comp(k_count);

  auto hard_stats = [&](const std::vector<int>& assign) {
    for (std::size_t k = 0; k < k_count; ++k) {
      Vector2d m = Vector2d::Zero();
      double cnt = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        if (assign[s] == static_cast<int>(k)) {
          m += x[s];
          cnt += 1.0;
        }
      if (cnt < 2.0) throw Error(ErrorKind::SingularComponent, "initial cluster has < 2 shots");
      m /= cnt;
      Matrix2d sc = Matrix2d::Zero();
      for (std::size_t s = 0; s < n; ++s)
        if (assign[s] == static_cast<int>(k)) sc += (x[s] - m) * (x[s] - m).transpose();
      comp[k].mean = m;
      comp[k].cov = (sc + lambda * cnt * Matrix2d::Identity()) / cnt;
      comp[k].weight = cnt;
    }
    double total = 0.0;
    for (auto& c : comp) total += c.weight;
    for (auto& c : comp) c.weight /= total;
  };

  if (opts.init == GmmInit::supervised) {
    std::vector<int> assign(n, -1);
    for (std::size_t s = 0; s < n; ++s) {
      if (!shots[s].prep) continue;
      for (std::size_t k = 0; k < k_count; ++k)
        if (labels[k] == *shots[s].prep) assign[s] = static_cast<int>(k);
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      if (std::count(assign.begin(), assign.end(), static_cast<int>(k)) < 2)
        throw Error(ErrorKind::InvalidArgument,
                    "supervised init needs prepared shots for label " + std::string(level_name(labels[k])));
    }
    hard_stats(assign);
  } else {
    std::mt19937_64 rng(opts.seed);
    std::vector<Vector2d> centers;
    centers.push_back(x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    while (centers.size() < k_count) {
      double total = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, (x[s] - c).squaredNorm());
        d2[s] = best;
        total += best;
      }
      if (!(total > 0.0)) throw Error(ErrorKind::SingularComponent, "fewer distinct points than components");
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      std::size_t pick = n - 1;
      for (std::size_t s = 0; s < n; ++s) {
        u -= d2[s];
        if (u < 0.0) {
          pick = s;
          break;
        }
      }
      centers.push_back(x[pick]);
    }
    std::vector<int> assign(n, 0);
    for (int it = 0; it < 50; ++it) {
      bool changed = false;
      for (std::size_t s = 0; s < n; ++s) {
        int best = 0;
        for (std::size_t k = 1; k < k_count; ++k)
          if ((x[s] - centers[k]).squaredNorm() < (x[s] - centers[best]).squaredNorm())
            best = static_cast<int>(k);
        if (best != assign[s]) changed = true;
        assign[s] = best;
      }
      for (std::size_t k = 0; k < k_count; ++k) {
        Vector2d m = Vector2d::Zero();
        double cnt = 0.0;
        for (std::size_t s = 0; s < n; ++s)
          if (assign[s] == static_cast<int>(k)) {
            m += x[s];
            cnt += 1.0;
          }
        if (cnt > 0.0) centers[k] = m / cnt;
      }
      if (!changed && it > 0) break;
    }
    hard_stats(assign);
  }

  GmmFit fit;
  std::vector<std::vector<double>> resp(k_count, std::vector<double>(n));
  std::vector<double> terms(k_count);
  double prev = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < k_count; ++k)
        terms[k] = std::log(comp[k].weight) + log_density(comp[k], x[s]);
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t k = 0; k < k_count; ++k) resp[k][s] = std::exp(terms[k] - lse);
    }
    double penalty = 0.0;
    for (const auto& c : comp) penalty += c.cov.inverse().trace();
    const double objective = ll - 0.5 * ridge * penalty;
    fit.objective_trace.push_back(objective);
    fit.log_likelihood = ll;
    if (std::abs(objective - prev) <= opts.rel_tol * std::abs(objective)) {
      converged = true;
      break;
    }
    prev = objective;

    // M-step
    for (std::size_t k = 0; k < k_count; ++k) {
      double nk = 0.0;
      Vector2d m = Vector2d::Zero();
      for (std::size_t s = 0; s < n; ++s) {
        nk += resp[k][s];
        m += resp[k][s] * x[s];
      }
      const double w = nk / static_cast<double>(n);
      if (!(w >= min_weight))
        throw Error(ErrorKind::SingularComponent,
                    "component " + std::string(level_name(labels[k])) + " collapsed");
      m /= nk;
      Matrix2d sc = Matrix2d::Zero();
      for (std::size_t s = 0; s < n; ++s) {
        const Vector2d d = x[s] - m;
        sc += resp[k][s] * d * d.transpose();
      }
      comp[k].mean = m;
      comp[k].cov = (sc + ridge * Matrix2d::Identity()) / nk;
      comp[k].weight = w;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os.precision(17);
    os << "EM did not converge in " << opts.max_iterations
       << " iterations; final log-likelihood " << fit.log_likelihood;
    throw Error(ErrorKind::NotConverged, os.str());
  }
  fit.iterations = it;

  std::vector<std::size_t> order(k_count);
  for (std::size_t k = 0; k < k_count; ++k) order[k] = k;
  std::vector<Level> names(labels.begin(), labels.end());
  if (opts.init == GmmInit::random) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return comp[a].weight > comp[b].weight; });
    std::sort(names.begin(), names.end());
  }
  for (std::size_t r = 0; r < k_count; ++r) {
    Component c = comp[order[r]];
    c.cov(0, 1) = c.cov(1, 0) = 0.5 * (c.cov(0, 1) + c.cov(1, 0));
    fit.model.components[names[r]] = c;
  }
  return fit;
}

Classification classify_shot(const GmmModel& model, const IqShot& shot) {
  Classification out;
  std::vector<double> terms;
  std::vector<Level> order;
  for (const auto& [label, c] : model.components) {
    terms.push_back(std::log(c.weight) + log_density(c, point(shot)));
    order.push_back(label);
  }
  const double lse = log_sum_exp(terms);
  std::size_t best = 0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    out.posterior[order[k]] = std::exp(terms[k] - lse);
    if (terms[k] > terms[best]) best = k;  // strict: earlier label wins ties
  }
  out.label = order[best];
  return out;
}

std::vector<Level> classify_all(const GmmModel& model, std::span<const IqShot> shots) {
  std::vector<Level> out;
  out.reserve(shots.size());
  for (const auto& s : shots) out.push_back(classify_shot(model, s).label);
  return out;
}

double pairwise_separation(const Component& a, const Component& b) {
  const Matrix2d avg = 0.5 * (a.cov + b.cov);
  const double det = avg.determinant();
  if (!(det > 1e-300 * std::max(1.0, avg.squaredNorm())) || !avg.allFinite())
    throw Error(ErrorKind::SingularCovariance, "averaged covariance is singular");
  const Vector2d d = a.mean - b.mean;
  const double d2 = d.dot(avg.ldlt().solve(d));
  return std::sqrt(std::max(0.0, d2));
}

double pairwise_separation(const GmmModel& model, Level i, Level j) {
  return pairwise_separation(model.at(i), model.at(j));
}

double min_pairwise_separation(const GmmModel& model) {
  double best = std::numeric_limits<double>::infinity();
  for (auto a = model.components.begin(); a != model.components.end(); ++a)
    for (auto b = std::next(a); b != model.components.end(); ++b)
      best = std::min(best, pairwise_separation(a->second, b->second));
  return best;
}

double bayes_error(double delta) {
  if (!(delta >= 0.0)) throw Error(ErrorKind::OutOfRange, "delta must be >= 0");
  return 0.5 * std::erfc(delta / (2.0 * std::sqrt(2.0)));
}

double effective_binary_separation(double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5))
    throw Error(ErrorKind::OutOfRange, "epsilon must lie in (0, 0.5]");
  return 2.0 * std::sqrt(2.0) * boost::math::erfc_inv(2.0 * epsilon);
}

double AssignmentMatrix::operator()(Level prep, Level assigned) const {
  const auto r = std::find(rows.begin(), rows.end(), prep);
  const auto c = std::find(cols.begin(), cols.end(), assigned);
  if (r == rows.end() || c == cols.end())
    throw Error(ErrorKind::InvalidArgument, "label not in assignment matrix");
  return p(r - rows.begin(), c - cols.begin());
}

AssignmentMatrix assignment_matrix(const GmmModel& model, std::span<const IqShot> labeled_shots,
                                   std::span<const Level> rows) {
  model.validate();
  AssignmentMatrix out;
  out.cols = model.labels();
  if (rows.empty()) {
    for (Level l : out.cols)
      if (l != Level::kplus) out.rows.push_back(l);
  } else {
    out.rows.assign(rows.begin(), rows.end());
  }
  out.p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out.rows.size()),
                                static_cast<Eigen::Index>(out.cols.size()));
  for (const auto& s : labeled_shots) {
    if (!s.prep) continue;
    const auto r = std::find(out.rows.begin(), out.rows.end(), *s.prep);
    if (r == out.rows.end()) continue;
    const Level a = classify_shot(model, s).label;
    const auto c = std::find(out.cols.begin(), out.cols.end(), a);
    out.p(r - out.rows.begin(), c - out.cols.begin()) += 1.0;
  }
  for (Eigen::Index r = 0; r < out.p.rows(); ++r) {
    const double total = out.p.row(r).sum();
    if (total == 0.0)
      throw Error(ErrorKind::EmptyRow,
                  "no shots prepared in " + std::string(level_name(out.rows[static_cast<std::size_t>(r)])));
    out.p.row(r) /= total;
  }
  return out;
}

std::vector<IqShot> sample_component(const Component& c, long n, std::uint64_t seed,
                                     std::optional<Level> prep) {
  check_spd(c.cov, "sample_component");
  const Matrix2d l = c.cov.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<IqShot> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0L)));
  for (long s = 0; s < n; ++s) {
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const Vector2d v = c.mean + l * Vector2d(z0, z1);
    out.push_back({v[0], v[1], prep});
  }
  return out;
}

AssignmentMatrix synthetic_confusion(const GmmModel& model, long n_per_state, std::uint64_t seed) {
  model.validate();
  if (n_per_state < 100) throw Error(ErrorKind::InvalidArgument, "n_per_state must be >= 100");
  AssignmentMatrix out;
  out.rows = model.labels();
  out.cols = out.rows;
  const auto k = static_cast<Eigen::Index>(out.rows.size());
  out.p = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const Level level = out.rows[static_cast<std::size_t>(r)];
    std::mt19937_64 stream = substream(seed, static_cast<std::uint64_t>(level));
    const auto shots = sample_component(model.at(level), n_per_state, stream(), level);
    for (const auto& s : shots) {
      const Level a = classify_shot(model, s).label;
      const auto c = std::find(out.cols.begin(), out.cols.end(), a) - out.cols.begin();
      out.p(r, c) += 1.0;
    }
    out.p.row(r) /= static_cast<double>(n_per_state);
  }
  return out;
}

HeraldResult herald_filter(std::span<const double> ground_posteriors, double threshold) {
  HeraldResult out;
  for (std::size_t s = 0; s < ground_posteriors.size(); ++s)
    if (ground_posteriors[s] > threshold) out.retained.push_back(s);
  out.retained_fraction = ground_posteriors.empty()
                              ? 0.0
                              : static_cast<double>(out.retained.size()) /
                                    static_cast<double>(ground_posteriors.size());
  return out;
}

std::map<Level, long> count_levels(std::span<const Level> assigned) {
  std::map<Level, long> out{{Level::g, 0}, {Level::e, 0}, {Level::f, 0}, {Level::h, 0}};
  for (Level l : assigned) ++out[l];
  return out;
}

dynamics::PopulationVector exclude_overflow_and_renormalize(const std::map<Level, long>& counts) {
  std::array<double, 4> c{};
  double total = 0.0;
  for (const auto& [label, n] : counts) {
    if (n < 0) throw Error(ErrorKind::InvalidArgument, "counts must be >= 0");
    if (label == Level::kplus) continue;
    c[static_cast<int>(label)] = static_cast<double>(n);
    total += static_cast<double>(n);
  }
  if (total == 0.0) throw Error(ErrorKind::AllOverflow, "no shots in the g..h manifold");
  dynamics::PopulationVector p;
  for (int i = 0; i < 4; ++i) p.p[i] = c[i] / total;
  return p;
}

Eigen::VectorXd correct_populations(const AssignmentMatrix& c, const Eigen::VectorXd& observed) {
  std::vector<Eigen::Index> idx;
  for (Level r : c.rows) {
    const auto it = std::find(c.cols.begin(), c.cols.end(), r);
    if (it == c.cols.end()) throw Error(ErrorKind::InvalidArgument, "rows must be a subset of cols");
    idx.push_back(it - c.cols.begin());
  }
  const auto k = static_cast<Eigen::Index>(idx.size());
  if (observed.size() != k) throw Error(ErrorKind::InvalidArgument, "observed size mismatch");
  Eigen::MatrixXd sq(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index j = 0; j < k; ++j) sq(r, j) = c.p(r, idx[static_cast<std::size_t>(j)]);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sq.transpose());
  if (!lu.isInvertible()) throw Error(ErrorKind::SingularCovariance, "confusion matrix is singular");
  return lu.solve(observed);
}

std::vector<std::size_t> truncate_to_sigma(const GmmModel& model, std::span<const IqShot> shots,
                                           double n_sigma) {
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < shots.size(); ++s) {
    const Level l = classify_shot(model, shots[s]).label;
    const Component& c = model.at(l);
    const Vector2d d = point(shots[s]) - c.mean;
    if (d.dot(c.cov.ldlt().solve(d)) <= n_sigma * n_sigma) keep.push_back(s);
  }
  return keep;
}

}  // namespace qdial::classify
