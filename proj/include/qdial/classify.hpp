#pragma once

// Gaussian-mixture readout model for single-shot IQ data.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qdial/dynamics.hpp"

namespace qdial::classify {

/// Declaration order is the tie-break order.
enum class Level { g = 0, e = 1, f = 2, h = 3, kplus = 4 };

std::string_view level_name(Level level);
Level level_from_name(std::string_view name);

struct IqShot {
  double i = 0.0;
  double q = 0.0;
  std::optional<Level> prep;
};

struct Component {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  double weight = 0.0;
};

struct GmmModel {
  std::map<Level, Component> components;

  void validate() const;
  std::vector<Level> labels() const;
  const Component& at(Level l) const;
};

enum class GmmInit { supervised, random };

struct GmmOptions {
  GmmInit init = GmmInit::supervised;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double rel_tol = 1e-9;
};

struct GmmFit {
  GmmModel model;
  /// Penalized log-likelihood per iteration (the quantity EM increases).
  std::vector<double> objective_trace;
  double log_likelihood = 0.0;
  int iterations = 0;
};

/// EM fit. Covariances carry a ridge prior whose M-step adds 1e-6 x mean data
/// variance to the diagonal (scaled so a component holding n/K shots receives
/// exactly that amount). Random init is k-means++ on the seed; its clusters are
/// named in order of decreasing weight.
GmmFit fit_gmm(std::span<const IqShot> shots, std::span<const Level> labels,
               const GmmOptions& opts = {});

/// Mixture log-likelihood sum over shots.
double log_likelihood(const GmmModel& model, std::span<const IqShot> shots);

struct Classification {
  Level label = Level::g;
  std::map<Level, double> posterior;
};

Classification classify_shot(const GmmModel& model, const IqShot& shot);
std::vector<Level> classify_all(const GmmModel& model, std::span<const IqShot> shots);

double pairwise_separation(const Component& a, const Component& b);
double pairwise_separation(const GmmModel& model, Level i, Level j);
/// Smallest separation over all pairs (g..h and k+ if present).
double min_pairwise_separation(const GmmModel& model);

/// Phi(-delta/2).
double bayes_error(double delta);
/// Inverse of bayes_error on (0, 0.5].
double effective_binary_separation(double epsilon);

struct AssignmentMatrix {
  std::vector<Level> rows;  // prepared
  std::vector<Level> cols;  // assigned
  Eigen::MatrixXd p;

  double operator()(Level prep, Level assigned) const;
};

/// Rows default to every model label except k+; a row without shots is EmptyRow.
AssignmentMatrix assignment_matrix(const GmmModel& model, std::span<const IqShot> labeled_shots,
                                   std::span<const Level> rows = {});

/// Resample n_per_state shots from each component and reclassify.
AssignmentMatrix synthetic_confusion(const GmmModel& model, long n_per_state, std::uint64_t seed);

/// Draw n shots from one component.
std::vector<IqShot> sample_component(const Component& c, long n, std::uint64_t seed,
                                     std::optional<Level> prep = std::nullopt);

struct HeraldResult {
  std::vector<std::size_t> retained;
  double retained_fraction = 0.0;
};

/// Keep shots whose ground posterior is strictly above threshold.
HeraldResult herald_filter(std::span<const double> ground_posteriors, double threshold = 0.995);

std::map<Level, long> count_levels(std::span<const Level> assigned);

/// Drop k+ and normalize the g..h counts.
dynamics::PopulationVector exclude_overflow_and_renormalize(const std::map<Level, long>& counts);

/// Linear confusion inversion: solves C^T x = observed over the square g..h block.
/// Result may leave the simplex; it is not clipped.
Eigen::VectorXd correct_populations(const AssignmentMatrix& c, const Eigen::VectorXd& observed);

/// Keep shots within `n_sigma` Mahalanobis radius of their assigned component.
std::vector<std::size_t> truncate_to_sigma(const GmmModel& model, std::span<const IqShot> shots,
                                           double n_sigma = 3.0);

}  // namespace qdial::classify
