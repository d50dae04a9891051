#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrecnn/dataset.hpp"
#include "genrecnn/model.hpp"

namespace genrecnn::analysis {

/// A neuron address inside the network: channel plane plus spatial position.
/// For fc1 the unit index goes in `channel` and row/col must be zero.
struct NeuronIndex {
  std::size_t channel = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Half-open input rectangle [row_lo, row_hi) x [col_lo, col_hi) that can
/// influence one neuron.
struct ReceptiveField {
  model::LayerId layer;
  NeuronIndex neuron;
  std::size_t row_lo = 0, row_hi = 0;
  std::size_t col_lo = 0, col_hi = 0;

  std::size_t height() const { return row_hi - row_lo; }
  std::size_t width() const { return col_hi - col_lo; }
  std::size_t area() const { return height() * width(); }
};

/// Exact input patch for a neuron, from backward index arithmetic: a valid
/// k-kernel conv maps output rows [lo, hi) to input [lo, hi + k - 1); a p-pool
/// maps [lo, hi) to [lo * p, hi * p). Throws DomainError on a bad layer or
/// out-of-range index.
ReceptiveField receptive_field(model::LayerId layer, const NeuronIndex& neuron);

/// Spatial output shape (channels, rows, cols) of a named layer; fc1 reports
/// (32, 1, 1).
std::array<std::size_t, 3> layer_output_shape(model::LayerId layer);

/// Regression design collected from a corpus: one row per segment, columns
/// are the neuron's receptive-field patch flattened row-major; y holds the
/// neuron's activation per segment.
struct ActivationDataset {
  std::vector<float> patches;      // n x p, row-major
  std::vector<float> activations;  // n
  std::size_t n = 0;
  std::size_t p = 0;
  ReceptiveField field{};
};

/// Feeds every enumerated segment (default 10% overlap) of every record
/// through the model and records the target neuron's activation with its
/// input patch.
ActivationDataset collect_activations(const model::GenreCnn& model,
                                      const std::vector<data::TrackRecord>& records,
                                      data::FeatureStore& store,
                                      model::LayerId layer,
                                      const NeuronIndex& neuron,
                                      double overlap = 0.9);

/// L1-regularized least squares fit,
///   (1/2n) ||y - X b - b0||^2 + lambda ||b||_1,
/// solved by cyclic coordinate descent with soft-thresholding on internally
/// standardized columns. Coefficients are reported in the original column
/// scale; constant columns get coefficient zero.
struct LassoModel {
  std::vector<double> coefficients;  // p, original scale
  double intercept = 0.0;
  double lambda = 0.0;
  double objective = 0.0;  // standardized-space objective at the solution
  std::vector<double> objective_history;  // one entry per sweep
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Smallest lambda that zeroes every coefficient:
/// max_j |<x_j, y - mean(y)>| / n over standardized columns.
double lasso_lambda_max(const std::vector<float>& x, std::size_t n,
                        std::size_t p, const std::vector<float>& y);

LassoModel lasso_fit(const std::vector<float>& x, std::size_t n, std::size_t p,
                     const std::vector<float>& y, double lambda);

/// Lambda selection for filter estimation: either a fraction of lambda_max
/// (scale-free, the default at 0.01) or an absolute value.
struct LambdaPolicy {
  bool relative = true;
  double value = 0.01;

  double resolve(double lambda_max) const {
    return relative ? value * lambda_max : value;
  }
};

/// Estimated filter for one neuron: Lasso coefficients reshaped to the
/// receptive-field rectangle.
struct EstimatedFilter {
  ReceptiveField field{};
  std::vector<double> coefficients;  // height x width, row-major
  LassoModel fit;
  double lambda_max = 0.0;
  std::size_t n_samples = 0;
};

EstimatedFilter estimate_filter(const model::GenreCnn& model,
                                const std::vector<data::TrackRecord>& records,
                                data::FeatureStore& store,
                                model::LayerId layer, const NeuronIndex& neuron,
                                const LambdaPolicy& policy = {},
                                double overlap = 0.9);

/// Top-k generalized eigenpairs of S_b w = lambda S_w w for symmetric S_b and
/// positive-definite S_w (Cholesky reduction plus a cyclic Jacobi solve).
/// Directions are unit-norm, eigenvalues descending; max_residual is the
/// worst normalized residual ||S_b w - lambda S_w w|| / (||S_b||_F +
/// |lambda| ||S_w||_F).
struct GeneralizedEigenResult {
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<double> directions;   // d x k, column-major
  std::vector<double> eigenvalues;  // k, descending
  double max_residual = 0.0;
};

GeneralizedEigenResult generalized_symmetric_eigen(
    const std::vector<double>& s_b, const std::vector<double>& s_w,
    std::size_t d, std::size_t k);

/// Multi-class LDA projection onto the leading generalized eigenvectors of
/// S_b w = lambda S_w w (S_w ridge-regularized only when its Cholesky
/// factorization fails). Directions are unit-norm columns, eigenvalues
/// descending.
struct LdaProjection {
  std::size_t dim = 0;           // feature dimension d
  std::size_t n_directions = 0;  // min(3, d)
  std::vector<double> directions;   // d x n_directions, column-major
  std::vector<double> eigenvalues;  // n_directions, descending
  std::vector<double> class_means;  // n_classes x d, row-major
  std::vector<int> class_ids;
  double epsilon = 0.0;        // ridge actually applied to S_w
  double max_residual = 0.0;   // worst normalized eigen-residual

  /// features [n x d] row-major -> [n x n_directions] row-major.
  std::vector<double> project(const std::vector<float>& features,
                              std::size_t n) const;
};

LdaProjection lda_fit(const std::vector<float>& features, std::size_t n,
                      std::size_t d, const std::vector<int>& labels);

/// One projected segment of the held-out split.
struct ProjectedSegment {
  std::string track_id;
  std::size_t segment_start = 0;
  std::array<double, 3> components{};  // trailing entries 0 when dim < 3
  int genre = -1;
};

/// Fits LDA on the train split's fc1 activations and projects the test
/// split's, one row per test segment.
std::vector<ProjectedSegment> project_last_layer(
    const model::GenreCnn& model, const std::vector<data::TrackRecord>& records,
    data::FeatureStore& store, double overlap = 0.9);

}  // namespace genrecnn::analysis
