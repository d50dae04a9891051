#include "genrecnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "genrecnn/errors.hpp"
#include "genrecnn/parallel.hpp"

namespace genrecnn::analysis {

namespace {

using model::LayerId;

/// Backward interval maps for the stack below each named layer.
struct ConvStep {
  std::size_t kh, kw;
};
struct PoolStep {
  std::size_t ph, pw;
};

struct Interval {
  std::size_t row_lo, row_hi, col_lo, col_hi;
};

Interval back_through_conv(Interval iv, const ConvStep& s) {
  return {iv.row_lo, iv.row_hi + s.kh - 1, iv.col_lo, iv.col_hi + s.kw - 1};
}

Interval back_through_pool(Interval iv, const PoolStep& s) {
  return {iv.row_lo * s.ph, iv.row_hi * s.ph, iv.col_lo * s.pw,
          iv.col_hi * s.pw};
}

constexpr ConvStep kConv1{model::kConv1Kh, model::kConv1Kw};
constexpr ConvStep kConv2{model::kConv2Kh, model::kConv2Kw};
constexpr PoolStep kPool{model::kPoolH, model::kPoolW};

}  // namespace

std::array<std::size_t, 3> layer_output_shape(LayerId layer) {
  switch (layer) {
    case LayerId::kConv1:
      return {model::kConvChannels, model::kConv1OutH, model::kConv1OutW};
    case LayerId::kPool1:
      return {model::kConvChannels, model::kPool1OutH, model::kPool1OutW};
    case LayerId::kConv2:
      return {model::kConvChannels, model::kConv2OutH, model::kConv2OutW};
    case LayerId::kPool2:
      return {model::kConvChannels, model::kPool2OutH, model::kPool2OutW};
    case LayerId::kFc1:
      return {model::kHiddenUnits, 1, 1};
  }
  throw DomainError("unknown layer");
}

ReceptiveField receptive_field(LayerId layer, const NeuronIndex& neuron) {
  const auto shape = layer_output_shape(layer);
  if (neuron.channel >= shape[0] || neuron.row >= shape[1] ||
      neuron.col >= shape[2]) {
    throw DomainError("neuron (" + std::to_string(neuron.channel) + "," +
                      std::to_string(neuron.row) + "," +
                      std::to_string(neuron.col) + ") out of range for " +
                      model::layer_name(layer));
  }

  ReceptiveField rf;
  rf.layer = layer;
  rf.neuron = neuron;

  if (layer == LayerId::kFc1) {
    // Fully connected: the whole input.
    rf.row_lo = 0;
    rf.row_hi = model::kInputMels;
    rf.col_lo = 0;
    rf.col_hi = model::kInputFrames;
    return rf;
  }

  Interval iv{neuron.row, neuron.row + 1, neuron.col, neuron.col + 1};
  switch (layer) {
    case LayerId::kPool2:
      iv = back_through_pool(iv, kPool);
      [[fallthrough]];
    case LayerId::kConv2:
      iv = back_through_conv(iv, kConv2);
      [[fallthrough]];
    case LayerId::kPool1:
      iv = back_through_pool(iv, kPool);
      [[fallthrough]];
    case LayerId::kConv1:
      iv = back_through_conv(iv, kConv1);
      break;
    default:
      throw DomainError("unexpected layer");
  }

  rf.row_lo = iv.row_lo;
  rf.row_hi = iv.row_hi;
  rf.col_lo = iv.col_lo;
  rf.col_hi = iv.col_hi;
  return rf;
}

namespace {

float neuron_activation(const model::ForwardCache& cache, LayerId layer,
                        const NeuronIndex& neuron) {
  if (layer == LayerId::kFc1) return cache.fc1_act[neuron.channel];
  return cache.activation(layer).at3(neuron.channel, neuron.row, neuron.col);
}

void append_patch(const Tensor& segment, const ReceptiveField& rf,
                  std::vector<float>& out) {
  for (std::size_t r = rf.row_lo; r < rf.row_hi; ++r) {
    const float* row = segment.ptr() + r * model::kInputFrames;
    out.insert(out.end(), row + rf.col_lo, row + rf.col_hi);
  }
}

}  // namespace

ActivationDataset collect_activations(
    const model::GenreCnn& model, const std::vector<data::TrackRecord>& records,
    data::FeatureStore& store, LayerId layer, const NeuronIndex& neuron,
    double overlap) {
  if (records.empty()) throw ConfigError("collect_activations: empty corpus");
  const ReceptiveField rf = receptive_field(layer, neuron);

  struct PerTrack {
    std::vector<float> patches;
    std::vector<float> activations;
  };
  std::vector<PerTrack> partial(records.size());

  parallel_for(records.size(), [&](std::size_t i) {
    const dsp::MelSpectrogram& spec = store.get(records[i].feature_path);
    const auto starts = data::segment_starts(spec.n_frames(), overlap);
    auto& dst = partial[i];
    dst.patches.reserve(starts.size() * rf.area());
    dst.activations.reserve(starts.size());
    model::ForwardCache cache;
    std::mt19937_64 unused_rng(0);
    for (std::size_t s : starts) {
      const data::Segment seg = data::extract_segment(spec, s);
      model.forward(seg.values, /*training=*/false, unused_rng, cache);
      dst.activations.push_back(neuron_activation(cache, layer, neuron));
      append_patch(seg.values, rf, dst.patches);
    }
  });

  ActivationDataset out;
  out.field = rf;
  out.p = rf.area();
  for (const auto& part : partial) {
    out.patches.insert(out.patches.end(), part.patches.begin(),
                       part.patches.end());
    out.activations.insert(out.activations.end(), part.activations.begin(),
                           part.activations.end());
  }
  out.n = out.activations.size();
  return out;
}

// ---------------------------------------------------------------------------
// Lasso
// ---------------------------------------------------------------------------

namespace {

struct StandardizedDesign {
  std::size_t n = 0, p = 0;
  std::vector<double> columns;  // p x n, column-major, standardized
  std::vector<double> mean;     // p
  std::vector<double> sd;       // p; 0 marks a constant (excluded) column
  std::vector<double> y_centered;
  double y_mean = 0.0;
  std::size_t live_columns = 0;
};

StandardizedDesign standardize(const std::vector<float>& x, std::size_t n,
                               std::size_t p, const std::vector<float>& y) {
  if (n < 2) throw ConfigError("lasso: need at least 2 samples");
  if (p == 0) throw ConfigError("lasso: empty design");
  if (x.size() != n * p || y.size() != n) {
    throw ShapeError("lasso: design/target size mismatch");
  }

  StandardizedDesign d;
  d.n = n;
  d.p = p;
  d.mean.assign(p, 0.0);
  d.sd.assign(p, 0.0);
  d.columns.assign(p * n, 0.0);

  for (std::size_t j = 0; j < p; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i * p + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = x[i * p + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    d.mean[j] = mu;
    if (var > 0.0) {
      const double sd = std::sqrt(var);
      d.sd[j] = sd;
      double* col = d.columns.data() + j * n;
      for (std::size_t i = 0; i < n; ++i) col[i] = (x[i * p + j] - mu) / sd;
      ++d.live_columns;
    }
  }
  if (d.live_columns == 0) {
    throw ConfigError("lasso: every design column is constant");
  }

  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) ym += y[i];
  ym /= static_cast<double>(n);
  d.y_mean = ym;
  d.y_centered.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.y_centered[i] = y[i] - ym;
  return d;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

double lasso_lambda_max(const std::vector<float>& x, std::size_t n,
                        std::size_t p, const std::vector<float>& y) {
  const StandardizedDesign d = standardize(x, n, p, y);
  double best = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    if (d.sd[j] == 0.0) continue;
    const double* col = d.columns.data() + j * n;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += col[i] * d.y_centered[i];
    best = std::max(best, std::abs(dot) / static_cast<double>(n));
  }
  return best;
}

LassoModel lasso_fit(const std::vector<float>& x, std::size_t n, std::size_t p,
                     const std::vector<float>& y, double lambda) {
  if (lambda < 0.0) throw ConfigError("lasso: lambda must be >= 0");
  const StandardizedDesign d = standardize(x, n, p, y);
  const double inv_n = 1.0 / static_cast<double>(n);

  constexpr double kTol = 1e-7;
  constexpr std::size_t kMaxSweeps = 10000;

  std::vector<double> beta(p, 0.0);       // standardized scale
  std::vector<double> residual = d.y_centered;

  LassoModel fit;
  fit.lambda = lambda;
  auto objective_now = [&] {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += residual[i] * residual[i];
    double l1 = 0.0;
    for (double b : beta) l1 += std::abs(b);
    return 0.5 * inv_n * sse + lambda * l1;
  };

  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (d.sd[j] == 0.0) continue;
      const double* col = d.columns.data() + j * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += col[i] * residual[i];
      // Standardized columns have (1/n)||x_j||^2 = 1, so the coordinate
      // minimizer is a single soft-threshold.
      const double rho = dot * inv_n + beta[j];
      const double next = soft_threshold(rho, lambda);
      const double delta = next - beta[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) residual[i] -= col[i] * delta;
        beta[j] = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    fit.sweeps = sweep + 1;
    fit.objective_history.push_back(objective_now());
    if (max_change < kTol) {
      fit.converged = true;
      break;
    }
  }

  fit.objective = fit.objective_history.empty() ? objective_now()
                                                : fit.objective_history.back();

  fit.coefficients.assign(p, 0.0);
  double mean_shift = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    if (d.sd[j] == 0.0) continue;
    fit.coefficients[j] = beta[j] / d.sd[j];
    mean_shift += fit.coefficients[j] * d.mean[j];
  }
  fit.intercept = d.y_mean - mean_shift;
  return fit;
}

EstimatedFilter estimate_filter(const model::GenreCnn& model,
                                const std::vector<data::TrackRecord>& records,
                                data::FeatureStore& store, LayerId layer,
                                const NeuronIndex& neuron,
                                const LambdaPolicy& policy, double overlap) {
  const ActivationDataset ds =
      collect_activations(model, records, store, layer, neuron, overlap);

  EstimatedFilter est;
  est.field = ds.field;
  est.n_samples = ds.n;
  est.lambda_max = lasso_lambda_max(ds.patches, ds.n, ds.p, ds.activations);
  est.fit = lasso_fit(ds.patches, ds.n, ds.p, ds.activations,
                      policy.resolve(est.lambda_max));
  est.coefficients = est.fit.coefficients;
  return est;
}

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

namespace {

/// Lower-triangular Cholesky; returns false if a pivot is not positive.
bool cholesky(const std::vector<double>& a, std::size_t d,
              std::vector<double>& l) {
  l.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) acc -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (acc <= 0.0) return false;
        l[i * d + i] = std::sqrt(acc);
      } else {
        l[i * d + j] = acc / l[j * d + j];
      }
    }
  }
  return true;
}

/// Solves L z = b in place (L lower-triangular).
void forward_solve(const std::vector<double>& l, std::size_t d,
                   std::vector<double>& b) {
  for (std::size_t i = 0; i < d; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l[i * d + k] * b[k];
    b[i] = acc / l[i * d + i];
  }
}

/// Solves L^T z = b in place.
void backward_solve(const std::vector<double>& l, std::size_t d,
                    std::vector<double>& b) {
  for (std::size_t ii = d; ii-- > 0;) {
    double acc = b[ii];
    for (std::size_t k = ii + 1; k < d; ++k) acc -= l[k * d + ii] * b[k];
    b[ii] = acc / l[ii * d + ii];
  }
}

/// Cyclic Jacobi eigensolver for a symmetric matrix; eigenvectors end up in
/// the columns of v.
void jacobi_eigen(std::vector<double> a, std::size_t d,
                  std::vector<double>& eigenvalues, std::vector<double>& v) {
  v.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  double norm = 0.0;
  for (double x : a) norm += x * x;
  norm = std::sqrt(norm);
  const double stop = std::max(1e-300, 1e-14 * norm);

  constexpr std::size_t kMaxSweeps = 100;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
    }
    if (std::sqrt(2.0 * off) < stop) break;

    for (std::size_t pi = 0; pi < d; ++pi) {
      for (std::size_t qi = pi + 1; qi < d; ++qi) {
        const double apq = a[pi * d + qi];
        if (apq == 0.0) continue;
        const double app = a[pi * d + pi];
        const double aqq = a[qi * d + qi];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + pi];
          const double akq = a[k * d + qi];
          a[k * d + pi] = c * akp - s * akq;
          a[k * d + qi] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[pi * d + k];
          const double aqk = a[qi * d + k];
          a[pi * d + k] = c * apk - s * aqk;
          a[qi * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + pi];
          const double vkq = v[k * d + qi];
          v[k * d + pi] = c * vkp - s * vkq;
          v[k * d + qi] = s * vkp + c * vkq;
        }
      }
    }
  }

  eigenvalues.resize(d);
  for (std::size_t i = 0; i < d; ++i) eigenvalues[i] = a[i * d + i];
}

}  // namespace

GeneralizedEigenResult generalized_symmetric_eigen(
    const std::vector<double>& s_b, const std::vector<double>& s_w,
    std::size_t d, std::size_t k) {
  if (s_b.size() != d * d || s_w.size() != d * d) {
    throw ShapeError("generalized eigen: matrix size mismatch");
  }
  k = std::min(k, d);

  std::vector<double> l;
  if (!cholesky(s_w, d, l)) {
    throw ConfigError("generalized eigen: S_w is not positive definite");
  }

  // M = L^-1 S_b L^-T, then a symmetric eigensolve.
  std::vector<double> z(d * d);  // L^-1 S_b
  std::vector<double> col(d);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < d; ++r) col[r] = s_b[r * d + c];
    forward_solve(l, d, col);
    for (std::size_t r = 0; r < d; ++r) z[r * d + c] = col[r];
  }
  std::vector<double> m(d * d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) col[c] = z[r * d + c];
    forward_solve(l, d, col);
    for (std::size_t c = 0; c < d; ++c) m[r * d + c] = col[c];
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = r + 1; c < d; ++c) {
      const double avg = 0.5 * (m[r * d + c] + m[c * d + r]);
      m[r * d + c] = avg;
      m[c * d + r] = avg;
    }
  }

  std::vector<double> eigvals, v;
  jacobi_eigen(std::move(m), d, eigvals, v);

  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return eigvals[a] > eigvals[b];
  });

  double frob_b = 0.0, frob_w = 0.0;
  for (std::size_t i = 0; i < d * d; ++i) {
    frob_b += s_b[i] * s_b[i];
    frob_w += s_w[i] * s_w[i];
  }
  frob_b = std::sqrt(frob_b);
  frob_w = std::sqrt(frob_w);

  GeneralizedEigenResult out;
  out.dim = d;
  out.k = k;
  out.eigenvalues.resize(k);
  out.directions.assign(d * k, 0.0);

  std::vector<double> w_dir(d);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const std::size_t src = idx[kk];
    const double lambda = eigvals[src];
    out.eigenvalues[kk] = lambda;

    for (std::size_t r = 0; r < d; ++r) w_dir[r] = v[r * d + src];
    backward_solve(l, d, w_dir);

    // Unit norm, sign fixed by the largest-magnitude component.
    double norm = 0.0;
    std::size_t peak = 0;
    for (std::size_t r = 0; r < d; ++r) {
      norm += w_dir[r] * w_dir[r];
      if (std::abs(w_dir[r]) > std::abs(w_dir[peak])) peak = r;
    }
    norm = std::sqrt(norm);
    const double sign = w_dir[peak] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) w_dir[r] *= sign / norm;
    for (std::size_t r = 0; r < d; ++r) out.directions[kk * d + r] = w_dir[r];

    // Normalized residual of S_b w = lambda S_w w.
    double resid = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        lhs += s_b[r * d + c] * w_dir[c];
        rhs += s_w[r * d + c] * w_dir[c];
      }
      const double e = lhs - lambda * rhs;
      resid += e * e;
    }
    resid = std::sqrt(resid) / (frob_b + std::abs(lambda) * frob_w + 1e-300);
    out.max_residual = std::max(out.max_residual, resid);
  }
  return out;
}

LdaProjection lda_fit(const std::vector<float>& features, std::size_t n,
                      std::size_t d, const std::vector<int>& labels) {
  if (d == 0) throw ConfigError("lda: empty features");
  if (features.size() != n * d || labels.size() != n) {
    throw ShapeError("lda: features/labels size mismatch");
  }

  std::vector<int> class_ids(labels);
  std::sort(class_ids.begin(), class_ids.end());
  class_ids.erase(std::unique(class_ids.begin(), class_ids.end()),
                  class_ids.end());
  const std::size_t n_classes = class_ids.size();
  if (n_classes < 2) throw ConfigError("lda: need at least 2 classes");
  if (n <= n_classes) throw ConfigError("lda: need more samples than classes");

  auto class_of = [&](int label) {
    return static_cast<std::size_t>(
        std::lower_bound(class_ids.begin(), class_ids.end(), label) -
        class_ids.begin());
  };

  // Class and global means.
  std::vector<double> mean_c(n_classes * d, 0.0);
  std::vector<std::size_t> count_c(n_classes, 0);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = class_of(labels[i]);
    ++count_c[c];
    for (std::size_t j = 0; j < d; ++j) {
      mean_c[c * d + j] += features[i * d + j];
      mean[j] += features[i * d + j];
    }
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      mean_c[c * d + j] /= static_cast<double>(count_c[c]);
    }
  }
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);

  // Scatter matrices.
  std::vector<double> s_w(d * d, 0.0);
  std::vector<double> s_b(d * d, 0.0);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = class_of(labels[i]);
    for (std::size_t j = 0; j < d; ++j) {
      diff[j] = features[i * d + j] - mean_c[c * d + j];
    }
    for (std::size_t r = 0; r < d; ++r) {
      const double dr = diff[r];
      for (std::size_t cc = r; cc < d; ++cc) s_w[r * d + cc] += dr * diff[cc];
    }
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) diff[j] = mean_c[c * d + j] - mean[j];
    const double w = static_cast<double>(count_c[c]);
    for (std::size_t r = 0; r < d; ++r) {
      const double dr = w * diff[r];
      for (std::size_t cc = r; cc < d; ++cc) s_b[r * d + cc] += dr * diff[cc];
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t cc = 0; cc < r; ++cc) {
      s_w[r * d + cc] = s_w[cc * d + r];
      s_b[r * d + cc] = s_b[cc * d + r];
    }
  }

  // Ridge S_w only when its Cholesky factorization fails.
  double trace_w = 0.0, trace_b = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    trace_w += s_w[j * d + j];
    trace_b += s_b[j * d + j];
  }
  std::vector<double> l;
  double eps = 0.0;
  std::vector<double> s_w_reg = s_w;
  if (!cholesky(s_w_reg, d, l)) {
    eps = 1e-6 * trace_w / static_cast<double>(d);
    if (eps <= 0.0) eps = 1e-6 * std::max(trace_b / static_cast<double>(d), 1e-6);
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      s_w_reg = s_w;
      for (std::size_t j = 0; j < d; ++j) s_w_reg[j * d + j] += eps;
      ok = cholesky(s_w_reg, d, l);
      if (!ok) eps *= 2.0;
    }
    if (!ok) throw ConfigError("lda: S_w cannot be regularized");
  }

  const GeneralizedEigenResult eig =
      generalized_symmetric_eigen(s_b, s_w_reg, d, 3);

  LdaProjection proj;
  proj.dim = d;
  proj.n_directions = eig.k;
  proj.epsilon = eps;
  proj.class_ids = class_ids;
  proj.class_means = mean_c;
  proj.eigenvalues = eig.eigenvalues;
  proj.directions = eig.directions;
  proj.max_residual = eig.max_residual;
  return proj;
}

std::vector<double> LdaProjection::project(const std::vector<float>& features,
                                           std::size_t n) const {
  if (features.size() != n * dim) {
    throw ShapeError("lda project: feature size mismatch");
  }
  std::vector<double> out(n * n_directions, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = features.data() + i * dim;
    for (std::size_t k = 0; k < n_directions; ++k) {
      const double* dir = directions.data() + k * dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        acc += static_cast<double>(row[j]) * dir[j];
      }
      out[i * n_directions + k] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Last-layer projection
// ---------------------------------------------------------------------------

namespace {

struct Fc1Collection {
  std::vector<float> features;  // n x 32
  std::vector<int> labels;
  std::vector<std::string> track_ids;
  std::vector<std::size_t> starts;
  std::size_t n = 0;
};

Fc1Collection collect_fc1(const model::GenreCnn& model,
                          const std::vector<data::TrackRecord>& records,
                          data::FeatureStore& store, double overlap) {
  struct PerTrack {
    std::vector<float> features;
    std::vector<std::size_t> starts;
  };
  std::vector<PerTrack> partial(records.size());

  parallel_for(records.size(), [&](std::size_t i) {
    const dsp::MelSpectrogram& spec = store.get(records[i].feature_path);
    const auto starts = data::segment_starts(spec.n_frames(), overlap);
    auto& dst = partial[i];
    dst.starts = starts;
    dst.features.reserve(starts.size() * model::kHiddenUnits);
    model::ForwardCache cache;
    std::mt19937_64 unused_rng(0);
    for (std::size_t s : starts) {
      const data::Segment seg = data::extract_segment(spec, s);
      model.forward(seg.values, /*training=*/false, unused_rng, cache);
      dst.features.insert(dst.features.end(), cache.fc1_act.data.begin(),
                          cache.fc1_act.data.end());
    }
  });

  Fc1Collection out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.features.insert(out.features.end(), partial[i].features.begin(),
                        partial[i].features.end());
    for (std::size_t s : partial[i].starts) {
      out.labels.push_back(records[i].genre);
      out.track_ids.push_back(records[i].id);
      out.starts.push_back(s);
    }
  }
  out.n = out.labels.size();
  return out;
}

}  // namespace

std::vector<ProjectedSegment> project_last_layer(
    const model::GenreCnn& model, const std::vector<data::TrackRecord>& records,
    data::FeatureStore& store, double overlap) {
  const auto train_records = records_in_split(records, data::Split::kTrain);
  const auto test_records = records_in_split(records, data::Split::kTest);
  if (train_records.empty() || test_records.empty()) {
    throw ConfigError("project_last_layer: need nonempty train and test splits");
  }

  // Directions come from the training split only.
  const Fc1Collection train_set =
      collect_fc1(model, train_records, store, overlap);
  const LdaProjection lda = lda_fit(train_set.features, train_set.n,
                                    model::kHiddenUnits, train_set.labels);

  const Fc1Collection test_set =
      collect_fc1(model, test_records, store, overlap);
  const std::vector<double> projected =
      lda.project(test_set.features, test_set.n);

  std::vector<ProjectedSegment> out(test_set.n);
  for (std::size_t i = 0; i < test_set.n; ++i) {
    out[i].track_id = test_set.track_ids[i];
    out[i].segment_start = test_set.starts[i];
    out[i].genre = test_set.labels[i];
    for (std::size_t k = 0; k < lda.n_directions && k < 3; ++k) {
      out[i].components[k] = projected[i * lda.n_directions + k];
    }
  }
  return out;
}

}  // namespace genrecnn::analysis
