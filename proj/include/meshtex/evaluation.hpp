// Multi-view Fréchet-distance scoring and the texture diversity metric.
//
// Images rendered from every ring view of every mesh are reduced to 64-d
// extractor features, pooled per side (real vs generated) into one
// Gaussian each, and compared with the Fréchet distance
//   |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
// The matrix square roots go through symmetric eigendecompositions with
// eigenvalues clamped at zero, and the covariance estimate is the unbiased
// one (divisor N-1); FID implementations disagree on both, so they are
// pinned here.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/feature_extractor.hpp"
#include "meshtex/renderer.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// rows: N x d feature matrix, N >= 2. Unbiased covariance.
inline GaussianStats fit_gaussian(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) {
    throw DataError("fit_gaussian needs at least 2 samples, got " +
                    std::to_string(n));
  }
  GaussianStats s;
  s.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return s;
}

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() ||
      (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + m.cwiseAbs().maxCoeff())) {
    throw DataError(std::string(what) + ": covariance is not symmetric");
  }
}

// Symmetric PSD square root with eigenvalues clamped at zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

inline double frechet_distance(const GaussianStats& a,
                               const GaussianStats& b) {
  if (a.mean.size() != b.mean.size()) {
    throw DataError("frechet_distance: dimension mismatch");
  }
  detail::require_symmetric(a.cov, "frechet_distance lhs");
  detail::require_symmetric(b.cov, "frechet_distance rhs");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd sqrt_a = detail::psd_sqrt(a.cov);
  Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  inner = ((inner + inner.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  const double tr_sqrt =
      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
}

// One row of extractor features per image. Images must be (size, size, 3)
// in [0,1]; evaluation pins the size so real and generated sides see the
// same distribution support.
template <typename S>
Eigen::MatrixXd extract_features(const FeatureExtractor<S>& fe,
                                 const std::vector<Tensor<S>>& hwc_images,
                                 int expected_size) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(hwc_images.size()),
                       kFeatureDim);
  for (std::size_t i = 0; i < hwc_images.size(); ++i) {
    const Tensor<S>& img = hwc_images[i];
    if (img.ndim() != 3 || img.dim(0) != expected_size ||
        img.dim(1) != expected_size || img.dim(2) != 3) {
      throw DataError("extract_features: image " + std::to_string(i) +
                      " has shape " + shape_str(img.shape) + ", expected (" +
                      std::to_string(expected_size) + "," +
                      std::to_string(expected_size) + ",3)");
    }
    Tape<S> tape(/*recording=*/false);
    const Tensor<S> feat = fe.features(tape, tape.hwc_to_chw(img));
    for (int c = 0; c < kFeatureDim; ++c) {
      rows(static_cast<Eigen::Index>(i), c) =
          static_cast<double>((*feat.data)[c]);
    }
  }
  return rows;
}

// One mesh's textures on both sides of the comparison.
template <typename S>
struct FidEntry {
  const Mesh* mesh = nullptr;
  Tensor<S> real_colors;
  Tensor<S> generated_colors;
};

namespace detail {

template <typename S>
Tensor<S> rendered_image(const Mesh& mesh, const Camera& cam,
                         const Tensor<S>& colors, const FaceShading& shading) {
  const RenderBuffers buf = rasterize(mesh, cam);
  Tape<S> tape(/*recording=*/false);
  return shade_flat(tape, buf, colors, shading);
}

}  // namespace detail

// Renders both sides from every ring view, pools all real features into
// one Gaussian and all generated features into another, and returns their
// Fréchet distance.
template <typename S>
double multiview_fid(const std::vector<FidEntry<S>>& entries,
                     const std::vector<Camera>& ring,
                     const FeatureExtractor<S>& fe,
                     const ShadingConfig& shading_cfg) {
  if (entries.empty() || ring.empty() || entries.size() * ring.size() < 2) {
    throw DataError("multiview_fid needs at least 2 images per side");
  }
  std::vector<Tensor<S>> real_images, gen_images;
  real_images.reserve(entries.size() * ring.size());
  gen_images.reserve(entries.size() * ring.size());
  for (const FidEntry<S>& e : entries) {
    const FaceShading shading = make_face_shading(*e.mesh, shading_cfg);
    for (const Camera& cam : ring) {
      const RenderBuffers buf = rasterize(*e.mesh, cam);
      Tape<S> tape(/*recording=*/false);
      real_images.push_back(shade_flat(tape, buf, e.real_colors, shading));
      gen_images.push_back(shade_flat(tape, buf, e.generated_colors, shading));
    }
  }
  const int size = ring.front().width;
  const GaussianStats real_stats =
      fit_gaussian(extract_features(fe, real_images, size));
  const GaussianStats gen_stats =
      fit_gaussian(extract_features(fe, gen_images, size));
  return frechet_distance(real_stats, gen_stats);
}

// Per-mesh breakdown: each mesh's ring views form their own pools.
template <typename S>
std::vector<double> per_mesh_fid(const std::vector<FidEntry<S>>& entries,
                                 const std::vector<Camera>& ring,
                                 const FeatureExtractor<S>& fe,
                                 const ShadingConfig& shading_cfg) {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const FidEntry<S>& e : entries) {
    out.push_back(multiview_fid<S>({e}, ring, fe, shading_cfg));
  }
  return out;
}

// Mean pairwise per-face color distance (mean absolute difference) across
// k textures drawn from the sampler. Zero iff the sampler ignores its
// noise input.
template <typename S>
double diversity_score(const std::function<Tensor<S>()>& sample_texture,
                       int k) {
  if (k < 2) {
    throw DataError("diversity_score needs k >= 2 draws");
  }
  std::vector<Tensor<S>> textures;
  textures.reserve(k);
  for (int i = 0; i < k; ++i) textures.push_back(sample_texture());
  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (!textures[i].same_shape(textures[j])) {
        throw ShapeError("diversity_score: texture shapes differ");
      }
      double mad = 0.0;
      for (std::size_t t = 0; t < textures[i].size(); ++t) {
        mad += std::abs(static_cast<double>((*textures[i].data)[t]) -
                        static_cast<double>((*textures[j].data)[t]));
      }
      total += mad / static_cast<double>(textures[i].size());
      ++pairs;
    }
  }
  return total / pairs;
}

}  // namespace meshtex
