// Deterministic triangle rasterizer with exact gradients with respect to
// per-face colors. Geometry receives no gradient, so hard per-pixel
// coverage is differentiable where it needs to be: pixel color is linear
// in the face colors and the backward pass is an exact scatter-add.
//
// Determinism: faces are processed in ascending index with a strict
// depth-less-than test, so exact depth ties resolve to the lowest face
// index; all arithmetic is straight-line double evaluation (no incremental
// edge stepping), and identical mesh+camera inputs give bit-identical
// buffers.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "meshtex/camera.hpp"
#include "meshtex/common.hpp"
#include "meshtex/mesh.hpp"
#include "meshtex/tape.hpp"

namespace meshtex {

struct RenderBuffers {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> face_index;  // -1 = background
  std::vector<double> depth;             // NDC depth; +inf at background
  std::vector<double> image;             // H*W*3, filled by render()

  std::int32_t face_at(int y, int x) const {
    return face_index[static_cast<std::size_t>(y) * width + x];
  }
};

// Signed double area of (a, b, p) in y-down screen coordinates. Front
// faces (CCW model winding) project to negative area.
inline double edge_function(double ax, double ay, double bx, double by,
                            double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct ProjectedFace {
  double x[3];
  double y[3];
  double z[3];
  bool valid = false;  // all vertices strictly in front of the camera plane
};

// Shared projection step: both the rasterizer and any per-pixel oracle
// must see the exact same screen coordinates. Faces with any vertex at or
// behind the camera plane are skipped whole (no near-plane clipping);
// out-of-range depths are rejected per pixel instead.
inline std::vector<ProjectedFace> project_faces(const Mesh& mesh,
                                                const CameraTransform& ct) {
  std::vector<ProjectedFace> out(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) {
    ProjectedFace& pf = out[f];
    pf.valid = true;
    for (int c = 0; c < 3; ++c) {
      const ScreenVertex v = ct.project(mesh.vertices[mesh.faces[f][c]]);
      if (v.w <= 1e-9) {
        pf.valid = false;
      }
      pf.x[c] = v.x;
      pf.y[c] = v.y;
      pf.z[c] = v.depth;
    }
  }
  return out;
}

// Per-pixel nearest front-facing triangle via depth test at pixel centers.
inline RenderBuffers rasterize(const Mesh& mesh, const Camera& camera,
                               bool cull_backfaces = true) {
  const CameraTransform ct(camera);
  const int W = camera.width, H = camera.height;
  RenderBuffers buf;
  buf.width = W;
  buf.height = H;
  buf.face_index.assign(static_cast<std::size_t>(W) * H, -1);
  buf.depth.assign(static_cast<std::size_t>(W) * H,
                   std::numeric_limits<double>::infinity());

  const std::vector<ProjectedFace> faces = project_faces(mesh, ct);
  for (int f = 0; f < mesh.face_count(); ++f) {
    const ProjectedFace& pf = faces[f];
    if (!pf.valid) continue;
    const double area2 = edge_function(pf.x[0], pf.y[0], pf.x[1], pf.y[1],
                                       pf.x[2], pf.y[2]);
    if (area2 == 0.0) continue;
    if (cull_backfaces && area2 > 0.0) continue;

    const double min_x = std::min({pf.x[0], pf.x[1], pf.x[2]});
    const double max_x = std::max({pf.x[0], pf.x[1], pf.x[2]});
    const double min_y = std::min({pf.y[0], pf.y[1], pf.y[2]});
    const double max_y = std::max({pf.y[0], pf.y[1], pf.y[2]});
    const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(max_x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(max_y)));

    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double e0 =
            edge_function(pf.x[1], pf.y[1], pf.x[2], pf.y[2], px, py);
        const double e1 =
            edge_function(pf.x[2], pf.y[2], pf.x[0], pf.y[0], px, py);
        const double e2 =
            edge_function(pf.x[0], pf.y[0], pf.x[1], pf.y[1], px, py);
        const bool inside = area2 < 0.0
                                ? (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
                                : (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0);
        if (!inside) continue;
        const double depth =
            (e0 * pf.z[0] + e1 * pf.z[1] + e2 * pf.z[2]) / area2;
        if (depth < -1.0 || depth > 1.0) continue;
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        if (depth < buf.depth[p]) {
          buf.depth[p] = depth;
          buf.face_index[p] = f;
        }
      }
    }
  }
  return buf;
}

enum class ShadeMode { unlit, lambert };

struct ShadingConfig {
  ShadeMode mode = ShadeMode::unlit;
  Vec3 background{0, 0, 0};
  Vec3 light_dir = normalized({1, 1, 1});  // toward the light
  double ambient = 0.1;
};

// Per-face multiplicative shade factors resolved against a mesh. Unlit
// mode is the identity (factor 1, ambient 0), which keeps the color
// gradient an exact scatter-add; Lambertian scales each face's gradient by
// its fixed shade factor.
struct FaceShading {
  Vec3 background{0, 0, 0};
  std::vector<double> scale;  // per face
  double ambient = 0.0;
};

inline FaceShading make_face_shading(const Mesh& mesh,
                                     const ShadingConfig& cfg) {
  FaceShading s;
  s.background = cfg.background;
  s.scale.assign(mesh.face_count(), 1.0);
  if (cfg.mode == ShadeMode::lambert) {
    s.ambient = cfg.ambient;
    for (int f = 0; f < mesh.face_count(); ++f) {
      s.scale[f] = std::max(0.0, dot(mesh.face_normals[f], cfg.light_dir));
    }
  }
  return s;
}

// Exact adjoint of shade_flat: grad_colors[f][c] is the shade-scaled sum of
// grad_image over the pixels owned by face f.
template <typename S>
Tensor<S> render_backward(const Tensor<S>& grad_image,
                          const RenderBuffers& buf, const FaceShading& shading,
                          int num_faces) {
  Tensor<S> grad_colors = Tensor<S>::zeros({num_faces, 3});
  const std::size_t pixels = buf.face_index.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::int32_t f = buf.face_index[p];
    if (f < 0) continue;
    const S scale = static_cast<S>(shading.scale[f]);
    for (int c = 0; c < 3; ++c) {
      (*grad_colors.data)[static_cast<std::size_t>(f) * 3 + c] +=
          scale * (*grad_image.data)[p * 3 + c];
    }
  }
  return grad_colors;
}

// Looks up each covered pixel's face color (times the face shade factor,
// plus ambient); background pixels take the configured constant. Recorded
// on the tape with the exact scatter-add backward.
template <typename S>
Tensor<S> shade_flat(Tape<S>& tape, const RenderBuffers& buf,
                     const Tensor<S>& colors, const FaceShading& shading) {
  if (colors.ndim() != 2 || colors.cols() != 3) {
    throw ShapeError("shade_flat: colors must be (F,3), got " +
                     shape_str(colors.shape));
  }
  const int F = colors.rows();
  const int W = buf.width, H = buf.height;
  Tensor<S> image = Tensor<S>::zeros({H, W, 3});
  const S bg[3] = {static_cast<S>(shading.background.x),
                   static_cast<S>(shading.background.y),
                   static_cast<S>(shading.background.z)};
  const S ambient = static_cast<S>(shading.ambient);
  const std::size_t pixels = buf.face_index.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::int32_t f = buf.face_index[p];
    if (f < 0) {
      for (int c = 0; c < 3; ++c) (*image.data)[p * 3 + c] = bg[c];
      continue;
    }
    if (f >= F) {
      throw DataError("shade_flat: face index " + std::to_string(f) +
                      " out of range for " + std::to_string(F) + " colors");
    }
    const S scale = static_cast<S>(shading.scale[f]);
    for (int c = 0; c < 3; ++c) {
      (*image.data)[p * 3 + c] =
          scale * (*colors.data)[static_cast<std::size_t>(f) * 3 + c] +
          ambient;
    }
  }
  const int pcolors = colors.node;
  const RenderBuffers* pbuf = &buf;
  const FaceShading* pshading = &shading;
  return tape.custom("shade_flat", std::move(image), {pcolors},
                     [&tape, pcolors, pbuf, pshading, F](const Tensor<S>& g) {
                       tape.accumulate(
                           pcolors, render_backward(g, *pbuf, *pshading, F));
                     });
}

// Convenience non-training path: rasterize and shade in one call, storing
// the image into the returned buffers.
template <typename S>
RenderBuffers render(const Mesh& mesh, const Camera& camera,
                     const Tensor<S>& colors, const FaceShading& shading,
                     bool cull_backfaces = true) {
  RenderBuffers buf = rasterize(mesh, camera, cull_backfaces);
  Tape<S> tape(/*recording=*/false);
  const Tensor<S> image = shade_flat(tape, buf, colors, shading);
  buf.image.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    buf.image[i] = static_cast<double>((*image.data)[i]);
  }
  return buf;
}

}  // namespace meshtex
