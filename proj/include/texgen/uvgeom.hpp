#pragma once

#include <array>
#include <string>
#include <vector>

#include "texgen/common.hpp"
#include "texgen/mesh_io.hpp"

namespace texgen {

/// Texel convention used throughout: texel (row r, col c) of an R x R map has
/// its centre at uv = ((c + 0.5) / R, (r + 0.5) / R).
struct GeometryMaps {
    int resolution = 0;
    Grid position_map;          // R x R x 3, zero where mask == 0
    Grid mask_map;              // R x R x 1, values in {0, 1}
    std::vector<int> face_index;  // per texel, -1 where mask == 0
    int degenerate_triangles = 0;

    bool covered(size_t texel) const { return mask_map.data[texel] > 0.5; }
    size_t coverage() const;
};

GeometryMaps rasterize_uv(const Mesh& mesh, int resolution);

/// Multi-resolution geometry: level 0 is rasterize_uv at `resolution`; level k
/// halves the resolution. Coarse occupancy is "any child covered or centre
/// covered"; coarse positions come from re-rasterization at the coarse texel
/// centre when it lands in a triangle, otherwise from the mean of covered
/// children.
std::vector<GeometryMaps> geometry_pyramid(const Mesh& mesh, int resolution, int levels);

struct Camera {
    Vec3 eye{0, 0, 3};
    Vec3 target{0, 0, 0};
    Vec3 up{0, 1, 0};
    double vertical_fov = 40.0;  // degrees
    int image_size = 128;

    void validate() const;
    Vec3 forward() const { return normalized(target - eye); }
};

std::string camera_to_json(const Camera& cam);
Camera camera_from_json(const std::string& text);

/// Camera orbiting the origin. Azimuth 0 looks from +Z, 90 from +X.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double distance, double fov_deg = 40.0,
                    int image_size = 128);

/// Geometry-only rasterization of a view: interpolated uv, coverage, depth
/// (camera-space z) and face ids. Nearest surface wins; on exact depth ties
/// the face listed first wins.
struct ViewRaster {
    int size = 0;
    Grid uv_buffer;  // S x S x 2
    Grid valid;      // S x S x 1
    Grid depth;      // S x S x 1, 0 on background
    std::vector<int> face_id;
};

ViewRaster rasterize_view(const Mesh& mesh, const Camera& camera);

struct RenderResult {
    Grid image;      // S x S x 3, background = kBackground
    Grid uv_buffer;  // S x S x 2
    Grid valid;      // S x S x 1
};

inline constexpr double kBackground = 0.0;

RenderResult render_view(const Mesh& mesh, const Grid& texture, const Camera& camera);
/// Shades an existing raster with a texture (bilinear lookup).
Grid shade(const ViewRaster& raster, const Grid& texture);

/// Depth image normalized to [0, 1] against the mesh bounding sphere seen
/// from the camera; background = 1.
Grid render_depth(const Mesh& mesh, const Camera& camera);

/// The four bilinear taps (flat texel index, weight) for a lookup at uv in an
/// R x R map, clamp-to-edge. Weights sum to 1.
std::array<std::pair<int, double>, 4> bilinear_taps(double u, double v, int width, int height);
void bilinear_sample(const Grid& texture, double u, double v, double* out);

struct ProjectionResult {
    Grid partial_texture;  // R x R x 3, zero where not visible
    Grid visibility_mask;  // R x R x 1
    Grid view_cosine;      // R x R x 1, cos between surface normal and view direction (0 if unseen)
};

enum class DepthSource {
    /// Plane of the face that won the z-test at the pixel, evaluated along the
    /// texel's exact ray. Free of pixel-quantization error on slopes.
    face_plane,
    /// Depth stored at the pixel centre (classic shadow-map lookup).
    pixel_center,
};

struct ProjectionOptions {
    /// Relative to the mesh bounding radius.
    double depth_tolerance = 1e-3;
    DepthSource depth_source = DepthSource::face_plane;
};

ProjectionResult project_view_to_texture(const Mesh& mesh, const Grid& image, const Camera& camera,
                                         int resolution, const ProjectionOptions& opts = {});
ProjectionResult project_view_to_texture(const Mesh& mesh, const GeometryMaps& geometry, const Grid& image,
                                         const Camera& camera, const ProjectionOptions& opts = {});

inline constexpr double kGrazingCutoff = 0.2;

/// Default fusion weights: max(cos, 0) per texel from each result.
std::vector<Grid> grazing_weights(const std::vector<ProjectionResult>& results);

/// Weight-normalized blend of visible observations per texel. Observations
/// with weight below the grazing cutoff are discarded when a better one
/// exists for the same texel. A texel with a single surviving observation
/// copies it verbatim. Output is bitwise independent of input order.
ProjectionResult fuse_projections(const std::vector<ProjectionResult>& results, const std::vector<Grid>& weights);
ProjectionResult fuse_projections(const std::vector<ProjectionResult>& results);

/// Dilates a texture `texels` steps outward from the masked region (seam
/// padding); texels beyond the pad stay untouched.
void dilate_texture(Grid& texture, const Grid& mask, int texels);

}  // namespace texgen
