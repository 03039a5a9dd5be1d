#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "texgen/common.hpp"

namespace texgen {

/// Triangle mesh with a per-corner UV atlas. Positions are normalized to
/// [-1,1]^3 by load_mesh; uv coordinates live in [0,1]^2.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec2> uv_coords;
    std::vector<std::array<int, 3>> face_uv_indices;

    bool has_atlas() const { return !uv_coords.empty() && face_uv_indices.size() == faces.size(); }

    /// Throws ValidationError when an index or uv coordinate is out of range.
    void validate() const;

    Vec3 bbox_min() const;
    Vec3 bbox_max() const;
    /// Radius of the bounding sphere around the bbox centre.
    double bounding_radius() const;
};

/// Recentres on the bounding-box centre and scales by the largest half-extent
/// so max |coordinate| == 1.
void normalize_mesh(Mesh& mesh);

/// OBJ subset: `v`, `vt`, `f a/at b/bt c/ct` (polygons are fan-triangulated).
/// Other record types are ignored.
Mesh load_mesh(const std::filesystem::path& path, bool normalize = true);
Mesh parse_mesh(const std::string& text, bool normalize = true);
void save_mesh(const std::filesystem::path& path, const Mesh& mesh);
std::string format_mesh(const Mesh& mesh);

// Procedural primitives with non-overlapping atlases, already normalized.
Mesh make_unit_cube();
Mesh make_uv_sphere(int rings = 12, int segments = 24);
Mesh make_torus(int rings = 24, int segments = 12);
Mesh make_capsule(int segments = 24);

enum class Split { train, eval };

struct DatasetSample {
    std::string id;
    std::filesystem::path mesh_path;
    std::filesystem::path texture_path;
    std::string caption;
    Split split = Split::train;
};

struct DatasetManifest {
    std::vector<DatasetSample> samples;

    std::vector<DatasetSample> by_split(Split s) const;
};

/// Manifest is JSON lines: {"id","mesh","texture","caption","split"}.
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Writes `count` procedural textured primitives plus manifest.jsonl into
/// out_dir. Bit-deterministic for a fixed (seed, count, resolution).
DatasetManifest make_toy_dataset(uint64_t seed, int count, const std::filesystem::path& out_dir,
                                 int resolution);

/// Procedural texture for a mesh: pattern colours on atlas texels, a
/// `dilation`-texel seam pad around islands, zero elsewhere.
Grid make_procedural_texture(const Mesh& mesh, const std::string& pattern, int resolution, Rng& rng,
                             int dilation = 2);

inline const std::vector<std::string>& toy_shapes() {
    static const std::vector<std::string> shapes{"cube", "sphere", "torus", "capsule"};
    return shapes;
}
inline const std::vector<std::string>& toy_patterns() {
    static const std::vector<std::string> patterns{"checker", "stripes", "noise", "decal"};
    return patterns;
}
Mesh make_toy_shape(const std::string& name);

}  // namespace texgen
